use crate::basis::layout::ControlLayout;
use crate::fem::DirichletData;
use crate::geometry::{Marker, Mesh};
use crate::linalg::DenseMatrix;
use crate::scalar::Real;
use crate::BasisError;

/// Not-a-knot cubic spline through `n ≥ 4` values at uniform knots on `[0, length]`.
///
/// Stored as the linear map from knot values to knot second derivatives, so evaluation
/// weights at any point can be read off without refitting.
#[derive(Clone, Debug)]
pub struct NotAKnotSpline<T> {
    knots: usize,
    length: T,
    /// `moments = moment_map · values`
    moment_map: DenseMatrix<T>,
}

impl<T: Real> NotAKnotSpline<T> {
    pub fn new(knots: usize, length: T) -> Result<Self, BasisError> {
        if knots < 4 {
            return Err(BasisError::TooFewControlPoints(knots));
        }
        let n = knots;
        let h = length / T::lit((n - 1) as f64);
        let mut a = DenseMatrix::zeros(n, n);
        let mut b = DenseMatrix::zeros(n, n);
        // third derivative continuous across the second and second-to-last knots
        a[(0, 0)] = T::one();
        a[(0, 1)] = -T::lit(2.0);
        a[(0, 2)] = T::one();
        a[(n - 1, n - 3)] = T::one();
        a[(n - 1, n - 2)] = -T::lit(2.0);
        a[(n - 1, n - 1)] = T::one();
        let c = T::lit(6.0) / (h * h);
        for i in 1..n - 1 {
            a[(i, i - 1)] = T::one();
            a[(i, i)] = T::lit(4.0);
            a[(i, i + 1)] = T::one();
            b[(i, i - 1)] = c;
            b[(i, i)] = -T::lit(2.0) * c;
            b[(i, i + 1)] = c;
        }
        let lu = crate::linalg::DenseLu::factor(&a)?;
        let mut moment_map = DenseMatrix::zeros(n, n);
        for j in 0..n {
            let col = lu.solve(&b.column(j));
            for i in 0..n {
                moment_map[(i, j)] = col[i];
            }
        }
        Ok(Self { knots, length, moment_map })
    }

    /// Weights `w` with `s(t) = Σ w_k y_k`; `t` is clamped to `[0, length]`.
    pub fn weights(&self, t: T) -> Vec<T> {
        let n = self.knots;
        let h = self.length / T::lit((n - 1) as f64);
        let t = t.max(T::zero()).min(self.length);
        let seg = (t / h).floor().to_usize().unwrap_or(0).min(n - 2);
        let b = (t - h * T::lit(seg as f64)) / h;
        let a = T::one() - b;
        let six = T::lit(6.0);
        let ca = (a * a * a - a) * h * h / six;
        let cb = (b * b * b - b) * h * h / six;
        let mut w = vec![T::zero(); n];
        w[seg] += a;
        w[seg + 1] += b;
        for k in 0..n {
            w[k] += ca * self.moment_map[(seg, k)] + cb * self.moment_map[(seg + 1, k)];
        }
        w
    }

    pub fn eval(&self, values: &[T], t: T) -> T {
        self.weights(t).iter().zip(values).map(|(&w, &y)| w * y).sum()
    }
}

/// Linear map from control-point displacements to the outer-boundary vertices of a mesh.
///
/// Rows follow [`Mesh::outer_boundary_vertices`]; the same scalar weights act on both
/// displacement components.
#[derive(Clone, Debug)]
pub struct SplineMap<T> {
    pub layout: ControlLayout,
    pub vertices: Vec<usize>,
    pub weights: DenseMatrix<T>,
}

impl<T: Real> SplineMap<T> {
    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    /// Interleaved displacements at the boundary vertices.
    pub fn apply(&self, u: &[T]) -> Result<Vec<T>, BasisError> {
        if u.len() != self.layout.dim() {
            return Err(BasisError::Length { got: u.len(), expected: self.layout.dim() });
        }
        let mut out = vec![T::zero(); 2 * self.vertices.len()];
        for r in 0..self.vertices.len() {
            let (mut x, mut y) = (T::zero(), T::zero());
            for (p, &w) in self.weights.row(r).iter().enumerate() {
                if w != T::zero() {
                    x += w * u[2 * p];
                    y += w * u[2 * p + 1];
                }
            }
            out[2 * r] = x;
            out[2 * r + 1] = y;
        }
        Ok(out)
    }

    /// `Mᵀ g` for a cotangent over the interleaved boundary dofs.
    pub fn apply_transpose(&self, g: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.layout.dim()];
        for r in 0..self.vertices.len() {
            for (p, &w) in self.weights.row(r).iter().enumerate() {
                out[2 * p] += w * g[2 * r];
                out[2 * p + 1] += w * g[2 * r + 1];
            }
        }
        out
    }

    /// Dof-level matrix `2 n_vertices × 2n` (interleaved rows and columns).
    pub fn dof_matrix(&self) -> DenseMatrix<T> {
        let mut m = DenseMatrix::zeros(2 * self.vertices.len(), self.layout.dim());
        for r in 0..self.vertices.len() {
            for (p, &w) in self.weights.row(r).iter().enumerate() {
                m[(2 * r, 2 * p)] = w;
                m[(2 * r + 1, 2 * p + 1)] = w;
            }
        }
        m
    }

    /// Dirichlet data on the outer square for control displacements `u`.
    pub fn dirichlet(&self, u: &[T]) -> Result<DirichletData<T>, BasisError> {
        let values = self.apply(u)?;
        let dofs = self.vertices.iter().flat_map(|&v| [2 * v, 2 * v + 1]).collect();
        Ok(DirichletData { dofs, values })
    }
}

/// Builds the spline map of a square component mesh with lower-left corner at the origin.
pub fn build_spline_map<T: Real>(mesh: &Mesh<T>, per_edge: usize) -> Result<SplineMap<T>, BasisError> {
    let layout = ControlLayout::new(per_edge)?;
    let side = mesh.width();
    let spline = NotAKnotSpline::new(per_edge, side)?;
    let vertices = mesh.outer_boundary_vertices();
    let tol = side * T::lit(1e-9);
    let mut weights = DenseMatrix::zeros(vertices.len(), layout.n_points());
    for (r, &v) in vertices.iter().enumerate() {
        let [x, y] = mesh.vertices[v];
        let marker = mesh.markers[v];
        let (on_face, t) = match marker {
            Marker::Bottom => (y.abs() <= tol, x),
            Marker::Right => ((x - side).abs() <= tol, y),
            Marker::Top => ((y - side).abs() <= tol, side - x),
            Marker::Left => (x.abs() <= tol, side - y),
            _ => unreachable!("outer vertex list holds outer markers only"),
        };
        if !on_face || t < -tol || t > side + tol {
            return Err(BasisError::OffBoundary(v));
        }
        let face = marker.face().unwrap();
        let points = layout.face_points(face);
        for (k, w) in spline.weights(t).into_iter().enumerate() {
            weights[(r, points[k])] += w;
        }
    }
    Ok(SplineMap { layout, vertices, weights })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_mesh, MeshResolution, PoreShape};

    #[test]
    fn spline_reproduces_cubics() {
        let s = NotAKnotSpline::new(6, 2.0).unwrap();
        let f = |t: f64| 0.3 - 1.2 * t + 0.7 * t * t - 0.25 * t * t * t;
        let ys: Vec<f64> = (0..6).map(|k| f(k as f64 * 0.4)).collect();
        for i in 0..=50 {
            let t = i as f64 * 0.04;
            assert!((s.eval(&ys, t) - f(t)).abs() < 1e-12);
        }
    }

    #[test]
    fn spline_interpolates_knots() {
        let s = NotAKnotSpline::new(10, 1.0).unwrap();
        for k in 0..10 {
            let w = s.weights(k as f64 / 9.0);
            for (j, wj) in w.iter().enumerate() {
                let e = if j == k { 1.0 } else { 0.0 };
                assert!((wj - e).abs() < 1e-12);
            }
        }
    }

    fn map() -> (Mesh<f64>, SplineMap<f64>) {
        let mesh = build_mesh(&[PoreShape::circular(); 4], [2, 2], MeshResolution::new(16, 6)).unwrap();
        let m = build_spline_map(&mesh, 10).unwrap();
        (mesh, m)
    }

    #[test]
    fn constants_and_ramps_are_reproduced() {
        let (mesh, m) = map();
        let c: Vec<f64> = (0..72).map(|i| if i % 2 == 0 { 0.3 } else { -0.7 }).collect();
        for (k, v) in m.apply(&c).unwrap().iter().enumerate() {
            assert!((v - c[k % 2]).abs() < 1e-12);
        }
        let lin = |p: [f64; 2]| [0.1 * p[0] - 0.05 * p[1], 0.02 * p[0] + 0.3 * p[1]];
        let u = crate::basis::BoundaryVector::from_fn(m.layout, 2.0, lin);
        let got = m.apply(&u.values).unwrap();
        for (r, &v) in m.vertices.iter().enumerate() {
            let e = lin(mesh.vertices[v]);
            assert!((got[2 * r] - e[0]).abs() < 1e-12 && (got[2 * r + 1] - e[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn transpose_pairs_with_apply() {
        let (_, m) = map();
        let u: Vec<f64> = (0..72).map(|i| (i as f64).cos()).collect();
        let g: Vec<f64> = (0..2 * m.n_vertices()).map(|i| (i as f64 * 0.3).sin()).collect();
        let lhs: f64 = m.apply(&u).unwrap().iter().zip(&g).map(|(a, b)| a * b).sum();
        let rhs: f64 = m.apply_transpose(&g).iter().zip(&u).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
        let mu = m.dof_matrix().matvec(&u);
        assert_eq!(mu, m.apply(&u).unwrap());
    }
}
