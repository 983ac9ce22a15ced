use crate::linalg::DenseMatrix;
use crate::scalar::{Dual, Real};

/// Optimal rigid motion found by [`procrustes_align`]: `x ↦ R(θ) x + t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RigidTransform<T> {
    pub angle: T,
    pub translation: [T; 2],
    /// Cross-covariance vanished; the rotation fell back to the identity.
    pub degenerate: bool,
}

/// Rigid alignment of displaced control points onto their rest positions.
#[derive(Clone, Debug)]
pub struct Procrustes<T> {
    rest: Vec<[T; 2]>,
    centroid: [T; 2],
}

#[inline]
fn rot<T: Real>(theta: T, p: [T; 2]) -> [T; 2] {
    let (s, c) = theta.sin_cos();
    [c * p[0] - s * p[1], s * p[0] + c * p[1]]
}

#[inline]
fn rot_t<T: Real>(theta: T, p: [T; 2]) -> [T; 2] {
    let (s, c) = theta.sin_cos();
    [c * p[0] + s * p[1], -s * p[0] + c * p[1]]
}

impl<T: Real> Procrustes<T> {
    pub fn new(rest: Vec<[T; 2]>) -> Self {
        let n = T::lit(rest.len() as f64);
        let centroid = rest.iter().fold([T::zero(); 2], |c, p| [c[0] + p[0] / n, c[1] + p[1] / n]);
        Self { rest, centroid }
    }

    pub fn n_points(&self) -> usize {
        self.rest.len()
    }

    /// Centered rest and displaced points with the cross-covariance terms `(a, b)`.
    fn centered(&self, u: &[T]) -> (Vec<[T; 2]>, Vec<[T; 2]>, [T; 2], T, T) {
        assert_eq!(u.len(), 2 * self.rest.len());
        let n = T::lit(self.rest.len() as f64);
        let mut ybar = [T::zero(); 2];
        for (k, x) in self.rest.iter().enumerate() {
            ybar[0] += (x[0] + u[2 * k]) / n;
            ybar[1] += (x[1] + u[2 * k + 1]) / n;
        }
        let mut xh = Vec::with_capacity(self.rest.len());
        let mut yh = Vec::with_capacity(self.rest.len());
        let (mut a, mut b) = (T::zero(), T::zero());
        for (k, x) in self.rest.iter().enumerate() {
            let xc = [x[0] - self.centroid[0], x[1] - self.centroid[1]];
            let yc = [x[0] + u[2 * k] - ybar[0], x[1] + u[2 * k + 1] - ybar[1]];
            a += xc[0] * yc[0] + xc[1] * yc[1];
            b += yc[0] * xc[1] - yc[1] * xc[0];
            xh.push(xc);
            yh.push(yc);
        }
        (xh, yh, ybar, a, b)
    }

    fn angle(a: T, b: T, xh: &[[T; 2]], yh: &[[T; 2]]) -> (T, bool) {
        let norm = |v: &[[T; 2]]| v.iter().map(|p| p[0] * p[0] + p[1] * p[1]).sum::<T>().sqrt();
        let scale = T::lit(1e-12) * norm(xh) * norm(yh);
        if a.abs() + b.abs() <= scale || a.abs() + b.abs() == T::zero() {
            (T::zero(), true)
        } else {
            (b.atan2(a), false)
        }
    }

    /// `R(u)`: displacements after removing the best rigid motion, with that motion.
    pub fn align(&self, u: &[T]) -> (Vec<T>, RigidTransform<T>) {
        let (xh, yh, ybar, a, b) = self.centered(u);
        let (theta, degenerate) = Self::angle(a, b, &xh, &yh);
        let mut out = Vec::with_capacity(u.len());
        for (x, y) in xh.iter().zip(&yh) {
            let r = rot(theta, *y);
            out.push(r[0] - x[0]);
            out.push(r[1] - x[1]);
        }
        let ry = rot(theta, ybar);
        let translation = [self.centroid[0] - ry[0], self.centroid[1] - ry[1]];
        (out, RigidTransform { angle: theta, translation, degenerate })
    }

    /// Vector-Jacobian product `J_R(u)ᵀ g`.
    pub fn vjp(&self, u: &[T], g: &[T]) -> Vec<T> {
        let (xh, yh, _, a, b) = self.centered(u);
        let (theta, degenerate) = Self::angle(a, b, &xh, &yh);
        let n = self.rest.len();
        let nf = T::lit(n as f64);
        let gbar = (0..n).fold([T::zero(); 2], |c, k| [c[0] + g[2 * k] / nf, c[1] + g[2 * k + 1] / nf]);
        // Σ g_m · R'(θ) ŷ_m with R'(θ) ŷ = R(θ) (−ŷ₂, ŷ₁)
        let mut dtheta_coef = T::zero();
        for (k, y) in yh.iter().enumerate() {
            let r = rot(theta, [-y[1], y[0]]);
            dtheta_coef += g[2 * k] * r[0] + g[2 * k + 1] * r[1];
        }
        let denom = a * a + b * b;
        let mut out = Vec::with_capacity(2 * n);
        for (k, x) in xh.iter().enumerate() {
            let gk = [g[2 * k] - gbar[0], g[2 * k + 1] - gbar[1]];
            let direct = rot_t(theta, gk);
            let (d0, d1) = if degenerate {
                (T::zero(), T::zero())
            } else {
                // ∂a/∂Y_k = x̂_k, ∂b/∂Y_k = (x̂_k2, −x̂_k1)
                ((a * x[1] - b * x[0]) / denom, (-a * x[0] - b * x[1]) / denom)
            };
            out.push(direct[0] + dtheta_coef * d0);
            out.push(direct[1] + dtheta_coef * d1);
        }
        out
    }

    /// Dense Jacobian `∂R/∂u` (row `i` is `J_Rᵀ e_i`).
    pub fn jacobian(&self, u: &[T]) -> DenseMatrix<T> {
        let (xh, yh, _, a, b) = self.centered(u);
        let (theta, degenerate) = Self::angle(a, b, &xh, &yh);
        let n = self.rest.len();
        let inv_n = T::one() / T::lit(n as f64);
        let (s, c) = theta.sin_cos();
        let r = [[c, -s], [s, c]];
        let denom = a * a + b * b;
        // ∂θ/∂u_q and R'(θ) ŷ_p
        let dtheta: Vec<[T; 2]> = xh
            .iter()
            .map(|x| if degenerate { [T::zero(); 2] } else { [(a * x[1] - b * x[0]) / denom, (-a * x[0] - b * x[1]) / denom] })
            .collect();
        let w: Vec<[T; 2]> = yh.iter().map(|y| rot(theta, [-y[1], y[0]])).collect();
        let mut j = DenseMatrix::zeros(2 * n, 2 * n);
        for p in 0..n {
            for ri in 0..2 {
                let row = j.row_mut(2 * p + ri);
                for q in 0..n {
                    let delta = if p == q { T::one() - inv_n } else { -inv_n };
                    for si in 0..2 {
                        row[2 * q + si] = r[ri][si] * delta + w[p][ri] * dtheta[q][si];
                    }
                }
            }
        }
        j
    }

    /// Directional derivative of `J_R(u)ᵀ` along `v` as a matrix `K` with
    /// `K g = d/dε J_R(u + ε v)ᵀ g`.
    pub fn vjp_directional(&self, u: &[T], v: &[T]) -> DenseMatrix<T> {
        let d = u.len();
        let lifted: Procrustes<Dual<T>> =
            Procrustes { rest: self.rest.iter().map(|p| [p[0].into(), p[1].into()]).collect(), centroid: [self.centroid[0].into(), self.centroid[1].into()] };
        let ud: Vec<Dual<T>> = u.iter().zip(v).map(|(&x, &dx)| Dual::new(x, dx)).collect();
        let jd = lifted.jacobian(&ud);
        DenseMatrix::from_fn(d, d, |i, k| jd[(k, i)].eps)
    }
}

/// One-shot alignment against explicit rest positions.
pub fn procrustes_align<T: Real>(rest: &[[T; 2]], u: &[T]) -> (Vec<T>, RigidTransform<T>) {
    Procrustes::new(rest.to_vec()).align(u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::ControlLayout;

    fn setup() -> Procrustes<f64> {
        Procrustes::new(ControlLayout::new(10).unwrap().positions(2.0))
    }

    fn rigid(p: &Procrustes<f64>, theta: f64, t: [f64; 2]) -> Vec<f64> {
        let c = [1.0, 1.0];
        p.rest
            .iter()
            .flat_map(|x| {
                let r = rot(theta, [x[0] - c[0], x[1] - c[1]]);
                [r[0] + c[0] + t[0] - x[0], r[1] + c[1] + t[1] - x[1]]
            })
            .collect()
    }

    #[test]
    fn rigid_motions_are_annihilated() {
        let p = setup();
        let (a, tr) = p.align(&rigid(&p, 0.0, [0.3, -0.2]));
        assert!(a.iter().all(|v| v.abs() < 1e-12));
        assert!(!tr.degenerate);
        let (a, tr) = p.align(&rigid(&p, std::f64::consts::PI / 6.0, [0.1, 0.05]));
        assert!(a.iter().all(|v| v.abs() < 1e-10));
        assert!((tr.angle + std::f64::consts::PI / 6.0).abs() < 1e-12);
    }

    #[test]
    fn alignment_is_idempotent() {
        let p = setup();
        let u: Vec<f64> = (0..72).map(|i| 0.1 * (i as f64 * 0.7).sin()).collect();
        let (a, _) = p.align(&u);
        let (b, _) = p.align(&a);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn vjp_matches_finite_differences() {
        let p = setup();
        let u: Vec<f64> = (0..72).map(|i| 0.2 * (i as f64 * 1.3).cos()).collect();
        let g: Vec<f64> = (0..72).map(|i| (i as f64 * 0.4).sin()).collect();
        let an = p.vjp(&u, &g);
        let h = 1e-6;
        for i in [0, 5, 17, 40, 71] {
            let mut up = u.clone();
            let mut um = u.clone();
            up[i] += h;
            um[i] -= h;
            let fp: f64 = p.align(&up).0.iter().zip(&g).map(|(a, b)| a * b).sum();
            let fm: f64 = p.align(&um).0.iter().zip(&g).map(|(a, b)| a * b).sum();
            let fd = (fp - fm) / (2.0 * h);
            assert!((fd - an[i]).abs() < 1e-8, "{i}: {fd} vs {}", an[i]);
        }
    }

    #[test]
    fn directional_vjp_matches_finite_differences() {
        let p = setup();
        let u: Vec<f64> = (0..72).map(|i| 0.2 * (i as f64 * 1.3).cos()).collect();
        let v: Vec<f64> = (0..72).map(|i| (i as f64 * 2.1).sin()).collect();
        let g: Vec<f64> = (0..72).map(|i| (i as f64 * 0.4).sin()).collect();
        let k = p.vjp_directional(&u, &v);
        let kg = k.matvec(&g);
        let h = 1e-6;
        let shift = |s: f64| -> Vec<f64> { u.iter().zip(&v).map(|(a, b)| a + s * b).collect() };
        let fp = p.vjp(&shift(h), &g);
        let fm = p.vjp(&shift(-h), &g);
        for i in 0..72 {
            assert!(((fp[i] - fm[i]) / (2.0 * h) - kg[i]).abs() < 1e-7);
        }
    }

    #[test]
    fn coincident_points_fall_back_to_identity() {
        let p = setup();
        let u: Vec<f64> = p.rest.iter().flat_map(|x| [1.0 - x[0], 1.0 - x[1]]).collect();
        let (_, tr) = p.align(&u);
        assert!(tr.degenerate);
        assert_eq!(tr.angle, 0.0);
    }
}
