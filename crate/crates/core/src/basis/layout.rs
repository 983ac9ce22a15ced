use serde::{Deserialize, Serialize};

use crate::linalg::DenseMatrix;
use crate::scalar::Real;
use crate::BasisError;

/// Mirror axis of a flip.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FlipAxis {
    /// Mirror `x ↦ side − x` (left and right swap).
    Horizontal,
    /// Mirror `y ↦ side − y` (top and bottom swap).
    Vertical,
}

/// Control points around a square component.
///
/// Points are ordered counterclockwise starting at the lower-left corner: the bottom face
/// left to right, the right face bottom to top, the top face right to left, the left face
/// top to bottom. Each face owns its starting corner, so point `f (N − 1) + k` is the
/// `k`-th point of face `f` and there are `n = 4 (N − 1)` points in total.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControlLayout {
    /// Control points per face, corners included.
    pub per_edge: usize,
}

impl ControlLayout {
    pub fn new(per_edge: usize) -> Result<Self, BasisError> {
        if per_edge < 4 {
            return Err(BasisError::TooFewControlPoints(per_edge));
        }
        Ok(Self { per_edge })
    }

    pub fn n_points(&self) -> usize {
        4 * (self.per_edge - 1)
    }

    /// Length of a [`BoundaryVector`].
    pub fn dim(&self) -> usize {
        2 * self.n_points()
    }

    /// Integer lattice position `(i, j)` with `0 ≤ i, j ≤ N − 1`.
    pub fn lattice(&self, p: usize) -> (usize, usize) {
        let m = self.per_edge - 1;
        let (f, k) = (p / m, p % m);
        match f {
            0 => (k, 0),
            1 => (m, k),
            2 => (m - k, m),
            3 => (0, m - k),
            _ => panic!("control point {p} out of range"),
        }
    }

    /// Inverse of [`lattice`](Self::lattice); `None` for interior lattice sites.
    pub fn point_at(&self, (i, j): (usize, usize)) -> Option<usize> {
        let m = self.per_edge - 1;
        if i > m || j > m {
            return None;
        }
        Some(if j == 0 && i < m {
            i
        } else if i == m && j < m {
            m + j
        } else if j == m && i > 0 {
            2 * m + (m - i)
        } else if i == 0 && j > 0 {
            3 * m + (m - j)
        } else {
            return None;
        })
    }

    /// Reference position of a control point on a component of side `side` (lower-left at origin).
    pub fn position<T: Real>(&self, p: usize, side: T) -> [T; 2] {
        let (i, j) = self.lattice(p);
        let m = T::lit((self.per_edge - 1) as f64);
        [side * T::lit(i as f64) / m, side * T::lit(j as f64) / m]
    }

    pub fn positions<T: Real>(&self, side: T) -> Vec<[T; 2]> {
        (0..self.n_points()).map(|p| self.position(p, side)).collect()
    }

    /// Control points of face `f` in along-face order (both corners included).
    pub fn face_points(&self, f: usize) -> Vec<usize> {
        let m = self.per_edge - 1;
        (0..=m).map(|k| (f * m + k) % self.n_points()).collect()
    }

    /// Point permutation of a flip: `perm[p]` is where point `p` lands.
    pub fn flip_permutation(&self, axis: FlipAxis) -> Vec<usize> {
        let m = self.per_edge - 1;
        (0..self.n_points())
            .map(|p| {
                let (i, j) = self.lattice(p);
                let image = match axis {
                    FlipAxis::Horizontal => (m - i, j),
                    FlipAxis::Vertical => (i, m - j),
                };
                self.point_at(image).expect("flip maps boundary to boundary")
            })
            .collect()
    }

    fn check_len<T>(&self, u: &[T]) -> Result<(), BasisError> {
        if u.len() != self.dim() {
            return Err(BasisError::Length { got: u.len(), expected: self.dim() });
        }
        Ok(())
    }
}

/// Spline control-point displacements, interleaved `[ux, uy]` per point in canonical order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryVector<T> {
    pub layout: ControlLayout,
    pub values: Vec<T>,
}

impl<T: Real> BoundaryVector<T> {
    pub fn new(layout: ControlLayout, values: Vec<T>) -> Result<Self, BasisError> {
        layout.check_len(&values)?;
        Ok(Self { layout, values })
    }

    pub fn zeros(layout: ControlLayout) -> Self {
        Self { layout, values: vec![T::zero(); layout.dim()] }
    }

    /// Samples a displacement field at the control points of a component of side `side`.
    pub fn from_fn(layout: ControlLayout, side: T, f: impl Fn([T; 2]) -> [T; 2]) -> Self {
        let values = layout.positions(side).into_iter().flat_map(f).collect();
        Self { layout, values }
    }

    pub fn point(&self, p: usize) -> [T; 2] {
        [self.values[2 * p], self.values[2 * p + 1]]
    }

    /// One line of whitespace-separated decimals.
    pub fn to_line(&self) -> String {
        self.values.iter().map(|v| format!("{}", v.to_f64_lossy())).collect::<Vec<_>>().join(" ")
    }

    pub fn from_line(layout: ControlLayout, line: &str) -> Result<Self, BasisError> {
        let values: Vec<T> = line.split_whitespace().filter_map(|s| s.parse::<f64>().ok()).map(T::lit).collect();
        Self::new(layout, values)
    }
}

/// Mirrors a boundary vector; the displacement component normal to the mirror changes sign.
pub fn flip<T: Real>(layout: &ControlLayout, u: &[T], axis: FlipAxis) -> Result<Vec<T>, BasisError> {
    layout.check_len(u)?;
    let perm = layout.flip_permutation(axis);
    let mut out = vec![T::zero(); u.len()];
    for (p, &q) in perm.iter().enumerate() {
        let (ux, uy) = (u[2 * p], u[2 * p + 1]);
        let (fx, fy) = match axis {
            FlipAxis::Horizontal => (-ux, uy),
            FlipAxis::Vertical => (ux, -uy),
        };
        out[2 * q] = fx;
        out[2 * q + 1] = fy;
    }
    Ok(out)
}

/// Linear operator `4 × 2n` of [`macro_strain`], rows `[x00, x01, x10, x11]`.
pub fn macro_strain_operator<T: Real>(layout: &ControlLayout, side: T) -> DenseMatrix<T> {
    let n_edge = layout.per_edge;
    let scale = T::one() / (T::lit(n_edge as f64) * side);
    let mut op = DenseMatrix::zeros(4, layout.dim());
    // face indices: 0 bottom, 1 right, 2 top, 3 left
    let pairs = [(1usize, 3usize), (2, 0)];
    for (row, &(plus, minus)) in pairs.iter().enumerate() {
        for (face, sign) in [(plus, T::one()), (minus, -T::one())] {
            for p in layout.face_points(face) {
                for c in 0..2 {
                    op[(2 * row + c, 2 * p + c)] += sign * scale;
                }
            }
        }
    }
    op
}

/// Macroscopic strain estimate from boundary control points.
///
/// Row 0 averages right-minus-left differences of `(u₁, u₂)`, row 1 top-minus-bottom,
/// each normalized by `N · side` so the entries are dimensionless.
pub fn macro_strain<T: Real>(layout: &ControlLayout, u: &[T], side: T) -> Result<[[T; 2]; 2], BasisError> {
    layout.check_len(u)?;
    let x = macro_strain_operator(layout, side).matvec(u);
    Ok([[x[0], x[1]], [x[2], x[3]]])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layout() -> ControlLayout {
        ControlLayout::new(10).unwrap()
    }

    #[test]
    fn dimensions() {
        assert_eq!(layout().n_points(), 36);
        assert_eq!(layout().dim(), 72);
        assert!(ControlLayout::new(3).is_err());
    }

    #[test]
    fn lattice_round_trip_and_corners() {
        let l = layout();
        for p in 0..l.n_points() {
            assert_eq!(l.point_at(l.lattice(p)), Some(p));
        }
        assert_eq!(l.lattice(0), (0, 0));
        assert_eq!(l.lattice(9), (9, 0));
        assert_eq!(l.lattice(18), (9, 9));
        assert_eq!(l.lattice(27), (0, 9));
        assert_eq!(l.point_at((4, 4)), None);
        assert_eq!(l.face_points(3).last(), Some(&0));
    }

    #[test]
    fn flips_are_involutions() {
        let l = layout();
        let u: Vec<f64> = (0..72).map(|i| (i as f64 * 0.37).sin()).collect();
        for axis in [FlipAxis::Horizontal, FlipAxis::Vertical] {
            assert_eq!(flip(&l, &flip(&l, &u, axis).unwrap(), axis).unwrap(), u);
        }
        // horizontal then vertical equals vertical then horizontal
        let hv = flip(&l, &flip(&l, &u, FlipAxis::Horizontal).unwrap(), FlipAxis::Vertical).unwrap();
        let vh = flip(&l, &flip(&l, &u, FlipAxis::Vertical).unwrap(), FlipAxis::Horizontal).unwrap();
        assert_eq!(hv, vh);
    }

    #[test]
    fn symmetric_compression_is_a_fixed_point() {
        let l = layout();
        let u = BoundaryVector::<f64>::from_fn(l, 2.0, |p| [0.1 * (p[0] - 1.0), -0.2 * (p[1] - 1.0)]);
        for axis in [FlipAxis::Horizontal, FlipAxis::Vertical] {
            let f = flip(&l, &u.values, axis).unwrap();
            for (a, b) in f.iter().zip(&u.values) {
                assert!((a - b).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn macro_strain_examples() {
        let l = layout();
        let side = 2.0f64;
        assert_eq!(macro_strain(&l, &vec![0.0; 72], side).unwrap(), [[0.0; 2]; 2]);
        let eps = 0.03;
        let u = BoundaryVector::from_fn(l, side, |p| [0.0, eps * (p[1] - 1.0)]);
        let x = macro_strain(&l, &u.values, side).unwrap();
        assert!(x[0][0].abs() < 1e-15 && x[0][1].abs() < 1e-15 && x[1][0].abs() < 1e-15);
        assert!((x[1][1] - eps).abs() < 1e-15);
        let t = BoundaryVector::from_fn(l, side, |_| [0.4, -0.1]);
        let x = macro_strain(&l, &t.values, side).unwrap();
        assert!(x.iter().flatten().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn text_round_trip() {
        let l = layout();
        let u = BoundaryVector::<f64>::new(l, (0..72).map(|i| i as f64 / 7.0).collect()).unwrap();
        assert_eq!(BoundaryVector::from_line(l, &u.to_line()).unwrap(), u);
        assert!(BoundaryVector::<f64>::from_line(l, "1 2 3").is_err());
    }
}
