use crate::linalg::sparse::BlockCsr;
use crate::scalar::Real;
use crate::LinalgError;

/// Split of global dofs into free (eliminated) and fixed (prescribed) sets.
///
/// Free dofs are numbered in a fill-reducing order derived from a vertex ordering.
#[derive(Clone, Debug)]
pub struct DofPartition {
    free: Vec<usize>,
    fixed: Vec<usize>,
    slot: Vec<Slot>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Slot {
    Free(usize),
    Fixed(usize),
}

impl DofPartition {
    /// `fixed` keeps the caller's order; free dofs follow `vertex_order`.
    pub fn new(n_dofs: usize, fixed: &[usize], vertex_order: &[usize]) -> Self {
        let mut slot = vec![Slot::Free(usize::MAX); n_dofs];
        for (k, &d) in fixed.iter().enumerate() {
            slot[d] = Slot::Fixed(k);
        }
        let mut free = Vec::with_capacity(n_dofs - fixed.len());
        for &v in vertex_order {
            for c in 0..2 {
                let d = 2 * v + c;
                if let Slot::Free(_) = slot[d] {
                    slot[d] = Slot::Free(free.len());
                    free.push(d);
                }
            }
        }
        assert_eq!(free.len() + fixed.len(), n_dofs, "vertex order must cover every vertex");
        Self { free, fixed: fixed.to_vec(), slot }
    }

    pub fn free(&self) -> &[usize] {
        &self.free
    }

    pub fn fixed(&self) -> &[usize] {
        &self.fixed
    }

    pub fn n_free(&self) -> usize {
        self.free.len()
    }

    #[inline]
    pub fn slot(&self, dof: usize) -> Slot {
        self.slot[dof]
    }

    pub fn gather_free<T: Copy>(&self, global: &[T]) -> Vec<T> {
        self.free.iter().map(|&d| global[d]).collect()
    }

    pub fn gather_fixed<T: Copy>(&self, global: &[T]) -> Vec<T> {
        self.fixed.iter().map(|&d| global[d]).collect()
    }
}

/// Variable-band (skyline) symmetric matrix over the free dofs of a partition.
#[derive(Clone, Debug)]
pub struct SkylineMatrix<T> {
    first: Vec<usize>,
    start: Vec<usize>,
    values: Vec<T>,
}

impl<T: Real> SkylineMatrix<T> {
    /// Extracts the free–free block of `a`.
    pub fn from_block_csr(a: &BlockCsr<T>, part: &DofPartition) -> Self {
        let n = part.n_free();
        let mut first: Vec<usize> = (0..n).collect();
        for (i, &p) in part.free().iter().enumerate() {
            for &w in a.neighbors(p / 2) {
                for c in 0..2 {
                    if let Slot::Free(j) = part.slot(2 * w + c) {
                        if j < first[i] {
                            first[i] = j;
                        }
                    }
                }
            }
        }
        let mut start = Vec::with_capacity(n + 1);
        start.push(0);
        for i in 0..n {
            start.push(start[i] + (i - first[i] + 1));
        }
        let mut values = vec![T::zero(); start[n]];
        for (i, &p) in part.free().iter().enumerate() {
            for (q, v) in a.row_entries(p) {
                if let Slot::Free(j) = part.slot(q) {
                    if j <= i {
                        values[start[i] + j - first[i]] = v;
                    }
                }
            }
        }
        Self { first, start, values }
    }

    pub fn dim(&self) -> usize {
        self.first.len()
    }

    pub fn stored_entries(&self) -> usize {
        self.values.len()
    }

    #[inline]
    fn diag_index(&self, i: usize) -> usize {
        self.start[i + 1] - 1
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.dim()).map(|i| self.values[self.diag_index(i)]).collect()
    }

    pub fn add_to_diagonal(&mut self, shift: T) {
        for i in 0..self.dim() {
            let k = self.diag_index(i);
            self.values[k] += shift;
        }
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        let n = self.dim();
        let mut y = vec![T::zero(); n];
        for i in 0..n {
            let row = &self.values[self.start[i]..self.start[i + 1]];
            let f = self.first[i];
            let mut s = T::zero();
            for (off, &a) in row.iter().enumerate() {
                let j = f + off;
                s += a * x[j];
                if j != i {
                    y[j] += a * x[i];
                }
            }
            y[i] += s;
        }
        y
    }

    /// In-place `L D Lᵀ` factorization without pivoting.
    pub fn factor(mut self) -> Result<SkylineLdlt<T>, LinalgError> {
        let n = self.dim();
        let scale = self.diagonal().iter().fold(T::zero(), |m, d| m.max(d.abs()));
        let tiny = scale.max(T::min_positive_value()) * T::epsilon() * T::lit(16.0);
        let mut d = vec![T::zero(); n];
        let mut negative = 0;
        for i in 0..n {
            let fi = self.first[i];
            let si = self.start[i];
            // u_ij = L_ij d_j for j < i, computed left to right
            for j in fi..i {
                let fj = self.first[j];
                let k0 = fi.max(fj);
                let s = if k0 < j {
                    let ri = &self.values[si + (k0 - fi)..si + (j - fi)];
                    let sj = self.start[j];
                    let rj = &self.values[sj + (k0 - fj)..sj + (j - fj)];
                    ri.iter().zip(rj).fold(T::zero(), |acc, (&a, &b)| acc + a * b)
                } else {
                    T::zero()
                };
                self.values[si + (j - fi)] -= s;
            }
            let mut di = self.values[si + (i - fi)];
            for j in fi..i {
                let u = self.values[si + (j - fi)];
                let l = u / d[j];
                di -= u * l;
                self.values[si + (j - fi)] = l;
            }
            if !di.is_finite() || di.abs() <= tiny {
                return Err(LinalgError::ZeroPivot { index: i });
            }
            if di < T::zero() {
                negative += 1;
            }
            d[i] = di;
            self.values[si + (i - fi)] = di;
        }
        Ok(SkylineLdlt { m: self, negative_pivots: negative })
    }
}

/// Factored skyline matrix.
#[derive(Clone, Debug)]
pub struct SkylineLdlt<T> {
    m: SkylineMatrix<T>,
    negative_pivots: usize,
}

impl<T: Real> SkylineLdlt<T> {
    pub fn dim(&self) -> usize {
        self.m.dim()
    }

    /// Number of negative eigenvalues (Sylvester inertia of `D`).
    pub fn negative_pivots(&self) -> usize {
        self.negative_pivots
    }

    pub fn solve_in_place(&self, x: &mut [T]) {
        let n = self.dim();
        assert_eq!(x.len(), n);
        let m = &self.m;
        for i in 0..n {
            let fi = m.first[i];
            let row = &m.values[m.start[i]..m.start[i + 1] - 1];
            let s = row.iter().zip(&x[fi..i]).fold(T::zero(), |acc, (&l, &y)| acc + l * y);
            x[i] -= s;
        }
        for i in 0..n {
            x[i] /= m.values[m.diag_index(i)];
        }
        for i in (0..n).rev() {
            let fi = m.first[i];
            let xi = x[i];
            let row = &m.values[m.start[i]..m.start[i + 1] - 1];
            for (xk, &l) in x[fi..i].iter_mut().zip(row) {
                *xk -= l * xi;
            }
        }
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_like(n_vertices: usize) -> BlockCsr<f64> {
        let tris: Vec<[usize; 3]> = (0..n_vertices - 2).map(|i| [i, i + 1, i + 2]).collect();
        let mut a = BlockCsr::from_cliques(n_vertices, &tris);
        for t in &tris {
            for &p in t {
                for &q in t {
                    for c in 0..2 {
                        let v = if p == q { 2.0 } else { -0.5 };
                        a.add(2 * p + c, 2 * q + c, v);
                    }
                }
            }
        }
        a.add(0, 1, 0.3);
        a.add(1, 0, 0.3);
        a
    }

    #[test]
    fn skyline_solve_matches_matvec() {
        let a = laplacian_like(7);
        let order: Vec<usize> = (0..7).rev().collect();
        let part = DofPartition::new(14, &[0, 5], &order);
        let sky = SkylineMatrix::from_block_csr(&a, &part);
        let x: Vec<f64> = (0..part.n_free()).map(|i| (i as f64 * 0.7).sin()).collect();
        let b = sky.matvec(&x);
        let fac = sky.factor().unwrap();
        assert_eq!(fac.negative_pivots(), 0);
        let got = fac.solve(&b);
        for (g, e) in got.iter().zip(&x) {
            assert!((g - e).abs() < 1e-12);
        }
        // full matvec restricted to free dofs agrees with skyline matvec
        let mut full_x = vec![0.0; 14];
        for (i, &d) in part.free().iter().enumerate() {
            full_x[d] = x[i];
        }
        let full_b = a.matvec(&full_x);
        for (i, &d) in part.free().iter().enumerate() {
            assert!((full_b[d] - b[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn indefinite_matrix_reports_inertia() {
        let mut a = BlockCsr::<f64>::from_cliques(1, &[]);
        a.add(0, 0, 1.0);
        a.add(1, 1, -3.0);
        let part = DofPartition::new(2, &[], &[0]);
        let fac = SkylineMatrix::from_block_csr(&a, &part).factor().unwrap();
        assert_eq!(fac.negative_pivots(), 1);
        assert_eq!(fac.solve(&[2.0, 3.0]), vec![2.0, -1.0]);
    }

    #[test]
    fn zero_pivot_is_an_error() {
        let mut a = BlockCsr::<f64>::from_cliques(1, &[]);
        a.add(0, 0, 1.0);
        let part = DofPartition::new(2, &[], &[0]);
        let err = SkylineMatrix::from_block_csr(&a, &part).factor().unwrap_err();
        assert_eq!(err, LinalgError::ZeroPivot { index: 1 });
    }
}
