use std::sync::Arc;

use log::{debug, trace};
use serde::{Deserialize, Serialize};

use crate::fem::assemble::FemModel;
use crate::geometry::Mesh;
use crate::linalg::{BlockCsr, DofPartition, SkylineLdlt, SkylineMatrix};
use crate::scalar::{norm_inf, Real};
use crate::{FemError, LinalgError};

/// Load stepping and relaxed Newton settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolveSchedule {
    pub load_steps: usize,
    /// Relaxation factor λ of the update `u ← u − λ K⁻¹ r`.
    pub relaxation: f64,
    /// Newton iterations allowed per load step.
    pub max_newton_iters: usize,
    /// Absolute bound on the free-dof residual ∞-norm.
    pub residual_tol: f64,
    pub max_halvings: usize,
    /// Move the interior with the tangent response to each boundary increment.
    pub predictor: bool,
}

impl Default for SolveSchedule {
    fn default() -> Self {
        Self { load_steps: 10, relaxation: 0.1, max_newton_iters: 500, residual_tol: 1e-8, max_halvings: 20, predictor: true }
    }
}

impl SolveSchedule {
    pub fn new(load_steps: usize, relaxation: f64) -> Self {
        Self { load_steps, relaxation, ..Default::default() }
    }

    /// The default tolerance `1e-8 · μ · L0`.
    pub fn with_scaled_tol(mut self, mu: f64, cell_side: f64) -> Self {
        self.residual_tol = 1e-8 * mu * cell_side;
        self
    }

    pub fn check(&self) -> Result<(), FemError> {
        if self.load_steps == 0 || !(self.relaxation > 0.0 && self.relaxation <= 1.0) || !(self.residual_tol > 0.0) {
            return Err(FemError::Boundary(format!("invalid schedule {self:?}")));
        }
        Ok(())
    }
}

/// Prescribed values for a subset of global dofs.
#[derive(Clone, Debug, PartialEq)]
pub struct DirichletData<T> {
    pub dofs: Vec<usize>,
    pub values: Vec<T>,
}

impl<T: Real> DirichletData<T> {
    pub fn new(dofs: Vec<usize>, values: Vec<T>) -> Result<Self, FemError> {
        if dofs.len() != values.len() {
            return Err(FemError::Boundary(format!("{} dofs but {} values", dofs.len(), values.len())));
        }
        let mut sorted = dofs.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(FemError::Boundary("repeated constrained dof".into()));
        }
        Ok(Self { dofs, values })
    }

    /// Both components of every outer-boundary vertex, in increasing vertex order.
    pub fn outer_dofs(mesh: &Mesh<T>) -> Vec<usize> {
        mesh.outer_boundary_vertices().into_iter().flat_map(|v| [2 * v, 2 * v + 1]).collect()
    }

    /// Full outer-square data; `values` is interleaved per outer vertex.
    pub fn outer(mesh: &Mesh<T>, values: Vec<T>) -> Result<Self, FemError> {
        Self::new(Self::outer_dofs(mesh), values)
    }

    /// Outer-square data sampled from a displacement field over all vertices.
    pub fn outer_from_field(mesh: &Mesh<T>, field: &[T]) -> Result<Self, FemError> {
        if field.len() != mesh.n_dofs() {
            return Err(FemError::Boundary(format!("field has {} entries, mesh {}", field.len(), mesh.n_dofs())));
        }
        let dofs = Self::outer_dofs(mesh);
        let values = dofs.iter().map(|&d| field[d]).collect();
        Ok(Self { dofs, values })
    }

    /// Outer-square data from a function of the reference position.
    pub fn outer_from_fn(mesh: &Mesh<T>, f: impl Fn([T; 2]) -> [T; 2]) -> Self {
        let dofs = Self::outer_dofs(mesh);
        let values = dofs.iter().map(|&d| f(mesh.vertices[d / 2])[d % 2]).collect();
        Self { dofs, values }
    }

    pub fn len(&self) -> usize {
        self.dofs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dofs.is_empty()
    }
}

/// Converged (or last) iterate of a Dirichlet solve.
#[derive(Clone, Debug)]
pub struct FemSolution<T> {
    pub model: Arc<FemModel<T>>,
    pub dirichlet: DirichletData<T>,
    /// Interleaved `[ux, uy]` per vertex.
    pub displacement: Vec<T>,
    pub energy: T,
    pub converged: bool,
    pub newton_iterations: usize,
    pub load_steps_used: usize,
    pub step_halvings: usize,
    pub residual_norm: T,
}

impl<T: Real> FemSolution<T> {
    pub fn mesh(&self) -> &Mesh<T> {
        self.model.mesh()
    }
}

/// How to treat an indefinite or singular free–free block.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Factorization {
    /// Factor as is; on a zero pivot add `1e-8 · mean diagonal` (growing ×10) up to three times.
    Regularized,
    /// Shift the diagonal until every pivot is positive (Newton descent direction).
    PositiveDefinite,
}

/// Factors the free–free block; returns the factor and whether the diagonal was modified.
pub(crate) fn factor_free<T: Real>(
    k: &BlockCsr<T>,
    part: &DofPartition,
    mode: Factorization,
) -> Result<(SkylineLdlt<T>, bool), LinalgError> {
    let sky = SkylineMatrix::from_block_csr(k, part);
    let diag = sky.diagonal();
    let mean = if diag.is_empty() {
        T::one()
    } else {
        diag.iter().map(|d| d.abs()).sum::<T>() / T::lit(diag.len() as f64)
    };
    let first = sky.clone().factor();
    match mode {
        Factorization::Regularized => {
            if let Ok(f) = first {
                return Ok((f, false));
            }
            let mut eps = T::lit(1e-8) * mean;
            let mut last = first.err().unwrap();
            for _ in 0..3 {
                let mut shifted = sky.clone();
                shifted.add_to_diagonal(eps);
                match shifted.factor() {
                    Ok(f) => return Ok((f, true)),
                    Err(e) => last = e,
                }
                eps *= T::lit(10.0);
            }
            Err(last)
        }
        Factorization::PositiveDefinite => {
            if let Ok(f) = &first {
                if f.negative_pivots() == 0 {
                    return Ok((first.unwrap(), false));
                }
            }
            let mut shift = T::lit(1e-6) * mean;
            let mut last = first.err().unwrap_or(LinalgError::ZeroPivot { index: 0 });
            for _ in 0..16 {
                let mut shifted = sky.clone();
                shifted.add_to_diagonal(shift);
                match shifted.factor() {
                    Ok(f) if f.negative_pivots() == 0 => return Ok((f, true)),
                    Ok(_) => {}
                    Err(e) => last = e,
                }
                shift *= T::lit(4.0);
            }
            Err(last)
        }
    }
}

struct Newton<'a, T> {
    model: &'a FemModel<T>,
    part: DofPartition,
    schedule: &'a SolveSchedule,
    iterations: usize,
    halvings: usize,
}

enum StepOutcome<T> {
    Converged { energy: T, residual: T },
    Failed { energy: T, residual: T },
}

impl<T: Real> Newton<'_, T> {
    fn energy_slack(e: T) -> T {
        T::lit(1e-12) * (e.abs() + T::one())
    }

    /// Sets the constrained dofs to `b` and moves the interior by the tangent response.
    fn predict(&mut self, u: &mut [T], bc_dofs: &[usize], b: &[T]) -> bool {
        let delta: Vec<T> = bc_dofs.iter().zip(b).map(|(&d, &v)| v - u[d]).collect();
        if delta.iter().all(|d| *d == T::zero()) {
            return true;
        }
        let mut du_free = None;
        if self.schedule.predictor {
            if let Ok(asm) = self.model.assemble(u) {
                if let Ok((fac, _)) = factor_free(&asm.tangent, &self.part, Factorization::Regularized) {
                    let mut x = vec![T::zero(); u.len()];
                    for (&d, &v) in bc_dofs.iter().zip(&delta) {
                        x[d] = v;
                    }
                    let kx = asm.tangent.matvec(&x);
                    let mut rhs = self.part.gather_free(&kx);
                    rhs.iter_mut().for_each(|r| *r = -*r);
                    fac.solve_in_place(&mut rhs);
                    du_free = Some(rhs);
                }
            }
        }
        let base = u.to_vec();
        let mut scale = T::one();
        for attempt in 0..=self.schedule.max_halvings {
            let mut trial = base.clone();
            for (&d, &v) in bc_dofs.iter().zip(b) {
                trial[d] = v;
            }
            if let Some(du) = &du_free {
                let s = if attempt == self.schedule.max_halvings { T::zero() } else { scale };
                for (&d, &x) in self.part.free().iter().zip(du) {
                    trial[d] += s * x;
                }
            }
            if self.model.energy(&trial).is_ok() {
                u.copy_from_slice(&trial);
                return true;
            }
            if du_free.is_none() {
                break;
            }
            scale = scale * T::lit(0.5);
        }
        false
    }

    fn iterate(&mut self, u: &mut [T]) -> StepOutcome<T> {
        let lambda = T::lit(self.schedule.relaxation);
        let tol = T::lit(self.schedule.residual_tol);
        let mut energy = T::nan();
        let mut res_norm = T::infinity();
        for it in 0..=self.schedule.max_newton_iters {
            let asm = match self.model.assemble(u) {
                Ok(a) => a,
                Err(_) => return StepOutcome::Failed { energy, residual: res_norm },
            };
            energy = asm.energy;
            let r = self.part.gather_free(&asm.residual);
            res_norm = norm_inf(&r);
            trace!("newton it={it} energy={energy} residual={res_norm}");
            if res_norm <= tol {
                return StepOutcome::Converged { energy, residual: res_norm };
            }
            if it == self.schedule.max_newton_iters {
                break;
            }
            let fac = match factor_free(&asm.tangent, &self.part, Factorization::PositiveDefinite) {
                Ok((f, _)) => f,
                Err(e) => {
                    debug!("tangent factorization failed: {e}");
                    return StepOutcome::Failed { energy, residual: res_norm };
                }
            };
            let dir = fac.solve(&r);
            self.iterations += 1;
            let mut alpha = lambda;
            let mut accepted = false;
            let mut trial = u.to_vec();
            for _ in 0..=self.schedule.max_halvings {
                trial.copy_from_slice(u);
                for (&d, &x) in self.part.free().iter().zip(&dir) {
                    trial[d] -= alpha * x;
                }
                match self.model.energy(&trial) {
                    Ok(e) if e <= energy + Self::energy_slack(energy) => {
                        accepted = true;
                        break;
                    }
                    _ => {
                        self.halvings += 1;
                        alpha = alpha * T::lit(0.5);
                    }
                }
            }
            if !accepted {
                debug!("line search exhausted at residual {res_norm}");
                return StepOutcome::Failed { energy, residual: res_norm };
            }
            u.copy_from_slice(&trial);
        }
        StepOutcome::Failed { energy, residual: res_norm }
    }
}

/// Minimizes the energy with `u = bc` on the constrained dofs.
///
/// Boundary data are interpolated linearly from the initial guess (or rest) to the target
/// over `load_steps`; each step runs relaxed Newton with step halving on inversion or
/// energy increase. A failed step returns the last iterate with `converged = false`.
pub fn solve_dirichlet<T: Real>(
    model: &Arc<FemModel<T>>,
    bc: &DirichletData<T>,
    schedule: &SolveSchedule,
    initial_guess: Option<&[T]>,
) -> Result<FemSolution<T>, FemError> {
    schedule.check()?;
    let n = model.n_dofs();
    if let Some(&d) = bc.dofs.iter().find(|&&d| d >= n) {
        return Err(FemError::Boundary(format!("dof {d} outside mesh with {n} dofs")));
    }
    if bc.dofs.len() != bc.values.len() {
        return Err(FemError::Boundary("dof/value length mismatch".into()));
    }
    let mut u = match initial_guess {
        Some(g) if g.len() == n => g.to_vec(),
        Some(g) => return Err(FemError::Boundary(format!("initial guess has {} entries, expected {n}", g.len()))),
        None => vec![T::zero(); n],
    };
    let mut newton = Newton {
        model,
        part: DofPartition::new(n, &bc.dofs, model.vertex_order()),
        schedule,
        iterations: 0,
        halvings: 0,
    };
    let start: Vec<T> = bc.dofs.iter().map(|&d| u[d]).collect();
    if model.energy(&u).is_err() {
        return Err(FemError::Boundary("initial guess inverts an element".into()));
    }
    let mut energy = T::nan();
    let mut residual = T::infinity();
    let mut converged = true;
    let mut steps_used = 0;
    for step in 1..=schedule.load_steps {
        steps_used = step;
        let t = T::lit(step as f64 / schedule.load_steps as f64);
        let b: Vec<T> = start.iter().zip(&bc.values).map(|(&s, &v)| s + t * (v - s)).collect();
        if !newton.predict(&mut u, &bc.dofs, &b) {
            debug!("load step {step}: boundary increment inverts elements");
            converged = false;
            break;
        }
        match newton.iterate(&mut u) {
            StepOutcome::Converged { energy: e, residual: r } => {
                energy = e;
                residual = r;
                debug!("load step {step}/{}: energy={e} residual={r} its={}", schedule.load_steps, newton.iterations);
            }
            StepOutcome::Failed { energy: e, residual: r } => {
                energy = e;
                residual = r;
                converged = false;
                debug!("load step {step} failed: residual={r}");
                break;
            }
        }
    }
    if !energy.is_finite() {
        energy = model.energy(&u).unwrap_or(T::nan());
    }
    Ok(FemSolution {
        model: model.clone(),
        dirichlet: bc.clone(),
        displacement: u,
        energy,
        converged,
        newton_iterations: newton.iterations,
        load_steps_used: steps_used,
        step_halvings: newton.halvings,
        residual_norm: residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::Material;
    use crate::geometry::{build_mesh, MeshResolution, PoreShape};

    fn model() -> Arc<FemModel<f64>> {
        let mesh = build_mesh(&[PoreShape::circular()], [1, 1], MeshResolution::new(16, 4)).unwrap();
        Arc::new(FemModel::new(mesh, Material::default()).unwrap())
    }

    #[test]
    fn zero_data_gives_rest() {
        let m = model();
        let bc = DirichletData::outer_from_fn(m.mesh(), |_| [0.0, 0.0]);
        let sol = solve_dirichlet(&m, &bc, &SolveSchedule::default(), None).unwrap();
        assert!(sol.converged);
        assert_eq!(sol.energy, 0.0);
        assert!(sol.newton_iterations <= 1);
        assert!(sol.displacement.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn small_strain_matches_rest_quadratic_form() {
        let m = model();
        let eps = 1e-3;
        let bc = DirichletData::outer_from_fn(m.mesh(), |p| [0.0, -eps * (p[1] - 0.5)]);
        let sol = solve_dirichlet(&m, &bc, &SolveSchedule::new(1, 1.0), None).unwrap();
        assert!(sol.converged);
        let k = m.assemble(&vec![0.0; m.n_dofs()]).unwrap().tangent;
        let ku = k.matvec(&sol.displacement);
        let quad = 0.5 * sol.displacement.iter().zip(&ku).map(|(a, b)| a * b).sum::<f64>();
        assert!((sol.energy - quad).abs() < 1e-2 * quad);
    }

    #[test]
    fn bad_inputs_are_rejected() {
        let m = model();
        assert!(DirichletData::new(vec![0, 0], vec![0.0, 1.0]).is_err());
        let bc = DirichletData::new(vec![10_000], vec![0.0]).unwrap();
        assert!(solve_dirichlet(&m, &bc, &SolveSchedule::default(), None).is_err());
        let bc = DirichletData::new(vec![0], vec![0.0]).unwrap();
        assert!(solve_dirichlet(&m, &bc, &SolveSchedule::new(0, 0.5), None).is_err());
    }
}
