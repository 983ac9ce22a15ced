use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::basis::{build_spline_map, SplineMap};
use crate::fem::{collapsed_gradient, reduced_hessian_projected, solve_dirichlet, FemModel, FemSolution, Material, SolveSchedule};
use crate::geometry::{build_mesh, MeshResolution, PoreShape};
use crate::linalg::DenseMatrix;
use crate::PipelineError;

/// Component geometry and solver settings used to label boundary states.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LabelerConfig {
    pub pores_per_side: usize,
    pub resolution: MeshResolution,
    pub material: Material<f64>,
    pub per_edge: usize,
    /// Load steps of the fallback solve after a failed direct (warm-started) solve.
    pub fallback_steps: usize,
    pub fallback_relaxation: f64,
    pub residual_tol: f64,
}

impl Default for LabelerConfig {
    fn default() -> Self {
        Self {
            pores_per_side: 2,
            resolution: MeshResolution::new(16, 6),
            material: Material::default(),
            per_edge: 10,
            fallback_steps: 5,
            fallback_relaxation: 0.5,
            residual_tol: 1e-8,
        }
    }
}

impl LabelerConfig {
    pub fn side(&self) -> f64 {
        self.pores_per_side as f64
    }
}

/// FEA label of one boundary state in control-point coordinates.
#[derive(Clone, Debug)]
pub struct Label {
    pub energy: f64,
    pub grad: Vec<f64>,
    pub hessian: DenseMatrix<f64>,
    pub regularized: bool,
    pub solution: FemSolution<f64>,
}

/// Mesh, spline map and solver for one pore shape.
#[derive(Clone, Debug)]
pub struct Labeler {
    pub shape: PoreShape<f64>,
    pub config: LabelerConfig,
    pub model: Arc<FemModel<f64>>,
    pub spline: SplineMap<f64>,
    basis: DenseMatrix<f64>,
}

impl Labeler {
    pub fn new(shape: PoreShape<f64>, config: LabelerConfig) -> Result<Self, PipelineError> {
        let k = config.pores_per_side;
        let shapes = vec![shape; k * k];
        let mesh = build_mesh(&shapes, [k, k], config.resolution)?;
        let spline = build_spline_map(&mesh, config.per_edge)?;
        let basis = spline.dof_matrix();
        let model = Arc::new(FemModel::new(mesh, config.material)?);
        Ok(Self { shape, config, model, spline, basis })
    }

    pub fn xi(&self) -> [f64; 2] {
        self.shape.xi()
    }

    fn schedule(&self, steps: usize, relaxation: f64) -> SolveSchedule {
        SolveSchedule { residual_tol: self.config.residual_tol, ..SolveSchedule::new(steps, relaxation) }
    }

    /// Minimizes the interior for control displacements `u`.
    ///
    /// Tries one full Newton step sequence from `warm` (or rest), then a load-stepped solve
    /// from rest. Returns `Ok(None)` when both fail.
    pub fn solve(&self, u: &[f64], warm: Option<&[f64]>) -> Result<Option<FemSolution<f64>>, PipelineError> {
        let bc = self.spline.dirichlet(u)?;
        let direct = solve_dirichlet(&self.model, &bc, &self.schedule(1, 1.0), warm)?;
        if direct.converged {
            return Ok(Some(direct));
        }
        log::debug!("direct solve failed after {} iterations, falling back", direct.newton_iterations);
        let fallback = solve_dirichlet(&self.model, &bc, &self.schedule(self.config.fallback_steps, self.config.fallback_relaxation), None)?;
        Ok(fallback.converged.then_some(fallback))
    }

    /// Energy, gradient and Hessian of the collapsed energy from a converged solve.
    pub fn label_solution(&self, solution: FemSolution<f64>) -> Result<Label, PipelineError> {
        let gb = collapsed_gradient(&solution)?;
        let grad = self.spline.apply_transpose(&gb);
        let rh = reduced_hessian_projected(&solution, &self.basis)?;
        let mut hessian = rh.matrix;
        hessian.symmetrize();
        Ok(Label { energy: solution.energy.max(0.0), grad, hessian, regularized: rh.regularized, solution })
    }

    /// Solve and label; `Ok(None)` if the solve fails.
    pub fn label(&self, u: &[f64], warm: Option<&[f64]>) -> Result<Option<Label>, PipelineError> {
        match self.solve(u, warm)? {
            Some(sol) => Ok(Some(self.label_solution(sol)?)),
            None => Ok(None),
        }
    }

    /// Collapsed energy and its control-point gradient only.
    pub fn energy_grad(&self, u: &[f64], warm: Option<&[f64]>) -> Result<Option<(f64, Vec<f64>, FemSolution<f64>)>, PipelineError> {
        match self.solve(u, warm)? {
            Some(sol) => {
                let g = self.spline.apply_transpose(&collapsed_gradient(&sol)?);
                Ok(Some((sol.energy, g, sol)))
            }
            None => Ok(None),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::BoundaryVector;

    fn labeler() -> Labeler {
        let cfg = LabelerConfig { resolution: MeshResolution::new(8, 5), ..Default::default() };
        Labeler::new(PoreShape::circular(), cfg).unwrap()
    }

    #[test]
    fn rest_state_has_zero_label() {
        let l = labeler();
        let lab = l.label(&[0.0; 72], None).unwrap().unwrap();
        assert_eq!(lab.energy, 0.0);
        assert!(lab.grad.iter().all(|g| g.abs() < 1e-14));
        assert!(lab.hessian.asymmetry() < 1e-12);
    }

    #[test]
    fn gradient_and_hessian_match_finite_differences() {
        let l = labeler();
        let u = BoundaryVector::from_fn(l.spline.layout, 2.0, |p: [f64; 2]| {
            [0.02 * (p[1] - 1.0) + 0.01 * (3.0 * p[0]).sin(), -0.03 * (p[1] - 1.0) + 0.01 * (2.0 * p[1]).cos()]
        })
        .values;
        let lab = l.label(&u, None).unwrap().unwrap();
        let h = 1e-5;
        let v: Vec<f64> = (0..72).map(|i| ((i * 7 % 11) as f64 - 5.0) / 5.0).collect();
        let shift = |s: f64| -> Vec<f64> { u.iter().zip(&v).map(|(a, b)| a + s * b).collect() };
        let ep = l.energy_grad(&shift(h), None).unwrap().unwrap();
        let em = l.energy_grad(&shift(-h), None).unwrap().unwrap();
        let fd = (ep.0 - em.0) / (2.0 * h);
        let an: f64 = lab.grad.iter().zip(&v).map(|(a, b)| a * b).sum();
        assert!((fd - an).abs() < 1e-6 * an.abs(), "{fd} vs {an}");
        let hv = lab.hessian.matvec(&v);
        let gmax = hv.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        for i in 0..72 {
            let fdi = (ep.1[i] - em.1[i]) / (2.0 * h);
            assert!((fdi - hv[i]).abs() < 1e-4 * gmax, "{i}: {fdi} vs {}", hv[i]);
        }
    }
}
