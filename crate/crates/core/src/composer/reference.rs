use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::basis::FlipAxis;
use crate::composer::assembly::{Assembly, LoadAxis};
use crate::fem::{solve_dirichlet, DirichletData, FemModel, FemSolution, Material, SolveSchedule};
use crate::geometry::{build_mesh, Mesh, MeshResolution, PoreShape};
use crate::ComposerError;

/// Load-step counts and relaxation factors tried for each baseline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScheduleGrid {
    pub load_steps: Vec<usize>,
    pub relaxation: Vec<f64>,
    /// Stop at the first converging pair, trying pairs in order of increasing
    /// `load_steps / relaxation`, instead of timing every pair.
    pub first_converged: bool,
    pub max_newton_iters: usize,
}

impl Default for ScheduleGrid {
    fn default() -> Self {
        Self {
            load_steps: vec![1, 2, 5, 10, 20],
            relaxation: vec![0.9, 0.7, 0.4, 0.1, 0.05],
            first_converged: false,
            max_newton_iters: 500,
        }
    }
}

impl ScheduleGrid {
    /// All pairs; cheapest expected first when `first_converged` is set.
    pub fn pairs(&self) -> Vec<(usize, f64)> {
        let mut p: Vec<(usize, f64)> = self.load_steps.iter().flat_map(|&s| self.relaxation.iter().map(move |&r| (s, r))).collect();
        if self.first_converged {
            p.sort_by(|a, b| (a.0 as f64 / a.1).total_cmp(&(b.0 as f64 / b.1)));
        }
        p
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleAttempt {
    pub load_steps: usize,
    pub relaxation: f64,
    pub converged: bool,
    pub newton_iterations: usize,
    pub wall_time_s: f64,
}

/// Full-domain FEA solution restricted to the skeleton control points.
#[derive(Clone, Debug)]
pub struct FeaReference {
    pub resolution: MeshResolution,
    pub mesh_dofs: usize,
    /// Skeleton vector in the assembly's dof order, gauge-fixed like the composed solution.
    pub control: Vec<f64>,
    pub energy: f64,
    /// Fastest converging `(load_steps, relaxation)`.
    pub winner: (usize, f64),
    pub wall_time_s: f64,
    pub attempts: Vec<ScheduleAttempt>,
    pub solution: FemSolution<f64>,
}

/// Mesh of the whole assembly: each component holds `pores_per_component²` cells.
pub fn assembly_mesh(asm: &Assembly, pores_per_component: usize, resolution: MeshResolution) -> Result<Mesh<f64>, ComposerError> {
    let k = pores_per_component;
    let n = asm.grid * k;
    let cell = asm.component_side / k as f64;
    let shapes: Vec<PoreShape<f64>> = (0..n * n)
        .map(|p| {
            let (px, py) = (p % n, p / n);
            let c = (py / k) * asm.grid + px / k;
            PoreShape::new(asm.xi[c][0], asm.xi[c][1], cell)
        })
        .collect();
    Ok(build_mesh(&shapes, [n, n], resolution)?)
}

/// Dirichlet data matching the assembly loading, plus a pin of the transverse component at
/// the centre of the low edge to remove the free translation.
pub fn assembly_dirichlet(asm: &Assembly, mesh: &Mesh<f64>) -> Result<DirichletData<f64>, ComposerError> {
    let length = asm.width();
    let tol = 1e-9 * length;
    let (axial, transverse) = match asm.bc.axis {
        LoadAxis::X => (0, 1),
        LoadAxis::Y => (1, 0),
    };
    let mut dofs = Vec::new();
    let mut values = Vec::new();
    for (v, p) in mesh.vertices.iter().enumerate() {
        let c = p[axial];
        if c.abs() <= tol || (c - length).abs() <= tol {
            dofs.push(2 * v + axial);
            values.push(asm.bc.edge_displacement(c > 0.5 * length, length));
        }
    }
    let mut centre = [0.0; 2];
    centre[transverse] = 0.5 * length;
    let pin = mesh
        .find_vertex(centre, tol)
        .ok_or_else(|| ComposerError::Assembly("no mesh vertex at the centre of the loaded edge".into()))?;
    dofs.push(2 * pin + transverse);
    values.push(0.0);
    Ok(DirichletData::new(dofs, values)?)
}

/// Interpolates a mesh displacement at the skeleton points and removes the mean transverse
/// displacement.
pub fn restrict_to_skeleton(asm: &Assembly, mesh: &Mesh<f64>, displacement: &[f64]) -> Result<Vec<f64>, ComposerError> {
    let mut out = Vec::with_capacity(asm.n_dofs());
    for p in asm.positions() {
        let (tri, w) = mesh.locate(p).ok_or_else(|| ComposerError::Assembly(format!("control point {p:?} outside the mesh")))?;
        for comp in 0..2 {
            out.push((0..3).map(|k| w[k] * displacement[2 * tri[k] + comp]).sum());
        }
    }
    remove_transverse_mean(asm, &mut out);
    Ok(out)
}

/// Shifts a skeleton vector so its transverse component has zero mean.
pub fn remove_transverse_mean(asm: &Assembly, u: &mut [f64]) {
    let comp = match asm.bc.axis {
        LoadAxis::X => 1,
        LoadAxis::Y => 0,
    };
    let n = u.len() / 2;
    let mean = (0..n).map(|p| u[2 * p + comp]).sum::<f64>() / n as f64;
    (0..n).for_each(|p| u[2 * p + comp] -= mean);
}

/// Solves the full domain at one mesh fidelity over the schedule grid.
pub fn fea_reference(
    asm: &Assembly,
    pores_per_component: usize,
    material: Material<f64>,
    resolution: MeshResolution,
    grid: &ScheduleGrid,
    residual_tol: f64,
) -> Result<FeaReference, ComposerError> {
    let mesh = assembly_mesh(asm, pores_per_component, resolution)?;
    let bc = assembly_dirichlet(asm, &mesh)?;
    let model = Arc::new(FemModel::new(mesh, material)?);
    let mut attempts = Vec::new();
    let mut best: Option<(f64, FemSolution<f64>, (usize, f64))> = None;
    for (steps, relax) in grid.pairs() {
        let schedule = SolveSchedule { residual_tol, max_newton_iters: grid.max_newton_iters, ..SolveSchedule::new(steps, relax) };
        let start = Instant::now();
        let sol = solve_dirichlet(&model, &bc, &schedule, None)?;
        let t = start.elapsed().as_secs_f64();
        log::info!(
            "fidelity {:?}: schedule ({steps}, {relax}) {} in {} Newton iterations, {t:.3} s",
            resolution,
            if sol.converged { "converged" } else { "failed" },
            sol.newton_iterations
        );
        attempts.push(ScheduleAttempt { load_steps: steps, relaxation: relax, converged: sol.converged, newton_iterations: sol.newton_iterations, wall_time_s: t });
        if sol.converged && best.as_ref().is_none_or(|b| t < b.0) {
            best = Some((t, sol, (steps, relax)));
            if grid.first_converged {
                break;
            }
        }
    }
    let Some((wall_time_s, solution, winner)) = best else {
        return Err(ComposerError::BaselineFailed { fidelity: resolution.min_mesh });
    };
    log::info!("fidelity {:?}: fastest converging schedule {:?} ({wall_time_s:.3} s)", resolution, winner);
    let control = restrict_to_skeleton(asm, solution.mesh(), &solution.displacement)?;
    Ok(FeaReference { resolution, mesh_dofs: model.n_dofs(), control, energy: solution.energy, winner, wall_time_s, attempts, solution })
}

/// Solution-quality metrics of a candidate against a reference.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    /// Squared Euclidean distance, minimized over the flip group.
    pub l2_error: f64,
    pub rel_energy_error: f64,
}

/// Compares skeleton solutions up to the symmetries of the pore grid.
///
/// A flip is only applied when it maps the pore grid onto itself. Both vectors are compared
/// after removing their mean transverse displacement.
pub fn compare(asm: &Assembly, candidate: &[f64], candidate_energy: f64, reference: &[f64], reference_energy: f64) -> Comparison {
    let mut c = candidate.to_vec();
    let mut r = reference.to_vec();
    remove_transverse_mean(asm, &mut c);
    remove_transverse_mean(asm, &mut r);
    let h = asm.is_flip_symmetric(FlipAxis::Horizontal);
    let v = asm.is_flip_symmetric(FlipAxis::Vertical);
    let mut group = vec![c.clone()];
    if h {
        group.push(asm.flip(&c, FlipAxis::Horizontal));
    }
    if v {
        group.push(asm.flip(&c, FlipAxis::Vertical));
    }
    if h && v {
        group.push(asm.flip(&asm.flip(&c, FlipAxis::Horizontal), FlipAxis::Vertical));
    }
    let l2_error = group
        .iter()
        .map(|g| g.iter().zip(&r).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
        .fold(f64::INFINITY, f64::min);
    let rel_energy_error = if reference_energy == 0.0 {
        if candidate_energy == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (candidate_energy - reference_energy).abs() / reference_energy.abs()
    };
    Comparison { l2_error, rel_energy_error }
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::composer::assembly::{build_assembly, BoundaryCondition};

    fn asm(strain: f64) -> Assembly {
        build_assembly(vec![[0.0; 2]], 1, 10, 2.0, BoundaryCondition::compression(strain)).unwrap()
    }

    #[test]
    fn compare_definitions() {
        let a = build_assembly(vec![[0.0; 2]; 4], 2, 10, 2.0, BoundaryCondition::compression(0.05)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut r: Vec<f64> = (0..a.n_dofs()).map(|_| rng.random_range(-1.0..1.0)).collect();
        remove_transverse_mean(&a, &mut r);
        assert_eq!(compare(&a, &r, 2.0, &r, 2.0), Comparison { l2_error: 0.0, rel_energy_error: 0.0 });
        let fv = a.flip(&r, FlipAxis::Vertical);
        assert!(compare(&a, &fv, 1.1, &r, 1.0).l2_error < 1e-24);
        assert!((compare(&a, &fv, 1.1, &r, 1.0).rel_energy_error - 0.1).abs() < 1e-12);
        let fh = a.flip(&r, FlipAxis::Horizontal);
        for pre in [&r, &fv, &fh] {
            assert!(compare(&a, pre, 1.0, &fh, 1.0).l2_error < 1e-24);
        }
        let mut b = a.clone();
        b.xi[0] = [0.1, 0.0];
        assert!(compare(&b, &fv, 1.0, &r, 1.0).l2_error > 1e-3);
    }

    #[test]
    fn zero_strain_restricts_to_zero() {
        let a = asm(0.0);
        let grid = ScheduleGrid { load_steps: vec![1], relaxation: vec![0.9], ..Default::default() };
        let r = fea_reference(&a, 2, Material::default(), MeshResolution::new(8, 5), &grid, 1e-8).unwrap();
        assert!(r.control.iter().all(|&v| v == 0.0));
        assert_eq!(r.energy, 0.0);
    }

    #[test]
    fn reference_honours_the_loading() {
        let a = asm(0.05);
        let grid = ScheduleGrid { first_converged: true, ..Default::default() };
        let r = fea_reference(&a, 2, Material::default(), MeshResolution::new(8, 5), &grid, 1e-8).unwrap();
        assert!(r.energy > 0.0);
        for (d, &f) in a.fixed.iter().enumerate() {
            if f {
                assert!((r.control[d] - a.prescribed[d]).abs() < 1e-12);
            }
        }
        // symmetric geometry and loading: the horizontal mirror image is the same solution
        assert!(compare(&a, &a.flip(&r.control, FlipAxis::Horizontal), r.energy, &r.control, r.energy).l2_error < 1e-16);
        let x_mirror: f64 = a.flip(&r.control, FlipAxis::Horizontal).iter().zip(&r.control).map(|(p, q)| (p - q).powi(2)).sum();
        assert!(x_mirror < 1e-12, "{x_mirror}");
    }
}
