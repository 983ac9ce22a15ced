use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::composer::{build_assembly, solve_composed, BoundaryCondition, LbfgsConfig, LoadAxis, LoadMode};
use crate::geometry::{PoreSampler, PoreShape};
use crate::pipeline::labeler::{Labeler, LabelerConfig};
use crate::pipeline::record::{RecordMeta, SampleRecord, Source};
use crate::surrogate::SurrogateParams;
use crate::PipelineError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DaggerConfig {
    /// Iterates sampled from each solve trajectory.
    pub iterates: usize,
    /// Components per side of the composed problem.
    pub grid: usize,
    pub max_strain: f64,
    pub compression_probability: f64,
    pub circular_only: bool,
    pub sampler: PoreSampler,
    pub labeler: LabelerConfig,
    pub lbfgs: LbfgsConfig,
}

impl Default for DaggerConfig {
    fn default() -> Self {
        Self {
            iterates: 4,
            grid: 2,
            max_strain: 0.3,
            compression_probability: 0.8,
            circular_only: false,
            sampler: PoreSampler::default(),
            labeler: LabelerConfig::default(),
            lbfgs: LbfgsConfig { max_iters: 2000, ..Default::default() },
        }
    }
}

/// A composed problem to deploy the surrogate on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub grid: usize,
    /// One pore shape per component, row-major from the bottom row.
    pub xi: Vec<[f64; 2]>,
    pub bc: BoundaryCondition,
}

/// Strain magnitude `U(0, max_strain)`, compression with the configured probability and one
/// pore shape shared by all components.
pub fn sample_scenario<R: Rng + ?Sized>(cfg: &DaggerConfig, rng: &mut R) -> Result<Scenario, PipelineError> {
    let strain = rng.random_range(0.0..cfg.max_strain);
    let mode = if rng.random_bool(cfg.compression_probability) { LoadMode::Compression } else { LoadMode::Tension };
    let shape: PoreShape<f64> = if cfg.circular_only { PoreShape::circular() } else { cfg.sampler.sample(rng)? };
    Ok(Scenario { grid: cfg.grid, xi: vec![shape.xi(); cfg.grid * cfg.grid], bc: BoundaryCondition { strain, axis: LoadAxis::Y, mode } })
}

#[derive(Clone, Debug, Default)]
pub struct DaggerOutput {
    pub records: Vec<SampleRecord>,
    /// Component samples skipped because labeling failed.
    pub failures: usize,
    pub solve_iterations: usize,
}

/// Solves `scenario` with the surrogate, samples `iterates` points of the L-BFGS trajectory and
/// labels every component boundary state of each with FEA.
pub fn dagger_round<R: Rng + ?Sized>(
    params: &SurrogateParams<f64>,
    scenario: &Scenario,
    cfg: &DaggerConfig,
    rng: &mut R,
    seed: u64,
) -> Result<DaggerOutput, PipelineError> {
    if cfg.iterates == 0 {
        return Ok(DaggerOutput::default());
    }
    let asm = build_assembly(scenario.xi.clone(), scenario.grid, params.config.per_edge, params.config.side, scenario.bc)?;
    let lbfgs = LbfgsConfig { keep_trajectory: true, ..cfg.lbfgs };
    let result = solve_composed(&asm, params, &lbfgs);
    let trajectory = result.trajectory.unwrap_or_default();
    log::info!(
        "dagger: {} {:.3} solve took {} iterations (converged: {})",
        scenario.bc.mode.name(),
        scenario.bc.strain,
        result.iterations,
        result.converged
    );
    let mut picks = sample(rng, trajectory.len(), cfg.iterates.min(trajectory.len())).into_vec();
    picks.sort_unstable();

    let mut shapes: Vec<[f64; 2]> = Vec::new();
    for xi in &scenario.xi {
        if !shapes.contains(xi) {
            shapes.push(*xi);
        }
    }
    let side = cfg.sampler.cell_side;
    let labelers: Vec<Labeler> = shapes
        .iter()
        .map(|xi| Labeler::new(PoreShape::new(xi[0], xi[1], side), cfg.labeler))
        .collect::<Result<_, _>>()?;

    let jobs: Vec<(usize, usize)> = picks.iter().flat_map(|&it| (0..asm.n_components()).map(move |c| (it, c))).collect();
    let labeled: Vec<Option<SampleRecord>> = jobs
        .par_iter()
        .map(|&(it, c)| {
            let u = asm.gather_component(&trajectory[it], c);
            let labeler = &labelers[shapes.iter().position(|x| *x == asm.xi[c]).expect("shape registered")];
            match labeler.solve(&u, None) {
                Ok(Some(sol)) => {
                    let iterations = sol.newton_iterations as u32;
                    match labeler.label_solution(sol) {
                        Ok(l) => Some(SampleRecord {
                            u,
                            xi: asm.xi[c],
                            energy: l.energy,
                            grad: l.grad,
                            hessian: l.hessian,
                            source: Source::Dagger,
                            meta: RecordMeta { collector: c as u32, seed, newton_iterations: iterations, regularized: l.regularized },
                        }),
                        Err(e) => {
                            log::warn!("dagger: labeling iterate {it} component {c} failed: {e}");
                            None
                        }
                    }
                }
                Ok(None) => {
                    log::warn!("dagger: FEA did not converge for iterate {it} component {c}");
                    None
                }
                Err(e) => {
                    log::warn!("dagger: FEA error for iterate {it} component {c}: {e}");
                    None
                }
            }
        })
        .collect();
    let failures = labeled.iter().filter(|r| r.is_none()).count();
    Ok(DaggerOutput { records: labeled.into_iter().flatten().collect(), failures, solve_iterations: result.iterations })
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::geometry::MeshResolution;
    use crate::surrogate::SurrogateConfig;

    fn cfg() -> DaggerConfig {
        DaggerConfig {
            grid: 1,
            circular_only: true,
            labeler: LabelerConfig { resolution: MeshResolution::new(8, 5), ..Default::default() },
            lbfgs: LbfgsConfig { max_iters: 20, ..Default::default() },
            ..Default::default()
        }
    }

    fn params() -> SurrogateParams<f64> {
        SurrogateParams::init(SurrogateConfig { width: 16, ..Default::default() }, &mut ChaCha8Rng::seed_from_u64(1)).unwrap()
    }

    #[test]
    fn scenario_draws_follow_the_mixture() {
        let c = DaggerConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut comp = 0;
        for _ in 0..1000 {
            let s = sample_scenario(&c, &mut rng).unwrap();
            assert!((0.0..0.3).contains(&s.bc.strain));
            assert_eq!(s.xi.len(), 4);
            comp += (s.bc.mode == LoadMode::Compression) as usize;
        }
        assert!((comp as f64 / 1000.0 - 0.8).abs() < 0.04, "{comp}");
    }

    #[test]
    fn zero_iterates_gives_nothing() {
        let c = DaggerConfig { iterates: 0, ..cfg() };
        let s = sample_scenario(&c, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let out = dagger_round(&params(), &s, &c, &mut ChaCha8Rng::seed_from_u64(4), 0).unwrap();
        assert!(out.records.is_empty());
    }

    #[test]
    fn records_relabel_identically() {
        let c = cfg();
        let s = Scenario { grid: 1, xi: vec![[0.0, 0.0]], bc: BoundaryCondition::compression(0.05) };
        let out = dagger_round(&params(), &s, &c, &mut ChaCha8Rng::seed_from_u64(5), 7).unwrap();
        assert_eq!(out.records.len() + out.failures, 4);
        let l = Labeler::new(PoreShape::circular(), c.labeler).unwrap();
        for r in &out.records {
            assert_eq!(r.source, Source::Dagger);
            let again = l.label(&r.u, None).unwrap().unwrap();
            assert!((again.energy - r.energy).abs() <= 2.0 * c.labeler.residual_tol);
            assert!(again.grad.iter().zip(&r.grad).all(|(a, b)| (a - b).abs() <= 2.0 * c.labeler.residual_tol));
        }
    }
}
