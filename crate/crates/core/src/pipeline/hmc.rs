use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::basis::{macro_strain_operator, ControlLayout};
use crate::linalg::DenseMatrix;
use crate::pipeline::labeler::Labeler;
use crate::pipeline::record::{RecordMeta, SampleRecord, Source};
use crate::PipelineError;

/// Temperatures a collector may draw.
pub const TEMPERATURES: [f64; 7] = [1e-4, 5e-4, 1e-3, 5e-3, 1e-2, 5e-2, 0.1];

/// Added to the Gaussian precision `μ̄ ∘ μ̄` so vanishing targets stay proper.
pub const SIGMA_FLOOR: f64 = 1e-4;

/// Standard deviation of each target macro-strain entry.
pub const TARGET_STRAIN_STD: f64 = 0.15;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HmcConfig {
    pub step_size: f64,
    /// Total integration time; the number of leapfrog steps is `round(path_length / step_size)`.
    pub path_length: f64,
    pub temperature: f64,
    /// Standard deviation `m` of the initial velocity; the mass matrix is `I / m²`.
    pub momentum_std: f64,
    pub samples_per_collector: usize,
}

impl Default for HmcConfig {
    fn default() -> Self {
        Self { step_size: 0.01, path_length: 0.1, temperature: 1e-3, momentum_std: 0.1, samples_per_collector: 25 }
    }
}

impl HmcConfig {
    pub fn check(&self) -> Result<(), PipelineError> {
        let pos = |v: f64| v > 0.0 && v.is_finite();
        if !pos(self.step_size) || !(self.path_length >= 0.0) || !pos(self.temperature) || !pos(self.momentum_std) || self.samples_per_collector == 0 {
            return Err(PipelineError::Config(format!("invalid HMC config {self:?}")));
        }
        Ok(())
    }

    pub fn leapfrog_steps(&self) -> usize {
        (self.path_length / self.step_size).round() as usize
    }
}

/// Draws step size, path length, temperature and momentum scale from the collector ranges.
pub fn randomize_hmc_config<R: Rng + ?Sized>(rng: &mut R) -> HmcConfig {
    HmcConfig {
        step_size: rng.random_range(0.005..0.02),
        path_length: rng.random_range(0.05..0.3),
        temperature: TEMPERATURES[rng.random_range(0..TEMPERATURES.len())],
        momentum_std: rng.random_range(0.01..0.3),
        samples_per_collector: 25,
    }
}

/// Sign convention of the Boltzmann factor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Boltzmann {
    /// `exp(−Ẽ/T)`: prefers low energies.
    Negative,
    /// `exp(+Ẽ/T)`, as literally printed.
    Positive,
    /// Gaussian term only.
    Off,
}

/// Target macroscopic strain and Boltzmann settings of a shaping density.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapingTarget {
    pub strain: [[f64; 2]; 2],
    pub temperature: f64,
    pub boltzmann: Boltzmann,
}

impl ShapingTarget {
    /// Target entries i.i.d. `N(0, 0.15²)`.
    pub fn sample<R: Rng + ?Sized>(rng: &mut R, temperature: f64) -> Self {
        let n = Normal::new(0.0, TARGET_STRAIN_STD).expect("positive std");
        let strain = [[n.sample(rng), n.sample(rng)], [n.sample(rng), n.sample(rng)]];
        Self { strain, temperature, boltzmann: Boltzmann::Negative }
    }
}

/// Gaussian factor `log N(x̄(u); μ̄, Σ)` with precision `μ̄ ∘ μ̄ + floor`, and its gradient.
#[derive(Clone, Debug)]
pub struct StrainGaussian {
    op: DenseMatrix<f64>,
    mean: [f64; 4],
    precision: [f64; 4],
}

impl StrainGaussian {
    pub fn new(layout: &ControlLayout, side: f64, target: [[f64; 2]; 2]) -> Self {
        let mean = [target[0][0], target[0][1], target[1][0], target[1][1]];
        let precision = mean.map(|m| m * m + SIGMA_FLOOR);
        Self { op: macro_strain_operator(layout, side), mean, precision }
    }

    pub fn log_density(&self, u: &[f64]) -> (f64, Vec<f64>) {
        let x = self.op.matvec(u);
        let mut logp = 0.0;
        let mut dx = [0.0; 4];
        for k in 0..4 {
            let r = x[k] - self.mean[k];
            logp += -0.5 * self.precision[k] * r * r + 0.5 * self.precision[k].ln() - 0.5 * (2.0 * std::f64::consts::PI).ln();
            dx[k] = -self.precision[k] * r;
        }
        (logp, self.op.matvec_t(&dx))
    }
}

/// Shaping log-density at `u` and the FEA solution it needed.
pub struct Shaped {
    pub logp: f64,
    pub grad: Vec<f64>,
    pub energy: f64,
    pub solution: Option<crate::fem::FemSolution<f64>>,
}

/// `log p(u) = ∓Ẽ(u, ξ)/T + log N(x̄(u); μ̄, Σ)`. `Ok(None)` if the FEA solve fails.
pub fn shaping_logdensity(
    labeler: &Labeler,
    u: &[f64],
    target: &ShapingTarget,
    warm: Option<&[f64]>,
) -> Result<Option<Shaped>, PipelineError> {
    let gauss = StrainGaussian::new(&labeler.spline.layout, labeler.config.side(), target.strain);
    let (lg, gg) = gauss.log_density(u);
    let sign = match target.boltzmann {
        Boltzmann::Negative => -1.0,
        Boltzmann::Positive => 1.0,
        Boltzmann::Off => return Ok(Some(Shaped { logp: lg, grad: gg, energy: f64::NAN, solution: None })),
    };
    let Some((e, ge, sol)) = labeler.energy_grad(u, warm)? else { return Ok(None) };
    let s = sign / target.temperature;
    let grad = gg.iter().zip(&ge).map(|(a, b)| a + s * b).collect();
    Ok(Some(Shaped { logp: lg + s * e, grad, energy: e, solution: Some(sol) }))
}

/// Leapfrog integration of `du/dt = v`, `dv/dt = m² ∇log p(u)` for `steps` steps.
///
/// `state` holds `(log p, ∇log p)` at `u` and is updated in place. Returns `false` if the
/// log-density could not be evaluated; `u`, `v` and `state` are then unspecified.
pub fn leapfrog<F>(u: &mut [f64], v: &mut [f64], state: &mut (f64, Vec<f64>), step: f64, steps: usize, momentum_std: f64, mut logdensity: F) -> bool
where
    F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    let m2 = momentum_std * momentum_std;
    for _ in 0..steps {
        v.iter_mut().zip(&state.1).for_each(|(vi, g)| *vi += 0.5 * step * m2 * g);
        u.iter_mut().zip(v.iter()).for_each(|(ui, vi)| *ui += step * vi);
        match logdensity(u) {
            Some(s) => *state = s,
            None => return false,
        }
        v.iter_mut().zip(&state.1).for_each(|(vi, g)| *vi += 0.5 * step * m2 * g);
    }
    true
}

/// `−log p + ‖v‖² / (2 m²)`
pub fn hamiltonian(logp: f64, v: &[f64], momentum_std: f64) -> f64 {
    -logp + v.iter().map(|x| x * x).sum::<f64>() / (2.0 * momentum_std * momentum_std)
}

/// One Metropolis-adjusted HMC transition; returns the proposal and whether it was accepted.
///
/// `None` from `logdensity` aborts the proposal (reported as `Err(())`).
pub fn hmc_transition<R, F>(u: &[f64], state: &(f64, Vec<f64>), cfg: &HmcConfig, rng: &mut R, logdensity: F) -> Result<(Vec<f64>, (f64, Vec<f64>), bool), ()>
where
    R: Rng + ?Sized,
    F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    let mut v: Vec<f64> = (0..u.len())
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            cfg.momentum_std * z
        })
        .collect();
    let h0 = hamiltonian(state.0, &v, cfg.momentum_std);
    let mut q = u.to_vec();
    let mut s = state.clone();
    if !leapfrog(&mut q, &mut v, &mut s, cfg.step_size, cfg.leapfrog_steps(), cfg.momentum_std, logdensity) {
        return Err(());
    }
    let h1 = hamiltonian(s.0, &v, cfg.momentum_std);
    let log_accept = h0 - h1;
    let draw: f64 = rng.random();
    let accepted = log_accept >= 0.0 || draw.ln() < log_accept;
    Ok((q, s, accepted))
}

/// Output of one collector.
#[derive(Clone, Debug, Default)]
pub struct CollectorOutput {
    pub records: Vec<SampleRecord>,
    pub accepted: usize,
    pub rejected: usize,
    /// Proposals abandoned because an FEA solve failed.
    pub failures: usize,
    /// Stopped early after too many consecutive failures.
    pub aborted: bool,
}

/// Runs an HMC chain from rest on the shaping density, labeling every proposal.
///
/// Accepted proposals are stored as `hmc`, rejected ones as `rejected-hmc`; the chain continues
/// from the last accepted state. Each leapfrog solve is warm-started from the previous one.
pub fn hmc_collect<R: Rng + ?Sized>(
    labeler: &Labeler,
    target: &ShapingTarget,
    cfg: &HmcConfig,
    rng: &mut R,
    meta: RecordMeta,
    max_failures: usize,
) -> Result<CollectorOutput, PipelineError> {
    cfg.check()?;
    let dim = labeler.spline.layout.dim();
    let mut out = CollectorOutput::default();
    let mut u = vec![0.0; dim];
    let Some(start) = shaping_logdensity(labeler, &u, target, None)? else {
        return Err(PipelineError::TooManyFailures { failures: 1 });
    };
    let mut state = (start.logp, start.grad);
    let mut current_field = start.solution.map(|s| s.displacement);
    let mut consecutive = 0usize;
    while out.records.len() < cfg.samples_per_collector {
        let mut warm = current_field.clone();
        let mut last_solution = None;
        let mut error = None;
        let step = hmc_transition(&u, &state, cfg, rng, |q| match shaping_logdensity(labeler, q, target, warm.as_deref()) {
            Ok(Some(s)) => {
                if let Some(sol) = s.solution {
                    warm = Some(sol.displacement.clone());
                    last_solution = Some(sol);
                }
                Some((s.logp, s.grad))
            }
            Ok(None) => None,
            Err(e) => {
                error = Some(e);
                None
            }
        });
        if let Some(e) = error {
            return Err(e);
        }
        let Ok((proposal, pstate, accepted)) = step else {
            out.failures += 1;
            consecutive += 1;
            log::debug!("collector {}: FEA failure during leapfrog ({consecutive} in a row)", meta.collector);
            if consecutive > max_failures {
                out.aborted = true;
                break;
            }
            continue;
        };
        consecutive = 0;
        // zero-length paths re-label the current state
        let solution = match last_solution {
            Some(s) => Some(s),
            None => labeler.solve(&proposal, current_field.as_deref())?,
        };
        let Some(solution) = solution else {
            out.failures += 1;
            continue;
        };
        let iterations = solution.newton_iterations as u32;
        let field = solution.displacement.clone();
        let label = labeler.label_solution(solution)?;
        out.records.push(SampleRecord {
            u: proposal.clone(),
            xi: labeler.xi(),
            energy: label.energy,
            grad: label.grad,
            hessian: label.hessian,
            source: if accepted { Source::Hmc } else { Source::RejectedHmc },
            meta: RecordMeta { newton_iterations: iterations, regularized: label.regularized, ..meta },
        });
        if accepted {
            out.accepted += 1;
            u = proposal;
            state = pstate;
            current_field = Some(field);
        } else {
            out.rejected += 1;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::geometry::{MeshResolution, PoreShape};
    use crate::pipeline::LabelerConfig;

    #[test]
    fn config_draws_respect_ranges() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut counts = [0usize; 7];
        for _ in 0..10_000 {
            let c = randomize_hmc_config(&mut rng);
            assert!((0.005..0.02).contains(&c.step_size));
            assert!((0.05..0.3).contains(&c.path_length));
            assert!((0.01..0.3).contains(&c.momentum_std));
            counts[TEMPERATURES.iter().position(|&t| t == c.temperature).unwrap()] += 1;
        }
        for c in counts {
            assert!((c as f64 / 1e4 - 1.0 / 7.0).abs() < 0.02);
        }
        let a = randomize_hmc_config(&mut ChaCha8Rng::seed_from_u64(5));
        let b = randomize_hmc_config(&mut ChaCha8Rng::seed_from_u64(5));
        assert_eq!(a, b);
    }

    #[test]
    fn gaussian_at_rest_is_the_normalizer() {
        let g = StrainGaussian::new(&ControlLayout::new(10).unwrap(), 2.0, [[0.0; 2]; 2]);
        let (lp, grad) = g.log_density(&[0.0; 72]);
        let expect = 4.0 * (0.5 * SIGMA_FLOOR.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln());
        assert!((lp - expect).abs() < 1e-12);
        assert!(grad.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn leapfrog_is_reversible() {
        let g = StrainGaussian::new(&ControlLayout::new(10).unwrap(), 2.0, [[0.1, -0.05], [0.02, 0.2]]);
        let f = |q: &[f64]| Some(g.log_density(q));
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let u0: Vec<f64> = (0..72).map(|_| rng.random_range(-0.1..0.1)).collect();
        let v0: Vec<f64> = (0..72).map(|_| rng.random_range(-0.1..0.1)).collect();
        let (mut u, mut v) = (u0.clone(), v0.clone());
        let mut s = g.log_density(&u);
        assert!(leapfrog(&mut u, &mut v, &mut s, 0.05, 40, 0.7, f));
        v.iter_mut().for_each(|x| *x = -*x);
        assert!(leapfrog(&mut u, &mut v, &mut s, 0.05, 40, 0.7, f));
        for i in 0..72 {
            assert!((u[i] - u0[i]).abs() < 1e-8 && (v[i] + v0[i]).abs() < 1e-8);
        }
    }

    fn labeler() -> Labeler {
        let cfg = LabelerConfig { resolution: MeshResolution::new(8, 5), ..Default::default() };
        Labeler::new(PoreShape::circular(), cfg).unwrap()
    }

    #[test]
    fn temperature_scales_the_boltzmann_term() {
        let l = labeler();
        let u: Vec<f64> = (0..72).map(|i| 0.01 * (i as f64 * 0.3).sin()).collect();
        let t = ShapingTarget { strain: [[0.0, 0.0], [0.0, -0.1]], temperature: 0.01, boltzmann: Boltzmann::Negative };
        let off = shaping_logdensity(&l, &u, &ShapingTarget { boltzmann: Boltzmann::Off, ..t }, None).unwrap().unwrap().logp;
        let a = shaping_logdensity(&l, &u, &t, None).unwrap().unwrap().logp - off;
        let b = shaping_logdensity(&l, &u, &ShapingTarget { temperature: 0.02, ..t }, None).unwrap().unwrap().logp - off;
        assert!((a - 2.0 * b).abs() < 1e-12 * a.abs());
    }

    #[test]
    fn shaping_gradient_matches_finite_differences() {
        let l = labeler();
        let u: Vec<f64> = (0..72).map(|i| 0.01 * (i as f64 * 0.7).cos()).collect();
        let t = ShapingTarget { strain: [[0.05, 0.0], [0.0, -0.1]], temperature: 0.01, boltzmann: Boltzmann::Negative };
        let s = shaping_logdensity(&l, &u, &t, None).unwrap().unwrap();
        let h = 1e-5;
        for i in [0, 9, 30, 71] {
            let mut up = u.clone();
            up[i] += h;
            let mut um = u.clone();
            um[i] -= h;
            let fp = shaping_logdensity(&l, &up, &t, None).unwrap().unwrap().logp;
            let fm = shaping_logdensity(&l, &um, &t, None).unwrap().unwrap().logp;
            let fd = (fp - fm) / (2.0 * h);
            assert!((fd - s.grad[i]).abs() < 1e-4 * s.grad[i].abs().max(1e-3), "{i}: {fd} vs {}", s.grad[i]);
        }
    }

    #[test]
    fn zero_path_length_always_accepts_the_current_state() {
        let l = labeler();
        let t = ShapingTarget::sample(&mut ChaCha8Rng::seed_from_u64(3), 1e-3);
        let cfg = HmcConfig { path_length: 0.0, samples_per_collector: 3, ..Default::default() };
        let out = hmc_collect(&l, &t, &cfg, &mut ChaCha8Rng::seed_from_u64(4), RecordMeta::default(), 3).unwrap();
        assert_eq!(out.accepted, 3);
        assert!(out.records.iter().all(|r| r.u.iter().all(|&x| x == 0.0) && r.source == Source::Hmc));
    }

    #[test]
    fn collection_is_deterministic_and_records_are_valid() {
        let l = labeler();
        let t = ShapingTarget::sample(&mut ChaCha8Rng::seed_from_u64(5), 1e-3);
        let cfg = HmcConfig { samples_per_collector: 4, ..Default::default() };
        let a = hmc_collect(&l, &t, &cfg, &mut ChaCha8Rng::seed_from_u64(6), RecordMeta::default(), 3).unwrap();
        let b = hmc_collect(&l, &t, &cfg, &mut ChaCha8Rng::seed_from_u64(6), RecordMeta::default(), 3).unwrap();
        assert_eq!(a.records, b.records);
        assert_eq!(a.records.len(), 4);
        for (i, r) in a.records.iter().enumerate() {
            r.validate(i).unwrap();
        }
        assert!(a.records.iter().any(|r| r.energy > 0.0));
    }
}
