use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::{PoreSampler, PoreShape};
use crate::pipeline::hmc::{hmc_collect, randomize_hmc_config, Boltzmann, CollectorOutput, HmcConfig, ShapingTarget};
use crate::pipeline::labeler::{Labeler, LabelerConfig};
use crate::pipeline::record::RecordMeta;
use crate::PipelineError;

/// Settings of an initial collection run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CollectConfig {
    pub seed: u64,
    pub collectors: usize,
    pub samples_per_collector: usize,
    /// Consecutive FEA failures tolerated before a collector gives up.
    pub max_failures: usize,
    pub labeler: LabelerConfig,
    pub sampler: PoreSampler,
    pub boltzmann: Boltzmann,
    /// Fixed HMC settings; drawn per collector when absent.
    pub hmc: Option<HmcConfig>,
    /// Use circular pores instead of sampling shapes.
    pub circular_only: bool,
}

impl Default for CollectConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            collectors: 8,
            samples_per_collector: 25,
            max_failures: 5,
            labeler: LabelerConfig::default(),
            sampler: PoreSampler::default(),
            boltzmann: Boltzmann::Negative,
            hmc: None,
            circular_only: false,
        }
    }
}

impl CollectConfig {
    /// Checks everything that can be checked without meshing or solving.
    pub fn check(&self) -> Result<(), PipelineError> {
        self.sampler.check()?;
        self.labeler.material.check()?;
        if self.collectors == 0 || self.samples_per_collector == 0 {
            return Err(PipelineError::Config("collectors and samples_per_collector must be positive".into()));
        }
        if let Some(h) = &self.hmc {
            h.check()?;
        }
        Ok(())
    }
}

/// Pore shape, HMC settings and shaping target of collector `id`, from its own rng stream.
pub fn collector_setup(cfg: &CollectConfig, id: u32) -> Result<(PoreShape<f64>, HmcConfig, ShapingTarget, ChaCha8Rng), PipelineError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(id as u64);
    let shape = if cfg.circular_only { PoreShape::circular() } else { cfg.sampler.sample(&mut rng)? };
    let mut hmc = cfg.hmc.unwrap_or_else(|| randomize_hmc_config(&mut rng));
    hmc.samples_per_collector = cfg.samples_per_collector;
    let mut target = ShapingTarget::sample(&mut rng, hmc.temperature);
    target.boltzmann = cfg.boltzmann;
    Ok((shape, hmc, target, rng))
}

/// Runs collector `id` to completion.
pub fn run_collector(cfg: &CollectConfig, id: u32) -> Result<CollectorOutput, PipelineError> {
    let (shape, hmc, target, mut rng) = collector_setup(cfg, id)?;
    let labeler = Labeler::new(shape, cfg.labeler)?;
    log::info!(
        "collector {id}: xi=({:.3}, {:.3}) step={:.4} path={:.3} T={} m={:.3}",
        shape.alpha,
        shape.beta,
        hmc.step_size,
        hmc.path_length,
        hmc.temperature,
        hmc.momentum_std
    );
    let meta = RecordMeta { collector: id, seed: cfg.seed, ..Default::default() };
    let out = hmc_collect(&labeler, &target, &hmc, &mut rng, meta, cfg.max_failures)?;
    log::info!("collector {id}: {} accepted, {} rejected, {} failed solves", out.accepted, out.rejected, out.failures);
    Ok(out)
}

/// Runs collectors `ids` on `workers` threads; outputs are in `ids` order.
///
/// A collector that errors is logged and contributes an aborted, empty output.
pub fn run_collectors(cfg: &CollectConfig, ids: &[u32], workers: usize) -> Result<Vec<CollectorOutput>, PipelineError> {
    cfg.check()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| PipelineError::Config(e.to_string()))?;
    Ok(pool.install(|| {
        ids.par_iter()
            .map(|&id| {
                run_collector(cfg, id).unwrap_or_else(|e| {
                    log::warn!("collector {id} failed: {e}");
                    CollectorOutput { aborted: true, ..Default::default() }
                })
            })
            .collect()
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::MeshResolution;

    #[test]
    fn setup_is_per_collector_and_reproducible() {
        let cfg = CollectConfig::default();
        let (a, ha, ta, _) = collector_setup(&cfg, 0).unwrap();
        let (b, hb, tb, _) = collector_setup(&cfg, 1).unwrap();
        let (a2, ha2, ta2, _) = collector_setup(&cfg, 0).unwrap();
        assert_eq!((a, ha, ta), (a2, ha2, ta2));
        assert_ne!(a, b);
        assert_ne!(ha, hb);
        assert_ne!(ta, tb);
        assert_eq!(ha.samples_per_collector, 25);
    }

    #[test]
    fn invalid_pore_box_fails_before_any_solve() {
        let cfg = CollectConfig { sampler: PoreSampler { alpha_range: [0.2, 0.1], ..Default::default() }, ..Default::default() };
        assert!(run_collectors(&cfg, &[0, 1], 1).is_err());
    }

    #[test]
    fn collectors_produce_the_requested_count() {
        let cfg = CollectConfig {
            collectors: 2,
            samples_per_collector: 3,
            labeler: LabelerConfig { resolution: MeshResolution::new(8, 5), ..Default::default() },
            ..Default::default()
        };
        let out = run_collectors(&cfg, &[0, 1], 2).unwrap();
        assert_eq!(out.iter().map(|o| o.records.len()).sum::<usize>(), 6);
        assert!(out[1].records.iter().all(|r| r.meta.collector == 1));
    }
}
