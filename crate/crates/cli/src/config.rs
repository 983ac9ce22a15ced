use std::path::{Path, PathBuf};

use ces_core::composer::{LbfgsConfig, ScheduleGrid};
use ces_core::fem::Material;
use ces_core::geometry::{is_valid_pore, MeshResolution, PoreSampler, PoreShape};
use ces_core::pipeline::{Boltzmann, CollectConfig, DaggerConfig, HmcConfig, LabelerConfig};
use ces_core::surrogate::{FeatureFlags, SurrogateConfig, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Everything a run needs; the file it was read from is archived beside the outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub output: PathBuf,
    /// Worker threads; `CES_WORKERS` takes precedence.
    pub workers: Option<usize>,
    /// Control points per component face.
    pub per_edge: usize,
    pub material: Material<f64>,
    pub geometry: GeometryConfig,
    pub labeler: LabelerSection,
    pub collect: CollectSection,
    pub surrogate: SurrogateSection,
    pub train: TrainSection,
    pub dagger: DaggerSection,
    pub benchmark: BenchmarkSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryConfig {
    pub thickness_floor: f64,
    pub alpha_range: [f64; 2],
    pub beta_range: [f64; 2],
    pub max_rejections: usize,
    /// Side of one pore cell.
    pub cell_side: f64,
    /// Use circular pores everywhere instead of sampling shapes.
    pub circular_only: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabelerSection {
    pub pores_per_side: usize,
    pub resolution: MeshResolution,
    pub fallback_steps: usize,
    pub fallback_relaxation: f64,
    pub residual_tol: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CollectSection {
    pub collectors: usize,
    pub samples_per_collector: usize,
    pub max_failures: usize,
    pub boltzmann: Boltzmann,
    pub hmc: Option<HmcConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurrogateSection {
    pub width: usize,
    pub hidden_layers: usize,
    pub flags: FeatureFlags,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub lr: f64,
    pub batch: usize,
    pub epochs: usize,
    pub max_steps: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DaggerSection {
    pub rounds: usize,
    pub scenarios_per_round: usize,
    /// Training epochs over the aggregated dataset after each round.
    pub epochs_per_round: usize,
    pub iterates: usize,
    pub grid: usize,
    pub max_strain: f64,
    pub compression_probability: f64,
    pub lbfgs: LbfgsConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkSection {
    pub grid: usize,
    pub strain: f64,
    /// Sampled pore shapes in addition to the circular one.
    pub shapes: usize,
    /// Mesh ladder, coarsest first; the last entry is the reference.
    pub fidelities: Vec<MeshResolution>,
    pub schedule: ScheduleGrid,
    pub lbfgs: LbfgsConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output: PathBuf::from("run"),
            workers: None,
            per_edge: 10,
            material: Material::default(),
            geometry: GeometryConfig::default(),
            labeler: LabelerSection::default(),
            collect: CollectSection::default(),
            surrogate: SurrogateSection::default(),
            train: TrainSection::default(),
            dagger: DaggerSection::default(),
            benchmark: BenchmarkSection::default(),
        }
    }
}

impl Default for GeometryConfig {
    fn default() -> Self {
        let s = PoreSampler::default();
        Self {
            thickness_floor: s.thickness_floor,
            alpha_range: s.alpha_range,
            beta_range: s.beta_range,
            max_rejections: s.max_rejections,
            cell_side: s.cell_side,
            circular_only: false,
        }
    }
}

impl Default for LabelerSection {
    fn default() -> Self {
        let l = LabelerConfig::default();
        Self {
            pores_per_side: l.pores_per_side,
            resolution: l.resolution,
            fallback_steps: l.fallback_steps,
            fallback_relaxation: l.fallback_relaxation,
            residual_tol: l.residual_tol,
        }
    }
}

impl Default for CollectSection {
    fn default() -> Self {
        let c = CollectConfig::default();
        Self { collectors: c.collectors, samples_per_collector: c.samples_per_collector, max_failures: c.max_failures, boltzmann: c.boltzmann, hmc: c.hmc }
    }
}

impl Default for SurrogateSection {
    fn default() -> Self {
        let s = SurrogateConfig::default();
        Self { width: s.width, hidden_layers: s.hidden_layers, flags: s.flags }
    }
}

impl Default for TrainSection {
    fn default() -> Self {
        Self { lr: 1e-3, batch: 64, epochs: 100, max_steps: None }
    }
}

impl Default for DaggerSection {
    fn default() -> Self {
        let d = DaggerConfig::default();
        Self {
            rounds: 3,
            scenarios_per_round: 4,
            epochs_per_round: 30,
            iterates: d.iterates,
            grid: d.grid,
            max_strain: d.max_strain,
            compression_probability: d.compression_probability,
            lbfgs: d.lbfgs,
        }
    }
}

impl Default for BenchmarkSection {
    fn default() -> Self {
        Self {
            grid: 2,
            strain: 0.125,
            shapes: 2,
            fidelities: vec![
                MeshResolution::new(8, 2),
                MeshResolution::new(8, 5),
                MeshResolution::new(16, 6),
                MeshResolution::new(16, 10),
                MeshResolution::new(24, 14),
            ],
            schedule: ScheduleGrid::default(),
            lbfgs: LbfgsConfig::default(),
        }
    }
}

/// 1-based line of a byte offset.
pub fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Parses TOML, reporting the offending line on failure.
pub fn parse_toml<T: serde::de::DeserializeOwned>(text: &str, origin: &Path) -> Result<T, CliError> {
    toml::from_str(text).map_err(|e| {
        let line = e.span().map(|s| line_of(text, s.start)).unwrap_or(0);
        CliError::Validation(format!("{}:{line}: {}", origin.display(), e.message()))
    })
}

impl RunConfig {
    pub fn from_toml(text: &str, origin: &Path) -> Result<Self, CliError> {
        let cfg: Self = parse_toml(text, origin)?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn sampler(&self) -> PoreSampler {
        let g = &self.geometry;
        PoreSampler {
            thickness_floor: g.thickness_floor,
            alpha_range: g.alpha_range,
            beta_range: g.beta_range,
            max_rejections: g.max_rejections,
            cell_side: g.cell_side,
        }
    }

    /// Side of one component.
    pub fn component_side(&self) -> f64 {
        self.labeler.pores_per_side as f64 * self.geometry.cell_side
    }

    pub fn labeler(&self) -> LabelerConfig {
        let l = &self.labeler;
        LabelerConfig {
            pores_per_side: l.pores_per_side,
            resolution: l.resolution,
            material: self.material,
            per_edge: self.per_edge,
            fallback_steps: l.fallback_steps,
            fallback_relaxation: l.fallback_relaxation,
            residual_tol: l.residual_tol,
        }
    }

    pub fn collect(&self) -> CollectConfig {
        let c = &self.collect;
        CollectConfig {
            seed: self.seed,
            collectors: c.collectors,
            samples_per_collector: c.samples_per_collector,
            max_failures: c.max_failures,
            labeler: self.labeler(),
            sampler: self.sampler(),
            boltzmann: c.boltzmann,
            hmc: c.hmc,
            circular_only: self.geometry.circular_only,
        }
    }

    pub fn surrogate(&self) -> SurrogateConfig {
        let s = &self.surrogate;
        SurrogateConfig { per_edge: self.per_edge, width: s.width, hidden_layers: s.hidden_layers, side: self.component_side(), flags: s.flags }
    }

    pub fn train(&self, epochs: usize) -> TrainConfig {
        let t = &self.train;
        TrainConfig { lr: t.lr, batch: t.batch, epochs, seed: self.seed, max_steps: t.max_steps, ..Default::default() }
    }

    pub fn dagger(&self) -> DaggerConfig {
        let d = &self.dagger;
        DaggerConfig {
            iterates: d.iterates,
            grid: d.grid,
            max_strain: d.max_strain,
            compression_probability: d.compression_probability,
            circular_only: self.geometry.circular_only,
            sampler: self.sampler(),
            labeler: self.labeler(),
            lbfgs: d.lbfgs,
        }
    }

    /// Worker count: `CES_WORKERS`, then the config, then one.
    pub fn workers(&self) -> Result<usize, CliError> {
        match std::env::var("CES_WORKERS") {
            Ok(v) => v.trim().parse::<usize>().ok().filter(|&n| n > 0).ok_or_else(|| CliError::Validation(format!("CES_WORKERS={v:?} is not a positive integer"))),
            Err(_) => Ok(self.workers.unwrap_or(1).max(1)),
        }
    }

    /// Scans a grid over the pore box for at least one shape above the thickness floor.
    fn box_has_valid_pore(&self) -> bool {
        let g = &self.geometry;
        let n = 32;
        let at = |r: [f64; 2], k: usize| r[0] + (r[1] - r[0]) * k as f64 / n as f64;
        (0..=n).any(|i| (0..=n).any(|j| is_valid_pore(&PoreShape::new(at(g.alpha_range, i), at(g.beta_range, j), g.cell_side), g.thickness_floor)))
    }

    /// Rejects settings that would fail later, before any FEA work starts.
    pub fn check(&self) -> Result<(), CliError> {
        self.collect().check()?;
        self.surrogate().check()?;
        self.train(self.train.epochs).check()?;
        if self.per_edge < 4 || self.labeler.pores_per_side == 0 || !(self.geometry.cell_side > 0.0) {
            return Err(CliError::Validation("per_edge, labeler.pores_per_side and geometry.cell_side must be positive".into()));
        }
        if !self.geometry.circular_only && !self.box_has_valid_pore() {
            let g = &self.geometry;
            return Err(CliError::Validation(format!("pore box alpha={:?} beta={:?} contains no valid shape", g.alpha_range, g.beta_range)));
        }
        let d = &self.dagger;
        if d.grid == 0 || !(d.max_strain > 0.0 && d.max_strain < 1.0) || !(0.0..=1.0).contains(&d.compression_probability) {
            return Err(CliError::Validation(format!("invalid dagger settings {d:?}")));
        }
        let b = &self.benchmark;
        if b.grid == 0 || b.fidelities.is_empty() || !(b.strain >= 0.0 && b.strain < 1.0) {
            return Err(CliError::Validation(format!("invalid benchmark settings {b:?}")));
        }
        if b.schedule.pairs().is_empty() {
            return Err(CliError::Validation("benchmark.schedule has no (load_steps, relaxation) pairs".into()));
        }
        if let Some(w) = self.workers {
            if w == 0 {
                return Err(CliError::Validation("workers must be positive".into()));
            }
        }
        Ok(())
    }
}
