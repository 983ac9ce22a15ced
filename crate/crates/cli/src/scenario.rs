use std::path::Path;

use ces_core::composer::{BoundaryCondition, LoadAxis, LoadMode, ScheduleGrid};
use ces_core::geometry::{is_valid_pore, MeshResolution, PoreShape};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{parse_toml, RunConfig};
use crate::error::CliError;

/// One composed problem as written in a scenario file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub name: Option<String>,
    pub grid: usize,
    /// One shared `(α, β)` or one per component, row-major from the bottom row.
    pub xi: Option<Vec<[f64; 2]>>,
    /// Draws one shape per component instead of listing them.
    pub sample_seed: Option<u64>,
    pub strain: f64,
    pub mode: LoadMode,
    #[serde(default)]
    pub axis: LoadAxis,
    pub fidelities: Option<Vec<MeshResolution>>,
    pub schedule: Option<ScheduleGrid>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub scenario: Vec<ScenarioSpec>,
}

/// A scenario with shapes resolved and defaults filled from the run config.
#[derive(Clone, Debug, PartialEq)]
pub struct ResolvedScenario {
    pub name: String,
    pub grid: usize,
    pub xi: Vec<[f64; 2]>,
    pub bc: BoundaryCondition,
    pub fidelities: Vec<MeshResolution>,
    pub schedule: ScheduleGrid,
}

pub fn read_scenarios(text: &str, origin: &Path, run: &RunConfig) -> Result<Vec<ResolvedScenario>, CliError> {
    let file: ScenarioFile = parse_toml(text, origin)?;
    if file.scenario.is_empty() {
        return Err(CliError::Validation(format!("{}: no [[scenario]] entries", origin.display())));
    }
    file.scenario.iter().enumerate().map(|(i, s)| s.resolve(i, run)).collect()
}

impl ScenarioSpec {
    pub fn resolve(&self, index: usize, run: &RunConfig) -> Result<ResolvedScenario, CliError> {
        let name = self.name.clone().unwrap_or_else(|| format!("scenario{index}"));
        let bad = |m: String| CliError::Validation(format!("{name}: {m}"));
        if self.grid == 0 {
            return Err(bad("grid must be positive".into()));
        }
        if !(self.strain >= 0.0 && self.strain < 1.0) {
            return Err(bad(format!("strain {} outside [0, 1)", self.strain)));
        }
        let n = self.grid * self.grid;
        let xi = match (&self.xi, self.sample_seed) {
            (Some(_), Some(_)) => return Err(bad("give either xi or sample_seed, not both".into())),
            (Some(v), None) if v.len() == 1 => vec![v[0]; n],
            (Some(v), None) if v.len() == n => v.clone(),
            (Some(v), None) => return Err(bad(format!("xi has {} entries, expected 1 or {n}", v.len()))),
            (None, Some(seed)) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let sampler = run.sampler();
                (0..n).map(|_| sampler.sample::<f64, _>(&mut rng).map(|s| s.xi())).collect::<Result<_, _>>()?
            }
            (None, None) => vec![[0.0, 0.0]; n],
        };
        for x in &xi {
            if !is_valid_pore(&PoreShape::new(x[0], x[1], run.geometry.cell_side), run.geometry.thickness_floor) {
                return Err(bad(format!("pore ({}, {}) violates the thickness floor", x[0], x[1])));
            }
        }
        let fidelities = self.fidelities.clone().unwrap_or_else(|| run.benchmark.fidelities.clone());
        if fidelities.is_empty() {
            return Err(bad("empty fidelity list".into()));
        }
        let schedule = self.schedule.clone().unwrap_or_else(|| run.benchmark.schedule.clone());
        if schedule.pairs().is_empty() {
            return Err(bad("empty schedule grid".into()));
        }
        Ok(ResolvedScenario {
            name,
            grid: self.grid,
            xi,
            bc: BoundaryCondition { strain: self.strain, axis: self.axis, mode: self.mode },
            fidelities,
            schedule,
        })
    }
}

/// Benchmark scenarios from the run config: circular pores plus `shapes` sampled ones, each
/// under compression and tension.
pub fn benchmark_scenarios(run: &RunConfig) -> Result<Vec<ResolvedScenario>, CliError> {
    let b = &run.benchmark;
    let mut rng = ChaCha8Rng::seed_from_u64(run.seed);
    rng.set_stream(crate::commands::BENCHMARK_STREAM);
    let sampler = run.sampler();
    let mut shapes = vec![[0.0, 0.0]];
    for _ in 0..b.shapes {
        shapes.push(sampler.sample::<f64, _>(&mut rng)?.xi());
    }
    let mut out = Vec::new();
    for (k, xi) in shapes.iter().enumerate() {
        for mode in [LoadMode::Compression, LoadMode::Tension] {
            out.push(ResolvedScenario {
                name: format!("shape{k}-{}", mode.name()),
                grid: b.grid,
                xi: vec![*xi; b.grid * b.grid],
                bc: BoundaryCondition { strain: b.strain, axis: LoadAxis::Y, mode },
                fidelities: b.fidelities.clone(),
                schedule: b.schedule.clone(),
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shared_xi_is_broadcast() {
        let text = "[[scenario]]\ngrid = 2\nxi = [[0.1, 0.0]]\nstrain = 0.05\nmode = \"compression\"\n";
        let s = read_scenarios(text, Path::new("s.toml"), &RunConfig::default()).unwrap();
        assert_eq!(s[0].xi, vec![[0.1, 0.0]; 4]);
        assert_eq!(s[0].bc, BoundaryCondition::compression(0.05));
        assert_eq!(s[0].name, "scenario0");
    }

    #[test]
    fn sampled_shapes_are_reproducible_and_valid() {
        let text = "[[scenario]]\ngrid = 2\nsample_seed = 3\nstrain = 0.1\nmode = \"tension\"\n";
        let a = read_scenarios(text, Path::new("s.toml"), &RunConfig::default()).unwrap();
        let b = read_scenarios(text, Path::new("s.toml"), &RunConfig::default()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[0].xi.len(), 4);
    }

    #[test]
    fn errors_point_at_the_line() {
        let text = "[[scenario]]\ngrid = 2\nstrain = 0.1\nmode = \"shear\"\n";
        let e = read_scenarios(text, Path::new("s.toml"), &RunConfig::default()).unwrap_err();
        assert!(e.to_string().contains("s.toml:4"), "{e}");
    }

    #[test]
    fn wrong_xi_count_is_rejected() {
        let text = "[[scenario]]\ngrid = 2\nxi = [[0.0, 0.0], [0.0, 0.0]]\nstrain = 0.1\nmode = \"tension\"\n";
        assert_eq!(read_scenarios(text, Path::new("s.toml"), &RunConfig::default()).unwrap_err().exit_code(), 1);
    }

    #[test]
    fn benchmark_always_includes_circular_pores() {
        let s = benchmark_scenarios(&RunConfig::default()).unwrap();
        assert_eq!(s.len(), 6);
        assert!(s.iter().filter(|s| s.xi[0] == [0.0, 0.0]).count() >= 2);
        assert!(s.iter().all(|s| s.bc.strain == 0.125));
    }
}
