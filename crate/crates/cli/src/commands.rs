use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::time::Instant;

use ces_core::composer::{build_assembly, compare, fea_reference, solve_composed, Assembly, FeaReference};
use ces_core::geometry::MeshResolution;
use ces_core::pipeline::{dagger_round, run_collectors, sample_scenario, split_of, DatasetDir, Manifest, SampleRecord, Source, Split};
use ces_core::surrogate::{read_checkpoint, validation_metrics, write_checkpoint, write_sidecar, EpochReport, FeatureFlags, SurrogateParams, Trainer};
use ces_core::ComposerError;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::scenario::ResolvedScenario;
use crate::validate::{invariant_suite, Check};

/// RNG streams; collectors use their id.
pub const INIT_STREAM: u64 = 1 << 32;
pub const DAGGER_STREAM: u64 = 2 << 32;
pub const BENCHMARK_STREAM: u64 = 3 << 32;

/// A parsed config plus the text it came from.
#[derive(Clone, Debug)]
pub struct Run {
    pub config: RunConfig,
    pub text: String,
}

impl Run {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let config = RunConfig::from_toml(&text, path)?;
        Ok(Self { config, text })
    }

    pub fn new(config: RunConfig) -> Result<Self, CliError> {
        config.check()?;
        let text = toml::to_string(&config).map_err(|e| CliError::Validation(e.to_string()))?;
        Ok(Self { config, text })
    }

    pub fn out(&self, name: &str) -> PathBuf {
        self.config.output.join(name)
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.out("checkpoint.bin")
    }

    /// Creates the output directory and archives the config text verbatim.
    pub fn prepare(&self) -> Result<(), CliError> {
        fs::create_dir_all(&self.config.output).map_err(|e| CliError::io(&self.config.output, e))?;
        let p = self.out("config.toml");
        fs::write(&p, &self.text).map_err(|e| CliError::io(&p, e))
    }

    pub fn dataset(&self) -> DatasetDir {
        DatasetDir::new(&self.config.output, self.config.surrogate().dim())
    }

    fn pool(&self) -> Result<rayon::ThreadPool, CliError> {
        rayon::ThreadPoolBuilder::new().num_threads(self.config.workers()?).build().map_err(|e| CliError::Validation(e.to_string()))
    }

    pub fn load_trainer(&self) -> Result<Trainer<f64>, CliError> {
        let p = self.checkpoint_path();
        let f = File::open(&p).map_err(|e| CliError::io(&p, e))?;
        let trainer: Trainer<f64> = read_checkpoint(BufReader::new(f))?;
        if trainer.params.config != self.config.surrogate() {
            return Err(CliError::Validation(format!("{}: architecture differs from the [surrogate] config", p.display())));
        }
        Ok(trainer)
    }

    fn save_trainer(&self, trainer: &Trainer<f64>, manifest: &Manifest) -> Result<(), CliError> {
        let p = self.checkpoint_path();
        let f = File::create(&p).map_err(|e| CliError::io(&p, e))?;
        write_checkpoint(trainer, BufWriter::new(f))?;
        let s = self.out("checkpoint.txt");
        let f = File::create(&s).map_err(|e| CliError::io(&s, e))?;
        write_sidecar(trainer, self.config.seed, &manifest.hash, BufWriter::new(f)).map_err(|e| CliError::io(&s, e))
    }

    fn init_params(&self, flags: FeatureFlags) -> Result<SurrogateParams<f64>, CliError> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(INIT_STREAM);
        Ok(SurrogateParams::init(ces_core::surrogate::SurrogateConfig { flags, ..self.config.surrogate() }, &mut rng)?)
    }
}

fn split_records(records: Vec<SampleRecord>, offset: usize) -> (Vec<SampleRecord>, Vec<SampleRecord>) {
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for (i, r) in records.into_iter().enumerate() {
        match split_of(offset + i) {
            Split::Train => train.push(r),
            Split::Val => val.push(r),
        }
    }
    (train, val)
}

fn append_split(ds: &DatasetDir, records: Vec<SampleRecord>, offset: usize) -> Result<Manifest, CliError> {
    let (train, val) = split_records(records, offset);
    ds.append(Split::Train, &train)?;
    Ok(ds.append(Split::Val, &val)?)
}

/// Runs HMC collectors that have not yet contributed records and appends their output.
///
/// Collectors are appended in id order, so the dataset only depends on the config.
pub fn collect(run: &Run) -> Result<Manifest, CliError> {
    let cfg = run.config.collect();
    cfg.check()?;
    run.prepare()?;
    let ds = run.dataset();
    ds.init()?;
    let existing = ds.load()?;
    let done: BTreeSet<u32> = existing.train.iter().chain(&existing.val).filter(|r| r.source != Source::Dagger).map(|r| r.meta.collector).collect();
    let todo: Vec<u32> = (0..cfg.collectors as u32).filter(|id| !done.contains(id)).collect();
    if !done.is_empty() {
        log::info!("collect: {} collectors already present, {} to run", done.len(), todo.len());
    }
    let workers = run.config.workers()?;
    let mut manifest = existing.manifest;
    for batch in todo.chunks(workers) {
        let outs = run_collectors(&cfg, batch, workers)?;
        for (id, out) in batch.iter().zip(outs) {
            log::info!(
                "collector {id}: {} records, {} accepted, {} rejected, {} failures{}",
                out.records.len(),
                out.accepted,
                out.rejected,
                out.failures,
                if out.aborted { ", aborted" } else { "" }
            );
            manifest = append_split(&ds, out.records, 0)?;
        }
    }
    let total = manifest.train.total() + manifest.val.total();
    if total == 0 {
        return Err(CliError::Solver("every collector failed; no records".into()));
    }
    log::info!("collect: {total} records, hash {}", manifest.hash);
    Ok(manifest)
}

/// One row of the per-epoch training CSV.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct EpochRow {
    pub epoch: usize,
    pub l0: f64,
    pub l1: f64,
    pub l2: f64,
    #[serde(rename = "E_pct_err")]
    pub e_pct_err: f64,
    #[serde(rename = "G_sim")]
    pub g_sim: f64,
    #[serde(rename = "Hvp_sim")]
    pub hvp_sim: f64,
}

impl From<&EpochReport> for EpochRow {
    fn from(r: &EpochReport) -> Self {
        let m = r.val.unwrap_or(ces_core::surrogate::Metrics { e_pct_err: f64::NAN, g_sim: f64::NAN, hvp_sim: f64::NAN });
        Self { epoch: r.epoch, l0: r.train.l0, l1: r.train.l1, l2: r.train.l2, e_pct_err: m.e_pct_err, g_sim: m.g_sim, hvp_sim: m.hvp_sim }
    }
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T], append: bool) -> Result<(), CliError> {
    let exists = append && path.exists();
    let f = fs::OpenOptions::new().create(true).append(append).write(true).truncate(!append).open(path).map_err(|e| CliError::io(path, e))?;
    let mut w = csv::WriterBuilder::new().has_headers(!exists).from_writer(f);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn read_csv<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, CliError> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|x| x.map_err(CliError::from)).collect()
}

/// Fresh trainer at the seeded initialization.
pub fn initial_trainer(run: &Run) -> Result<Trainer<f64>, CliError> {
    Ok(Trainer::new(run.init_params(run.config.surrogate.flags)?))
}

/// Trains to `train.epochs` epochs, from scratch or continuing the saved checkpoint.
pub fn train(run: &Run, resume: bool) -> Result<Vec<EpochReport>, CliError> {
    run.prepare()?;
    let data = run.dataset().load()?;
    if data.train.is_empty() {
        return Err(CliError::Validation("training split is empty; run collect first".into()));
    }
    let mut trainer = if resume && run.checkpoint_path().exists() { run.load_trainer()? } else { initial_trainer(run)? };
    let remaining = run.config.train.epochs.saturating_sub(trainer.epoch);
    let history = trainer.run(&data.train, &data.val, &run.config.train(remaining))?;
    run.save_trainer(&trainer, &data.manifest)?;
    let rows: Vec<EpochRow> = history.iter().map(EpochRow::from).collect();
    write_csv(&run.out("train.csv"), &rows, resume)?;
    if let Some(h) = history.last() {
        log::info!("train: epoch {} loss {:.5} val {:?}", h.epoch, h.train.total, h.val);
    }
    Ok(history)
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct AblationRow {
    pub variant: String,
    pub scale_by_norm: bool,
    pub remove_rigid: bool,
    pub sobolev_g: bool,
    pub sobolev_hvp: bool,
    pub train_loss: f64,
    #[serde(rename = "E_pct_err")]
    pub e_pct_err: f64,
    #[serde(rename = "G_sim")]
    pub g_sim: f64,
    #[serde(rename = "Hvp_sim")]
    pub hvp_sim: f64,
}

/// Trains the full model and each single-flag ablation from the same initialization.
pub fn ablate(run: &Run) -> Result<Vec<AblationRow>, CliError> {
    run.prepare()?;
    let data = run.dataset().load()?;
    if data.train.is_empty() || data.val.is_empty() {
        return Err(CliError::Validation("ablation needs non-empty training and validation splits".into()));
    }
    let mut rows = Vec::new();
    for (name, flags) in FeatureFlags::ablation_grid() {
        let mut trainer = Trainer::new(run.init_params(flags)?);
        let history = trainer.run(&data.train, &data.val, &run.config.train(run.config.train.epochs))?;
        let (_, m) = validation_metrics(&trainer.params, &data.val, run.config.seed)?;
        let train_loss = history.last().map_or(f64::NAN, |h| h.train.total);
        log::info!("ablate {name}: E%err {:.2} G-sim {:.3} Hvp-sim {:.3}", m.e_pct_err, m.g_sim, m.hvp_sim);
        rows.push(AblationRow {
            variant: name.to_string(),
            scale_by_norm: flags.scale_by_norm,
            remove_rigid: flags.remove_rigid,
            sobolev_g: flags.sobolev_g,
            sobolev_hvp: flags.sobolev_hvp,
            train_loss,
            e_pct_err: m.e_pct_err,
            g_sim: m.g_sim,
            hvp_sim: m.hvp_sim,
        });
    }
    write_csv(&run.out("ablation.csv"), &rows, false)?;
    Ok(rows)
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct DaggerRow {
    pub round: usize,
    pub scenarios: usize,
    pub records: usize,
    pub failures: usize,
    pub solve_iterations: usize,
    pub train_loss: f64,
    #[serde(rename = "G_sim")]
    pub g_sim: f64,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
struct DaggerState {
    rounds_done: usize,
}

/// DAgger rounds not yet run: deploy the surrogate, label visited states, retrain.
pub fn dagger(run: &Run) -> Result<Vec<DaggerRow>, CliError> {
    run.prepare()?;
    let cfg = run.config.dagger();
    let d = &run.config.dagger;
    let ds = run.dataset();
    let state_path = run.out("dagger.json");
    let mut state: DaggerState = match fs::read_to_string(&state_path) {
        Ok(t) => serde_json::from_str(&t).map_err(|e| CliError::io(&state_path, e))?,
        Err(_) => DaggerState::default(),
    };
    let mut rows = Vec::new();
    if state.rounds_done >= d.rounds {
        return Ok(rows);
    }
    let mut trainer = run.load_trainer()?;
    let pool = run.pool()?;
    for round in state.rounds_done..d.rounds {
        let mut rng = ChaCha8Rng::seed_from_u64(run.config.seed);
        rng.set_stream(DAGGER_STREAM + round as u64);
        let mut records = Vec::new();
        let (mut failures, mut iterations) = (0, 0);
        for _ in 0..d.scenarios_per_round {
            let sc = sample_scenario(&cfg, &mut rng)?;
            let out = pool.install(|| dagger_round(&trainer.params, &sc, &cfg, &mut rng, run.config.seed))?;
            failures += out.failures;
            iterations += out.solve_iterations;
            records.extend(out.records);
        }
        let added = records.len();
        let before = ds.read_manifest()?;
        let offset = before.train.total() + before.val.total();
        append_split(&ds, records, offset)?;
        let data = ds.load()?;
        let tc = ces_core::surrogate::TrainConfig { max_steps: None, ..run.config.train(d.epochs_per_round) };
        let history = trainer.run(&data.train, &data.val, &tc)?;
        run.save_trainer(&trainer, &data.manifest)?;
        write_csv(&run.out("train.csv"), &history.iter().map(EpochRow::from).collect::<Vec<_>>(), true)?;
        let last = history.last();
        let row = DaggerRow {
            round,
            scenarios: d.scenarios_per_round,
            records: added,
            failures,
            solve_iterations: iterations,
            train_loss: last.map_or(f64::NAN, |h| h.train.total),
            g_sim: last.and_then(|h| h.val).map_or(f64::NAN, |m| m.g_sim),
        };
        log::info!("dagger round {round}: {added} records, {failures} failures, dagger counts {:?}", data.manifest.train.dagger + data.manifest.val.dagger);
        write_csv(&run.out("dagger.csv"), std::slice::from_ref(&row), round > 0)?;
        rows.push(row);
        state.rounds_done = round + 1;
        fs::write(&state_path, serde_json::to_string(&state).expect("state serializes")).map_err(|e| CliError::io(&state_path, e))?;
    }
    Ok(rows)
}

/// One benchmark or solve row.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ResultRow {
    pub scenario: String,
    pub method: String,
    pub dofs: usize,
    pub wall_time_s: f64,
    pub l2_error: f64,
    pub rel_energy_error: f64,
    pub energy: f64,
    pub status: String,
}

pub fn fidelity_name(r: MeshResolution) -> String {
    format!("fea-{}x{}", r.pore, r.min_mesh)
}

pub fn scenario_assembly(run: &Run, s: &ResolvedScenario) -> Result<Assembly, CliError> {
    Ok(build_assembly(s.xi.clone(), s.grid, run.config.per_edge, run.config.component_side(), s.bc)?)
}

/// FEA at every fidelity of `s`, in ladder order; failed baselines are `None`.
pub fn fea_ladder(run: &Run, s: &ResolvedScenario, asm: &Assembly) -> Result<Vec<Option<FeaReference>>, CliError> {
    let c = &run.config;
    let pool = run.pool()?;
    let out: Vec<Result<Option<FeaReference>, ComposerError>> = pool.install(|| {
        s.fidelities
            .par_iter()
            .map(|&res| match fea_reference(asm, c.labeler.pores_per_side, c.material, res, &s.schedule, c.labeler.residual_tol) {
                Ok(r) => {
                    log::info!("{} {}: winner {:?}, {:.3} s, {} schedules tried", s.name, fidelity_name(res), r.winner, r.wall_time_s, r.attempts.len());
                    Ok(Some(r))
                }
                Err(ComposerError::BaselineFailed { .. }) => {
                    log::warn!("{} {}: every schedule failed", s.name, fidelity_name(res));
                    Ok(None)
                }
                Err(e) => Err(e),
            })
            .collect()
    });
    out.into_iter().map(|r| r.map_err(CliError::from)).collect()
}

/// Full-domain FEA at each fidelity of each scenario.
pub fn solve_fea(run: &Run, scenarios: &[ResolvedScenario]) -> Result<Vec<ResultRow>, CliError> {
    run.prepare()?;
    let mut rows = Vec::new();
    for s in scenarios {
        let asm = scenario_assembly(run, s)?;
        for (res, r) in s.fidelities.iter().zip(fea_ladder(run, s, &asm)?) {
            rows.push(match r {
                Some(r) => ResultRow {
                    scenario: s.name.clone(),
                    method: fidelity_name(*res),
                    dofs: r.mesh_dofs,
                    wall_time_s: r.wall_time_s,
                    l2_error: f64::NAN,
                    rel_energy_error: f64::NAN,
                    energy: r.energy,
                    status: "ok".into(),
                },
                None => failed_row(&s.name, fidelity_name(*res)),
            });
        }
    }
    write_csv(&run.out("solve-fea.csv"), &rows, false)?;
    Ok(rows)
}

fn failed_row(scenario: &str, method: String) -> ResultRow {
    ResultRow { scenario: scenario.into(), method, dofs: 0, wall_time_s: f64::NAN, l2_error: f64::NAN, rel_energy_error: f64::NAN, energy: f64::NAN, status: "failed".into() }
}

/// Composed surrogate solve of one scenario: (row without errors, solution).
pub fn ces_solve(run: &Run, params: &SurrogateParams<f64>, s: &ResolvedScenario, asm: &Assembly) -> (ResultRow, Vec<f64>) {
    let t = Instant::now();
    let r = solve_composed(asm, params, &run.config.benchmark.lbfgs);
    let wall = t.elapsed().as_secs_f64();
    log::info!("{} ces: {} iterations, converged {}, energy {:.6e}, {wall:.3} s", s.name, r.iterations, r.converged, r.energy);
    let status = if r.converged { "ok" } else { "not-converged" };
    let row = ResultRow {
        scenario: s.name.clone(),
        method: "ces".into(),
        dofs: asm.n_dofs(),
        wall_time_s: wall,
        l2_error: f64::NAN,
        rel_energy_error: f64::NAN,
        energy: r.energy,
        status: status.into(),
    };
    (row, r.solution)
}

pub fn solve_ces(run: &Run, scenarios: &[ResolvedScenario]) -> Result<Vec<ResultRow>, CliError> {
    run.prepare()?;
    let trainer = run.load_trainer()?;
    let mut rows = Vec::new();
    for s in scenarios {
        let asm = scenario_assembly(run, s)?;
        rows.push(ces_solve(run, &trainer.params, s, &asm).0);
    }
    write_csv(&run.out("solve-ces.csv"), &rows, false)?;
    Ok(rows)
}

/// CES and the FEA ladder on each scenario, scored against the finest fidelity.
pub fn benchmark(run: &Run, scenarios: &[ResolvedScenario]) -> Result<Vec<ResultRow>, CliError> {
    run.prepare()?;
    let trainer = run.load_trainer()?;
    let mut rows = Vec::new();
    for s in scenarios {
        let asm = scenario_assembly(run, s)?;
        let ladder = fea_ladder(run, s, &asm)?;
        let truth = ladder.last().and_then(|r| r.as_ref());
        let score = |row: &mut ResultRow, control: &[f64], energy: f64| match truth {
            Some(t) => {
                let c = compare(&asm, control, energy, &t.control, t.energy);
                row.l2_error = c.l2_error;
                row.rel_energy_error = c.rel_energy_error;
            }
            None => row.status = "no-reference".into(),
        };
        let (mut ces, sol) = ces_solve(run, &trainer.params, s, &asm);
        let e = ces.energy;
        score(&mut ces, &sol, e);
        rows.push(ces);
        for (res, r) in s.fidelities.iter().zip(&ladder) {
            let row = match r {
                Some(r) => {
                    let mut row = ResultRow {
                        scenario: s.name.clone(),
                        method: fidelity_name(*res),
                        dofs: r.mesh_dofs,
                        wall_time_s: r.wall_time_s,
                        l2_error: f64::NAN,
                        rel_energy_error: f64::NAN,
                        energy: r.energy,
                        status: "ok".into(),
                    };
                    score(&mut row, &r.control, r.energy);
                    row
                }
                None => failed_row(&s.name, fidelity_name(*res)),
            };
            rows.push(row);
        }
    }
    write_csv(&run.out("results.csv"), &rows, false)?;
    Ok(rows)
}

/// Runs the invariant suite; fails with a validation error if any check fails.
pub fn validate(run: &Run) -> Result<Vec<Check>, CliError> {
    let checks = invariant_suite(run.config.material);
    for c in &checks {
        println!("{}", c.line());
    }
    let failed: Vec<usize> = checks.iter().filter(|c| !c.passed).map(|c| c.criterion).collect();
    if failed.is_empty() {
        Ok(checks)
    } else {
        Err(CliError::Validation(format!("invariant checks failed: {failed:?}")))
    }
}
