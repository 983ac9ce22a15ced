use std::fs;
use std::path::Path;
use std::process::Command;

use ces_cli::commands::{self, DaggerRow, EpochRow, ResultRow};
use ces_cli::scenario::read_scenarios;
use ces_cli::{Run, RunConfig};
use ces_core::geometry::MeshResolution;

/// A run small enough for a test: six HMC samples on a coarse mesh and a narrow network.
fn tiny(dir: &Path) -> RunConfig {
    let mut c = RunConfig { output: dir.to_path_buf(), ..Default::default() };
    c.labeler.resolution = MeshResolution::new(8, 2);
    c.collect.collectors = 2;
    c.collect.samples_per_collector = 3;
    c.surrogate.width = 16;
    c.train.epochs = 2;
    c.train.batch = 4;
    c.dagger.rounds = 1;
    c.dagger.scenarios_per_round = 1;
    c.dagger.iterates = 2;
    c.dagger.epochs_per_round = 1;
    c.dagger.max_strain = 0.05;
    c.benchmark.fidelities = vec![MeshResolution::new(8, 2), MeshResolution::new(8, 3)];
    c
}

fn bytes(dir: &Path, name: &str) -> Vec<u8> {
    fs::read(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn ces(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_ces")).args(args).env_remove("CES_WORKERS").output().expect("binary runs")
}

#[test]
fn collect_is_reproducible_and_idempotent() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ra = Run::new(tiny(a.path())).unwrap();
    let rb = Run::new(tiny(b.path())).unwrap();
    let ma = commands::collect(&ra).unwrap();
    let mb = commands::collect(&rb).unwrap();
    assert_eq!(ma, mb);
    assert!(ma.train.total() + ma.val.total() >= 2);
    for f in ["data/train.bin", "data/val.bin", "data/manifest.txt"] {
        assert_eq!(bytes(a.path(), f), bytes(b.path(), f), "{f}");
    }
    let before = bytes(a.path(), "data/train.bin");
    assert_eq!(commands::collect(&ra).unwrap(), ma);
    assert_eq!(bytes(a.path(), "data/train.bin"), before);
    assert_eq!(fs::read_to_string(a.path().join("config.toml")).unwrap(), ra.text);
}

#[test]
fn training_writes_the_epoch_csv_and_resumes_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let run = Run::new(tiny(dir.path())).unwrap();
    commands::collect(&run).unwrap();
    commands::train(&run, false).unwrap();
    let csv = fs::read_to_string(dir.path().join("train.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "epoch,l0,l1,l2,E_pct_err,G_sim,Hvp_sim");
    let rows: Vec<EpochRow> = commands::read_csv(&dir.path().join("train.csv")).unwrap();
    assert_eq!(rows.iter().map(|r| r.epoch).collect::<Vec<_>>(), vec![0, 1]);
    let straight = bytes(dir.path(), "checkpoint.bin");

    let mut half = tiny(dir.path());
    half.train.epochs = 1;
    commands::train(&Run::new(half).unwrap(), false).unwrap();
    commands::train(&run, true).unwrap();
    assert_eq!(bytes(dir.path(), "checkpoint.bin"), straight);
    let rows: Vec<EpochRow> = commands::read_csv(&dir.path().join("train.csv")).unwrap();
    assert_eq!(rows.len(), 2);

    commands::train(&run, false).unwrap();
    assert_eq!(bytes(dir.path(), "checkpoint.bin"), straight);
}

#[test]
fn dagger_appends_labeled_iterates_once() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny(dir.path());
    cfg.dagger.rounds = 0;
    let run = Run::new(cfg.clone()).unwrap();
    commands::collect(&run).unwrap();
    commands::train(&run, false).unwrap();
    let before = bytes(dir.path(), "data/manifest.txt");
    assert!(commands::dagger(&run).unwrap().is_empty());
    assert_eq!(bytes(dir.path(), "data/manifest.txt"), before);

    cfg.dagger.rounds = 1;
    let run = Run::new(cfg).unwrap();
    let m0 = run.dataset().read_manifest().unwrap();
    let rows = commands::dagger(&run).unwrap();
    assert_eq!(rows.len(), 1);
    let m1 = run.dataset().read_manifest().unwrap();
    let added = m1.train.total() + m1.val.total() - m0.train.total() - m0.val.total();
    assert_eq!(added, rows[0].records);
    assert_eq!(m1.train.dagger + m1.val.dagger, rows[0].records);
    let components = run.config.dagger.grid * run.config.dagger.grid;
    assert!(rows[0].records + rows[0].failures <= run.config.dagger.iterates * components);
    assert!(rows[0].records > 0);

    // a finished schedule is not rerun, and collect ignores DAgger records
    let after = bytes(dir.path(), "data/manifest.txt");
    assert!(commands::dagger(&run).unwrap().is_empty());
    commands::collect(&run).unwrap();
    assert_eq!(bytes(dir.path(), "data/manifest.txt"), after);
    let logged: Vec<DaggerRow> = commands::read_csv(&dir.path().join("dagger.csv")).unwrap();
    assert_eq!(logged, rows);
}

#[test]
fn benchmark_scores_against_the_finest_mesh() {
    let dir = tempfile::tempdir().unwrap();
    let run = Run::new(tiny(dir.path())).unwrap();
    commands::collect(&run).unwrap();
    commands::train(&run, false).unwrap();
    let text = "[[scenario]]\nname = \"circle\"\ngrid = 1\nstrain = 0.05\nmode = \"compression\"\n";
    let scenarios = read_scenarios(text, Path::new("s.toml"), &run.config).unwrap();
    let rows = commands::benchmark(&run, &scenarios).unwrap();
    let csv = fs::read_to_string(dir.path().join("results.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "scenario,method,dofs,wall_time_s,l2_error,rel_energy_error,energy,status");
    assert_eq!(rows.iter().map(|r| r.method.as_str()).collect::<Vec<_>>(), vec!["ces", "fea-8x2", "fea-8x3"]);
    let finest = &rows[2];
    assert_eq!((finest.l2_error, finest.rel_energy_error), (0.0, 0.0));
    assert_eq!(rows[0].dofs, 72);
    assert!(rows[1].l2_error > 0.0 && rows[0].l2_error.is_finite());
    let reread: Vec<ResultRow> = commands::read_csv(&dir.path().join("results.csv")).unwrap();
    assert_eq!(reread.len(), 3);

    let fea = commands::solve_fea(&run, &scenarios).unwrap();
    assert_eq!(fea.len(), 2);
    assert_eq!(fea[1].energy, finest.energy);
    let solved = commands::solve_ces(&run, &scenarios).unwrap();
    assert_eq!(solved[0].energy, rows[0].energy);
}

#[test]
fn invalid_inputs_exit_with_code_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("ces.toml");
    let out = dir.path().join("out");
    fs::write(&cfg, format!("output = {out:?}\n[geometry]\nalpha_range = [0.4, 0.5]\n")).unwrap();
    let r = ces(&["--config", cfg.to_str().unwrap(), "collect"]);
    assert_eq!(r.status.code(), Some(1), "{}", String::from_utf8_lossy(&r.stderr));
    assert!(!out.join("data").exists());

    fs::write(&cfg, "seed = 1\nper_edge = \"ten\"\n").unwrap();
    let r = ces(&["--config", cfg.to_str().unwrap(), "collect"]);
    assert_eq!(r.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&r.stderr).contains("ces.toml:2"));

    let r = ces(&["--config", dir.path().join("missing.toml").to_str().unwrap(), "validate"]);
    assert_eq!(r.status.code(), Some(3));

    fs::write(&cfg, format!("output = {out:?}\n")).unwrap();
    let bad = dir.path().join("s.toml");
    fs::write(&bad, "[[scenario]]\ngrid = 1\nxi = [[0.5, 0.0]]\nstrain = 0.1\nmode = \"tension\"\n").unwrap();
    let r = ces(&["--config", cfg.to_str().unwrap(), "solve-fea", "-s", bad.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(1), "{}", String::from_utf8_lossy(&r.stderr));
}

#[test]
fn training_without_data_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let run = Run::new(tiny(dir.path())).unwrap();
    run.dataset().init().unwrap();
    assert_eq!(commands::train(&run, false).unwrap_err().exit_code(), 1);
}

#[test]
fn example_files_parse() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../..");
    let text = fs::read_to_string(root.join("ces.example.toml")).unwrap();
    let config = RunConfig::from_toml(&text, Path::new("ces.example.toml")).unwrap();
    assert_eq!(config, RunConfig::default());
    let text = fs::read_to_string(root.join("scenarios.example.toml")).unwrap();
    let s = read_scenarios(&text, Path::new("scenarios.example.toml"), &config).unwrap();
    assert_eq!(s.len(), 3);
    assert_eq!(s[1].xi.len(), 4);
    assert_eq!(s[2].xi.len(), 9);
}
