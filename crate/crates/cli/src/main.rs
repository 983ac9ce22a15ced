use std::path::PathBuf;
use std::process::ExitCode;

use ces_cli::commands::{self, Run};
use ces_cli::scenario::{benchmark_scenarios, read_scenarios, ResolvedScenario};
use ces_cli::CliError;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "ces", version, about = "Composable energy surrogates for cellular meta-materials")]
struct Cli {
    /// Run configuration (TOML).
    #[arg(short, long, global = true, default_value = "ces.toml")]
    config: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Collect the initial dataset with parallel HMC collectors.
    Collect,
    /// Train the surrogate on the collected dataset.
    Train {
        /// Continue from the saved checkpoint.
        #[arg(long)]
        resume: bool,
        /// Run the feature ablation grid instead.
        #[arg(long)]
        ablate: bool,
    },
    /// Aggregate surrogate-visited states and retrain.
    Dagger,
    /// Full-domain FEA over the fidelity ladder.
    SolveFea {
        #[arg(short, long)]
        scenario: PathBuf,
    },
    /// Composed surrogate solve.
    SolveCes {
        #[arg(short, long)]
        scenario: PathBuf,
    },
    /// CES against the FEA ladder; writes results.csv.
    Benchmark {
        /// Scenario file; defaults to the [benchmark] section.
        #[arg(short, long)]
        scenario: Option<PathBuf>,
    },
    /// Train every feature ablation; writes ablation.csv.
    Ablate,
    /// Run the invariant suite.
    Validate,
}

fn scenarios(path: &PathBuf, run: &Run) -> Result<Vec<ResolvedScenario>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    read_scenarios(&text, path, &run.config)
}

fn print_rows(rows: &[commands::ResultRow]) {
    println!("scenario,method,dofs,wall_time_s,l2_error,rel_energy_error,energy,status");
    for r in rows {
        println!("{},{},{},{},{},{},{},{}", r.scenario, r.method, r.dofs, r.wall_time_s, r.l2_error, r.rel_energy_error, r.energy, r.status);
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let run = Run::load(&cli.config)?;
    match cli.command {
        Command::Collect => {
            let m = commands::collect(&run)?;
            println!("{}", serde_json::to_string_pretty(&m).expect("manifest serializes"));
        }
        Command::Train { ablate: true, .. } | Command::Ablate => {
            let rows = commands::ablate(&run)?;
            println!("variant,train_loss,E_pct_err,G_sim,Hvp_sim");
            for r in rows {
                println!("{},{:.5},{:.2},{:.4},{:.4}", r.variant, r.train_loss, r.e_pct_err, r.g_sim, r.hvp_sim);
            }
        }
        Command::Train { resume, .. } => {
            let h = commands::train(&run, resume)?;
            if let Some(last) = h.last() {
                println!("epoch {} loss {:.5} val {:?}", last.epoch, last.train.total, last.val);
            }
        }
        Command::Dagger => {
            for r in commands::dagger(&run)? {
                println!("round {}: {} records, {} failures, loss {:.5}", r.round, r.records, r.failures, r.train_loss);
            }
        }
        Command::SolveFea { scenario } => print_rows(&commands::solve_fea(&run, &scenarios(&scenario, &run)?)?),
        Command::SolveCes { scenario } => print_rows(&commands::solve_ces(&run, &scenarios(&scenario, &run)?)?),
        Command::Benchmark { scenario } => {
            let list = match scenario {
                Some(p) => scenarios(&p, &run)?,
                None => benchmark_scenarios(&run.config)?,
            };
            print_rows(&commands::benchmark(&run, &list)?);
        }
        Command::Validate => {
            commands::validate(&run)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
