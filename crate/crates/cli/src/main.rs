//! Command-line front end: `run`, `nash`, `compare-ls` and `certify`.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lqgame::config::Scenario;
use lqgame::harness::{
    certify_record, export_record, load_record, run_algorithm1, run_ls_comparison,
    sweep_ls_comparison, DataGain,
};
use lqgame::linalg;
use lqgame::Result;
use serde_json::json;

#[derive(Parser)]
#[command(
    name = "lqgame",
    version,
    about = "Robust adaptive control for two-player LQ games"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the adaptive loop and export the experiment record.
    Run {
        /// Scenario file, or a built-in name (`contact_robot`, `example2`).
        #[arg(long)]
        config: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        max_iters: Option<usize>,
    },
    /// Print the coupled-Riccati Nash gains of a scenario.
    Nash {
        #[arg(long)]
        config: String,
    },
    /// Compare the set-based robust gain with a least-squares design.
    CompareLs {
        #[arg(long)]
        config: String,
        #[arg(long, default_value_t = 9)]
        samples: usize,
        #[arg(long)]
        seed: Option<u64>,
        /// Number of consecutive seeds to sweep, starting at `--seed`.
        #[arg(long, default_value_t = 1)]
        sweep: u64,
        /// Controller generating the data batch: `nash` or `initial`.
        #[arg(long, default_value = "nash")]
        data_gain: DataGain,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recompute the ε certificate from a saved `summary.json`.
    Certify {
        #[arg(long)]
        record: PathBuf,
    },
}

fn load_scenario(name_or_path: &str) -> Result<Scenario> {
    let path = Path::new(name_or_path);
    if path.exists() {
        Scenario::from_file(path)
    } else {
        Scenario::builtin(name_or_path)
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            config,
            out,
            seed,
            max_iters,
        } => {
            let mut s = load_scenario(&config)?;
            if let Some(seed) = seed {
                s.seed = seed;
            }
            if let Some(n) = max_iters {
                s.algorithm.max_iterations = n;
            }
            let exp = run_algorithm1(&s)?;
            export_record(&exp.record, &exp.trajectory, &out)?;
            let term = exp.record.terminal.as_ref();
            let summary = json!({
                "iterations": exp.record.iterations.len() - 1,
                "k1_final": term.map(|t| &t.k1_final),
                "k1_star": term.map(|t| &t.k1_star),
                "gap_inf": term.map(|t| t.gap_inf),
                "stop_reason": term.map(|t| &t.stop_reason),
                "epsilon": term.and_then(|t| t.certificate.as_ref()).map(|c| c.epsilon),
                "out": out,
            });
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
        Command::Nash { config } => {
            let setup = load_scenario(&config)?.build()?;
            let n = &setup.nash;
            let summary = json!({
                "k1_star": linalg::to_rows(&n.k1_star),
                "k2_star": linalg::to_rows(&n.k2_star),
                "p1": linalg::to_rows(&n.p1),
                "p2": linalg::to_rows(&n.p2),
                "residuals": [n.residuals.0, n.residuals.1],
                "iterations": n.iterations,
            });
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
        Command::CompareLs {
            config,
            samples,
            seed,
            sweep,
            data_gain,
            out,
        } => {
            let s = load_scenario(&config)?;
            let first = seed.unwrap_or(s.seed);
            let records = if sweep <= 1 {
                vec![run_ls_comparison(&s, samples, first, data_gain)?]
            } else {
                let seeds: Vec<u64> = (first..first + sweep).collect();
                sweep_ls_comparison(&s, samples, &seeds, data_gain)
                    .into_iter()
                    .collect::<Result<Vec<_>>>()?
            };
            let rows: Vec<_> = records
                .iter()
                .map(|r| {
                    json!({
                        "seed": r.seed,
                        "vertices": r.vertices.len(),
                        "robust_all_stable": r.robust_all_stable,
                        "ls_all_stable": r.ls_all_stable,
                        "max_robust_abscissa": r.robust_abscissa.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                        "max_ls_abscissa": r.ls_abscissa.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                    })
                })
                .collect();
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir)?;
                std::fs::write(
                    dir.join("comparison.json"),
                    serde_json::to_string_pretty(&records)?,
                )?;
            }
            println!("{}", serde_json::to_string_pretty(&rows)?);
        }
        Command::Certify { record } => {
            let rec = load_record(&record)?;
            let cert = certify_record(&rec)?;
            println!("{}", serde_json::to_string_pretty(&cert)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
