//! Command-line driver: `run`, `theory`, `validate`, `gen-data`.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use flate2::write::GzEncoder;
use flate2::Compression;

use loscar::data::{generate_synthetic, write_libsvm, SyntheticSpec};
use loscar::metrics::write_atomic;
use loscar::suite::{run_suite, theory_report};
use loscar::{load_config, Error};

const EXIT_INVALID: u8 = 1;
const EXIT_DIVERGED: u8 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "loscar",
    version,
    about = "Local SGD with overlapped sparse averaging, simulated in logical time"
)]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run every (method, seed) pair of a config or manifest.
    Run { config: PathBuf },
    /// Print bound constants, rate terms and complexities as JSON.
    Theory { config: PathBuf },
    /// Check a config and print the derived quantities.
    Validate { config: PathBuf },
    /// Generate a synthetic LIBSVM dataset from a TOML spec.
    GenData {
        spec: PathBuf,
        /// Output file (`.gz` compresses); stdout when omitted.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).init();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(Error::Invalid(issues)) => {
            eprintln!("invalid configuration:");
            for issue in issues {
                eprintln!("  {issue}");
            }
            ExitCode::from(EXIT_INVALID)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_INVALID)
        }
    }
}

fn dispatch(command: Command) -> loscar::Result<ExitCode> {
    match command {
        Command::Run { config } => {
            let rc = load_config(&config)?;
            let report = run_suite(&rc)?;
            for run in &report.runs {
                let loss = run
                    .final_train_loss
                    .map(|l| format!("{l:.6}"))
                    .unwrap_or_else(|| "-".into());
                println!(
                    "{:<26} seed {:<6} rounds {:<6} final train loss {loss}  {:?}",
                    run.method.name(),
                    run.seed,
                    run.rounds_completed,
                    run.status
                );
            }
            println!("manifest: {}", report.manifest.display());
            Ok(if report.any_diverged() {
                ExitCode::from(EXIT_DIVERGED)
            } else {
                ExitCode::SUCCESS
            })
        }
        Command::Theory { config } => {
            let rc = load_config(&config)?;
            let report = theory_report(&rc)?;
            println!(
                "{}",
                serde_json::to_string_pretty(&report).expect("theory report serializes")
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate { config } => {
            let rc = load_config(&config)?;
            println!("ok: d={} K={} n={}", rc.d, rc.k, rc.plan.workers());
            println!(
                "tau={} N={:?} Q={:?} H={:?} round duration={}",
                rc.plan.tau,
                rc.plan.n,
                rc.plan.q,
                rc.plan.h,
                rc.plan.round_duration()
            );
            for s in &rc.schedules {
                println!(
                    "{:<26} steps/round {:?} duration {}",
                    s.method.name(),
                    (0..s.workers()).map(|i| s.steps(i)).collect::<Vec<_>>(),
                    s.duration
                );
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::GenData { spec, output } => {
            let text = std::fs::read_to_string(&spec).map_err(|e| Error::Io {
                path: spec.clone(),
                source: e,
            })?;
            let spec: SyntheticSpec =
                toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
            let text = write_libsvm(&generate_synthetic(&spec)?);
            match output {
                None => {
                    let mut out = std::io::stdout().lock();
                    out.write_all(text.as_bytes()).map_err(|e| Error::Io {
                        path: PathBuf::from("<stdout>"),
                        source: e,
                    })?;
                }
                Some(path) => write_dataset(&path, &text)?,
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn write_dataset(path: &Path, text: &str) -> loscar::Result<()> {
    let io = |e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    };
    let bytes = if path.extension().is_some_and(|e| e == "gz") {
        let mut enc = GzEncoder::new(Vec::new(), Compression::default());
        enc.write_all(text.as_bytes()).map_err(io)?;
        enc.finish().map_err(io)?
    } else {
        text.as_bytes().to_vec()
    };
    write_atomic(path, &bytes)
}
