use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;
use ssmlab::verify::{Suite, DEFAULT_SEED};
use ssmlab_cli::sweep::{run_sweep, Override};
use ssmlab_cli::{pipeline, reports, CliError, ExperimentConfig};

#[derive(Parser)]
#[command(name = "ssmlab", version, about = "Teacher-student experiments with diagonal state space models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every seed of a config; writes CSV trajectories and a summary JSON.
    Run {
        config: PathBuf,
        #[arg(long, default_value = "results")]
        out_dir: PathBuf,
    },
    /// Run an invariant suite and print its JSON report.
    Verify {
        #[arg(value_parser = parse_suite)]
        suite: Suite,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
    },
    /// Cartesian product of overrides (seeds, d, kappa, base_lr) over a config.
    Sweep {
        config: PathBuf,
        /// `key=v1,v2,...`; may be repeated.
        #[arg(long = "set")]
        set: Vec<String>,
        #[arg(long, default_value = "results")]
        out_dir: PathBuf,
    },
    /// Saddle point of the poisoned loss on the diagonal, with Hessian eigenvalues.
    SaddleReport {
        #[arg(long)]
        d: usize,
        #[arg(long = "L")]
        l: usize,
    },
    /// Zero-loss student that deviates from the teacher beyond the training length.
    Adversarial {
        #[arg(long)]
        kappa: usize,
        #[arg(long)]
        d: usize,
        #[arg(long)]
        eps: f64,
    },
}

fn parse_suite(s: &str) -> Result<Suite, String> {
    s.parse().map_err(|e: ssmlab::SsmError| e.to_string())
}

fn print_json<T: Serialize>(v: &T) {
    println!("{}", serde_json::to_string_pretty(v).expect("report serializes"));
}

fn execute(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Run { config, out_dir } => {
            let cfg = ExperimentConfig::load(&config)?;
            let (_, path) = pipeline::run_config(&cfg, &out_dir)?;
            eprintln!("wrote {}", path.display());
        }
        Command::Verify { suite, seed } => {
            let report = reports::verify(suite, seed)?;
            print_json(&report);
            if !report.passed {
                let names: Vec<&str> = report.failures().map(|c| c.name.as_str()).collect();
                return Err(CliError::VerifyFailed(format!("{suite}: {}", names.join(", "))));
            }
        }
        Command::Sweep { config, set, out_dir } => {
            let cfg = ExperimentConfig::load(&config)?;
            let overrides = set.iter().map(|s| s.parse::<Override>()).collect::<Result<Vec<_>, _>>()?;
            let (_, path) = run_sweep(&cfg, &overrides, &out_dir)?;
            eprintln!("wrote {}", path.display());
        }
        Command::SaddleReport { d, l } => print_json(&reports::saddle_report(d, l)?),
        Command::Adversarial { kappa, d, eps } => print_json(&reports::adversarial(kappa, d, eps)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
