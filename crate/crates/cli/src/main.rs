use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use tlkit::job::{run_job, JobConfig};
use tlkit::sweep::with_threads;

/// Runs a tlkit verification job and prints a JSON report.
#[derive(Debug, Parser)]
#[command(name = "tlkit", version, about)]
struct Args {
    /// Job description (JSON).
    #[arg(long, value_name = "PATH")]
    config: PathBuf,

    /// Write the JSON report here instead of standard output.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,

    /// Replace the configured seed list with this single seed.
    #[arg(long)]
    seed: Option<u64>,

    /// Suppress the human-readable summary on standard error.
    #[arg(long)]
    json_only: bool,

    /// Override the pass threshold for relative residuals.
    #[arg(long, value_name = "FLOAT")]
    tol: Option<f64>,

    /// Number of worker threads for independent seeds.
    #[arg(long, value_name = "K")]
    parallel: Option<usize>,
}

const EXIT_FAILED: u8 = 1;
const EXIT_INVALID: u8 = 2;

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("tlkit: {msg}");
            ExitCode::from(EXIT_INVALID)
        }
    }
}

fn run(args: &Args) -> Result<ExitCode, String> {
    let text = fs::read_to_string(&args.config).map_err(|e| format!("cannot read {}: {e}", args.config.display()))?;
    let mut config = JobConfig::from_json(&text).map_err(|e| e.to_string())?;
    if let Some(seed) = args.seed {
        config.seeds = vec![seed];
    }
    if let Some(tol) = args.tol {
        config.tolerances = config.tolerances.with_eps_rel(tol);
    }
    let report = match args.parallel {
        Some(k) => with_threads(k, || run_job(&config)).map_err(|e| e.to_string())?,
        None => run_job(&config),
    }
    .map_err(|e| e.to_string())?;

    let json = report.to_json();
    match &args.out {
        Some(path) => {
            fs::write(path, format!("{json}\n")).map_err(|e| format!("cannot write {}: {e}", path.display()))?
        }
        None => println!("{json}"),
    }
    if !args.json_only {
        eprint!("{}", report.summary());
    }
    Ok(if report.pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_FAILED)
    })
}
