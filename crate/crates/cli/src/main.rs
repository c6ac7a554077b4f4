use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use rowfault_cli::{run, with_jobs, ExperimentConfig, Scenario};

/// Runs one simulated experiment and writes its report and artifacts.
#[derive(Debug, Parser)]
#[command(name = "rowfault-lab", version)]
struct Args {
    scenario: Scenario,
    /// TOML file with per-scenario parameter tables; defaults apply when
    /// omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the seed in the config file (default 0).
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
    /// Worker threads for parallel scoring.
    #[arg(long)]
    jobs: Option<usize>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    match execute(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn execute(args: &Args) -> anyhow::Result<()> {
    let cfg = match &args.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    let seed = args.seed.or(cfg.seed).unwrap_or(0);
    let result = with_jobs(args.jobs, || run(&cfg, args.scenario, seed))??;
    let written = result.write(&args.out)?;
    println!("{}", serde_json::to_string_pretty(&result.report.metrics)?);
    eprintln!(
        "{} seed {} finished in {:.2}s; {} files in {}",
        args.scenario,
        seed,
        result.report.wall_time.as_secs_f64(),
        written.len(),
        args.out.display()
    );
    Ok(())
}
