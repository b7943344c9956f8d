mod config;
mod run;

use anyhow::{Context, Result};
use clap::Parser;
use config::{Cli, ExperimentConfig};
use std::process::ExitCode;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

fn execute(cli: &Cli) -> Result<()> {
    let cfg = ExperimentConfig::from_cli(cli)?;
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads.max(1))
            .build_global()
            .context("threads: could not build worker pool")?;
    }
    let outcome = run::run(&cfg)?;
    match &cfg.output {
        Some(path) => {
            std::fs::write(path, &outcome.data).with_context(|| format!("output: cannot write {}", path.display()))?;
            let manifest_path = run::manifest_path(path);
            std::fs::write(&manifest_path, &outcome.manifest)
                .with_context(|| format!("output: cannot write {}", manifest_path.display()))?;
            for line in &outcome.summary {
                println!("{line}");
            }
            println!("wrote {}", path.display());
        }
        None => {
            for line in &outcome.summary {
                eprintln!("{line}");
            }
            print!("{}", outcome.data);
        }
    }
    Ok(())
}
