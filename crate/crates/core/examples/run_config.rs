//! Loads a TOML config (default: the shipped protocol example) and prints the series.

use std::path::PathBuf;

use blochlab::experiments::{self, ExperimentConfig, RunOptions};

fn main() -> blochlab::Result<()> {
    let path = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| {
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs/index_protocol.toml")
    });
    let c = ExperimentConfig::from_path(&path)?;
    let s = experiments::run(&c, &RunOptions::default())?;
    s.write_csv(std::io::stdout().lock())?;
    println!("all checks passed: {}", s.passed());
    Ok(())
}
