//! Staggered hopping model on a 4×4 torus: slab current, bound and `tr(P J_−)`.

use blochlab::experiments::{self, ExperimentConfig, RunOptions};

fn main() -> blochlab::Result<()> {
    let c = ExperimentConfig::preset("torus-gapped")?;
    let s = experiments::run(&c, &RunOptions::default())?;
    s.write_csv(std::io::stdout().lock())?;
    for check in &s.checks {
        println!("{}: {}", check.name, if check.passed { "ok" } else { "violated" });
    }
    Ok(())
}
