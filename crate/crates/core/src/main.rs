use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use blochlab::experiments::acceptance::Acceptance;
use blochlab::experiments::{self, ExperimentConfig, RunOptions, PRESETS};

#[derive(Debug, Parser)]
#[command(name = "blochlab", version, about = "Persistent-current experiments on lattice fermion models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// CSV output path (overrides the config's `output`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; 0 or unset uses all cores.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Multiplies every absolute tolerance.
    #[arg(long, global = true, default_value_t = 1.0)]
    tol_scale: f64,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a TOML config file or a preset name.
    Run { config: String },
    /// List the named presets.
    ListPresets,
    /// Run the numbered acceptance checks (all, or the given ids).
    Accept { ids: Vec<u8> },
}

fn load(config: &str) -> blochlab::Result<ExperimentConfig> {
    let path = PathBuf::from(config);
    if path.exists() {
        ExperimentConfig::from_path(&path)
    } else {
        ExperimentConfig::preset(config)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if !(cli.tol_scale > 0.0) {
        eprintln!("error: --tol-scale must be positive");
        return ExitCode::from(2);
    }
    let opts = RunOptions { tol_scale: cli.tol_scale, workers: cli.workers };
    match cli.command {
        Command::ListPresets => {
            for (name, description) in PRESETS {
                println!("{name:<16} {description}");
            }
            ExitCode::SUCCESS
        }
        Command::Run { config } => {
            let result = load(&config).and_then(|c| {
                log::info!("running {}", c.experiment);
                let series = experiments::run_to_file(&c, &opts, cli.out.as_deref())?;
                if cli.out.is_none() && c.output.is_none() {
                    series.write_csv(std::io::stdout().lock())?;
                }
                Ok(series)
            });
            match result {
                Ok(series) => {
                    for c in &series.checks {
                        eprintln!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
                    }
                    if series.passed() {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::FAILURE
                    }
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(2)
                }
            }
        }
        Command::Accept { ids } => {
            let run = || {
                let a = Acceptance::new(cli.tol_scale);
                let ids: Vec<u8> = if ids.is_empty() {
                    experiments::acceptance::CRITERIA.iter().map(|c| c.0).collect()
                } else {
                    ids
                };
                let mut ok = true;
                for id in ids {
                    let r = a.run(id);
                    println!("{r}");
                    ok &= r.passed;
                }
                ok
            };
            let ok = match cli.workers {
                Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
                    Ok(pool) => pool.install(run),
                    Err(e) => {
                        eprintln!("error: {e}");
                        return ExitCode::from(2);
                    }
                },
                None => run(),
            };
            if ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
