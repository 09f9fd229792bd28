use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use skylane::cognition::BackendMode;
use skylane::ScenarioConfig;
use skylane_runner::sweep::{run_sweep, write_sweep, SweepSpec, Variant};
use skylane_runner::{plots, run, RunError};

#[derive(Parser)]
#[command(
    name = "skylane",
    version,
    about = "Hierarchical UAV traffic and connectivity simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// Scenario TOML file. Built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dotted-path override, e.g. `airspace.num_uavs=10`. Repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Backend for the semantic tiers.
    #[arg(long, value_parser = ["rule", "mock", "llm"])]
    backend: Option<String>,
    /// Root seed. Defaults to the config's seed.
    #[arg(long)]
    seed: Option<u64>,
}

impl ConfigArgs {
    fn load(&self) -> Result<ScenarioConfig, RunError> {
        let mut cfg = match &self.config {
            Some(p) => ScenarioConfig::load(p)?,
            None => ScenarioConfig::default(),
        };
        for o in &self.overrides {
            let (k, v) = o.split_once('=').ok_or_else(|| RunError::Config {
                path: o.clone(),
                reason: "override must look like key=value".into(),
            })?;
            cfg.apply_override(k.trim(), v.trim())?;
        }
        if let Some(b) = &self.backend {
            cfg.backend.mode = b
                .parse::<BackendMode>()
                .map_err(|reason| RunError::Config {
                    path: "backend.mode".into(),
                    reason,
                })?;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured number of episodes and write logs.
    Run {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Cross fleet sizes, seeds and architecture variants.
    Sweep {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Worker threads.
        #[arg(long, default_value_t = 1)]
        workers: usize,
        /// Fleet sizes.
        #[arg(long, value_delimiter = ',', default_values_t = [5usize, 10, 15, 20, 25, 30])]
        fleet: Vec<usize>,
        /// Seeds per cell, counted up from the root seed.
        #[arg(long, default_value_t = 3)]
        seeds: u64,
        #[arg(long, value_delimiter = ',', default_values = ["full", "no-memory", "no-meta"])]
        variants: Vec<Variant>,
    },
    /// Render SVG plots from run or sweep CSVs.
    Plot {
        #[arg(required = true)]
        csv: Vec<PathBuf>,
        #[arg(long, default_value = "plots")]
        out: PathBuf,
    },
    /// Load, override and validate a config without running it.
    ValidateConfig {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Print the default config as TOML, or write it to `--out`.
    DumpDefaults {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn execute(cli: Cli) -> Result<(), RunError> {
    match cli.command {
        Command::Run { cfg, out } => {
            let c = cfg.load()?;
            let summaries = run(&c, c.seed, Some(&out))?;
            for s in &summaries {
                println!(
                    "episode {} steps {} r_tran {:.3} r_tele {:.3} handovers {} collisions {} capacity_violation {:.3}",
                    s.episode, s.steps, s.total_r_tran, s.total_r_tele, s.handovers, s.collisions, s.capacity_violation_fraction
                );
            }
            println!("logs written to {}", out.display());
        }
        Command::Sweep {
            cfg,
            out,
            workers,
            fleet,
            seeds,
            variants,
        } => {
            let c = cfg.load()?;
            let spec = SweepSpec {
                fleet_sizes: fleet,
                seeds: (0..seeds).map(|i| c.seed + i).collect(),
                variants,
            };
            let (cells, rows) = run_sweep(&c, &spec, workers)?;
            write_sweep(&out, &cells, &rows)?;
            let failed = cells.iter().filter(|c| c.result.is_err()).count();
            println!(
                "{} cells, {} failed; results in {}",
                cells.len(),
                failed,
                out.display()
            );
        }
        Command::Plot { csv, out } => {
            for p in plots::emit_plots(&csv, &out)? {
                println!("{}", p.display());
            }
        }
        Command::ValidateConfig { cfg } => {
            cfg.load()?;
            println!("config ok");
        }
        Command::DumpDefaults { out } => {
            let text = ScenarioConfig::default().to_toml_string()?;
            match out {
                Some(p) => std::fs::write(p, text)?,
                None => print!("{text}"),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
