//! Experiment driver for the skylane simulator: episode loop, logs,
//! seeded sweeps and plot emission.

pub mod backend;
pub mod episode;
pub mod plots;
pub mod sweep;

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use skylane::cognition::PolicyError;
use skylane::env::EnvError;
use skylane::{ConfigError, ScenarioConfig};

pub use backend::PolicySet;
pub use episode::{
    summarize_jsonl, Aggregator, EpisodeSummary, JsonlSink, MemorySink, MetaRecord, NullSink,
    Session, StepRecord, TraceSink,
};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("config error at `{path}`: {reason}")]
    Config { path: String, reason: String },
    #[error("simulation fault: {0}")]
    Simulation(String),
    #[error("backend: {0}")]
    Backend(#[from] PolicyError),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("plot: {0}")]
    Plot(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError::Config {
            path: e.path,
            reason: e.reason,
        }
    }
}

impl From<EnvError> for RunError {
    fn from(e: EnvError) -> Self {
        match e {
            EnvError::Config { path, reason } => RunError::Config { path, reason },
            other => RunError::Simulation(other.to_string()),
        }
    }
}

impl RunError {
    /// Process exit code: 2 for configuration problems, 3 for simulation
    /// faults, 1 for anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config { .. } => 2,
            RunError::Simulation(_) => 3,
            _ => 1,
        }
    }
}

/// Flat per-step row used by the profile plots.
#[derive(Debug, Clone, Serialize)]
pub struct StepRow {
    pub episode: usize,
    pub t: u64,
    pub time_s: f64,
    pub uav: usize,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub vx: f64,
    pub vy: f64,
    pub vz: f64,
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
    pub p: f64,
    pub q: f64,
    pub r: f64,
    pub serving: String,
    pub rate_mbps: f64,
    pub weighted_rate_mbps: f64,
    pub r_tran: f64,
    pub r_tele: f64,
    pub c_safe: f64,
    pub c_ho: f64,
}

impl StepRow {
    pub fn from_record(rec: &StepRecord, dt_s: f64) -> Self {
        Self {
            episode: rec.episode,
            t: rec.t,
            time_s: rec.t as f64 * dt_s,
            uav: rec.uav,
            x: rec.position_m[0],
            y: rec.position_m[1],
            z: rec.position_m[2],
            vx: rec.velocity_mps[0],
            vy: rec.velocity_mps[1],
            vz: rec.velocity_mps[2],
            roll: rec.euler_rad[0],
            pitch: rec.euler_rad[1],
            yaw: rec.euler_rad[2],
            p: rec.angular_rate_radps[0],
            q: rec.angular_rate_radps[1],
            r: rec.angular_rate_radps[2],
            serving: rec.serving.to_string(),
            rate_mbps: rec.link.rate_bps / 1e6,
            weighted_rate_mbps: rec.link.weighted_rate_bps / 1e6,
            r_tran: rec.reward.r_tran,
            r_tele: rec.reward.r_tele,
            c_safe: rec.reward.c_safe,
            c_ho: rec.reward.c_ho,
        }
    }
}

/// Writes `trajectory.jsonl`, `meta.jsonl` and `steps.csv` under a directory.
struct FileSink {
    jsonl: JsonlSink<BufWriter<File>>,
    steps_csv: csv::Writer<BufWriter<File>>,
    dt_s: f64,
}

impl TraceSink for FileSink {
    fn step(&mut self, rec: &StepRecord) -> io::Result<()> {
        self.jsonl.step(rec)?;
        self.steps_csv
            .serialize(StepRow::from_record(rec, self.dt_s))
            .map_err(io::Error::other)
    }
    fn meta(&mut self, rec: &MetaRecord) -> io::Result<()> {
        self.jsonl.meta(rec)
    }
}

fn create(path: &Path) -> io::Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

/// Run `cfg.episodes` episodes with the configured backend. With `out`,
/// writes the effective config, trajectory and decision logs, a per-step
/// CSV, a per-episode summary CSV and the final memory buffers.
pub fn run(
    cfg: &ScenarioConfig,
    seed: u64,
    out: Option<&Path>,
) -> Result<Vec<EpisodeSummary>, RunError> {
    cfg.validate()?;
    let policies = PolicySet::from_config(&cfg.backend)?;
    let mut session = Session::new(cfg, seed, policies)?;
    let mut summaries = Vec::with_capacity(cfg.episodes);
    match out {
        None => {
            for _ in 0..cfg.episodes {
                summaries.push(session.run_episode(&mut NullSink)?);
            }
        }
        Some(dir) => {
            fs::create_dir_all(dir)?;
            let mut effective = cfg.clone();
            effective.seed = seed;
            fs::write(dir.join("config.toml"), effective.to_toml_string()?)?;
            let mut sink = FileSink {
                jsonl: JsonlSink {
                    steps: create(&dir.join("trajectory.jsonl"))?,
                    meta: create(&dir.join("meta.jsonl"))?,
                },
                steps_csv: csv::Writer::from_writer(create(&dir.join("steps.csv"))?),
                dt_s: cfg.timing.dt_s,
            };
            let mut summary_csv = csv::Writer::from_writer(create(&dir.join("summary.csv"))?);
            for _ in 0..cfg.episodes {
                let s = session.run_episode(&mut sink)?;
                log::info!(
                    "episode {}: r_tran {:.2} r_tele {:.2} handovers {} collisions {} violations {:.3}",
                    s.episode,
                    s.total_r_tran,
                    s.total_r_tele,
                    s.handovers,
                    s.collisions,
                    s.capacity_violation_fraction
                );
                summary_csv.serialize(&s)?;
                summaries.push(s);
            }
            sink.jsonl.steps.flush()?;
            sink.jsonl.meta.flush()?;
            sink.steps_csv.flush()?;
            summary_csv.flush()?;

            let mem = dir.join("memory");
            fs::create_dir_all(&mem)?;
            for agent in session.agents() {
                agent
                    .memory()
                    .write_jsonl(create(&mem.join(format!("uav_{}.jsonl", agent.id())))?)?;
            }
            session
                .meta()
                .memory()
                .write_jsonl(create(&mem.join("haps.jsonl"))?)?;
        }
    }
    Ok(summaries)
}
