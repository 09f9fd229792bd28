//! Seeded sweeps over fleet size and architecture variant.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use skylane::ScenarioConfig;

use crate::backend::PolicySet;
use crate::episode::{EpisodeSummary, NullSink, Session};
use crate::RunError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Full,
    NoMemory,
    NoMeta,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Full, Variant::NoMemory, Variant::NoMeta];

    /// `cfg` with this variant's ablation switches applied.
    pub fn apply(self, cfg: &ScenarioConfig) -> ScenarioConfig {
        let mut c = cfg.clone();
        match self {
            Variant::Full => {}
            Variant::NoMemory => c.ablation.memory_prompt = false,
            Variant::NoMeta => c.ablation.meta_controller = false,
        }
        c
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Full => "full",
            Variant::NoMemory => "no-memory",
            Variant::NoMeta => "no-meta",
        })
    }
}

impl FromStr for Variant {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full" => Ok(Variant::Full),
            "no-memory" => Ok(Variant::NoMemory),
            "no-meta" => Ok(Variant::NoMeta),
            other => Err(format!(
                "unknown variant `{other}` (expected full, no-memory or no-meta)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub fleet_sizes: Vec<usize>,
    pub seeds: Vec<u64>,
    pub variants: Vec<Variant>,
}

/// Outcome of one (variant, fleet size, seed) cell: the summary of its last
/// episode, or the error that stopped it.
#[derive(Debug, Clone)]
pub struct Cell {
    pub variant: Variant,
    pub num_uavs: usize,
    pub seed: u64,
    pub result: Result<EpisodeSummary, String>,
}

/// Mean and sample standard deviation over the successful seeds of a cell group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub variant: Variant,
    pub num_uavs: usize,
    pub runs: usize,
    pub failures: usize,
    pub transport_reward_mean: f64,
    pub transport_reward_std: f64,
    pub handover_probability_mean: f64,
    pub handover_probability_std: f64,
    pub collision_rate_mean: f64,
    pub collision_rate_std: f64,
    pub capacity_violation_mean: f64,
    pub capacity_violation_std: f64,
    pub datarate_mbps_mean: f64,
    pub datarate_mbps_std: f64,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn run_cell(
    cfg: &ScenarioConfig,
    variant: Variant,
    num_uavs: usize,
    seed: u64,
) -> Result<EpisodeSummary, RunError> {
    let mut c = variant.apply(cfg);
    c.airspace.num_uavs = num_uavs;
    c.seed = seed;
    let policies = PolicySet::from_config(&c.backend)?;
    let mut session = Session::new(&c, seed, policies)?;
    let mut last = None;
    for _ in 0..c.episodes.max(1) {
        last = Some(session.run_episode(&mut NullSink)?);
    }
    Ok(last.expect("at least one episode"))
}

/// Run every cell on up to `workers` threads. A failing cell is recorded
/// and the sweep continues.
pub fn run_sweep(
    cfg: &ScenarioConfig,
    spec: &SweepSpec,
    workers: usize,
) -> Result<(Vec<Cell>, Vec<SweepRow>), RunError> {
    if spec.fleet_sizes.is_empty() || spec.seeds.is_empty() || spec.variants.is_empty() {
        return Err(RunError::Config {
            path: "sweep".into(),
            reason: "fleet sizes, seeds and variants must be nonempty".into(),
        });
    }
    let mut base = cfg.clone();
    base.airspace.num_uavs = spec.fleet_sizes[0];
    base.validate()?;

    let jobs: Vec<(Variant, usize, u64)> = spec
        .variants
        .iter()
        .flat_map(|&v| {
            spec.fleet_sizes
                .iter()
                .flat_map(move |&m| spec.seeds.iter().map(move |&s| (v, m, s)))
        })
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| RunError::Simulation(e.to_string()))?;
    let cells: Vec<Cell> = pool.install(|| {
        jobs.par_iter()
            .map(|&(variant, num_uavs, seed)| {
                let result = run_cell(cfg, variant, num_uavs, seed).map_err(|e| e.to_string());
                if let Err(e) = &result {
                    log::warn!("cell {variant} M={num_uavs} seed={seed} failed: {e}");
                }
                Cell {
                    variant,
                    num_uavs,
                    seed,
                    result,
                }
            })
            .collect()
    });
    let rows = aggregate(&cells, spec);
    Ok((cells, rows))
}

/// One row per (variant, fleet size), in the order given by `spec`.
pub fn aggregate(cells: &[Cell], spec: &SweepSpec) -> Vec<SweepRow> {
    let mut rows = Vec::new();
    for &variant in &spec.variants {
        for &m in &spec.fleet_sizes {
            let group: Vec<&Cell> = cells
                .iter()
                .filter(|c| c.variant == variant && c.num_uavs == m)
                .collect();
            let ok: Vec<&EpisodeSummary> = group
                .iter()
                .filter_map(|c| c.result.as_ref().ok())
                .collect();
            let col = |f: fn(&EpisodeSummary) -> f64| {
                mean_std(&ok.iter().map(|s| f(s)).collect::<Vec<_>>())
            };
            let tr = col(|s| s.total_r_tran / s.num_uavs as f64);
            let ho = col(|s| s.handover_probability);
            let cr = col(|s| s.collision_rate);
            let cv = col(|s| s.capacity_violation_fraction);
            let dr = col(|s| s.mean_datarate_mbps);
            rows.push(SweepRow {
                variant,
                num_uavs: m,
                runs: ok.len(),
                failures: group.len() - ok.len(),
                transport_reward_mean: tr.0,
                transport_reward_std: tr.1,
                handover_probability_mean: ho.0,
                handover_probability_std: ho.1,
                collision_rate_mean: cr.0,
                collision_rate_std: cr.1,
                capacity_violation_mean: cv.0,
                capacity_violation_std: cv.1,
                datarate_mbps_mean: dr.0,
                datarate_mbps_std: dr.1,
            });
        }
    }
    rows
}

/// Write `sweep.csv` (aggregated rows) and `cells.csv` (one row per cell).
pub fn write_sweep(dir: &Path, cells: &[Cell], rows: &[SweepRow]) -> Result<(), RunError> {
    std::fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(dir.join("sweep.csv"))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    let mut w = csv::Writer::from_path(dir.join("cells.csv"))?;
    w.write_record(["variant", "num_uavs", "seed", "error", "summary_json"])?;
    for c in cells {
        let (err, json) = match &c.result {
            Ok(s) => (
                String::new(),
                serde_json::to_string(s).map_err(|e| RunError::Schema(e.to_string()))?,
            ),
            Err(e) => (e.clone(), String::new()),
        };
        w.write_record([
            c.variant.to_string(),
            c.num_uavs.to_string(),
            c.seed.to_string(),
            err,
            json,
        ])?;
    }
    w.flush()?;
    Ok(())
}
