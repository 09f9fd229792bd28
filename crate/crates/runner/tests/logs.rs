use std::fs::File;
use std::io::BufReader;

use skylane::edge_agent::TelecomPolicyKind;
use skylane::ScenarioConfig;
use skylane_runner::{run, summarize_jsonl, EpisodeSummary};

fn small_config() -> ScenarioConfig {
    let mut cfg = ScenarioConfig::default();
    cfg.airspace.num_uavs = 3;
    cfg.episodes = 2;
    cfg.timing.horizon_steps = 120;
    cfg.agent.telecom_policy = TelecomPolicyKind::GreedySinr;
    cfg
}

#[test]
fn summaries_rederive_from_trajectory_log() {
    let cfg = small_config();
    let dir = tempfile::tempdir().unwrap();
    let live = run(&cfg, 9, Some(dir.path())).unwrap();
    let file = BufReader::new(File::open(dir.path().join("trajectory.jsonl")).unwrap());
    let derived = summarize_jsonl(file, &cfg, 9).unwrap();
    let live: Vec<EpisodeSummary> = live
        .iter()
        .map(EpisodeSummary::without_wall_clock)
        .collect();
    assert_eq!(derived, live);
    assert_eq!(derived.len(), 2);
    assert_eq!(derived[0].seed, 9);
    assert_ne!(derived[1].seed, 9);
}

#[test]
fn run_directory_layout() {
    let cfg = small_config();
    let dir = tempfile::tempdir().unwrap();
    run(&cfg, 4, Some(dir.path())).unwrap();
    for f in [
        "config.toml",
        "trajectory.jsonl",
        "meta.jsonl",
        "steps.csv",
        "summary.csv",
        "memory/haps.jsonl",
    ] {
        assert!(dir.path().join(f).is_file(), "missing {f}");
    }
    for m in 0..3 {
        assert!(dir.path().join(format!("memory/uav_{m}.jsonl")).is_file());
    }

    // The written config reloads to the effective config.
    let reloaded = ScenarioConfig::load(&dir.path().join("config.toml")).unwrap();
    let mut expected = cfg.clone();
    expected.seed = 4;
    assert_eq!(reloaded, expected);

    let mut rows = csv::Reader::from_path(dir.path().join("steps.csv")).unwrap();
    assert_eq!(rows.records().count(), 2 * 120 * 3);
    let mut summary = csv::Reader::from_path(dir.path().join("summary.csv")).unwrap();
    assert_eq!(summary.records().count(), 2);
}

#[test]
fn episodes_differ_but_runs_repeat() {
    let cfg = small_config();
    let a = run(&cfg, 21, None).unwrap();
    let b = run(&cfg, 21, None).unwrap();
    let strip = |v: &[EpisodeSummary]| {
        v.iter()
            .map(EpisodeSummary::without_wall_clock)
            .collect::<Vec<_>>()
    };
    assert_eq!(strip(&a), strip(&b));
    assert_ne!(a[0].total_r_tran, a[1].total_r_tran);
}

#[test]
fn checked_in_defaults_match_built_in_defaults() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/default.toml");
    let text = std::fs::read_to_string(path).unwrap();
    assert_eq!(text, ScenarioConfig::default().to_toml_string().unwrap());
    assert_eq!(
        ScenarioConfig::from_toml_str(&text).unwrap(),
        ScenarioConfig::default()
    );
}
