use std::path::Path;
use std::process::{Command, Output};

fn skylane(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_skylane"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

#[test]
fn validate_config_exit_codes() {
    assert_eq!(code(&skylane(&["validate-config"])), 0);
    let bad = skylane(&["validate-config", "--override", "airspace.num_uavs=0"]);
    assert_eq!(code(&bad), 2);
    assert!(String::from_utf8_lossy(&bad.stderr).contains("airspace.num_uavs"));
    assert_eq!(
        code(&skylane(&[
            "validate-config",
            "--override",
            "airspace.no_such_field=1"
        ])),
        2
    );
    assert_eq!(
        code(&skylane(&[
            "validate-config",
            "--override",
            "no-equals-sign"
        ])),
        2
    );
    assert_eq!(
        code(&skylane(&[
            "validate-config",
            "--config",
            "/nonexistent/x.toml"
        ])),
        2
    );
}

#[test]
fn run_then_plot() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = skylane(&[
        "run",
        "--seed",
        "2",
        "--override",
        "timing.horizon_steps=60",
        "--override",
        "agent.telecom_policy=greedy_sinr",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("trajectory.jsonl").is_file());

    let plots = dir.path().join("plots");
    let o = skylane(&[
        "plot",
        out.join("steps.csv").to_str().unwrap(),
        out.join("summary.csv").to_str().unwrap(),
        "--out",
        plots.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(plots.join("steps_profile.svg").is_file());
    assert!(plots.join("summary_rewards.svg").is_file());
}

#[test]
fn plot_rejects_unknown_schema() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("odd.csv");
    std::fs::write(&csv, "a,b\n1,2\n").unwrap();
    let o = skylane(&[
        "plot",
        csv.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("schema"));
}

#[test]
fn sweep_writes_tables() {
    let dir = tempfile::tempdir().unwrap();
    let o = skylane(&[
        "sweep",
        "--override",
        "timing.horizon_steps=20",
        "--override",
        "agent.telecom_policy=stay",
        "--fleet",
        "2,3",
        "--seeds",
        "2",
        "--variants",
        "full,no-meta",
        "--workers",
        "2",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rows = csv::Reader::from_path(dir.path().join("sweep.csv"))
        .unwrap()
        .records()
        .count();
    let cells = csv::Reader::from_path(Path::new(dir.path()).join("cells.csv"))
        .unwrap()
        .records()
        .count();
    assert_eq!((rows, cells), (4, 8));
}

#[test]
fn dump_defaults_prints_loadable_toml() {
    let o = skylane(&["dump-defaults"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("[airspace]"));
    assert!(skylane::ScenarioConfig::from_toml_str(&text).is_ok());
}
