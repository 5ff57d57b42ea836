use std::path::Path;
use std::process::{Command, Output};

use catl::harness::repair_toy;
use catl::monitor::io;

fn catl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_catl")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn scenario_file(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("scenarios")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

#[test]
fn parse_prints_the_horizon() {
    let out = catl(&["parse", "--spec", &scenario_file("case_study.catl"), "--scenario", "case_study"]);
    assert!(out.status.success());
    assert!(stdout(&out).contains("horizon 25"));
}

#[test]
fn errors_exit_with_status_one() {
    let out = catl(&["dnf", "--scenario", "/nonexistent/scenario.json", "--spec", "/nonexistent.catl"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}

#[test]
fn monitor_and_repair_round_trip() {
    let (scenario, _) = repair_toy();
    let dir = tempfile::tempdir().unwrap();
    let idle = dir.path().join("idle.csv");
    io::save(&scenario.idle_team(&scenario.sample_initial_seeded(4)), &idle).unwrap();
    let idle = idle.to_string_lossy().into_owned();

    let out = catl(&["monitor", "--scenario", "repair_toy", "--traj", &idle, "--tau", "10"]);
    assert_eq!(out.status.code(), Some(2));
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report["satisfied"], false);

    let fixed = dir.path().join("fixed.json").to_string_lossy().into_owned();
    let plots = dir.path().join("plots").to_string_lossy().into_owned();
    let out = catl(&["repair", "--scenario", "repair_toy", "--traj", &idle, "--out", &fixed, "--plots", &plots]);
    assert!(out.status.success());
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report["verdict"], "success");
    assert!(Path::new(&plots).join("map.svg").exists());

    let out = catl(&["monitor", "--scenario", "repair_toy", "--traj", &fixed]);
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
}

#[test]
fn train_and_eval_are_bitwise_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"last_stage": "A", "stage_a_steps": 40, "eval_every": 20, "validation_trials": 10}"#).unwrap();
    let cfg = cfg.to_string_lossy().into_owned();
    let runs: Vec<_> = ["a", "b"]
        .iter()
        .map(|name| {
            let out = dir.path().join(name);
            let o = catl(&["train", "--scenario", "toy", "--config", &cfg, "--out", &out.to_string_lossy(), "--seed", "3"]);
            assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
            out
        })
        .collect();
    for f in ["stage_a.json", "final.json", "train_log.json"] {
        assert_eq!(std::fs::read(runs[0].join(f)).unwrap(), std::fs::read(runs[1].join(f)).unwrap(), "{f}");
    }
    let ck = runs[0].join("final.json").to_string_lossy().into_owned();
    let eval = |seed: &str| stdout(&catl(&["eval", "--scenario", "toy", "--checkpoint", &ck, "--trials", "50", "--seed", seed]));
    let first = eval("9");
    assert_eq!(first, eval("9"));
    let report: serde_json::Value = serde_json::from_str(&first).unwrap();
    assert_eq!(report["trials"], 50);
}

#[test]
fn synth_reaches_a_region() {
    let out = catl(&["synth", "--scenario", "toy", "--formula", "F[0,10] in(Goal)", "--agent", "1", "--x0", "1,1"]);
    assert!(out.status.success());
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report["success"], true);
    assert_eq!(report["states"][0], serde_json::json!([1.0, 1.0]));
}

#[test]
fn dnf_counts_clauses() {
    let out = catl(&["dnf", "--scenario", "case_study"]);
    assert!(out.status.success());
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report["count"], 6);
}
