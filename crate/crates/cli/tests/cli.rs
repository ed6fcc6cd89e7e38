use std::fs;
use std::path::PathBuf;

use antitangle_cli::{execute, Cli};
use antitangle_sim::tasks::Schedule;
use clap::Parser;

fn topo(args: &[&str]) -> (anyhow::Result<bool>, String) {
    let cli = Cli::try_parse_from(std::iter::once("topo").chain(args.iter().copied())).expect("arguments parse");
    let mut out = Vec::new();
    let r = execute(cli, &mut out);
    (r, String::from_utf8(out).unwrap())
}

fn scratch(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("topo-test-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&d);
    fs::create_dir_all(&d).unwrap();
    d
}

#[test]
fn debug_braid_reports_normal_form_and_counts() {
    let (r, out) = topo(&["debug-braid", "--word", "s1 s2 S2 S1 s3"]);
    assert!(r.unwrap());
    assert!(out.contains("simplified : s3 (length 1)"), "{out}");
    assert!(out.contains("cancel 2, commute 0, braid 0"), "{out}");
    assert!(out.contains("confluent"), "{out}");

    let (r, out) = topo(&["debug-braid", "--word", "s1 S1"]);
    assert!(r.unwrap());
    assert!(out.contains("simplified : e (length 0)"), "{out}");
}

#[test]
fn debug_braid_rejects_garbage() {
    assert!(topo(&["debug-braid", "--word", "s1 x2"]).0.is_err());
    assert!(topo(&["debug-braid", "--word", "s3", "--strands", "3"]).0.is_err());
}

#[test]
fn validate_schedule_passes_fixture_and_flags_early_start() {
    let dir = scratch("validate");
    let s = Schedule::fixture("v1").unwrap();
    let mut trace = s.as_trace();
    let good = dir.join("good.json");
    fs::write(&good, serde_json::to_string(&trace).unwrap()).unwrap();
    let (r, out) = topo(&[
        "validate-schedule",
        "--trace",
        good.to_str().unwrap(),
        "--fixture",
        "v1",
    ]);
    assert!(r.unwrap(), "{out}");
    assert!(out.contains("PASS"));

    // T2.P3 may not start before T2.P2 finishes at 5
    let p3 = trace.iter_mut().find(|iv| iv.task == 2 && iv.process == 3).unwrap();
    p3.start = 5;
    let bad = dir.join("bad.jsonl");
    let lines: Vec<String> = trace.iter().map(|iv| serde_json::to_string(iv).unwrap()).collect();
    fs::write(&bad, lines.join("\n")).unwrap();
    let (r, out) = topo(&["validate-schedule", "--trace", bad.to_str().unwrap(), "--fixture", "v1"]);
    assert!(!r.unwrap());
    assert!(out.contains("FAIL") && out.contains("Precedence"), "{out}");

    // loose intervals need an explicit fixture
    assert!(topo(&["validate-schedule", "--trace", bad.to_str().unwrap()])
        .0
        .is_err());
    assert!(topo(&[
        "validate-schedule",
        "--trace",
        good.to_str().unwrap(),
        "--fixture",
        "v9"
    ])
    .0
    .is_err());
}

#[test]
fn run_writes_artifacts_that_validate() {
    let dir = scratch("run");
    let (r, out) = topo(&[
        "run",
        "--scenario",
        "low",
        "--seeds",
        "3,4",
        "--episodes",
        "3",
        "--ablate",
        "dual_replay",
        "--quiet",
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert!(r.unwrap(), "{out}");

    let metrics: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["label"], "no_dual_replay");
    assert_eq!(metrics["per_seed"].as_array().unwrap().len(), 2);
    let sr = metrics["success_rate"]["mean"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&sr));

    let curve = fs::read_to_string(dir.join("curve.csv")).unwrap();
    assert_eq!(curve.lines().count(), 1 + 2 * 3);
    assert!(curve.starts_with("seed,episode,fixture,success"));

    for s in [3, 4] {
        let ck = fs::read_to_string(dir.join("checkpoints").join(format!("seed_{s}.json"))).unwrap();
        antitangle_sim::learner::Learner::from_json(&ck).unwrap();
    }

    let trace = dir.join("trace.jsonl");
    assert!(fs::read_to_string(&trace).unwrap().contains("\"kind\":\"episode_end\""));
    let (r, out) = topo(&["validate-schedule", "--trace", trace.to_str().unwrap()]);
    assert!(r.unwrap(), "{out}");
    assert_eq!(out.matches("PASS").count(), 2, "{out}");
}

#[test]
fn run_rejects_unknown_ablation_and_scenario() {
    let dir = scratch("reject");
    let d = dir.to_str().unwrap();
    assert!(topo(&["run", "--ablate", "everything", "--episodes", "1", "--out", d])
        .0
        .is_err());
    assert!(topo(&["run", "--scenario", "extreme", "--episodes", "1", "--out", d])
        .0
        .is_err());
}

#[test]
fn config_round_trips_through_run() {
    let dir = scratch("config");
    let (r, toml_text) = topo(&["config", "--scenario", "high"]);
    assert!(r.unwrap());
    let file = dir.join("high.toml");
    let edited: Vec<String> = toml_text
        .lines()
        .map(|l| {
            if l.starts_with("episodes = ") {
                "episodes = 1".to_string()
            } else {
                l.to_string()
            }
        })
        .collect();
    fs::write(&file, edited.join("\n")).unwrap();
    let (r, out) = topo(&[
        "run",
        "--config",
        file.to_str().unwrap(),
        "--scenario",
        "high",
        "--seeds",
        "1",
        "--quiet",
        "--out",
        dir.join("o").to_str().unwrap(),
    ]);
    assert!(r.unwrap(), "{out}");
    assert!(out.contains("[high]"), "{out}");
    let clash = ["run", "--config", file.to_str().unwrap(), "--scenario", "low", "--out", dir.to_str().unwrap()];
    assert!(topo(&clash).0.is_err());
}
