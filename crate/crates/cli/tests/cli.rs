use std::path::PathBuf;
use std::process::{Command, Output};

fn scenario(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn hsmon(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hsmon")).args(args).env_remove("HSMON_SEED").output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn json_field(o: &Output, key: &str) -> serde_json::Value {
    let text = stdout(o);
    let start = text.find('{').expect("json summary");
    let v: serde_json::Value = serde_json::from_str(&text[start..]).unwrap();
    v[key].clone()
}

#[test]
fn synth_writes_monitor_and_rule_trace() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("m.mon");
    let o = hsmon(&["synth", "--model", scenario("two_branch.hp").to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let formula = std::fs::read_to_string(&out).unwrap();
    assert_eq!(formula.trim(), "a_post = a + 1 & b_post = b | b_post <= 3 & a_post = a");
    let trace = std::fs::read_to_string(dir.path().join("m.trace.jsonl")).unwrap();
    assert!(trace.lines().count() >= 3);
    for line in trace.lines() {
        serde_json::from_str::<serde_json::Value>(line).unwrap();
    }
}

#[test]
fn zero_runs_is_a_usage_error() {
    let o = hsmon(&["sim", "run", "--scenario", scenario("watertank.hp").to_str().unwrap(), "--runs", "0"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("positive"));
}

#[test]
fn unknown_arguments_and_files_exit_two() {
    assert_eq!(hsmon(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(hsmon(&["synth", "--model", "/nonexistent.hp"]).status.code(), Some(2));
    let o = hsmon(&["synth", "--model", scenario("watertank.hp").to_str().unwrap(), "--kind", "psychic"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn identical_invocations_write_identical_csv() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = hsmon(&[
            "sim",
            "run",
            "--scenario",
            scenario("watertank_sensor.hp").to_str().unwrap(),
            "--runs",
            "6",
            "--steps",
            "12",
            "--seed",
            "3",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0));
        std::fs::read(out).unwrap()
    };
    assert_eq!(run("a.csv"), run("b.csv"));
}

#[test]
fn seed_from_environment_unless_given() {
    let path = scenario("watertank.hp");
    let p = path.to_str().unwrap();
    let env = |args: &[&str]| {
        Command::new(env!("CARGO_BIN_EXE_hsmon")).args(args).env("HSMON_SEED", "41").output().unwrap()
    };
    let o = env(&["sim", "run", "--scenario", p, "--runs", "2", "--steps", "3"]);
    assert_eq!(json_field(&o, "seed"), 41);
    let o = env(&["sim", "run", "--scenario", p, "--runs", "2", "--steps", "3", "--seed", "5"]);
    assert_eq!(json_field(&o, "seed"), 5);
    let o = hsmon(&["sim", "run", "--scenario", p, "--runs", "2", "--steps", "3"]);
    assert_eq!(json_field(&o, "seed"), 7);
    let bad = Command::new(env!("CARGO_BIN_EXE_hsmon"))
        .args(["sim", "run", "--scenario", p, "--runs", "2"])
        .env("HSMON_SEED", "seven")
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn replay_and_report_agree_with_simulation() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("r.csv");
    let model = scenario("watertank_sensor.hp");
    let sim = hsmon(&[
        "sim",
        "run",
        "--scenario",
        model.to_str().unwrap(),
        "--runs",
        "10",
        "--steps",
        "20",
        "--out",
        csv.to_str().unwrap(),
        "--expect-clean",
    ]);
    assert_eq!(sim.status.code(), Some(0));
    let alarms = json_field(&sim, "true_alarms").as_u64().unwrap() + json_field(&sim, "false_alarms").as_u64().unwrap();
    assert!(alarms > 0);

    let replayed = dir.path().join("replayed.csv");
    let eval = hsmon(&[
        "monitor",
        "eval",
        "--model",
        model.to_str().unwrap(),
        "--trace",
        csv.to_str().unwrap(),
        "--out",
        replayed.to_str().unwrap(),
        "--expect-clean",
    ]);
    assert_eq!(eval.status.code(), Some(1));
    assert!(stdout(&eval).contains(&format!("200 transitions checked, {alarms} violated")));

    let rep = hsmon(&["report", "--trace", replayed.to_str().unwrap(), "--json"]);
    assert_eq!(rep.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&rep)).unwrap();
    assert_eq!(v["precision"], json_field(&sim, "precision"));
    assert_eq!(v["recall"], json_field(&sim, "recall"));
}

#[test]
fn clean_trace_passes_expect_clean() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("clean.csv");
    let model = scenario("two_branch.hp");
    let sim = hsmon(&["sim", "run", "--scenario", model.to_str().unwrap(), "--out", csv.to_str().unwrap()]);
    assert_eq!(sim.status.code(), Some(0));
    let eval = hsmon(&["monitor", "eval", "--model", model.to_str().unwrap(), "--trace", csv.to_str().unwrap(), "--expect-clean"]);
    assert_eq!(eval.status.code(), Some(0), "{}", stdout(&eval));
}

#[test]
fn delta_override_changes_the_band() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("r.csv");
    let model = scenario("watertank_sensor.hp");
    let m = model.to_str().unwrap();
    hsmon(&["sim", "run", "--scenario", m, "--runs", "5", "--steps", "20", "--out", csv.to_str().unwrap()]);
    let count = |delta: &str| {
        let o = hsmon(&["monitor", "eval", "--model", m, "--trace", csv.to_str().unwrap(), "--delta", delta]);
        assert_eq!(o.status.code(), Some(0));
        let text = stdout(&o);
        let n: usize = text.split(", ").nth(1).unwrap().split_whitespace().next().unwrap().parse().unwrap();
        n
    };
    assert!(count("0.01") > count("0.1"));
    let o = hsmon(&["monitor", "eval", "--model", scenario("two_branch.hp").to_str().unwrap(), "--trace", csv.to_str().unwrap(), "--delta", "1"]);
    assert_eq!(o.status.code(), Some(2));
}
