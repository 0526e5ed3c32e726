use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const TINY: &[&str] = &[
    "--set",
    "channel.sample_budget=10000",
    "--set",
    "geometry.locations_per_relay=2",
    "--set",
    "grid.train_locations=[0]",
    "--set",
    "training.episodes=2",
    "--set",
    "training.parameters_per_episode=2",
    "--set",
    "training.trials=1",
    "--set",
    "training.horizon=10",
    "--set",
    "protocol.test_episodes=3",
    "--set",
    "protocol.training_evaluations=2",
    "--set",
    "protocol.curve_episodes=1",
];

fn relaynet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_relaynet"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn with_tiny<'a>(args: &[&'a str]) -> Vec<&'a str> {
    let mut v = args.to_vec();
    v.extend_from_slice(TINY);
    v
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn train(out: &Path, method: &str, seed: &str) -> Output {
    relaynet(&with_tiny(&["train", "--method", method, "--seed", seed, "--out", out.to_str().unwrap()]))
}

#[test]
fn unknown_method_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = train(dir.path(), "sarsa", "1");
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stderr(&o).contains("sarsa"));
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn missing_scenario_file_is_reported() {
    let o = relaynet(&["print-config", "--scenario", "/nonexistent/desk.toml"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("/nonexistent/desk.toml"), "{}", stderr(&o));
}

#[test]
fn print_config_applies_overrides() {
    let o = relaynet(&["print-config", "--set", "ppo.kappa=0.3"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("kappa = 0.3"));
    let bad = relaynet(&["print-config", "--set", "ppo.nope=1"]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn verify_suites_pass_and_reject_zero_count() {
    for suite in ["lemma1", "lemma2", "theorem1"] {
        let o = relaynet(&["verify", suite, "--count", "20", "--seed", "3"]);
        assert_eq!(o.status.code(), Some(0), "{suite}: {}", stderr(&o));
        assert!(stdout(&o).contains("violations: 0"), "{}", stdout(&o));
    }
    let o = relaynet(&["verify", "lemma1", "--count", "0"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn train_is_reproducible_and_evaluate_matches() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let oa = train(a.path(), "robust", "7");
    assert_eq!(oa.status.code(), Some(0), "{}", stderr(&oa));
    let ob = train(b.path(), "robust", "7");
    assert_eq!(ob.status.code(), Some(0));
    for f in ["robust-seed7-metrics.csv", "curves.csv", "robust-manifest.txt", "robust-seed7.ckpt"] {
        assert_eq!(
            fs::read(a.path().join(f)).unwrap(),
            fs::read(b.path().join(f)).unwrap(),
            "{f} differs between runs"
        );
    }
    let metrics = fs::read_to_string(a.path().join("robust-seed7-metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 3);

    let ckpt = a.path().join("robust-seed7.ckpt");
    let eval_dir = a.path().join("eval");
    let e = relaynet(&with_tiny(&[
        "evaluate",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--format",
        "csv",
        "--out",
        eval_dir.to_str().unwrap(),
    ]));
    assert_eq!(e.status.code(), Some(0), "{}", stderr(&e));
    let trained_eval = fs::read_to_string(a.path().join("robust-seed7-evaluation.csv")).unwrap();
    assert_eq!(stdout(&e), trained_eval);
    assert_eq!(fs::read_to_string(eval_dir.join("robust-seed7-evaluation.csv")).unwrap(), trained_eval);

    let table = relaynet(&with_tiny(&["evaluate", "--checkpoint", ckpt.to_str().unwrap()]));
    assert_eq!(table.status.code(), Some(0));
    let csv_values: Vec<f64> = trained_eval.lines().nth(1).unwrap().split(',').skip(1).map(|v| v.parse().unwrap()).collect();
    let table_values: Vec<f64> = stdout(&table)
        .lines()
        .nth(1)
        .unwrap()
        .split_whitespace()
        .skip(1)
        .map(|v| v.trim_end_matches('*').parse().unwrap())
        .collect();
    assert_eq!(csv_values.len(), table_values.len());
    for (c, t) in csv_values.iter().zip(&table_values) {
        assert!((c - t).abs() <= 5e-5, "{c} vs {t}");
    }
}

#[test]
fn grid_mismatch_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(train(dir.path(), "dqn", "1").status.code(), Some(0));
    let ckpt = dir.path().join("dqn-seed1.ckpt");
    let mut args = with_tiny(&["evaluate", "--checkpoint", ckpt.to_str().unwrap()]);
    args.extend_from_slice(&["--set", "grid.thresholds=[2.0]"]);
    let o = relaynet(&args);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("grid"), "{}", stderr(&o));
}

#[test]
fn outputs_stay_inside_the_output_directory() {
    let root = tempfile::tempdir().unwrap();
    let out = root.path().join("run");
    let o = relaynet(&with_tiny(&[
        "train",
        "--method",
        "random,ddpg",
        "--seed",
        "1,2",
        "--out",
        out.to_str().unwrap(),
        "--format",
        "csv",
    ]));
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let top: Vec<_> = fs::read_dir(root.path()).unwrap().collect();
    assert_eq!(top.len(), 1);
    let names: Vec<String> = fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    for f in ["comparison.csv", "curves.csv", "scenario.toml", "ddpg-seed2.ckpt", "random-manifest.txt"] {
        assert!(names.iter().any(|n| n == f), "missing {f} in {names:?}");
    }
    let table = stdout(&o);
    assert!(table.starts_with("method,avg_max"));
    assert_eq!(table.lines().count(), 3);
}
