use std::path::Path;
use std::process::{Command, Output};

fn annuity(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_annuity")).args(args).current_dir(dir).output().unwrap()
}

fn small_config(dir: &Path) -> String {
    let path = dir.join("small.toml");
    std::fs::write(
        &path,
        "seed = 9\npopulation = 2000\n\n[mortality]\nrecords = 4000\n\n[estimation]\ntheta_draws = 500\nbootstrap = 10\n\n[counterfactual]\nretirees = 10\nsims = 10\n",
    )
    .unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn help_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = annuity(&["--help"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("pipeline"));
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(annuity(&["frobnicate"], dir.path()).status.code(), Some(1));
    assert_eq!(annuity(&["synth", "--stage", "synth"], dir.path()).status.code(), Some(1));
    assert_eq!(annuity(&["pipeline", "--stage", "nonsense"], dir.path()).status.code(), Some(1));
    assert_eq!(annuity(&["synth", "--config", "absent.toml"], dir.path()).status.code(), Some(1));
}

#[test]
fn missing_inputs_exit_one_with_a_message() {
    let dir = tempfile::tempdir().unwrap();
    let out = annuity(&["estimate", "--out-dir", "empty"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("transcripts.jsonl"));
}

#[test]
fn staged_pipeline_writes_outputs_and_timings() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = annuity(
        &["pipeline", "--config", &cfg, "--out-dir", "run", "--stage", "synth", "--stage", "fit-mortality", "--timings", "t.json"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["config.toml", "retirees.csv", "firms.csv", "mortality_records.csv", "gompertz.json", "manifest.json"] {
        assert!(dir.path().join("run").join(f).exists(), "missing {f}");
    }
    assert!(!dir.path().join("run/transcripts.jsonl").exists());
    let t: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("t.json")).unwrap()).unwrap();
    assert!(t.get("synth").is_some() && t.get("fit-mortality").is_some());
    assert!(String::from_utf8_lossy(&out.stderr).contains("fit-mortality"));
}

#[test]
fn seed_flag_overrides_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    for (seed, out) in [("1", "a"), ("2", "b")] {
        let o = annuity(&["synth", "--config", &cfg, "--seed", seed, "--out-dir", out], dir.path());
        assert_eq!(o.status.code(), Some(0));
    }
    let read = |d: &str| std::fs::read(dir.path().join(d).join("retirees.csv")).unwrap();
    assert_ne!(read("a"), read("b"));
}
