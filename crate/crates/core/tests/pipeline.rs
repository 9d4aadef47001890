use std::path::Path;

use annuity_market::harness::io::{open, read_json, read_retirees_csv, write_retirees_csv};
use annuity_market::harness::report::RunReport;
use annuity_market::harness::synth::synth_population;
use annuity_market::harness::{Pipeline, RunManifest, ScenarioConfig, Stage};
use annuity_market::market::transcript::read_jsonl;
use annuity_market::market::AuctionTranscript;
use annuity_market::Error;

fn small(seed: u64) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::default();
    cfg.seed = seed;
    cfg.population = 4_000;
    cfg.mortality.records = 5_000;
    cfg.estimation.theta_draws = 1_000;
    cfg.estimation.bootstrap = 20;
    cfg.counterfactual.retirees = 20;
    cfg.counterfactual.sims = 20;
    cfg
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    std::fs::read(dir.join(name)).unwrap()
}

#[test]
fn full_run_writes_every_declared_output() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, timings) = Pipeline::new(small(11), dir.path()).unwrap().run_all().unwrap();
    assert_eq!(manifest.stages.len(), Stage::ALL.len());
    assert_eq!(timings.len(), Stage::ALL.len());
    for st in Stage::ALL {
        for f in st.outputs() {
            assert!(dir.path().join(f).exists(), "{st} did not write {f}");
        }
    }
    let on_disk: RunManifest = read_json(&dir.path().join("manifest.json")).unwrap();
    assert_eq!(on_disk, manifest);
    let rep: RunReport = read_json(&dir.path().join("report.json")).unwrap();
    assert_eq!(rep.identification.len(), 5);
    assert_eq!(rep.counterfactual.len(), 7);
    // Wall-clock numbers stay out of the output directory.
    assert!(!String::from_utf8(read(dir.path(), "manifest.json")).unwrap().contains("seconds"));
}

#[test]
fn rerunning_estimation_reproduces_its_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let p = Pipeline::new(small(12), dir.path()).unwrap();
    p.run(&[Stage::Synth, Stage::FitMortality, Stage::Simulate, Stage::Estimate]).unwrap();
    let first: Vec<Vec<u8>> = Stage::Estimate.outputs().iter().map(|f| read(dir.path(), f)).collect();
    p.run(&[Stage::Estimate]).unwrap();
    for (f, before) in Stage::Estimate.outputs().iter().zip(first) {
        assert_eq!(read(dir.path(), f), before, "{f} changed on rerun");
    }
    let manifest: RunManifest = read_json(&dir.path().join("manifest.json")).unwrap();
    assert_eq!(manifest.stages.len(), 4);
}

#[test]
fn seed_changes_draws_but_not_schema() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for (seed, dir) in [(1, &a), (2, &b)] {
        Pipeline::new(small(seed), dir.path()).unwrap().run(&[Stage::Synth, Stage::Simulate]).unwrap();
    }
    assert_ne!(read(a.path(), "transcripts.jsonl"), read(b.path(), "transcripts.jsonl"));
    let load = |d: &Path| -> Vec<AuctionTranscript> { read_jsonl(open(&d.join("transcripts.jsonl")).unwrap()).unwrap() };
    let (ta, tb) = (load(a.path()), load(b.path()));
    assert_eq!(ta.len(), tb.len());
    let keys = |t: &AuctionTranscript| {
        let v = serde_json::to_value(t).unwrap();
        v.as_object().unwrap().keys().cloned().collect::<Vec<_>>()
    };
    assert_eq!(keys(&ta[0]), keys(&tb[0]));
    assert!(ta.iter().all(|t| t.truth.is_none()), "observable transcripts must not carry truth");
}

#[test]
fn missing_input_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let err = Pipeline::new(small(3), dir.path()).unwrap().run(&[Stage::Estimate]).unwrap_err();
    assert!(err.is_input_error(), "{err}");
    assert!(err.to_string().contains("transcripts.jsonl"));
}

#[test]
fn invalid_config_is_rejected() {
    let mut cfg = small(4);
    cfg.savings.mean = cfg.savings.median / 2.0;
    assert!(matches!(Pipeline::new(cfg, "unused"), Err(Error::Config(_))));
}

#[test]
fn config_round_trips_through_toml() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(5);
    let path = dir.path().join("scenario.toml");
    std::fs::write(&path, cfg.to_toml().unwrap()).unwrap();
    assert_eq!(ScenarioConfig::load(&path).unwrap(), cfg);
}

#[test]
fn retirees_round_trip_through_csv() {
    let people = synth_population(&small(6)).unwrap();
    let mut buf = Vec::new();
    write_retirees_csv(&people, &mut buf).unwrap();
    let back = read_retirees_csv(buf.as_slice()).unwrap();
    assert_eq!(back.len(), people.len());
    let mut again = Vec::new();
    write_retirees_csv(&back, &mut again).unwrap();
    assert_eq!(buf, again);
}
