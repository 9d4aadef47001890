//! Stage orchestration over an output directory.
//!
//! Each stage reads what earlier stages wrote, so any stage can be rerun on
//! its own. Wall-clock times are returned to the caller and never written
//! into the output directory, which keeps reruns byte-identical.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::ScenarioConfig;
use super::io::{create, open, read_firms_csv, read_json, read_retirees_csv, write_firms_csv, write_json, write_retirees_csv};
use super::outputs;
use super::report::{build_report, RunReport};
use super::synth::{market_config, synth_firms, synth_mortality_records, synth_population};
use crate::counterfactual::{
    report, run_counterfactual, total_dominance, write_mwr_csv, write_pensions_csv, write_utility_csv, CounterfactualSetup,
    DominanceCounts, Grouping, MechanismResult,
};
use crate::error::{Error, Result};
use crate::estimation::{estimate_all, BequestOptions, EstimationOptions, EstimationResults};
use crate::lifetables::{fit_gompertz, read_records_csv, write_records_csv, FitOptions, FittedGompertz};
use crate::market::cost::CostLaw;
use crate::market::entry::ThresholdMode;
use crate::market::simulate::{entry_thresholds, simulate_market};
use crate::market::transcript::{read_jsonl, write_jsonl, TranscriptTruth};
use crate::market::AuctionTranscript;
use crate::preferences::{BequestPrefDist, Channel, InfoCostTable, RiskPrefGroup};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Synth,
    FitMortality,
    Simulate,
    Estimate,
    Counterfactual,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 6] =
        [Stage::Synth, Stage::FitMortality, Stage::Simulate, Stage::Estimate, Stage::Counterfactual, Stage::Report];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Synth => "synth",
            Stage::FitMortality => "fit-mortality",
            Stage::Simulate => "simulate",
            Stage::Estimate => "estimate",
            Stage::Counterfactual => "counterfactual",
            Stage::Report => "report",
        }
    }

    pub fn outputs(self) -> &'static [&'static str] {
        match self {
            Stage::Synth => &["config.toml", "retirees.csv", "firms.csv", "mortality_records.csv"],
            Stage::FitMortality => &["gompertz.json"],
            Stage::Simulate => &["transcripts.jsonl", "truth.jsonl"],
            Stage::Estimate => &[
                "estimates.json",
                "bequest_dists.json",
                "bequest_summary.csv",
                "risk_prefs.json",
                "info_costs.csv",
                "alpha_cells.csv",
                "beta_groups.csv",
                "cost_laws.json",
                "cost_cdf.csv",
                "symmetry_ks.csv",
            ],
            Stage::Counterfactual => &["cf_pensions.csv", "cf_mwr.csv", "cf_utility.csv", "cf_summary.json"],
            Stage::Report => &["report.json"],
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown stage '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: Stage,
    pub outputs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub version: String,
    pub seed: u64,
    pub stages: Vec<StageRecord>,
}

pub type Timings = BTreeMap<Stage, f64>;

/// Simulation-only quantities kept apart from the observable transcripts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRow {
    pub retiree_id: u64,
    pub cost_ratios: Vec<f64>,
    pub truth: TranscriptTruth,
}

/// Pension means by potential bidders and the dominance tallies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterfactualSummary {
    pub retirees: usize,
    pub sims: usize,
    pub dominance: DominanceCounts,
    /// `(potential bidders, [current, english, full_info])` mean pensions.
    pub mean_pension_by_bidders: Vec<(usize, [f64; 3])>,
    pub mean_utility: [f64; 3],
    pub mean_pension: [f64; 3],
}

pub fn config_hash(cfg: &ScenarioConfig) -> Result<String> {
    let digest = Sha256::digest(cfg.to_toml()?.as_bytes());
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

/// Upper end of the entrants' cost support per quintile, as seen by the analyst.
pub fn observed_thresholds(cfg: &ScenarioConfig) -> Result<[f64; 5]> {
    if let ThresholdMode::Exogenous { r_star } = cfg.entry.threshold_mode {
        return Ok([r_star; 5]);
    }
    let market = market_config(cfg)?;
    let t = entry_thresholds(&market, cfg.seed)?;
    let mut out = [0.0f64; 5];
    for ((q, _), th) in t {
        let slot = &mut out[q as usize - 1];
        *slot = slot.max(th.r_star);
    }
    Ok(out)
}

pub fn estimation_options(cfg: &ScenarioConfig) -> Result<EstimationOptions> {
    Ok(EstimationOptions {
        crra: cfg.crra(),
        bequest: BequestOptions {
            theta_max: cfg.preferences.theta_max,
            zeta_share: cfg.estimation.zeta_share,
            ..BequestOptions::default()
        },
        theta_draws: cfg.estimation.theta_draws,
        bootstrap: cfg.estimation.bootstrap,
        intercept_ridge: cfg.estimation.intercept_ridge,
        r_star: observed_thresholds(cfg)?,
        cost_grid: cfg.estimation.cost_grid,
        seed: cfg.seed,
    })
}

/// Cells without an estimate take the median of their quintile's other cells.
fn complete_info_costs(table: &InfoCostTable) -> Result<InfoCostTable> {
    let mut out = table.clone();
    for q in 1..=5u8 {
        let mut known: Vec<f64> = Channel::ALL.iter().filter_map(|c| table.get(*c, q)).collect();
        if known.is_empty() {
            known = table.iter().map(|(_, _, a)| a).collect();
        }
        if known.is_empty() {
            return Err(Error::InsufficientData("no information cost estimates".into()));
        }
        known.sort_by(f64::total_cmp);
        let fill = known[known.len() / 2];
        for c in Channel::ALL {
            if table.get(c, q).is_none() {
                out.set(c, q, fill)?;
            }
        }
    }
    Ok(out)
}

pub struct Pipeline {
    pub cfg: ScenarioConfig,
    pub out_dir: PathBuf,
}

impl Pipeline {
    pub fn new(cfg: ScenarioConfig, out_dir: impl Into<PathBuf>) -> Result<Self> {
        cfg.validate()?;
        Ok(Pipeline { cfg, out_dir: out_dir.into() })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    fn need(&self, name: &str, stage: Stage) -> Result<PathBuf> {
        let p = self.path(name);
        if !p.exists() {
            return Err(Error::Config(format!("{} is missing; run the stage that writes it before {stage}", p.display())));
        }
        Ok(p)
    }

    /// Runs the stages in dependency order and updates the manifest.
    pub fn run(&self, stages: &[Stage]) -> Result<(RunManifest, Timings)> {
        std::fs::create_dir_all(&self.out_dir)?;
        let mut order = stages.to_vec();
        order.sort();
        order.dedup();
        let mut timings = Timings::new();
        for st in &order {
            let start = Instant::now();
            self.run_stage(*st)?;
            timings.insert(*st, start.elapsed().as_secs_f64());
        }
        let manifest = self.update_manifest(&order)?;
        Ok((manifest, timings))
    }

    pub fn run_all(&self) -> Result<(RunManifest, Timings)> {
        self.run(&Stage::ALL)
    }

    fn update_manifest(&self, ran: &[Stage]) -> Result<RunManifest> {
        let hash = config_hash(&self.cfg)?;
        let path = self.path("manifest.json");
        let mut done: BTreeMap<Stage, StageRecord> = BTreeMap::new();
        if path.exists() {
            let old: RunManifest = read_json(&path)?;
            if old.config_hash == hash {
                done.extend(old.stages.into_iter().map(|r| (r.stage, r)));
            }
        }
        for st in ran {
            done.insert(*st, StageRecord { stage: *st, outputs: st.outputs().iter().map(|s| s.to_string()).collect() });
        }
        let manifest = RunManifest {
            config_hash: hash,
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: self.cfg.seed,
            stages: done.into_values().collect(),
        };
        write_json(&path, &manifest)?;
        Ok(manifest)
    }

    pub fn run_stage(&self, stage: Stage) -> Result<()> {
        match stage {
            Stage::Synth => self.synth(),
            Stage::FitMortality => self.fit_mortality(),
            Stage::Simulate => self.simulate(),
            Stage::Estimate => self.estimate(),
            Stage::Counterfactual => self.counterfactual(),
            Stage::Report => self.report(),
        }
    }

    fn synth(&self) -> Result<()> {
        std::fs::write(self.path("config.toml"), self.cfg.to_toml()?)?;
        write_retirees_csv(&synth_population(&self.cfg)?, create(&self.path("retirees.csv"))?)?;
        write_firms_csv(&synth_firms(&self.cfg), create(&self.path("firms.csv"))?)?;
        write_records_csv(&synth_mortality_records(&self.cfg)?, create(&self.path("mortality_records.csv"))?)
    }

    fn fit_mortality(&self) -> Result<()> {
        let records = read_records_csv(open(&self.need("mortality_records.csv", Stage::FitMortality)?)?)?;
        let fit = fit_gompertz(&records, FitOptions::default())?;
        fit.save_json(&self.path("gompertz.json"))
    }

    fn simulate(&self) -> Result<()> {
        let retirees = read_retirees_csv(open(&self.need("retirees.csv", Stage::Simulate)?)?)?;
        let mut market = market_config(&self.cfg)?;
        market.firms = read_firms_csv(open(&self.need("firms.csv", Stage::Simulate)?)?)?;
        let transcripts = simulate_market(&retirees, &market, self.cfg.seed)?;
        let observable: Vec<AuctionTranscript> = transcripts.iter().map(|t| t.observable()).collect();
        write_jsonl(&observable, create(&self.path("transcripts.jsonl"))?)?;
        let mut w = create(&self.path("truth.jsonl"))?;
        for t in &transcripts {
            let row = TruthRow {
                retiree_id: t.retiree_id,
                cost_ratios: t.entrants.iter().filter_map(|e| e.cost_ratio).collect(),
                truth: t.truth.clone().ok_or_else(|| Error::Domain("simulated transcript without truth".into()))?,
            };
            serde_json::to_writer(&mut w, &row)?;
            std::io::Write::write_all(&mut w, b"\n")?;
        }
        std::io::Write::flush(&mut w)?;
        Ok(())
    }

    pub fn load_transcripts(&self) -> Result<Vec<AuctionTranscript>> {
        read_jsonl(open(&self.need("transcripts.jsonl", Stage::Estimate)?)?)
    }

    fn estimate(&self) -> Result<()> {
        let transcripts = self.load_transcripts()?;
        let res = estimate_all(&transcripts, &estimation_options(&self.cfg)?)?;
        write_json(&self.path("estimates.json"), &res)?;
        write_json(&self.path("bequest_dists.json"), &res.bequest_dists())?;
        write_json(&self.path("risk_prefs.json"), &res.risk_groups())?;
        res.info_costs()?.write_csv(create(&self.path("info_costs.csv"))?)?;
        let cost_laws: Vec<&CostLaw> = res.cost.iter().map(|c| &c.recovered.law).collect();
        write_json(&self.path("cost_laws.json"), &cost_laws)?;
        outputs::write_bequest_summary_csv(&res, create(&self.path("bequest_summary.csv"))?)?;
        outputs::write_alpha_cells_csv(&res, create(&self.path("alpha_cells.csv"))?)?;
        outputs::write_beta_csv(&res, create(&self.path("beta_groups.csv"))?)?;
        outputs::write_cost_cdf_csv(&res, create(&self.path("cost_cdf.csv"))?)?;
        outputs::write_symmetry_csv(&res, create(&self.path("symmetry_ks.csv"))?)
    }

    pub fn load_estimates(&self) -> Result<EstimationResults> {
        read_json(&self.need("estimates.json", Stage::Report)?)
    }

    /// Market built from the fitted mortality law and the estimated primitives.
    pub fn counterfactual_setup(&self) -> Result<CounterfactualSetup> {
        let st = Stage::Counterfactual;
        let fit = FittedGompertz::load_json(&self.need("gompertz.json", st)?)?;
        let bequest: Vec<BequestPrefDist> = read_json(&self.need("bequest_dists.json", st)?)?;
        let risk: Vec<RiskPrefGroup> = read_json(&self.need("risk_prefs.json", st)?)?;
        let alpha = InfoCostTable::read_csv(open(&self.need("info_costs.csv", st)?)?)?;
        let cost_laws: Vec<CostLaw> = read_json(&self.need("cost_laws.json", st)?)?;
        let mut market = market_config(&self.cfg)?;
        market.mortality = fit.model()?;
        market.firms = read_firms_csv(open(&self.need("firms.csv", st)?)?)?;
        market.bequest = bequest;
        market.risk = CounterfactualSetup::complete_risk_groups(&risk);
        market.alpha = complete_info_costs(&alpha)?;
        market.cost_laws = cost_laws;
        Ok(CounterfactualSetup { market, sims: self.cfg.counterfactual.sims, seed: self.cfg.seed })
    }

    pub fn counterfactual_results(&self) -> Result<Vec<MechanismResult>> {
        let setup = self.counterfactual_setup()?;
        let mut retirees = read_retirees_csv(open(&self.need("retirees.csv", Stage::Counterfactual)?)?)?;
        retirees.sort_by_key(|r| r.id);
        retirees.truncate(self.cfg.counterfactual.retirees);
        run_counterfactual(&retirees, &setup)
    }

    fn counterfactual(&self) -> Result<()> {
        let results = self.counterfactual_results()?;
        let mut rows = report(&results, Grouping::QuintileBidders);
        rows.extend(report(&results, Grouping::QuintileChannel));
        write_pensions_csv(&rows, create(&self.path("cf_pensions.csv"))?)?;
        write_mwr_csv(&rows, create(&self.path("cf_mwr.csv"))?)?;
        write_utility_csv(&rows, create(&self.path("cf_utility.csv"))?)?;
        write_json(&self.path("cf_summary.json"), &summarize(&results, self.cfg.counterfactual.sims))
    }

    fn report(&self) -> Result<()> {
        let est = self.load_estimates()?;
        let cf: CounterfactualSummary = read_json(&self.need("cf_summary.json", Stage::Report)?)?;
        let rep: RunReport = build_report(&self.cfg, &est, &cf)?;
        write_json(&self.path("report.json"), &rep)
    }
}

pub fn summarize(results: &[MechanismResult], sims: usize) -> CounterfactualSummary {
    let mut by_j: BTreeMap<usize, ([f64; 3], usize)> = BTreeMap::new();
    let mut pension = [0.0; 3];
    let mut utility = [0.0; 3];
    for r in results {
        let p = [r.current.pension, r.english.pension, r.full_info.pension];
        let u = [r.current.utility, r.english.utility, r.full_info.utility];
        let e = by_j.entry(r.potential_bidders).or_insert(([0.0; 3], 0));
        for k in 0..3 {
            e.0[k] += p[k];
            pension[k] += p[k];
            utility[k] += u[k];
        }
        e.1 += 1;
    }
    let n = results.len().max(1) as f64;
    let retirees: std::collections::BTreeSet<u64> = results.iter().map(|r| r.retiree_id).collect();
    CounterfactualSummary {
        retirees: retirees.len(),
        sims,
        dominance: total_dominance(results),
        mean_pension_by_bidders: by_j.into_iter().map(|(j, (s, c))| (j, s.map(|x| x / c as f64))).collect(),
        mean_utility: utility.map(|x| x / n),
        mean_pension: pension.map(|x| x / n),
    }
}

/// Output files that exist for the stages in a manifest.
pub fn manifest_paths(dir: &Path, manifest: &RunManifest) -> Vec<PathBuf> {
    manifest.stages.iter().flat_map(|r| r.outputs.iter().map(|o| dir.join(o))).collect()
}
