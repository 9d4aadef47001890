//! Auction transcripts and their JSONL form.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::lifetables::Gender;
use crate::preferences::{Channel, GroupKey};
use crate::valuation::{ContractSpec, LifeFactors};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntrantRecord {
    pub firm_id: u32,
    pub rating: u8,
    /// Private; absent from observable exports.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost_ratio: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageChoice {
    NoOffers,
    FirstRound,
    SecondRound,
}

/// Simulation-only quantities, never part of an observable export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptTruth {
    pub theta: f64,
    pub beta: f64,
    pub alpha: f64,
    pub r_star: f64,
    pub runner_up: Option<usize>,
    pub realized_utility: Option<f64>,
    /// Probability of choosing the bargaining round.
    pub p_second_round: Option<f64>,
    pub floor_binding: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuctionTranscript {
    pub schema_version: u32,
    pub retiree_id: u64,
    pub quintile: u8,
    pub channel: Channel,
    pub group_key: GroupKey,
    pub gender: Gender,
    pub age_months: f64,
    pub married: bool,
    pub savings: f64,
    pub potential_entrants: usize,
    pub contracts: Vec<ContractSpec>,
    pub factors: Vec<LifeFactors>,
    pub entrants: Vec<EntrantRecord>,
    /// First-round offers indexed `[entrant][contract]`.
    pub offers: Vec<Vec<f64>>,
    pub stage: StageChoice,
    pub chosen_contract: Option<usize>,
    /// Entrant index of the firm the retiree signs with.
    pub winner: Option<usize>,
    pub final_pension: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<TranscriptTruth>,
}

impl AuctionTranscript {
    /// Copy without private costs or simulation truth.
    pub fn observable(&self) -> AuctionTranscript {
        let mut t = self.clone();
        for e in &mut t.entrants {
            e.cost_ratio = None;
        }
        t.truth = None;
        t
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return domain(format!("unsupported transcript schema {}", self.schema_version));
        }
        if self.contracts.len() != self.factors.len() {
            return domain(format!("retiree {}: contracts and factors differ in length", self.retiree_id));
        }
        if self.offers.len() != self.entrants.len() || self.offers.iter().any(|r| r.len() != self.contracts.len()) {
            return domain(format!("retiree {}: offer book has the wrong shape", self.retiree_id));
        }
        if let Some(w) = self.winner {
            if w >= self.entrants.len() {
                return domain(format!("retiree {}: winner is not an entrant", self.retiree_id));
            }
        }
        Ok(())
    }

    /// Rating of an entrant.
    pub fn rating(&self, entrant: usize) -> u8 {
        self.entrants[entrant].rating
    }
}

pub fn write_jsonl<W: Write>(transcripts: &[AuctionTranscript], mut w: W) -> Result<()> {
    for t in transcripts {
        serde_json::to_writer(&mut w, t)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_jsonl<R: BufRead>(r: R) -> Result<Vec<AuctionTranscript>> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let t: AuctionTranscript = serde_json::from_str(&line)?;
        t.validate()?;
        out.push(t);
    }
    Ok(out)
}
