//! Supply side: costs, entry, first-round offers and bargaining.

pub mod bargaining;
pub mod cost;
pub mod entry;
pub mod offers;
pub mod simulate;
pub mod transcript;

use serde::{Deserialize, Serialize};

use crate::lifetables::CovariateVector;
use crate::preferences::{AgeBin, Channel, GroupKey};

pub use bargaining::{bargain_closed_form, bargain_game, BargainContext, BargainOutcome, Bidder};
pub use cost::{max_pension, CostLaw, FirmState};
pub use entry::{entry_threshold, EntryConfig, EntryThreshold, ThresholdMode};
pub use offers::{first_round_offers, OfferBook, OfferPolicy};
pub use simulate::{simulate_market, MarketConfig};
pub use transcript::{AuctionTranscript, StageChoice};

/// One retiree: the unit of each auction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetireeProfile {
    pub id: u64,
    pub covariates: CovariateVector,
    pub spouse: Option<CovariateVector>,
    pub channel: Channel,
    pub quintile: u8,
}

impl RetireeProfile {
    pub fn group_key(&self) -> GroupKey {
        GroupKey {
            gender: self.covariates.gender,
            age_bin: AgeBin::classify(self.covariates.gender, self.covariates.age_at_retirement),
            quintile: self.quintile,
            channel: self.channel,
        }
    }
}

/// Insurer identity and its fixed risk rating.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FirmSpec {
    pub id: u32,
    pub rating: u8,
}
