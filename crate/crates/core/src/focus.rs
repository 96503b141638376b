use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Quadrant of an edit: model prediction crossed with community outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FocusBucket {
    /// Predicted non-damaging, but reverted: candidate false negative.
    UnexpectedRevert,
    /// Predicted damaging, but not reverted: candidate false positive.
    UnexpectedConsensus,
    ExpectedRevert,
    ExpectedConsensus,
}

impl FocusBucket {
    pub const ALL: [FocusBucket; 4] = [
        FocusBucket::UnexpectedRevert,
        FocusBucket::UnexpectedConsensus,
        FocusBucket::ExpectedRevert,
        FocusBucket::ExpectedConsensus,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FocusBucket::UnexpectedRevert => "UnexpectedRevert",
            FocusBucket::UnexpectedConsensus => "UnexpectedConsensus",
            FocusBucket::ExpectedRevert => "ExpectedRevert",
            FocusBucket::ExpectedConsensus => "ExpectedConsensus",
        }
    }

    pub fn predicted_damaging(self) -> bool {
        matches!(self, FocusBucket::UnexpectedConsensus | FocusBucket::ExpectedRevert)
    }

    pub fn reverted(self) -> bool {
        matches!(self, FocusBucket::UnexpectedRevert | FocusBucket::ExpectedRevert)
    }

    /// Whether the community outcome is "kept", which needs a full
    /// observation window to be trusted.
    pub fn is_consensus(self) -> bool {
        !self.reverted()
    }
}

impl fmt::Display for FocusBucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown focus bucket {0:?}")]
pub struct UnknownBucket(pub String);

impl FromStr for FocusBucket {
    type Err = UnknownBucket;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FocusBucket::ALL
            .into_iter()
            .find(|b| b.name() == s)
            .ok_or_else(|| UnknownBucket(s.to_owned()))
    }
}

/// Scores at or above the threshold count as predicted damaging.
pub fn classify_focus(damaging_prob: f64, reverted: bool, threshold: f64) -> FocusBucket {
    match (damaging_prob >= threshold, reverted) {
        (false, true) => FocusBucket::UnexpectedRevert,
        (true, false) => FocusBucket::UnexpectedConsensus,
        (true, true) => FocusBucket::ExpectedRevert,
        (false, false) => FocusBucket::ExpectedConsensus,
    }
}

pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// How records are assigned to buckets at query time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FocusPolicy {
    /// Scores at or above this are "predicted damaging".
    pub threshold: f64,
    pub count_self_reverts: bool,
    /// Keep censored edits out of the two consensus buckets.
    pub exclude_censored: bool,
}

impl Default for FocusPolicy {
    fn default() -> Self {
        FocusPolicy { threshold: DEFAULT_THRESHOLD, count_self_reverts: true, exclude_censored: true }
    }
}

/// Population per bucket. Serialized as a map keyed by bucket name.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BucketCounts {
    #[serde(rename = "UnexpectedRevert")]
    pub unexpected_revert: u64,
    #[serde(rename = "UnexpectedConsensus")]
    pub unexpected_consensus: u64,
    #[serde(rename = "ExpectedRevert")]
    pub expected_revert: u64,
    #[serde(rename = "ExpectedConsensus")]
    pub expected_consensus: u64,
}

impl BucketCounts {
    pub fn get(&self, bucket: FocusBucket) -> u64 {
        match bucket {
            FocusBucket::UnexpectedRevert => self.unexpected_revert,
            FocusBucket::UnexpectedConsensus => self.unexpected_consensus,
            FocusBucket::ExpectedRevert => self.expected_revert,
            FocusBucket::ExpectedConsensus => self.expected_consensus,
        }
    }

    pub fn get_mut(&mut self, bucket: FocusBucket) -> &mut u64 {
        match bucket {
            FocusBucket::UnexpectedRevert => &mut self.unexpected_revert,
            FocusBucket::UnexpectedConsensus => &mut self.unexpected_consensus,
            FocusBucket::ExpectedRevert => &mut self.expected_revert,
            FocusBucket::ExpectedConsensus => &mut self.expected_consensus,
        }
    }

    pub fn total(&self) -> u64 {
        FocusBucket::ALL.iter().map(|b| self.get(*b)).sum()
    }
}
