//! Declarative audit-population filters.
//!
//! A [`FilterSpec`] is a conjunction of optional constraints over page, edit
//! and editor attributes. The empty spec matches everything. Specs travel as
//! JSON; the canonical form (sorted keys, unset constraints omitted) is what
//! [`FilterSpec::fingerprint`] hashes, so equal populations share a
//! fingerprint no matter how the client spelled them.

use std::collections::BTreeSet;
use std::fmt;

use base64::engine::general_purpose::URL_SAFE_NO_PAD;
use base64::Engine;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::EditRecord;

/// `any` imposes no constraint.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TriState {
    #[default]
    Any,
    Yes,
    No,
}

impl TriState {
    pub fn is_any(&self) -> bool {
        *self == TriState::Any
    }

    pub fn admits(self, value: bool) -> bool {
        match self {
            TriState::Any => true,
            TriState::Yes => value,
            TriState::No => !value,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterSpec {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub namespaces: Option<BTreeSet<u16>>,
    /// Satisfied when the page carries at least one of these categories.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub categories_any: Option<BTreeSet<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub page_size_min: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub page_size_max: Option<u64>,
    /// Bounds on `|byte_delta|`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub abs_edit_size_min: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub abs_edit_size_max: Option<u64>,
    #[serde(skip_serializing_if = "TriState::is_any")]
    pub minor: TriState,
    #[serde(skip_serializing_if = "TriState::is_any")]
    pub registered: TriState,
    #[serde(skip_serializing_if = "TriState::is_any")]
    pub bot: TriState,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub editor_edit_count_min: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub editor_edit_count_max: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub editor_account_age_min: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub editor_account_age_max: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FilterError {
    #[error("{field}_min ({min}) exceeds {field}_max ({max})")]
    InvertedRange { field: &'static str, min: u64, max: u64 },
    #[error("filter is not valid JSON: {0}")]
    Json(String),
    #[error("filter is neither JSON nor URL-safe base64 JSON")]
    Encoding,
}

/// 64-bit hash of a filter's canonical JSON form, shown as 16 hex digits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FilterFingerprint(pub u64);

impl fmt::Display for FilterFingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

impl Serialize for FilterFingerprint {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for FilterFingerprint {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        if s.len() != 16 {
            return Err(serde::de::Error::custom("fingerprint must be 16 hex digits"));
        }
        u64::from_str_radix(&s, 16).map(FilterFingerprint).map_err(serde::de::Error::custom)
    }
}

fn in_range(value: u64, min: Option<u64>, max: Option<u64>) -> bool {
    min.is_none_or(|m| value >= m) && max.is_none_or(|m| value <= m)
}

impl FilterSpec {
    /// Match-all.
    pub fn all() -> Self {
        FilterSpec::default()
    }

    /// Human edits on mainspace articles.
    pub fn human_mainspace() -> Self {
        FilterSpec {
            namespaces: Some(BTreeSet::from([0])),
            bot: TriState::No,
            ..Default::default()
        }
    }

    /// Registered editors with at most 100 edits at the time of the edit.
    pub fn newcomers() -> Self {
        FilterSpec {
            registered: TriState::Yes,
            editor_edit_count_max: Some(100),
            ..Default::default()
        }
    }

    pub fn presets() -> Vec<(&'static str, FilterSpec)> {
        vec![
            ("All human mainspace edits", FilterSpec::human_mainspace()),
            ("Newcomers", FilterSpec::newcomers()),
        ]
    }

    pub fn validate(&self) -> Result<(), FilterError> {
        let ranges = [
            ("page_size", self.page_size_min, self.page_size_max),
            ("abs_edit_size", self.abs_edit_size_min, self.abs_edit_size_max),
            ("editor_edit_count", self.editor_edit_count_min, self.editor_edit_count_max),
            ("editor_account_age", self.editor_account_age_min, self.editor_account_age_max),
        ];
        for (field, min, max) in ranges {
            if let (Some(min), Some(max)) = (min, max) {
                if min > max {
                    return Err(FilterError::InvertedRange { field, min, max });
                }
            }
        }
        Ok(())
    }

    /// Conjunction of every present constraint.
    pub fn matches(&self, r: &EditRecord) -> bool {
        self.namespaces.as_ref().is_none_or(|ns| ns.contains(&r.page_namespace))
            && self
                .categories_any
                .as_ref()
                .is_none_or(|cats| r.page_categories.iter().any(|c| cats.contains(c)))
            && in_range(r.page_size_before, self.page_size_min, self.page_size_max)
            && in_range(r.byte_delta.unsigned_abs(), self.abs_edit_size_min, self.abs_edit_size_max)
            && self.minor.admits(r.is_minor)
            && self.registered.admits(r.editor_is_registered)
            && self.bot.admits(r.editor_is_bot)
            && in_range(
                r.editor_edit_count_at_time,
                self.editor_edit_count_min,
                self.editor_edit_count_max,
            )
            && in_range(
                r.editor_account_age_at_time,
                self.editor_account_age_min,
                self.editor_account_age_max,
            )
    }

    /// Canonical JSON: sorted keys, unset constraints omitted.
    pub fn canonical_json(&self) -> String {
        // serde_json's Value map is ordered by key.
        let value = serde_json::to_value(self).expect("filter serializes");
        value.to_string()
    }

    pub fn fingerprint(&self) -> FilterFingerprint {
        let digest = Sha256::digest(self.canonical_json().as_bytes());
        let mut head = [0u8; 8];
        head.copy_from_slice(&digest[..8]);
        FilterFingerprint(u64::from_be_bytes(head))
    }

    pub fn from_json(s: &str) -> Result<Self, FilterError> {
        let spec: FilterSpec = serde_json::from_str(s).map_err(|e| FilterError::Json(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    /// URL-safe base64 (no padding) of the canonical JSON.
    pub fn encode(&self) -> String {
        URL_SAFE_NO_PAD.encode(self.canonical_json())
    }

    /// Accepts either raw JSON or the [`encode`](Self::encode) form.
    pub fn decode(s: &str) -> Result<Self, FilterError> {
        let trimmed = s.trim_start();
        if trimmed.starts_with('{') {
            return Self::from_json(trimmed);
        }
        let bytes = URL_SAFE_NO_PAD.decode(s.trim_end_matches('=')).map_err(|_| FilterError::Encoding)?;
        let json = String::from_utf8(bytes).map_err(|_| FilterError::Encoding)?;
        Self::from_json(&json)
    }
}
