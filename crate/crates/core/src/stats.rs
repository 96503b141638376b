//! Prevalence estimates and two-group comparisons for audit labels.
//!
//! Rates carry Wilson score intervals. Two slices are compared with a pooled
//! two-proportion z-test, falling back to Fisher's exact test whenever any
//! cell of the 2x2 (error / no error by group) table is below 5.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::erf::erfc;
use statrs::function::factorial::ln_binomial;

use crate::filter::{FilterFingerprint, FilterSpec};
use crate::focus::FocusBucket;
use crate::store::Label;

pub const DEFAULT_ALPHA: f64 = 0.05;

/// Cell count below which [`compare`] switches to Fisher's exact test.
pub const FISHER_CELL_MIN: u64 = 5;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StatsError {
    #[error("no labeled edits")]
    NoData,
    #[error("{k} successes out of {n} trials")]
    CountOutOfRange { k: u64, n: u64 },
    #[error("alpha must lie strictly between 0 and 1, got {0}")]
    Alpha(f64),
    #[error("cannot compare a {0:?} rate with a {1:?} rate")]
    MismatchedErrorKind(ErrorKind, ErrorKind),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ErrorKind {
    FalsePositive,
    FalseNegative,
}

impl ErrorKind {
    /// Model error type audited in a bucket, and the auditor label that
    /// confirms it.
    pub fn for_bucket(bucket: FocusBucket) -> (ErrorKind, Label) {
        if bucket.predicted_damaging() {
            (ErrorKind::FalsePositive, Label::NotDamaging)
        } else {
            (ErrorKind::FalseNegative, Label::Damaging)
        }
    }
}

/// Standard normal quantile at `1 - alpha/2`.
pub fn z_two_sided(alpha: f64) -> Result<f64, StatsError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(StatsError::Alpha(alpha));
    }
    Ok(Normal::standard().inverse_cdf(1.0 - alpha / 2.0))
}

/// Wilson score interval for `k` successes in `n` trials.
pub fn wilson_interval(k: u64, n: u64, alpha: f64) -> Result<(f64, f64), StatsError> {
    if n == 0 {
        return Err(StatsError::NoData);
    }
    if k > n {
        return Err(StatsError::CountOutOfRange { k, n });
    }
    let z = z_two_sided(alpha)?;
    let nf = n as f64;
    let p = k as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let center = (p + z2 / (2.0 * nf)) / denom;
    let half = z * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
    let low = if k == 0 { 0.0 } else { (center - half).clamp(0.0, p) };
    let high = if k == n { 1.0 } else { (center + half).clamp(p, 1.0) };
    Ok((low, high))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditSummary {
    pub filter: FilterSpec,
    pub filter_fingerprint: FilterFingerprint,
    pub bucket: FocusBucket,
    /// Damaging plus not-damaging labels; skips are excluded.
    pub n_labeled: u64,
    pub n_skipped: u64,
    pub n_model_error: u64,
    pub error_kind: ErrorKind,
    /// False when nothing was labeled; rate and interval are then absent.
    pub rate_defined: bool,
    pub rate: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub alpha: f64,
}

impl AuditSummary {
    /// The rate as an exact `(errors, labeled)` ratio.
    pub fn ratio(&self) -> Option<(u64, u64)> {
        self.rate_defined.then_some((self.n_model_error, self.n_labeled))
    }
}

/// Tallies labels for one `(filter, bucket)` slice into a rate estimate.
pub fn summarize<I>(
    filter: &FilterSpec,
    bucket: FocusBucket,
    labels: I,
    alpha: f64,
) -> Result<AuditSummary, StatsError>
where
    I: IntoIterator<Item = Label>,
{
    z_two_sided(alpha)?;
    let (error_kind, error_label) = ErrorKind::for_bucket(bucket);
    let (mut n_labeled, mut n_skipped, mut n_model_error) = (0u64, 0u64, 0u64);
    for label in labels {
        match label {
            Label::Skip => n_skipped += 1,
            other => {
                n_labeled += 1;
                n_model_error += (other == error_label) as u64;
            }
        }
    }

    let (rate, ci) = if n_labeled == 0 {
        (None, None)
    } else {
        let ci = wilson_interval(n_model_error, n_labeled, alpha)?;
        (Some(n_model_error as f64 / n_labeled as f64), Some(ci))
    };
    Ok(AuditSummary {
        filter: filter.clone(),
        filter_fingerprint: filter.fingerprint(),
        bucket,
        n_labeled,
        n_skipped,
        n_model_error,
        error_kind,
        rate_defined: rate.is_some(),
        rate,
        ci_low: ci.map(|c| c.0),
        ci_high: ci.map(|c| c.1),
        alpha,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestMethod {
    TwoProportionZ,
    FisherExact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupComparison {
    pub a: AuditSummary,
    pub b: AuditSummary,
    pub rate_diff: f64,
    pub diff_ci_low: f64,
    pub diff_ci_high: f64,
    pub p_value: f64,
    pub method: TestMethod,
}

/// Two-sided Fisher exact p-value for `[[a, b], [c, d]]`: the total
/// probability, under fixed margins, of tables no more likely than the
/// observed one.
pub fn fisher_exact(table: [[u64; 2]; 2]) -> f64 {
    let [[a, b], [c, d]] = table;
    let (row1, row2, col1) = (a + b, c + d, a + c);
    let n = row1 + row2;
    let ln_total = ln_binomial(n, col1);
    let ln_pmf = |x: u64| ln_binomial(row1, x) + ln_binomial(row2, col1 - x) - ln_total;

    let observed = ln_pmf(a);
    let lo = col1.saturating_sub(row2);
    let hi = row1.min(col1);
    let mut p = 0.0;
    let mut excluded = false;
    for x in lo..=hi {
        let lp = ln_pmf(x);
        // Relative tolerance so that tables tied with the observed one in
        // exact arithmetic are not lost to rounding.
        if lp <= observed + 1e-7 {
            p += lp.exp();
        } else {
            excluded = true;
        }
    }
    if excluded {
        p.min(1.0)
    } else {
        1.0
    }
}

/// Pooled two-proportion z-test; returns `(z, two-sided p)`.
pub fn two_proportion_z(k1: u64, n1: u64, k2: u64, n2: u64) -> (f64, f64) {
    let (n1f, n2f) = (n1 as f64, n2 as f64);
    let (p1, p2) = (k1 as f64 / n1f, k2 as f64 / n2f);
    let pooled = (k1 + k2) as f64 / (n1f + n2f);
    let se = (pooled * (1.0 - pooled) * (1.0 / n1f + 1.0 / n2f)).sqrt();
    if se == 0.0 || p1 == p2 {
        return (0.0, 1.0);
    }
    let z = (p1 - p2) / se;
    (z, erfc(z.abs() / std::f64::consts::SQRT_2).min(1.0))
}

/// Difference of two slice rates, `a - b`, with a test of equality.
pub fn compare(a: &AuditSummary, b: &AuditSummary) -> Result<GroupComparison, StatsError> {
    if a.error_kind != b.error_kind {
        return Err(StatsError::MismatchedErrorKind(a.error_kind, b.error_kind));
    }
    if a.n_labeled == 0 || b.n_labeled == 0 {
        return Err(StatsError::NoData);
    }
    let (k1, n1, k2, n2) = (a.n_model_error, a.n_labeled, b.n_model_error, b.n_labeled);
    let table = [[k1, n1 - k1], [k2, n2 - k2]];

    let small = table.iter().flatten().any(|&c| c < FISHER_CELL_MIN);
    let (method, p_value) = if small {
        (TestMethod::FisherExact, fisher_exact(table))
    } else {
        (TestMethod::TwoProportionZ, two_proportion_z(k1, n1, k2, n2).1)
    };

    let (p1, p2) = (k1 as f64 / n1 as f64, k2 as f64 / n2 as f64);
    let rate_diff = p1 - p2;
    let z = z_two_sided(a.alpha)?;
    let se = (p1 * (1.0 - p1) / n1 as f64 + p2 * (1.0 - p2) / n2 as f64).sqrt();
    Ok(GroupComparison {
        a: a.clone(),
        b: b.clone(),
        rate_diff,
        diff_ci_low: (rate_diff - z * se).max(-1.0),
        diff_ci_high: (rate_diff + z * se).min(1.0),
        p_value,
        method,
    })
}
