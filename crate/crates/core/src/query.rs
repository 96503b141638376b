//! Seeded, paginated sampling of filtered records within a focus bucket.
//!
//! A request is fully described by `(filter, bucket, seed, cursor)`: the
//! eligible records (in rev_id order) are permuted by a Fisher-Yates shuffle
//! driven by a ChaCha8 stream seeded with `seed`, and the cursor is an offset
//! into that permutation. No sampling state lives between calls.

use base64::engine::general_purpose::URL_SAFE_NO_PAD;
use base64::Engine;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{Dataset, EditRecord};
use crate::filter::{FilterError, FilterSpec};
use crate::focus::{BucketCounts, FocusBucket, FocusPolicy};

pub const MAX_SAMPLE: usize = 500;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRequest {
    pub filter: FilterSpec,
    /// `None` samples across all four buckets.
    pub bucket: Option<FocusBucket>,
    pub n: usize,
    pub seed: u64,
    pub cursor: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum QueryError {
    #[error("n = {0} exceeds the per-request maximum of {MAX_SAMPLE}")]
    TooMany(usize),
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error("cursor is malformed or belongs to a different request")]
    BadCursor,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Population {
    /// Records admitted by the filter.
    pub matched: u64,
    /// Matched records left out of every bucket because they are censored.
    pub censored_excluded: u64,
    pub counts: BucketCounts,
}

#[derive(Debug, Clone)]
pub struct QueryResult<'a> {
    pub records: Vec<&'a EditRecord>,
    pub next_cursor: Option<String>,
    pub population: Population,
}

fn binding(req: &SampleRequest, policy: &FocusPolicy) -> [u8; 8] {
    let mut h = Sha256::new();
    h.update(req.filter.canonical_json());
    h.update(req.bucket.map_or("*", |b| b.name()));
    h.update(req.seed.to_le_bytes());
    h.update(policy.threshold.to_bits().to_le_bytes());
    h.update([policy.count_self_reverts as u8, policy.exclude_censored as u8]);
    let mut out = [0u8; 8];
    out.copy_from_slice(&h.finalize()[..8]);
    out
}

fn encode_cursor(offset: usize, bind: [u8; 8]) -> String {
    let mut raw = bind.to_vec();
    raw.extend_from_slice(&(offset as u64).to_le_bytes());
    URL_SAFE_NO_PAD.encode(raw)
}

fn decode_cursor(token: &str, bind: [u8; 8]) -> Result<usize, QueryError> {
    let raw = URL_SAFE_NO_PAD.decode(token).map_err(|_| QueryError::BadCursor)?;
    if raw.len() != 16 || raw[..8] != bind {
        return Err(QueryError::BadCursor);
    }
    let offset = u64::from_le_bytes(raw[8..].try_into().expect("8 bytes"));
    usize::try_from(offset).map_err(|_| QueryError::BadCursor)
}

/// Bucket populations for the records the filter admits.
pub fn population(dataset: &Dataset, filter: &FilterSpec, policy: &FocusPolicy) -> Population {
    let records = dataset.records();
    let mut pop = Population { matched: 0, censored_excluded: 0, counts: BucketCounts::default() };
    for i in dataset.index().select(filter).ones() {
        pop.matched += 1;
        match records[i].bucket(policy) {
            Some(b) => *pop.counts.get_mut(b) += 1,
            None => pop.censored_excluded += 1,
        }
    }
    pop
}

/// Records admitted by `filter` that fall in `bucket`, in rev_id order.
pub fn eligible<'a>(
    dataset: &'a Dataset,
    filter: &FilterSpec,
    bucket: Option<FocusBucket>,
    policy: &FocusPolicy,
) -> Vec<&'a EditRecord> {
    let records = dataset.records();
    dataset
        .index()
        .select(filter)
        .ones()
        .map(|i| &records[i])
        .filter(|r| match (r.bucket(policy), bucket) {
            (None, _) => false,
            (Some(_), None) => true,
            (Some(b), Some(want)) => b == want,
        })
        .collect()
}

pub fn query<'a>(
    dataset: &'a Dataset,
    req: &SampleRequest,
    policy: &FocusPolicy,
) -> Result<QueryResult<'a>, QueryError> {
    if req.n > MAX_SAMPLE {
        return Err(QueryError::TooMany(req.n));
    }
    req.filter.validate()?;
    let bind = binding(req, policy);
    let offset = match &req.cursor {
        Some(token) => decode_cursor(token, bind)?,
        None => 0,
    };

    let population = population(dataset, &req.filter, policy);
    let mut pool = eligible(dataset, &req.filter, req.bucket, policy);
    let end = offset.saturating_add(req.n).min(pool.len());

    // Partial Fisher-Yates: the first `end` slots of the permutation depend
    // only on the seed and the pool, so every page agrees with the others.
    let mut rng = ChaCha8Rng::seed_from_u64(req.seed);
    for i in 0..end {
        let j = rng.random_range(i..pool.len());
        pool.swap(i, j);
    }
    let records = if offset < end { pool[offset..end].to_vec() } else { Vec::new() };
    let next_cursor = (req.n > 0 && end < pool.len()).then(|| encode_cursor(end, bind));

    Ok(QueryResult { records, next_cursor, population })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixture::{generate, FixtureConfig};
    use std::collections::HashSet;

    fn dataset() -> Dataset {
        generate(&FixtureConfig { edits: 2_000, pages: 80, seed: 9, ..Default::default() }).dataset()
    }

    fn request(bucket: Option<FocusBucket>, n: usize, seed: u64) -> SampleRequest {
        SampleRequest { filter: FilterSpec::all(), bucket, n, seed, cursor: None }
    }

    #[test]
    fn deterministic() {
        let ds = dataset();
        let policy = FocusPolicy::default();
        let req = request(Some(FocusBucket::UnexpectedRevert), 10, 42);
        let a: Vec<u64> = query(&ds, &req, &policy).unwrap().records.iter().map(|r| r.rev_id).collect();
        let b: Vec<u64> = query(&ds, &req, &policy).unwrap().records.iter().map(|r| r.rev_id).collect();
        assert_eq!(a, b);
        assert_eq!(a.len(), 10);
    }

    #[test]
    fn returns_whole_bucket_when_n_exceeds_it() {
        let ds = dataset();
        let policy = FocusPolicy::default();
        let want: HashSet<u64> = ds
            .records()
            .iter()
            .filter(|r| r.bucket(&policy) == Some(FocusBucket::UnexpectedRevert))
            .map(|r| r.rev_id)
            .collect();
        assert!(!want.is_empty() && want.len() < MAX_SAMPLE);
        let res = query(&ds, &request(Some(FocusBucket::UnexpectedRevert), 500, 1), &policy).unwrap();
        let got: HashSet<u64> = res.records.iter().map(|r| r.rev_id).collect();
        assert_eq!(got, want);
        assert_eq!(res.records.len(), want.len());
        assert!(res.next_cursor.is_none());
        assert_eq!(res.population.counts.unexpected_revert, want.len() as u64);
    }

    #[test]
    fn pages_partition_the_permutation() {
        let ds = dataset();
        let policy = FocusPolicy::default();
        let full = query(&ds, &request(None, 500, 7), &policy).unwrap();
        let mut req = request(None, 37, 7);
        let mut paged = Vec::new();
        loop {
            let res = query(&ds, &req, &policy).unwrap();
            paged.extend(res.records.iter().map(|r| r.rev_id));
            match res.next_cursor {
                Some(c) if paged.len() < 500 => req.cursor = Some(c),
                _ => break,
            }
        }
        let full: Vec<u64> = full.records.iter().map(|r| r.rev_id).collect();
        assert_eq!(&paged[..full.len()], &full[..]);
        let unique: HashSet<_> = paged.iter().collect();
        assert_eq!(unique.len(), paged.len());
    }

    #[test]
    fn counts_partition_filtered_set() {
        let ds = dataset();
        let policy = FocusPolicy::default();
        for filter in [FilterSpec::all(), FilterSpec::human_mainspace(), FilterSpec::newcomers()] {
            let pop = population(&ds, &filter, &policy);
            let matched = ds.records().iter().filter(|r| filter.matches(r)).count() as u64;
            assert_eq!(pop.matched, matched);
            assert_eq!(pop.counts.total(), matched - pop.censored_excluded);
        }
    }

    #[test]
    fn errors_and_empty_results() {
        let ds = dataset();
        let policy = FocusPolicy::default();
        assert_eq!(query(&ds, &request(None, 501, 0), &policy).unwrap_err(), QueryError::TooMany(501));

        let res = query(&ds, &request(None, 0, 0), &policy).unwrap();
        assert!(res.records.is_empty() && res.next_cursor.is_none());
        assert!(res.population.matched > 0);

        let mut req = request(None, 5, 0);
        let cursor = query(&ds, &req, &policy).unwrap().next_cursor.unwrap();
        req.seed = 1;
        req.cursor = Some(cursor);
        assert_eq!(query(&ds, &req, &policy).unwrap_err(), QueryError::BadCursor);
        req.cursor = Some("not a cursor".into());
        assert_eq!(query(&ds, &req, &policy).unwrap_err(), QueryError::BadCursor);

        let mut req = request(None, 5, 0);
        req.filter.page_size_min = Some(10);
        req.filter.page_size_max = Some(1);
        assert!(matches!(query(&ds, &req, &policy), Err(QueryError::Filter(_))));
    }

    #[test]
    fn uniform_over_seeds() {
        // One draw per seed from 10 eligible records: each count is
        // Binomial(2000, 0.1) with sd ~13.4, so 200 +- 60 is a 4.5 sigma band.
        let ds = dataset();
        let policy = FocusPolicy::default();
        let ten: Vec<EditRecord> = ds
            .records()
            .iter()
            .take(10)
            .cloned()
            .map(|mut r| {
                r.censored = false;
                r
            })
            .collect();
        let sub = Dataset::new(ds.header().clone(), ten);

        let mut counts = std::collections::HashMap::new();
        for seed in 0..2_000 {
            let res = query(&sub, &request(None, 1, seed), &policy).unwrap();
            *counts.entry(res.records[0].rev_id).or_insert(0u32) += 1;
        }
        assert_eq!(counts.len(), 10);
        for (rev, c) in counts {
            assert!((140..=260).contains(&c), "rev {rev} drawn {c} times");
        }
    }
}
