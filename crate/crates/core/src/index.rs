//! Per-field indexes over the immutable record array.
//!
//! Categorical fields (namespace, category, the three flags) get one bitmap
//! per value; numeric fields get a value-sorted permutation so a range turns
//! into two binary searches. [`FilterIndex::select`] intersects one bitmap
//! per present constraint. Its result must always equal a linear scan with
//! [`FilterSpec::matches`].

use std::collections::{BTreeMap, HashMap};

use fixedbitset::FixedBitSet;

use crate::dataset::EditRecord;
use crate::filter::{FilterSpec, TriState};

/// Record positions ordered by one numeric field.
#[derive(Debug, Default)]
struct SortedColumn {
    values: Vec<u64>,
    positions: Vec<u32>,
}

impl SortedColumn {
    fn build(records: &[EditRecord], field: impl Fn(&EditRecord) -> u64) -> Self {
        let mut pairs: Vec<(u64, u32)> =
            records.iter().enumerate().map(|(i, r)| (field(r), i as u32)).collect();
        pairs.sort_unstable();
        let (values, positions) = pairs.into_iter().unzip();
        SortedColumn { values, positions }
    }

    fn range(&self, min: Option<u64>, max: Option<u64>, len: usize) -> Option<FixedBitSet> {
        if min.is_none() && max.is_none() {
            return None;
        }
        let lo = min.map_or(0, |m| self.values.partition_point(|v| *v < m));
        let hi = max.map_or(self.values.len(), |m| self.values.partition_point(|v| *v <= m));
        let mut bits = FixedBitSet::with_capacity(len);
        if lo < hi {
            for &p in &self.positions[lo..hi] {
                bits.insert(p as usize);
            }
        }
        Some(bits)
    }
}

#[derive(Debug, Default)]
pub struct FilterIndex {
    len: usize,
    namespaces: BTreeMap<u16, FixedBitSet>,
    categories: HashMap<String, FixedBitSet>,
    minor: FixedBitSet,
    registered: FixedBitSet,
    bot: FixedBitSet,
    page_size: SortedColumn,
    abs_edit_size: SortedColumn,
    edit_count: SortedColumn,
    account_age: SortedColumn,
}

impl FilterIndex {
    pub fn build(records: &[EditRecord]) -> Self {
        let len = records.len();
        let empty = || FixedBitSet::with_capacity(len);
        let mut index = FilterIndex {
            len,
            minor: empty(),
            registered: empty(),
            bot: empty(),
            page_size: SortedColumn::build(records, |r| r.page_size_before),
            abs_edit_size: SortedColumn::build(records, |r| r.byte_delta.unsigned_abs()),
            edit_count: SortedColumn::build(records, |r| r.editor_edit_count_at_time),
            account_age: SortedColumn::build(records, |r| r.editor_account_age_at_time),
            ..Default::default()
        };
        for (i, r) in records.iter().enumerate() {
            index.namespaces.entry(r.page_namespace).or_insert_with(empty).insert(i);
            for c in &r.page_categories {
                index.categories.entry(c.clone()).or_insert_with(empty).insert(i);
            }
            index.minor.set(i, r.is_minor);
            index.registered.set(i, r.editor_is_registered);
            index.bot.set(i, r.editor_is_bot);
        }
        index
    }

    fn union<'a>(&self, sets: impl Iterator<Item = Option<&'a FixedBitSet>>) -> FixedBitSet {
        let mut out = FixedBitSet::with_capacity(self.len);
        for s in sets.flatten() {
            out.union_with(s);
        }
        out
    }

    fn apply_flag(&self, acc: &mut FixedBitSet, state: TriState, set: &FixedBitSet) {
        match state {
            TriState::Any => {}
            TriState::Yes => acc.intersect_with(set),
            TriState::No => acc.difference_with(set),
        }
    }

    /// Positions (into the record array) of every record the filter admits.
    pub fn select(&self, filter: &FilterSpec) -> FixedBitSet {
        let mut acc = FixedBitSet::with_capacity(self.len);
        acc.insert_range(..);

        if let Some(ns) = &filter.namespaces {
            acc.intersect_with(&self.union(ns.iter().map(|n| self.namespaces.get(n))));
        }
        if let Some(cats) = &filter.categories_any {
            acc.intersect_with(&self.union(cats.iter().map(|c| self.categories.get(c))));
        }
        self.apply_flag(&mut acc, filter.minor, &self.minor);
        self.apply_flag(&mut acc, filter.registered, &self.registered);
        self.apply_flag(&mut acc, filter.bot, &self.bot);

        let ranges = [
            (&self.page_size, filter.page_size_min, filter.page_size_max),
            (&self.abs_edit_size, filter.abs_edit_size_min, filter.abs_edit_size_max),
            (&self.edit_count, filter.editor_edit_count_min, filter.editor_edit_count_max),
            (&self.account_age, filter.editor_account_age_min, filter.editor_account_age_max),
        ];
        for (column, min, max) in ranges {
            if let Some(bits) = column.range(min, max, self.len) {
                acc.intersect_with(&bits);
            }
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixture::{generate, FixtureConfig};
    use crate::filter::TriState;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spec(rng: &mut ChaCha8Rng) -> FilterSpec {
        let tri = |rng: &mut ChaCha8Rng| [TriState::Any, TriState::Yes, TriState::No][rng.random_range(0..3)];
        let opt = |rng: &mut ChaCha8Rng, hi: u64| rng.random_bool(0.3).then(|| rng.random_range(0..hi));
        FilterSpec {
            namespaces: rng.random_bool(0.3).then(|| (0..rng.random_range(0..3)).map(|_| rng.random_range(0..5)).collect()),
            categories_any: None,
            page_size_min: opt(rng, 2_000),
            page_size_max: None,
            abs_edit_size_min: None,
            abs_edit_size_max: opt(rng, 300),
            minor: tri(rng),
            registered: tri(rng),
            bot: tri(rng),
            editor_edit_count_min: opt(rng, 500),
            editor_edit_count_max: None,
            editor_account_age_min: None,
            editor_account_age_max: opt(rng, 10_000_000),
        }
    }

    #[test]
    fn select_equals_linear_scan() {
        let fx = generate(&FixtureConfig { edits: 1_500, pages: 60, seed: 3, ..Default::default() });
        let ds = fx.dataset();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let spec = random_spec(&mut rng);
            let got: Vec<usize> = ds.index().select(&spec).ones().collect();
            let want: Vec<usize> =
                ds.records().iter().enumerate().filter(|(_, r)| spec.matches(r)).map(|(i, _)| i).collect();
            assert_eq!(got, want, "{}", spec.canonical_json());
        }
    }

    #[test]
    fn unknown_category_and_empty_namespace_set_match_nothing() {
        let fx = generate(&FixtureConfig { edits: 200, pages: 10, seed: 1, ..Default::default() });
        let ds = fx.dataset();
        let spec = FilterSpec { categories_any: Some(["no such category".to_owned()].into()), ..Default::default() };
        assert_eq!(ds.index().select(&spec).count_ones(..), 0);
        let spec = FilterSpec { namespaces: Some(Default::default()), ..Default::default() };
        assert_eq!(ds.index().select(&spec).count_ones(..), 0);
        assert_eq!(ds.index().select(&FilterSpec::all()).count_ones(..), ds.len());
    }
}
