//! Synthetic edit corpora with planted structure and a ground-truth sidecar.
//!
//! Histories are built so that every identity revert is deliberate: ordinary
//! edits always introduce a never-seen line, and reverts restore the exact
//! text preceding a vandal edit. Revert outcomes, censoring and focus
//! buckets are therefore known by construction, independently of the ingest
//! code. Truth labels are then assigned per (editor class, bucket) cell so
//! that each cell's model-error rate is exactly the planted one; Unexpected
//! cells are first trimmed to a multiple of [`FixtureConfig::cell_multiple`]
//! (by nudging surplus scores across the threshold) so planted rates with
//! one decimal are hit exactly.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::filter::{FilterSpec, TriState};
use crate::focus::{classify_focus, FocusBucket, DEFAULT_THRESHOLD};
use crate::ingest::{
    build_dataset, is_censored, write_edits, write_predictions, ContentHash, IngestOptions, Prediction,
    RawEdit, DEFAULT_REVERT_RADIUS, DEFAULT_REVERT_WINDOW,
};
use crate::stats::ErrorKind;

pub const EDITS_FILE: &str = "edits.tsv";
pub const PREDICTIONS_FILE: &str = "predictions.tsv";
pub const TEXTS_FILE: &str = "texts.ndjson";
pub const GROUND_TRUTH_FILE: &str = "ground_truth.json";
pub const TRUTH_FILE: &str = "truth.tsv";

pub const MODEL_VERSION: &str = "damaging-fixture-1";

/// 2019-01-01T00:00:00Z
const START: i64 = 1_546_300_800;
const TWO_YEARS: i64 = 2 * 31_536_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EditorClass {
    Anonymous,
    Newcomer,
    Experienced,
    Bot,
}

impl EditorClass {
    pub const ALL: [EditorClass; 4] =
        [EditorClass::Anonymous, EditorClass::Newcomer, EditorClass::Experienced, EditorClass::Bot];

    pub fn name(self) -> &'static str {
        match self {
            EditorClass::Anonymous => "anonymous",
            EditorClass::Newcomer => "newcomer",
            EditorClass::Experienced => "experienced",
            EditorClass::Bot => "bot",
        }
    }

    /// The filter selecting exactly this class's edits.
    pub fn filter(self) -> FilterSpec {
        match self {
            EditorClass::Anonymous => {
                FilterSpec { registered: TriState::No, bot: TriState::No, ..Default::default() }
            }
            EditorClass::Newcomer => FilterSpec {
                registered: TriState::Yes,
                bot: TriState::No,
                editor_edit_count_max: Some(100),
                ..Default::default()
            },
            EditorClass::Experienced => FilterSpec {
                registered: TriState::Yes,
                bot: TriState::No,
                editor_edit_count_min: Some(101),
                ..Default::default()
            },
            EditorClass::Bot => FilterSpec { bot: TriState::Yes, ..Default::default() },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassProfile {
    /// Fraction of edit slots drawn from this class.
    pub share: f64,
    /// Probability that an edit is vandalism (and later restored).
    pub vandalism_rate: f64,
    /// Planted false-positive rate among Unexpected Consensus edits.
    pub unexpected_consensus_fp: f64,
    /// Planted false-negative rate among Unexpected Revert edits.
    pub unexpected_revert_fn: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureConfig {
    pub edits: usize,
    pub pages: usize,
    pub seed: u64,
    pub start: i64,
    pub span_seconds: i64,
    /// Ingest parameters the planted buckets assume.
    pub window: u64,
    pub radius: usize,
    pub threshold: f64,
    /// Indexed like [`EditorClass::ALL`].
    pub profiles: [ClassProfile; 4],
    pub high_score_if_reverted: f64,
    pub high_score_if_kept: f64,
    pub self_revert_share: f64,
    pub expected_revert_fp: f64,
    pub expected_consensus_fn: f64,
    /// When set, the Expected and censored cells get a common error rate
    /// chosen so that this fraction of all edits are model errors.
    pub error_rate_target: Option<f64>,
    pub cell_multiple: usize,
}

impl Default for FixtureConfig {
    fn default() -> Self {
        let p = |share, vandalism_rate, uc, ur| ClassProfile {
            share,
            vandalism_rate,
            unexpected_consensus_fp: uc,
            unexpected_revert_fn: ur,
        };
        FixtureConfig {
            edits: 10_000,
            pages: 500,
            seed: 0,
            start: START,
            span_seconds: TWO_YEARS,
            window: DEFAULT_REVERT_WINDOW,
            radius: DEFAULT_REVERT_RADIUS,
            threshold: DEFAULT_THRESHOLD,
            profiles: [
                p(0.25, 0.30, 0.4, 0.6),
                p(0.25, 0.20, 0.6, 0.5),
                p(0.40, 0.04, 0.2, 0.3),
                p(0.10, 0.01, 0.5, 0.2),
            ],
            high_score_if_reverted: 0.75,
            high_score_if_kept: 0.06,
            self_revert_share: 0.05,
            expected_revert_fp: 0.05,
            expected_consensus_fn: 0.02,
            error_rate_target: None,
            cell_multiple: 10,
        }
    }
}

impl FixtureConfig {
    fn profile(&self, class: EditorClass) -> &ClassProfile {
        &self.profiles[class as usize]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub error_kind: ErrorKind,
    pub planted_rate: f64,
    pub n: u64,
    pub n_errors: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subpopulation {
    pub name: String,
    pub filter: FilterSpec,
    pub cells: BTreeMap<FocusBucket, Cell>,
    /// Edits of this class excluded from every bucket by censoring.
    pub censored_excluded: u64,
}

/// Contents of `ground_truth.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub config: FixtureConfig,
    pub edits: u64,
    pub model_errors: u64,
    pub subpopulations: Vec<Subpopulation>,
}

impl GroundTruth {
    pub fn subpopulation(&self, class: EditorClass) -> &Subpopulation {
        self.subpopulations.iter().find(|s| s.name == class.name()).expect("all classes present")
    }
}

/// One line of `truth.tsv`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TruthRow {
    pub rev_id: u64,
    pub damaging: bool,
    pub model_error: bool,
    /// `None` for censored edits outside every bucket.
    pub bucket: Option<FocusBucket>,
    pub class: EditorClass,
}

#[derive(Debug, Clone)]
pub struct Fixture {
    pub edits: Vec<RawEdit>,
    pub predictions: Vec<Prediction>,
    /// Each distinct revision text, keyed by content hash, in first-seen order.
    pub texts: Vec<(ContentHash, String)>,
    pub truth: Vec<TruthRow>,
    pub ground_truth: GroundTruth,
}

const WORDS: &[&str] = &[
    "river", "city", "album", "species", "election", "museum", "bridge", "novel", "league", "island",
    "church", "station", "festival", "dynasty", "valley", "theorem", "village", "mountain", "company",
    "painter", "treaty", "railway", "castle", "season", "genus", "school", "poet", "battle", "harbor",
    "county", "the", "was", "is", "built", "founded", "named", "located", "released", "known", "in",
    "by", "for", "with", "early", "northern", "historic", "first", "major", "local", "annual",
];

const VANDALISM: &[&str] =
    &["lol", "JAKE WAS HERE", "asdfghjkl", "this article is stupid", "!!!!!!!!", "poop", "u r all dumb"];

const CATEGORIES: &[&str] = &[
    "Living people",
    "LGBT history",
    "Stub articles",
    "Mathematicians",
    "Rivers of Europe",
    "Video games",
    "American films",
    "Climate change",
];

const OTHER_NAMESPACES: &[u16] = &[1, 2, 3, 4, 10, 14];

struct Page {
    id: u64,
    namespace: u16,
    title: String,
    categories: Vec<String>,
}

#[derive(Clone)]
struct Editor {
    name: String,
    class: EditorClass,
}

struct Slot {
    page: usize,
    timestamp: i64,
    editor: Editor,
    vandal: bool,
    restore: bool,
}

fn sentence(rng: &mut ChaCha8Rng, token: u64) -> String {
    let len = rng.random_range(5..10);
    let mut words: Vec<&str> = (0..len).map(|_| WORDS[rng.random_range(0..WORDS.len())]).collect();
    let first = words[0];
    let capital = first[..1].to_uppercase() + &first[1..];
    words[0] = &capital;
    format!("{}.<ref>{token}</ref>", words.join(" "))
}

fn editor_for(rng: &mut ChaCha8Rng, class: EditorClass) -> Editor {
    let name = match class {
        EditorClass::Anonymous => format!("192.0.2.{}", rng.random_range(1..=254)),
        EditorClass::Newcomer => format!("Newcomer{}", rng.random_range(1..=800)),
        EditorClass::Experienced => format!("Editor{}", rng.random_range(1..=250)),
        EditorClass::Bot => format!("ExampleBot{}", rng.random_range(1..=8)),
    };
    Editor { name, class }
}

/// Per-edit editor metadata: (registered, bot, edit count, account age).
fn editor_stats(rng: &mut ChaCha8Rng, class: EditorClass) -> (bool, bool, u64, u64) {
    const DAY: u64 = 86_400;
    match class {
        EditorClass::Anonymous => (false, false, 0, 0),
        EditorClass::Newcomer => (true, false, rng.random_range(0..=100), rng.random_range(0..=30 * DAY)),
        EditorClass::Experienced => {
            (true, false, rng.random_range(101..=50_000), rng.random_range(30 * DAY..=3650 * DAY))
        }
        EditorClass::Bot => (true, true, rng.random_range(1_000..=1_000_000), rng.random_range(365 * DAY..=3650 * DAY)),
    }
}

fn pick_class(rng: &mut ChaCha8Rng, config: &FixtureConfig) -> EditorClass {
    let total: f64 = config.profiles.iter().map(|p| p.share).sum();
    let mut x = rng.random_range(0.0..total);
    for class in EditorClass::ALL {
        x -= config.profile(class).share;
        if x < 0.0 {
            return class;
        }
    }
    EditorClass::Experienced
}

fn score(rng: &mut ChaCha8Rng, high: bool) -> f64 {
    let x: f64 = if high { rng.random_range(0.5..0.99) } else { rng.random_range(0.01..0.499) };
    (x * 1000.0).round() / 1000.0
}

pub fn generate(config: &FixtureConfig) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n_pages = config.pages.max(1);

    let pages: Vec<Page> = (0..n_pages)
        .map(|i| {
            let namespace =
                if rng.random_bool(0.8) { 0 } else { OTHER_NAMESPACES[rng.random_range(0..OTHER_NAMESPACES.len())] };
            let a = WORDS[rng.random_range(0..30)];
            let b = WORDS[rng.random_range(0..30)];
            let mut categories: Vec<String> = CATEGORIES
                .iter()
                .filter(|_| rng.random_bool(0.2))
                .map(|c| c.to_string())
                .collect();
            categories.sort();
            Page {
                id: i as u64 + 1,
                namespace,
                title: format!("{}{} {} {}", a[..1].to_uppercase(), &a[1..], b, i + 1),
                categories,
            }
        })
        .collect();

    // Slots: every page gets at least one edit when there are enough edits.
    let mut per_page: Vec<Vec<Slot>> = (0..n_pages).map(|_| Vec::new()).collect();
    for i in 0..config.edits {
        let page = if i < n_pages { i } else { rng.random_range(0..n_pages) };
        let timestamp = config.start + rng.random_range(0..config.span_seconds.max(1));
        let class = pick_class(&mut rng, config);
        let editor = editor_for(&mut rng, class);
        per_page[page].push(Slot { page, timestamp, editor, vandal: false, restore: false });
    }

    for slots in &mut per_page {
        slots.sort_by_key(|s| s.timestamp);
        for k in 1..slots.len() {
            if slots[k].timestamp <= slots[k - 1].timestamp {
                slots[k].timestamp = slots[k - 1].timestamp + 1;
            }
        }
        // Vandalism: never the page creation, never a restore slot.
        let mut k = 1;
        while k < slots.len() {
            let rate = config.profile(slots[k].editor.class).vandalism_rate;
            if rng.random_bool(rate) {
                slots[k].vandal = true;
                if k + 1 < slots.len() && rng.random_bool(0.95) {
                    let bad_time = slots[k].timestamp;
                    let delay = rng.random_range(60..=7 * 86_400);
                    let editor = if rng.random_bool(config.self_revert_share) {
                        slots[k].editor.clone()
                    } else {
                        editor_for(&mut rng, EditorClass::Experienced)
                    };
                    let restore = &mut slots[k + 1];
                    restore.restore = true;
                    restore.timestamp = restore.timestamp.min(bad_time + delay);
                    restore.editor = editor;
                    k += 1;
                }
            }
            k += 1;
        }
    }

    // Global rev_ids in time order.
    let mut order: Vec<(i64, usize, usize)> = per_page
        .iter()
        .enumerate()
        .flat_map(|(p, slots)| slots.iter().enumerate().map(move |(k, s)| (s.timestamp, p, k)))
        .collect();
    order.sort();
    let mut rev_of: HashMap<(usize, usize), u64> = HashMap::with_capacity(order.len());
    for (i, (_, p, k)) in order.iter().enumerate() {
        rev_of.insert((*p, *k), 900_000_000 + i as u64 + 1);
    }

    // Texts, metadata and planned revert outcomes, page by page.
    let mut token = 0u64;
    let mut texts: Vec<(ContentHash, String)> = Vec::new();
    let mut seen: HashMap<ContentHash, ()> = HashMap::new();
    let mut edits: Vec<RawEdit> = Vec::with_capacity(config.edits);
    let mut reverted_by_plan: HashMap<u64, bool> = HashMap::new();
    let mut classes: HashMap<u64, EditorClass> = HashMap::new();

    for (p, slots) in per_page.iter().enumerate() {
        let page = &pages[p];
        let mut history: Vec<String> = Vec::with_capacity(slots.len());
        let mut lines: Vec<String> = Vec::new();
        for (k, slot) in slots.iter().enumerate() {
            let before = history.last().cloned().unwrap_or_default();
            if k == 0 {
                lines.push(format!("'''{}''' is an article.", page.title));
                for _ in 0..rng.random_range(3..8) {
                    token += 1;
                    lines.push(sentence(&mut rng, token));
                }
            } else if slot.restore {
                lines = history[k - 2].split('\n').map(str::to_owned).collect();
            } else if slot.vandal {
                token += 1;
                let junk = format!("{} {token}", VANDALISM[rng.random_range(0..VANDALISM.len())]);
                let at = rng.random_range(1..=lines.len());
                if rng.random_bool(0.5) && at < lines.len() {
                    lines[at] = junk;
                } else {
                    lines.insert(at, junk);
                }
            } else {
                token += 1;
                let new_line = sentence(&mut rng, token);
                if lines.len() < 12 && rng.random_bool(0.3) {
                    let at = rng.random_range(1..=lines.len());
                    lines.insert(at, new_line);
                } else {
                    let at = rng.random_range(1..lines.len().max(2)).min(lines.len() - 1).max(1);
                    if at < lines.len() {
                        lines[at] = new_line;
                    } else {
                        lines.push(new_line);
                    }
                }
            }
            let after = lines.join("\n");
            let hash = ContentHash::of_text(&after);
            if seen.insert(hash, ()).is_none() {
                texts.push((hash, after.clone()));
            }

            let rev_id = rev_of[&(p, k)];
            let parent_rev_id = if k == 0 { 0 } else { rev_of[&(p, k - 1)] };
            let (registered, bot, count, age) = editor_stats(&mut rng, slot.editor.class);
            let minor_rate = match slot.editor.class {
                EditorClass::Experienced => 0.3,
                EditorClass::Bot => 0.6,
                _ => 0.05,
            };
            edits.push(RawEdit {
                rev_id,
                parent_rev_id,
                page_id: page.id,
                page_namespace: page.namespace,
                page_title: page.title.clone(),
                page_categories: page.categories.clone(),
                page_size_before: before.len() as u64,
                byte_delta: after.len() as i64 - before.len() as i64,
                is_minor: rng.random_bool(minor_rate),
                timestamp: slot.timestamp,
                editor_name: slot.editor.name.clone(),
                editor_is_registered: registered,
                editor_is_bot: bot,
                editor_edit_count_at_time: count,
                editor_account_age_at_time: age,
                content_hash: hash,
            });
            classes.insert(rev_id, slot.editor.class);

            let reverted = slot.vandal
                && slots.get(k + 1).is_some_and(|next| {
                    let dt = next.timestamp - slot.timestamp;
                    next.restore && dt > 0 && dt as u64 <= config.window
                });
            reverted_by_plan.insert(rev_id, reverted);
            history.push(after);
        }
        debug_assert_eq!(slots.iter().filter(|s| s.page != p).count(), 0);
    }
    edits.sort_by_key(|e| e.rev_id);

    // Scores correlated with the planned outcome.
    let mut predictions: Vec<Prediction> = edits
        .iter()
        .map(|e| {
            let reverted = reverted_by_plan[&e.rev_id];
            let p_high = if reverted { config.high_score_if_reverted } else { config.high_score_if_kept };
            let high = rng.random_bool(p_high);
            Prediction { rev_id: e.rev_id, damaging_prob: score(&mut rng, high), model_version: MODEL_VERSION.into() }
        })
        .collect();

    let observed_until = edits.iter().map(|e| e.timestamp).max().unwrap_or(config.start);
    let censored: Vec<bool> = edits.iter().map(|e| is_censored(e.timestamp, observed_until, config.window)).collect();
    let bucket_of = |pred: &Prediction, i: usize| {
        let b = classify_focus(pred.damaging_prob, reverted_by_plan[&pred.rev_id], config.threshold);
        (!(b.is_consensus() && censored[i])).then_some(b)
    };

    // Trim Unexpected cells to a multiple of cell_multiple.
    let multiple = config.cell_multiple.max(1);
    for class in EditorClass::ALL {
        for bucket in [FocusBucket::UnexpectedConsensus, FocusBucket::UnexpectedRevert] {
            let mut members: Vec<usize> = (0..edits.len())
                .filter(|&i| classes[&edits[i].rev_id] == class && bucket_of(&predictions[i], i) == Some(bucket))
                .collect();
            members.shuffle(&mut rng);
            for &i in members.iter().take(members.len() % multiple) {
                // Flip the prediction side; the edit moves to the Expected bucket.
                predictions[i].damaging_prob = score(&mut rng, !bucket.predicted_damaging());
            }
        }
    }

    // Cells: (class, bucket) with bucket None meaning censored-excluded,
    // split further by prediction side.
    let mut cells: BTreeMap<(EditorClass, Option<FocusBucket>, bool), Vec<usize>> = BTreeMap::new();
    for (i, pred) in predictions.iter().enumerate() {
        let predicted = pred.damaging_prob >= config.threshold;
        cells.entry((classes[&pred.rev_id], bucket_of(pred, i), predicted)).or_default().push(i);
    }

    let unexpected_rate = |class: EditorClass, bucket: FocusBucket| match bucket {
        FocusBucket::UnexpectedConsensus => Some(config.profile(class).unexpected_consensus_fp),
        FocusBucket::UnexpectedRevert => Some(config.profile(class).unexpected_revert_fn),
        _ => None,
    };
    let expected_override = config.error_rate_target.map(|target| {
        let (mut planted, mut rest) = (0.0, 0usize);
        for ((class, bucket, _), members) in &cells {
            match bucket.and_then(|b| unexpected_rate(*class, b)) {
                Some(rate) => planted += (rate * members.len() as f64).round(),
                None => rest += members.len(),
            }
        }
        ((target * edits.len() as f64 - planted) / rest.max(1) as f64).clamp(0.0, 1.0)
    });

    let mut model_error = vec![false; edits.len()];
    let mut subpops: BTreeMap<EditorClass, Subpopulation> = EditorClass::ALL
        .iter()
        .map(|c| {
            (*c, Subpopulation { name: c.name().into(), filter: c.filter(), cells: BTreeMap::new(), censored_excluded: 0 })
        })
        .collect();
    for ((class, bucket, predicted), members) in &cells {
        let rate = match bucket.and_then(|b| unexpected_rate(*class, b)) {
            Some(rate) => rate,
            None => expected_override.unwrap_or(if *predicted {
                config.expected_revert_fp
            } else {
                config.expected_consensus_fn
            }),
        };
        let k = (rate * members.len() as f64).round() as usize;
        let mut shuffled = members.clone();
        shuffled.shuffle(&mut rng);
        for &i in shuffled.iter().take(k) {
            model_error[i] = true;
        }
        let sub = subpops.get_mut(class).expect("class present");
        match bucket {
            Some(b) => {
                sub.cells.insert(
                    *b,
                    Cell {
                        error_kind: ErrorKind::for_bucket(*b).0,
                        planted_rate: rate,
                        n: members.len() as u64,
                        n_errors: k as u64,
                    },
                );
            }
            None => sub.censored_excluded += members.len() as u64,
        }
    }
    for sub in subpops.values_mut() {
        for b in FocusBucket::ALL {
            sub.cells.entry(b).or_insert(Cell {
                error_kind: ErrorKind::for_bucket(b).0,
                planted_rate: 0.0,
                n: 0,
                n_errors: 0,
            });
        }
    }

    let truth: Vec<TruthRow> = (0..edits.len())
        .map(|i| {
            let predicted = predictions[i].damaging_prob >= config.threshold;
            TruthRow {
                rev_id: edits[i].rev_id,
                damaging: predicted != model_error[i],
                model_error: model_error[i],
                bucket: bucket_of(&predictions[i], i),
                class: classes[&edits[i].rev_id],
            }
        })
        .collect();

    let ground_truth = GroundTruth {
        config: config.clone(),
        edits: edits.len() as u64,
        model_errors: model_error.iter().filter(|e| **e).count() as u64,
        subpopulations: subpops.into_values().collect(),
    };
    Fixture { edits, predictions, texts, truth, ground_truth }
}

impl Fixture {
    /// Runs the ingest pipeline with the parameters the fixture assumes.
    pub fn dataset(&self) -> Dataset {
        let opts = IngestOptions { window: self.ground_truth.config.window, radius: self.ground_truth.config.radius };
        build_dataset(self.edits.clone(), self.predictions.clone(), opts).expect("fixture ingests").0
    }

    pub fn text_map(&self) -> HashMap<ContentHash, String> {
        self.texts.iter().cloned().collect()
    }

    pub fn write_to_dir(&self, dir: &Path) -> io::Result<()> {
        fs::create_dir_all(dir)?;
        write_edits(BufWriter::new(File::create(dir.join(EDITS_FILE))?), &self.edits)?;
        write_predictions(BufWriter::new(File::create(dir.join(PREDICTIONS_FILE))?), &self.predictions)?;

        let mut out = BufWriter::new(File::create(dir.join(TEXTS_FILE))?);
        for (hash, text) in &self.texts {
            serde_json::to_writer(&mut out, &TextEntry { content_hash: *hash, text: text.clone() })?;
            out.write_all(b"\n")?;
        }
        out.flush()?;

        let mut out = BufWriter::new(File::create(dir.join(GROUND_TRUTH_FILE))?);
        serde_json::to_writer_pretty(&mut out, &self.ground_truth)?;
        out.write_all(b"\n")?;
        out.flush()?;

        let mut out = BufWriter::new(File::create(dir.join(TRUTH_FILE))?);
        writeln!(out, "rev_id\tdamaging\tmodel_error\tbucket\tclass")?;
        for t in &self.truth {
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}",
                t.rev_id,
                t.damaging as u8,
                t.model_error as u8,
                t.bucket.map_or("-", |b| b.name()),
                t.class.name()
            )?;
        }
        out.flush()
    }
}

/// One line of `texts.ndjson`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextEntry {
    pub content_hash: ContentHash,
    pub text: String,
}

#[derive(Debug, thiserror::Error)]
pub enum TruthError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("line {0}: malformed truth row")]
    Malformed(usize),
}

/// Reads `truth.tsv` into `rev_id -> damaging`.
pub fn read_truth(path: &Path) -> Result<HashMap<u64, bool>, TruthError> {
    let text = fs::read_to_string(path)?;
    let mut out = HashMap::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let mut fields = line.split('\t');
        let rev = fields.next().and_then(|f| f.parse::<u64>().ok());
        let damaging = match fields.next() {
            Some("1") => Some(true),
            Some("0") => Some(false),
            _ => None,
        };
        match (rev, damaging) {
            (Some(r), Some(d)) => {
                out.insert(r, d);
            }
            _ => return Err(TruthError::Malformed(i + 1)),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::focus::FocusPolicy;

    fn small(seed: u64) -> Fixture {
        generate(&FixtureConfig { edits: 3_000, pages: 120, seed, ..Default::default() })
    }

    #[test]
    fn planted_buckets_match_ingest() {
        let fx = small(1);
        let ds = fx.dataset();
        let policy = FocusPolicy::default();
        assert_eq!(ds.len(), fx.edits.len());
        for t in &fx.truth {
            assert_eq!(ds.get(t.rev_id).unwrap().bucket(&policy), t.bucket, "rev {}", t.rev_id);
        }
    }

    #[test]
    fn hashes_match_texts_and_sizes() {
        let fx = small(2);
        let texts = fx.text_map();
        let mut by_rev: HashMap<u64, &RawEdit> = HashMap::new();
        for e in &fx.edits {
            by_rev.insert(e.rev_id, e);
        }
        for e in &fx.edits {
            let after = &texts[&e.content_hash];
            assert_eq!(ContentHash::of_text(after), e.content_hash);
            let before_len = if e.parent_rev_id == 0 { 0 } else { texts[&by_rev[&e.parent_rev_id].content_hash].len() };
            assert_eq!(e.page_size_before, before_len as u64);
            assert_eq!(e.byte_delta, after.len() as i64 - before_len as i64);
        }
    }

    #[test]
    fn unexpected_cells_hit_planted_rates_exactly() {
        let fx = small(3);
        for sub in &fx.ground_truth.subpopulations {
            for b in [FocusBucket::UnexpectedConsensus, FocusBucket::UnexpectedRevert] {
                let cell = &sub.cells[&b];
                assert_eq!(cell.n % 10, 0, "{} {b}", sub.name);
                if cell.n > 0 {
                    assert_eq!(cell.n_errors as f64 / cell.n as f64, cell.planted_rate);
                }
            }
        }
        let errors = fx.truth.iter().filter(|t| t.model_error).count() as u64;
        assert_eq!(errors, fx.ground_truth.model_errors);
    }

    #[test]
    fn deterministic_output() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        small(4).write_to_dir(a.path()).unwrap();
        small(4).write_to_dir(b.path()).unwrap();
        for f in [EDITS_FILE, PREDICTIONS_FILE, TEXTS_FILE, GROUND_TRUTH_FILE, TRUTH_FILE] {
            assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
        }
        let truth = read_truth(&a.path().join(TRUTH_FILE)).unwrap();
        assert_eq!(truth.len(), 3_000);
    }

    #[test]
    fn single_page_history_is_valid() {
        let fx = generate(&FixtureConfig { edits: 2_000, pages: 1, seed: 5, ..Default::default() });
        assert!(fx.edits.iter().all(|e| e.page_id == 1));
        let ds = fx.dataset();
        let policy = FocusPolicy::default();
        assert!(ds.records().iter().any(|r| r.reverted));
        for t in &fx.truth {
            assert_eq!(ds.get(t.rev_id).unwrap().bucket(&policy), t.bucket);
        }
    }

    #[test]
    fn error_rate_target() {
        let mut config = FixtureConfig { edits: 5_000, pages: 250, seed: 6, ..Default::default() };
        config.error_rate_target = Some(0.02);
        let fx = generate(&config);
        let rate = fx.ground_truth.model_errors as f64 / fx.edits.len() as f64;
        assert!((rate - 0.02).abs() < 0.002, "{rate}");
    }
}
