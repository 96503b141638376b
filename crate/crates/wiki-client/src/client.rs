use std::collections::HashMap;
use std::fs;
use std::io::{self, BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use tokio::sync::Mutex;

use crate::diff::{compute_diff, excerpt, DiffOp};
use crate::transport::{Transport, TransportError};

pub const DEFAULT_BACKOFF: [Duration; 2] = [Duration::from_millis(250), Duration::from_secs(1)];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DiffSource {
    Fixture,
    Upstream,
    Cache,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiffDoc {
    pub rev_id: u64,
    pub before_excerpt: String,
    pub after_excerpt: String,
    pub diff_ops: Vec<DiffOp>,
    pub source: DiffSource,
}

impl DiffDoc {
    fn build(rev_id: u64, before: &str, after: &str, source: DiffSource) -> DiffDoc {
        let before_excerpt = excerpt(before);
        let after_excerpt = excerpt(after);
        let diff_ops = compute_diff(&before_excerpt, &after_excerpt);
        DiffDoc { rev_id, before_excerpt, after_excerpt, diff_ops, source }
    }
}

/// What the caller knows about a revision. Fixture mode resolves texts by
/// content hash, live mode by revision id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RevisionRef {
    pub rev_id: u64,
    /// 0 for a page creation.
    pub parent_rev_id: u64,
    pub content_sha1: String,
    pub parent_sha1: Option<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum DiffError {
    #[error("revision {0} not found")]
    NotFound(u64),
    #[error("upstream unavailable for revision {rev_id}: {reason}")]
    Unavailable { rev_id: u64, reason: String },
}

/// Revision texts keyed by lowercase hex SHA-1, read from an NDJSON file of
/// `{"content_hash": .., "text": ..}` lines.
#[derive(Debug, Clone, Default)]
pub struct FixtureTexts {
    texts: HashMap<String, String>,
}

#[derive(Deserialize)]
struct TextLine {
    content_hash: String,
    text: String,
}

impl FixtureTexts {
    pub fn load(path: &Path) -> io::Result<FixtureTexts> {
        let mut texts = HashMap::new();
        for (i, line) in BufReader::new(fs::File::open(path)?).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: TextLine = serde_json::from_str(&line)
                .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, format!("line {}: {e}", i + 1)))?;
            texts.insert(entry.content_hash, entry.text);
        }
        Ok(FixtureTexts { texts })
    }

    pub fn get(&self, sha1: &str) -> Option<&str> {
        self.texts.get(sha1).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.texts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.texts.is_empty()
    }
}

impl FromIterator<(String, String)> for FixtureTexts {
    fn from_iter<I: IntoIterator<Item = (String, String)>>(iter: I) -> Self {
        FixtureTexts { texts: iter.into_iter().collect() }
    }
}

enum Fetch {
    NotFound,
    Retry(String),
}

pub struct DiffClient {
    transport: Arc<dyn Transport>,
    fixture: Option<FixtureTexts>,
    api_url: Option<String>,
    cache_dir: Option<PathBuf>,
    backoff: Vec<Duration>,
    memory: Mutex<HashMap<u64, DiffDoc>>,
    inflight: Mutex<HashMap<u64, Arc<Mutex<()>>>>,
}

impl DiffClient {
    pub fn new(transport: Arc<dyn Transport>) -> DiffClient {
        DiffClient {
            transport,
            fixture: None,
            api_url: None,
            cache_dir: None,
            backoff: DEFAULT_BACKOFF.to_vec(),
            memory: Mutex::new(HashMap::new()),
            inflight: Mutex::new(HashMap::new()),
        }
    }

    /// Serve every diff from `texts`; the transport is never used.
    pub fn with_fixture(mut self, texts: FixtureTexts) -> Self {
        self.fixture = Some(texts);
        self
    }

    pub fn with_upstream(mut self, api_url: impl Into<String>) -> Self {
        self.api_url = Some(api_url.into());
        self
    }

    pub fn with_cache_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.cache_dir = Some(dir.into());
        self
    }

    /// Delays between attempts; one retry per entry.
    pub fn with_backoff(mut self, backoff: Vec<Duration>) -> Self {
        self.backoff = backoff;
        self
    }

    pub async fn get_diff(&self, rev: &RevisionRef) -> Result<DiffDoc, DiffError> {
        if let Some(texts) = &self.fixture {
            let after = texts.get(&rev.content_sha1).ok_or(DiffError::NotFound(rev.rev_id))?;
            let before = match &rev.parent_sha1 {
                Some(h) => texts.get(h).ok_or(DiffError::NotFound(rev.rev_id))?,
                None => "",
            };
            return Ok(DiffDoc::build(rev.rev_id, before, after, DiffSource::Fixture));
        }
        let Some(api_url) = &self.api_url else {
            return Err(DiffError::Unavailable { rev_id: rev.rev_id, reason: "no upstream configured".into() });
        };

        // Single flight: concurrent misses for one revision wait on its lock,
        // then find the cache filled by whoever fetched first.
        let gate = self.inflight.lock().await.entry(rev.rev_id).or_default().clone();
        let _held = gate.lock().await;

        if let Some(doc) = self.cached(rev.rev_id).await {
            return Ok(doc);
        }
        let (before, after) = self.fetch_pair(api_url, rev).await?;
        let doc = DiffDoc::build(rev.rev_id, &before, &after, DiffSource::Upstream);
        self.store(&doc).await;
        Ok(doc)
    }

    fn cache_path(&self, rev_id: u64) -> Option<PathBuf> {
        self.cache_dir.as_ref().map(|d| d.join(format!("{rev_id}.json")))
    }

    async fn cached(&self, rev_id: u64) -> Option<DiffDoc> {
        if let Some(doc) = self.memory.lock().await.get(&rev_id) {
            return Some(DiffDoc { source: DiffSource::Cache, ..doc.clone() });
        }
        let bytes = tokio::fs::read(self.cache_path(rev_id)?).await.ok()?;
        let doc: DiffDoc = serde_json::from_slice(&bytes).ok()?;
        (doc.rev_id == rev_id).then_some(DiffDoc { source: DiffSource::Cache, ..doc })
    }

    async fn store(&self, doc: &DiffDoc) {
        self.memory.lock().await.insert(doc.rev_id, doc.clone());
        if let (Some(dir), Some(path)) = (&self.cache_dir, self.cache_path(doc.rev_id)) {
            // A failed cache write only costs a refetch after restart.
            let json = serde_json::to_vec(doc).expect("DiffDoc serializes");
            let tmp = path.with_extension("json.tmp");
            if tokio::fs::create_dir_all(dir).await.is_ok() && tokio::fs::write(&tmp, json).await.is_ok() {
                let _ = tokio::fs::rename(&tmp, &path).await;
            }
        }
    }

    async fn fetch_pair(&self, api_url: &str, rev: &RevisionRef) -> Result<(String, String), DiffError> {
        let revids = if rev.parent_rev_id == 0 {
            rev.rev_id.to_string()
        } else {
            format!("{}|{}", rev.parent_rev_id, rev.rev_id)
        };
        let query = [
            ("action", "query".to_owned()),
            ("prop", "revisions".to_owned()),
            ("revids", revids),
            ("rvprop", "ids|content".to_owned()),
            ("rvslots", "main".to_owned()),
            ("format", "json".to_owned()),
            ("formatversion", "2".to_owned()),
        ];

        let mut attempt = 0;
        loop {
            let failure = match self.transport.get(api_url, &query).await {
                Ok(resp) if (200..300).contains(&resp.status) => match parse_revisions(&resp.body) {
                    Ok(texts) => {
                        let after = texts.get(&rev.rev_id).cloned();
                        let before = if rev.parent_rev_id == 0 {
                            Some(String::new())
                        } else {
                            texts.get(&rev.parent_rev_id).cloned()
                        };
                        return match (before, after) {
                            (Some(b), Some(a)) => Ok((b, a)),
                            _ => Err(DiffError::NotFound(rev.rev_id)),
                        };
                    }
                    Err(reason) => Fetch::Retry(reason),
                },
                Ok(resp) if (400..500).contains(&resp.status) => Fetch::NotFound,
                Ok(resp) => Fetch::Retry(format!("upstream status {}", resp.status)),
                Err(TransportError::Timeout) => Fetch::Retry("upstream timed out".into()),
                Err(TransportError::Failed(e)) => Fetch::Retry(e),
            };
            match failure {
                Fetch::NotFound => return Err(DiffError::NotFound(rev.rev_id)),
                Fetch::Retry(reason) => match self.backoff.get(attempt) {
                    Some(delay) => {
                        tokio::time::sleep(*delay).await;
                        attempt += 1;
                    }
                    None => return Err(DiffError::Unavailable { rev_id: rev.rev_id, reason }),
                },
            }
        }
    }
}

/// Extracts `revid -> main slot content` from a `formatversion=2` response.
/// Revisions reported missing, hidden or absent are simply left out.
pub fn parse_revisions(body: &str) -> Result<HashMap<u64, String>, String> {
    let v: Value = serde_json::from_str(body).map_err(|e| format!("malformed upstream response: {e}"))?;
    if let Some(err) = v.get("error") {
        return Err(format!("upstream error: {err}"));
    }
    let mut out = HashMap::new();
    let pages = v.pointer("/query/pages").and_then(Value::as_array).cloned().unwrap_or_default();
    for page in pages {
        for r in page.get("revisions").and_then(Value::as_array).into_iter().flatten() {
            let id = r.get("revid").and_then(Value::as_u64);
            let text = r.pointer("/slots/main/content").and_then(Value::as_str);
            if let (Some(id), Some(text)) = (id, text) {
                out.insert(id, text.to_owned());
            }
        }
    }
    Ok(out)
}
