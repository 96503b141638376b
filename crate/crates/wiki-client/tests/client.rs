use std::collections::VecDeque;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use async_trait::async_trait;
use editaudit_wiki::{
    DiffClient, DiffError, DiffSource, FixtureTexts, OpKind, Response, RevisionRef, Transport, TransportError,
};

struct Panics;

#[async_trait]
impl Transport for Panics {
    async fn get(&self, url: &str, _: &[(&str, String)]) -> Result<Response, TransportError> {
        panic!("offline mode touched the network: {url}");
    }
}

/// Replays scripted outcomes (the last one repeats) and counts calls.
struct Scripted {
    calls: AtomicUsize,
    script: Mutex<VecDeque<Result<Response, TransportError>>>,
    delay: Duration,
}

impl Scripted {
    fn new(script: Vec<Result<Response, TransportError>>) -> Arc<Self> {
        Arc::new(Scripted { calls: AtomicUsize::new(0), script: Mutex::new(script.into()), delay: Duration::ZERO })
    }
    fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

#[async_trait]
impl Transport for Scripted {
    async fn get(&self, _: &str, query: &[(&str, String)]) -> Result<Response, TransportError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        assert!(query.contains(&("revids", "10|11".to_owned())), "{query:?}");
        tokio::time::sleep(self.delay).await;
        let mut script = self.script.lock().unwrap();
        if script.len() > 1 { script.pop_front().unwrap() } else { script.front().unwrap().clone() }
    }
}

fn ok_body() -> Result<Response, TransportError> {
    let body = r#"{"query":{"pages":[{"pageid":1,"revisions":[
        {"revid":10,"parentid":9,"slots":{"main":{"content":"a\nb"}}},
        {"revid":11,"parentid":10,"slots":{"main":{"content":"a\nc"}}}]}]}}"#;
    Ok(Response { status: 200, body: body.into() })
}

fn status(code: u16) -> Result<Response, TransportError> {
    Ok(Response { status: code, body: String::new() })
}

fn rev() -> RevisionRef {
    RevisionRef { rev_id: 11, parent_rev_id: 10, content_sha1: "h11".into(), parent_sha1: Some("h10".into()) }
}

fn live(t: Arc<Scripted>) -> DiffClient {
    DiffClient::new(t).with_upstream("http://wiki.invalid/w/api.php").with_backoff(vec![Duration::from_millis(5); 2])
}

#[tokio::test]
async fn fixture_mode_never_uses_transport() {
    let texts: FixtureTexts = [("h10".to_owned(), "a\nb".to_owned()), ("h11".to_owned(), "a\nb".to_owned())].into_iter().collect();
    let client = DiffClient::new(Arc::new(Panics)).with_fixture(texts).with_upstream("http://wiki.invalid");
    let doc = client.get_diff(&rev()).await.unwrap();
    assert_eq!(doc.source, DiffSource::Fixture);
    assert_eq!(doc.diff_ops.len(), 1);
    assert_eq!(doc.diff_ops[0].op, OpKind::Equal);

    let mut missing = rev();
    missing.content_sha1 = "nope".into();
    assert!(matches!(client.get_diff(&missing).await, Err(DiffError::NotFound(11))));

    let creation = RevisionRef { rev_id: 3, parent_rev_id: 0, content_sha1: "h10".into(), parent_sha1: None };
    let doc = client.get_diff(&creation).await.unwrap();
    assert_eq!(doc.before_excerpt, "");
}

#[tokio::test]
async fn live_fetch_then_cache() {
    let dir = tempfile::tempdir().unwrap();
    let t = Scripted::new(vec![ok_body()]);
    let client = live(t.clone()).with_cache_dir(dir.path());
    let first = client.get_diff(&rev()).await.unwrap();
    assert_eq!(first.source, DiffSource::Upstream);
    assert_eq!(first.after_excerpt, "a\nc");
    let second = client.get_diff(&rev()).await.unwrap();
    assert_eq!(second.source, DiffSource::Cache);
    assert_eq!(second.diff_ops, first.diff_ops);
    assert_eq!(t.calls(), 1);
    assert!(dir.path().join("11.json").exists());

    // A fresh client reads the disk cache without another request.
    let again = live(t.clone()).with_cache_dir(dir.path()).get_diff(&rev()).await.unwrap();
    assert_eq!(again.source, DiffSource::Cache);
    assert_eq!(t.calls(), 1);
}

#[tokio::test]
async fn client_errors_are_not_found_without_retry() {
    let t = Scripted::new(vec![status(404)]);
    assert!(matches!(live(t.clone()).get_diff(&rev()).await, Err(DiffError::NotFound(11))));
    assert_eq!(t.calls(), 1);
}

#[tokio::test]
async fn server_errors_retry_twice_then_unavailable() {
    let t = Scripted::new(vec![status(503)]);
    let started = Instant::now();
    let client = DiffClient::new(t.clone())
        .with_upstream("http://wiki.invalid")
        .with_backoff(vec![Duration::from_millis(20), Duration::from_millis(40)]);
    assert!(matches!(client.get_diff(&rev()).await, Err(DiffError::Unavailable { rev_id: 11, .. })));
    assert_eq!(t.calls(), 3);
    assert!(started.elapsed() >= Duration::from_millis(60));

    let t = Scripted::new(vec![Err(TransportError::Timeout), status(500), ok_body()]);
    assert_eq!(live(t.clone()).get_diff(&rev()).await.unwrap().source, DiffSource::Upstream);
    assert_eq!(t.calls(), 3);
}

#[tokio::test]
async fn missing_revision_in_body_is_not_found() {
    let t = Scripted::new(vec![Ok(Response { status: 200, body: r#"{"query":{"badrevids":{"11":{"missing":true}}}}"#.into() })]);
    assert!(matches!(live(t).get_diff(&rev()).await, Err(DiffError::NotFound(11))));
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_misses_coalesce() {
    let t = Arc::new(Scripted {
        calls: AtomicUsize::new(0),
        script: Mutex::new(vec![ok_body()].into()),
        delay: Duration::from_millis(50),
    });
    let client = Arc::new(live(t.clone()));
    let tasks: Vec<_> = (0..16)
        .map(|_| {
            let c = client.clone();
            tokio::spawn(async move { c.get_diff(&rev()).await.unwrap() })
        })
        .collect();
    for task in tasks {
        task.await.unwrap();
    }
    assert_eq!(t.calls(), 1);
}

#[tokio::test]
async fn no_upstream_is_unavailable() {
    let client = DiffClient::new(Arc::new(Panics));
    assert!(matches!(client.get_diff(&rev()).await, Err(DiffError::Unavailable { .. })));
}
