use axum::body::Bytes;
use axum::extract::{FromRequestParts, Path, RawQuery, State};
use axum::http::request::Parts;
use axum::http::{header, StatusCode};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tower_http::services::ServeDir;

use editaudit::dataset::EditRecord;
use editaudit::filter::{FilterFingerprint, FilterSpec};
use editaudit::focus::{BucketCounts, FocusBucket};
use editaudit::query::{query, QueryError, SampleRequest};
use editaudit::report::{comparison, summary, LabelScope, ReportError};
use editaudit::store::{Annotation, Auditor, Label, NewAnnotation, StoreError};
use editaudit_wiki::{DiffError, RevisionRef};

use crate::error::ApiError;
use crate::AppState;

pub const DEFAULT_PAGE_SIZE: usize = 20;

const PLACEHOLDER_PAGE: &str = "<!doctype html>\n<html><head><meta charset=\"utf-8\"><title>editaudit</title></head>\n\
<body><h1>editaudit</h1><p>The audit API is served under <code>/api/</code>. \
Set <code>static_dir</code> in the service config to serve a web interface here.</p></body></html>\n";

pub fn router(state: AppState) -> Router {
    let api = Router::new()
        .route("/api/auditors", post(create_auditor))
        .route("/api/session", get(session))
        .route("/api/presets", get(presets))
        .route("/api/edits", get(edits))
        .route("/api/annotations", post(annotate))
        .route("/api/history", get(history))
        .route("/api/summary", get(summary_handler))
        .route("/api/compare", get(compare_handler))
        .route("/api/diff/{rev_id}", get(diff))
        .route("/api/{*rest}", axum::routing::any(api_not_found));
    let router = match &state.static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api.route("/", get(|| async { Html(PLACEHOLDER_PAGE) })),
    };
    router.with_state(state)
}

async fn api_not_found() -> ApiError {
    ApiError::not_found("no such endpoint")
}

/// The auditor behind the request's bearer token.
pub struct Authed(pub Auditor);

impl FromRequestParts<AppState> for Authed {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &AppState) -> Result<Self, ApiError> {
        let token = parts
            .headers
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "))
            .map(str::trim)
            .ok_or_else(ApiError::unauthorized)?;
        state.store.authenticate(token).map(Authed).ok_or_else(ApiError::unauthorized)
    }
}

/// Parses the query string, rejecting unknown parameters.
fn params<T: DeserializeOwned>(raw: &RawQuery) -> Result<T, ApiError> {
    serde_urlencoded::from_str(raw.0.as_deref().unwrap_or("")).map_err(|e| ApiError::bad_request(format!("query: {e}")))
}

fn body<T: DeserializeOwned>(bytes: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(bytes).map_err(|e| ApiError::bad_request(format!("body: {e}")))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NoParams {}

fn parse_filter(raw: Option<&str>) -> Result<FilterSpec, ApiError> {
    match raw.map(str::trim) {
        None | Some("") => Ok(FilterSpec::all()),
        Some(s) => FilterSpec::decode(s).map_err(|e| ApiError::bad_request(e.to_string())),
    }
}

fn parse_bucket(raw: &str) -> Result<FocusBucket, ApiError> {
    raw.parse().map_err(|e: editaudit::focus::UnknownBucket| ApiError::bad_request(e.to_string()))
}

fn parse_scope(raw: Option<&str>, auditor: &Auditor) -> Result<LabelScope, ApiError> {
    match raw {
        None | Some("auditor") => Ok(LabelScope::Auditor(auditor.auditor_id.clone())),
        Some("latest") => Ok(LabelScope::LatestPerRevision),
        Some(other) => Err(ApiError::bad_request(format!("scope must be \"auditor\" or \"latest\", got {other:?}"))),
    }
}

fn store_error(e: StoreError) -> ApiError {
    match e {
        StoreError::UnknownRev(rev) => ApiError::not_found(format!("rev_id {rev} is not in the dataset")),
        StoreError::UnknownAuditor => ApiError::unauthorized(),
        StoreError::InvalidName | StoreError::NoteTooLong => ApiError::bad_request(e.to_string()),
        StoreError::Io(_) | StoreError::Corrupt { .. } => ApiError::internal(e.to_string()),
    }
}

fn report_error(e: ReportError) -> ApiError {
    match e {
        ReportError::InsufficientData(_) => ApiError::conflict(e.to_string()),
        ReportError::Filter(_) | ReportError::Stats(_) => ApiError::bad_request(e.to_string()),
    }
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f).await.map_err(|e| ApiError::internal(e.to_string()))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NewAuditorBody {
    display_name: String,
}

#[derive(Serialize)]
struct NewAuditorResponse {
    auditor_id: String,
    display_name: String,
    token: String,
}

async fn create_auditor(State(state): State<AppState>, raw: RawQuery, bytes: Bytes) -> Result<Response, ApiError> {
    params::<NoParams>(&raw)?;
    let req: NewAuditorBody = body(&bytes)?;
    let store = state.store.clone();
    let (auditor, token) = blocking(move || store.create_auditor(&req.display_name)).await?.map_err(store_error)?;
    let resp = NewAuditorResponse { auditor_id: auditor.auditor_id, display_name: auditor.display_name, token };
    Ok((StatusCode::CREATED, Json(resp)).into_response())
}

#[derive(Serialize)]
struct SessionResponse {
    auditor_id: String,
    display_name: String,
    threshold: f64,
    count_self_reverts: bool,
    revert_window_seconds: u64,
    revert_radius: u64,
    observed_until: i64,
    alpha_default: f64,
    records: usize,
}

async fn session(State(state): State<AppState>, Authed(me): Authed, raw: RawQuery) -> Result<Json<SessionResponse>, ApiError> {
    params::<NoParams>(&raw)?;
    let header = state.dataset.header();
    Ok(Json(SessionResponse {
        auditor_id: me.auditor_id,
        display_name: me.display_name,
        threshold: state.policy.threshold,
        count_self_reverts: state.policy.count_self_reverts,
        revert_window_seconds: header.revert_window,
        revert_radius: header.revert_radius,
        observed_until: header.observed_until,
        alpha_default: state.alpha_default,
        records: state.dataset.len(),
    }))
}

#[derive(Serialize)]
struct Preset {
    name: &'static str,
    filter: FilterSpec,
    encoded: String,
    filter_fingerprint: FilterFingerprint,
}

async fn presets(_: Authed, raw: RawQuery) -> Result<Json<Vec<Preset>>, ApiError> {
    params::<NoParams>(&raw)?;
    let presets = FilterSpec::presets()
        .into_iter()
        .map(|(name, filter)| Preset { name, encoded: filter.encode(), filter_fingerprint: filter.fingerprint(), filter })
        .collect();
    Ok(Json(presets))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EditsParams {
    filter: Option<String>,
    bucket: Option<String>,
    n: Option<usize>,
    seed: Option<u64>,
    cursor: Option<String>,
}

#[derive(Serialize)]
struct EditView<'a> {
    #[serde(flatten)]
    record: &'a EditRecord,
    bucket: Option<FocusBucket>,
    /// The requesting auditor's live label, if any.
    label: Option<Label>,
    annotation_id: Option<u64>,
}

#[derive(Serialize)]
struct EditsResponse<'a> {
    edits: Vec<EditView<'a>>,
    counts: BucketCounts,
    matched: u64,
    censored_excluded: u64,
    next_cursor: Option<String>,
    filter: FilterSpec,
    filter_fingerprint: FilterFingerprint,
    bucket: Option<FocusBucket>,
    seed: u64,
    threshold: f64,
}

async fn edits(State(state): State<AppState>, Authed(me): Authed, raw: RawQuery) -> Result<Response, ApiError> {
    let p: EditsParams = params(&raw)?;
    let filter = parse_filter(p.filter.as_deref())?;
    let bucket = match p.bucket.as_deref() {
        None | Some("") | Some("all") => None,
        Some(b) => Some(parse_bucket(b)?),
    };
    let req = SampleRequest {
        filter: filter.clone(),
        bucket,
        n: p.n.unwrap_or(DEFAULT_PAGE_SIZE),
        seed: p.seed.unwrap_or(0),
        cursor: p.cursor.filter(|c| !c.is_empty()),
    };
    let result = query(&state.dataset, &req, &state.policy).map_err(|e| match e {
        QueryError::TooMany(_) | QueryError::Filter(_) | QueryError::BadCursor => ApiError::bad_request(e.to_string()),
    })?;
    let edits = state.store.read(|snap| {
        result
            .records
            .iter()
            .map(|r| {
                let mine = snap.live_label(&me.auditor_id, r.rev_id);
                EditView {
                    record: r,
                    bucket: r.bucket(&state.policy),
                    label: mine.map(|a| a.label),
                    annotation_id: mine.map(|a| a.annotation_id),
                }
            })
            .collect()
    });
    let resp = EditsResponse {
        edits,
        counts: result.population.counts,
        matched: result.population.matched,
        censored_excluded: result.population.censored_excluded,
        next_cursor: result.next_cursor,
        filter_fingerprint: filter.fingerprint(),
        filter,
        bucket,
        seed: req.seed,
        threshold: state.policy.threshold,
    };
    Ok(Json(resp).into_response())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AnnotationBody {
    rev_id: u64,
    label: Label,
    bucket: FocusBucket,
    /// A FilterSpec object or its encoded string; absent means match-all.
    #[serde(default)]
    filter: Option<serde_json::Value>,
    #[serde(default)]
    note: Option<String>,
}

#[derive(Serialize)]
struct AnnotationResponse {
    #[serde(flatten)]
    annotation: Annotation,
    superseded_annotation_id: Option<u64>,
}

async fn annotate(State(state): State<AppState>, Authed(me): Authed, raw: RawQuery, bytes: Bytes) -> Result<Response, ApiError> {
    params::<NoParams>(&raw)?;
    if !state.limiter.allow(&me.auditor_id) {
        return Err(ApiError::too_many_requests());
    }
    let req: AnnotationBody = body(&bytes)?;
    let filter = match req.filter {
        None | Some(serde_json::Value::Null) => FilterSpec::all(),
        Some(serde_json::Value::String(s)) => parse_filter(Some(&s))?,
        Some(v @ serde_json::Value::Object(_)) => {
            let spec: FilterSpec = serde_json::from_value(v).map_err(|e| ApiError::bad_request(format!("filter: {e}")))?;
            spec.validate().map_err(|e| ApiError::bad_request(e.to_string()))?;
            spec
        }
        Some(_) => return Err(ApiError::bad_request("filter must be an object or an encoded string")),
    };
    let record = state.dataset.get(req.rev_id).ok_or_else(|| ApiError::not_found(format!("rev_id {} is not in the dataset", req.rev_id)))?;
    if !filter.matches(record) {
        return Err(ApiError::bad_request(format!("rev_id {} does not match the filter", req.rev_id)));
    }
    if record.bucket(&state.policy) != Some(req.bucket) {
        return Err(ApiError::bad_request(format!("rev_id {} is not in bucket {}", req.rev_id, req.bucket)));
    }
    let new = NewAnnotation {
        auditor_id: me.auditor_id,
        rev_id: req.rev_id,
        label: req.label,
        bucket: req.bucket,
        filter_fingerprint: filter.fingerprint(),
        note: req.note,
    };
    let store = state.store.clone();
    let recorded = blocking(move || store.record_annotation(new)).await?.map_err(store_error)?;
    let resp = AnnotationResponse { annotation: recorded.annotation, superseded_annotation_id: recorded.superseded };
    Ok((StatusCode::CREATED, Json(resp)).into_response())
}

async fn history(State(state): State<AppState>, Authed(me): Authed, raw: RawQuery) -> Result<Response, ApiError> {
    params::<NoParams>(&raw)?;
    let history = state.store.annotation_history(&me.auditor_id).map_err(store_error)?;
    Ok(Json(history).into_response())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SummaryParams {
    filter: Option<String>,
    bucket: String,
    alpha: Option<f64>,
    scope: Option<String>,
}

async fn summary_handler(State(state): State<AppState>, Authed(me): Authed, raw: RawQuery) -> Result<Response, ApiError> {
    let p: SummaryParams = params(&raw)?;
    let filter = parse_filter(p.filter.as_deref())?;
    let bucket = parse_bucket(&p.bucket)?;
    let scope = parse_scope(p.scope.as_deref(), &me)?;
    let alpha = p.alpha.unwrap_or(state.alpha_default);
    let s = state
        .store
        .read(|snap| summary(&state.dataset, snap, &filter, bucket, &state.policy, alpha, &scope))
        .map_err(report_error)?;
    Ok(Json(s).into_response())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CompareParams {
    filter_a: Option<String>,
    filter_b: Option<String>,
    bucket: String,
    alpha: Option<f64>,
    scope: Option<String>,
}

async fn compare_handler(State(state): State<AppState>, Authed(me): Authed, raw: RawQuery) -> Result<Response, ApiError> {
    let p: CompareParams = params(&raw)?;
    let a = parse_filter(p.filter_a.as_deref())?;
    let b = parse_filter(p.filter_b.as_deref())?;
    let bucket = parse_bucket(&p.bucket)?;
    let scope = parse_scope(p.scope.as_deref(), &me)?;
    let alpha = p.alpha.unwrap_or(state.alpha_default);
    let c = state
        .store
        .read(|snap| comparison(&state.dataset, snap, &a, &b, bucket, &state.policy, alpha, &scope))
        .map_err(report_error)?;
    Ok(Json(c).into_response())
}

async fn diff(State(state): State<AppState>, _: Authed, Path(rev): Path<String>, raw: RawQuery) -> Result<Response, ApiError> {
    params::<NoParams>(&raw)?;
    let rev_id: u64 = rev.parse().map_err(|_| ApiError::bad_request(format!("rev_id must be an integer, got {rev:?}")))?;
    let record = state.dataset.get(rev_id).ok_or_else(|| ApiError::not_found(format!("rev_id {rev_id} is not in the dataset")))?;
    let parent_sha1 = match record.parent_rev_id {
        0 => None,
        parent => Some(state.dataset.get(parent).map(|p| p.content_hash.to_string()).unwrap_or_default()),
    };
    let target = RevisionRef {
        rev_id,
        parent_rev_id: record.parent_rev_id,
        content_sha1: record.content_hash.to_string(),
        parent_sha1,
    };
    let doc = state.diff.get_diff(&target).await.map_err(|e| match e {
        DiffError::NotFound(_) => ApiError::not_found(e.to_string()),
        DiffError::Unavailable { .. } => ApiError::unavailable(e.to_string()),
    })?;
    Ok(Json(doc).into_response())
}
