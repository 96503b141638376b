//! HTTP API over a dataset, its annotation store and the diff client.
//!
//! The dataset is immutable and shared without locks; annotation writes go
//! through the store's single writer. Sampling is stateless: every edits
//! request carries its own filter, bucket, seed and cursor.

mod api;
mod config;
mod error;
mod ratelimit;

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use editaudit::dataset::{Dataset, DatasetError};
use editaudit::focus::FocusPolicy;
use editaudit::store::{Store, StoreError};
use editaudit_wiki::{DiffClient, FixtureTexts, HttpTransport, Transport};

pub use api::{router, Authed, DEFAULT_PAGE_SIZE};
pub use config::{ServiceConfig, DEFAULT_WRITE_LIMIT};
pub use error::ApiError;
pub use ratelimit::RateLimiter;

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("config: {0}")]
    Config(String),
    #[error("dataset: {0}")]
    Dataset(#[from] DatasetError),
    #[error("annotation store: {0}")]
    Store(#[from] StoreError),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone)]
pub struct AppState {
    pub dataset: Arc<Dataset>,
    pub store: Arc<Store>,
    pub diff: Arc<DiffClient>,
    pub policy: FocusPolicy,
    pub alpha_default: f64,
    pub limiter: Arc<RateLimiter>,
    pub static_dir: Option<PathBuf>,
}

impl AppState {
    pub fn new(dataset: Arc<Dataset>, store: Arc<Store>, diff: DiffClient, config: &ServiceConfig) -> Self {
        AppState {
            dataset,
            store,
            diff: Arc::new(diff),
            policy: config.policy(),
            alpha_default: config.alpha_default,
            limiter: Arc::new(RateLimiter::new(config.write_rate_limit_per_sec)),
            static_dir: config.static_dir.clone(),
        }
    }

    /// Loads everything `config` names. `transport` is used only in live
    /// diff mode; pass `None` for the real HTTP transport.
    pub fn from_config(config: &ServiceConfig, transport: Option<Arc<dyn Transport>>) -> Result<Self, ServiceError> {
        config.validate()?;
        let dataset = Arc::new(Dataset::load(&config.dataset_path)?);
        config.check_dataset(dataset.header())?;
        let store = Arc::new(Store::open(&config.annotations_path, dataset.clone())?);

        let transport = match transport {
            Some(t) => t,
            None => Arc::new(
                HttpTransport::new(Duration::from_secs(config.upstream_timeout_seconds))
                    .map_err(|e| ServiceError::Config(e.to_string()))?,
            ),
        };
        let mut diff = DiffClient::new(transport);
        if let Some(path) = &config.fixture_texts_path {
            diff = diff.with_fixture(FixtureTexts::load(path)?);
        }
        if let Some(url) = &config.upstream_wiki_api_url {
            diff = diff.with_upstream(url.clone());
        }
        if let Some(dir) = &config.diff_cache_dir {
            diff = diff.with_cache_dir(dir.clone());
        }
        Ok(AppState::new(dataset, store, diff, config))
    }
}

/// Binds `config.listen_addr` and serves until interrupted.
pub async fn serve(config: ServiceConfig) -> Result<(), ServiceError> {
    let state = AppState::from_config(&config, None)?;
    let records = state.dataset.len();
    let listener = tokio::net::TcpListener::bind(&config.listen_addr).await?;
    tracing::info!(addr = %listener.local_addr()?, records, "serving");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
