use std::path::{Path, PathBuf};

use editaudit::dataset::DatasetHeader;
use editaudit::focus::{FocusPolicy, DEFAULT_THRESHOLD};
use editaudit::ingest::{DEFAULT_REVERT_RADIUS, DEFAULT_REVERT_WINDOW};
use editaudit::stats::DEFAULT_ALPHA;
use serde::{Deserialize, Serialize};

use crate::ServiceError;

pub const DEFAULT_WRITE_LIMIT: u32 = 10;

/// Service configuration, read from TOML. Relative paths are resolved
/// against the directory holding the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceConfig {
    pub dataset_path: PathBuf,
    /// Directory holding the annotation and auditor logs.
    pub annotations_path: PathBuf,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    /// Must equal the value the dataset was built with.
    #[serde(default = "default_window")]
    pub revert_window_seconds: u64,
    /// Must equal the value the dataset was built with.
    #[serde(default = "default_radius")]
    pub revert_radius: usize,
    #[serde(default = "default_listen")]
    pub listen_addr: String,
    #[serde(default)]
    pub upstream_wiki_api_url: Option<String>,
    #[serde(default = "default_alpha")]
    pub alpha_default: f64,
    /// `texts.ndjson` from the fixture generator; enables offline diffs.
    #[serde(default)]
    pub fixture_texts_path: Option<PathBuf>,
    #[serde(default)]
    pub diff_cache_dir: Option<PathBuf>,
    #[serde(default = "default_upstream_timeout")]
    pub upstream_timeout_seconds: u64,
    #[serde(default = "default_write_limit")]
    pub write_rate_limit_per_sec: u32,
    #[serde(default = "default_true")]
    pub count_self_reverts: bool,
    #[serde(default)]
    pub static_dir: Option<PathBuf>,
}

fn default_threshold() -> f64 {
    DEFAULT_THRESHOLD
}
fn default_window() -> u64 {
    DEFAULT_REVERT_WINDOW
}
fn default_radius() -> usize {
    DEFAULT_REVERT_RADIUS
}
fn default_listen() -> String {
    "127.0.0.1:8080".into()
}
fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}
fn default_upstream_timeout() -> u64 {
    10
}
fn default_write_limit() -> u32 {
    DEFAULT_WRITE_LIMIT
}
fn default_true() -> bool {
    true
}

impl ServiceConfig {
    /// A config with every optional key at its default.
    pub fn new(dataset_path: impl Into<PathBuf>, annotations_path: impl Into<PathBuf>) -> Self {
        ServiceConfig {
            dataset_path: dataset_path.into(),
            annotations_path: annotations_path.into(),
            threshold: default_threshold(),
            revert_window_seconds: default_window(),
            revert_radius: default_radius(),
            listen_addr: default_listen(),
            upstream_wiki_api_url: None,
            alpha_default: default_alpha(),
            fixture_texts_path: None,
            diff_cache_dir: None,
            upstream_timeout_seconds: default_upstream_timeout(),
            write_rate_limit_per_sec: default_write_limit(),
            count_self_reverts: true,
            static_dir: None,
        }
    }

    pub fn from_toml(text: &str, base: &Path) -> Result<Self, ServiceError> {
        let mut config: ServiceConfig = toml::from_str(text).map_err(|e| ServiceError::Config(e.to_string()))?;
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut config.dataset_path);
        resolve(&mut config.annotations_path);
        for p in [&mut config.fixture_texts_path, &mut config.diff_cache_dir, &mut config.static_dir].into_iter().flatten() {
            resolve(p);
        }
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ServiceError> {
        let text = std::fs::read_to_string(path).map_err(|e| ServiceError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn validate(&self) -> Result<(), ServiceError> {
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(ServiceError::Config(format!("threshold must lie in [0, 1], got {}", self.threshold)));
        }
        if !(self.alpha_default > 0.0 && self.alpha_default < 1.0) {
            return Err(ServiceError::Config(format!("alpha_default must lie in (0, 1), got {}", self.alpha_default)));
        }
        if self.write_rate_limit_per_sec == 0 {
            return Err(ServiceError::Config("write_rate_limit_per_sec must be positive".into()));
        }
        Ok(())
    }

    /// Revert parameters are baked into a dataset at ingest; a config that
    /// disagrees would silently describe different buckets.
    pub fn check_dataset(&self, header: &DatasetHeader) -> Result<(), ServiceError> {
        if header.revert_window != self.revert_window_seconds || header.revert_radius != self.revert_radius as u64 {
            return Err(ServiceError::Config(format!(
                "dataset was built with revert window {} s and radius {}, config says {} s and {}",
                header.revert_window, header.revert_radius, self.revert_window_seconds, self.revert_radius
            )));
        }
        Ok(())
    }

    pub fn policy(&self) -> FocusPolicy {
        FocusPolicy { threshold: self.threshold, count_self_reverts: self.count_self_reverts, ..FocusPolicy::default() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_uses_defaults_and_resolves_paths() {
        let c = ServiceConfig::from_toml("dataset_path = \"d.bin\"\nannotations_path = \"notes\"\n", Path::new("/srv/audit")).unwrap();
        assert_eq!(c.dataset_path, Path::new("/srv/audit/d.bin"));
        assert_eq!(c.annotations_path, Path::new("/srv/audit/notes"));
        assert_eq!(c.threshold, 0.5);
        assert_eq!(c.revert_window_seconds, 31_536_000);
        assert_eq!(c.revert_radius, 15);
        assert_eq!(c.write_rate_limit_per_sec, 10);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        let base = Path::new("/");
        assert!(ServiceConfig::from_toml("dataset_path=\"a\"\nannotations_path=\"b\"\ntreshold=0.4\n", base).is_err());
        assert!(ServiceConfig::from_toml("dataset_path=\"a\"\nannotations_path=\"b\"\nthreshold=1.5\n", base).is_err());
        assert!(ServiceConfig::from_toml("dataset_path=\"a\"\nannotations_path=\"b\"\nalpha_default=0\n", base).is_err());
        assert!(ServiceConfig::from_toml("annotations_path=\"b\"\n", base).is_err());
    }
}
