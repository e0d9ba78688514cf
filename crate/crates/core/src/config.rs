//! Runtime settings from `MB_*` environment variables, shared by the service
//! and the command line.

use std::path::PathBuf;

use thiserror::Error;

use crate::embed::DEFAULT_DIM;
use crate::lang::{LangError, LanguageRegistry};
use crate::providers::{ProviderEndpoints, ProviderMode, Providers};
use crate::qa::{DenyList, MessageCatalog, QaEngine, QaError, RetrievalConfig};

pub const DEFAULT_STORE_DIR: &str = "./mb-store";
pub const DEFAULT_BIND_ADDR: &str = "127.0.0.1:8080";
pub const DEFAULT_MAX_UPLOAD_BYTES: usize = 50 * 1024 * 1024;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{var}: {reason}")]
    Invalid { var: &'static str, reason: String },
    #[error(transparent)]
    Lang(#[from] LangError),
    #[error(transparent)]
    Qa(#[from] QaError),
}

#[derive(Debug, Clone)]
pub struct Settings {
    pub store_dir: PathBuf,
    pub bind_addr: String,
    pub api_token: Option<String>,
    pub provider_mode: ProviderMode,
    pub endpoints: ProviderEndpoints,
    pub embed_dim: usize,
    pub retrieval: RetrievalConfig,
    pub max_upload_bytes: usize,
    /// Empty means any origin.
    pub cors_origins: Vec<String>,
    pub marker_dir: Option<PathBuf>,
    pub catalog_dir: Option<PathBuf>,
    pub deny_list: Option<PathBuf>,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            store_dir: PathBuf::from(DEFAULT_STORE_DIR),
            bind_addr: DEFAULT_BIND_ADDR.into(),
            api_token: None,
            provider_mode: ProviderMode::Stub,
            endpoints: ProviderEndpoints::default(),
            embed_dim: DEFAULT_DIM,
            retrieval: RetrievalConfig::default(),
            max_upload_bytes: DEFAULT_MAX_UPLOAD_BYTES,
            cors_origins: Vec::new(),
            marker_dir: None,
            catalog_dir: None,
            deny_list: None,
        }
    }
}

impl Settings {
    pub fn from_env() -> Result<Self, ConfigError> {
        Self::from_lookup(|k| std::env::var(k).ok())
    }

    /// Like [`Settings::from_env`], reading variables through `get`; empty values count as unset.
    pub fn from_lookup(get: impl Fn(&str) -> Option<String>) -> Result<Self, ConfigError> {
        let var = |k: &str| get(k).filter(|v| !v.trim().is_empty());
        let mut s = Self::default();
        if let Some(v) = var("MB_STORE_DIR") {
            s.store_dir = PathBuf::from(v);
        }
        if let Some(v) = var("MB_BIND_ADDR") {
            s.bind_addr = v;
        }
        s.api_token = var("MB_API_TOKEN");
        if let Some(v) = var("MB_PROVIDER_MODE") {
            s.provider_mode = v.parse().map_err(|reason| ConfigError::Invalid {
                var: "MB_PROVIDER_MODE",
                reason,
            })?;
        }
        s.endpoints = ProviderEndpoints {
            embed: var("MB_EMBED_ENDPOINT"),
            generate: var("MB_GEN_ENDPOINT"),
            translate: var("MB_TRANSLATE_ENDPOINT"),
            token: var("MB_PROVIDER_TOKEN"),
            model: var("MB_GEN_MODEL"),
        };
        if let Some(v) = var("MB_EMBED_DIM") {
            s.embed_dim = parse("MB_EMBED_DIM", &v)?;
        }
        if let Some(v) = var("MB_TOP_K") {
            s.retrieval.k = parse("MB_TOP_K", &v)?;
        }
        if let Some(v) = var("MB_MIN_SCORE") {
            s.retrieval.min_score = parse("MB_MIN_SCORE", &v)?;
        }
        if let Some(v) = var("MB_CONTEXT_TOKENS") {
            s.retrieval.context_token_budget = parse("MB_CONTEXT_TOKENS", &v)?;
        }
        if let Some(v) = var("MB_MAX_UPLOAD_BYTES") {
            s.max_upload_bytes = parse("MB_MAX_UPLOAD_BYTES", &v)?;
        }
        if let Some(v) = var("MB_CORS_ORIGINS") {
            s.cors_origins = v
                .split(',')
                .map(|o| o.trim().to_string())
                .filter(|o| !o.is_empty() && o != "*")
                .collect();
        }
        s.marker_dir = var("MB_MARKER_DIR").map(PathBuf::from);
        s.catalog_dir = var("MB_CATALOG_DIR").map(PathBuf::from);
        s.deny_list = var("MB_DENY_LIST").map(PathBuf::from);
        Ok(s)
    }

    pub fn providers(&self) -> Providers {
        Providers::from_mode(self.provider_mode, &self.endpoints, self.embed_dim)
    }

    pub fn engine(&self) -> Result<QaEngine, ConfigError> {
        let mut engine = QaEngine::new(self.providers());
        if let Some(dir) = &self.marker_dir {
            engine.registry = LanguageRegistry::with_marker_dir(dir)?;
        }
        if let Some(dir) = &self.catalog_dir {
            engine.catalog = MessageCatalog::with_dir(dir)?;
        }
        if let Some(path) = &self.deny_list {
            engine.deny_list = DenyList::from_file(path)?;
        }
        engine.retrieval = self.retrieval;
        Ok(engine)
    }
}

fn parse<T: std::str::FromStr>(var: &'static str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.trim().parse().map_err(|e: T::Err| ConfigError::Invalid {
        var,
        reason: format!("{value:?}: {e}"),
    })
}
