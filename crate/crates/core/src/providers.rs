//! Shared plumbing for remote providers (embeddings, translation, generation)
//! and the bundle of providers a pipeline runs with.

use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embed::{Embedder, HashingEmbedder, HttpEmbedder};
use crate::lang::{HttpTranslator, TaggingTranslator, Translator};
use crate::qa::{ExtractiveGenerator, Generator, HttpGenerator};

/// Health checks never wait longer than this on a provider.
pub const PROBE_TIMEOUT: Duration = Duration::from_secs(2);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProviderError {
    #[error("provider unreachable: {0}")]
    Unreachable(String),
    #[error("provider refused the request: {0}")]
    Refusal(String),
    #[error("provider returned an empty completion")]
    EmptyCompletion,
    #[error("provider does not support {src} -> {tgt}")]
    UnsupportedPair { src: String, tgt: String },
    #[error("malformed provider response: {0}")]
    BadResponse(String),
}

impl ProviderError {
    /// Machine-readable class, used as the refusal reason and API error code.
    pub fn class(&self) -> &'static str {
        match self {
            Self::Unreachable(_) => "provider_unreachable",
            Self::Refusal(_) => "provider_refusal",
            Self::EmptyCompletion => "empty_completion",
            Self::UnsupportedPair { .. } => "unsupported_pair",
            Self::BadResponse(_) => "provider_bad_response",
        }
    }

    pub(crate) fn from_transport(err: ureq::Error) -> Self {
        match err {
            ureq::Error::StatusCode(code) if code >= 500 => {
                Self::Unreachable(format!("upstream status {code}"))
            }
            ureq::Error::StatusCode(code) => Self::BadResponse(format!("upstream status {code}")),
            other => Self::Unreachable(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProbeStatus {
    Ok,
    Degraded,
}

pub(crate) fn http_agent(timeout: Duration) -> ureq::Agent {
    ureq::Agent::config_builder()
        .timeout_global(Some(timeout))
        .build()
        .into()
}

/// Any HTTP response counts as reachable; only transport failures degrade.
pub(crate) fn probe_endpoint(endpoint: &str) -> ProbeStatus {
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(PROBE_TIMEOUT))
        .http_status_as_error(false)
        .build()
        .into();
    match agent.get(endpoint).call() {
        Ok(_) => ProbeStatus::Ok,
        Err(_) => ProbeStatus::Degraded,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ProviderMode {
    #[default]
    Stub,
    Http,
}

impl std::str::FromStr for ProviderMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "stub" => Ok(Self::Stub),
            "http" => Ok(Self::Http),
            other => Err(format!("unknown provider mode {other:?} (expected stub or http)")),
        }
    }
}

/// Endpoints and credentials for http mode.
#[derive(Debug, Clone, Default)]
pub struct ProviderEndpoints {
    pub embed: Option<String>,
    pub generate: Option<String>,
    pub translate: Option<String>,
    pub token: Option<String>,
    pub model: Option<String>,
}

#[derive(Clone)]
pub struct Providers {
    pub embedder: Arc<dyn Embedder>,
    pub translator: Arc<dyn Translator>,
    pub generator: Arc<dyn Generator>,
}

impl std::fmt::Debug for Providers {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Providers")
            .field("embedder", &self.embedder.id())
            .field("translator", &self.translator.id())
            .field("generator", &self.generator.id())
            .finish()
    }
}

impl Providers {
    /// Fully offline: hashing embedder, tagging translator, extractive generator.
    pub fn stub(dim: usize) -> Self {
        Self {
            embedder: Arc::new(HashingEmbedder::new(dim).unwrap_or_default()),
            translator: Arc::new(TaggingTranslator),
            generator: Arc::new(ExtractiveGenerator),
        }
    }

    /// Remote providers where an endpoint is configured. Without an embeddings
    /// endpoint the hashing embedder stays in place so existing indexes remain usable.
    pub fn from_mode(mode: ProviderMode, endpoints: &ProviderEndpoints, dim: usize) -> Self {
        let mut providers = Self::stub(dim);
        if mode == ProviderMode::Stub {
            return providers;
        }
        if let Some(url) = &endpoints.embed {
            providers.embedder = Arc::new(HttpEmbedder::new(url.clone(), endpoints.token.clone()));
        }
        if let Some(url) = &endpoints.translate {
            providers.translator =
                Arc::new(HttpTranslator::new(url.clone(), endpoints.token.clone()));
        }
        if let Some(url) = &endpoints.generate {
            providers.generator = Arc::new(HttpGenerator::new(
                url.clone(),
                endpoints.model.clone().unwrap_or_else(|| "default".into()),
                endpoints.token.clone(),
            ));
        }
        providers
    }

    pub fn probe(&self) -> Vec<(&'static str, ProbeStatus)> {
        vec![
            ("embedder", self.embedder.probe()),
            ("translator", self.translator.probe()),
            ("generator", self.generator.probe()),
        ]
    }
}
