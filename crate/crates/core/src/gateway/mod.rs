//! Uniform client over generative-AI providers.
//!
//! Providers are registered from a [`ProviderSpec`]. `fan_out` sends one
//! prompt to several providers on separate threads and returns one entry per
//! requested provider in request order; a failing provider only fails its own
//! entry.

mod mock;
mod remote;

use std::collections::BTreeMap;
use std::sync::mpsc;
use std::sync::{Arc, RwLock};
use std::thread;
use std::time::{Duration, Instant};

use chrono::{DateTime, Utc};
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use mock::{MockFixture, MockProvider};
pub use remote::RemoteProvider;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    Remote,
    Mock,
}

/// Registration record for one provider.
///
/// `endpoint_config` keys understood by the built-in adapters:
///
/// * remote: `url` (required), `model`, `api_key_env` (name of the environment
///   variable holding the credential; the credential itself is never stored)
/// * mock: `fixture` (path to a JSON fixture), `latency_ms`, `fail`, `seed`
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProviderSpec {
    pub id: String,
    #[serde(default)]
    pub display_name: String,
    pub kind: ProviderKind,
    #[serde(default)]
    pub endpoint_config: BTreeMap<String, String>,
}

impl ProviderSpec {
    pub fn mock(id: impl Into<String>) -> Self {
        let id = id.into();
        Self {
            display_name: id.clone(),
            id,
            kind: ProviderKind::Mock,
            endpoint_config: BTreeMap::new(),
        }
    }

    pub fn with_config(mut self, key: &str, value: impl Into<String>) -> Self {
        self.endpoint_config.insert(key.to_owned(), value.into());
        self
    }
}

/// One provider's answer to a prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationResponse {
    pub id: String,
    pub provider_id: String,
    pub prompt_text: String,
    pub text: String,
    pub created_at: DateTime<Utc>,
    pub latency_ms: u64,
}

/// A prior exchange passed to providers as conversation context.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryTurn {
    pub prompt: String,
    pub response: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GatewayError {
    #[error("provider `{0}` is already registered")]
    DuplicateProvider(String),
    #[error("invalid provider config: {0}")]
    InvalidConfig(String),
    #[error("unknown provider `{0}`")]
    UnknownProvider(String),
    #[error("prompt is empty")]
    EmptyPrompt,
    #[error("no providers requested")]
    NoProviders,
    #[error("provider `{provider_id}` unavailable: {reason}")]
    ProviderUnavailable { provider_id: String, reason: String },
}

impl GatewayError {
    pub fn code(&self) -> &'static str {
        match self {
            Self::DuplicateProvider(_) => "DuplicateProvider",
            Self::InvalidConfig(_) => "InvalidConfig",
            Self::UnknownProvider(_) => "UnknownProvider",
            Self::EmptyPrompt => "EmptyPrompt",
            Self::NoProviders => "NoProviders",
            Self::ProviderUnavailable { .. } => "ProviderUnavailable",
        }
    }

    pub(crate) fn unavailable(provider_id: &str, reason: impl Into<String>) -> Self {
        Self::ProviderUnavailable {
            provider_id: provider_id.to_owned(),
            reason: reason.into(),
        }
    }
}

/// A backend able to complete a prompt.
pub trait Provider: Send + Sync {
    fn spec(&self) -> &ProviderSpec;

    fn complete(&self, prompt: &str, history: &[HistoryTurn]) -> Result<String, GatewayError>;
}

/// One entry of a fan-out batch.
#[derive(Debug, Clone)]
pub struct FanOutEntry {
    pub provider_id: String,
    pub outcome: Result<GenerationResponse, GatewayError>,
}

/// Registry of providers, safe for concurrent readers.
pub struct ProviderRegistry {
    providers: RwLock<IndexMap<String, Arc<dyn Provider>>>,
    timeout: Duration,
}

impl Default for ProviderRegistry {
    fn default() -> Self {
        Self::new(DEFAULT_TIMEOUT)
    }
}

impl std::fmt::Debug for ProviderRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProviderRegistry")
            .field("providers", &self.ids())
            .field("timeout", &self.timeout)
            .finish()
    }
}

impl ProviderRegistry {
    pub fn new(timeout: Duration) -> Self {
        Self {
            providers: RwLock::new(IndexMap::new()),
            timeout,
        }
    }

    pub fn timeout(&self) -> Duration {
        self.timeout
    }

    /// Build the adapter for `spec` and register it.
    pub fn register_provider(&self, spec: ProviderSpec) -> Result<(), GatewayError> {
        if self.contains(&spec.id) {
            return Err(GatewayError::DuplicateProvider(spec.id));
        }
        let provider: Arc<dyn Provider> = match spec.kind {
            ProviderKind::Mock => Arc::new(MockProvider::from_spec(spec)?),
            ProviderKind::Remote => Arc::new(RemoteProvider::from_spec(spec, self.timeout)?),
        };
        self.register(provider)
    }

    /// Register an already constructed provider.
    pub fn register(&self, provider: Arc<dyn Provider>) -> Result<(), GatewayError> {
        let id = provider.spec().id.clone();
        if id.trim().is_empty() {
            return Err(GatewayError::InvalidConfig("provider id is empty".into()));
        }
        let mut providers = self.providers.write().expect("provider registry poisoned");
        if providers.contains_key(&id) {
            return Err(GatewayError::DuplicateProvider(id));
        }
        providers.insert(id, provider);
        Ok(())
    }

    pub fn contains(&self, id: &str) -> bool {
        self.providers
            .read()
            .expect("provider registry poisoned")
            .contains_key(id)
    }

    pub fn ids(&self) -> Vec<String> {
        self.providers
            .read()
            .expect("provider registry poisoned")
            .keys()
            .cloned()
            .collect()
    }

    pub fn specs(&self) -> Vec<ProviderSpec> {
        self.providers
            .read()
            .expect("provider registry poisoned")
            .values()
            .map(|p| p.spec().clone())
            .collect()
    }

    fn get(&self, id: &str) -> Result<Arc<dyn Provider>, GatewayError> {
        self.providers
            .read()
            .expect("provider registry poisoned")
            .get(id)
            .cloned()
            .ok_or_else(|| GatewayError::UnknownProvider(id.to_owned()))
    }

    pub fn generate(
        &self,
        provider_id: &str,
        prompt: &str,
        history: &[HistoryTurn],
    ) -> Result<GenerationResponse, GatewayError> {
        let mut entries = self.fan_out_with_history(prompt, history, &[provider_id.to_owned()])?;
        entries.remove(0).outcome
    }

    pub fn fan_out(&self, prompt: &str, provider_ids: &[String]) -> Result<Vec<FanOutEntry>, GatewayError> {
        self.fan_out_with_history(prompt, &[], provider_ids)
    }

    /// Send `prompt` to every provider concurrently.
    ///
    /// Fails as a whole only when the prompt is empty, the list is empty or an
    /// id is not registered; those checks run before anything is dispatched.
    pub fn fan_out_with_history(
        &self,
        prompt: &str,
        history: &[HistoryTurn],
        provider_ids: &[String],
    ) -> Result<Vec<FanOutEntry>, GatewayError> {
        if prompt.trim().is_empty() {
            return Err(GatewayError::EmptyPrompt);
        }
        if provider_ids.is_empty() {
            return Err(GatewayError::NoProviders);
        }
        let providers = provider_ids
            .iter()
            .map(|id| self.get(id))
            .collect::<Result<Vec<_>, _>>()?;

        let (tx, rx) = mpsc::channel();
        let prompt_owned: Arc<str> = Arc::from(prompt);
        let history: Arc<[HistoryTurn]> = Arc::from(history);
        for (slot, provider) in providers.into_iter().enumerate() {
            let tx = tx.clone();
            let prompt = Arc::clone(&prompt_owned);
            let history = Arc::clone(&history);
            thread::spawn(move || {
                let started = Instant::now();
                let result = provider.complete(&prompt, &history);
                let latency_ms = started.elapsed().as_millis() as u64;
                let provider_id = provider.spec().id.clone();
                let outcome = result.and_then(|text| {
                    if text.trim().is_empty() {
                        return Err(GatewayError::unavailable(&provider_id, "empty response"));
                    }
                    Ok(GenerationResponse {
                        id: uuid::Uuid::new_v4().to_string(),
                        provider_id,
                        prompt_text: prompt.to_string(),
                        text,
                        created_at: Utc::now(),
                        latency_ms,
                    })
                });
                // receiver may have given up after the deadline
                let _ = tx.send((slot, outcome));
            });
        }
        drop(tx);

        let mut slots: Vec<Option<Result<GenerationResponse, GatewayError>>> = vec![None; provider_ids.len()];
        let deadline = Instant::now() + self.timeout;
        let mut pending = provider_ids.len();
        while pending > 0 {
            let remaining = deadline.saturating_duration_since(Instant::now());
            match rx.recv_timeout(remaining) {
                Ok((slot, outcome)) => {
                    slots[slot] = Some(outcome);
                    pending -= 1;
                }
                Err(_) => break,
            }
        }

        Ok(provider_ids
            .iter()
            .zip(slots)
            .map(|(id, outcome)| FanOutEntry {
                provider_id: id.clone(),
                outcome: outcome.unwrap_or_else(|| {
                    Err(GatewayError::unavailable(
                        id,
                        format!("timed out after {} ms", self.timeout.as_millis()),
                    ))
                }),
            })
            .collect())
    }
}
