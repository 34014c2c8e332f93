use std::fs;
use std::path::Path;
use std::thread;
use std::time::Duration;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{GatewayError, HistoryTurn, Provider, ProviderKind, ProviderSpec};

/// Prompt pattern → candidate responses.
///
/// A pattern is either an exact prompt or a glob where `*` matches any run of
/// characters. Exact keys win; otherwise the first matching glob in document
/// order is used.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MockFixture {
    entries: IndexMap<String, Vec<String>>,
}

impl MockFixture {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, pattern: impl Into<String>, responses: Vec<String>) -> Self {
        self.entries.insert(pattern.into(), responses);
        self
    }

    pub fn from_json(raw: &str) -> Result<Self, GatewayError> {
        let fixture: Self =
            serde_json::from_str(raw).map_err(|e| GatewayError::InvalidConfig(format!("mock fixture: {e}")))?;
        if let Some((pattern, _)) = fixture.entries.iter().find(|(_, r)| r.is_empty()) {
            return Err(GatewayError::InvalidConfig(format!(
                "mock fixture pattern `{pattern}` has no responses"
            )));
        }
        Ok(fixture)
    }

    pub fn from_path(path: &Path) -> Result<Self, GatewayError> {
        let raw =
            fs::read_to_string(path).map_err(|e| GatewayError::InvalidConfig(format!("{}: {e}", path.display())))?;
        Self::from_json(&raw)
    }

    pub fn lookup(&self, prompt: &str) -> Option<&[String]> {
        if let Some(r) = self.entries.get(prompt) {
            return Some(r);
        }
        self.entries
            .iter()
            .find(|(pattern, _)| pattern.contains('*') && glob_match(pattern, prompt))
            .map(|(_, r)| r.as_slice())
    }
}

fn glob_match(pattern: &str, text: &str) -> bool {
    let parts: Vec<&str> = pattern.split('*').collect();
    let (first, rest) = parts.split_first().expect("split yields at least one part");
    let Some(mut remaining) = text.strip_prefix(first) else {
        return false;
    };
    let (last, middle) = rest.split_last().expect("pattern contains `*`");
    for part in middle {
        match remaining.find(part) {
            Some(pos) => remaining = &remaining[pos + part.len()..],
            None => return false,
        }
    }
    remaining.len() >= last.len() && remaining.ends_with(last)
}

/// Deterministic offline provider.
///
/// The response for a prompt is picked from the fixture by a stable hash of
/// (seed, prompt, history length); the seed defaults to the provider id, so
/// two mocks sharing a fixture can still disagree.
#[derive(Debug, Clone)]
pub struct MockProvider {
    spec: ProviderSpec,
    fixture: MockFixture,
    latency: Duration,
    fail: bool,
    seed: String,
}

impl MockProvider {
    pub fn new(spec: ProviderSpec, fixture: MockFixture) -> Self {
        let seed = spec.id.clone();
        Self {
            spec,
            fixture,
            latency: Duration::ZERO,
            fail: false,
            seed,
        }
    }

    pub fn with_latency(mut self, latency: Duration) -> Self {
        self.latency = latency;
        self
    }

    pub fn failing(mut self) -> Self {
        self.fail = true;
        self
    }

    /// Reads `fixture`, `response` (a catch-all answer), `latency_ms`, `fail`
    /// and `seed` from the endpoint config.
    pub fn from_spec(spec: ProviderSpec) -> Result<Self, GatewayError> {
        if spec.kind != ProviderKind::Mock {
            return Err(GatewayError::InvalidConfig(format!(
                "`{}` is not a mock provider",
                spec.id
            )));
        }
        let cfg = &spec.endpoint_config;
        let mut fixture = match cfg.get("fixture") {
            Some(path) => MockFixture::from_path(Path::new(path))?,
            None => MockFixture::new(),
        };
        if let Some(resp) = cfg.get("response") {
            fixture.entries.insert("*".into(), vec![resp.clone()]);
        }
        let latency = match cfg.get("latency_ms") {
            Some(v) => Duration::from_millis(
                v.parse()
                    .map_err(|_| GatewayError::InvalidConfig(format!("latency_ms `{v}` is not an integer")))?,
            ),
            None => Duration::ZERO,
        };
        let fail = match cfg.get("fail").map(String::as_str) {
            None | Some("false") => false,
            Some("true") => true,
            Some(other) => return Err(GatewayError::InvalidConfig(format!("fail `{other}` is not a boolean"))),
        };
        let seed = cfg.get("seed").cloned().unwrap_or_else(|| spec.id.clone());
        Ok(Self {
            spec,
            fixture,
            latency,
            fail,
            seed,
        })
    }

    fn pick(&self, prompt: &str, history_len: usize, n: usize) -> usize {
        let mut hasher = Sha256::new();
        hasher.update(self.seed.as_bytes());
        hasher.update([0u8]);
        hasher.update(prompt.as_bytes());
        hasher.update([0u8]);
        hasher.update((history_len as u64).to_le_bytes());
        let digest = hasher.finalize();
        let mut head = [0u8; 8];
        head.copy_from_slice(&digest[..8]);
        (u64::from_le_bytes(head) % n as u64) as usize
    }
}

impl Provider for MockProvider {
    fn spec(&self) -> &ProviderSpec {
        &self.spec
    }

    fn complete(&self, prompt: &str, history: &[HistoryTurn]) -> Result<String, GatewayError> {
        if !self.latency.is_zero() {
            thread::sleep(self.latency);
        }
        if self.fail {
            return Err(GatewayError::unavailable(&self.spec.id, "simulated failure"));
        }
        let responses = self
            .fixture
            .lookup(prompt)
            .filter(|r| !r.is_empty())
            .ok_or_else(|| GatewayError::unavailable(&self.spec.id, "no fixture matches the prompt"))?;
        Ok(responses[self.pick(prompt, history.len(), responses.len())].clone())
    }
}
