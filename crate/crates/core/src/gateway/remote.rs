use std::env;
use std::time::Duration;

use serde_json::{json, Value};

use super::{GatewayError, HistoryTurn, Provider, ProviderKind, ProviderSpec};

/// Adapter for chat-completions style HTTP endpoints.
///
/// Sends `{"model", "messages"}` and reads `choices[0].message.content`.
/// The credential is looked up in the environment variable named by
/// `api_key_env` on every request.
#[derive(Debug)]
pub struct RemoteProvider {
    spec: ProviderSpec,
    url: String,
    model: Option<String>,
    api_key_env: Option<String>,
    agent: ureq::Agent,
}

impl RemoteProvider {
    pub fn from_spec(spec: ProviderSpec, timeout: Duration) -> Result<Self, GatewayError> {
        if spec.kind != ProviderKind::Remote {
            return Err(GatewayError::InvalidConfig(format!(
                "`{}` is not a remote provider",
                spec.id
            )));
        }
        let url = spec
            .endpoint_config
            .get("url")
            .filter(|u| !u.trim().is_empty())
            .cloned()
            .ok_or_else(|| GatewayError::InvalidConfig(format!("remote provider `{}` has no url", spec.id)))?;
        let model = spec.endpoint_config.get("model").cloned();
        let api_key_env = spec.endpoint_config.get("api_key_env").cloned();
        let agent = ureq::AgentBuilder::new().timeout(timeout).build();
        Ok(Self {
            spec,
            url,
            model,
            api_key_env,
            agent,
        })
    }

    fn messages(prompt: &str, history: &[HistoryTurn]) -> Vec<Value> {
        let mut messages = Vec::with_capacity(history.len() * 2 + 1);
        for turn in history {
            messages.push(json!({"role": "user", "content": turn.prompt}));
            if let Some(resp) = &turn.response {
                messages.push(json!({"role": "assistant", "content": resp}));
            }
        }
        messages.push(json!({"role": "user", "content": prompt}));
        messages
    }
}

impl Provider for RemoteProvider {
    fn spec(&self) -> &ProviderSpec {
        &self.spec
    }

    fn complete(&self, prompt: &str, history: &[HistoryTurn]) -> Result<String, GatewayError> {
        let id = &self.spec.id;
        let mut body = json!({ "messages": Self::messages(prompt, history) });
        if let Some(model) = &self.model {
            body["model"] = json!(model);
        }
        let mut request = self.agent.post(&self.url);
        if let Some(var) = &self.api_key_env {
            let key = env::var(var)
                .map_err(|_| GatewayError::unavailable(id, format!("credential variable `{var}` is not set")))?;
            request = request.set("Authorization", &format!("Bearer {key}"));
        }
        let reply: Value = request
            .send_json(body)
            .map_err(|e| GatewayError::unavailable(id, e.to_string()))?
            .into_json()
            .map_err(|e| GatewayError::unavailable(id, format!("malformed reply: {e}")))?;
        reply["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_owned)
            .ok_or_else(|| GatewayError::unavailable(id, "reply has no choices[0].message.content"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn spec(config: &[(&str, &str)]) -> ProviderSpec {
        ProviderSpec {
            id: "remote".into(),
            display_name: "Remote".into(),
            kind: ProviderKind::Remote,
            endpoint_config: config
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect::<BTreeMap<_, _>>(),
        }
    }

    #[test]
    fn requires_url() {
        assert!(RemoteProvider::from_spec(spec(&[]), Duration::from_secs(1)).is_err());
        assert!(RemoteProvider::from_spec(spec(&[("url", " ")]), Duration::from_secs(1)).is_err());
        assert!(RemoteProvider::from_spec(spec(&[("url", "http://127.0.0.1:9")]), Duration::from_secs(1)).is_ok());
    }

    #[test]
    fn unreachable_endpoint_is_unavailable() {
        // port 9 (discard) is closed on test hosts
        let p =
            RemoteProvider::from_spec(spec(&[("url", "http://127.0.0.1:9/v1")]), Duration::from_millis(500)).unwrap();
        assert!(matches!(
            p.complete("hi", &[]),
            Err(GatewayError::ProviderUnavailable { .. })
        ));
    }

    #[test]
    fn missing_credential_is_unavailable() {
        let p = RemoteProvider::from_spec(
            spec(&[
                ("url", "http://127.0.0.1:9"),
                ("api_key_env", "TWAI_TEST_UNSET_KEY_VAR"),
            ]),
            Duration::from_millis(500),
        )
        .unwrap();
        let err = p.complete("hi", &[]).unwrap_err();
        assert!(err.to_string().contains("TWAI_TEST_UNSET_KEY_VAR"));
    }

    #[test]
    fn history_becomes_messages() {
        let history = vec![HistoryTurn {
            prompt: "first".into(),
            response: Some("answer".into()),
        }];
        let m = RemoteProvider::messages("second", &history);
        assert_eq!(m.len(), 3);
        assert_eq!(m[1]["role"], "assistant");
        assert_eq!(m[2]["content"], "second");
    }
}
