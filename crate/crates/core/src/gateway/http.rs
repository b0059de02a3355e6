//! OpenAI-compatible HTTPS backend (chat completions + embeddings).

use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{Backend, BackendError, BackendReply, BackendRequest, EmbedReply};

static NETWORK_CALLS: AtomicU64 = AtomicU64::new(0);

/// Number of HTTP requests issued by any [`HttpBackend`] in this process.
pub fn network_calls() -> u64 {
    NETWORK_CALLS.load(Ordering::SeqCst)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpBackendConfig {
    pub base_url: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub timeout_secs: u64,
}

impl Default for HttpBackendConfig {
    fn default() -> Self {
        HttpBackendConfig {
            base_url: "https://api.openai.com/v1".into(),
            api_key_env: "OPENAI_API_KEY".into(),
            timeout_secs: 120,
        }
    }
}

pub struct HttpBackend {
    config: HttpBackendConfig,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl HttpBackend {
    pub fn new(config: HttpBackendConfig) -> Self {
        let api_key = std::env::var(&config.api_key_env).ok().filter(|k| !k.is_empty());
        Self::with_key(config, api_key)
    }

    pub fn with_key(config: HttpBackendConfig, api_key: Option<String>) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        HttpBackend { config, api_key, agent }
    }

    fn post(&self, path: &str, body: &Value) -> Result<Value, BackendError> {
        let key = self.api_key.as_deref().ok_or_else(|| {
            BackendError::Fatal(format!("no API key: set the {} environment variable", self.config.api_key_env))
        })?;
        let url = format!("{}/{}", self.config.base_url.trim_end_matches('/'), path);
        NETWORK_CALLS.fetch_add(1, Ordering::SeqCst);
        let mut resp = self
            .agent
            .post(&url)
            .header("Authorization", &format!("Bearer {key}"))
            .send_json(body)
            .map_err(|e| match e {
                ureq::Error::BadUri(m) => BackendError::Fatal(format!("bad url {url}: {m}")),
                other => BackendError::Transient(other.to_string()),
            })?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(|e| BackendError::Transient(e.to_string()))?;
        match status {
            200..=299 => serde_json::from_str(&text)
                .map_err(|e| BackendError::Transient(format!("malformed provider body: {e}"))),
            408 | 409 | 429 | 500..=599 => Err(BackendError::Transient(format!("HTTP {status}: {text}"))),
            _ => Err(BackendError::Fatal(format!("HTTP {status}: {text}"))),
        }
    }
}

impl Backend for HttpBackend {
    fn name(&self) -> &str {
        "http"
    }

    fn complete(&self, req: &BackendRequest<'_>) -> Result<BackendReply, BackendError> {
        let mut body = json!({
            "model": req.model,
            "messages": [{"role": "user", "content": req.prompt}],
            "temperature": req.temperature,
        });
        if let Some(max) = req.max_output_tokens {
            body["max_tokens"] = json!(max);
        }
        let v = self.post("chat/completions", &body)?;
        let choice = &v["choices"][0];
        let raw = v.to_string();
        if let Some(refusal) = choice["message"]["refusal"].as_str() {
            return Err(BackendError::Refusal { message: refusal.to_string(), raw });
        }
        if choice["finish_reason"].as_str() == Some("content_filter") {
            return Err(BackendError::Refusal { message: "content filtered".into(), raw });
        }
        let text = choice["message"]["content"]
            .as_str()
            .ok_or_else(|| BackendError::Transient(format!("response without message content: {raw}")))?
            .to_string();
        Ok(BackendReply {
            text,
            input_tokens: v["usage"]["prompt_tokens"].as_u64(),
            output_tokens: v["usage"]["completion_tokens"].as_u64(),
        })
    }

    fn embed(&self, model: &str, texts: &[String]) -> Result<EmbedReply, BackendError> {
        let v = self.post("embeddings", &json!({"model": model, "input": texts}))?;
        let data = v["data"].as_array().ok_or_else(|| BackendError::Transient("embedding response without data".into()))?;
        let mut rows: Vec<(usize, Vec<f64>)> = data
            .iter()
            .enumerate()
            .map(|(i, d)| {
                let idx = d["index"].as_u64().map_or(i, |x| x as usize);
                let values = d["embedding"].as_array().map(|a| a.iter().filter_map(Value::as_f64).collect()).unwrap_or_default();
                (idx, values)
            })
            .collect();
        rows.sort_by_key(|(i, _)| *i);
        Ok(EmbedReply { vectors: rows.into_iter().map(|(_, v)| v).collect(), input_tokens: v["usage"]["prompt_tokens"].as_u64() })
    }
}
