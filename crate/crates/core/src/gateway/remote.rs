//! Minimal HTTP completion client.
//!
//! Request: `POST <endpoint>` with JSON
//! `{"model", "prompt", "max_new_tokens", "temperature", "stop"}`.
//! Response: JSON object with a string field `text` (or `generated_text`).

use std::time::Duration;

use serde_json::{json, Value};

use super::{GatewayError, GenerationJob, TextGenerator};

pub struct RemoteHttpProvider {
    client: reqwest::blocking::Client,
    endpoint: String,
    model: String,
    token: Option<String>,
}

impl RemoteHttpProvider {
    /// Reads the token from the environment variable `auth_env_var` when
    /// given. A missing variable is not an error here; the server decides.
    pub fn new(
        endpoint: String,
        model: String,
        auth_env_var: Option<&str>,
        timeout: Duration,
    ) -> Result<Self, GatewayError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| GatewayError::Config(e.to_string()))?;
        let token = auth_env_var.and_then(|v| std::env::var(v).ok()).filter(|t| !t.is_empty());
        Ok(RemoteHttpProvider { client, endpoint, model, token })
    }
}

impl TextGenerator for RemoteHttpProvider {
    fn complete(&self, job: &GenerationJob) -> Result<String, GatewayError> {
        let body = json!({
            "model": self.model,
            "prompt": job.prompt,
            "max_new_tokens": job.decoding.max_new_tokens,
            "temperature": job.decoding.temperature,
            "stop": job.decoding.stop_sequences,
        });
        let mut req = self
            .client
            .post(&self.endpoint)
            .header(reqwest::header::CONTENT_TYPE, "application/json")
            .body(body.to_string());
        if let Some(t) = &self.token {
            req = req.bearer_auth(t);
        }
        let resp = req.send().map_err(|e| GatewayError::ProviderError(e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            return Err(GatewayError::ProviderError(format!("{} answered {status}", self.endpoint)));
        }
        let text = resp.text().map_err(|e| GatewayError::ProviderError(e.to_string()))?;
        let v: Value =
            serde_json::from_str(&text).map_err(|e| GatewayError::ProviderError(format!("bad response body: {e}")))?;
        ["text", "generated_text"]
            .iter()
            .find_map(|k| v.get(k).and_then(Value::as_str))
            .map(str::to_string)
            .ok_or_else(|| GatewayError::ProviderError("response has no `text` field".into()))
    }
}
