//! HTTP model backend for the model translator.
//!
//! Sends `{"model", "prompt", "temperature": 0}` as JSON with an optional
//! bearer token. The completion is read from `text`, `output`,
//! `choices[0].text` or `choices[0].message.content`, falling back to the
//! raw body.

use std::time::Duration;

use nl2bi_core::planner::{BackendError, ModelBackend};
use serde_json::{json, Value};

use crate::config::ModelConfig;

pub struct HttpModelBackend {
    client: reqwest::Client,
    endpoint: String,
    model: String,
    token: Option<String>,
    handle: tokio::runtime::Handle,
}

impl HttpModelBackend {
    pub fn new(cfg: &ModelConfig, handle: tokio::runtime::Handle) -> Result<Self, String> {
        let endpoint = cfg.endpoint.clone().ok_or("model endpoint is not set")?;
        let client = reqwest::Client::builder()
            .timeout(Duration::from_secs(cfg.timeout_secs))
            .build()
            .map_err(|e| e.to_string())?;
        Ok(Self {
            client,
            endpoint,
            model: cfg.name.clone(),
            token: cfg.token.clone(),
            handle,
        })
    }

    async fn call(&self, prompt: &str) -> Result<String, BackendError> {
        let mut req = self.client.post(&self.endpoint).json(&json!({
            "model": self.model,
            "prompt": prompt,
            "temperature": 0,
        }));
        if let Some(t) = &self.token {
            req = req.bearer_auth(t);
        }
        let resp = req.send().await.map_err(|e| BackendError(e.to_string()))?;
        let status = resp.status();
        let body = resp.text().await.map_err(|e| BackendError(e.to_string()))?;
        if !status.is_success() {
            return Err(BackendError(format!("model endpoint returned {status}")));
        }
        Ok(completion_text(&body))
    }
}

pub fn completion_text(body: &str) -> String {
    let Ok(v) = serde_json::from_str::<Value>(body) else {
        return body.to_string();
    };
    let picks = [
        v.get("text"),
        v.get("output"),
        v.pointer("/choices/0/text"),
        v.pointer("/choices/0/message/content"),
    ];
    let text = picks.into_iter().flatten().find_map(Value::as_str);
    text.map_or_else(|| body.to_string(), String::from)
}

impl ModelBackend for HttpModelBackend {
    /// Blocks on the runtime handle; call from a blocking thread.
    fn complete(&self, prompt: &str) -> Result<String, BackendError> {
        self.handle.block_on(self.call(prompt))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn completion_fields() {
        assert_eq!(completion_text(r#"{"text":"a"}"#), "a");
        assert_eq!(
            completion_text(r#"{"choices":[{"message":{"content":"b"}}]}"#),
            "b"
        );
        assert_eq!(completion_text(r#"{"view_id":"t"}"#), r#"{"view_id":"t"}"#);
        assert_eq!(completion_text("plain"), "plain");
    }
}
