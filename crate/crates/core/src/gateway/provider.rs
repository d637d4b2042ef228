//! Chat providers: a live OpenAI-compatible HTTP client, a cache-only
//! replay provider and a scripted provider answering from a transcript.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Duration;

use base64::Engine;
use serde_json::{json, Value};

use super::{ChatRequest, Part, ProviderError};

pub trait ChatProvider: Send + Sync {
    fn complete(&self, req: &ChatRequest) -> Result<String, ProviderError>;

    fn name(&self) -> &str;
}

/// OpenAI-style `/chat/completions` client.
pub struct LiveProvider {
    base_url: String,
    api_key: String,
    client: reqwest::blocking::Client,
}

impl LiveProvider {
    /// Reads `VLM_API_KEY` and `VLM_BASE_URL` through `env`.
    pub fn from_env_with(env: impl Fn(&str) -> Option<String>) -> Result<LiveProvider, ProviderError> {
        let api_key = env("VLM_API_KEY")
            .filter(|k| !k.is_empty())
            .ok_or_else(|| ProviderError::AuthMissing("VLM_API_KEY".into()))?;
        let base_url = env("VLM_BASE_URL").unwrap_or_else(|| "https://api.openai.com/v1".into());
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(300))
            .build()
            .map_err(|e| ProviderError::Fatal(e.to_string()))?;
        Ok(LiveProvider {
            base_url: base_url.trim_end_matches('/').to_string(),
            api_key,
            client,
        })
    }

    pub fn from_env() -> Result<LiveProvider, ProviderError> {
        LiveProvider::from_env_with(|k| std::env::var(k).ok())
    }

    pub fn request_body(req: &ChatRequest) -> Value {
        let b64 = base64::engine::general_purpose::STANDARD;
        let messages: Vec<Value> = req
            .messages
            .iter()
            .map(|m| {
                let content: Vec<Value> = m
                    .parts
                    .iter()
                    .map(|p| match p {
                        Part::Text(t) => json!({"type": "text", "text": t}),
                        Part::Image(img) => json!({
                            "type": "image_url",
                            "image_url": {"url": format!("data:{};base64,{}", img.mime, b64.encode(&*img.bytes))}
                        }),
                    })
                    .collect();
                json!({"role": m.role.as_str(), "content": content})
            })
            .collect();
        json!({
            "model": req.model_id,
            "messages": messages,
            "temperature": req.temperature,
            "max_tokens": req.max_output,
        })
    }
}

impl ChatProvider for LiveProvider {
    fn complete(&self, req: &ChatRequest) -> Result<String, ProviderError> {
        let resp = self
            .client
            .post(format!("{}/chat/completions", self.base_url))
            .bearer_auth(&self.api_key)
            .json(&LiveProvider::request_body(req))
            .send()
            .map_err(|e| ProviderError::Transient(e.to_string()))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| ProviderError::Transient(e.to_string()))?;
        if status.as_u16() == 429 || status.is_server_error() {
            return Err(ProviderError::Transient(format!("HTTP {status}: {text}")));
        }
        if !status.is_success() {
            return Err(ProviderError::Fatal(format!("HTTP {status}: {text}")));
        }
        let body: Value = serde_json::from_str(&text).map_err(|e| ProviderError::Fatal(e.to_string()))?;
        body["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| ProviderError::Fatal(format!("no message content in response: {text}")))
    }

    fn name(&self) -> &str {
        "live"
    }
}

/// Serves only what is already cached; every provider call is a miss.
#[derive(Debug, Default)]
pub struct ReplayProvider;

impl ChatProvider for ReplayProvider {
    fn complete(&self, req: &ChatRequest) -> Result<String, ProviderError> {
        Err(ProviderError::ReplayMiss(req.tag.clone()))
    }

    fn name(&self) -> &str {
        "replay"
    }
}

/// Answers from a transcript mapping request tags to reply text.
///
/// A tag such as `df.proposer.w0.retry` is looked up as is, then as
/// `df.proposer.w0.*`, `df.proposer.*`, `df.*` and finally `*`.
#[derive(Debug, Clone, Default)]
pub struct ScriptedProvider {
    responses: BTreeMap<String, String>,
}

impl ScriptedProvider {
    pub fn new(responses: BTreeMap<String, String>) -> ScriptedProvider {
        ScriptedProvider { responses }
    }

    /// Transcript file: `{"responses": {"<tag or pattern>": "<reply>"}}`.
    pub fn from_file(path: &Path) -> Result<ScriptedProvider, ProviderError> {
        let bytes = std::fs::read(path).map_err(|e| ProviderError::Fatal(format!("{}: {e}", path.display())))?;
        let v: Value = serde_json::from_slice(&bytes).map_err(|e| ProviderError::Fatal(format!("{}: {e}", path.display())))?;
        let map = v
            .get("responses")
            .and_then(Value::as_object)
            .ok_or_else(|| ProviderError::Fatal(format!("{}: missing `responses` object", path.display())))?;
        let responses = map
            .iter()
            .map(|(k, v)| {
                let text = match v {
                    Value::String(s) => s.clone(),
                    other => serde_json::to_string_pretty(other).expect("value serializes"),
                };
                (k.clone(), text)
            })
            .collect();
        Ok(ScriptedProvider { responses })
    }

    pub fn lookup(&self, tag: &str) -> Option<&str> {
        if let Some(r) = self.responses.get(tag) {
            return Some(r);
        }
        let mut prefix = tag;
        while let Some(cut) = prefix.rfind('.') {
            prefix = &prefix[..cut];
            if let Some(r) = self.responses.get(&format!("{prefix}.*")) {
                return Some(r);
            }
        }
        self.responses.get("*").map(String::as_str)
    }
}

impl ChatProvider for ScriptedProvider {
    fn complete(&self, req: &ChatRequest) -> Result<String, ProviderError> {
        self.lookup(&req.tag)
            .map(str::to_string)
            .ok_or_else(|| ProviderError::Fatal(format!("no scripted response for `{}`", req.tag)))
    }

    fn name(&self) -> &str {
        "scripted"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{ImagePayload, Message, Role};

    #[test]
    fn live_provider_without_key_is_auth_missing() {
        assert!(matches!(
            LiveProvider::from_env_with(|_| None),
            Err(ProviderError::AuthMissing(_))
        ));
    }

    #[test]
    fn request_body_shape() {
        let req = ChatRequest::new(
            "t",
            "gpt-4o",
            vec![Message::new(
                Role::User,
                vec![Part::Text("hi".into()), Part::Image(ImagePayload::png(vec![1, 2, 3]))],
            )],
        );
        let body = LiveProvider::request_body(&req);
        assert_eq!(body["temperature"], json!(0.0));
        assert_eq!(body["messages"][0]["content"][0]["text"], "hi");
        assert_eq!(body["messages"][0]["content"][1]["image_url"]["url"], "data:image/png;base64,AQID");
    }

    #[test]
    fn scripted_wildcards() {
        let mut m = BTreeMap::new();
        m.insert("df.proposer.w0".to_string(), "exact".to_string());
        m.insert("df.proposer.*".to_string(), "stage".to_string());
        m.insert("*".to_string(), "any".to_string());
        let p = ScriptedProvider::new(m);
        assert_eq!(p.lookup("df.proposer.w0"), Some("exact"));
        assert_eq!(p.lookup("df.proposer.w1"), Some("stage"));
        assert_eq!(p.lookup("df.proposer.w0.retry"), Some("stage"));
        assert_eq!(p.lookup("difff.descriptor.1_0"), Some("any"));
    }
}
