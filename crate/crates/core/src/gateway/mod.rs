//! Provider-agnostic access to chat-with-images models.
//!
//! Every request is keyed by a digest of its canonical serialization and
//! served from the response cache when possible.

pub mod cache;
pub mod embed;
pub mod json;
pub mod provider;

use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

pub use cache::{sha256_hex, CacheEntry, CacheStats, ResponseCache};
pub use embed::{EmbedBackend, EmbedError, EmbeddingVector, RemoteEmbedder, StubEmbedder};
pub use json::{extract_json, JsonExtractError};
pub use provider::{ChatProvider, LiveProvider, ReplayProvider, ScriptedProvider};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProviderError {
    #[error("transient provider failure: {0}")]
    Transient(String),
    #[error("provider failure: {0}")]
    Fatal(String),
    #[error("missing credentials: {0} is not set")]
    AuthMissing(String),
    #[error("no cached response for request `{0}` and the replay provider cannot call out")]
    ReplayMiss(String),
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("{0}")]
    Provider(ProviderError),
    #[error("request has {count} images but the model profile allows {limit}")]
    ImageLimitExceeded { count: usize, limit: usize },
    #[error("missing credentials: {0} is not set")]
    AuthMissing(String),
    #[error("corrupt cache entry {}: {reason}", path.display())]
    CacheCorrupt { path: PathBuf, reason: String },
    #[error("cache i/o: {0}")]
    Io(String),
    #[error("no JSON found in response to `{tag}`")]
    NoJsonFound { tag: String },
    #[error("unparseable JSON in response to `{tag}`: {message}")]
    ParseError { tag: String, message: String },
}

impl From<ProviderError> for GatewayError {
    fn from(e: ProviderError) -> Self {
        match e {
            ProviderError::AuthMissing(var) => GatewayError::AuthMissing(var),
            other => GatewayError::Provider(other),
        }
    }
}

impl GatewayError {
    /// True for failures of the model's output rather than of the plumbing.
    pub fn is_json_failure(&self) -> bool {
        matches!(self, GatewayError::NoJsonFound { .. } | GatewayError::ParseError { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImagePayload {
    pub bytes: Arc<Vec<u8>>,
    pub mime: String,
}

impl ImagePayload {
    pub fn png(bytes: Vec<u8>) -> ImagePayload {
        ImagePayload {
            bytes: Arc::new(bytes),
            mime: "image/png".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Part {
    Text(String),
    Image(ImagePayload),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    pub role: Role,
    pub parts: Vec<Part>,
}

impl Message {
    pub fn new(role: Role, parts: Vec<Part>) -> Message {
        Message { role, parts }
    }

    pub fn text(role: Role, text: impl Into<String>) -> Message {
        Message {
            role,
            parts: vec![Part::Text(text.into())],
        }
    }
}

/// One chat completion request. `tag` names the pipeline step for logs and
/// scripted transcripts; it is not part of the cache key.
#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub tag: String,
    pub model_id: String,
    pub messages: Vec<Message>,
    pub temperature: f64,
    pub max_output: u32,
}

pub const DEFAULT_MAX_OUTPUT: u32 = 4096;

impl ChatRequest {
    pub fn new(tag: impl Into<String>, model_id: impl Into<String>, messages: Vec<Message>) -> ChatRequest {
        ChatRequest {
            tag: tag.into(),
            model_id: model_id.into(),
            messages,
            temperature: 0.0,
            max_output: DEFAULT_MAX_OUTPUT,
        }
    }

    pub fn image_count(&self) -> usize {
        self.messages
            .iter()
            .flat_map(|m| &m.parts)
            .filter(|p| matches!(p, Part::Image(_)))
            .count()
    }

    /// Canonical form hashed into the cache key. Object keys are sorted and
    /// images are represented by their digest and length.
    pub fn canonical(&self) -> Value {
        let messages: Vec<Value> = self
            .messages
            .iter()
            .map(|m| {
                let parts: Vec<Value> = m
                    .parts
                    .iter()
                    .map(|p| match p {
                        Part::Text(t) => json!({"type": "text", "text": t}),
                        Part::Image(img) => json!({
                            "type": "image",
                            "mime": img.mime,
                            "sha256": sha256_hex(&img.bytes),
                            "len": img.bytes.len(),
                        }),
                    })
                    .collect();
                json!({"role": m.role.as_str(), "parts": parts})
            })
            .collect();
        json!({
            "model_id": self.model_id,
            "temperature": self.temperature,
            "max_output": self.max_output,
            "messages": messages,
        })
    }

    pub fn cache_key(&self) -> String {
        sha256_hex(&serde_json::to_vec(&self.canonical()).expect("canonical request serializes"))
    }

    fn summary(&self) -> Value {
        let images: Vec<String> = self
            .messages
            .iter()
            .flat_map(|m| &m.parts)
            .filter_map(|p| match p {
                Part::Image(img) => Some(sha256_hex(&img.bytes)),
                Part::Text(_) => None,
            })
            .collect();
        json!({
            "tag": self.tag,
            "model_id": self.model_id,
            "messages": self.messages.len(),
            "images": images,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RequestShape {
    #[default]
    OpenaiChat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelProfile {
    pub name: String,
    pub model_id: String,
    pub image_limit: usize,
    #[serde(default)]
    pub request_shape: RequestShape,
}

impl ModelProfile {
    pub fn new(name: &str, model_id: &str, image_limit: usize) -> ModelProfile {
        ModelProfile {
            name: name.into(),
            model_id: model_id.into(),
            image_limit,
            request_shape: RequestShape::OpenaiChat,
        }
    }

    /// Built-in profiles; the GPT-series endpoints accept at most ten images.
    pub fn builtin() -> Vec<ModelProfile> {
        vec![
            ModelProfile::new("gpt-4o", "gpt-4o", 10),
            ModelProfile::new("gpt-4o-mini", "gpt-4o-mini", 10),
            ModelProfile::new("gemini-1.5-pro", "gemini-1.5-pro", 3000),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 3,
            backoff_ms: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestRecord {
    pub tag: String,
    pub key: String,
    pub cache_hit: bool,
    pub images: usize,
}

/// Parsed JSON reply plus the conversation that produced it, ending with the
/// assistant turn. Follow-up turns extend `conversation`.
#[derive(Debug, Clone)]
pub struct JsonReply {
    pub value: Value,
    pub raw: String,
    pub conversation: Vec<Message>,
    pub retried: bool,
}

pub const JSON_RETRY_SUFFIX: &str = ".retry";
const JSON_RETRY_TEXT: &str =
    "The previous reply could not be parsed. Reply again with only the final JSON result and nothing else.";

pub const DEFAULT_PARALLELISM: usize = 4;

pub struct Gateway {
    provider: Box<dyn ChatProvider>,
    cache: Option<ResponseCache>,
    profile: ModelProfile,
    retry: RetryPolicy,
    parallelism: usize,
    max_output: u32,
    log: Mutex<Vec<RequestRecord>>,
    provider_calls: AtomicUsize,
}

impl Gateway {
    pub fn new(provider: Box<dyn ChatProvider>, profile: ModelProfile) -> Gateway {
        Gateway {
            provider,
            cache: None,
            profile,
            retry: RetryPolicy::default(),
            parallelism: DEFAULT_PARALLELISM,
            max_output: DEFAULT_MAX_OUTPUT,
            log: Mutex::new(Vec::new()),
            provider_calls: AtomicUsize::new(0),
        }
    }

    pub fn with_cache(mut self, cache: ResponseCache) -> Gateway {
        self.cache = Some(cache);
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Gateway {
        self.retry = retry;
        self
    }

    pub fn with_parallelism(mut self, parallelism: usize) -> Gateway {
        self.parallelism = parallelism.max(1);
        self
    }

    pub fn with_max_output(mut self, max_output: u32) -> Gateway {
        self.max_output = max_output;
        self
    }

    pub fn profile(&self) -> &ModelProfile {
        &self.profile
    }

    pub fn parallelism(&self) -> usize {
        self.parallelism
    }

    pub fn provider_name(&self) -> &str {
        self.provider.name()
    }

    pub fn provider_calls(&self) -> usize {
        self.provider_calls.load(Ordering::SeqCst)
    }

    /// Requests issued so far, sorted by tag so concurrent runs log stably.
    pub fn request_log(&self) -> Vec<RequestRecord> {
        let mut log = self.log.lock().expect("request log lock").clone();
        log.sort_by(|a, b| a.tag.cmp(&b.tag).then_with(|| a.key.cmp(&b.key)));
        log
    }

    /// A request for the configured model at temperature 0.
    pub fn request(&self, tag: impl Into<String>, messages: Vec<Message>) -> ChatRequest {
        let mut req = ChatRequest::new(tag, self.profile.model_id.clone(), messages);
        req.max_output = self.max_output;
        req
    }

    /// Calls the provider directly, retrying transient failures.
    pub fn complete_chat(&self, req: &ChatRequest) -> Result<String, GatewayError> {
        let count = req.image_count();
        if count > self.profile.image_limit {
            return Err(GatewayError::ImageLimitExceeded {
                count,
                limit: self.profile.image_limit,
            });
        }
        let mut attempt = 0;
        loop {
            self.provider_calls.fetch_add(1, Ordering::SeqCst);
            match self.provider.complete(req) {
                Ok(text) => return Ok(text),
                Err(ProviderError::Transient(msg)) if attempt < self.retry.max_retries => {
                    let wait = self.retry.backoff_ms.saturating_mul(1 << attempt.min(16));
                    log::warn!("{}: transient failure ({msg}), retrying in {wait} ms", req.tag);
                    std::thread::sleep(Duration::from_millis(wait));
                    attempt += 1;
                }
                Err(e) => return Err(e.into()),
            }
        }
    }

    /// Serves `req` from the cache, or calls the provider and stores the reply.
    pub fn cached_complete(&self, req: &ChatRequest) -> Result<String, GatewayError> {
        let key = req.cache_key();
        let record = |cache_hit| RequestRecord {
            tag: req.tag.clone(),
            key: key.clone(),
            cache_hit,
            images: req.image_count(),
        };
        if let Some(cache) = &self.cache {
            if let Some(hit) = cache.get(&key)? {
                log::debug!("{}: cache hit {key}", req.tag);
                self.log.lock().expect("request log lock").push(record(true));
                return Ok(hit);
            }
        }
        let result = self.complete_chat(req);
        self.log.lock().expect("request log lock").push(record(false));
        let text = result?;
        if let Some(cache) = &self.cache {
            cache.put(&key, req.summary(), &text)?;
        }
        Ok(text)
    }

    /// Completes `req` and extracts its JSON result. An unparseable reply is
    /// followed by one re-prompt in the same conversation before failing.
    pub fn complete_json(&self, req: &ChatRequest) -> Result<JsonReply, GatewayError> {
        let raw = self.cached_complete(req)?;
        let first_err = match extract_json(&raw) {
            Ok(value) => return Ok(self.reply(req.messages.clone(), raw, value, false)),
            Err(e) => e,
        };
        log::warn!("{}: {first_err}; re-prompting once", req.tag);
        let mut messages = req.messages.clone();
        messages.push(Message::text(Role::Assistant, raw));
        messages.push(Message::text(Role::User, JSON_RETRY_TEXT));
        let retry = ChatRequest {
            tag: format!("{}{JSON_RETRY_SUFFIX}", req.tag),
            messages,
            ..req.clone()
        };
        let raw = self.cached_complete(&retry)?;
        match extract_json(&raw) {
            Ok(value) => Ok(self.reply(retry.messages, raw, value, true)),
            Err(JsonExtractError::NoJsonFound) => Err(GatewayError::NoJsonFound { tag: req.tag.clone() }),
            Err(JsonExtractError::ParseError(message)) => Err(GatewayError::ParseError {
                tag: req.tag.clone(),
                message,
            }),
        }
    }

    fn reply(&self, mut conversation: Vec<Message>, raw: String, value: Value, retried: bool) -> JsonReply {
        conversation.push(Message::text(Role::Assistant, raw.clone()));
        JsonReply {
            value,
            raw,
            conversation,
            retried,
        }
    }
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;

    fn scripted(pairs: &[(&str, &str)]) -> Box<dyn ChatProvider> {
        let map: BTreeMap<String, String> = pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        Box::new(ScriptedProvider::new(map))
    }

    fn gpt() -> ModelProfile {
        ModelProfile::new("gpt-4o", "gpt-4o", 10)
    }

    fn images(n: usize) -> Vec<Message> {
        let parts = (0..n).map(|i| Part::Image(ImagePayload::png(vec![i as u8]))).collect();
        vec![Message::new(Role::User, parts)]
    }

    struct Flaky {
        fails: AtomicUsize,
    }

    impl ChatProvider for Flaky {
        fn complete(&self, _req: &ChatRequest) -> Result<String, ProviderError> {
            if self.fails.load(Ordering::SeqCst) > 0 {
                self.fails.fetch_sub(1, Ordering::SeqCst);
                return Err(ProviderError::Transient("503".into()));
            }
            Ok("ok".into())
        }

        fn name(&self) -> &str {
            "flaky"
        }
    }

    #[test]
    fn eleven_images_exceed_gpt_limit() {
        let gw = Gateway::new(scripted(&[("*", "x")]), gpt());
        assert!(gw.complete_chat(&gw.request("t", images(10))).is_ok());
        let err = gw.complete_chat(&gw.request("t", images(11))).unwrap_err();
        assert!(matches!(err, GatewayError::ImageLimitExceeded { count: 11, limit: 10 }));
    }

    #[test]
    fn requests_default_to_zero_temperature() {
        let gw = Gateway::new(scripted(&[]), gpt());
        assert_eq!(gw.request("t", vec![]).temperature, 0.0);
    }

    #[test]
    fn second_identical_request_is_a_cache_hit() {
        let dir = tempfile::tempdir().unwrap();
        let gw = Gateway::new(scripted(&[("*", "reply")]), gpt()).with_cache(ResponseCache::new(dir.path()));
        let req = gw.request("a", vec![Message::text(Role::User, "hello")]);
        assert_eq!(gw.cached_complete(&req).unwrap(), "reply");
        assert_eq!(gw.cached_complete(&req).unwrap(), "reply");
        assert_eq!(gw.provider_calls(), 1);
        let log = gw.request_log();
        assert_eq!(log.iter().filter(|r| r.cache_hit).count(), 1);
    }

    #[test]
    fn replay_serves_recorded_responses_verbatim() {
        let dir = tempfile::tempdir().unwrap();
        let req = ChatRequest::new("a", "gpt-4o", images(2));
        let recorder = Gateway::new(scripted(&[("*", "  {\"k\": 1}\n")]), gpt()).with_cache(ResponseCache::new(dir.path()));
        recorder.cached_complete(&req).unwrap();
        let replay = Gateway::new(Box::new(ReplayProvider), gpt()).with_cache(ResponseCache::new(dir.path()));
        assert_eq!(replay.cached_complete(&req).unwrap(), "  {\"k\": 1}\n");
        assert_eq!(replay.provider_calls(), 0);
        let miss = ChatRequest::new("b", "gpt-4o", images(3));
        assert!(matches!(
            replay.cached_complete(&miss),
            Err(GatewayError::Provider(ProviderError::ReplayMiss(_)))
        ));
    }

    #[test]
    fn image_byte_change_changes_key() {
        let a = ChatRequest::new("t", "m", images(2));
        let mut b = a.clone();
        if let Part::Image(img) = &mut b.messages[0].parts[1] {
            img.bytes = Arc::new(vec![9]);
        }
        assert_ne!(a.cache_key(), b.cache_key());
        let mut c = a.clone();
        c.tag = "other".into();
        assert_eq!(a.cache_key(), c.cache_key());
    }

    #[test]
    fn truncated_entry_is_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        let gw = Gateway::new(scripted(&[("*", "reply")]), gpt()).with_cache(ResponseCache::new(dir.path()));
        let req = gw.request("a", vec![Message::text(Role::User, "hello")]);
        gw.cached_complete(&req).unwrap();
        let path = ResponseCache::new(dir.path()).entry_path(&req.cache_key());
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        assert!(matches!(gw.cached_complete(&req), Err(GatewayError::CacheCorrupt { .. })));
    }

    #[test]
    fn transient_failures_are_retried() {
        let flaky = Flaky {
            fails: AtomicUsize::new(2),
        };
        let gw = Gateway::new(Box::new(flaky), gpt()).with_retry(RetryPolicy {
            max_retries: 2,
            backoff_ms: 0,
        });
        assert_eq!(gw.complete_chat(&gw.request("t", vec![])).unwrap(), "ok");
        assert_eq!(gw.provider_calls(), 3);

        let flaky = Flaky {
            fails: AtomicUsize::new(5),
        };
        let gw = Gateway::new(Box::new(flaky), gpt()).with_retry(RetryPolicy {
            max_retries: 1,
            backoff_ms: 0,
        });
        assert!(matches!(
            gw.complete_chat(&gw.request("t", vec![])),
            Err(GatewayError::Provider(ProviderError::Transient(_)))
        ));
    }

    #[test]
    fn invalid_json_is_reprompted_once() {
        let gw = Gateway::new(scripted(&[("s", "no json here"), ("s.retry", "{\"a\": 1}")]), gpt());
        let reply = gw.complete_json(&gw.request("s", vec![Message::text(Role::User, "go")])).unwrap();
        assert!(reply.retried);
        assert_eq!(reply.value, json!({"a": 1}));
        assert_eq!(reply.conversation.len(), 4);
        assert_eq!(gw.provider_calls(), 2);

        let gw = Gateway::new(scripted(&[("*", "still prose")]), gpt());
        let err = gw.complete_json(&gw.request("s", vec![])).unwrap_err();
        assert!(err.is_json_failure());
        assert_eq!(gw.provider_calls(), 2);
    }
}
