//! Text embeddings for semantic comparison of action details and contexts.

use std::collections::HashMap;
use std::sync::Mutex;

use serde_json::{json, Value};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmbedError {
    #[error("embedding provider error: {0}")]
    ProviderError(String),
    #[error("missing credentials: {0} is not set")]
    AuthMissing(String),
}

/// Unit-length vector; `empty` flags the zero vector produced for text with
/// no tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    pub values: Vec<f32>,
    pub empty: bool,
}

impl EmbeddingVector {
    pub fn from_raw(mut values: Vec<f32>) -> EmbeddingVector {
        let norm = values.iter().map(|v| (*v as f64) * (*v as f64)).sum::<f64>().sqrt();
        if norm == 0.0 {
            return EmbeddingVector { values, empty: true };
        }
        for v in values.iter_mut() {
            *v = (*v as f64 / norm) as f32;
        }
        EmbeddingVector { values, empty: false }
    }

    /// Cosine similarity; 0 when either side is the zero vector.
    pub fn cosine(&self, other: &EmbeddingVector) -> f32 {
        if self.empty || other.empty || self.values.len() != other.values.len() {
            return 0.0;
        }
        let dot: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| *a as f64 * *b as f64)
            .sum();
        dot.clamp(-1.0, 1.0) as f32
    }
}

pub trait EmbedBackend: Send + Sync {
    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError>;

    fn name(&self) -> &str;
}

pub const STUB_DIM: usize = 256;

/// Lowercase alphanumeric word tokens.
pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

/// 64-bit FNV-1a.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub fn stub_bucket(token: &str) -> usize {
    (fnv1a(token.as_bytes()) % STUB_DIM as u64) as usize
}

/// Hashed bag-of-words embedding. Deterministic on every platform; used in
/// tests and whenever no embedding service is configured.
#[derive(Debug, Default, Clone, Copy)]
pub struct StubEmbedder;

impl EmbedBackend for StubEmbedder {
    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        let mut counts = vec![0f32; STUB_DIM];
        for token in tokenize(text) {
            counts[stub_bucket(&token)] += 1.0;
        }
        Ok(EmbeddingVector::from_raw(counts))
    }

    fn name(&self) -> &str {
        "stub"
    }
}

/// OpenAI-compatible `/embeddings` endpoint, memoized per text.
pub struct RemoteEmbedder {
    base_url: String,
    api_key: String,
    model: String,
    client: reqwest::blocking::Client,
    memo: Mutex<HashMap<String, EmbeddingVector>>,
}

impl RemoteEmbedder {
    /// Reads `EMBED_API_KEY` and `EMBED_BASE_URL` through `env`.
    pub fn from_env_with(env: impl Fn(&str) -> Option<String>, model: &str) -> Result<RemoteEmbedder, EmbedError> {
        let api_key = env("EMBED_API_KEY").ok_or_else(|| EmbedError::AuthMissing("EMBED_API_KEY".into()))?;
        let base_url = env("EMBED_BASE_URL").unwrap_or_else(|| "https://api.openai.com/v1".into());
        Ok(RemoteEmbedder {
            base_url: base_url.trim_end_matches('/').to_string(),
            api_key,
            model: model.to_string(),
            client: reqwest::blocking::Client::new(),
            memo: Mutex::new(HashMap::new()),
        })
    }

    pub fn from_env(model: &str) -> Result<RemoteEmbedder, EmbedError> {
        RemoteEmbedder::from_env_with(|k| std::env::var(k).ok(), model)
    }
}

impl EmbedBackend for RemoteEmbedder {
    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        if let Some(v) = self.memo.lock().expect("memo lock").get(text) {
            return Ok(v.clone());
        }
        if text.trim().is_empty() {
            return Ok(EmbeddingVector::from_raw(vec![0.0; 1]));
        }
        let resp = self
            .client
            .post(format!("{}/embeddings", self.base_url))
            .bearer_auth(&self.api_key)
            .json(&json!({"model": self.model, "input": text}))
            .send()
            .map_err(|e| EmbedError::ProviderError(e.to_string()))?;
        let status = resp.status();
        let body: Value = resp.json().map_err(|e| EmbedError::ProviderError(e.to_string()))?;
        if !status.is_success() {
            return Err(EmbedError::ProviderError(format!("HTTP {status}: {body}")));
        }
        let values: Vec<f32> = body["data"][0]["embedding"]
            .as_array()
            .ok_or_else(|| EmbedError::ProviderError("response has no embedding".into()))?
            .iter()
            .filter_map(|v| v.as_f64().map(|f| f as f32))
            .collect();
        let vector = EmbeddingVector::from_raw(values);
        self.memo.lock().expect("memo lock").insert(text.to_string(), vector.clone());
        Ok(vector)
    }

    fn name(&self) -> &str {
        "remote"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn identical_text_has_cosine_one() {
        let e = StubEmbedder;
        let a = e.embed("click").unwrap();
        assert_abs_diff_eq!(a.cosine(&e.embed("click").unwrap()), 1.0, epsilon = 1e-6);
    }

    #[test]
    fn disjoint_tokens_in_distinct_buckets_are_orthogonal() {
        // the fixture vocabulary must not collide for this to hold
        assert_ne!(stub_bucket("alpha"), stub_bucket("beta"));
        let e = StubEmbedder;
        let c = e.embed("alpha").unwrap().cosine(&e.embed("beta").unwrap());
        assert_eq!(c, 0.0);
    }

    #[test]
    fn empty_text_is_flagged_zero() {
        let v = StubEmbedder.embed("").unwrap();
        assert!(v.empty);
        assert!(v.values.iter().all(|x| *x == 0.0));
        assert_eq!(v.cosine(&v), 0.0);
    }

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a(b""), 0xcbf2_9ce4_8422_2325);
        assert_eq!(fnv1a(b"a"), 0xaf63_dc4c_8601_ec8c);
    }

    #[test]
    fn remote_requires_key() {
        assert!(matches!(
            RemoteEmbedder::from_env_with(|_| None, "m"),
            Err(EmbedError::AuthMissing(_))
        ));
    }

    proptest! {
        #[test]
        fn stub_cosine_properties(a in "[a-zA-Z ]{1,30}", b in "[a-zA-Z ]{1,30}") {
            let e = StubEmbedder;
            let (va, vb) = (e.embed(&a).unwrap(), e.embed(&b).unwrap());
            if !va.empty {
                let norm: f32 = va.values.iter().map(|v| v * v).sum::<f32>().sqrt();
                prop_assert!((norm - 1.0).abs() < 1e-6);
                prop_assert!((va.cosine(&va) - 1.0).abs() < 1e-6);
            }
            let (ab, ba) = (va.cosine(&vb), vb.cosine(&va));
            prop_assert_eq!(ab, ba);
            prop_assert!((0.0..=1.0).contains(&ab));
        }
    }
}
