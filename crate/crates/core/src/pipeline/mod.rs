//! The two extraction pipelines and what they share.

pub mod df;
pub mod difff;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::gateway::{GatewayError, ImagePayload, Part, ProviderError};
use crate::localizer::{encode_png, LocalizerError};
use crate::ingest::Frame;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("need at least {needed} frames, got {got}")]
    TooFewFrames { needed: usize, got: usize },
    #[error("run failed: {0}")]
    RunFailed(String),
    #[error("run failed: all {} windows failed", .0.len())]
    WindowsFailed(Vec<df::WindowStatus>),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Localizer(#[from] LocalizerError),
}

/// Something that went wrong in one unit of work without stopping the run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Flag {
    pub stage: String,
    pub unit: String,
    pub message: String,
}

impl Flag {
    pub fn new(stage: &str, unit: impl Into<String>, message: impl Into<String>) -> Flag {
        Flag {
            stage: stage.into(),
            unit: unit.into(),
            message: message.into(),
        }
    }
}

/// Failures a unit may absorb: unusable model output and provider errors
/// that survived the retry policy. Cache, credential, replay and image-limit
/// errors always abort.
pub(crate) fn degradable(e: &GatewayError) -> bool {
    e.is_json_failure()
        || matches!(
            e,
            GatewayError::Provider(ProviderError::Transient(_) | ProviderError::Fatal(_))
        )
}

pub(crate) fn png_part(frame: &Frame) -> Part {
    Part::Image(ImagePayload::png(encode_png(&frame.image)))
}

/// The array under `key`, or the value itself when it is already an array.
pub(crate) fn array_field<'a>(value: &'a Value, key: &str) -> Option<&'a Vec<Value>> {
    match value {
        Value::Array(items) => Some(items),
        Value::Object(map) => map.get(key).and_then(Value::as_array),
        _ => None,
    }
}

pub(crate) fn pretty(value: &impl Serialize) -> String {
    serde_json::to_string_pretty(value).expect("pipeline payload serializes")
}
