//! The run report written next to every extraction, successful or not.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::action::Method;
use crate::config::Ablations;
use crate::gateway::{Gateway, RequestRecord};
use crate::pipeline::df::WindowStatus;
use crate::pipeline::Flag;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub video_id: String,
    pub method: Method,
    pub model_id: String,
    pub provider: String,
    pub status: RunStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub frames: usize,
    pub ablations: Ablations,
    pub actions: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub windows: Vec<WindowStatus>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regions: Option<usize>,
    pub flags: Vec<Flag>,
    pub provider_calls: usize,
    pub cache_hits: usize,
    pub requests: Vec<RequestRecord>,
}

impl RunReport {
    pub fn new(video_id: &str, method: Method, gw: &Gateway, frames: usize, ablations: Ablations) -> RunReport {
        RunReport {
            video_id: video_id.into(),
            method,
            model_id: gw.profile().model_id.clone(),
            provider: gw.provider_name().into(),
            status: RunStatus::Ok,
            error: None,
            frames,
            ablations,
            actions: 0,
            windows: Vec::new(),
            regions: None,
            flags: Vec::new(),
            provider_calls: 0,
            cache_hits: 0,
            requests: Vec::new(),
        }
    }

    /// Copies the request log and counters out of the gateway.
    pub fn record_requests(&mut self, gw: &Gateway) {
        self.requests = gw.request_log();
        self.cache_hits = self.requests.iter().filter(|r| r.cache_hit).count();
        self.provider_calls = gw.provider_calls();
    }

    pub fn fail(&mut self, error: impl ToString) {
        self.status = RunStatus::Failed;
        self.error = Some(error.to_string());
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_json())
    }
}
