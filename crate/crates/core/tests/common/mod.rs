#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use deskact::action::{Method, Prediction};
use deskact::config::{ProviderKind, RunConfig};
use deskact::extract::{build_gateway, extract, load_frames, Extraction};
use deskact::gateway::{ChatProvider, ReplayProvider, ScriptedProvider};

pub const CASES: [&str; 3] = ["click", "scroll", "type"];
pub const METHODS: [Method; 2] = [Method::Df, Method::Difff];

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/cases")
}

pub fn transcript(case: &str, method: Method) -> PathBuf {
    fixtures().join(case).join(format!("transcript_{method}.json"))
}

pub fn golden(case: &str, method: Method) -> String {
    std::fs::read_to_string(fixtures().join(case).join(format!("expected_{method}.json"))).unwrap()
}

pub fn config(method: Method, cache: &Path, provider: ProviderKind, transcript: Option<PathBuf>) -> RunConfig {
    RunConfig {
        method,
        provider,
        transcript,
        cache_dir: cache.to_path_buf(),
        ..RunConfig::default()
    }
}

/// Runs one fixture case through `extract`; returns the extraction and the
/// number of provider calls it made.
pub fn run_case(cfg: &RunConfig, case: &str, provider: Box<dyn ChatProvider>) -> (Extraction, usize) {
    let frames = load_frames(&fixtures().join(case).join("frames"), cfg).unwrap();
    let gw = build_gateway(cfg, provider).unwrap();
    let out = extract(&gw, cfg, case, &frames);
    (out, gw.provider_calls())
}

pub fn record(case: &str, method: Method, cache: &Path) -> Prediction {
    let t = transcript(case, method);
    let cfg = config(method, cache, ProviderKind::Scripted, Some(t.clone()));
    let (out, _) = run_case(&cfg, case, Box::new(ScriptedProvider::from_file(&t).unwrap()));
    out.prediction.unwrap_or_else(|| panic!("{case}/{method}: {:?}", out.error))
}

/// Replays from a warm cache; panics if anything misses.
pub fn replay(case: &str, method: Method, cache: &Path) -> (Prediction, usize) {
    let cfg = config(method, cache, ProviderKind::Replay, None);
    let (out, calls) = run_case(&cfg, case, Box::new(ReplayProvider));
    let pred = out.prediction.unwrap_or_else(|| panic!("{case}/{method}: {:?}", out.error));
    (pred, calls)
}

pub fn tag_keys(requests: &[deskact::gateway::RequestRecord]) -> BTreeMap<String, (String, usize)> {
    requests.iter().map(|r| (r.tag.clone(), (r.key.clone(), r.images))).collect()
}
