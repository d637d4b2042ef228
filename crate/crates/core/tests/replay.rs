mod common;

use deskact::action::Method;
use deskact::config::ProviderKind;
use deskact::gateway::ReplayProvider;
use deskact::report::RunStatus;

#[test]
fn every_fixture_replays_to_its_golden() {
    for method in common::METHODS {
        let cache = tempfile::tempdir().unwrap();
        for case in common::CASES {
            let recorded = common::record(case, method, cache.path());
            let (replayed, calls) = common::replay(case, method, cache.path());
            assert_eq!(calls, 0, "{case}/{method}");
            assert_eq!(recorded, replayed);
            assert_eq!(replayed.to_json(), common::golden(case, method), "{case}/{method}");
        }
    }
}

#[test]
fn cold_cache_replay_fails_with_report() {
    let cache = tempfile::tempdir().unwrap();
    let cfg = common::config(Method::Df, cache.path(), ProviderKind::Replay, None);
    let (out, _) = common::run_case(&cfg, "click", Box::new(ReplayProvider));
    assert!(out.prediction.is_none());
    assert!(out.error.is_some());
    assert_eq!(out.report.status, RunStatus::Failed);
    assert_eq!(out.report.requests.len(), 1);
    assert!(!out.report.requests[0].cache_hit);
}

#[test]
fn difff_artifacts_cite_localized_regions() {
    let cache = tempfile::tempdir().unwrap();
    let t = common::transcript("scroll", Method::Difff);
    let cfg = common::config(Method::Difff, cache.path(), ProviderKind::Scripted, Some(t.clone()));
    let (out, _) = common::run_case(&cfg, "scroll", Box::new(deskact::gateway::ScriptedProvider::from_file(&t).unwrap()));
    let regions: serde_json::Value = serde_json::from_str(out.artifacts.regions.as_deref().unwrap()).unwrap();
    let ids: Vec<&str> = regions.as_array().unwrap().iter().map(|r| r["id"].as_str().unwrap()).collect();
    assert_eq!(ids, ["1_0", "2_0"]);
    let corrected: serde_json::Value = serde_json::from_str(out.artifacts.corrected.as_deref().unwrap()).unwrap();
    // the cursorless click survives the VLM corrector and is removed by the rules
    assert_eq!(corrected.as_array().unwrap().len(), 2);
    assert_eq!(out.prediction.unwrap().actions.len(), 1);
    assert_eq!(out.report.regions, Some(2));
}
