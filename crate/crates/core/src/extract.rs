//! End-to-end extraction for one video: frames in, prediction and run
//! report out.

use std::path::Path;

use thiserror::Error;

use crate::action::{Method, Prediction};
use crate::config::{ConfigError, ProviderKind, RunConfig};
use crate::gateway::{ChatProvider, Gateway, LiveProvider, ProviderError, ReplayProvider, ResponseCache, ScriptedProvider};
use crate::ingest::{load_frame_dir, sample_frames, FrameSequence, IngestError, SamplingConfig};
use crate::localizer::regions_to_json;
use crate::pipeline::df::run_df;
use crate::pipeline::difff::{changes_to_json, run_difff};
use crate::pipeline::PipelineError;
use crate::report::RunReport;

#[derive(Debug, Error)]
pub enum SetupError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
}

pub fn build_provider(cfg: &RunConfig) -> Result<Box<dyn ChatProvider>, SetupError> {
    Ok(match cfg.provider {
        ProviderKind::Live => Box::new(LiveProvider::from_env()?),
        ProviderKind::Replay => Box::new(ReplayProvider),
        ProviderKind::Scripted => {
            let path = cfg
                .transcript
                .as_deref()
                .ok_or_else(|| ConfigError::Invalid("the scripted provider needs a transcript".into()))?;
            Box::new(ScriptedProvider::from_file(path)?)
        }
    })
}

/// Gateway for `cfg` with its response cache at `cfg.cache_dir`.
pub fn build_gateway(cfg: &RunConfig, provider: Box<dyn ChatProvider>) -> Result<Gateway, SetupError> {
    cfg.validate()?;
    Ok(Gateway::new(provider, cfg.profile()?)
        .with_cache(ResponseCache::new(&cfg.cache_dir))
        .with_retry(cfg.retry)
        .with_parallelism(cfg.parallelism)
        .with_max_output(cfg.max_output))
}

/// Loads a frame directory and samples it at the configured rate.
pub fn load_frames(dir: &Path, cfg: &RunConfig) -> Result<FrameSequence, IngestError> {
    let raw = load_frame_dir(dir)?;
    sample_frames(
        &raw,
        SamplingConfig {
            rate_fps: cfg.fps,
            source_fps: raw.meta.source_fps,
        },
    )
}

/// Intermediate DiffF outputs, each already serialized.
#[derive(Debug, Clone, Default)]
pub struct Artifacts {
    pub regions: Option<String>,
    pub changes: Option<String>,
    pub proposed: Option<String>,
    pub corrected: Option<String>,
}

#[derive(Debug)]
pub struct Extraction {
    pub prediction: Option<Prediction>,
    pub report: RunReport,
    pub artifacts: Artifacts,
    pub error: Option<PipelineError>,
}

fn json_line(v: &impl serde::Serialize) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("artifact serializes");
    s.push('\n');
    s
}

/// Runs the configured method. Failures are returned inside the
/// [`Extraction`] so the report is always available.
pub fn extract(gw: &Gateway, cfg: &RunConfig, video_id: &str, frames: &FrameSequence) -> Extraction {
    let mut report = RunReport::new(video_id, cfg.method, gw, frames.len(), cfg.ablations);
    let mut artifacts = Artifacts::default();
    let outcome = match cfg.method {
        Method::Df => run_df(gw, frames, &cfg.df_config()).map(|run| {
            report.windows = run.windows;
            report.flags = run.flags;
            run.actions
        }),
        Method::Difff => run_difff(gw, frames, &cfg.difff_config()).map(|run| {
            report.regions = Some(run.regions.len());
            report.flags = run.flags;
            artifacts = Artifacts {
                regions: Some(regions_to_json(&run.regions)),
                changes: Some(changes_to_json(&run.changes)),
                proposed: Some(json_line(&run.proposed)),
                corrected: Some(json_line(&run.corrected)),
            };
            run.actions
        }),
    };
    report.record_requests(gw);
    match outcome {
        Ok(actions) => {
            report.actions = actions.len();
            Extraction {
                prediction: Some(Prediction {
                    video_id: video_id.into(),
                    method: cfg.method,
                    actions,
                }),
                report,
                artifacts,
                error: None,
            }
        }
        Err(e) => {
            if let PipelineError::WindowsFailed(windows) = &e {
                report.windows = windows.clone();
            }
            report.fail(&e);
            Extraction {
                prediction: None,
                report,
                artifacts,
                error: Some(e),
            }
        }
    }
}
