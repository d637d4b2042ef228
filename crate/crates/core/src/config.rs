//! Run configuration, loadable from TOML. Every key is optional and falls
//! back to the defaults below.
//!
//! ```toml
//! method = "df"            # or "difff"
//! model = "gpt-4o"         # profile name
//! fps = "1"                # sampling rate; "2", "29.97" and "30000/1001" also parse
//! provider = "live"        # live | replay | scripted
//! transcript = "t.json"    # scripted provider only
//! cache_dir = "cache"
//! parallelism = 4
//! max_output = 4096
//!
//! [window]
//! window_size = 10
//! overlap = 5
//!
//! [localizer]
//! blur_kernel = 5
//! blur_sigma = 2.0
//! diff_threshold = 0.15
//! min_area_px = 10
//! expand_px = 100
//!
//! [ablations]
//! no_corrector = false
//! no_sliding_window = false
//! annotate_regions = false
//! frames_to_proposer = false
//!
//! corrector_mode = "follow_up"   # or "standalone"
//!
//! [retry]
//! max_retries = 3
//! backoff_ms = 500
//!
//! [eval]
//! threshold = 0.7
//! embedder = "stub"        # or "remote"
//! embed_model = "text-embedding-3-small"
//!
//! [[profiles]]
//! name = "my-model"
//! model_id = "vendor/model-x"
//! image_limit = 16
//! ```

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::Method;
use crate::gateway::{ModelProfile, RetryPolicy, DEFAULT_MAX_OUTPUT, DEFAULT_PARALLELISM};
use crate::ingest::Fps;
use crate::localizer::LocalizerParams;
use crate::pipeline::df::{DfAblations, DfConfig, WindowConfig};
use crate::pipeline::difff::{CorrectorMode, DifffAblations, DifffConfig};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {message}")]
    Read { path: PathBuf, message: String },
    #[error("invalid config {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("unknown model profile `{0}`")]
    UnknownProfile(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    #[default]
    Live,
    Replay,
    Scripted,
}

impl FromStr for ProviderKind {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "live" => Ok(ProviderKind::Live),
            "replay" => Ok(ProviderKind::Replay),
            "scripted" => Ok(ProviderKind::Scripted),
            other => Err(ConfigError::Invalid(format!("unknown provider `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbedderKind {
    #[default]
    Stub,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub threshold: f64,
    pub embedder: EmbedderKind,
    pub embed_model: String,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            threshold: crate::eval::DEFAULT_THRESHOLD,
            embedder: EmbedderKind::Stub,
            embed_model: "text-embedding-3-small".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Ablations {
    pub no_corrector: bool,
    pub no_sliding_window: bool,
    pub annotate_regions: bool,
    pub frames_to_proposer: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub method: Method,
    pub model: String,
    pub fps: Fps,
    pub provider: ProviderKind,
    pub transcript: Option<PathBuf>,
    pub cache_dir: PathBuf,
    pub parallelism: usize,
    pub max_output: u32,
    pub window: WindowConfig,
    pub localizer: LocalizerParams,
    pub ablations: Ablations,
    pub corrector_mode: CorrectorMode,
    pub retry: RetryPolicy,
    pub eval: EvalConfig,
    pub profiles: Vec<ModelProfile>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            method: Method::Df,
            model: "gpt-4o".into(),
            fps: Fps::integer(1),
            provider: ProviderKind::Live,
            transcript: None,
            cache_dir: PathBuf::from("cache"),
            parallelism: DEFAULT_PARALLELISM,
            max_output: DEFAULT_MAX_OUTPUT,
            window: WindowConfig::default(),
            localizer: LocalizerParams::default(),
            ablations: Ablations::default(),
            corrector_mode: CorrectorMode::FollowUp,
            retry: RetryPolicy::default(),
            eval: EvalConfig::default(),
            profiles: Vec::new(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str, path: &Path) -> Result<RunConfig, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<RunConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        RunConfig::from_toml_str(&text, path)
    }

    /// Looks `model` up among configured profiles first, then the built-ins.
    pub fn profile(&self) -> Result<ModelProfile, ConfigError> {
        self.profiles
            .iter()
            .chain(ModelProfile::builtin().iter())
            .find(|p| p.name == self.model)
            .cloned()
            .ok_or_else(|| ConfigError::UnknownProfile(self.model.clone()))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.window.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.localizer.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if !(self.eval.threshold > 0.0 && self.eval.threshold <= 1.0) {
            return Err(ConfigError::Invalid(format!(
                "eval threshold must lie in (0, 1], got {}",
                self.eval.threshold
            )));
        }
        if self.parallelism == 0 {
            return Err(ConfigError::Invalid("parallelism must be at least 1".into()));
        }
        if self.provider == ProviderKind::Scripted && self.transcript.is_none() {
            return Err(ConfigError::Invalid("the scripted provider needs a transcript".into()));
        }
        let df_only = self.ablations.no_sliding_window || self.ablations.annotate_regions;
        if self.method == Method::Difff && df_only {
            return Err(ConfigError::Invalid(
                "--no-sliding-window and --annotate-regions apply to the df method only".into(),
            ));
        }
        if self.method == Method::Df && self.ablations.frames_to_proposer {
            return Err(ConfigError::Invalid("--frames-to-proposer applies to the difff method only".into()));
        }
        self.profile()?;
        Ok(())
    }

    pub fn df_config(&self) -> DfConfig {
        DfConfig {
            window: self.window,
            localizer: self.localizer,
            ablations: DfAblations {
                no_corrector: self.ablations.no_corrector,
                no_sliding_window: self.ablations.no_sliding_window,
                annotate_regions: self.ablations.annotate_regions,
            },
        }
    }

    pub fn difff_config(&self) -> DifffConfig {
        DifffConfig {
            localizer: self.localizer,
            ablations: DifffAblations {
                no_corrector: self.ablations.no_corrector,
                frames_to_proposer: self.ablations.frames_to_proposer,
            },
            corrector_mode: self.corrector_mode,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = RunConfig::default();
        assert_eq!((c.window.window_size, c.window.overlap), (10, 5));
        assert_eq!(c.localizer.diff_threshold, 0.15);
        assert_eq!(c.localizer.blur_sigma, 2.0);
        assert_eq!(c.localizer.expand_px, 100);
        assert_eq!(c.eval.threshold, 0.7);
        assert_eq!(c.fps, Fps::integer(1));
        assert_eq!(c.profile().unwrap().image_limit, 10);
        c.validate().unwrap();
    }

    #[test]
    fn empty_file_is_default() {
        assert_eq!(RunConfig::from_toml_str("", Path::new("x")).unwrap(), RunConfig::default());
    }

    #[test]
    fn partial_file_overrides() {
        let text = r#"
            method = "difff"
            model = "local"
            fps = "30000/1001"
            [window]
            overlap = 3
            [eval]
            threshold = 0.8
            [[profiles]]
            name = "local"
            model_id = "llava"
            image_limit = 4
        "#;
        let c = RunConfig::from_toml_str(text, Path::new("x")).unwrap();
        assert_eq!(c.method, Method::Difff);
        assert_eq!(c.window.window_size, 10);
        assert_eq!(c.window.overlap, 3);
        assert_eq!(c.fps, Fps::new(30000, 1001).unwrap());
        assert_eq!(c.eval.embedder, EmbedderKind::Stub);
        assert_eq!(c.profile().unwrap().model_id, "llava");
        c.validate().unwrap();
    }

    #[test]
    fn invalid_values_are_rejected() {
        assert!(RunConfig::from_toml_str("method = \"video\"", Path::new("x")).is_err());
        let mut c = RunConfig::default();
        c.window.overlap = 10;
        assert!(c.validate().is_err());
        let mut c = RunConfig::default();
        c.model = "nope".into();
        assert!(matches!(c.validate(), Err(ConfigError::UnknownProfile(_))));
        let mut c = RunConfig::default();
        c.ablations.frames_to_proposer = true;
        assert!(c.validate().is_err());
    }
}
