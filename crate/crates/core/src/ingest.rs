//! Frame directories, uniform sampling and benchmark corpora.
//!
//! A recording arrives as a directory of `frame_NNNNNN.png` files plus a
//! `meta.json` describing the source frame rate and resolution. Decoding a
//! video into that layout is left to an external tool (see the README).

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use image::RgbImage;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::{parse_ground_truth, ActionError, GroundTruthCase};
use crate::par::{self, Exec};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("missing meta.json in {0}")]
    MissingMeta(PathBuf),
    #[error("invalid meta.json in {path}: {message}")]
    BadMeta { path: PathBuf, message: String },
    #[error("no frames found in {0}")]
    NoFrames(PathBuf),
    #[error("frame index gap: expected frame_{expected:06}.png, found frame_{found:06}.png")]
    GapInIndices { expected: usize, found: usize },
    #[error("{path}: expected {expected_w}x{expected_h}, got {got_w}x{got_h}")]
    DimensionMismatch {
        path: PathBuf,
        expected_w: u32,
        expected_h: u32,
        got_w: u32,
        got_h: u32,
    },
    #[error("sampling rate {rate} exceeds source rate {source_fps}")]
    RateExceedsSource { rate: Fps, source_fps: Fps },
    #[error("frame directory {0} does not exist")]
    MissingFrameDir(PathBuf),
    #[error("failed to decode {path}: {message}")]
    Decode { path: PathBuf, message: String },
    #[error(transparent)]
    Annotation(#[from] ActionError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid corpus index {path}: {message}")]
    BadIndex { path: PathBuf, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IngestError + '_ {
    move |source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// A positive rational frame rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Fps {
    num: u64,
    den: u64,
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

impl Fps {
    pub fn new(num: u64, den: u64) -> Option<Fps> {
        if num == 0 || den == 0 {
            return None;
        }
        let g = gcd(num, den);
        Some(Fps { num: num / g, den: den / g })
    }

    pub fn integer(n: u64) -> Fps {
        Fps::new(n, 1).expect("integer frame rate must be positive")
    }

    pub fn num(self) -> u64 {
        self.num
    }

    pub fn den(self) -> u64 {
        self.den
    }

    /// Converts through the shortest decimal representation, so `29.97`
    /// becomes exactly 2997/100.
    pub fn from_f64(v: f64) -> Option<Fps> {
        if !v.is_finite() || v <= 0.0 {
            return None;
        }
        format!("{v}").parse().ok()
    }

    pub fn as_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

impl fmt::Display for Fps {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den == 1 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

impl FromStr for Fps {
    type Err = String;

    /// Accepts `30`, `29.97` and `30000/1001`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let bad = || format!("invalid frame rate `{s}`");
        if let Some((n, d)) = s.split_once('/') {
            let n: u64 = n.trim().parse().map_err(|_| bad())?;
            let d: u64 = d.trim().parse().map_err(|_| bad())?;
            return Fps::new(n, d).ok_or_else(bad);
        }
        let (int, frac) = s.split_once('.').unwrap_or((s, ""));
        if int.is_empty() && frac.is_empty() {
            return Err(bad());
        }
        if !int.bytes().all(|b| b.is_ascii_digit()) || !frac.bytes().all(|b| b.is_ascii_digit()) || frac.len() > 12 {
            return Err(bad());
        }
        let den = 10u64.pow(frac.len() as u32);
        let int: u64 = if int.is_empty() { 0 } else { int.parse().map_err(|_| bad())? };
        let frac: u64 = if frac.is_empty() { 0 } else { frac.parse().map_err(|_| bad())? };
        let num = int.checked_mul(den).and_then(|v| v.checked_add(frac)).ok_or_else(bad)?;
        Fps::new(num, den).ok_or_else(bad)
    }
}

impl Serialize for Fps {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        if self.den == 1 {
            serializer.serialize_u64(self.num)
        } else {
            serializer.serialize_f64(self.as_f64())
        }
    }
}

impl<'de> Deserialize<'de> for Fps {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let v = serde_json::Value::deserialize(deserializer)?;
        let parsed = match &v {
            serde_json::Value::Number(n) => n.as_f64().and_then(Fps::from_f64),
            serde_json::Value::String(s) => s.parse().ok(),
            _ => None,
        };
        parsed.ok_or_else(|| serde::de::Error::custom(format!("invalid frame rate {v}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameMeta {
    pub source_fps: Fps,
    pub width: u32,
    pub height: u32,
}

/// A decoded frame file, before sampling.
#[derive(Debug, Clone)]
pub struct RawFrame {
    pub index: usize,
    pub path: PathBuf,
    pub image: Arc<RgbImage>,
}

#[derive(Debug, Clone)]
pub struct RawFrames {
    pub meta: FrameMeta,
    pub frames: Vec<RawFrame>,
}

/// A sampled frame. Pixels are kept as 8-bit RGB; [`Frame::value`] and the
/// localizer read them normalized to `[0, 1]`.
#[derive(Debug, Clone)]
pub struct Frame {
    pub index: usize,
    pub timestamp_s: f64,
    pub image: Arc<RgbImage>,
    pub source_path: PathBuf,
}

impl Frame {
    pub fn from_image(index: usize, timestamp_s: f64, image: RgbImage) -> Frame {
        Frame {
            index,
            timestamp_s,
            image: Arc::new(image),
            source_path: PathBuf::new(),
        }
    }

    pub fn width(&self) -> u32 {
        self.image.width()
    }

    pub fn height(&self) -> u32 {
        self.image.height()
    }

    /// Channel value at (row, col) in `[0, 1]`.
    pub fn value(&self, row: u32, col: u32, channel: usize) -> f32 {
        self.image.get_pixel(col, row).0[channel] as f32 / 255.0
    }
}

#[derive(Debug, Clone)]
pub struct FrameSequence {
    pub frames: Vec<Frame>,
    pub rate: Fps,
}

impl FrameSequence {
    pub fn new(frames: Vec<Frame>, rate: Fps) -> FrameSequence {
        FrameSequence { frames, rate }
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// (height, width) of the first frame.
    pub fn resolution(&self) -> Option<(u32, u32)> {
        self.frames.first().map(|f| (f.height(), f.width()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingConfig {
    pub rate_fps: Fps,
    pub source_fps: Fps,
}

fn parse_frame_name(name: &str) -> Option<usize> {
    let digits = name.strip_prefix("frame_")?.strip_suffix(".png")?;
    if digits.len() != 6 || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse().ok()
}

pub fn frame_file_name(index: usize) -> String {
    format!("frame_{index:06}.png")
}

pub fn read_meta(dir: &Path) -> Result<FrameMeta, IngestError> {
    let path = dir.join("meta.json");
    if !path.is_file() {
        return Err(IngestError::MissingMeta(dir.to_path_buf()));
    }
    let bytes = fs::read(&path).map_err(io_err(&path))?;
    serde_json::from_slice(&bytes).map_err(|e| IngestError::BadMeta {
        path,
        message: e.to_string(),
    })
}

/// Decodes one image file to 8-bit RGB.
pub fn read_png(path: &Path) -> Result<RgbImage, IngestError> {
    image::open(path)
        .map(|img| img.to_rgb8())
        .map_err(|e| IngestError::Decode {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
}

pub fn load_frame_dir(dir: &Path) -> Result<RawFrames, IngestError> {
    load_frame_dir_with(dir, Exec::default())
}

pub fn load_frame_dir_with(dir: &Path, exec: Exec) -> Result<RawFrames, IngestError> {
    if !dir.is_dir() {
        return Err(IngestError::MissingFrameDir(dir.to_path_buf()));
    }
    let meta = read_meta(dir)?;

    let mut indexed: Vec<(usize, PathBuf)> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|entry| entry.ok())
        .filter_map(|entry| {
            let name = entry.file_name();
            parse_frame_name(name.to_str()?).map(|i| (i, entry.path()))
        })
        .collect();
    if indexed.is_empty() {
        return Err(IngestError::NoFrames(dir.to_path_buf()));
    }
    indexed.sort();
    for (expected, (found, _)) in indexed.iter().enumerate() {
        if *found != expected {
            return Err(IngestError::GapInIndices {
                expected,
                found: *found,
            });
        }
    }

    let decoded = par::map(exec, &indexed, |(index, path)| -> Result<RawFrame, IngestError> {
        let image = read_png(path)?;
        if image.width() != meta.width || image.height() != meta.height {
            return Err(IngestError::DimensionMismatch {
                path: path.clone(),
                expected_w: meta.width,
                expected_h: meta.height,
                got_w: image.width(),
                got_h: image.height(),
            });
        }
        Ok(RawFrame {
            index: *index,
            path: path.clone(),
            image: Arc::new(image),
        })
    });
    let frames = decoded.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok(RawFrames { meta, frames })
}

/// Raw frame indices picked by uniform sampling: sample `k` sits at
/// `k / rate` seconds and takes raw frame `floor(k / rate * source)`, for
/// every `k` with `k / rate < raw_count / source`. Exact rational arithmetic.
pub fn sample_indices(raw_count: usize, cfg: SamplingConfig) -> Result<Vec<usize>, IngestError> {
    let (rate, source) = (cfg.rate_fps, cfg.source_fps);
    // rate > source  <=>  rn * sd > sn * rd
    if (rate.num as u128) * (source.den as u128) > (source.num as u128) * (rate.den as u128) {
        return Err(IngestError::RateExceedsSource { rate, source_fps: source });
    }
    let step_num = rate.den as u128 * source.num as u128;
    let step_den = rate.num as u128 * source.den as u128;
    // k < raw_count * step_den / step_num
    let limit = raw_count as u128 * step_den;
    let mut out = Vec::new();
    let mut k: u128 = 0;
    while k * step_num < limit {
        out.push((k * step_num / step_den) as usize);
        k += 1;
    }
    Ok(out)
}

pub fn sample_frames(raw: &RawFrames, cfg: SamplingConfig) -> Result<FrameSequence, IngestError> {
    let picks = sample_indices(raw.frames.len(), cfg)?;
    let secs_per_sample = cfg.rate_fps.den as f64 / cfg.rate_fps.num as f64;
    let frames = picks
        .into_iter()
        .enumerate()
        .map(|(k, raw_index)| {
            let src = &raw.frames[raw_index];
            Frame {
                index: k,
                timestamp_s: k as f64 * secs_per_sample,
                image: Arc::clone(&src.image),
                source_path: src.path.clone(),
            }
        })
        .collect();
    Ok(FrameSequence::new(frames, cfg.rate_fps))
}

/// Reads an annotation file; a relative `frame_dir` is resolved against the
/// annotation's directory.
pub fn read_case(path: &Path) -> Result<GroundTruthCase, IngestError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let mut case = parse_ground_truth(&bytes)?;
    if case.frame_dir.is_relative() {
        if let Some(parent) = path.parent() {
            case.frame_dir = parent.join(&case.frame_dir);
        }
    }
    Ok(case)
}

pub fn load_benchmark_case(path: &Path, rate_fps: Fps) -> Result<(GroundTruthCase, FrameSequence), IngestError> {
    let case = read_case(path)?;
    if !case.frame_dir.is_dir() {
        return Err(IngestError::MissingFrameDir(case.frame_dir.clone()));
    }
    let raw = load_frame_dir(&case.frame_dir)?;
    let frames = sample_frames(
        &raw,
        SamplingConfig {
            rate_fps,
            source_fps: case.source_fps,
        },
    )?;
    Ok((case, frames))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub path: PathBuf,
    pub domain: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusIndex {
    #[serde(default)]
    pub name: String,
    pub cases: Vec<IndexEntry>,
}

/// Annotation files of a corpus directory: those listed in `index.json`
/// when present, otherwise every `*.json` file except the index, sorted.
pub fn corpus_case_paths(dir: &Path) -> Result<Vec<PathBuf>, IngestError> {
    let index_path = dir.join("index.json");
    if index_path.is_file() {
        let bytes = fs::read(&index_path).map_err(io_err(&index_path))?;
        let index: CorpusIndex = serde_json::from_slice(&bytes).map_err(|e| IngestError::BadIndex {
            path: index_path.clone(),
            message: e.to_string(),
        })?;
        return Ok(index.cases.into_iter().map(|c| dir.join(c.path)).collect());
    }
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json") && p.file_name().is_some_and(|n| n != "index.json"))
        .collect();
    paths.sort();
    Ok(paths)
}

/// Loads every ground-truth case of a corpus, keyed by video id.
pub fn load_gt_corpus(dir: &Path) -> Result<BTreeMap<String, GroundTruthCase>, IngestError> {
    let mut cases = BTreeMap::new();
    for path in corpus_case_paths(dir)? {
        let case = read_case(&path)?;
        cases.insert(case.video_id.clone(), case);
    }
    Ok(cases)
}
