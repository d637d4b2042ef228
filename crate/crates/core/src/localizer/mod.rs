//! Frame difference localization.
//!
//! Given two consecutive frames: normalize, blur each with a 5x5 Gaussian
//! (sigma 2), threshold the per-pixel L2 distance at 0.15, drop connected
//! components under 10 px, grow each surviving bounding box by 100 px and
//! merge boxes that overlap or touch. The resulting [`ChangeRegion`]s feed
//! the change descriptor and the region-annotation variant of DF.

mod blur;
mod regions;
mod render;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::RegionId;
use crate::ingest::Frame;
use crate::par::{self, Exec};

pub use blur::{gaussian_blur, gaussian_blur_with, gaussian_kernel_1d, FloatImage};
pub use regions::{extract_regions, DiffMask};
pub use render::{annotate_screenshot, draw_rect, encode_png, render_region_comparison, RED, YELLOW};

#[derive(Debug, Error, PartialEq)]
pub enum LocalizerError {
    #[error("frame dimensions differ: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(u32, u32, u32, u32),
    #[error("region {bbox} lies outside a {width}x{height} frame")]
    RegionOutOfBounds { bbox: BBox, width: u32, height: u32 },
    #[error("invalid localizer parameters: {0}")]
    InvalidParams(String),
}

/// Half-open pixel box `[minr, minc, maxr, maxc]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "[u32; 4]", into = "[u32; 4]")]
pub struct BBox {
    pub minr: u32,
    pub minc: u32,
    pub maxr: u32,
    pub maxc: u32,
}

impl BBox {
    pub fn new(minr: u32, minc: u32, maxr: u32, maxc: u32) -> BBox {
        BBox { minr, minc, maxr, maxc }
    }

    pub fn height(&self) -> u32 {
        self.maxr.saturating_sub(self.minr)
    }

    pub fn width(&self) -> u32 {
        self.maxc.saturating_sub(self.minc)
    }

    pub fn is_empty(&self) -> bool {
        self.height() == 0 || self.width() == 0
    }

    /// True when the boxes share at least an edge.
    pub fn intersects_or_touches(&self, other: &BBox) -> bool {
        self.minr <= other.maxr && other.minr <= self.maxr && self.minc <= other.maxc && other.minc <= self.maxc
    }

    pub fn contains(&self, other: &BBox) -> bool {
        self.minr <= other.minr && self.minc <= other.minc && other.maxr <= self.maxr && other.maxc <= self.maxc
    }

    pub fn union(&self, other: &BBox) -> BBox {
        BBox {
            minr: self.minr.min(other.minr),
            minc: self.minc.min(other.minc),
            maxr: self.maxr.max(other.maxr),
            maxc: self.maxc.max(other.maxc),
        }
    }

    /// Grows by `by` on every side, clipped to `[0, height] x [0, width]`.
    pub fn expand_clipped(&self, by: u32, height: u32, width: u32) -> BBox {
        BBox {
            minr: self.minr.saturating_sub(by),
            minc: self.minc.saturating_sub(by),
            maxr: self.maxr.saturating_add(by).min(height),
            maxc: self.maxc.saturating_add(by).min(width),
        }
    }

    pub fn fits(&self, height: u32, width: u32) -> bool {
        !self.is_empty() && self.maxr <= height && self.maxc <= width
    }

    pub fn to_array(self) -> [u32; 4] {
        [self.minr, self.minc, self.maxr, self.maxc]
    }
}

impl From<[u32; 4]> for BBox {
    fn from(a: [u32; 4]) -> BBox {
        BBox::new(a[0], a[1], a[2], a[3])
    }
}

impl From<BBox> for [u32; 4] {
    fn from(b: BBox) -> [u32; 4] {
        b.to_array()
    }
}

impl fmt::Display for BBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}, {}, {}]", self.minr, self.minc, self.maxr, self.maxc)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LocalizerParams {
    pub blur_kernel: usize,
    pub blur_sigma: f32,
    pub diff_threshold: f32,
    pub min_area_px: usize,
    pub expand_px: u32,
}

impl Default for LocalizerParams {
    fn default() -> Self {
        LocalizerParams {
            blur_kernel: 5,
            blur_sigma: 2.0,
            diff_threshold: 0.15,
            min_area_px: 10,
            expand_px: 100,
        }
    }
}

impl LocalizerParams {
    pub fn validate(&self) -> Result<(), LocalizerError> {
        if self.blur_kernel == 0 || self.blur_kernel.is_multiple_of(2) {
            return Err(LocalizerError::InvalidParams(format!(
                "blur kernel must be odd and positive, got {}",
                self.blur_kernel
            )));
        }
        if !(self.blur_sigma > 0.0) || !(self.diff_threshold > 0.0) {
            return Err(LocalizerError::InvalidParams("sigma and threshold must be positive".into()));
        }
        if self.min_area_px == 0 || self.expand_px == 0 {
            return Err(LocalizerError::InvalidParams("area and expansion must be positive".into()));
        }
        Ok(())
    }
}

/// A changed screen area between frame `frame - 1` and `frame`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChangeRegion {
    pub frame: usize,
    pub index: usize,
    pub bbox: BBox,
    /// Tight boxes of the changed-pixel components merged into `bbox`.
    pub component_bboxes: Vec<BBox>,
}

impl ChangeRegion {
    pub fn id(&self) -> RegionId {
        RegionId::new(self.frame, self.index)
    }
}

/// The `regions.json` entry written by the `diff` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionJson {
    pub id: String,
    pub bbox: BBox,
    pub component_bboxes: Vec<BBox>,
}

impl From<&ChangeRegion> for RegionJson {
    fn from(r: &ChangeRegion) -> Self {
        RegionJson {
            id: r.id().to_string(),
            bbox: r.bbox,
            component_bboxes: r.component_bboxes.clone(),
        }
    }
}

pub fn regions_to_json(regions: &[ChangeRegion]) -> String {
    let items: Vec<RegionJson> = regions.iter().map(RegionJson::from).collect();
    let mut out = serde_json::to_string_pretty(&items).expect("regions serialize");
    out.push('\n');
    out
}

/// Bit is set where the L2 distance across channels strictly exceeds the
/// threshold.
pub fn diff_mask(prev: &FloatImage, curr: &FloatImage, params: &LocalizerParams) -> Result<DiffMask, LocalizerError> {
    diff_mask_with(prev, curr, params, Exec::default())
}

pub fn diff_mask_with(
    prev: &FloatImage,
    curr: &FloatImage,
    params: &LocalizerParams,
    exec: Exec,
) -> Result<DiffMask, LocalizerError> {
    if prev.width != curr.width || prev.height != curr.height || prev.channels != curr.channels {
        return Err(LocalizerError::DimensionMismatch(
            prev.width as u32,
            prev.height as u32,
            curr.width as u32,
            curr.height as u32,
        ));
    }
    let (w, ch) = (prev.width, prev.channels);
    let threshold = params.diff_threshold;
    let mut bits = vec![false; prev.width * prev.height];
    par::for_each_row(exec, &mut bits, w, |r, row| {
        let base = r * w * ch;
        for (c, bit) in row.iter_mut().enumerate() {
            let off = base + c * ch;
            let sum: f32 = (0..ch)
                .map(|k| {
                    let d = curr.data[off + k] - prev.data[off + k];
                    d * d
                })
                .sum();
            *bit = sum.sqrt() > threshold;
        }
    });
    Ok(DiffMask::from_bits(prev.height, prev.width, bits))
}

pub fn localize(prev: &Frame, curr: &Frame, params: &LocalizerParams) -> Result<Vec<ChangeRegion>, LocalizerError> {
    localize_with(prev, curr, params, Exec::default())
}

pub fn localize_with(
    prev: &Frame,
    curr: &Frame,
    params: &LocalizerParams,
    exec: Exec,
) -> Result<Vec<ChangeRegion>, LocalizerError> {
    if prev.width() != curr.width() || prev.height() != curr.height() {
        return Err(LocalizerError::DimensionMismatch(
            prev.width(),
            prev.height(),
            curr.width(),
            curr.height(),
        ));
    }
    params.validate()?;
    let a = blur::gaussian_blur_with(&FloatImage::from_frame(prev), params, exec);
    let b = blur::gaussian_blur_with(&FloatImage::from_frame(curr), params, exec);
    let mask = diff_mask_with(&a, &b, params, exec)?;
    Ok(extract_regions(&mask, params, curr.index))
}

/// Localizes every consecutive pair `(t-1, t)` of a sequence; entry `t-1`
/// of the result holds the regions stamped with frame `t`.
pub fn localize_sequence(frames: &[Frame], params: &LocalizerParams, exec: Exec) -> Result<Vec<Vec<ChangeRegion>>, LocalizerError> {
    let pairs: Vec<(usize, usize)> = (1..frames.len()).map(|t| (t - 1, t)).collect();
    // Pairs run in parallel; each pair runs its pixel loops sequentially.
    let inner = if exec.is_parallel() && pairs.len() > 1 { Exec::Sequential } else { exec };
    par::map(exec, &pairs, |&(p, c)| localize_with(&frames[p], &frames[c], params, inner))
        .into_iter()
        .collect()
}
