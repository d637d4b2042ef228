//! Direct frame-based extraction: sliding windows of sampled frames go to a
//! proposer, each window's output is corrected, and the windows are merged.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{array_field, degradable, png_part, pretty, Flag, PipelineError};
use crate::action::{normalize_df_operation, Action, DfOperationRecord};
use crate::gateway::{Gateway, GatewayError, Message, Part, Role};
use crate::ingest::{Frame, FrameSequence};
use crate::localizer::{draw_rect, localize, LocalizerParams, RED};
use crate::par;
use crate::prompts::{prompt, PromptName};

const OPERATIONS_KEY: &str = "user_operations";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct WindowConfig {
    pub window_size: usize,
    pub overlap: usize,
}

impl Default for WindowConfig {
    fn default() -> Self {
        WindowConfig {
            window_size: 10,
            overlap: 5,
        }
    }
}

impl WindowConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.overlap == 0 || self.overlap >= self.window_size {
            return Err(PipelineError::InvalidConfig(format!(
                "window overlap must satisfy 0 < overlap < window size, got overlap {} with window {}",
                self.overlap, self.window_size
            )));
        }
        Ok(())
    }
}

/// Inclusive range of sample indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub start: usize,
    pub end: usize,
}

impl Window {
    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn frames<'a>(&self, frames: &'a FrameSequence) -> &'a [Frame] {
        &frames.frames[self.start..=self.end]
    }
}

/// Windows start at `0, w-o, 2(w-o), ...`; the clipped tail window is kept
/// unless a predecessor already contains it.
pub fn make_windows(n: usize, cfg: WindowConfig) -> Result<Vec<Window>, PipelineError> {
    cfg.validate()?;
    if n == 0 {
        return Err(PipelineError::TooFewFrames { needed: 1, got: 0 });
    }
    let stride = cfg.window_size - cfg.overlap;
    let mut out: Vec<Window> = Vec::new();
    let mut start = 0;
    while start < n {
        let win = Window {
            start,
            end: (start + cfg.window_size).min(n) - 1,
        };
        if out.last().is_none_or(|prev| win.end > prev.end) {
            out.push(win);
        }
        start += stride;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DfAblations {
    pub no_corrector: bool,
    /// One window over every frame and no merger.
    pub no_sliding_window: bool,
    /// Draw changed-region boxes onto the frames before proposing.
    pub annotate_regions: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DfConfig {
    pub window: WindowConfig,
    pub localizer: LocalizerParams,
    pub ablations: DfAblations,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowState {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowStatus {
    pub index: usize,
    pub start: usize,
    pub end: usize,
    pub status: WindowState,
    pub proposed: usize,
    pub corrected: Option<usize>,
    pub corrector_fallback: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct DfRun {
    pub actions: Vec<Action>,
    pub records: Vec<DfOperationRecord>,
    pub windows: Vec<WindowStatus>,
    pub merged: bool,
    pub flags: Vec<Flag>,
}

/// Parses the operations array, dropping records that miss required keys.
fn parse_operations(value: &Value, stage: &str, unit: &str, flags: &mut Vec<Flag>) -> Option<Vec<DfOperationRecord>> {
    let items = array_field(value, OPERATIONS_KEY)?;
    let mut out = Vec::with_capacity(items.len());
    for (i, item) in items.iter().enumerate() {
        match DfOperationRecord::from_value(item) {
            Ok(rec) => out.push(rec),
            Err(e) => flags.push(Flag::new(stage, unit, format!("record {i} dropped: {e}"))),
        }
    }
    Some(out)
}

enum UnitError {
    Degraded(String),
    Fatal(GatewayError),
}

impl From<GatewayError> for UnitError {
    fn from(e: GatewayError) -> Self {
        if degradable(&e) {
            UnitError::Degraded(e.to_string())
        } else {
            UnitError::Fatal(e)
        }
    }
}

fn operations_call(
    gw: &Gateway,
    tag: &str,
    messages: Vec<Message>,
    stage: &str,
    flags: &mut Vec<Flag>,
) -> Result<Vec<DfOperationRecord>, UnitError> {
    let reply = gw.complete_json(&gw.request(tag, messages))?;
    if reply.retried {
        flags.push(Flag::new(stage, tag, "first reply had no valid JSON; re-prompted"));
    }
    parse_operations(&reply.value, stage, tag, flags)
        .ok_or_else(|| UnitError::Degraded(format!("reply to `{tag}` has no `{OPERATIONS_KEY}` array")))
}

/// Proposes operations for the frames of one window.
pub fn propose_actions_window(
    gw: &Gateway,
    window_index: usize,
    win: Window,
    frames: &[Frame],
    flags: &mut Vec<Flag>,
) -> Result<Result<Vec<DfOperationRecord>, String>, PipelineError> {
    let mut parts = vec![Part::Text(format!(
        "<Video>: {} frames, sampled frames {} to {} in order.",
        frames.len(),
        win.start,
        win.end
    ))];
    parts.extend(frames.iter().map(png_part));
    let messages = vec![
        Message::text(Role::System, prompt(PromptName::DfProposer).text),
        Message::new(Role::User, parts),
    ];
    match operations_call(gw, &format!("df.proposer.w{window_index}"), messages, "df.proposer", flags) {
        Ok(recs) => Ok(Ok(recs)),
        Err(UnitError::Degraded(msg)) => Ok(Err(msg)),
        Err(UnitError::Fatal(e)) => Err(e.into()),
    }
}

/// Text-only correction of one window's records. Empty input and the
/// no-corrector ablation return the input without a call; unusable output
/// falls back to the input and sets the returned flag.
pub fn correct_actions(
    gw: &Gateway,
    window_index: usize,
    records: Vec<DfOperationRecord>,
    disabled: bool,
    flags: &mut Vec<Flag>,
) -> Result<(Vec<DfOperationRecord>, bool), PipelineError> {
    if disabled || records.is_empty() {
        return Ok((records, false));
    }
    let tag = format!("df.corrector.w{window_index}");
    let messages = vec![
        Message::text(Role::System, prompt(PromptName::DfCorrector).text),
        Message::text(Role::User, pretty(&json!({ OPERATIONS_KEY: records }))),
    ];
    match operations_call(gw, &tag, messages, "df.corrector", flags) {
        Ok(out) => Ok((out, false)),
        Err(UnitError::Degraded(msg)) => {
            flags.push(Flag::new("df.corrector", tag, format!("kept uncorrected input: {msg}")));
            Ok((records, true))
        }
        Err(UnitError::Fatal(e)) => Err(e.into()),
    }
}

/// Merges per-window sequences. A single window is returned as is; an
/// unusable merger reply falls back to concatenation in window order.
pub fn merge_windows(
    gw: &Gateway,
    per_window: &[(Window, Vec<DfOperationRecord>)],
    flags: &mut Vec<Flag>,
) -> Result<(Vec<DfOperationRecord>, bool), PipelineError> {
    let concat = || per_window.iter().flat_map(|(_, r)| r.iter().cloned()).collect::<Vec<_>>();
    if per_window.len() <= 1 {
        return Ok((concat(), false));
    }
    let payload: Vec<Value> = per_window
        .iter()
        .map(|(w, recs)| json!({"start_frame": w.start, "end_frame": w.end, OPERATIONS_KEY: recs}))
        .collect();
    let messages = vec![
        Message::text(Role::System, prompt(PromptName::DfMerger).text),
        Message::text(Role::User, pretty(&payload)),
    ];
    match operations_call(gw, "df.merger", messages, "df.merger", flags) {
        Ok(out) => Ok((out, true)),
        Err(UnitError::Degraded(msg)) => {
            flags.push(Flag::new("df.merger", "df.merger", format!("fell back to concatenation: {msg}")));
            Ok((concat(), false))
        }
        Err(UnitError::Fatal(e)) => Err(e.into()),
    }
}

/// Copies of `frames` with a red box around every region that changed since
/// the previous sampled frame.
pub fn annotate_changed_regions(frames: &FrameSequence, params: &LocalizerParams) -> Result<FrameSequence, PipelineError> {
    let idx: Vec<usize> = (0..frames.len()).collect();
    let annotated = par::map(par::Exec::default(), &idx, |&t| -> Result<Frame, PipelineError> {
        let frame = &frames.frames[t];
        if t == 0 {
            return Ok(frame.clone());
        }
        let regions = localize(&frames.frames[t - 1], frame, params)?;
        if regions.is_empty() {
            return Ok(frame.clone());
        }
        let mut img = (*frame.image).clone();
        for r in &regions {
            draw_rect(&mut img, r.bbox, RED, 2);
        }
        Ok(Frame {
            image: std::sync::Arc::new(img),
            ..frame.clone()
        })
    });
    Ok(FrameSequence::new(annotated.into_iter().collect::<Result<_, _>>()?, frames.rate))
}

pub fn run_df(gw: &Gateway, frames: &FrameSequence, cfg: &DfConfig) -> Result<DfRun, PipelineError> {
    if frames.is_empty() {
        return Err(PipelineError::TooFewFrames { needed: 1, got: 0 });
    }
    cfg.localizer.validate()?;
    let windows = if cfg.ablations.no_sliding_window {
        cfg.window.validate()?;
        vec![Window {
            start: 0,
            end: frames.len() - 1,
        }]
    } else {
        make_windows(frames.len(), cfg.window)?
    };
    let limit = gw.profile().image_limit;
    if let Some(w) = windows.iter().find(|w| w.len() > limit) {
        return Err(PipelineError::InvalidConfig(format!(
            "window of {} frames exceeds the {}-image limit of profile {}",
            w.len(),
            limit,
            gw.profile().name
        )));
    }
    let annotated;
    let source = if cfg.ablations.annotate_regions {
        annotated = annotate_changed_regions(frames, &cfg.localizer)?;
        &annotated
    } else {
        frames
    };

    let indexed: Vec<(usize, Window)> = windows.iter().copied().enumerate().collect();
    let results = par::map_bounded(gw.parallelism(), &indexed, |&(i, win)| {
        let mut flags = Vec::new();
        let proposed = propose_actions_window(gw, i, win, win.frames(source), &mut flags)?;
        let mut status = WindowStatus {
            index: i,
            start: win.start,
            end: win.end,
            status: WindowState::Ok,
            proposed: 0,
            corrected: None,
            corrector_fallback: false,
            error: None,
        };
        let records = match proposed {
            Ok(recs) => recs,
            Err(msg) => {
                flags.push(Flag::new("df.proposer", format!("df.proposer.w{i}"), format!("window failed: {msg}")));
                status.status = WindowState::Failed;
                status.error = Some(msg);
                return Ok((status, None, flags));
            }
        };
        status.proposed = records.len();
        let (records, fallback) = correct_actions(gw, i, records, cfg.ablations.no_corrector, &mut flags)?;
        if !cfg.ablations.no_corrector {
            status.corrected = Some(records.len());
        }
        status.corrector_fallback = fallback;
        Ok::<_, PipelineError>((status, Some((win, records)), flags))
    });

    let mut statuses = Vec::new();
    let mut per_window = Vec::new();
    let mut flags = Vec::new();
    for r in results {
        let (status, out, f) = r?;
        statuses.push(status);
        per_window.extend(out);
        flags.extend(f);
    }
    if per_window.is_empty() {
        return Err(PipelineError::WindowsFailed(statuses));
    }
    let (records, merged) = if cfg.ablations.no_sliding_window {
        (per_window.into_iter().flat_map(|(_, r)| r).collect(), false)
    } else {
        merge_windows(gw, &per_window, &mut flags)?
    };
    let mut actions = Vec::with_capacity(records.len());
    for (i, rec) in records.iter().enumerate() {
        match normalize_df_operation(rec) {
            Ok(a) => actions.push(a),
            Err(e) => flags.push(Flag::new("df.normalize", format!("operation {i}"), format!("dropped: {e}"))),
        }
    }
    Ok(DfRun {
        actions,
        records,
        windows: statuses,
        merged,
        flags,
    })
}
