//! Differential frame-based extraction: localize what changed between
//! consecutive frames, describe each changed region, then propose and
//! correct actions from the descriptions.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{array_field, degradable, png_part, pretty, Flag, PipelineError};
use crate::action::{normalize_difff_action, Action, DiffFActionRecord, OperationType, RegionId};
use crate::gateway::{Gateway, GatewayError, ImagePayload, JsonReply, Message, Part, Role};
use crate::ingest::{Frame, FrameSequence};
use crate::localizer::{
    annotate_screenshot, encode_png, localize_sequence, render_region_comparison, ChangeRegion, LocalizerParams,
};
use crate::par::{self, Exec};
use crate::prompts::{prompt, PromptName};

const ACTIONS_KEY: &str = "actions";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChangeType {
    Appear,
    Disappear,
    Move,
    Rotate,
    TextContentChange,
    StyleChange,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UIChange {
    #[serde(default)]
    pub subject: String,
    #[serde(rename = "type")]
    pub kind: ChangeType,
    #[serde(default, deserialize_with = "lenient_text")]
    pub old: String,
    #[serde(default, deserialize_with = "lenient_text")]
    pub new: String,
    #[serde(default, deserialize_with = "lenient_text")]
    pub message: String,
}

impl UIChange {
    pub fn is_cursor(&self) -> bool {
        self.subject.to_lowercase().contains("cursor")
    }
}

/// Descriptor output for one changed region, stamped with its region id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UIChangeRecord {
    pub id: RegionId,
    pub frame: usize,
    pub index: usize,
    pub global_description: String,
    pub description: String,
    pub changed: bool,
    pub old_cursor_shape: Option<String>,
    pub new_cursor_shape: Option<String>,
    pub changes: Vec<UIChange>,
}

fn lenient_text<'de, D: serde::Deserializer<'de>>(d: D) -> Result<String, D::Error> {
    Ok(match Value::deserialize(d)? {
        Value::Null => String::new(),
        Value::String(s) => s,
        other => other.to_string(),
    })
}

fn cursor_shape(value: Option<&Value>) -> Result<Option<String>, String> {
    match value {
        None | Some(Value::Null) => Ok(None),
        Some(Value::String(s)) => {
            let t = s.trim();
            if t.is_empty() || t.eq_ignore_ascii_case("null") || t.eq_ignore_ascii_case("none") {
                Ok(None)
            } else {
                Ok(Some(t.to_string()))
            }
        }
        Some(other) => Err(format!("cursor shape must be a string or null, got {other}")),
    }
}

impl UIChangeRecord {
    /// Validates a descriptor reply and stamps it with `id`.
    pub fn from_value(value: &Value, id: RegionId) -> Result<UIChangeRecord, String> {
        let obj = value.as_object().ok_or("descriptor reply is not an object")?;
        let text = |k: &str| obj.get(k).and_then(Value::as_str).unwrap_or_default().to_string();
        let changes: Vec<UIChange> = match obj.get("changes") {
            None | Some(Value::Null) => Vec::new(),
            Some(v) => serde_json::from_value(v.clone()).map_err(|e| format!("invalid `changes`: {e}"))?,
        };
        let changed = match obj.get("changed") {
            Some(Value::Bool(b)) => *b,
            None => !changes.is_empty(),
            Some(other) => return Err(format!("`changed` must be a bool, got {other}")),
        };
        if !changed && !changes.is_empty() {
            return Err("`changed` is false but `changes` is not empty".into());
        }
        Ok(UIChangeRecord {
            id,
            frame: id.frame,
            index: id.index,
            global_description: text("global_description"),
            description: text("description"),
            changed,
            old_cursor_shape: cursor_shape(obj.get("old_cursor_shape"))?,
            new_cursor_shape: cursor_shape(obj.get("new_cursor_shape"))?,
            changes,
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrectorMode {
    /// Corrector prompt appended to the proposer conversation.
    #[default]
    FollowUp,
    /// Corrector sent as a fresh conversation carrying the records and the
    /// proposed actions.
    Standalone,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DifffAblations {
    pub no_corrector: bool,
    /// Attach every sampled frame to the proposer request.
    pub frames_to_proposer: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DifffConfig {
    pub localizer: LocalizerParams,
    pub ablations: DifffAblations,
    pub corrector_mode: CorrectorMode,
}

#[derive(Debug, Clone)]
pub struct DifffRun {
    pub actions: Vec<Action>,
    pub regions: Vec<ChangeRegion>,
    pub changes: Vec<UIChangeRecord>,
    pub proposed: Vec<DiffFActionRecord>,
    pub corrected: Vec<DiffFActionRecord>,
    pub rule_corrected: Vec<DiffFActionRecord>,
    pub flags: Vec<Flag>,
}

fn degrade_or_abort(e: GatewayError) -> Result<String, PipelineError> {
    if degradable(&e) {
        Ok(e.to_string())
    } else {
        Err(e.into())
    }
}

/// One descriptor call for `region` of the pair (`prev`, `curr`). `Ok(Err)`
/// means the region is dropped with the given reason.
pub fn describe_change(
    gw: &Gateway,
    prev: &Frame,
    curr: &Frame,
    region: &ChangeRegion,
) -> Result<Result<UIChangeRecord, String>, PipelineError> {
    let screenshot = encode_png(&annotate_screenshot(curr, region)?);
    let comparison = encode_png(&render_region_comparison(prev, curr, region)?);
    let fields = json!({
        "screen_resolution": [curr.height(), curr.width()],
        "bbox": region.bbox,
    });
    let messages = vec![
        Message::text(Role::System, prompt(PromptName::DifffDescriptor).text),
        Message::new(
            Role::User,
            vec![
                Part::Text(pretty(&fields)),
                Part::Image(ImagePayload::png(screenshot)),
                Part::Image(ImagePayload::png(comparison)),
            ],
        ),
    ];
    let id = region.id();
    match gw.complete_json(&gw.request(format!("difff.descriptor.{id}"), messages)) {
        Ok(reply) => Ok(UIChangeRecord::from_value(&reply.value, id)),
        Err(e) => degrade_or_abort(e).map(Err),
    }
}

/// Parses an action list and enforces that every cited id names a record.
/// Dangling evidences are dropped; an action left citing nothing is dropped.
pub fn parse_actions(
    value: &Value,
    known: &BTreeSet<RegionId>,
    stage: &str,
    flags: &mut Vec<Flag>,
) -> Option<Vec<DiffFActionRecord>> {
    let items = array_field(value, ACTIONS_KEY)?;
    let mut out = Vec::with_capacity(items.len());
    for (i, item) in items.iter().enumerate() {
        let mut rec: DiffFActionRecord = match serde_json::from_value(item.clone()) {
            Ok(r) => r,
            Err(e) => {
                flags.push(Flag::new(stage, format!("action {i}"), format!("dropped: {e}")));
                continue;
            }
        };
        let before = rec.evidences.len();
        rec.evidences.retain(|(id, _)| known.contains(id));
        if rec.evidences.len() != before {
            flags.push(Flag::new(
                stage,
                format!("action {i}"),
                format!("dropped {} evidence(s) citing unknown regions", before - rec.evidences.len()),
            ));
        }
        if !known.contains(&rec.region) {
            match rec.evidences.first() {
                Some((id, _)) => {
                    flags.push(Flag::new(
                        stage,
                        format!("action {i}"),
                        format!("unknown region {} replaced by {id}", rec.region),
                    ));
                    rec.region = *id;
                }
                None => {
                    flags.push(Flag::new(stage, format!("action {i}"), "dropped: cites no known region"));
                    continue;
                }
            }
        }
        out.push(rec);
    }
    Some(out)
}

fn records_payload(records: &[UIChangeRecord]) -> String {
    pretty(&records)
}

/// Text-only proposer call over all change records (plus every frame under
/// the frames-to-proposer ablation).
pub fn propose_actions(
    gw: &Gateway,
    records: &[UIChangeRecord],
    frames: Option<&FrameSequence>,
    flags: &mut Vec<Flag>,
) -> Result<(Vec<DiffFActionRecord>, JsonReply), PipelineError> {
    let mut parts = vec![Part::Text(records_payload(records))];
    if let Some(seq) = frames {
        parts.extend(seq.frames.iter().map(png_part));
    }
    let messages = vec![
        Message::text(Role::System, prompt(PromptName::DifffProposer).text),
        Message::new(Role::User, parts),
    ];
    let reply = gw.complete_json(&gw.request("difff.proposer", messages))?;
    if reply.retried {
        flags.push(Flag::new("difff.proposer", "difff.proposer", "first reply had no valid JSON; re-prompted"));
    }
    let known = records.iter().map(|r| r.id).collect();
    let actions = parse_actions(&reply.value, &known, "difff.proposer", flags)
        .ok_or_else(|| PipelineError::RunFailed("proposer reply is not an action list".into()))?;
    Ok((actions, reply))
}

/// Runs the corrector tasks over `proposed`. Unusable output returns
/// `proposed` unchanged with a flag.
pub fn vlm_correct(
    gw: &Gateway,
    proposer_reply: &JsonReply,
    records: &[UIChangeRecord],
    proposed: &[DiffFActionRecord],
    mode: CorrectorMode,
    flags: &mut Vec<Flag>,
) -> Result<Vec<DiffFActionRecord>, PipelineError> {
    let corrector = prompt(PromptName::DifffCorrector).text;
    let messages = match mode {
        CorrectorMode::FollowUp => {
            let mut m = proposer_reply.conversation.clone();
            m.push(Message::text(Role::User, corrector));
            m
        }
        CorrectorMode::Standalone => vec![
            Message::text(Role::System, prompt(PromptName::DifffProposer).text),
            Message::text(Role::User, records_payload(records)),
            Message::text(Role::Assistant, pretty(&proposed)),
            Message::text(Role::User, corrector),
        ],
    };
    let fallback = |flags: &mut Vec<Flag>, why: String| {
        flags.push(Flag::new("difff.corrector", "difff.corrector", format!("kept proposed actions: {why}")));
        proposed.to_vec()
    };
    let reply = match gw.complete_json(&gw.request("difff.corrector", messages)) {
        Ok(r) => r,
        Err(e) => return Ok(fallback(flags, degrade_or_abort(e)?)),
    };
    let known = records.iter().map(|r| r.id).collect();
    match parse_actions(&reply.value, &known, "difff.corrector", flags) {
        Some(actions) => Ok(actions),
        None => Ok(fallback(flags, "reply is not an action list".into())),
    }
}

fn supports_scroll(rec: &UIChangeRecord) -> bool {
    rec.changes.iter().any(|c| c.kind == ChangeType::Move && !c.is_cursor())
}

fn supports_click(rec: &UIChangeRecord) -> bool {
    rec.new_cursor_shape.is_some()
}

/// Drops scrolls without non-cursor movement in their evidence and clicks
/// whose evidence never shows the cursor. Unknown ids support nothing.
pub fn rule_correct(
    actions: &[DiffFActionRecord],
    records: &BTreeMap<RegionId, UIChangeRecord>,
    flags: &mut Vec<Flag>,
) -> Vec<DiffFActionRecord> {
    let mut out = Vec::with_capacity(actions.len());
    for (i, a) in actions.iter().enumerate() {
        let rule: Option<(fn(&UIChangeRecord) -> bool, &str)> = match a.action.trim().parse::<OperationType>() {
            Ok(OperationType::Scroll) => Some((supports_scroll, "scroll without UI movement")),
            Ok(OperationType::Click) => Some((supports_click, "click without a cursor")),
            _ => None,
        };
        if let Some((supported, why)) = rule {
            let evidence: Vec<&UIChangeRecord> = a.cited_ids().iter().filter_map(|id| records.get(id)).collect();
            if !evidence.into_iter().any(supported) {
                flags.push(Flag::new("difff.rules", format!("action {i}"), format!("removed: {why}")));
                continue;
            }
        }
        out.push(a.clone());
    }
    out
}

pub fn run_difff(gw: &Gateway, frames: &FrameSequence, cfg: &DifffConfig) -> Result<DifffRun, PipelineError> {
    if frames.len() < 2 {
        return Err(PipelineError::TooFewFrames {
            needed: 2,
            got: frames.len(),
        });
    }
    if cfg.ablations.frames_to_proposer && frames.len() > gw.profile().image_limit {
        return Err(PipelineError::InvalidConfig(format!(
            "{} frames exceed the {}-image limit of profile {}",
            frames.len(),
            gw.profile().image_limit,
            gw.profile().name
        )));
    }
    let regions: Vec<ChangeRegion> = localize_sequence(&frames.frames, &cfg.localizer, Exec::default())?
        .into_iter()
        .flatten()
        .collect();
    let mut flags = Vec::new();
    let mut run = DifffRun {
        actions: Vec::new(),
        regions,
        changes: Vec::new(),
        proposed: Vec::new(),
        corrected: Vec::new(),
        rule_corrected: Vec::new(),
        flags: Vec::new(),
    };
    if run.regions.is_empty() {
        return Ok(run);
    }

    let described = par::map_bounded(gw.parallelism(), &run.regions, |r| {
        describe_change(gw, &frames.frames[r.frame - 1], &frames.frames[r.frame], r)
    });
    for (region, result) in run.regions.iter().zip(described) {
        match result? {
            Ok(rec) => run.changes.push(rec),
            Err(why) => flags.push(Flag::new("difff.descriptor", region.id().to_string(), format!("region dropped: {why}"))),
        }
    }
    run.changes.sort_by_key(|r| r.id);
    if run.changes.is_empty() {
        flags.push(Flag::new("difff.proposer", "difff.proposer", "skipped: no region was described"));
        run.flags = flags;
        return Ok(run);
    }

    let (proposed, reply) = match propose_actions(gw, &run.changes, cfg.ablations.frames_to_proposer.then_some(frames), &mut flags) {
        Ok(ok) => ok,
        Err(PipelineError::Gateway(e)) if degradable(&e) => return Err(PipelineError::RunFailed(e.to_string())),
        Err(e) => return Err(e),
    };
    run.proposed = proposed;
    run.corrected = if cfg.ablations.no_corrector {
        run.proposed.clone()
    } else {
        vlm_correct(gw, &reply, &run.changes, &run.proposed, cfg.corrector_mode, &mut flags)?
    };
    let index: BTreeMap<RegionId, UIChangeRecord> = run.changes.iter().map(|r| (r.id, r.clone())).collect();
    run.rule_corrected = rule_correct(&run.corrected, &index, &mut flags);
    for (i, rec) in run.rule_corrected.iter().enumerate() {
        match normalize_difff_action(rec) {
            Ok(a) => run.actions.push(a),
            Err(e) => flags.push(Flag::new("difff.normalize", format!("action {i}"), format!("dropped: {e}"))),
        }
    }
    run.flags = flags;
    Ok(run)
}

/// `changes.json` contents.
pub fn changes_to_json(records: &[UIChangeRecord]) -> String {
    let mut s = pretty(&records);
    s.push('\n');
    s
}
