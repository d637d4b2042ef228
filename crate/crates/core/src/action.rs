//! Action triples and the record schemas the two pipelines produce.
//!
//! Every extracted or annotated action reduces to an `(operation, detail,
//! context)` triple. The DF pipeline emits [`DfOperationRecord`]s and the
//! DiffF pipeline emits [`DiffFActionRecord`]s; both normalize into
//! [`Action`].

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::ingest::Fps;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ActionError {
    #[error("unknown operation `{0}`")]
    UnknownOperation(String),
    #[error("missing field `{0}`")]
    MissingField(String),
    #[error("malformed region id `{0}`")]
    MalformedRegionId(String),
    #[error("schema error at {path}: {message}")]
    Schema { path: String, message: String },
}

/// The five user operations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OperationType {
    Click,
    Select,
    Scroll,
    Drag,
    Type,
}

impl OperationType {
    pub const ALL: [OperationType; 5] = [
        OperationType::Click,
        OperationType::Select,
        OperationType::Scroll,
        OperationType::Drag,
        OperationType::Type,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            OperationType::Click => "click",
            OperationType::Select => "select",
            OperationType::Scroll => "scroll",
            OperationType::Drag => "drag",
            OperationType::Type => "type",
        }
    }
}

impl fmt::Display for OperationType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OperationType {
    type Err = ActionError;

    /// Case-insensitive; surrounding whitespace is ignored.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        OperationType::ALL
            .into_iter()
            .find(|op| op.as_str() == lower)
            .ok_or_else(|| ActionError::UnknownOperation(s.to_string()))
    }
}

impl Serialize for OperationType {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for OperationType {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One user action. Provenance is carried along for auditing but never
/// takes part in evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub operation: OperationType,
    pub detail: String,
    pub context: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Value>,
}

impl Action {
    pub fn new(operation: OperationType, detail: impl Into<String>, context: impl Into<String>) -> Self {
        Action {
            operation,
            detail: detail.into(),
            context: context.into(),
            provenance: None,
        }
    }

    /// Triple view used by evaluation.
    pub fn triple(&self) -> (OperationType, &str, &str) {
        (self.operation, &self.detail, &self.context)
    }

    /// Inverse of [`normalize_df_operation`] for actions whose detail and
    /// context are already trimmed: detail goes to the target identifier,
    /// context to the application category.
    pub fn to_df_record(&self) -> DfOperationRecord {
        DfOperationRecord {
            operation_category: self.operation.as_str().to_string(),
            target_object: NamedObject {
                category: String::new(),
                identifier: self.detail.clone(),
            },
            application: NamedObject {
                category: self.context.clone(),
                identifier: String::new(),
            },
            ..DfOperationRecord::default()
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ActionSequence {
    pub video_id: String,
    pub actions: Vec<Action>,
}

impl ActionSequence {
    pub fn new(video_id: impl Into<String>, actions: Vec<Action>) -> Self {
        ActionSequence {
            video_id: video_id.into(),
            actions,
        }
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NamedObject {
    #[serde(default)]
    pub category: String,
    #[serde(default)]
    pub identifier: String,
}

/// A user operation in the DF prompt schema. Only the category, target
/// object and application are required; keys the model adds beyond the
/// schema are kept in `extra` and written back out unchanged.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DfOperationRecord {
    #[serde(default, skip_serializing_if = "Option::is_none", alias = "timestamp", deserialize_with = "de_frame_idx")]
    pub frame_idx: Option<[i64; 2]>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub mouse_position: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub element_state_pre_interaction: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub element_state_after_interaction: String,
    #[serde(default, skip_serializing_if = "String::is_empty", alias = "Thoughts")]
    pub thoughts: String,
    pub operation_category: String,
    pub target_object: NamedObject,
    pub application: NamedObject,
    #[serde(default, deserialize_with = "de_lenient_string")]
    pub additional_info: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub r#abstract: String,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

impl DfOperationRecord {
    /// Parses one record out of a JSON value, naming the first missing
    /// required key.
    pub fn from_value(value: &Value) -> Result<Self, ActionError> {
        let obj = value.as_object().ok_or_else(|| ActionError::Schema {
            path: "$".into(),
            message: "operation record is not an object".into(),
        })?;
        for key in ["operation_category", "target_object", "application"] {
            if !obj.contains_key(key) {
                return Err(ActionError::MissingField(key.into()));
            }
        }
        serde_json::from_value(value.clone()).map_err(|e| ActionError::Schema {
            path: "$".into(),
            message: e.to_string(),
        })
    }
}

// Models emit the frame range as `[1, 3]`, `"[1, 3]"` or a bare number.
fn de_frame_idx<'de, D: Deserializer<'de>>(deserializer: D) -> Result<Option<[i64; 2]>, D::Error> {
    let value = Value::deserialize(deserializer)?;
    Ok(parse_frame_range(&value))
}

fn parse_frame_range(value: &Value) -> Option<[i64; 2]> {
    match value {
        Value::Array(items) => {
            let nums: Vec<i64> = items.iter().filter_map(Value::as_i64).collect();
            match nums.as_slice() {
                [a, b] => Some([*a, *b]),
                [a] => Some([*a, *a]),
                _ => None,
            }
        }
        Value::Number(n) => n.as_i64().map(|a| [a, a]),
        Value::String(s) => serde_json::from_str::<Value>(s).ok().and_then(|v| match v {
            Value::String(_) => None,
            v => parse_frame_range(&v),
        }),
        _ => None,
    }
}

fn de_lenient_string<'de, D: Deserializer<'de>>(deserializer: D) -> Result<String, D::Error> {
    Ok(match Value::deserialize(deserializer)? {
        Value::Null => String::new(),
        Value::String(s) => s,
        other => other.to_string(),
    })
}

/// `<frame>_<index>` identifier of a changed screen region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RegionId {
    pub frame: usize,
    pub index: usize,
}

impl RegionId {
    pub fn new(frame: usize, index: usize) -> Self {
        RegionId { frame, index }
    }
}

impl fmt::Display for RegionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}_{}", self.frame, self.index)
    }
}

impl FromStr for RegionId {
    type Err = ActionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ActionError::MalformedRegionId(s.to_string());
        let (frame, index) = s.trim().split_once('_').ok_or_else(bad)?;
        let digits = |p: &str| !p.is_empty() && p.bytes().all(|b| b.is_ascii_digit());
        if !digits(frame) || !digits(index) {
            return Err(bad());
        }
        Ok(RegionId {
            frame: frame.parse().map_err(|_| bad())?,
            index: index.parse().map_err(|_| bad())?,
        })
    }
}

impl Serialize for RegionId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for RegionId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A proposed action in the DiffF schema. `action` stays a raw string until
/// normalization because the corrector is expected to repair verbs such as
/// "move" or "hover".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffFActionRecord {
    #[serde(default)]
    pub app: String,
    #[serde(default)]
    pub element: String,
    pub action: String,
    pub region: RegionId,
    #[serde(default)]
    pub evidences: Vec<(RegionId, String)>,
}

impl DiffFActionRecord {
    /// Region first, then each evidence id not already listed.
    pub fn cited_ids(&self) -> Vec<RegionId> {
        let mut ids = vec![self.region];
        for (id, _) in &self.evidences {
            if !ids.contains(id) {
                ids.push(*id);
            }
        }
        ids
    }
}

pub fn normalize_df_operation(rec: &DfOperationRecord) -> Result<Action, ActionError> {
    let operation: OperationType = rec.operation_category.parse()?;
    let target = &rec.target_object;
    let detail = if target.identifier.trim().is_empty() {
        target.category.trim().to_string()
    } else {
        target.identifier.trim().to_string()
    };
    let context = format!("{} {}", rec.application.identifier.trim(), rec.application.category.trim())
        .trim()
        .to_string();
    let mut provenance = Map::new();
    if let Some(range) = rec.frame_idx {
        provenance.insert("frame_idx".into(), serde_json::json!(range));
    }
    if !rec.additional_info.is_empty() {
        provenance.insert("additional_info".into(), Value::String(rec.additional_info.clone()));
    }
    if !rec.r#abstract.is_empty() {
        provenance.insert("abstract".into(), Value::String(rec.r#abstract.clone()));
    }
    Ok(Action {
        operation,
        detail,
        context,
        provenance: Some(Value::Object(provenance)),
    })
}

pub fn normalize_difff_action(rec: &DiffFActionRecord) -> Result<Action, ActionError> {
    let operation: OperationType = rec.action.parse()?;
    let provenance = serde_json::json!({
        "region": rec.region,
        "evidences": rec.evidences,
    });
    Ok(Action {
        operation,
        detail: rec.element.clone(),
        context: rec.app.clone(),
        provenance: Some(provenance),
    })
}

/// One annotated benchmark video.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthCase {
    pub video_id: String,
    pub domain: String,
    pub actions: ActionSequence,
    pub frame_dir: PathBuf,
    pub source_fps: Fps,
}

pub fn parse_ground_truth(bytes: &[u8]) -> Result<GroundTruthCase, ActionError> {
    let root: Value = serde_json::from_slice(bytes).map_err(|e| ActionError::Schema {
        path: "$".into(),
        message: e.to_string(),
    })?;
    let obj = root.as_object().ok_or_else(|| schema("$", "annotation must be an object"))?;

    let string_field = |key: &str| -> Result<String, ActionError> {
        match obj.get(key) {
            Some(Value::String(s)) => Ok(s.clone()),
            Some(_) => Err(schema(&format!("$.{key}"), "expected a string")),
            None => Err(schema(&format!("$.{key}"), "missing")),
        }
    };
    let video_id = string_field("video_id")?;
    let domain = string_field("domain")?;
    let frame_dir = PathBuf::from(string_field("frame_dir")?);
    let source_fps = match obj.get("source_fps") {
        Some(Value::Number(n)) => n
            .as_f64()
            .and_then(Fps::from_f64)
            .ok_or_else(|| schema("$.source_fps", "expected a positive number"))?,
        Some(_) => return Err(schema("$.source_fps", "expected a number")),
        None => return Err(schema("$.source_fps", "missing")),
    };
    let items = match obj.get("actions") {
        Some(Value::Array(items)) => items,
        Some(_) => return Err(schema("$.actions", "expected an array")),
        None => return Err(schema("$.actions", "missing")),
    };

    let mut actions = Vec::with_capacity(items.len());
    for (i, item) in items.iter().enumerate() {
        let path = format!("$.actions[{i}]");
        let a = item
            .as_object()
            .ok_or_else(|| schema(&path, "expected an object"))?;
        let field = |key: &str| -> Result<&str, ActionError> {
            a.get(key)
                .and_then(Value::as_str)
                .ok_or_else(|| schema(&format!("{path}.{key}"), "expected a string"))
        };
        let operation = field("operation")?
            .parse()
            .map_err(|e: ActionError| schema(&format!("{path}.operation"), &e.to_string()))?;
        actions.push(Action::new(operation, field("detail")?, field("context")?));
    }

    Ok(GroundTruthCase {
        actions: ActionSequence::new(video_id.clone(), actions),
        video_id,
        domain,
        frame_dir,
        source_fps,
    })
}

fn schema(path: &str, message: &str) -> ActionError {
    ActionError::Schema {
        path: path.to_string(),
        message: message.to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Df,
    Difff,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Df => "df",
            Method::Difff => "difff",
        })
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "df" => Ok(Method::Df),
            "difff" | "diff-f" => Ok(Method::Difff),
            other => Err(format!("unknown method `{other}` (expected df or difff)")),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct TripleOut {
    operation: OperationType,
    detail: String,
    context: String,
}

/// The canonical prediction file written by `extract`.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub video_id: String,
    pub method: Method,
    pub actions: Vec<Action>,
}

#[derive(Serialize, Deserialize)]
struct PredictionFile {
    video_id: String,
    method: Method,
    actions: Vec<TripleOut>,
    #[serde(default)]
    provenance: Vec<Value>,
}

impl Prediction {
    /// Pretty JSON with fixed key order and a trailing LF.
    pub fn to_json(&self) -> String {
        let file = PredictionFile {
            video_id: self.video_id.clone(),
            method: self.method,
            actions: self
                .actions
                .iter()
                .map(|a| TripleOut {
                    operation: a.operation,
                    detail: a.detail.clone(),
                    context: a.context.clone(),
                })
                .collect(),
            provenance: self
                .actions
                .iter()
                .map(|a| a.provenance.clone().unwrap_or(Value::Null))
                .collect(),
        };
        let mut out = serde_json::to_string_pretty(&file).expect("prediction serializes");
        out.push('\n');
        out
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, ActionError> {
        let file: PredictionFile = serde_json::from_slice(bytes).map_err(|e| ActionError::Schema {
            path: "$".into(),
            message: e.to_string(),
        })?;
        let mut provenance = file.provenance.into_iter();
        let actions = file
            .actions
            .into_iter()
            .map(|t| Action {
                operation: t.operation,
                detail: t.detail,
                context: t.context,
                provenance: provenance.next().filter(|v| !v.is_null()),
            })
            .collect();
        Ok(Prediction {
            video_id: file.video_id,
            method: file.method,
            actions,
        })
    }

    pub fn sequence(&self) -> ActionSequence {
        ActionSequence::new(self.video_id.clone(), self.actions.clone())
    }
}
