//! Versioned JSON envelopes for every file artifact.
//!
//! Each file is `{"schema": "pf-1", "kind": .., "seed": .., "config": ..,
//! "data": ..}`. Field order is fixed by the struct definitions and map keys
//! inside `config` are sorted, so identical inputs give identical bytes.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::anchors::AnchorSet;
use crate::eval::EvalReport;
use crate::pose::Pose2D;
use crate::ppi::{Detection, PoseProposal};
use crate::pseudo_gt::{Annotation, MoCapCorpus};
use crate::synth::Scene;
use crate::toy::{ToyExample, ToyModel};

pub const SCHEMA_VERSION: &str = "pf-1";

/// Artifact kinds and their payloads.
pub trait Payload: Serialize + DeserializeOwned {
    const KIND: &'static str;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope<T> {
    pub schema: String,
    pub kind: String,
    pub seed: Option<u64>,
    pub config: serde_json::Value,
    pub data: T,
}

impl<T: Payload> Envelope<T> {
    pub fn new(seed: Option<u64>, config: impl Serialize, data: T) -> Self {
        Envelope {
            schema: SCHEMA_VERSION.to_string(),
            kind: T::KIND.to_string(),
            seed,
            config: serde_json::to_value(config).expect("config serializes"),
            data,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("artifact serializes");
        s.push('\n');
        s
    }
}

/// Where and why an artifact failed to parse.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SchemaError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl std::fmt::Display for SchemaError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.line > 0 {
            write!(f, "line {} column {}: {}", self.line, self.column, self.message)
        } else {
            f.write_str(&self.message)
        }
    }
}

impl std::error::Error for SchemaError {}

#[derive(Deserialize)]
struct Header {
    schema: Option<String>,
    kind: Option<String>,
}

/// Parses an envelope, checking version and kind before the payload.
pub fn parse<T: Payload>(text: &str) -> std::result::Result<Envelope<T>, SchemaError> {
    let wrap = |e: serde_json::Error| SchemaError { line: e.line(), column: e.column(), message: e.to_string() };
    let header: Header = serde_json::from_str(text).map_err(wrap)?;
    match header.schema.as_deref() {
        Some(SCHEMA_VERSION) => {}
        Some(other) => {
            return Err(SchemaError { line: 0, column: 0, message: format!("field `schema`: unsupported version `{other}`") })
        }
        None => return Err(SchemaError { line: 0, column: 0, message: "field `schema`: missing".into() }),
    }
    if header.kind.as_deref() != Some(T::KIND) {
        return Err(SchemaError {
            line: 0,
            column: 0,
            message: format!("field `kind`: expected `{}`, found `{}`", T::KIND, header.kind.unwrap_or_default()),
        });
    }
    serde_json::from_str(text).map_err(wrap)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenesData {
    pub spec: String,
    pub scenes: Vec<Scene>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneProposals {
    pub scene: usize,
    pub proposals: Vec<PoseProposal>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposalsData {
    pub spec: String,
    pub scenes: Vec<SceneProposals>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneDetections {
    pub scene: usize,
    pub detections: Vec<Detection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionsData {
    pub spec: String,
    /// `ppi` or `nms`.
    pub method: String,
    pub scenes: Vec<SceneDetections>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Poses2dData {
    pub spec: String,
    pub poses: Vec<Pose2D>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedData {
    pub spec: String,
    pub annotations: Vec<Annotation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetData {
    pub spec: String,
    pub feature_dim: usize,
    pub examples: Vec<ToyExample>,
}

impl Payload for ScenesData {
    const KIND: &'static str = "scenes";
}
impl Payload for AnchorSet {
    const KIND: &'static str = "anchors";
}
impl Payload for ProposalsData {
    const KIND: &'static str = "proposals";
}
impl Payload for DetectionsData {
    const KIND: &'static str = "detections";
}
impl Payload for Poses2dData {
    const KIND: &'static str = "poses2d";
}
impl Payload for MoCapCorpus {
    const KIND: &'static str = "mocap";
}
impl Payload for AnnotatedData {
    const KIND: &'static str = "annotated";
}
impl Payload for DatasetData {
    const KIND: &'static str = "dataset";
}
impl Payload for ToyModel {
    const KIND: &'static str = "toy-model";
}
impl Payload for EvalReport {
    const KIND: &'static str = "report";
}
