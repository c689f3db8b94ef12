//! Wire schemas: the JSONL record types, the run manifest, and the HTTP
//! bodies. Field declaration order is the serialization order, which is what
//! makes repeated writes byte-identical; append new fields at the end.

use crate::action::ActionSpec;
use crate::click::Click;
use crate::traj::{Termination, TrajStep, Trajectory};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// One synthetic sample; pixels live in the blob store.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleRecord {
    pub id: String,
    pub object_name: String,
    pub modality: String,
    pub width: usize,
    pub height: usize,
    pub image_ref: String,
    pub gt_ref: String,
}

/// One executed step. `action_raw` is the turn text exactly as the policy
/// emitted it; `think` and `action` are its parsed halves. `loss_masked`
/// marks action tokens excluded from supervised replay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepRecord {
    pub think: String,
    pub action_raw: String,
    pub action: ActionSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub obs_ref: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_ref: Option<String>,
    pub seg_score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iou: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dsc: Option<f64>,
    pub loss_masked: bool,
    pub erroneous: bool,
}

impl StepRecord {
    pub fn from_step(step: &TrajStep) -> Self {
        StepRecord {
            think: step.think.clone(),
            action_raw: step.raw.clone(),
            action: step.action.clone(),
            obs_ref: step.observation_ref.clone(),
            mask_ref: step.mask_ref.clone(),
            seg_score: step.seg_score,
            iou: step.iou,
            dsc: step.dsc,
            loss_masked: false,
            erroneous: step.erroneous,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryRecord {
    pub id: String,
    pub question: String,
    pub steps: Vec<StepRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_answer: Option<String>,
    pub termination: Termination,
    pub config_fingerprint: String,
}

impl TrajectoryRecord {
    pub fn from_trajectory(traj: &Trajectory, config_fingerprint: &str) -> Self {
        TrajectoryRecord {
            id: traj.id.clone(),
            question: traj.question.clone(),
            steps: traj.steps.iter().map(StepRecord::from_step).collect(),
            final_answer: traj.final_answer.clone(),
            termination: traj.termination,
            config_fingerprint: config_fingerprint.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReflectiveKind {
    None,
    SelfCorrection,
    Inconsistency,
}

/// One cold-start training record. `initial_mask_ref` is set only on
/// inconsistency records, whose episode begins from a mismatched mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetRecord {
    pub id: String,
    pub sample_id: String,
    pub question: String,
    pub object_name: String,
    pub modality: String,
    pub steps: Vec<StepRecord>,
    pub final_answer: String,
    pub final_iou: f64,
    pub final_dsc: f64,
    pub termination: Termination,
    pub reflective_kind: ReflectiveKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_mask_ref: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardStepRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub click: Option<f64>,
    pub pseg: f64,
    pub iou: f64,
}

/// One scored trajectory: the five components, their mean, per-step detail.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardRecord {
    pub id: String,
    pub s_format: f64,
    pub s_ans: f64,
    pub s_click: f64,
    pub s_pseg: f64,
    pub s_len: f64,
    pub total: f64,
    pub per_step: Vec<RewardStepRecord>,
    pub config_fingerprint: String,
}

/// Written next to every CLI run's outputs; re-running with the same
/// (config, seed, inputs) must reproduce both the outputs and this manifest
/// minus the duration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub config_fingerprint: String,
    pub seed: u64,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub duration_ms: u64,
    pub counts: BTreeMap<String, u64>,
}

/// POST /predict request. Pixels and masks travel as base64 PNG (the PNG
/// header carries dimensions); the prior is an opaque byte string echoed
/// from the previous response. The server re-tags incoming priors with its
/// own segmenter kind, so the wire carries no tag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictRequest {
    pub image_png_b64: String,
    pub clicks: Vec<Click>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior_b64: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictCandidate {
    pub mask_png_b64: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictResponse {
    pub candidates: Vec<PredictCandidate>,
    pub prior_b64: String,
}

/// POST /act request: the question, the transcript so far, and the current
/// observation. The response is one raw turn text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActTurn {
    pub think: String,
    pub action_raw: String,
    pub observation_png_b64: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActRequest {
    pub question: String,
    pub transcript: Vec<ActTurn>,
    pub observation_png_b64: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActResponse {
    pub output: String,
}
