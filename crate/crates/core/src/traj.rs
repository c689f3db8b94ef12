//! Recorded episodes: the interleaved think/action/observation steps plus
//! how the episode ended. This is the in-memory form; the wire schema lives
//! in `records`.

use crate::action::{ActionSpec, FormatError};
use crate::click::Click;
use crate::mask::Mask;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    Answered,
    TurnLimit,
    TranscriptBudget,
    FormatError,
}

/// The turn that failed to parse, kept verbatim so reward scoring can see it.
#[derive(Debug, Clone, PartialEq)]
pub struct FormatFailure {
    pub raw: String,
    pub error: FormatError,
}

#[derive(Debug, Clone)]
pub struct TrajStep {
    pub think: String,
    /// Full turn text exactly as the policy emitted it.
    pub raw: String,
    pub action: ActionSpec,
    /// Pixel-mapped clicks executed this step; empty for End and revert.
    pub clicks: Vec<Click>,
    /// Union mask over all targets after the step.
    pub mask: Mask,
    /// Best-candidate score from the segmenter; 0 for steps with no call.
    pub seg_score: f64,
    pub observation_ref: Option<String>,
    pub mask_ref: Option<String>,
    pub iou: Option<f64>,
    pub dsc: Option<f64>,
    /// Deliberately wrong step in a reflective record; its action tokens are
    /// excluded from supervision.
    pub erroneous: bool,
}

impl TrajStep {
    pub fn is_interaction(&self) -> bool {
        matches!(self.action, ActionSpec::Clicks { .. })
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub id: String,
    pub question: String,
    /// Pre-existing mask for refinement episodes; None means starting empty.
    pub initial_mask: Option<Mask>,
    pub steps: Vec<TrajStep>,
    pub final_answer: Option<String>,
    /// Raw text of the answering turn (the answer turn is not a step).
    pub final_raw: Option<String>,
    pub termination: Termination,
    pub failure: Option<FormatFailure>,
}

impl Trajectory {
    /// Every raw turn text in emission order, including the answering turn
    /// and any unparseable final turn.
    pub fn turn_texts(&self) -> Vec<&str> {
        let mut out: Vec<&str> = self.steps.iter().map(|s| s.raw.as_str()).collect();
        if let Some(raw) = &self.final_raw {
            out.push(raw);
        }
        if let Some(f) = &self.failure {
            out.push(&f.raw);
        }
        out
    }

    pub fn final_mask(&self) -> Option<&Mask> {
        self.steps.last().map(|s| &s.mask).or(self.initial_mask.as_ref())
    }

    /// Union mask in force before step `i` executed.
    pub fn mask_before(&self, i: usize) -> Option<&Mask> {
        if i == 0 {
            self.initial_mask.as_ref()
        } else {
            Some(&self.steps[i - 1].mask)
        }
    }

    /// Number of tool-interaction steps (click batches and reverts; End and
    /// the answer turn do not count).
    pub fn interaction_len(&self) -> usize {
        self.steps.iter().filter(|s| s.is_interaction()).count()
    }
}
