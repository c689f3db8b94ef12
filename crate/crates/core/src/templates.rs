//! Deterministic text templates: user questions, refinement prompts, final
//! responses, and the per-step reasoning the built-in policies and the
//! dataset builder emit.
//!
//! Emitted text must read as a first-person account grounded in what is
//! visible, and must never name annotation-internal concepts. The lint at
//! the bottom enforces the forbidden-term list; the dataset builder treats a
//! hit as a hard failure, not a filterable defect.

use crate::click::Polarity;
use rand::Rng;
use regex::Regex;
use std::sync::OnceLock;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("question ratios must be non-negative and sum to 1, got {imperative} + {interrogative}")]
    BadRatios { imperative: f64, interrogative: f64 },
}

/// Split between imperative initialization prompts and interrogative
/// queries. Defaults to the 70/30 house style.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuestionRatios {
    pub imperative: f64,
    pub interrogative: f64,
}

impl Default for QuestionRatios {
    fn default() -> Self {
        QuestionRatios { imperative: 0.7, interrogative: 0.3 }
    }
}

impl QuestionRatios {
    pub fn validate(&self) -> Result<(), TemplateError> {
        let bad = |v: f64| !(0.0..=1.0).contains(&v);
        if bad(self.imperative)
            || bad(self.interrogative)
            || (self.imperative + self.interrogative - 1.0).abs() > 1e-9
        {
            return Err(TemplateError::BadRatios {
                imperative: self.imperative,
                interrogative: self.interrogative,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitCategory {
    DirectCommand,
    PoliteRequest,
    TechnicalSpec,
    GoalOriented,
    Contextual,
    RoleBased,
    Conversational,
}

pub const INIT_CATEGORIES: [InitCategory; 7] = [
    InitCategory::DirectCommand,
    InitCategory::PoliteRequest,
    InitCategory::TechnicalSpec,
    InitCategory::GoalOriented,
    InitCategory::Contextual,
    InitCategory::RoleBased,
    InitCategory::Conversational,
];

fn imperative_variants(category: InitCategory) -> [&'static str; 2] {
    match category {
        InitCategory::DirectCommand => [
            "Segment the {object} in this {modality} image.",
            "Outline the {object}.",
        ],
        InitCategory::PoliteRequest => [
            "Please segment the {object} in this {modality} image.",
            "Kindly outline the {object} for me.",
        ],
        InitCategory::TechnicalSpec => [
            "Produce a binary segmentation of the {object} on this {modality} acquisition.",
            "Generate a pixel-accurate boundary for the {object}.",
        ],
        InitCategory::GoalOriented => [
            "I need the {object} isolated for a measurement; segment it.",
            "To plan the next processing step, delineate the {object}.",
        ],
        InitCategory::Contextual => [
            "This {modality} image shows a {object}; mark its full extent.",
            "Within this {modality} view, highlight the {object} region.",
        ],
        InitCategory::RoleBased => [
            "Act as an annotation assistant and segment the {object}.",
            "You are assisting with labeling; trace the {object} precisely.",
        ],
        InitCategory::Conversational => [
            "Let's get the {object} outlined on this {modality} image.",
            "Time to mark up the {object}; go ahead and segment it.",
        ],
    }
}

/// The five interrogative question forms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Interrogative {
    ConditionalLogic,
    CompoundRequest,
    ClinicalProtocol,
    Indirect,
    ConciseCheck,
}

pub const INTERROGATIVES: [Interrogative; 5] = [
    Interrogative::ConditionalLogic,
    Interrogative::CompoundRequest,
    Interrogative::ClinicalProtocol,
    Interrogative::Indirect,
    Interrogative::ConciseCheck,
];

pub fn interrogative_text(sub: Interrogative, object_name: &str, modality: &str) -> String {
    let template = match sub {
        Interrogative::ConditionalLogic => "Is there a {object}? If so, please segment it.",
        Interrogative::CompoundRequest => "Can you find and segment the {object}?",
        Interrogative::ClinicalProtocol => {
            "I need to verify the presence of a {object}. Could you segment any instance you find?"
        }
        Interrogative::Indirect => {
            "I'm wondering if there's a {object} in this {modality} image. Could you segment it?"
        }
        Interrogative::ConciseCheck => "Visible {object}? Please provide segmentation.",
    };
    fill(template, object_name, modality)
}

fn fill(template: &str, object_name: &str, modality: &str) -> String {
    template.replace("{object}", object_name).replace("{modality}", modality)
}

/// Draws a category, then imperative vs interrogative per the ratios, then a
/// concrete template. All placeholders are filled.
pub fn instantiate_question<R: Rng>(
    object_name: &str,
    modality: &str,
    rng: &mut R,
    ratios: &QuestionRatios,
) -> Result<String, TemplateError> {
    ratios.validate()?;
    let category = INIT_CATEGORIES[rng.gen_range(0..INIT_CATEGORIES.len())];
    if rng.gen_bool(ratios.interrogative) {
        let sub = INTERROGATIVES[rng.gen_range(0..INTERROGATIVES.len())];
        Ok(interrogative_text(sub, object_name, modality))
    } else {
        let variants = imperative_variants(category);
        Ok(fill(variants[rng.gen_range(0..variants.len())], object_name, modality))
    }
}

/// Mid-episode user prompts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RefinementKind {
    NextSteps,
    ErrorCorrection,
    Verification,
    Expansion,
    Reduction,
    RefineExisting,
}

pub const REFINEMENT_KINDS: [RefinementKind; 6] = [
    RefinementKind::NextSteps,
    RefinementKind::ErrorCorrection,
    RefinementKind::Verification,
    RefinementKind::Expansion,
    RefinementKind::Reduction,
    RefinementKind::RefineExisting,
];

pub fn refinement_prompt(kind: RefinementKind, object_name: &str) -> String {
    let template = match kind {
        RefinementKind::NextSteps => "What is the next step?",
        RefinementKind::ErrorCorrection => "The mask extends beyond the boundary of the {object}.",
        RefinementKind::Verification => "Is this segmentation complete?",
        RefinementKind::Expansion => "Part of the {object} is still missing; please extend the mask.",
        RefinementKind::Reduction => "The mask covers more than the {object}; please trim it back.",
        RefinementKind::RefineExisting => "Please refine the current mask of the {object}.",
    };
    fill(template, object_name, "")
}

/// Final-response styles.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResponseStyle {
    DirectConcise,
    ConfidentAffirmation,
    ObjectReferencing,
    QuestionAnswering,
    Conversational,
}

pub const RESPONSE_STYLES: [ResponseStyle; 5] = [
    ResponseStyle::DirectConcise,
    ResponseStyle::ConfidentAffirmation,
    ResponseStyle::ObjectReferencing,
    ResponseStyle::QuestionAnswering,
    ResponseStyle::Conversational,
];

pub fn response_text(style: ResponseStyle, object_name: &str) -> String {
    let template = match style {
        ResponseStyle::DirectConcise => "Segmentation complete.",
        ResponseStyle::ConfidentAffirmation => "The object has been successfully segmented.",
        ResponseStyle::ObjectReferencing => "The {object} is fully segmented.",
        ResponseStyle::QuestionAnswering => "Yes, the object was found and segmented.",
        ResponseStyle::Conversational => "All done!",
    };
    fill(template, object_name, "")
}

/// Coarse location words on a 3x3 grid of image thirds.
pub fn region_descriptor(row: usize, col: usize, width: usize, height: usize) -> &'static str {
    const GRID: [[&str; 3]; 3] = [
        ["upper-left", "upper-central", "upper-right"],
        ["mid-left", "central", "mid-right"],
        ["lower-left", "lower-central", "lower-right"],
    ];
    let band = |v: usize, extent: usize| (v * 3 / extent.max(1)).min(2);
    GRID[band(row, height)][band(col, width)]
}

pub struct ReasonContext<'a> {
    pub polarity: Polarity,
    pub descriptor: &'a str,
    pub object_name: &'a str,
    pub first_step: bool,
}

/// Click-step reasoning. Positive clicks always speak of extending the
/// selection, negative ones of retracting it; both name the coarse region.
pub fn fill_reasoning(ctx: &ReasonContext) -> String {
    match (ctx.polarity, ctx.first_step) {
        (Polarity::Positive, true) => format!(
            "Nothing is selected yet. The {} reads strongest in the {} part of the image, \
             so I will start by placing a positive click there to extend the selection over it.",
            ctx.object_name, ctx.descriptor
        ),
        (Polarity::Positive, false) => format!(
            "The current selection still misses part of the {}. The {} portion looks like it \
             belongs to the target, so I will extend the mask with a positive click there.",
            ctx.object_name, ctx.descriptor
        ),
        (Polarity::Negative, _) => format!(
            "The selection spills past the {} into surrounding area. The {} portion of the \
             overlay does not belong to the target, so I will place a negative click there to \
             retract the mask.",
            ctx.object_name, ctx.descriptor
        ),
    }
}

pub fn revert_reasoning(object_name: &str) -> String {
    format!(
        "That last adjustment made the overlay track the {object_name} worse, not better. \
         I will revert to the previous state and reconsider my next click."
    )
}

pub fn mismatch_reasoning(object_name: &str) -> String {
    format!(
        "The provided initial mask does not match the {object_name} described in the request; \
         it covers a different structure. I will discard it and segment the {object_name} from \
         scratch."
    )
}

pub fn answer_reasoning(object_name: &str) -> String {
    format!(
        "The overlay now follows the {object_name} closely on every side, and further clicks \
         would not improve it. I will finish and report the result."
    )
}

pub fn explore_reasoning(descriptor: &str) -> String {
    format!(
        "I am not certain where the target lies yet, so I will probe the {descriptor} region \
         and watch how the overlay responds."
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct LintHit {
    pub term: String,
    pub offset: usize,
}

static FORBIDDEN: OnceLock<Regex> = OnceLock::new();

/// First forbidden term in the text, if any. Whole-word, case-insensitive.
pub fn lint_forbidden(text: &str) -> Option<LintHit> {
    let re = FORBIDDEN.get_or_init(|| {
        Regex::new(r"(?i)\b(red|blue|cross|tp|fp|fn|ground\s+truth)\b").unwrap()
    });
    re.find(text).map(|m| LintHit { term: m.as_str().to_string(), offset: m.start() })
}
