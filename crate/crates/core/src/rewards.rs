//! Rule-based trajectory scoring: five components averaged into one scalar.
//!
//! Everything is recomputed from recorded masks, never trusted from stored
//! metric fields, so a scored report is self-verifying against its blobs.

use crate::click::Click;
use crate::mask::{Mask, MaskError};
use crate::metrics::iou;
use crate::traj::Trajectory;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepAggregation {
    /// Mean over click steps: bounded regardless of episode length, cannot
    /// be farmed by padding steps.
    Mean,
    /// Sum over click steps, clamped to +-(t_opt * unit); kept for ablation.
    SumCapped,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardConfig {
    /// Strict lower bounds of the answer tiers, descending.
    pub iou_tiers: [f64; 3],
    /// Tier scores, best first; the last is the below-all-tiers score.
    pub tier_values: [f64; 4],
    pub r_click: f64,
    pub lambda_miss: f64,
    pub gamma: f64,
    pub r_eff: f64,
    pub t_opt: usize,
    pub step_aggregation: StepAggregation,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig {
            iou_tiers: [0.80, 0.70, 0.50],
            tier_values: [3.0, 2.0, 1.0, 0.0],
            r_click: 1.0,
            lambda_miss: 1.0,
            gamma: 0.2,
            r_eff: 1.0,
            t_opt: 10,
            step_aggregation: StepAggregation::Mean,
        }
    }
}

#[derive(Debug, Error)]
pub enum RewardError {
    #[error("segmentation scoring needs a reference mask and answer scoring a gold answer")]
    MissingReference,
    #[error(transparent)]
    Mask(#[from] MaskError),
}

/// Per click-step detail: the click score is absent on revert steps, which
/// execute no click.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepScores {
    pub click: Option<f64>,
    pub pseg: f64,
    pub iou: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub s_format: f64,
    pub s_ans: f64,
    pub s_click: f64,
    pub s_pseg: f64,
    pub s_len: f64,
    pub total: f64,
    pub per_step: Vec<StepScores>,
}

/// 1 iff every turn text parses under the tagged grammar. An episode that
/// emitted nothing earns no format credit.
pub fn score_format(turns: &[&str]) -> f64 {
    if turns.is_empty() {
        return 0.0;
    }
    let ok = turns.iter().all(|t| crate::action::parse_agent_output(t).is_ok());
    if ok {
        1.0
    } else {
        0.0
    }
}

/// Exact match after trimming and case-folding.
pub fn score_answer_mcq(pred: &str, gold: &str) -> f64 {
    if pred.trim().to_lowercase() == gold.trim().to_lowercase() {
        1.0
    } else {
        0.0
    }
}

/// Tiered final-mask score; every boundary is a strict lower bound, so an
/// IoU exactly on a tier edge falls to the tier below.
pub fn score_answer_seg(final_mask: &Mask, gt: &Mask, cfg: &RewardConfig) -> Result<f64, MaskError> {
    let v: f64 = iou(final_mask, gt)?;
    Ok(tier(v, cfg))
}

fn tier(iou: f64, cfg: &RewardConfig) -> f64 {
    for (bound, value) in cfg.iou_tiers.iter().zip(&cfg.tier_values) {
        if iou > *bound {
            return *value;
        }
    }
    cfg.tier_values[3]
}

/// +r_click when the click lands in the region its polarity is allowed to
/// touch (missed region for positive, spurious for negative), else
/// -lambda_miss. Membership is relative to the mask before the click.
pub fn score_click(
    click: &Click,
    prev_mask: &Mask,
    gt: &Mask,
    cfg: &RewardConfig,
) -> Result<f64, MaskError> {
    prev_mask.shape_check(gt)?;
    if click.row >= gt.height() || click.col >= gt.width() {
        return Err(MaskError::OutOfBounds {
            row: click.row,
            col: click.col,
            width: gt.width(),
            height: gt.height(),
        });
    }
    let in_gt = gt.get(click.row, click.col);
    let in_prev = prev_mask.get(click.row, click.col);
    let valid = if click.polarity.is_positive() { in_gt && !in_prev } else { in_prev && !in_gt };
    Ok(if valid { cfg.r_click } else { -cfg.lambda_miss })
}

/// 1 iff the step strictly improved IoU.
pub fn score_pseg(iou_t: f64, iou_prev: f64) -> f64 {
    if iou_t > iou_prev {
        1.0
    } else {
        0.0
    }
}

/// Efficiency bonus up to t_opt steps, then a linear penalty of slope gamma.
pub fn score_len(t: usize, cfg: &RewardConfig) -> f64 {
    if t <= cfg.t_opt {
        cfg.r_eff
    } else {
        -cfg.gamma * (t - cfg.t_opt) as f64
    }
}

fn fold_steps(values: &[f64], unit: f64, cfg: &RewardConfig) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    match cfg.step_aggregation {
        StepAggregation::Mean => values.iter().sum::<f64>() / values.len() as f64,
        StepAggregation::SumCapped => {
            let cap = cfg.t_opt as f64 * unit;
            values.iter().sum::<f64>().clamp(-cap, cap)
        }
    }
}

/// Scores a whole trajectory. `gt` selects segmentation answer scoring,
/// `gold_answer` multiple-choice scoring; with both present the mask task
/// wins. Per-step IoUs are recomputed from the stored masks.
pub fn aggregate(
    traj: &Trajectory,
    gt: Option<&Mask>,
    gold_answer: Option<&str>,
    cfg: &RewardConfig,
) -> Result<RewardBreakdown, RewardError> {
    let s_format = score_format(&traj.turn_texts());
    let s_ans = match (gt, gold_answer) {
        (Some(gt), _) => {
            let empty = Mask::new(gt.width(), gt.height());
            score_answer_seg(traj.final_mask().unwrap_or(&empty), gt, cfg)?
        }
        (None, Some(gold)) => score_answer_mcq(traj.final_answer.as_deref().unwrap_or(""), gold),
        (None, None) => return Err(RewardError::MissingReference),
    };
    let mut per_step = Vec::new();
    let mut click_scores = Vec::new();
    let mut pseg_scores = Vec::new();
    if let Some(gt) = gt {
        let empty = Mask::new(gt.width(), gt.height());
        for (i, step) in traj.steps.iter().enumerate() {
            if !step.is_interaction() {
                continue;
            }
            let prev = traj.mask_before(i).unwrap_or(&empty);
            let iou_prev: f64 = iou(prev, gt)?;
            let iou_t: f64 = iou(&step.mask, gt)?;
            let pseg = score_pseg(iou_t, iou_prev);
            let click = if step.clicks.is_empty() {
                None
            } else {
                let mut sum = 0.0;
                for c in &step.clicks {
                    sum += score_click(c, prev, gt, cfg)?;
                }
                Some(sum / step.clicks.len() as f64)
            };
            if let Some(c) = click {
                click_scores.push(c);
            }
            pseg_scores.push(pseg);
            per_step.push(StepScores { click, pseg, iou: iou_t });
        }
    }
    let s_click = fold_steps(&click_scores, cfg.r_click.max(cfg.lambda_miss), cfg);
    let s_pseg = fold_steps(&pseg_scores, 1.0, cfg);
    let s_len = score_len(traj.interaction_len(), cfg);
    let total = (s_format + s_ans + s_click + s_pseg + s_len) / 5.0;
    Ok(RewardBreakdown { s_format, s_ans, s_click, s_pseg, s_len, total, per_step })
}
