//! Rule-based click oracle and the scripted simulation loop built on it.
//!
//! Each round the oracle compares the prediction with the reference mask,
//! takes the exact distance transform of the missed and spurious regions,
//! and clicks the deepest interior point of whichever region is deeper. Ties
//! go to the positive side, and within a field to the first row-major argmax,
//! so a (mask, reference) pair always produces the same click.

use crate::click::{Click, Polarity};
use crate::edt::{edt, BorderPolicy, DistanceField};
use crate::image::Image;
use crate::mask::Mask;
use crate::metrics::{diff_regions, dsc, iou};
use crate::segment::{PromptSet, Segmenter, SegmenterError};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleConfig {
    /// Stop refining once IoU reaches this value.
    pub tau_iou: f64,
    pub max_steps: usize,
    /// When set, clicks carry a radius hint: the largest disc radius that
    /// provably stays inside the clicked region. sqrt(d^2 - 1) for interior
    /// depth d^2 because cell distances are integers, so "strictly closer
    /// than d" and "at most sqrt(d^2 - 1)" select the same cells.
    pub annotate_radius: bool,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig { tau_iou: 0.95, max_steps: 20, annotate_radius: false }
    }
}

/// Deepest interior point of the region, with its guaranteed-inside radius.
/// An empty region has an all-zero field; that is "no peak", not a peak of
/// depth zero at the origin.
fn peak(field: &DistanceField) -> Option<(usize, usize, u64)> {
    let (row, col) = field.argmax()?;
    let sq = field.sq_at(row, col);
    (sq > 0).then_some((row, col, sq))
}

fn inside_radius(sq: u64) -> f64 {
    ((sq - 1) as f64).sqrt()
}

impl OracleConfig {
    /// Next corrective click, or None when prediction and reference already
    /// agree. The missed region wins ties so a from-empty run is all
    /// positive clicks.
    pub fn next_click(&self, pred: &Mask, gt: &Mask) -> Option<Click> {
        let (missed, spurious) = diff_regions(pred, gt).expect("oracle masks must share a shape");
        let d_missed = edt(&missed, BorderPolicy::Background);
        let d_spurious = edt(&spurious, BorderPolicy::Background);
        let (pos, neg) = (peak(&d_missed), peak(&d_spurious));
        let (row, col, sq, polarity) = match (pos, neg) {
            (None, None) => return None,
            (Some((r, c, s)), None) => (r, c, s, Polarity::Positive),
            (None, Some((r, c, s))) => (r, c, s, Polarity::Negative),
            (Some((pr, pc, ps)), Some((nr, nc, ns))) => {
                if ps >= ns {
                    (pr, pc, ps, Polarity::Positive)
                } else {
                    (nr, nc, ns, Polarity::Negative)
                }
            }
        };
        let radius_hint = self.annotate_radius.then(|| inside_radius(sq));
        Some(Click { row, col, polarity, radius_hint })
    }
}

#[derive(Debug, Clone)]
pub struct SimStep {
    pub click: Click,
    pub mask: Mask,
    pub seg_score: f64,
    pub iou: f64,
    pub dsc: f64,
}

#[derive(Debug, Clone)]
pub struct SimTrajectory {
    pub steps: Vec<SimStep>,
    /// True when the IoU threshold was reached within the step budget.
    pub converged: bool,
}

impl SimTrajectory {
    pub fn final_iou(&self) -> f64 {
        self.steps.last().map_or(0.0, |s| s.iou)
    }

    pub fn clicks(&self) -> Vec<Click> {
        self.steps.iter().map(|s| s.click).collect()
    }
}

#[derive(Debug, thiserror::Error)]
#[error("simulation failed at step {step}: {source}")]
pub struct SimulationError {
    pub step: usize,
    pub partial: SimTrajectory,
    #[source]
    pub source: SegmenterError,
}

/// Closed-loop refinement: oracle proposes a click, the segmenter predicts,
/// repeat until the IoU threshold, the step budget, or oracle convergence
/// (no disagreement left to click).
pub fn simulate(
    oracle: &OracleConfig,
    segmenter: &dyn Segmenter,
    image: &Image,
    gt: &Mask,
) -> Result<SimTrajectory, SimulationError> {
    let mut steps: Vec<SimStep> = Vec::new();
    let mut pred = Mask::new(gt.width(), gt.height());
    let mut clicks: Vec<Click> = Vec::new();
    let mut prior = None;
    for step in 0..oracle.max_steps {
        if iou::<f64>(&pred, gt).unwrap() >= oracle.tau_iou {
            return Ok(SimTrajectory { steps, converged: true });
        }
        let click = match oracle.next_click(&pred, gt) {
            Some(c) => c,
            None => return Ok(SimTrajectory { steps, converged: true }),
        };
        clicks.push(click);
        let result = segmenter
            .predict(image, &PromptSet { clicks: clicks.clone(), prior })
            .map_err(|source| SimulationError {
                step,
                partial: SimTrajectory { steps: steps.clone(), converged: false },
                source,
            })?;
        let best = result.best();
        pred = best.mask.clone();
        steps.push(SimStep {
            click,
            mask: pred.clone(),
            seg_score: best.score,
            iou: iou(&pred, gt).unwrap(),
            dsc: dsc(&pred, gt).unwrap(),
        });
        prior = Some(result.prior);
    }
    let converged = iou::<f64>(&pred, gt).unwrap() >= oracle.tau_iou;
    Ok(SimTrajectory { steps, converged })
}
