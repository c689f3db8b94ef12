//! Mask agreement metrics.

use crate::mask::{Mask, MaskError};
use crate::scalar::{from_count, Scalar};

/// Intersection over union. Two empty masks agree perfectly: 1.0.
pub fn iou<F: Scalar>(a: &Mask, b: &Mask) -> Result<F, MaskError> {
    a.shape_check(b)?;
    let uni = a.union_count(b);
    if uni == 0 {
        return Ok(F::one());
    }
    Ok(from_count::<F>(a.intersection_count(b)) / from_count::<F>(uni))
}

/// Dice-Sorensen coefficient, 2|a&b| / (|a|+|b|); 1.0 when both are empty.
/// Equal to 2*iou / (1 + iou) up to rounding.
pub fn dsc<F: Scalar>(a: &Mask, b: &Mask) -> Result<F, MaskError> {
    a.shape_check(b)?;
    let denom = a.count_ones() + b.count_ones();
    if denom == 0 {
        return Ok(F::one());
    }
    Ok(from_count::<F>(2 * a.intersection_count(b)) / from_count::<F>(denom))
}

/// Error regions of a prediction: cells of `gt` the prediction missed, and
/// cells the prediction asserts that `gt` does not contain.
pub fn diff_regions(pred: &Mask, gt: &Mask) -> Result<(Mask, Mask), MaskError> {
    pred.shape_check(gt)?;
    Ok((gt.and_not(pred), pred.and_not(gt)))
}

/// Detection F1 over (prediction, ground truth) pairs. A pair counts as a
/// true positive iff its IoU reaches `threshold` (an empty-empty pair has IoU
/// 1.0 and therefore counts); otherwise a nonempty prediction is a false
/// positive and an empty one a false negative. Sub-threshold nonempty
/// predictions are false positives only. No pairs at all scores 1.0.
pub fn detection_f1<F: Scalar>(pairs: &[(Mask, Mask)], threshold: F) -> Result<F, MaskError> {
    let (mut tp, mut fp, mut fneg) = (0usize, 0usize, 0usize);
    for (pred, gt) in pairs {
        if iou::<F>(pred, gt)? >= threshold {
            tp += 1;
        } else if !pred.is_empty() {
            fp += 1;
        } else {
            fneg += 1;
        }
    }
    let denom = 2 * tp + fp + fneg;
    if denom == 0 {
        return Ok(F::one());
    }
    Ok(from_count::<F>(2 * tp) / from_count::<F>(denom))
}
