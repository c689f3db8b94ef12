//! Cold-start dataset construction: synthetic corpus generation, gold
//! trajectory building with filtering, reflective-trajectory synthesis (a
//! deliberate mistake plus its recovery), and statistics over the result.
//!
//! Reflective variants are not stitched together textually. They are planned
//! as turn lists and replayed through the real environment, so their masks,
//! priors, and observation refs are exactly what an agent would have seen.

use crate::action::{render_turn, ActionSpec, ClickTriple, ParsedTurn, TurnPayload};
use crate::click::to_normalized;
use crate::codec::{encode_image_png, encode_mask_png};
use crate::env::{run_episode, EpisodeLimits, EpisodeSetup};
use crate::image::Image;
use crate::mask::{Mask, MaskError};
use crate::metrics::{dsc, iou};
use crate::oracle::OracleConfig;
use crate::policy::{OraclePolicy, ScriptedPolicy};
use crate::records::{DatasetRecord, ReflectiveKind, SampleRecord, StepRecord};
use crate::seed;
use crate::segment::Segmenter;
use crate::store::{BlobStore, StoreError};
use crate::templates::{
    fill_reasoning, instantiate_question, lint_forbidden, mismatch_reasoning, region_descriptor,
    revert_reasoning, QuestionRatios, ReasonContext, TemplateError,
};
use crate::traj::{Termination, Trajectory};
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatagenError {
    #[error("bad shape parameters: {0}")]
    BadShapeParams(String),
    #[error("bad configuration: {0}")]
    BadConfig(&'static str),
    #[error("record {record_id}: forbidden term {term:?} at byte {offset} in {field}")]
    ForbiddenTerm { record_id: String, field: &'static str, term: String, offset: usize },
    #[error("trajectory {0} has no steps to perturb")]
    TooShort(String),
    #[error("trajectory {0} did not end in an answer")]
    NotAnswered(String),
    #[error("no unambiguous cell available for a wrong click in {0}")]
    NoWrongCell(String),
    #[error("no donor mask differs from sample {0}")]
    NoDonor(String),
    #[error("episode failed: {0}")]
    Episode(String),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Mask(#[from] MaskError),
}

/// One synthetic task: pixels, reference mask, and the names templates use.
#[derive(Debug, Clone)]
pub struct Sample {
    pub id: String,
    pub image: Image,
    pub gt: Mask,
    pub object_name: String,
    pub modality: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ShapeParams {
    pub canvas: usize,
    pub min_ellipses: usize,
    pub max_ellipses: usize,
    pub min_semi_axis: f64,
    pub max_semi_axis: f64,
    pub hole_prob: f64,
}

impl Default for ShapeParams {
    fn default() -> Self {
        ShapeParams {
            canvas: 64,
            min_ellipses: 1,
            max_ellipses: 3,
            min_semi_axis: 5.0,
            max_semi_axis: 14.0,
            hole_prob: 0.3,
        }
    }
}

impl ShapeParams {
    pub fn validate(&self) -> Result<(), DatagenError> {
        let bad = |msg: String| Err(DatagenError::BadShapeParams(msg));
        if self.min_semi_axis < 1.0 {
            return bad(format!("min_semi_axis {} below 1", self.min_semi_axis));
        }
        if self.max_semi_axis < self.min_semi_axis {
            return bad(format!(
                "semi-axis range inverted: {}..{}",
                self.min_semi_axis, self.max_semi_axis
            ));
        }
        if self.min_ellipses < 1 || self.max_ellipses < self.min_ellipses {
            return bad(format!(
                "ellipse count range invalid: {}..{}",
                self.min_ellipses, self.max_ellipses
            ));
        }
        if (self.canvas as f64) < 2.0 * (self.max_semi_axis + 2.0) {
            return bad(format!(
                "canvas {} too small for semi-axis {}",
                self.canvas, self.max_semi_axis
            ));
        }
        if !(0.0..=1.0).contains(&self.hole_prob) {
            return bad(format!("hole_prob {} outside [0,1]", self.hole_prob));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterConfig {
    pub max_length: usize,
    pub min_dice: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig { max_length: 20, min_dice: 0.9 }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<(), DatagenError> {
        if self.max_length == 0 {
            return Err(DatagenError::BadConfig("max_length must be positive"));
        }
        if !(0.0 < self.min_dice && self.min_dice < 1.0) {
            return Err(DatagenError::BadConfig("min_dice must lie in (0,1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RejectReason {
    DiceBelowThreshold,
    LengthAboveThreshold,
    SegmenterFailure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectRecord {
    pub sample_id: String,
    pub reason: RejectReason,
    pub detail: String,
}

const OBJECT_NAMES: [&str; 6] = [
    "oval lesion",
    "ring structure",
    "bright nodule",
    "lobed mass",
    "speckled patch",
    "hollow vesicle",
];

const MODALITIES: [&str; 4] =
    ["grayscale phantom", "synthetic scan", "textured panel", "noise panel"];

fn ellipse_mask(canvas: usize, cr: f64, cc: f64, a: f64, b: f64, theta: f64) -> Mask {
    let (sin, cos) = theta.sin_cos();
    Mask::from_fn(canvas, canvas, |r, c| {
        let dy = r as f64 - cr;
        let dx = c as f64 - cc;
        let u = (dx * cos + dy * sin) / a;
        let v = (-dx * sin + dy * cos) / b;
        u * u + v * v <= 1.0
    })
}

fn gen_mask(rng: &mut ChaCha12Rng, p: &ShapeParams) -> Result<Mask, DatagenError> {
    // The construction cannot produce an empty union (every ring keeps width
    // >= 0.45 * min_semi_axis), so the retry bound is pure insurance.
    for _ in 0..8 {
        let mut gt = Mask::new(p.canvas, p.canvas);
        let count = rng.gen_range(p.min_ellipses..=p.max_ellipses);
        for _ in 0..count {
            let a = rng.gen_range(p.min_semi_axis..=p.max_semi_axis);
            let b = rng.gen_range(p.min_semi_axis..=p.max_semi_axis);
            let theta = rng.gen_range(0.0..PI);
            let margin = a.max(b) + 1.0;
            let cr = rng.gen_range(margin..(p.canvas as f64 - margin));
            let cc = rng.gen_range(margin..(p.canvas as f64 - margin));
            let mut e = ellipse_mask(p.canvas, cr, cc, a, b, theta);
            if rng.gen_bool(p.hole_prob) {
                let f = rng.gen_range(0.3..0.55);
                e = e.and_not(&ellipse_mask(p.canvas, cr, cc, a * f, b * f, theta));
            }
            gt = gt.or(&e);
        }
        if !gt.is_empty() {
            return Ok(gt);
        }
    }
    Err(DatagenError::BadShapeParams("shape parameters keep producing empty masks".into()))
}

fn render_sample_image(rng: &mut ChaCha12Rng, gt: &Mask) -> Image {
    let (w, h) = (gt.width(), gt.height());
    let bg = rng.gen_range(40.0..80.0);
    let fg = rng.gen_range(150.0..210.0);
    let amp = rng.gen_range(6.0..14.0);
    let fx = rng.gen_range(0.02..0.12);
    let fy = rng.gen_range(0.02..0.12);
    let phase = rng.gen_range(0.0..(2.0 * PI));
    let noise = rng.gen_range(3.0..7.0);
    let mut img = Image::new_gray(w, h);
    for r in 0..h {
        for c in 0..w {
            let base = if gt.get(r, c) { fg } else { bg };
            let texture = amp * (2.0 * PI * (fx * c as f64 + fy * r as f64) + phase).sin();
            let n: f64 = rng.sample(StandardNormal);
            let v = (base + texture + noise * n).round().clamp(0.0, 255.0) as u8;
            img.set_pixel(r, c, &[v]);
        }
    }
    img
}

/// Deterministic synthetic corpus: unions of 1-3 rotated ellipses (holes
/// with probability `hole_prob`) on a textured, noisy grayscale canvas.
pub fn make_synthetic_corpus(
    n: usize,
    seed: u64,
    params: &ShapeParams,
) -> Result<Vec<Sample>, DatagenError> {
    if n == 0 {
        return Err(DatagenError::BadConfig("sample count must be positive"));
    }
    params.validate()?;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut rng = seed::rng(seed, "sample", i as u64);
        let gt = gen_mask(&mut rng, params)?;
        let image = render_sample_image(&mut rng, &gt);
        let object_name = OBJECT_NAMES[rng.gen_range(0..OBJECT_NAMES.len())].to_string();
        let modality = MODALITIES[rng.gen_range(0..MODALITIES.len())].to_string();
        out.push(Sample { id: format!("s{i:05}"), image, gt, object_name, modality });
    }
    Ok(out)
}

/// Persists sample pixels into the store and emits the wire records.
pub fn sample_records(
    samples: &[Sample],
    store: &dyn BlobStore,
) -> Result<Vec<SampleRecord>, DatagenError> {
    samples
        .iter()
        .map(|s| {
            let image_ref = store.put(&encode_image_png(&s.image))?;
            let gt_ref = store.put(&encode_mask_png(&s.gt))?;
            Ok(SampleRecord {
                id: s.id.clone(),
                object_name: s.object_name.clone(),
                modality: s.modality.clone(),
                width: s.image.width(),
                height: s.image.height(),
                image_ref,
                gt_ref,
            })
        })
        .collect()
}

/// Everything build_cold_start needs besides the samples and segmenter.
pub struct BuildParams<'a> {
    pub oracle: OracleConfig,
    pub filter: FilterConfig,
    pub ratios: QuestionRatios,
    /// Probability that a surviving gold record also yields the respective
    /// reflective variant.
    pub self_correction_fraction: f64,
    pub inconsistency_fraction: f64,
    pub overlay_alpha: f64,
    pub store: &'a dyn BlobStore,
}

#[derive(Debug)]
pub struct ColdStartOutput {
    pub records: Vec<DatasetRecord>,
    pub rejects: Vec<RejectRecord>,
    pub stats: DatasetStats,
}

fn episode_limits(max_clicks: usize) -> EpisodeLimits {
    // One extra turn so the answering turn is never cut off by the cap.
    EpisodeLimits { max_turns: max_clicks + 1, ..EpisodeLimits::default() }
}

fn record_from(
    id: String,
    sample: &Sample,
    traj: &Trajectory,
    kind: ReflectiveKind,
    initial_mask_ref: Option<String>,
) -> Result<DatasetRecord, DatagenError> {
    let empty = Mask::new(sample.gt.width(), sample.gt.height());
    let final_mask = traj.final_mask().unwrap_or(&empty);
    let final_answer =
        traj.final_answer.clone().ok_or_else(|| DatagenError::NotAnswered(id.clone()))?;
    let mut steps: Vec<StepRecord> = traj.steps.iter().map(StepRecord::from_step).collect();
    for s in &mut steps {
        s.loss_masked = s.erroneous;
    }
    Ok(DatasetRecord {
        id,
        sample_id: sample.id.clone(),
        question: traj.question.clone(),
        object_name: sample.object_name.clone(),
        modality: sample.modality.clone(),
        steps,
        final_answer,
        final_iou: iou(final_mask, &sample.gt)?,
        final_dsc: dsc(final_mask, &sample.gt)?,
        termination: traj.termination,
        reflective_kind: kind,
        initial_mask_ref,
    })
}

/// Hard lint: a forbidden term anywhere in a record's text is a build
/// failure, not a warning.
pub fn lint_record(rec: &DatasetRecord) -> Result<(), DatagenError> {
    let mut fields: Vec<(&'static str, &str)> = vec![
        ("question", &rec.question),
        ("final_answer", &rec.final_answer),
        ("object_name", &rec.object_name),
        ("modality", &rec.modality),
    ];
    for step in &rec.steps {
        fields.push(("think", &step.think));
    }
    for (field, text) in fields {
        if let Some(hit) = lint_forbidden(text) {
            return Err(DatagenError::ForbiddenTerm {
                record_id: rec.id.clone(),
                field,
                term: hit.term,
                offset: hit.offset,
            });
        }
    }
    Ok(())
}

fn planned_turns(gold: &Trajectory) -> Result<Vec<String>, DatagenError> {
    let mut turns: Vec<String> = gold.steps.iter().map(|s| s.raw.clone()).collect();
    let answer =
        gold.final_raw.clone().ok_or_else(|| DatagenError::NotAnswered(gold.id.clone()))?;
    turns.push(answer);
    Ok(turns)
}

fn replay(
    id: &str,
    sample: &Sample,
    turns: Vec<String>,
    initial_mask: Option<&Mask>,
    seg: &dyn Segmenter,
    params: &BuildParams,
) -> Result<Trajectory, DatagenError> {
    let mut policy = ScriptedPolicy::new(turns.clone());
    let setup = EpisodeSetup {
        id,
        question: "replay",
        image: &sample.image,
        initial_mask: initial_mask.map(|m| (sample.object_name.as_str(), m)),
        gt: Some(&sample.gt),
        limits: episode_limits(turns.len()),
        overlay_alpha: params.overlay_alpha,
        store: Some(params.store),
    };
    run_episode(&setup, &mut policy, seg).map_err(|e| DatagenError::Episode(e.to_string()))
}

fn check_replay_matches_gold(id: &str, gold: &Trajectory, replayed: &Trajectory) -> Result<(), DatagenError> {
    if replayed.termination != Termination::Answered {
        return Err(DatagenError::NotAnswered(id.to_string()));
    }
    if replayed.final_mask() != gold.final_mask() {
        return Err(DatagenError::Episode(format!("{id}: replay diverged from its gold source")));
    }
    Ok(())
}

/// Builds a self-correction variant: a wrong click (sampled uniformly from
/// correctly-classified cells, so it is unambiguously wrong), a revert, then
/// the gold suffix. Replayed through the environment; the revert restores
/// state bit-exactly, so the suffix reproduces the gold masks.
pub fn synthesize_self_correction(
    sample: &Sample,
    gold: &Trajectory,
    seg: &dyn Segmenter,
    params: &BuildParams,
    rng: &mut ChaCha12Rng,
) -> Result<(DatasetRecord, Trajectory), DatagenError> {
    if gold.steps.is_empty() {
        return Err(DatagenError::TooShort(gold.id.clone()));
    }
    let k = rng.gen_range(0..gold.steps.len());
    let empty = Mask::new(sample.gt.width(), sample.gt.height());
    let prev = gold.mask_before(k).unwrap_or(&empty);
    let correct: Vec<(usize, usize)> = (0..sample.gt.height())
        .flat_map(|r| (0..sample.gt.width()).map(move |c| (r, c)))
        .filter(|&(r, c)| prev.get(r, c) == sample.gt.get(r, c))
        .collect();
    if correct.is_empty() {
        return Err(DatagenError::NoWrongCell(sample.id.clone()));
    }
    let (row, col) = correct[rng.gen_range(0..correct.len())];
    // Clicking a correctly-foreground cell wrongly retracts; a correctly-
    // background cell wrongly extends.
    let attribute: i8 = if sample.gt.get(row, col) { -1 } else { 1 };
    let (w, h) = (sample.gt.width(), sample.gt.height());
    let (x, y) = to_normalized(row, col, w, h);
    let triple =
        ClickTriple { target: sample.object_name.clone(), attribute, x, y, radius: None };
    let wrong = render_turn(&ParsedTurn {
        think: fill_reasoning(&ReasonContext {
            polarity: triple.polarity(),
            descriptor: region_descriptor(row, col, w, h),
            object_name: &sample.object_name,
            first_step: prev.is_empty(),
        }),
        payload: TurnPayload::Action(ActionSpec::Clicks {
            triples: vec![triple.clone()],
            revert: false,
        }),
    });
    let revert = render_turn(&ParsedTurn {
        think: revert_reasoning(&sample.object_name),
        payload: TurnPayload::Action(ActionSpec::Clicks { triples: vec![triple], revert: true }),
    });
    let gold_turns = planned_turns(gold)?;
    let mut turns = Vec::with_capacity(gold_turns.len() + 2);
    turns.extend_from_slice(&gold_turns[..k]);
    turns.push(wrong);
    turns.push(revert);
    turns.extend_from_slice(&gold_turns[k..]);
    let id = format!("{}-refl-sc", sample.id);
    let mut traj = replay(&id, sample, turns, None, seg, params)?;
    check_replay_matches_gold(&id, gold, &traj)?;
    traj.steps[k].erroneous = true;
    let record = record_from(id, sample, &traj, ReflectiveKind::SelfCorrection, None)?;
    Ok((record, traj))
}

/// Builds an inconsistency variant: the episode starts from a mismatched
/// initial mask (a donor sample's reference), which the first turn discards
/// before the gold trajectory proceeds from scratch.
pub fn synthesize_inconsistency(
    sample: &Sample,
    gold: &Trajectory,
    donor_gt: &Mask,
    seg: &dyn Segmenter,
    params: &BuildParams,
) -> Result<(DatasetRecord, Trajectory), DatagenError> {
    if gold.steps.is_empty() {
        return Err(DatagenError::TooShort(gold.id.clone()));
    }
    let discard = render_turn(&ParsedTurn {
        think: mismatch_reasoning(&sample.object_name),
        payload: TurnPayload::Action(ActionSpec::Clicks {
            triples: vec![ClickTriple {
                target: sample.object_name.clone(),
                attribute: 1,
                x: 0.5,
                y: 0.5,
                radius: None,
            }],
            revert: true,
        }),
    });
    let mut turns = vec![discard];
    turns.extend(planned_turns(gold)?);
    let id = format!("{}-refl-inc", sample.id);
    let traj = replay(&id, sample, turns, Some(donor_gt), seg, params)?;
    check_replay_matches_gold(&id, gold, &traj)?;
    let initial_ref = params.store.put(&encode_mask_png(donor_gt))?;
    let record = record_from(id, sample, &traj, ReflectiveKind::Inconsistency, Some(initial_ref))?;
    Ok((record, traj))
}

/// The full cold-start pipeline: question instantiation, oracle trajectory,
/// filtering, reflective synthesis, lint, and statistics. Deterministic in
/// (samples, seed, params).
pub fn build_cold_start(
    samples: &[Sample],
    seg: &dyn Segmenter,
    params: &BuildParams,
    seed: u64,
) -> Result<ColdStartOutput, DatagenError> {
    params.filter.validate()?;
    for f in [params.self_correction_fraction, params.inconsistency_fraction] {
        if !(0.0..=1.0).contains(&f) {
            return Err(DatagenError::BadConfig("reflective fractions must lie in [0,1]"));
        }
    }
    let mut records = Vec::new();
    let mut rejects = Vec::new();
    for (idx, sample) in samples.iter().enumerate() {
        let mut reject = |reason, detail: String| {
            rejects.push(RejectRecord { sample_id: sample.id.clone(), reason, detail });
        };
        let question = instantiate_question(
            &sample.object_name,
            &sample.modality,
            &mut seed::rng(seed, "question", idx as u64),
            &params.ratios,
        )?;
        let mut policy = OraclePolicy::new(
            sample.gt.clone(),
            sample.object_name.clone(),
            sample.object_name.clone(),
            params.oracle.clone(),
            seed::substream(seed, "policy", idx as u64),
        );
        let setup = EpisodeSetup {
            id: &format!("{}-gold", sample.id),
            question: &question,
            image: &sample.image,
            initial_mask: None,
            gt: Some(&sample.gt),
            limits: episode_limits(params.oracle.max_steps),
            overlay_alpha: params.overlay_alpha,
            store: Some(params.store),
        };
        let gold = match run_episode(&setup, &mut policy, seg) {
            Ok(t) => t,
            Err(e) => {
                reject(RejectReason::SegmenterFailure, e.to_string());
                continue;
            }
        };
        let empty = Mask::new(sample.gt.width(), sample.gt.height());
        let final_dsc: f64 = dsc(gold.final_mask().unwrap_or(&empty), &sample.gt)?;
        if final_dsc < params.filter.min_dice {
            reject(
                RejectReason::DiceBelowThreshold,
                format!("final DSC {final_dsc:.4} below {}", params.filter.min_dice),
            );
            continue;
        }
        let length = gold.interaction_len();
        if length > params.filter.max_length {
            reject(
                RejectReason::LengthAboveThreshold,
                format!("{length} steps above {}", params.filter.max_length),
            );
            continue;
        }
        if gold.final_answer.is_none() {
            reject(
                RejectReason::LengthAboveThreshold,
                "no final answer within the turn budget".into(),
            );
            continue;
        }
        records.push(record_from(
            format!("{}-gold", sample.id),
            sample,
            &gold,
            ReflectiveKind::None,
            None,
        )?);
        let mut rng = seed::rng(seed, "reflective", idx as u64);
        // Reflective variants lengthen the episode (wrong+revert adds two
        // click turns, a discard adds one); they are only emitted when the
        // longer record still fits the length filter.
        if rng.gen_bool(params.self_correction_fraction) {
            if length + 2 <= params.filter.max_length {
                let (rec, _) = synthesize_self_correction(sample, &gold, seg, params, &mut rng)?;
                records.push(rec);
            } else {
                reject(
                    RejectReason::LengthAboveThreshold,
                    format!(
                        "self-correction variant skipped: {} steps above {}",
                        length + 2,
                        params.filter.max_length
                    ),
                );
            }
        }
        if rng.gen_bool(params.inconsistency_fraction) {
            if length + 1 <= params.filter.max_length {
                let donor = (1..samples.len())
                    .map(|off| &samples[(idx + off) % samples.len()])
                    .find(|d| d.gt != sample.gt)
                    .ok_or_else(|| DatagenError::NoDonor(sample.id.clone()))?;
                let (rec, _) = synthesize_inconsistency(sample, &gold, &donor.gt, seg, params)?;
                records.push(rec);
            } else {
                reject(
                    RejectReason::LengthAboveThreshold,
                    format!(
                        "inconsistency variant skipped: {} steps above {}",
                        length + 1,
                        params.filter.max_length
                    ),
                );
            }
        }
    }
    for rec in &records {
        lint_record(rec)?;
    }
    let stats = dataset_stats(&records);
    Ok(ColdStartOutput { records, rejects, stats })
}

/// Rebuilds the turn list of a stored record and replays it. The caller
/// supplies the sample pixels and, for inconsistency records, the decoded
/// initial mask.
pub fn replay_dataset_record(
    record: &DatasetRecord,
    image: &Image,
    gt: &Mask,
    initial_mask: Option<&Mask>,
    seg: &dyn Segmenter,
    store: Option<&dyn BlobStore>,
) -> Result<Trajectory, DatagenError> {
    let mut turns: Vec<String> = record.steps.iter().map(|s| s.action_raw.clone()).collect();
    turns.push(render_turn(&ParsedTurn {
        think: "replay".into(),
        payload: TurnPayload::Answer(record.final_answer.clone()),
    }));
    let mut policy = ScriptedPolicy::new(turns.clone());
    let setup = EpisodeSetup {
        id: &record.id,
        question: &record.question,
        image,
        initial_mask: initial_mask.map(|m| (record.object_name.as_str(), m)),
        gt: Some(gt),
        limits: episode_limits(turns.len()),
        overlay_alpha: 0.45,
        store,
    };
    run_episode(&setup, &mut policy, seg).map_err(|e| DatagenError::Episode(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsRow {
    pub group: String,
    pub samples: usize,
    pub total_qas: usize,
    pub avg_length: f64,
    pub avg_iou: f64,
    pub median_iou: f64,
    pub avg_dsc: f64,
    pub median_dsc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub by_modality: Vec<StatsRow>,
    pub by_object: Vec<StatsRow>,
    pub total: StatsRow,
}

fn record_length(rec: &DatasetRecord) -> usize {
    rec.steps.iter().filter(|s| matches!(s.action, ActionSpec::Clicks { .. })).count()
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return 0.0;
    }
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

fn stats_row(group: &str, records: &[&DatasetRecord]) -> StatsRow {
    let n = records.len();
    let samples: BTreeSet<&str> = records.iter().map(|r| r.sample_id.as_str()).collect();
    let mean = |f: &dyn Fn(&DatasetRecord) -> f64| {
        if n == 0 {
            0.0
        } else {
            records.iter().map(|r| f(r)).sum::<f64>() / n as f64
        }
    };
    let sorted = |f: &dyn Fn(&DatasetRecord) -> f64| {
        let mut v: Vec<f64> = records.iter().map(|r| f(r)).collect();
        v.sort_by(|a, b| a.partial_cmp(b).expect("metrics are finite"));
        v
    };
    StatsRow {
        group: group.to_string(),
        samples: samples.len(),
        total_qas: n,
        avg_length: mean(&|r| record_length(r) as f64),
        avg_iou: mean(&|r| r.final_iou),
        median_iou: median(&sorted(&|r| r.final_iou)),
        avg_dsc: mean(&|r| r.final_dsc),
        median_dsc: median(&sorted(&|r| r.final_dsc)),
    }
}

/// Per-modality and per-object summary tables plus the corpus total, all
/// recomputable from the records alone.
pub fn dataset_stats(records: &[DatasetRecord]) -> DatasetStats {
    let group_by = |key: &dyn Fn(&DatasetRecord) -> String| {
        let mut groups: BTreeMap<String, Vec<&DatasetRecord>> = BTreeMap::new();
        for r in records {
            groups.entry(key(r)).or_default().push(r);
        }
        groups.into_iter().map(|(g, rs)| stats_row(&g, &rs)).collect::<Vec<_>>()
    };
    DatasetStats {
        by_modality: group_by(&|r| r.modality.clone()),
        by_object: group_by(&|r| r.object_name.clone()),
        total: stats_row("all", &records.iter().collect::<Vec<_>>()),
    }
}

/// Aligned text tables for terminal output.
pub fn render_stats_table(stats: &DatasetStats) -> String {
    const HEADERS: [&str; 8] =
        ["Group", "Samples", "QAs", "Avg. Len", "Avg. IoU", "Med. IoU", "Avg. DSC", "Med. DSC"];
    let row_cells = |r: &StatsRow| {
        vec![
            r.group.clone(),
            r.samples.to_string(),
            r.total_qas.to_string(),
            format!("{:.2}", r.avg_length),
            format!("{:.4}", r.avg_iou),
            format!("{:.4}", r.median_iou),
            format!("{:.4}", r.avg_dsc),
            format!("{:.4}", r.median_dsc),
        ]
    };
    let mut out = String::new();
    for (title, rows) in [
        ("By modality", &stats.by_modality),
        ("By object", &stats.by_object),
        ("Total", &vec![stats.total.clone()]),
    ] {
        let table: Vec<Vec<String>> = rows.iter().map(row_cells).collect();
        let mut widths: Vec<usize> = HEADERS.iter().map(|h| h.len()).collect();
        for row in &table {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.len());
            }
        }
        out.push_str(title);
        out.push('\n');
        let fmt_row = |cells: &[String]| {
            cells
                .iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c:<w$}"))
                .collect::<Vec<_>>()
                .join("  ")
                .trim_end()
                .to_string()
        };
        let header_cells: Vec<String> = HEADERS.iter().map(|h| h.to_string()).collect();
        out.push_str(&fmt_row(&header_cells));
        out.push('\n');
        for row in &table {
            out.push_str(&fmt_row(row));
            out.push('\n');
        }
        out.push('\n');
    }
    out.trim_end().to_string()
}
