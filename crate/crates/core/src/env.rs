//! The multi-turn episode state machine and the loop that drives a policy
//! through it.
//!
//! Per-target state is kept separately and composed into one union overlay
//! per turn. Every click stores a snapshot of the target's (mask, prior)
//! before it executed, which is what makes revert bit-exact. Actions are
//! applied to a staged copy and committed only when every segmenter call
//! succeeded, so a failed action leaves the episode untouched.

use crate::action::{ActionSpec, TurnPayload};
use crate::click::Click;
use crate::codec::{encode_image_png, encode_mask_png, CodecError};
use crate::image::{overlay, Image, PALETTE};
use crate::mask::{Mask, MaskError};
use crate::metrics::{dsc, iou};
use crate::policy::{Policy, PolicyView};
use crate::segment::{PriorHandle, PromptSet, Segmenter, SegmenterError};
use crate::store::{BlobStore, StoreError};
use crate::traj::{FormatFailure, TrajStep, Trajectory, Termination};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EpisodeLimits {
    pub max_turns: usize,
    /// Context-budget analog, counted in characters of emitted turn text.
    pub max_transcript_chars: usize,
}

impl Default for EpisodeLimits {
    fn default() -> Self {
        EpisodeLimits { max_turns: 20, max_transcript_chars: 65_536 }
    }
}

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("turn limit {max_turns} reached")]
    TurnLimit { max_turns: usize },
    #[error(transparent)]
    Shape(#[from] MaskError),
    #[error(transparent)]
    Segmenter(#[from] SegmenterError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("policy failure: {0}")]
    Policy(String),
    #[error("target '{0}' already has state")]
    TargetExists(String),
}

#[derive(Debug, Clone)]
struct TargetState {
    clicks: Vec<Click>,
    mask: Mask,
    prior: Option<PriorHandle>,
    /// (mask, prior) before each click in `clicks`; same length.
    history: Vec<(Mask, Option<PriorHandle>)>,
}

impl TargetState {
    fn empty(width: usize, height: usize) -> Self {
        TargetState { clicks: vec![], mask: Mask::new(width, height), prior: None, history: vec![] }
    }
}

/// What one executed action produced.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    /// Pixel clicks executed, in action order; empty for End and revert.
    pub clicks: Vec<Click>,
    /// Union mask over all targets after the action.
    pub mask: Mask,
    /// Score of the last segmenter call; 0 when no call was made.
    pub seg_score: f64,
    pub observation: Image,
}

pub struct Episode<'s> {
    image: Image,
    segmenter: &'s dyn Segmenter,
    limits: EpisodeLimits,
    overlay_alpha: f64,
    /// Insertion order fixes each target's palette color.
    targets: Vec<(String, TargetState)>,
    turn: usize,
}

impl<'s> Episode<'s> {
    pub fn new(
        image: Image,
        segmenter: &'s dyn Segmenter,
        limits: EpisodeLimits,
        overlay_alpha: f64,
    ) -> Self {
        Episode { image, segmenter, limits, overlay_alpha, targets: vec![], turn: 0 }
    }

    /// Seeds a target with a pre-existing mask (the refinement scenario).
    /// The mask arrives with an empty click history, so a revert against it
    /// discards it entirely.
    pub fn set_initial_mask(&mut self, target: &str, mask: Mask) -> Result<(), EnvError> {
        if mask.width() != self.image.width() || mask.height() != self.image.height() {
            return Err(EnvError::Shape(MaskError::DimensionMismatch(
                mask.width(),
                mask.height(),
                self.image.width(),
                self.image.height(),
            )));
        }
        if self.targets.iter().any(|(l, _)| l == target) {
            return Err(EnvError::TargetExists(target.to_string()));
        }
        let mut state = TargetState::empty(self.image.width(), self.image.height());
        state.mask = mask;
        self.targets.push((target.to_string(), state));
        Ok(())
    }

    pub fn turn(&self) -> usize {
        self.turn
    }

    pub fn image(&self) -> &Image {
        &self.image
    }

    pub fn target_mask(&self, label: &str) -> Option<&Mask> {
        self.targets.iter().find(|(l, _)| l == label).map(|(_, t)| &t.mask)
    }

    pub fn target_clicks(&self, label: &str) -> Option<&[Click]> {
        self.targets.iter().find(|(l, _)| l == label).map(|(_, t)| t.clicks.as_slice())
    }

    pub fn union_mask(&self) -> Mask {
        let mut union = Mask::new(self.image.width(), self.image.height());
        for (_, t) in &self.targets {
            union = union.or(&t.mask);
        }
        union
    }

    /// Current composite view: each target's mask blended over the image in
    /// its palette color.
    pub fn observation(&self) -> Image {
        let mut obs = self.image.promote_rgb();
        for (i, (_, t)) in self.targets.iter().enumerate() {
            obs = overlay(&obs, &t.mask, self.overlay_alpha, PALETTE[i % PALETTE.len()])
                .expect("target masks match image dimensions");
        }
        obs
    }

    pub fn step(&mut self, action: &ActionSpec) -> Result<StepOutcome, EnvError> {
        if self.turn >= self.limits.max_turns {
            return Err(EnvError::TurnLimit { max_turns: self.limits.max_turns });
        }
        let (w, h) = (self.image.width(), self.image.height());
        let mut executed: Vec<Click> = vec![];
        let mut seg_score = 0.0;
        match action {
            ActionSpec::End => {}
            ActionSpec::Clicks { triples, revert: true } => {
                // Unknown labels are a no-op: agent text is untrusted input
                // and a wasted revert is the reward model's problem, not a
                // state-machine fault.
                let mut reverted: Vec<&str> = vec![];
                for triple in triples {
                    if reverted.contains(&triple.target.as_str()) {
                        continue;
                    }
                    reverted.push(&triple.target);
                    if let Some((_, t)) =
                        self.targets.iter_mut().find(|(l, _)| l == &triple.target)
                    {
                        if t.clicks.pop().is_some() {
                            let (mask, prior) =
                                t.history.pop().expect("history tracks clicks one-to-one");
                            t.mask = mask;
                            t.prior = prior;
                        } else {
                            t.mask = Mask::new(w, h);
                            t.prior = None;
                        }
                    }
                }
            }
            ActionSpec::Clicks { triples, revert: false } => {
                let mut staged = self.targets.clone();
                for triple in triples {
                    let click = triple.to_click(w, h);
                    let idx = match staged.iter().position(|(l, _)| l == &triple.target) {
                        Some(i) => i,
                        None => {
                            staged.push((triple.target.clone(), TargetState::empty(w, h)));
                            staged.len() - 1
                        }
                    };
                    let t = &mut staged[idx].1;
                    t.history.push((t.mask.clone(), t.prior.clone()));
                    t.clicks.push(click);
                    let result = self.segmenter.predict(
                        &self.image,
                        &PromptSet { clicks: t.clicks.clone(), prior: t.prior.clone() },
                    )?;
                    let best = result.best();
                    t.mask = best.mask.clone();
                    seg_score = best.score;
                    t.prior = Some(result.prior);
                    executed.push(click);
                }
                self.targets = staged;
            }
        }
        self.turn += 1;
        Ok(StepOutcome {
            clicks: executed,
            mask: self.union_mask(),
            seg_score,
            observation: self.observation(),
        })
    }
}

/// An aborted episode: the steps that executed before the fault.
#[derive(Debug, Error)]
#[error("episode aborted after {} steps: {source}", steps.len())]
pub struct EpisodeFailure {
    pub steps: Vec<TrajStep>,
    #[source]
    pub source: EnvError,
}

pub struct EpisodeSetup<'a> {
    pub id: &'a str,
    pub question: &'a str,
    pub image: &'a Image,
    /// (target label, mask) to seed a refinement episode with.
    pub initial_mask: Option<(&'a str, &'a Mask)>,
    pub gt: Option<&'a Mask>,
    pub limits: EpisodeLimits,
    pub overlay_alpha: f64,
    pub store: Option<&'a dyn BlobStore>,
}

/// Queries the policy, parses and executes each turn, and records the run.
/// Terminates on an answer, a malformed turn (recorded, not an error), the
/// turn limit, or the transcript character budget. Policy and segmenter
/// faults abort with the partial step list.
pub fn run_episode(
    setup: &EpisodeSetup,
    policy: &mut dyn Policy,
    segmenter: &dyn Segmenter,
) -> Result<Trajectory, EpisodeFailure> {
    let fail = |steps: &[TrajStep], source: EnvError| EpisodeFailure { steps: steps.to_vec(), source };
    let mut ep = Episode::new(
        setup.image.clone(),
        segmenter,
        setup.limits.clone(),
        setup.overlay_alpha,
    );
    if let Some((label, mask)) = setup.initial_mask {
        ep.set_initial_mask(label, mask.clone()).map_err(|e| fail(&[], e))?;
    }
    let mut steps: Vec<TrajStep> = vec![];
    let mut observation = ep.observation();
    let mut chars = 0usize;
    let mut final_answer = None;
    let mut final_raw = None;
    let mut failure = None;
    let termination = loop {
        if steps.len() >= setup.limits.max_turns {
            break Termination::TurnLimit;
        }
        let union = ep.union_mask();
        let raw = policy
            .act(&PolicyView {
                question: setup.question,
                steps: &steps,
                image: setup.image,
                observation: &observation,
                union_mask: &union,
                turn: steps.len(),
            })
            .map_err(|e| fail(&steps, EnvError::Policy(e.to_string())))?;
        chars += raw.chars().count();
        let turn = match crate::action::parse_agent_output(&raw) {
            Ok(turn) => turn,
            Err(error) => {
                failure = Some(FormatFailure { raw, error });
                break Termination::FormatError;
            }
        };
        match turn.payload {
            TurnPayload::Answer(text) => {
                final_answer = Some(text);
                final_raw = Some(raw);
                break Termination::Answered;
            }
            TurnPayload::Action(spec) => {
                let outcome = ep.step(&spec).map_err(|e| fail(&steps, e))?;
                let (iou_v, dsc_v) = match setup.gt {
                    Some(gt) => {
                        let i = iou(&outcome.mask, gt).map_err(|e| fail(&steps, e.into()))?;
                        let d = dsc(&outcome.mask, gt).map_err(|e| fail(&steps, e.into()))?;
                        (Some(i), Some(d))
                    }
                    None => (None, None),
                };
                let (observation_ref, mask_ref) = match setup.store {
                    Some(store) => {
                        let obs_png = encode_image_png(&outcome.observation);
                        let mask_png = encode_mask_png(&outcome.mask);
                        let o = store.put(&obs_png).map_err(|e| fail(&steps, e.into()))?;
                        let m = store.put(&mask_png).map_err(|e| fail(&steps, e.into()))?;
                        (Some(o), Some(m))
                    }
                    None => (None, None),
                };
                steps.push(TrajStep {
                    think: turn.think,
                    raw,
                    action: spec,
                    clicks: outcome.clicks,
                    mask: outcome.mask,
                    seg_score: outcome.seg_score,
                    observation_ref,
                    mask_ref,
                    iou: iou_v,
                    dsc: dsc_v,
                    erroneous: false,
                });
                observation = outcome.observation;
                if chars >= setup.limits.max_transcript_chars {
                    break Termination::TranscriptBudget;
                }
            }
        }
    };
    Ok(Trajectory {
        id: setup.id.to_string(),
        question: setup.question.to_string(),
        initial_mask: setup.initial_mask.map(|(_, m)| m.clone()),
        steps,
        final_answer,
        final_raw,
        termination,
        failure,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::action::ClickTriple;
    use crate::policy::ScriptedPolicy;
    use crate::segment::{DiscSegmenter, SegResult};
    use crate::store::MemoryStore;

    fn triple(target: &str, attribute: i8, x: f64, y: f64, radius: Option<f64>) -> ClickTriple {
        ClickTriple { target: target.into(), attribute, x, y, radius }
    }

    fn clicks(triples: Vec<ClickTriple>) -> ActionSpec {
        ActionSpec::Clicks { triples, revert: false }
    }

    fn revert(targets: &[&str]) -> ActionSpec {
        ActionSpec::Clicks {
            triples: targets
                .iter()
                .map(|t| triple(t, 1, 0.0, 0.0, None))
                .collect(),
            revert: true,
        }
    }

    fn episode(seg: &DiscSegmenter) -> Episode<'_> {
        Episode::new(Image::new_gray(16, 16), seg, EpisodeLimits::default(), 0.45)
    }

    #[test]
    fn first_click_paints_disc_and_blends_overlay() {
        let seg = DiscSegmenter::new(2.0);
        let mut ep = episode(&seg);
        let out = ep
            .step(&clicks(vec![triple("lesion", 1, 0.5, 0.5, None)]))
            .unwrap();
        assert_eq!(out.clicks, vec![Click::positive(8, 8)]);
        assert!(out.mask.get(8, 8));
        assert_eq!(out.mask.count_ones(), 13);
        assert_eq!(ep.turn(), 1);
        // Overlay equals a direct blend of the same mask and palette color.
        let expect = overlay(&ep.image().promote_rgb(), &out.mask, 0.45, PALETTE[0]).unwrap();
        assert_eq!(out.observation.data(), expect.data());
    }

    #[test]
    fn revert_restores_previous_mask_bit_exactly() {
        let seg = DiscSegmenter::new(3.0);
        let mut ep = episode(&seg);
        let mut masks = vec![];
        for (x, y) in [(0.2, 0.2), (0.7, 0.7), (0.5, 0.3)] {
            let out = ep.step(&clicks(vec![triple("a", 1, x, y, None)])).unwrap();
            masks.push(out.mask);
        }
        let out = ep.step(&revert(&["a"])).unwrap();
        assert_eq!(&out.mask, &masks[1]);
        assert!(out.clicks.is_empty());
        // A second click after the revert behaves as if the third never
        // happened: prior state was restored, not just the mask.
        let redo = ep.step(&clicks(vec![triple("a", 1, 0.5, 0.3, None)])).unwrap();
        assert_eq!(&redo.mask, &masks[2]);
    }

    #[test]
    fn revert_with_no_clicks_discards_initial_mask() {
        let seg = DiscSegmenter::default();
        let mut ep = episode(&seg);
        let initial = Mask::from_fn(16, 16, |r, _| r < 4);
        ep.set_initial_mask("a", initial.clone()).unwrap();
        assert_eq!(ep.union_mask(), initial);
        let out = ep.step(&revert(&["a"])).unwrap();
        assert!(out.mask.is_empty());
        // Unknown target label is a no-op, not a fault.
        ep.step(&revert(&["ghost"])).unwrap();
    }

    #[test]
    fn duplicate_initial_mask_is_rejected() {
        let seg = DiscSegmenter::default();
        let mut ep = episode(&seg);
        ep.set_initial_mask("a", Mask::new(16, 16)).unwrap();
        assert!(matches!(
            ep.set_initial_mask("a", Mask::new(16, 16)),
            Err(EnvError::TargetExists(_))
        ));
        assert!(matches!(
            ep.set_initial_mask("b", Mask::new(3, 3)),
            Err(EnvError::Shape(_))
        ));
    }

    #[test]
    fn end_changes_only_the_turn_counter() {
        let seg = DiscSegmenter::default();
        let mut ep = episode(&seg);
        ep.step(&clicks(vec![triple("a", 1, 0.5, 0.5, None)])).unwrap();
        let before = ep.union_mask();
        let out = ep.step(&ActionSpec::End).unwrap();
        assert_eq!(out.mask, before);
        assert_eq!(out.seg_score, 0.0);
        assert_eq!(ep.turn(), 2);
    }

    #[test]
    fn multi_target_union_and_palette() {
        let seg = DiscSegmenter::new(1.0);
        let mut ep = episode(&seg);
        let out = ep
            .step(&clicks(vec![
                triple("a", 1, 0.1, 0.1, None),
                triple("b", 1, 0.9, 0.9, None),
            ]))
            .unwrap();
        let a = ep.target_mask("a").unwrap();
        let b = ep.target_mask("b").unwrap();
        assert_eq!(out.mask, a.or(b));
        assert!(!a.is_empty() && !b.is_empty());
        // Second target rendered in the second palette color.
        let expect = {
            let base = overlay(&ep.image().promote_rgb(), a, 0.45, PALETTE[0]).unwrap();
            overlay(&base, b, 0.45, PALETTE[1]).unwrap()
        };
        assert_eq!(out.observation.data(), expect.data());
    }

    struct FailOnSecondClick(DiscSegmenter);

    impl Segmenter for FailOnSecondClick {
        fn kind(&self) -> &'static str {
            "disc"
        }
        fn predict(&self, image: &Image, p: &PromptSet) -> Result<SegResult, SegmenterError> {
            if p.clicks.len() >= 2 {
                return Err(SegmenterError::Transport {
                    message: "wire dropped".into(),
                    payload: None,
                });
            }
            self.0.predict(image, p)
        }
    }

    #[test]
    fn failed_action_leaves_state_untouched() {
        let seg = FailOnSecondClick(DiscSegmenter::default());
        let mut ep = Episode::new(Image::new_gray(16, 16), &seg, EpisodeLimits::default(), 0.45);
        ep.step(&clicks(vec![triple("a", 1, 0.5, 0.5, None)])).unwrap();
        let before = ep.union_mask();
        let turn_before = ep.turn();
        let err = ep
            .step(&clicks(vec![triple("a", 1, 0.2, 0.2, None)]))
            .unwrap_err();
        assert!(matches!(err, EnvError::Segmenter(SegmenterError::Transport { .. })));
        assert_eq!(ep.union_mask(), before);
        assert_eq!(ep.turn(), turn_before);
        assert_eq!(ep.target_clicks("a").unwrap().len(), 1);
    }

    #[test]
    fn turn_limit_is_enforced() {
        let seg = DiscSegmenter::default();
        let limits = EpisodeLimits { max_turns: 2, ..EpisodeLimits::default() };
        let mut ep = Episode::new(Image::new_gray(8, 8), &seg, limits, 0.45);
        ep.step(&ActionSpec::End).unwrap();
        ep.step(&ActionSpec::End).unwrap();
        assert!(matches!(ep.step(&ActionSpec::End), Err(EnvError::TurnLimit { .. })));
    }

    fn setup<'a>(image: &'a Image, gt: Option<&'a Mask>, limits: EpisodeLimits) -> EpisodeSetup<'a> {
        EpisodeSetup {
            id: "ep",
            question: "outline the blob",
            image,
            initial_mask: None,
            gt,
            limits,
            overlay_alpha: 0.45,
            store: None,
        }
    }

    #[test]
    fn immediate_answer_gives_zero_step_trajectory() {
        let image = Image::new_gray(8, 8);
        let mut policy = ScriptedPolicy::new(vec!["<think>t</think><answer>done</answer>".into()]);
        let seg = DiscSegmenter::default();
        let traj =
            run_episode(&setup(&image, None, EpisodeLimits::default()), &mut policy, &seg).unwrap();
        assert!(traj.steps.is_empty());
        assert_eq!(traj.termination, Termination::Answered);
        assert_eq!(traj.final_answer.as_deref(), Some("done"));
    }

    #[test]
    fn click_forever_policy_hits_turn_limit() {
        let image = Image::new_gray(8, 8);
        let turn = r#"<think>t</think><action>{"clicks":[{"target":"a","attribute":1,"x":0.5,"y":0.5}]}</action>"#;
        let mut policy = ScriptedPolicy::repeating(turn.into());
        let seg = DiscSegmenter::default();
        let limits = EpisodeLimits { max_turns: 4, ..EpisodeLimits::default() };
        let traj = run_episode(&setup(&image, None, limits), &mut policy, &seg).unwrap();
        assert_eq!(traj.steps.len(), 4);
        assert_eq!(traj.termination, Termination::TurnLimit);
    }

    #[test]
    fn malformed_turn_is_recorded_not_fatal() {
        let image = Image::new_gray(8, 8);
        let mut policy = ScriptedPolicy::new(vec!["<answer>no think</answer>".into()]);
        let seg = DiscSegmenter::default();
        let traj =
            run_episode(&setup(&image, None, EpisodeLimits::default()), &mut policy, &seg).unwrap();
        assert_eq!(traj.termination, Termination::FormatError);
        assert_eq!(traj.failure.as_ref().unwrap().raw, "<answer>no think</answer>");
    }

    #[test]
    fn transcript_budget_terminates() {
        let image = Image::new_gray(8, 8);
        let turn = r#"<think>t</think><action>{"clicks":[{"target":"a","attribute":1,"x":0.5,"y":0.5}]}</action>"#;
        let mut policy = ScriptedPolicy::repeating(turn.into());
        let seg = DiscSegmenter::default();
        let limits = EpisodeLimits { max_turns: 20, max_transcript_chars: turn.len() * 2 };
        let traj = run_episode(&setup(&image, None, limits), &mut policy, &seg).unwrap();
        assert_eq!(traj.steps.len(), 2);
        assert_eq!(traj.termination, Termination::TranscriptBudget);
    }

    #[test]
    fn metrics_and_store_refs_are_recorded() {
        let image = Image::new_gray(8, 8);
        let gt = Mask::from_fn(8, 8, |r, c| (3..6).contains(&r) && (3..6).contains(&c));
        let turn = r#"<think>t</think><action>{"clicks":[{"target":"a","attribute":1,"x":0.5,"y":0.5,"radius":1.0}]}</action>"#;
        let mut policy = ScriptedPolicy::new(vec![
            turn.into(),
            "<think>t</think><answer>done</answer>".into(),
        ]);
        let seg = DiscSegmenter::default();
        let store = MemoryStore::new();
        let mut s = setup(&image, Some(&gt), EpisodeLimits::default());
        s.store = Some(&store);
        let traj = run_episode(&s, &mut policy, &seg).unwrap();
        let step = &traj.steps[0];
        assert!(step.iou.is_some() && step.dsc.is_some());
        let mask_png = store.get(step.mask_ref.as_ref().unwrap()).unwrap();
        let decoded = crate::codec::decode_mask_png(&mask_png).unwrap();
        assert_eq!(&decoded, &step.mask);
        assert!(store.get(step.observation_ref.as_ref().unwrap()).is_ok());
    }

    #[test]
    fn exhausted_policy_aborts_with_partial_steps() {
        let image = Image::new_gray(8, 8);
        let turn = r#"<think>t</think><action>{"clicks":[{"target":"a","attribute":1,"x":0.5,"y":0.5}]}</action>"#;
        let mut policy = ScriptedPolicy::new(vec![turn.into()]);
        let seg = DiscSegmenter::default();
        let err = run_episode(&setup(&image, None, EpisodeLimits::default()), &mut policy, &seg)
            .unwrap_err();
        assert_eq!(err.steps.len(), 1);
        assert!(matches!(err.source, EnvError::Policy(_)));
    }
}
