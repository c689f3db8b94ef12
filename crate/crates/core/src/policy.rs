//! Policies that drive episodes: the callback trait plus the three built-in
//! reference policies (oracle-guided, noise-perturbed, uniform-random) used
//! for reward calibration.

use crate::click::{to_normalized, to_pixel, Polarity};
use crate::edt::{edt, BorderPolicy};
use crate::image::Image;
use crate::mask::Mask;
use crate::metrics::{diff_regions, iou};
use crate::oracle::OracleConfig;
use crate::templates::{
    answer_reasoning, explore_reasoning, fill_reasoning, region_descriptor, response_text,
    ReasonContext, ResponseStyle, RESPONSE_STYLES,
};
use crate::traj::TrajStep;
use crate::action::{render_turn, ActionSpec, ClickTriple, ParsedTurn, TurnPayload};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use std::collections::VecDeque;
use thiserror::Error;

#[derive(Debug, Error)]
#[error("{0}")]
pub struct PolicyError(pub String);

/// What a policy sees each turn. `union_mask` is a convenience view of the
/// current prediction; text-only policies can ignore it.
pub struct PolicyView<'a> {
    pub question: &'a str,
    pub steps: &'a [TrajStep],
    pub image: &'a Image,
    pub observation: &'a Image,
    pub union_mask: &'a Mask,
    pub turn: usize,
}

pub trait Policy {
    /// Produces the next raw turn text.
    fn act(&mut self, view: &PolicyView) -> Result<String, PolicyError>;
}

/// Replays a fixed list of turn texts, optionally repeating the last one
/// forever. The workhorse for tests and replayed trajectories.
pub struct ScriptedPolicy {
    turns: VecDeque<String>,
    repeat: Option<String>,
}

impl ScriptedPolicy {
    pub fn new(turns: Vec<String>) -> Self {
        ScriptedPolicy { turns: turns.into(), repeat: None }
    }

    pub fn repeating(turn: String) -> Self {
        ScriptedPolicy { turns: VecDeque::new(), repeat: Some(turn) }
    }
}

impl Policy for ScriptedPolicy {
    fn act(&mut self, _view: &PolicyView) -> Result<String, PolicyError> {
        if let Some(t) = self.turns.pop_front() {
            return Ok(t);
        }
        match &self.repeat {
            Some(t) => Ok(t.clone()),
            None => Err(PolicyError("script exhausted".into())),
        }
    }
}

// Shared engine: follow the click oracle, optionally jittering coordinates
// and flipping polarity. Noise draws are consumed on every click regardless
// of the noise scale, so sigma = 0 walks the same random stream as any other
// sigma and reproduces the oracle byte-for-byte.
struct GuidedCore {
    oracle: OracleConfig,
    gt: Mask,
    target: String,
    object_name: String,
    sigma: f64,
    p_wrong: f64,
    rng: ChaCha12Rng,
    style: ResponseStyle,
}

/// Largest disc radius around the cell that provably stays inside its
/// claimed error region; 0 when the cell is not in that region at all.
pub(crate) fn safe_radius(
    pred: &Mask,
    gt: &Mask,
    row: usize,
    col: usize,
    polarity: Polarity,
) -> f64 {
    let (missed, spurious) = diff_regions(pred, gt).expect("policy masks share shape");
    let region = match polarity {
        Polarity::Positive => missed,
        Polarity::Negative => spurious,
    };
    let sq = edt(&region, BorderPolicy::Background).sq_at(row, col);
    if sq == 0 {
        0.0
    } else {
        ((sq - 1) as f64).sqrt()
    }
}

impl GuidedCore {
    fn new(
        gt: Mask,
        target: String,
        object_name: String,
        oracle: OracleConfig,
        sigma: f64,
        p_wrong: f64,
        seed: u64,
    ) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let style = RESPONSE_STYLES[rng.gen_range(0..RESPONSE_STYLES.len())];
        GuidedCore { oracle, gt, target, object_name, sigma, p_wrong, rng, style }
    }

    fn act(&mut self, view: &PolicyView) -> String {
        let pred = view.union_mask;
        // Answers when converged or when the click budget is spent, so a
        // capped run still ends with a reportable (if poor) final mask.
        let done = view.turn >= self.oracle.max_steps
            || iou::<f64>(pred, &self.gt).expect("policy masks share shape")
                >= self.oracle.tau_iou;
        let click = if done { None } else { self.oracle.next_click(pred, &self.gt) };
        let Some(click) = click else {
            return render_turn(&ParsedTurn {
                think: answer_reasoning(&self.object_name),
                payload: TurnPayload::Answer(response_text(self.style, &self.object_name)),
            });
        };
        let (w, h) = (view.image.width(), view.image.height());
        let (x0, y0) = to_normalized(click.row, click.col, w, h);
        let ex: f64 = self.rng.sample(StandardNormal);
        let ey: f64 = self.rng.sample(StandardNormal);
        let x = (x0 + self.sigma * ex).clamp(0.0, 1.0);
        let y = (y0 + self.sigma * ey).clamp(0.0, 1.0);
        let polarity = if self.rng.gen_bool(self.p_wrong) {
            match click.polarity {
                Polarity::Positive => Polarity::Negative,
                Polarity::Negative => Polarity::Positive,
            }
        } else {
            click.polarity
        };
        let (row, col) = to_pixel(x, y, w, h);
        let radius = self
            .oracle
            .annotate_radius
            .then(|| safe_radius(pred, &self.gt, row, col, polarity));
        let think = fill_reasoning(&ReasonContext {
            polarity,
            descriptor: region_descriptor(row, col, w, h),
            object_name: &self.object_name,
            first_step: pred.is_empty(),
        });
        let triple = ClickTriple {
            target: self.target.clone(),
            attribute: if polarity.is_positive() { 1 } else { -1 },
            x,
            y,
            radius,
        };
        render_turn(&ParsedTurn {
            think,
            payload: TurnPayload::Action(ActionSpec::Clicks {
                triples: vec![triple],
                revert: false,
            }),
        })
    }
}

/// Follows the click oracle exactly and answers once the IoU threshold is
/// met (or nothing is left to correct).
pub struct OraclePolicy(GuidedCore);

impl OraclePolicy {
    pub fn new(
        gt: Mask,
        target: impl Into<String>,
        object_name: impl Into<String>,
        oracle: OracleConfig,
        seed: u64,
    ) -> Self {
        OraclePolicy(GuidedCore::new(gt, target.into(), object_name.into(), oracle, 0.0, 0.0, seed))
    }
}

impl Policy for OraclePolicy {
    fn act(&mut self, view: &PolicyView) -> Result<String, PolicyError> {
        Ok(self.0.act(view))
    }
}

/// Oracle clicks with Gaussian noise of scale `sigma` in normalized
/// coordinates (clamped to [0,1]) and polarity flipped with probability
/// `p_wrong`. Radius hints are recomputed at the perturbed cell, never
/// copied from the oracle's cell.
pub struct JitteredPolicy(GuidedCore);

impl JitteredPolicy {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        gt: Mask,
        target: impl Into<String>,
        object_name: impl Into<String>,
        oracle: OracleConfig,
        sigma: f64,
        p_wrong: f64,
        seed: u64,
    ) -> Self {
        JitteredPolicy(GuidedCore::new(
            gt,
            target.into(),
            object_name.into(),
            oracle,
            sigma,
            p_wrong,
            seed,
        ))
    }
}

impl Policy for JitteredPolicy {
    fn act(&mut self, view: &PolicyView) -> Result<String, PolicyError> {
        Ok(self.0.act(view))
    }
}

/// Uniform clicks of uniform polarity; never answers, so episodes run to the
/// turn limit. The floor of the policy-ranking fixture.
pub struct RandomPolicy {
    target: String,
    rng: ChaCha12Rng,
}

impl RandomPolicy {
    pub fn new(target: impl Into<String>, seed: u64) -> Self {
        RandomPolicy { target: target.into(), rng: ChaCha12Rng::seed_from_u64(seed) }
    }
}

impl Policy for RandomPolicy {
    fn act(&mut self, view: &PolicyView) -> Result<String, PolicyError> {
        let x: f64 = self.rng.gen();
        let y: f64 = self.rng.gen();
        let positive = self.rng.gen_bool(0.5);
        let (w, h) = (view.image.width(), view.image.height());
        let (row, col) = to_pixel(x, y, w, h);
        let triple = ClickTriple {
            target: self.target.clone(),
            attribute: if positive { 1 } else { -1 },
            x,
            y,
            radius: None,
        };
        Ok(render_turn(&ParsedTurn {
            think: explore_reasoning(region_descriptor(row, col, w, h)),
            payload: TurnPayload::Action(ActionSpec::Clicks {
                triples: vec![triple],
                revert: false,
            }),
        }))
    }
}
