//! Group-relative advantage arithmetic, the token loss mask for supervised
//! replay, and a two-parameter toy policy trained with the same estimator.
//!
//! The toy trainer exists to exercise the reward-to-gradient plumbing end to
//! end on this machine; it is not a stand-in for real policy optimization.

use crate::action::{render_action, render_turn, ActionSpec, ClickTriple, ParsedTurn, TurnPayload};
use crate::click::to_normalized;
use crate::env::{run_episode, EpisodeLimits, EpisodeSetup};
use crate::image::Image;
use crate::mask::Mask;
use crate::oracle::OracleConfig;
use crate::policy::{safe_radius, Policy, PolicyError, PolicyView};
use crate::rewards::{aggregate, RewardConfig, RewardError};
use crate::seed;
use crate::segment::DiscSegmenter;
use crate::templates::{answer_reasoning, fill_reasoning, region_descriptor, ReasonContext};
use crate::traj::Trajectory;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GrpoError {
    #[error("rollout {rollout} has no loss-bearing tokens")]
    NoIncludedTokens { rollout: usize },
    #[error("flagged step {index} out of range for {steps} steps")]
    FlagOutOfRange { index: usize, steps: usize },
    #[error("final turn unusable for loss masking: {0}")]
    MalformedTurn(String),
    #[error("episode failed during training: {0}")]
    Episode(String),
    #[error(transparent)]
    Reward(#[from] RewardError),
    #[error("{0}")]
    BadSetup(&'static str),
}

/// Group-normalized advantages: (r - mean) / population std. A group whose
/// rewards are (numerically) identical carries no signal and gets all zeros
/// instead of a division blow-up.
pub fn advantages(rewards: &[f64], std_eps: f64) -> Vec<f64> {
    let n = rewards.len();
    if n == 0 {
        return vec![];
    }
    let mean = rewards.iter().sum::<f64>() / n as f64;
    let var = rewards.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n as f64;
    let std = var.sqrt();
    if std < std_eps {
        return vec![0.0; n];
    }
    rewards.iter().map(|r| (r - mean) / std).collect()
}

/// One token's importance ratio pi_new/pi_old; excluded tokens (observation
/// content, flagged actions) do not enter the objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TokenRecord {
    pub ratio: f64,
    pub include: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub reward: f64,
    pub tokens: Vec<TokenRecord>,
}

/// The pessimistic clipped surrogate for one token.
pub fn clipped_term(ratio: f64, advantage: f64, clip: f64) -> f64 {
    let clamped = ratio.clamp(1.0 - clip, 1.0 + clip);
    (ratio * advantage).min(clamped * advantage)
}

/// Clipped surrogate loss over a rollout group: negative mean over rollouts
/// of the per-rollout token mean, with group-normalized advantages. Errors
/// on a rollout with zero included tokens rather than silently skipping it.
pub fn grpo_loss(rollouts: &[Rollout], clip: f64, std_eps: f64) -> Result<f64, GrpoError> {
    if rollouts.is_empty() {
        return Err(GrpoError::BadSetup("empty rollout group"));
    }
    let rewards: Vec<f64> = rollouts.iter().map(|r| r.reward).collect();
    let adv = advantages(&rewards, std_eps);
    let mut objective = 0.0;
    for (i, (rollout, a)) in rollouts.iter().zip(&adv).enumerate() {
        let mut sum = 0.0;
        let mut n = 0usize;
        for tok in &rollout.tokens {
            if tok.include {
                sum += clipped_term(tok.ratio, *a, clip);
                n += 1;
            }
        }
        if n == 0 {
            return Err(GrpoError::NoIncludedTokens { rollout: i });
        }
        objective += sum / n as f64;
    }
    Ok(-objective / rollouts.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TokenKind {
    Think,
    Action,
    Observation,
    Answer,
}

/// A run of same-kind tokens. `step` is the interaction step index, `None`
/// for the final answer turn. Token counting is the toy rule used throughout:
/// one token per character of payload text, one pseudo-token per observation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TokenSpan {
    pub step: Option<usize>,
    pub kind: TokenKind,
    pub len: usize,
    pub include: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LossMask {
    pub spans: Vec<TokenSpan>,
}

impl LossMask {
    pub fn total_tokens(&self) -> usize {
        self.spans.iter().map(|s| s.len).sum()
    }

    pub fn included_tokens(&self) -> usize {
        self.spans.iter().filter(|s| s.include).map(|s| s.len).sum()
    }

    /// Per-token include flags, span order.
    pub fn flags(&self) -> Vec<bool> {
        let mut out = Vec::with_capacity(self.total_tokens());
        for s in &self.spans {
            out.extend(std::iter::repeat_n(s.include, s.len));
        }
        out
    }
}

/// Builds the supervised loss mask for a trajectory. Observation tokens are
/// never trained on. Steps in `flagged` (deliberately wrong actions in
/// reflective data) keep their think text but drop the action span, so the
/// model reads the mistake without learning to emit it. Action lengths use
/// the canonical rendering, which is what every built-in policy emits. A
/// trailing format-failure turn, if any, contributes nothing.
pub fn sft_loss_mask(traj: &Trajectory, flagged: &BTreeSet<usize>) -> Result<LossMask, GrpoError> {
    if let Some(&bad) = flagged.iter().find(|&&i| i >= traj.steps.len()) {
        return Err(GrpoError::FlagOutOfRange { index: bad, steps: traj.steps.len() });
    }
    let mut spans = Vec::new();
    for (i, step) in traj.steps.iter().enumerate() {
        spans.push(TokenSpan {
            step: Some(i),
            kind: TokenKind::Think,
            len: step.think.chars().count(),
            include: true,
        });
        spans.push(TokenSpan {
            step: Some(i),
            kind: TokenKind::Action,
            len: render_action(&step.action).chars().count(),
            include: !flagged.contains(&i),
        });
        spans.push(TokenSpan { step: Some(i), kind: TokenKind::Observation, len: 1, include: false });
    }
    if let Some(raw) = &traj.final_raw {
        let turn = crate::action::parse_agent_output(raw)
            .map_err(|e| GrpoError::MalformedTurn(e.to_string()))?;
        let TurnPayload::Answer(answer) = turn.payload else {
            return Err(GrpoError::MalformedTurn("final turn is not an answer".into()));
        };
        spans.push(TokenSpan {
            step: None,
            kind: TokenKind::Think,
            len: turn.think.chars().count(),
            include: true,
        });
        spans.push(TokenSpan {
            step: None,
            kind: TokenKind::Answer,
            len: answer.chars().count(),
            include: true,
        });
    }
    Ok(LossMask { spans })
}

const SIGMA_MIN: f64 = 1e-3;
const SIGMA_MAX: f64 = 2.0;

/// The two learnable knobs: click noise scale (normalized coordinates) and
/// the logit of the stop probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToyPolicyParams {
    pub sigma: f64,
    pub stop_bias: f64,
}

impl Default for ToyPolicyParams {
    fn default() -> Self {
        ToyPolicyParams { sigma: 0.6, stop_bias: -2.0 }
    }
}

#[derive(Debug, Clone)]
pub struct ToyTrainOptions {
    pub iterations: usize,
    pub group_size: usize,
    pub step_size: f64,
    pub max_turns: usize,
    /// Stopping is only offered once the last step's segmenter score clears
    /// this; before that the policy always keeps clicking.
    pub quality_gate: f64,
    pub rewards: RewardConfig,
    pub oracle: OracleConfig,
}

impl Default for ToyTrainOptions {
    fn default() -> Self {
        ToyTrainOptions {
            iterations: 30,
            group_size: 8,
            step_size: 0.05,
            max_turns: 12,
            quality_gate: 0.5,
            rewards: RewardConfig::default(),
            oracle: OracleConfig { annotate_radius: true, ..OracleConfig::default() },
        }
    }
}

pub struct ToyTask {
    pub image: Image,
    pub gt: Mask,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub iteration: usize,
    pub mean_reward: f64,
    pub sigma: f64,
    pub stop_bias: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ToyTrainResult {
    pub curve: Vec<CurvePoint>,
    pub params: ToyPolicyParams,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

// One rollout's policy: oracle clicks with learnable Gaussian jitter, and a
// learnable Bernoulli stop once the mask has stabilized. Accumulates the
// episode's score-function gradient as it acts; jitter draws feed
// d log N(x; mu, sigma) / d sigma = (eps^2 - 1) / sigma per axis, evaluated
// before clamping.
struct ToyEpisodePolicy {
    params: ToyPolicyParams,
    oracle: OracleConfig,
    gt: Mask,
    quality_gate: f64,
    rng: ChaCha12Rng,
    grad_sigma: f64,
    grad_stop: f64,
}

impl ToyEpisodePolicy {
    fn new(params: ToyPolicyParams, oracle: OracleConfig, gt: Mask, gate: f64, seed: u64) -> Self {
        ToyEpisodePolicy {
            params,
            oracle,
            gt,
            quality_gate: gate,
            rng: ChaCha12Rng::seed_from_u64(seed),
            grad_sigma: 0.0,
            grad_stop: 0.0,
        }
    }

    fn answer_turn(&self) -> String {
        render_turn(&ParsedTurn {
            think: answer_reasoning("region"),
            payload: TurnPayload::Answer("Segmentation complete.".into()),
        })
    }
}

impl Policy for ToyEpisodePolicy {
    fn act(&mut self, view: &PolicyView) -> Result<String, PolicyError> {
        let pred = view.union_mask;
        if let Some(last) = view.steps.last() {
            if last.seg_score >= self.quality_gate {
                let p = sigmoid(self.params.stop_bias);
                let stop = self.rng.gen_bool(p);
                self.grad_stop += if stop { 1.0 - p } else { -p };
                if stop {
                    return Ok(self.answer_turn());
                }
            }
        }
        let Some(click) = self.oracle.next_click(pred, &self.gt) else {
            // Nothing left to correct; stopping here is forced, not sampled.
            return Ok(self.answer_turn());
        };
        let (w, h) = (view.image.width(), view.image.height());
        let (x0, y0) = to_normalized(click.row, click.col, w, h);
        let ex: f64 = self.rng.sample(StandardNormal);
        let ey: f64 = self.rng.sample(StandardNormal);
        let sigma = self.params.sigma;
        self.grad_sigma += (ex * ex - 1.0) / sigma + (ey * ey - 1.0) / sigma;
        let x = (x0 + sigma * ex).clamp(0.0, 1.0);
        let y = (y0 + sigma * ey).clamp(0.0, 1.0);
        let (row, col) = crate::click::to_pixel(x, y, w, h);
        let radius = self
            .oracle
            .annotate_radius
            .then(|| safe_radius(pred, &self.gt, row, col, click.polarity));
        let think = fill_reasoning(&ReasonContext {
            polarity: click.polarity,
            descriptor: region_descriptor(row, col, w, h),
            object_name: "region",
            first_step: pred.is_empty(),
        });
        Ok(render_turn(&ParsedTurn {
            think,
            payload: TurnPayload::Action(ActionSpec::Clicks {
                triples: vec![ClickTriple {
                    target: "region".into(),
                    attribute: if click.polarity.is_positive() { 1 } else { -1 },
                    x,
                    y,
                    radius,
                }],
                revert: false,
            }),
        }))
    }
}

/// Policy-gradient ascent on the toy policy with group-relative advantages:
/// per task, `group_size` rollouts share a baseline; the update is the
/// advantage-weighted score-function estimator, normalized by the episode
/// count, applied with a fixed step size. Deterministic in `seed`.
pub fn train_toy_policy(
    tasks: &[ToyTask],
    start: ToyPolicyParams,
    opts: &ToyTrainOptions,
    seed: u64,
) -> Result<ToyTrainResult, GrpoError> {
    if tasks.is_empty() {
        return Err(GrpoError::BadSetup("no training tasks"));
    }
    if opts.group_size < 2 {
        return Err(GrpoError::BadSetup("group size must be at least 2"));
    }
    let seg = DiscSegmenter::default();
    let mut params = start;
    let mut curve = Vec::with_capacity(opts.iterations);
    let mut episode = 0u64;
    for iteration in 0..opts.iterations {
        let mut acc_sigma = 0.0;
        let mut acc_stop = 0.0;
        let mut reward_sum = 0.0;
        for task in tasks {
            let mut rewards = Vec::with_capacity(opts.group_size);
            let mut grads = Vec::with_capacity(opts.group_size);
            for _ in 0..opts.group_size {
                let mut policy = ToyEpisodePolicy::new(
                    params,
                    opts.oracle.clone(),
                    task.gt.clone(),
                    opts.quality_gate,
                    seed::substream(seed, "toy-episode", episode),
                );
                episode += 1;
                let setup = EpisodeSetup {
                    id: "toy",
                    question: "Please segment the region of interest.",
                    image: &task.image,
                    initial_mask: None,
                    gt: Some(&task.gt),
                    limits: EpisodeLimits { max_turns: opts.max_turns, ..EpisodeLimits::default() },
                    overlay_alpha: 0.45,
                    store: None,
                };
                let traj = run_episode(&setup, &mut policy, &seg)
                    .map_err(|e| GrpoError::Episode(e.to_string()))?;
                rewards.push(aggregate(&traj, Some(&task.gt), None, &opts.rewards)?.total);
                grads.push((policy.grad_sigma, policy.grad_stop));
            }
            reward_sum += rewards.iter().sum::<f64>();
            for (a, (gs, gb)) in advantages(&rewards, 1e-8).iter().zip(&grads) {
                acc_sigma += a * gs;
                acc_stop += a * gb;
            }
        }
        let n = (tasks.len() * opts.group_size) as f64;
        curve.push(CurvePoint {
            iteration,
            mean_reward: reward_sum / n,
            sigma: params.sigma,
            stop_bias: params.stop_bias,
        });
        params.sigma = (params.sigma + opts.step_size * acc_sigma / n).clamp(SIGMA_MIN, SIGMA_MAX);
        params.stop_bias = (params.stop_bias + opts.step_size * acc_stop / n).clamp(-10.0, 10.0);
    }
    Ok(ToyTrainResult { curve, params })
}
