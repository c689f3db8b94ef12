//! Segmenters: click history in, mask candidates out.
//!
//! The prior handle is an opaque payload plus a type tag. Built-ins encode
//! their own state in it (the disc segmenter also records how many clicks it
//! has consumed so later calls replay only new ones); callers must thread it
//! back unmodified and never look inside.

use crate::click::{Click, Polarity};
use crate::image::Image;
use crate::mask::Mask;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SegmenterError {
    #[error("prior handle from segmenter type '{found}', expected '{expected}'")]
    PriorMismatch { expected: String, found: String },
    #[error("malformed prior payload: {0}")]
    MalformedPrior(String),
    #[error("click ({row},{col}) outside {width}x{height} image")]
    ClickOutOfBounds { row: usize, col: usize, width: usize, height: usize },
    #[error("segmenter returned no candidates")]
    NoCandidates,
    #[error("transport failure: {message}")]
    Transport { message: String, payload: Option<String> },
    #[error("protocol violation: {message}")]
    Protocol { message: String, payload: Option<String> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PriorHandle {
    pub tag: String,
    pub payload: Vec<u8>,
}

#[derive(Debug, Clone, Default)]
pub struct PromptSet {
    pub clicks: Vec<Click>,
    pub prior: Option<PriorHandle>,
}

impl PromptSet {
    pub fn from_clicks(clicks: Vec<Click>) -> Self {
        PromptSet { clicks, prior: None }
    }
}

/// One scored mask hypothesis.
#[derive(Debug, Clone)]
pub struct Candidate {
    pub mask: Mask,
    pub score: f64,
}

#[derive(Debug, Clone)]
pub struct SegResult {
    /// Never empty.
    pub candidates: Vec<Candidate>,
    pub prior: PriorHandle,
}

impl SegResult {
    /// First candidate attaining the maximum score.
    pub fn best(&self) -> &Candidate {
        let mut best = &self.candidates[0];
        for c in &self.candidates[1..] {
            if c.score > best.score {
                best = c;
            }
        }
        best
    }
}

pub trait Segmenter {
    /// Type tag recorded in prior handles.
    fn kind(&self) -> &'static str;
    fn predict(&self, image: &Image, prompts: &PromptSet) -> Result<SegResult, SegmenterError>;
}

fn check_clicks(image: &Image, clicks: &[Click]) -> Result<(), SegmenterError> {
    for c in clicks {
        if c.row >= image.height() || c.col >= image.width() {
            return Err(SegmenterError::ClickOutOfBounds {
                row: c.row,
                col: c.col,
                width: image.width(),
                height: image.height(),
            });
        }
    }
    Ok(())
}

fn check_tag(expected: &str, prior: &PriorHandle) -> Result<(), SegmenterError> {
    if prior.tag != expected {
        return Err(SegmenterError::PriorMismatch {
            expected: expected.to_string(),
            found: prior.tag.clone(),
        });
    }
    Ok(())
}

/// 1 - |before xor after| / |before or after|; 0 when both are empty. High
/// when a call barely changed the mask, which downstream uses as a cheap
/// convergence proxy.
fn churn_score(before: &Mask, after: &Mask) -> f64 {
    let denom = before.union_count(after);
    if denom == 0 {
        return 0.0;
    }
    1.0 - before.xor(after).count_ones() as f64 / denom as f64
}

// Prior payload layout shared by the built-ins: width u32, height u32,
// consumed-click count u32 (little endian), then the packed mask bits.
fn encode_state(mask: &Mask, consumed: u32) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + mask.area() / 8 + 8);
    out.extend((mask.width() as u32).to_le_bytes());
    out.extend((mask.height() as u32).to_le_bytes());
    out.extend(consumed.to_le_bytes());
    out.extend(mask.to_bytes());
    out
}

fn decode_state(payload: &[u8], image: &Image) -> Result<(Mask, u32), SegmenterError> {
    if payload.len() < 12 {
        return Err(SegmenterError::MalformedPrior("payload shorter than header".into()));
    }
    let w = u32::from_le_bytes(payload[0..4].try_into().unwrap()) as usize;
    let h = u32::from_le_bytes(payload[4..8].try_into().unwrap()) as usize;
    let consumed = u32::from_le_bytes(payload[8..12].try_into().unwrap());
    if w != image.width() || h != image.height() {
        return Err(SegmenterError::MalformedPrior(format!(
            "prior is {w}x{h} but image is {}x{}",
            image.width(),
            image.height()
        )));
    }
    let mask = Mask::from_bytes(w, h, &payload[12..])
        .map_err(|e| SegmenterError::MalformedPrior(e.to_string()))?;
    Ok((mask, consumed))
}

/// Paints (or erases) the closed rasterized disc dr^2 + dc^2 <= radius^2
/// around a center cell, clipped to the grid. Cell offsets are integers, so
/// the comparison against radius^2 is exact in f64 at desk scale.
pub fn stamp_disc(mask: &mut Mask, row: usize, col: usize, radius: f64, value: bool) {
    let radius = radius.max(0.0);
    let r2 = radius * radius;
    let reach = radius.floor() as isize;
    for dr in -reach..=reach {
        for dc in -reach..=reach {
            if (dr * dr + dc * dc) as f64 > r2 {
                continue;
            }
            let r = row as isize + dr;
            let c = col as isize + dc;
            if r >= 0 && c >= 0 && mask.contains(r as usize, c as usize) {
                mask.set(r as usize, c as usize, value);
            }
        }
    }
}

/// Paints a disc per positive click, erases one per negative click. Replays
/// only clicks newer than the prior's recorded count, so predictions are
/// prefix-consistent: extending a history gives the same mask as replaying
/// the extended history from scratch.
#[derive(Debug, Clone)]
pub struct DiscSegmenter {
    pub default_radius: f64,
}

impl DiscSegmenter {
    pub fn new(default_radius: f64) -> Self {
        DiscSegmenter { default_radius }
    }
}

impl Default for DiscSegmenter {
    fn default() -> Self {
        DiscSegmenter::new(4.0)
    }
}

impl Segmenter for DiscSegmenter {
    fn kind(&self) -> &'static str {
        "disc"
    }

    fn predict(&self, image: &Image, prompts: &PromptSet) -> Result<SegResult, SegmenterError> {
        check_clicks(image, &prompts.clicks)?;
        let (before, consumed) = match &prompts.prior {
            None => (Mask::new(image.width(), image.height()), 0),
            Some(p) => {
                check_tag(self.kind(), p)?;
                decode_state(&p.payload, image)?
            }
        };
        if consumed as usize > prompts.clicks.len() {
            return Err(SegmenterError::MalformedPrior(format!(
                "prior consumed {consumed} clicks but only {} provided",
                prompts.clicks.len()
            )));
        }
        let mut mask = before.clone();
        for click in &prompts.clicks[consumed as usize..] {
            let radius = click.radius_hint.unwrap_or(self.default_radius);
            stamp_disc(&mut mask, click.row, click.col, radius, click.polarity.is_positive());
        }
        let score = churn_score(&before, &mask);
        let prior = PriorHandle {
            tag: self.kind().to_string(),
            payload: encode_state(&mask, prompts.clicks.len() as u32),
        };
        Ok(SegResult { candidates: vec![Candidate { mask, score }], prior })
    }
}

/// Nearest-click rule: a pixel is foreground iff its distance to the nearest
/// positive click, minus `prior_bonus` when the prior marks it foreground,
/// is strictly less than its distance to the nearest negative click. With no
/// negative clicks the negative side is the distance to the image border,
/// measured to the nearest cell just outside the grid: min(r+1, h-r, c+1, w-c).
#[derive(Debug, Clone)]
pub struct SeededSegmenter {
    pub prior_bonus: f64,
}

impl SeededSegmenter {
    pub fn new(prior_bonus: f64) -> Self {
        SeededSegmenter { prior_bonus }
    }
}

impl Default for SeededSegmenter {
    fn default() -> Self {
        SeededSegmenter::new(2.0)
    }
}

impl Segmenter for SeededSegmenter {
    fn kind(&self) -> &'static str {
        "seeded"
    }

    fn predict(&self, image: &Image, prompts: &PromptSet) -> Result<SegResult, SegmenterError> {
        check_clicks(image, &prompts.clicks)?;
        let (w, h) = (image.width(), image.height());
        let before = match &prompts.prior {
            None => Mask::new(w, h),
            Some(p) => {
                check_tag(self.kind(), p)?;
                decode_state(&p.payload, image)?.0
            }
        };
        let pos: Vec<&Click> =
            prompts.clicks.iter().filter(|c| c.polarity == Polarity::Positive).collect();
        let neg: Vec<&Click> =
            prompts.clicks.iter().filter(|c| c.polarity == Polarity::Negative).collect();
        let dist = |r: usize, c: usize, clicks: &[&Click]| -> f64 {
            clicks
                .iter()
                .map(|k| {
                    ((r.abs_diff(k.row) * r.abs_diff(k.row)
                        + c.abs_diff(k.col) * c.abs_diff(k.col)) as f64)
                        .sqrt()
                })
                .fold(f64::INFINITY, f64::min)
        };
        let mask = Mask::from_fn(w, h, |r, c| {
            if pos.is_empty() {
                return false;
            }
            let d_pos = dist(r, c, &pos) - if before.get(r, c) { self.prior_bonus } else { 0.0 };
            let d_neg = if neg.is_empty() {
                ((r + 1).min(h - r).min(c + 1).min(w - c)) as f64
            } else {
                dist(r, c, &neg)
            };
            d_pos < d_neg
        });
        let score = churn_score(&before, &mask);
        let prior = PriorHandle {
            tag: self.kind().to_string(),
            payload: encode_state(&mask, prompts.clicks.len() as u32),
        };
        Ok(SegResult { candidates: vec![Candidate { mask, score }], prior })
    }
}
