//! The tagged-text agent protocol: a turn is a think block followed by
//! exactly one action or answer block. Parsing is strict about structure
//! (reward scoring rides on it), lenient only about whitespace between
//! blocks. Emission always uses the `<action>` spelling; `<tool_call>` is
//! accepted on input as an equivalent alias.

use crate::click::{to_pixel, Click, Polarity};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FormatError {
    #[error("missing <{0}> tag")]
    MissingTag(&'static str),
    #[error("missing closing </{0}> tag")]
    UnclosedTag(&'static str),
    #[error("tag <{0}> appears more than once")]
    DuplicateTag(&'static str),
    #[error("no action or answer block after the think block")]
    MissingPayload,
    #[error("turn contains more than one of action/tool_call/answer")]
    MultiplePayloads,
    #[error("<{first}> must close before <{second}> opens")]
    TagOrder { first: &'static str, second: &'static str },
    #[error("stray content outside tags at byte {offset}")]
    StrayContent { offset: usize },
    #[error("bad action: {0}")]
    BadAction(String),
}

/// One click request. `attribute` is +1 to grow the target's mask, -1 to
/// retract it; x and y are normalized to [0,1] (x rightward, y downward).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClickTriple {
    pub target: String,
    pub attribute: i8,
    pub x: f64,
    pub y: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
}

impl ClickTriple {
    pub fn polarity(&self) -> Polarity {
        if self.attribute >= 0 {
            Polarity::Positive
        } else {
            Polarity::Negative
        }
    }

    pub fn to_click(&self, width: usize, height: usize) -> Click {
        let (row, col) = to_pixel(self.x, self.y, width, height);
        Click { row, col, polarity: self.polarity(), radius_hint: self.radius }
    }
}

/// Either the end-of-interaction marker or a batch of click triples. A
/// revert-flagged batch asks the environment to undo the last click of each
/// named target instead of executing the triples.
#[derive(Debug, Clone, PartialEq)]
pub enum ActionSpec {
    End,
    Clicks { triples: Vec<ClickTriple>, revert: bool },
}

#[derive(Debug, Clone, PartialEq)]
pub enum TurnPayload {
    Action(ActionSpec),
    Answer(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedTurn {
    pub think: String,
    pub payload: TurnPayload,
}

// Wire shape of the action JSON. Field presence is validated after
// deserialization so every malformed combination reports what it saw.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ActionWire {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    end: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    clicks: Option<Vec<ClickTriple>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    revert: Option<bool>,
}

fn wire_to_spec(wire: ActionWire) -> Result<ActionSpec, String> {
    match (wire.end, wire.clicks, wire.revert) {
        (Some(true), None, None) => Ok(ActionSpec::End),
        (Some(true), _, _) => Err("\"end\" admits no other fields".into()),
        (Some(false), _, _) => Err("\"end\" must be true".into()),
        (None, Some(triples), revert) => {
            if triples.is_empty() {
                return Err("\"clicks\" must be non-empty".into());
            }
            for (i, t) in triples.iter().enumerate() {
                if t.attribute != 1 && t.attribute != -1 {
                    return Err(format!(
                        "clicks[{i}].attribute must be +1 or -1, got {}",
                        t.attribute
                    ));
                }
                for (name, v) in [("x", t.x), ("y", t.y)] {
                    if !(0.0..=1.0).contains(&v) {
                        return Err(format!("clicks[{i}].{name} must lie in [0,1], got {v}"));
                    }
                }
                if let Some(r) = t.radius {
                    if !r.is_finite() || r < 0.0 {
                        return Err(format!(
                            "clicks[{i}].radius must be a non-negative real, got {r}"
                        ));
                    }
                }
            }
            Ok(ActionSpec::Clicks { triples, revert: revert.unwrap_or(false) })
        }
        (None, None, _) => Err("action must set \"end\" or \"clicks\"".into()),
    }
}

fn spec_to_wire(spec: &ActionSpec) -> ActionWire {
    match spec {
        ActionSpec::End => ActionWire { end: Some(true), clicks: None, revert: None },
        ActionSpec::Clicks { triples, revert } => ActionWire {
            end: None,
            clicks: Some(triples.clone()),
            revert: revert.then_some(true),
        },
    }
}

// Serde goes through the wire shape so a spec embedded in a record obeys the
// same validation and canonical form as one inside an <action> block.
impl Serialize for ActionSpec {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        spec_to_wire(self).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ActionSpec {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let wire = ActionWire::deserialize(deserializer)?;
        wire_to_spec(wire).map_err(serde::de::Error::custom)
    }
}

pub fn parse_action(body: &str) -> Result<ActionSpec, FormatError> {
    let wire: ActionWire =
        serde_json::from_str(body).map_err(|e| FormatError::BadAction(e.to_string()))?;
    wire_to_spec(wire).map_err(FormatError::BadAction)
}

/// Canonical JSON for an action. Parsing its output returns an equal spec,
/// and rendering is deterministic, so render-parse-render is a fixed point.
pub fn render_action(spec: &ActionSpec) -> String {
    serde_json::to_string(spec).expect("action wire form always serializes")
}

pub fn render_turn(turn: &ParsedTurn) -> String {
    let payload = match &turn.payload {
        TurnPayload::Action(spec) => format!("<action>{}</action>", render_action(spec)),
        TurnPayload::Answer(text) => format!("<answer>{text}</answer>"),
    };
    format!("<think>{}</think>{payload}", turn.think)
}

fn count(text: &str, needle: &str) -> usize {
    text.match_indices(needle).count()
}

/// Locates `<tag>body</tag>`, requiring exactly one occurrence of each tag.
fn extract<'t>(text: &'t str, tag: &'static str) -> Result<(usize, usize, &'t str), FormatError> {
    let open = format!("<{tag}>");
    let close = format!("</{tag}>");
    match count(text, &open) {
        0 => return Err(FormatError::MissingTag(tag)),
        1 => {}
        _ => return Err(FormatError::DuplicateTag(tag)),
    }
    match count(text, &close) {
        0 => return Err(FormatError::UnclosedTag(tag)),
        1 => {}
        _ => return Err(FormatError::DuplicateTag(tag)),
    }
    let start = text.find(&open).unwrap();
    let end = text.find(&close).unwrap();
    if end < start + open.len() {
        return Err(FormatError::TagOrder { first: tag, second: tag });
    }
    Ok((start, end + close.len(), &text[start + open.len()..end]))
}

fn whitespace_only(text: &str, base: usize) -> Result<(), FormatError> {
    match text.find(|c: char| !c.is_whitespace()) {
        None => Ok(()),
        Some(i) => Err(FormatError::StrayContent { offset: base + i }),
    }
}

/// Splits a turn into its think text and payload. Structure errors carry the
/// first offending tag or byte offset; they are what the format reward
/// scores as zero.
pub fn parse_agent_output(text: &str) -> Result<ParsedTurn, FormatError> {
    let (think_start, think_end, think) = extract(text, "think")?;
    let present: Vec<&'static str> = ["action", "tool_call", "answer"]
        .into_iter()
        .filter(|tag| count(text, &format!("<{tag}>")) + count(text, &format!("</{tag}>")) > 0)
        .collect();
    let tag = match present.as_slice() {
        [] => return Err(FormatError::MissingPayload),
        [one] => *one,
        _ => return Err(FormatError::MultiplePayloads),
    };
    let (payload_start, payload_end, body) = extract(text, tag)?;
    if payload_start < think_end {
        return Err(FormatError::TagOrder { first: "think", second: tag });
    }
    whitespace_only(&text[..think_start], 0)?;
    whitespace_only(&text[think_end..payload_start], think_end)?;
    whitespace_only(&text[payload_end..], payload_end)?;
    let payload = match tag {
        "answer" => TurnPayload::Answer(body.to_string()),
        _ => TurnPayload::Action(parse_action(body)?),
    };
    Ok(ParsedTurn { think: think.to_string(), payload })
}
