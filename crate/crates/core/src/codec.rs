//! Structured response parsing and rule-based rewards.
//!
//! Grammar (after trimming surrounding whitespace):
//!
//! ```text
//! response := "<think>" THINK "</think>" WS* "<answer>" ANSWER "</answer>"
//! THINK    := any text not containing "</think>"
//! ANSWER   := any text not containing "</answer>"; trimmed when captured
//! WS       := Unicode whitespace
//! ```
//!
//! Nothing else may appear at top level. The format reward is 1 exactly when
//! this parse succeeds; the accuracy reward additionally requires the trimmed
//! answer to be the single letter of the label, compared case-insensitively.

use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

use crate::model::{Label, RewardBreakdown};

pub const THINK_OPEN: &str = "<think>";
pub const THINK_CLOSE: &str = "</think>";
pub const ANSWER_OPEN: &str = "<answer>";
pub const ANSWER_CLOSE: &str = "</answer>";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructuredResponse {
    pub think: String,
    pub answer: String,
    pub raw: String,
}

impl StructuredResponse {
    pub fn answer_label(&self) -> Option<Label> {
        match self.answer.to_uppercase().as_str() {
            "A" => Some(Label::A),
            "B" => Some(Label::B),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MalformedReason {
    MissingTag,
    Order,
    StrayContent,
    TrailingContent,
    DuplicateBlock,
}

impl fmt::Display for MalformedReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            MalformedReason::MissingTag => "MISSING_TAG",
            MalformedReason::Order => "ORDER",
            MalformedReason::StrayContent => "STRAY_CONTENT",
            MalformedReason::TrailingContent => "TRAILING_CONTENT",
            MalformedReason::DuplicateBlock => "DUPLICATE_BLOCK",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("MALFORMED({0})")]
pub struct Malformed(pub MalformedReason);

/// Renders `think` and `answer` in the canonical output shape.
pub fn render(think: &str, answer: &str) -> String {
    format!("{THINK_OPEN}{think}{THINK_CLOSE}{ANSWER_OPEN}{answer}{ANSWER_CLOSE}")
}

pub fn parse(raw: &str) -> Result<StructuredResponse, Malformed> {
    use MalformedReason::*;
    let s = raw.trim();
    let Some(after_open) = s.strip_prefix(THINK_OPEN) else {
        return Err(Malformed(if s.starts_with(ANSWER_OPEN) && s.contains(THINK_OPEN) {
            Order
        } else if s.contains(THINK_OPEN) {
            StrayContent
        } else {
            MissingTag
        }));
    };
    let (think, rest) = after_open.split_once(THINK_CLOSE).ok_or(Malformed(MissingTag))?;
    let rest = rest.trim_start();
    let Some(after_answer) = rest.strip_prefix(ANSWER_OPEN) else {
        return Err(Malformed(if rest.starts_with(THINK_OPEN) {
            DuplicateBlock
        } else if rest.contains(ANSWER_OPEN) {
            StrayContent
        } else {
            MissingTag
        }));
    };
    let (answer, tail) = after_answer.split_once(ANSWER_CLOSE).ok_or(Malformed(MissingTag))?;
    let tail = tail.trim();
    if !tail.is_empty() {
        return Err(Malformed(
            if tail.starts_with(THINK_OPEN) || tail.starts_with(ANSWER_OPEN) {
                DuplicateBlock
            } else {
                TrailingContent
            },
        ));
    }
    Ok(StructuredResponse {
        think: think.to_string(),
        answer: answer.trim().to_string(),
        raw: raw.to_string(),
    })
}

pub fn format_reward(raw: &str) -> u8 {
    u8::from(parse(raw).is_ok())
}

pub fn accuracy_reward(raw: &str, label: Label) -> u8 {
    match parse(raw) {
        Ok(r) => u8::from(r.answer_label() == Some(label)),
        Err(_) => 0,
    }
}

/// Format reward plus `alpha` times the accuracy reward.
pub fn total_reward(raw: &str, label: Label, alpha: f64) -> RewardBreakdown {
    let parsed = parse(raw);
    let correct = parsed
        .as_ref()
        .map(|r| r.answer_label() == Some(label))
        .unwrap_or(false);
    RewardBreakdown::new(parsed.is_ok(), correct, alpha)
}
