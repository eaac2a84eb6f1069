//! Shared domain types for creative pair records.
//!
//! Every other module reads and writes these types. The canonical on-disk
//! form is one [`CreativePairSample`] per line of JSON (see [`crate::io`]).

use serde::{Deserialize, Serialize};
use std::fmt;

use crate::protocol::{self, ProtocolAnswers};
use crate::taxonomy;

/// Which of the two creatives in a pair won.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    A,
    B,
}

impl Label {
    pub fn letter(self) -> &'static str {
        match self {
            Label::A => "A",
            Label::B => "B",
        }
    }

    pub fn flip(self) -> Label {
        match self {
            Label::A => Label::B,
            Label::B => Label::A,
        }
    }

    pub fn from_letter(s: &str) -> Option<Label> {
        match s {
            "A" => Some(Label::A),
            "B" => Some(Label::B),
            _ => None,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.letter())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Split {
    Train,
    Test,
    #[default]
    Unassigned,
}

/// An advertising image, referenced rather than decoded. `descriptor` holds
/// feature tags from the creative feature taxonomy in place of pixels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CreativeImageRef {
    pub id: String,
    pub uri: String,
    #[serde(default)]
    pub descriptor: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width_px: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height_px: Option<u32>,
}

impl CreativeImageRef {
    pub fn new(id: impl Into<String>, uri: impl Into<String>, descriptor: Vec<String>) -> Self {
        Self {
            id: id.into(),
            uri: uri.into(),
            descriptor,
            width_px: None,
            height_px: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ProductContext {
    pub title: String,
    #[serde(default)]
    pub query_terms: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExposureStats {
    /// Impressions.
    pub pv: u64,
    pub ctr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreativePairSample {
    pub pair_id: String,
    pub product_id: String,
    pub context: ProductContext,
    pub image_a: CreativeImageRef,
    pub image_b: CreativeImageRef,
    #[serde(default)]
    pub stats_a: Option<ExposureStats>,
    #[serde(default)]
    pub stats_b: Option<ExposureStats>,
    #[serde(default)]
    pub label: Option<Label>,
    #[serde(default)]
    pub annotations: Option<ProtocolAnswers>,
    #[serde(default)]
    pub cot: Option<String>,
    #[serde(default)]
    pub split: Split,
}

impl CreativePairSample {
    /// The side with the higher CTR, or `None` when stats are missing or equal.
    pub fn label_from_ctr(&self) -> Option<Label> {
        let (a, b) = (self.stats_a?, self.stats_b?);
        if a.ctr > b.ctr {
            Some(Label::A)
        } else if b.ctr > a.ctr {
            Some(Label::B)
        } else {
            None
        }
    }
}

/// Composite rule-based reward for one response.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub format_reward: u8,
    pub accuracy_reward: u8,
    pub alpha: f64,
    pub total: f64,
}

impl RewardBreakdown {
    /// Builds a breakdown, zeroing accuracy when the format check failed.
    pub fn new(format_reward: bool, accuracy_reward: bool, alpha: f64) -> Self {
        let format_reward = u8::from(format_reward);
        let accuracy_reward = u8::from(accuracy_reward) & format_reward;
        Self {
            format_reward,
            accuracy_reward,
            alpha,
            total: Self::combine(format_reward, accuracy_reward, alpha),
        }
    }

    fn combine(format_reward: u8, accuracy_reward: u8, alpha: f64) -> f64 {
        f64::from(format_reward) + alpha * f64::from(accuracy_reward)
    }

    /// True when `total` equals the recomputation from the parts.
    pub fn is_consistent(&self) -> bool {
        self.format_reward <= 1
            && self.accuracy_reward <= self.format_reward
            && self.total == Self::combine(self.format_reward, self.accuracy_reward, self.alpha)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ViolationCode {
    EmptyId,
    DuplicateImage,
    UnknownTag,
    NonPositiveDimension,
    EmptyTitle,
    CtrRange,
    MissingLabel,
    LabelConflict,
    CotWithoutAnnotations,
    InvalidAnswers,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub code: ViolationCode,
    pub detail: String,
}

impl Violation {
    fn new(code: ViolationCode, detail: impl Into<String>) -> Self {
        Self {
            code,
            detail: detail.into(),
        }
    }
}

/// Checks every record-level invariant. An empty vector means the sample is valid.
pub fn validate_sample(sample: &CreativePairSample) -> Vec<Violation> {
    let mut out = Vec::new();
    for (field, value) in [
        ("pair_id", &sample.pair_id),
        ("product_id", &sample.product_id),
        ("image_a.id", &sample.image_a.id),
        ("image_b.id", &sample.image_b.id),
    ] {
        if value.is_empty() {
            out.push(Violation::new(ViolationCode::EmptyId, field));
        }
    }
    if !sample.image_a.id.is_empty() && sample.image_a.id == sample.image_b.id {
        out.push(Violation::new(
            ViolationCode::DuplicateImage,
            format!("both images are {}", sample.image_a.id),
        ));
    }
    let tax = taxonomy::taxonomy();
    for (slot, image) in [("image_a", &sample.image_a), ("image_b", &sample.image_b)] {
        for tag in &image.descriptor {
            if !tax.contains_value(tag) {
                out.push(Violation::new(
                    ViolationCode::UnknownTag,
                    format!("{slot}: {tag}"),
                ));
            }
        }
        if image.width_px == Some(0) || image.height_px == Some(0) {
            out.push(Violation::new(ViolationCode::NonPositiveDimension, slot));
        }
    }
    if sample.context.title.trim().is_empty() {
        out.push(Violation::new(ViolationCode::EmptyTitle, "context.title"));
    }
    for (slot, stats) in [("stats_a", &sample.stats_a), ("stats_b", &sample.stats_b)] {
        if let Some(s) = stats {
            if !(0.0..=1.0).contains(&s.ctr) {
                out.push(Violation::new(
                    ViolationCode::CtrRange,
                    format!("{slot}.ctr = {}", s.ctr),
                ));
            }
        }
    }
    if let Some(answers) = &sample.annotations {
        let answer_violations = protocol::validate_answers(answers);
        if !answer_violations.is_empty() {
            let codes: Vec<String> = answer_violations.iter().map(|v| v.to_string()).collect();
            out.push(Violation::new(ViolationCode::InvalidAnswers, codes.join("; ")));
        }
        match (sample.label, answers.conclusion()) {
            (None, _) => out.push(Violation::new(ViolationCode::MissingLabel, "annotated sample")),
            (Some(label), Some(verdict)) if label != verdict => out.push(Violation::new(
                ViolationCode::LabelConflict,
                format!("label {label}, Q10 {verdict}"),
            )),
            _ => {}
        }
    }
    if sample.cot.is_some() && sample.annotations.is_none() {
        out.push(Violation::new(ViolationCode::CotWithoutAnnotations, "cot"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> CreativePairSample {
        CreativePairSample {
            pair_id: "p1".into(),
            product_id: "sku1".into(),
            context: ProductContext {
                title: "Cotton socks".into(),
                query_terms: vec!["soft".into()],
            },
            image_a: CreativeImageRef::new("a", "img://a", vec!["Static Display".into()]),
            image_b: CreativeImageRef::new("b", "img://b", vec!["Handheld Display".into()]),
            stats_a: Some(ExposureStats { pv: 2000, ctr: 0.08 }),
            stats_b: Some(ExposureStats { pv: 3000, ctr: 0.04 }),
            label: Some(Label::A),
            annotations: None,
            cot: None,
            split: Split::Unassigned,
        }
    }

    fn codes(s: &CreativePairSample) -> Vec<ViolationCode> {
        validate_sample(s).into_iter().map(|v| v.code).collect()
    }

    #[test]
    fn duplicate_image() {
        let mut s = sample();
        s.image_b.id = "a".into();
        assert_eq!(codes(&s), vec![ViolationCode::DuplicateImage]);
    }

    #[test]
    fn ctr_out_of_range() {
        let mut s = sample();
        s.stats_a = Some(ExposureStats { pv: 10, ctr: 1.2 });
        assert_eq!(codes(&s), vec![ViolationCode::CtrRange]);
    }

    #[test]
    fn unknown_tag_and_zero_width() {
        let mut s = sample();
        s.image_a.descriptor.push("Sparkles".into());
        s.image_b.width_px = Some(0);
        assert_eq!(
            codes(&s),
            vec![ViolationCode::UnknownTag, ViolationCode::NonPositiveDimension]
        );
    }

    #[test]
    fn cot_needs_annotations() {
        let mut s = sample();
        s.cot = Some("text".into());
        assert_eq!(codes(&s), vec![ViolationCode::CotWithoutAnnotations]);
    }

    #[test]
    fn validation_is_pure() {
        let mut s = sample();
        s.image_b.id = "a".into();
        s.context.title = " ".into();
        assert_eq!(validate_sample(&s), validate_sample(&s));
    }

    #[test]
    fn reward_breakdown_gating() {
        let r = RewardBreakdown::new(false, true, 0.2);
        assert_eq!(r.accuracy_reward, 0);
        assert_eq!(r.total, 0.0);
        let r = RewardBreakdown::new(true, true, 0.2);
        assert_eq!(r.total, 1.2);
        assert!(r.is_consistent());
    }

    #[test]
    fn enums_serialize_uppercase() {
        assert_eq!(serde_json::to_string(&Split::Train).unwrap(), "\"TRAIN\"");
        assert_eq!(serde_json::to_string(&Label::B).unwrap(), "\"B\"");
        let s = sample();
        let line = serde_json::to_string(&s).unwrap();
        assert!(line.contains("\"split\":\"UNASSIGNED\""));
        let back: CreativePairSample = serde_json::from_str(&line).unwrap();
        assert_eq!(back, s);
    }
}
