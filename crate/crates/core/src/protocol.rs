//! The ten-question creative evaluation protocol, annotator answers, and
//! their validation.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::sync::OnceLock;
use thiserror::Error;

use crate::model::Label;

pub const PROTOCOL_VERSION: &str = "protocol-v1";
pub const NUM_QUESTIONS: u8 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Section {
    Similarity,
    ImageTextConsistence,
    ImageQuality,
    Conclusion,
}

impl Section {
    pub fn heading(self) -> &'static str {
        match self {
            Section::Similarity => "Q 1--2. Similarity",
            Section::ImageTextConsistence => "Q 3--4. Image-Text Consistence",
            Section::ImageQuality => "Q 5--9. Image Quality",
            Section::Conclusion => "Q 10. Conclusion",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerDomain {
    YesNo,
    ThreeWay,
    AOrB,
}

impl AnswerDomain {
    /// Allowed values, in the order they are listed on the form.
    pub fn options(self) -> &'static [AnswerValue] {
        match self {
            AnswerDomain::YesNo => &[AnswerValue::Yes, AnswerValue::No],
            AnswerDomain::ThreeWay => &[AnswerValue::Better, AnswerValue::Same, AnswerValue::Worse],
            AnswerDomain::AOrB => &[AnswerValue::A, AnswerValue::B],
        }
    }

    pub fn admits(self, value: &AnswerValue) -> bool {
        self.options().contains(value)
    }
}

/// One recorded answer. Strings outside every domain deserialize to
/// `Other` so that validation can report them instead of failing to parse.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "String", into = "String")]
pub enum AnswerValue {
    Yes,
    No,
    /// `A>B`
    Better,
    /// `A=B`
    Same,
    /// `A<B`
    Worse,
    A,
    B,
    Other(String),
}

impl AnswerValue {
    pub fn token(&self) -> &str {
        match self {
            AnswerValue::Yes => "YES",
            AnswerValue::No => "NO",
            AnswerValue::Better => "A>B",
            AnswerValue::Same => "A=B",
            AnswerValue::Worse => "A<B",
            AnswerValue::A => "A",
            AnswerValue::B => "B",
            AnswerValue::Other(s) => s,
        }
    }

    pub fn from_comparison(a: u8, b: u8) -> Self {
        match a.cmp(&b) {
            std::cmp::Ordering::Greater => AnswerValue::Better,
            std::cmp::Ordering::Equal => AnswerValue::Same,
            std::cmp::Ordering::Less => AnswerValue::Worse,
        }
    }

    pub fn as_label(&self) -> Option<Label> {
        match self {
            AnswerValue::A => Some(Label::A),
            AnswerValue::B => Some(Label::B),
            _ => None,
        }
    }
}

impl From<Label> for AnswerValue {
    fn from(l: Label) -> Self {
        match l {
            Label::A => AnswerValue::A,
            Label::B => AnswerValue::B,
        }
    }
}

impl From<String> for AnswerValue {
    fn from(s: String) -> Self {
        match s.as_str() {
            "YES" => AnswerValue::Yes,
            "NO" => AnswerValue::No,
            "A>B" => AnswerValue::Better,
            "A=B" => AnswerValue::Same,
            "A<B" => AnswerValue::Worse,
            "A" => AnswerValue::A,
            "B" => AnswerValue::B,
            _ => AnswerValue::Other(s),
        }
    }
}

impl From<&str> for AnswerValue {
    fn from(s: &str) -> Self {
        AnswerValue::from(s.to_string())
    }
}

impl From<AnswerValue> for String {
    fn from(v: AnswerValue) -> Self {
        match v {
            AnswerValue::Other(s) => s,
            v => v.token().to_string(),
        }
    }
}

impl fmt::Display for AnswerValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProtocolQuestion {
    pub index: u8,
    pub section: Section,
    /// Short name of the inspected dimension.
    pub dimension: String,
    pub text: String,
    pub answer_domain: AnswerDomain,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProtocolDocument {
    pub version: String,
    pub sections: Vec<Section>,
    pub questions: Vec<ProtocolQuestion>,
}

const QUESTIONS: [(u8, Section, &str, &str, AnswerDomain); 10] = [
    (1, Section::Similarity, "Same", "Are the two images the same?", AnswerDomain::YesNo),
    (
        2,
        Section::Similarity,
        "Very Similar",
        "The two images are very similar, making it impossible to make a judgment?",
        AnswerDomain::YesNo,
    ),
    (
        3,
        Section::ImageTextConsistence,
        "Query Hit Rate",
        "The hit rate of image content on query (based on text in the image; elements in the image; conveyed visual style)",
        AnswerDomain::ThreeWay,
    ),
    (
        4,
        Section::ImageTextConsistence,
        "Title Hit Rate",
        "The hit rate of image content on title (based on text in the image; elements in the image; conveyed visual style)",
        AnswerDomain::ThreeWay,
    ),
    (
        5,
        Section::ImageQuality,
        "Text in Image",
        "Text in Image (whether the image contains product information text; whether it addresses user pain points, such as promises of no additives, home delivery, seven-day no-questions-asked returns, compensation for fakes, price matching guarantees, etc.; whether it highlights product selling points, such as functionality, production process, material composition, and usage effects; whether it includes calls to action, such as promotional activities, giveaway activities, and purchase guidance; whether it clearly indicates applicable scenarios)",
        AnswerDomain::ThreeWay,
    ),
    (
        6,
        Section::ImageQuality,
        "Models and Props",
        "Models and Props (whether there are models/props; whether the appearance of models/props highlights the function of the product)",
        AnswerDomain::ThreeWay,
    ),
    (
        7,
        Section::ImageQuality,
        "Layout",
        "Layout (whether the image has decorative/marketing borders; whether there is picture-in-picture, such as detail images or freebie overlays)",
        AnswerDomain::ThreeWay,
    ),
    (
        8,
        Section::ImageQuality,
        "Product Subject",
        "Product Subject (ideal display effects: centered position, moderate size, suitable angle, complete subject; product quantity: multiple types/multiple colors > single type/single color; product usage state: method/state display > static display)",
        AnswerDomain::ThreeWay,
    ),
    (
        9,
        Section::ImageQuality,
        "Background Design",
        "Background Design (background color: high-end tones > solid colors, low-key colors > bright colors, ensuring the product is the visual focus; scene and atmosphere: consistent with the product > inconsistent; background image: clean and aesthetically pleasing > cluttered)",
        AnswerDomain::ThreeWay,
    ),
    (
        10,
        Section::Conclusion,
        "Conclusion",
        "Which image is the user more likely to click on?",
        AnswerDomain::AOrB,
    ),
];

/// The ten protocol questions in order.
pub fn protocol() -> &'static [ProtocolQuestion] {
    static PROTOCOL: OnceLock<Vec<ProtocolQuestion>> = OnceLock::new();
    PROTOCOL.get_or_init(|| {
        QUESTIONS
            .iter()
            .map(|&(index, section, dimension, text, answer_domain)| ProtocolQuestion {
                index,
                section,
                dimension: dimension.to_string(),
                text: text.to_string(),
                answer_domain,
            })
            .collect()
    })
}

pub fn question(index: u8) -> Option<&'static ProtocolQuestion> {
    protocol().get(usize::from(index).checked_sub(1)?)
}

pub fn protocol_document() -> ProtocolDocument {
    ProtocolDocument {
        version: PROTOCOL_VERSION.to_string(),
        sections: vec![
            Section::Similarity,
            Section::ImageTextConsistence,
            Section::ImageQuality,
            Section::Conclusion,
        ],
        questions: protocol().to_vec(),
    }
}

/// Plain-text rendering used inside model prompts.
pub fn protocol_text() -> String {
    let mut out = String::from("Creative Evaluation Protocol:");
    let mut section = None;
    for q in protocol() {
        if section != Some(q.section) {
            section = Some(q.section);
            out.push('\n');
            out.push_str(q.section.heading());
        }
        let options: Vec<&str> = q.answer_domain.options().iter().map(|o| o.token()).collect();
        out.push_str(&format!("\n{}. {} [{}]", q.index, q.text, options.join(" / ")));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ProtocolAnswers {
    pub answers: BTreeMap<u8, AnswerValue>,
    #[serde(default)]
    pub annotator_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub elapsed_ms: Option<BTreeMap<u8, u64>>,
}

impl ProtocolAnswers {
    pub fn new(annotator_id: impl Into<String>) -> Self {
        Self {
            annotator_id: annotator_id.into(),
            ..Self::default()
        }
    }

    pub fn with(mut self, index: u8, value: impl Into<AnswerValue>) -> Self {
        self.answers.insert(index, value.into());
        self
    }

    pub fn get(&self, index: u8) -> Option<&AnswerValue> {
        self.answers.get(&index)
    }

    /// The Q10 verdict, when present and in domain.
    pub fn conclusion(&self) -> Option<Label> {
        self.get(NUM_QUESTIONS).and_then(AnswerValue::as_label)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "code", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AnswerViolation {
    Domain { question: u8, value: String },
    Missing { question: u8 },
    Extraneous { question: u8 },
}

impl AnswerViolation {
    pub fn code(&self) -> &'static str {
        match self {
            AnswerViolation::Domain { .. } => "DOMAIN",
            AnswerViolation::Missing { .. } => "MISSING",
            AnswerViolation::Extraneous { .. } => "EXTRANEOUS",
        }
    }

    pub fn question(&self) -> u8 {
        match self {
            AnswerViolation::Domain { question, .. }
            | AnswerViolation::Missing { question }
            | AnswerViolation::Extraneous { question } => *question,
        }
    }
}

impl fmt::Display for AnswerViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AnswerViolation::Domain { question, value } => {
                write!(f, "DOMAIN: Q{question} = {value:?}")
            }
            AnswerViolation::Missing { question } => write!(f, "MISSING: Q{question}"),
            AnswerViolation::Extraneous { question } => write!(f, "EXTRANEOUS: Q{question}"),
        }
    }
}

/// Reports out-of-domain values, unknown question indices, and questions
/// that must be answered but are not. After a YES on Q1 or Q2 the remaining
/// questions are optional.
pub fn validate_answers(answers: &ProtocolAnswers) -> Vec<AnswerViolation> {
    let mut out = Vec::new();
    for (&index, value) in &answers.answers {
        match question(index) {
            None => out.push(AnswerViolation::Extraneous { question: index }),
            Some(q) if !q.answer_domain.admits(value) => out.push(AnswerViolation::Domain {
                question: index,
                value: value.token().to_string(),
            }),
            Some(_) => {}
        }
    }
    let exited = [1, 2]
        .iter()
        .any(|i| answers.get(*i) == Some(&AnswerValue::Yes));
    let required = if exited { 1..=2 } else { 1..=NUM_QUESTIONS };
    for index in required {
        if !answers.answers.contains_key(&index) {
            out.push(AnswerViolation::Missing { question: index });
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProtocolError {
    #[error("MISSING: Q{0} is not answered")]
    Missing(u8),
}

/// True iff Q1 or Q2 is YES: the pair is indistinguishable and leaves the dataset.
pub fn early_exit(answers: &ProtocolAnswers) -> Result<bool, ProtocolError> {
    let q1 = answers.get(1).ok_or(ProtocolError::Missing(1))?;
    let q2 = answers.get(2).ok_or(ProtocolError::Missing(2))?;
    Ok(*q1 == AnswerValue::Yes || *q2 == AnswerValue::Yes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn full(q10: &str) -> ProtocolAnswers {
        let mut a = ProtocolAnswers::new("ann").with(1, "NO").with(2, "NO");
        for q in 3..=9 {
            a = a.with(q, "A>B");
        }
        a.with(10, q10)
    }

    #[test]
    fn ten_questions_with_sections() {
        let p = protocol();
        assert_eq!(p.len(), 10);
        assert_eq!(p[9].answer_domain.options(), &[AnswerValue::A, AnswerValue::B]);
        assert_eq!(p[2].section, Section::ImageTextConsistence);
        for q in p {
            let (section, domain) = match q.index {
                1..=2 => (Section::Similarity, AnswerDomain::YesNo),
                3..=4 => (Section::ImageTextConsistence, AnswerDomain::ThreeWay),
                5..=9 => (Section::ImageQuality, AnswerDomain::ThreeWay),
                _ => (Section::Conclusion, AnswerDomain::AOrB),
            };
            assert_eq!((q.section, q.answer_domain), (section, domain), "Q{}", q.index);
        }
        assert_eq!(p[9].text, "Which image is the user more likely to click on?");
    }

    #[test]
    fn document_round_trips() {
        let doc = protocol_document();
        let json = serde_json::to_string(&doc).unwrap();
        let back: ProtocolDocument = serde_json::from_str(&json).unwrap();
        assert_eq!(back, doc);
        assert_eq!(serde_json::to_string(&back).unwrap(), json);
    }

    #[test]
    fn early_exit_allows_absent_rest() {
        let a = ProtocolAnswers::new("x").with(1, "YES").with(2, "NO");
        assert!(validate_answers(&a).is_empty());
        assert!(early_exit(&a).unwrap());
    }

    #[test]
    fn domain_violation() {
        let mut a = full("A");
        a.answers.insert(5, "YES".into());
        let v = validate_answers(&a);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].code(), "DOMAIN");
        assert_eq!(v[0].question(), 5);
    }

    #[test]
    fn missing_and_extraneous() {
        let mut a = full("B");
        a.answers.remove(&7);
        a.answers.insert(11, "A".into());
        let codes: Vec<_> = validate_answers(&a).iter().map(|v| v.code()).collect();
        assert_eq!(codes, vec!["EXTRANEOUS", "MISSING"]);
    }

    #[test]
    fn early_exit_truth_table() {
        let mk = |a: &str, b: &str| ProtocolAnswers::new("x").with(1, a).with(2, b);
        assert!(early_exit(&mk("NO", "YES")).unwrap());
        assert!(!early_exit(&mk("NO", "NO")).unwrap());
        assert!(early_exit(&mk("YES", "YES")).unwrap());
        assert_eq!(
            early_exit(&ProtocolAnswers::new("x").with(1, "NO")),
            Err(ProtocolError::Missing(2))
        );
    }

    #[test]
    fn unknown_strings_survive_deserialization() {
        let a: ProtocolAnswers =
            serde_json::from_str(r#"{"answers":{"1":"maybe"},"annotator_id":"z"}"#).unwrap();
        assert_eq!(a.get(1), Some(&AnswerValue::Other("maybe".into())));
        assert_eq!(serde_json::to_string(&a).unwrap(), r#"{"answers":{"1":"maybe"},"annotator_id":"z"}"#);
    }

    #[test]
    fn protocol_text_has_no_image_placeholder() {
        let t = protocol_text();
        assert!(!t.contains("<image>"));
        assert!(t.contains("10. Which image is the user more likely to click on? [A / B]"));
    }
}
