//! Chain-of-thought rendering from protocol answers.
//!
//! Template mode writes one paragraph per question. Each paragraph ends with
//! a fixed frame `Verdict for Q<n>: <token>.` so verdicts can be read back
//! unambiguously with [`extract_verdicts`]. Polisher mode hands the template
//! to an external client and rejects any rewrite whose verdicts no longer
//! match the answers.

use regex::Regex;
use std::collections::BTreeMap;
use std::sync::OnceLock;
use thiserror::Error;

use crate::client::{ClientError, TextClient};
use crate::model::{CreativeImageRef, CreativePairSample};
use crate::protocol::{self, AnswerValue, ProtocolAnswers};
use crate::taxonomy;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CotError {
    #[error("answers are invalid: {0}")]
    InvalidAnswers(String),
    #[error("pair exited early at Q1/Q2; nothing to reason about")]
    EarlyExit,
    #[error("POLISH_INCONSISTENT: Q{question} expected {expected}, found {found}")]
    PolishInconsistent {
        question: u8,
        expected: String,
        found: String,
    },
    #[error("CLIENT_ERROR: {0}")]
    Client(#[from] ClientError),
}

fn verdict_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"Verdict for Q(\d+): (YES|NO|A>B|A=B|A<B|A|B)\.").expect("static regex")
    })
}

/// Every `Verdict for Q<n>: <token>.` occurrence, in text order.
pub fn extract_verdict_list(text: &str) -> Vec<(u8, AnswerValue)> {
    verdict_pattern()
        .captures_iter(text)
        .filter_map(|c| {
            let q: u8 = c[1].parse().ok()?;
            Some((q, AnswerValue::from(&c[2])))
        })
        .collect()
}

/// Verdicts keyed by question. Later occurrences overwrite earlier ones; use
/// [`extract_verdict_list`] to see conflicts.
pub fn extract_verdicts(text: &str) -> BTreeMap<u8, AnswerValue> {
    extract_verdict_list(text).into_iter().collect()
}

fn tags_or_none(image: &CreativeImageRef) -> String {
    if image.descriptor.is_empty() {
        "no tagged elements".to_string()
    } else {
        image.descriptor.join(", ")
    }
}

fn level_phrase(image: &CreativeImageRef, question: u8) -> String {
    let dim = taxonomy::scored_dimension(question).expect("Q3-Q9 are scored");
    match dim.level_of(&image.descriptor) {
        Some(level) => format!("\"{}\"", dim.levels[usize::from(level)]),
        None => format!("no {} attribute", dim.subcategory.to_lowercase()),
    }
}

fn paragraph(sample: &CreativePairSample, question: u8, verdict: &AnswerValue) -> String {
    let q = protocol::question(question).expect("valid index");
    let (a, b) = (&sample.image_a, &sample.image_b);
    let evidence = match question {
        1 | 2 => format!(
            "Creative A shows {}; Creative B shows {}.",
            tags_or_none(a),
            tags_or_none(b)
        ),
        3 => format!(
            "Against the high-frequency queries \"{}\", Creative A shows {} while Creative B shows {}.",
            sample.context.query_terms.join(", "),
            level_phrase(a, 3),
            level_phrase(b, 3)
        ),
        4 => format!(
            "Against the product title \"{}\", Creative A shows {} while Creative B shows {}.",
            sample.context.title,
            level_phrase(a, 4),
            level_phrase(b, 4)
        ),
        5..=9 => format!(
            "Creative A shows {} while Creative B shows {}.",
            level_phrase(a, question),
            level_phrase(b, question)
        ),
        _ => {
            let winner = verdict.as_label().map(|l| l.letter()).unwrap_or("?");
            format!(
                "Weighing the comparisons above for \"{}\", the user is more likely to click Creative {winner}.",
                sample.context.title
            )
        }
    };
    format!(
        "Q{question} ({}): {evidence} Verdict for Q{question}: {}.",
        q.dimension,
        verdict.token()
    )
}

/// Deterministic template rendering.
pub fn render_template(sample: &CreativePairSample, answers: &ProtocolAnswers) -> Result<String, CotError> {
    let violations = protocol::validate_answers(answers);
    if !violations.is_empty() {
        let text: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
        return Err(CotError::InvalidAnswers(text.join("; ")));
    }
    if protocol::early_exit(answers).map_err(|e| CotError::InvalidAnswers(e.to_string()))? {
        return Err(CotError::EarlyExit);
    }
    let paragraphs: Vec<String> = answers
        .answers
        .iter()
        .map(|(&q, v)| paragraph(sample, q, v))
        .collect();
    Ok(paragraphs.join("\n\n"))
}

/// Checks that `text` states exactly the recorded verdict for every answered
/// question and never contradicts it.
pub fn check_consistency(text: &str, answers: &ProtocolAnswers) -> Result<(), CotError> {
    let found = extract_verdict_list(text);
    for (&q, expected) in &answers.answers {
        let mentions: Vec<&AnswerValue> = found.iter().filter(|(fq, _)| *fq == q).map(|(_, v)| v).collect();
        if mentions.is_empty() {
            return Err(CotError::PolishInconsistent {
                question: q,
                expected: expected.token().to_string(),
                found: "nothing".to_string(),
            });
        }
        if let Some(bad) = mentions.iter().find(|v| **v != expected) {
            return Err(CotError::PolishInconsistent {
                question: q,
                expected: expected.token().to_string(),
                found: bad.token().to_string(),
            });
        }
    }
    Ok(())
}

fn polish_prompt(template: &str) -> String {
    format!(
        "Rewrite the following comparative reasoning about two advertising creatives into fluent, \
         natural prose. Keep every sentence of the form \"Verdict for Q<n>: <verdict>.\" exactly as \
         written and do not change any verdict.\n\n{template}"
    )
}

/// Renders the reasoning for an annotated pair. With a polisher, the template
/// is rewritten by the client and the rewrite must keep every verdict.
pub fn render_cot(
    sample: &CreativePairSample,
    answers: &ProtocolAnswers,
    polisher: Option<&dyn TextClient>,
) -> Result<String, CotError> {
    let template = render_template(sample, answers)?;
    let Some(client) = polisher else {
        return Ok(template);
    };
    let images = [sample.image_a.clone(), sample.image_b.clone()];
    let polished = client.complete(&polish_prompt(&template), &images)?;
    check_consistency(&polished, answers)?;
    Ok(polished)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{self, PreferenceRule};

    fn annotated() -> (CreativePairSample, ProtocolAnswers) {
        let rule = PreferenceRule::default();
        let sample = synth::generate_synthetic(3, 11, &rule).remove(0);
        let answers = synth::annotate(&sample, &rule, 0.0);
        (sample, answers)
    }

    #[test]
    fn final_verdict_names_winner() {
        let (sample, answers) = annotated();
        let text = render_cot(&sample, &answers, None).unwrap();
        let winner = answers.conclusion().unwrap();
        assert!(text.ends_with(&format!("Verdict for Q10: {winner}.")));
        assert_eq!(extract_verdict_list(&text).last().unwrap().1, AnswerValue::from(winner));
    }

    #[test]
    fn template_is_deterministic_and_reversible() {
        let (sample, answers) = annotated();
        let t1 = render_cot(&sample, &answers, None).unwrap();
        let t2 = render_cot(&sample, &answers, None).unwrap();
        assert_eq!(t1, t2);
        assert_eq!(extract_verdicts(&t1), answers.answers);
        assert_eq!(t1.split("\n\n").count(), 10);
    }

    #[test]
    fn polisher_dropping_a_verdict_is_rejected() {
        let (sample, answers) = annotated();
        let drop_q5 = |prompt: &str| -> Result<String, ClientError> {
            let body = prompt.split_once("\n\n").unwrap().1;
            Ok(body.lines().filter(|l| !l.starts_with("Q5 ")).collect::<Vec<_>>().join("\n"))
        };
        let err = render_cot(&sample, &answers, Some(&drop_q5)).unwrap_err();
        assert!(matches!(err, CotError::PolishInconsistent { question: 5, .. }));
    }

    #[test]
    fn polisher_flipping_a_verdict_is_rejected() {
        let (sample, answers) = annotated();
        let expected = answers.get(10).unwrap().clone();
        let flipped = if expected == AnswerValue::A { "B" } else { "A" };
        let flip = move |prompt: &str| -> Result<String, ClientError> {
            let body = prompt.split_once("\n\n").unwrap().1.to_string();
            Ok(format!("{body}\nOn reflection, Verdict for Q10: {flipped}."))
        };
        let err = render_cot(&sample, &answers, Some(&flip)).unwrap_err();
        assert!(matches!(err, CotError::PolishInconsistent { question: 10, .. }));
    }

    #[test]
    fn faithful_polisher_passes_and_client_errors_propagate() {
        let (sample, answers) = annotated();
        let keep = |prompt: &str| -> Result<String, ClientError> {
            Ok(format!("In short: {}", prompt.split_once("\n\n").unwrap().1))
        };
        let text = render_cot(&sample, &answers, Some(&keep)).unwrap();
        assert!(text.starts_with("In short: "));
        let down = |_: &str| -> Result<String, ClientError> { Err(ClientError::Timeout) };
        assert_eq!(
            render_cot(&sample, &answers, Some(&down)),
            Err(CotError::Client(ClientError::Timeout))
        );
    }

    #[test]
    fn early_exit_has_no_cot() {
        let (sample, _) = annotated();
        let answers = ProtocolAnswers::new("x").with(1, "YES").with(2, "NO");
        assert_eq!(render_cot(&sample, &answers, None), Err(CotError::EarlyExit));
    }
}
