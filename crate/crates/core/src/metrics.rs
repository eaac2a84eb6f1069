//! Offline and online evaluation arithmetic: pairwise selection accuracy,
//! a judge-model reasoning score, and relative uplift between arms.

use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};
use std::sync::OnceLock;
use thiserror::Error;

use crate::client::{ClientError, TextClient};
use crate::codec::{format_reward, parse};
use crate::model::{CreativePairSample, Label, ProductContext};
use crate::tournament::{Comparator, ComparatorError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("LENGTH_MISMATCH: {predictions} predictions, {labels} labels")]
    LengthMismatch { predictions: usize, labels: usize },
    #[error("EMPTY")]
    Empty,
    #[error("ZERO_CONTROL")]
    ZeroControl,
    #[error("JUDGE_UNPARSEABLE after {attempts} attempts")]
    JudgeUnparseable { attempts: u32 },
    #[error("CLIENT_ERROR: {0}")]
    Client(#[from] ClientError),
    #[error(transparent)]
    Comparator(#[from] ComparatorError),
    #[error("sample {0} has no label")]
    Unlabeled(String),
    #[error("INVALID_REPORT: {0}")]
    InvalidReport(String),
}

/// Percentage of predictions equal to their label.
pub fn selection_accuracy(predictions: &[Label], labels: &[Label]) -> Result<f64, MetricsError> {
    if predictions.len() != labels.len() {
        return Err(MetricsError::LengthMismatch {
            predictions: predictions.len(),
            labels: labels.len(),
        });
    }
    if labels.is_empty() {
        return Err(MetricsError::Empty);
    }
    let hits = predictions.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(100.0 * hits as f64 / labels.len() as f64)
}

/// `100 * (treatment - control) / control`, computed as
/// `(100 * treatment - 100 * control) / control` so that round percentages
/// of round rates come out exact.
pub fn relative_improvement(treatment: f64, control: f64) -> Result<f64, MetricsError> {
    if control.is_nan() || control <= 0.0 {
        return Err(MetricsError::ZeroControl);
    }
    Ok((100.0 * treatment - 100.0 * control) / control)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeVerdict {
    pub raw_score: u8,
    pub normalized: f64,
    pub judge_id: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub rationale: Option<String>,
    pub attempts: u32,
}

impl JudgeVerdict {
    pub fn new(raw_score: u8, judge_id: impl Into<String>, rationale: Option<String>, attempts: u32) -> Self {
        Self {
            raw_score,
            normalized: f64::from(raw_score) * 10.0,
            judge_id: judge_id.into(),
            rationale,
            attempts,
        }
    }
}

pub const JUDGE_RETRIES: u32 = 2;

/// The fixed judge instruction with both reasonings embedded.
pub fn judge_prompt(generated_cot: &str, ground_truth_cot: &str, context: &ProductContext) -> String {
    format!(
        "You are grading the reasoning of an assistant that compared two product images \
         to decide which one will attract more clicks.\n\
         Product title: {title}\n\
         Search queries: {queries}\n\n\
         [Reference reasoning]\n{ground_truth_cot}\n\n\
         [Assistant reasoning]\n{generated_cot}\n\n\
         Judge the assistant reasoning against the reference on helpfulness, relevance, \
         accuracy, and level of detail. Reply with an overall score on a scale from 0 to 10 \
         as the first number in your reply, then a short justification.",
        title = context.title,
        queries = context.query_terms.join(", "),
    )
}

fn first_score(reply: &str) -> Option<u8> {
    static INT: OnceLock<Regex> = OnceLock::new();
    let re = INT.get_or_init(|| Regex::new(r"\d+").expect("static regex"));
    re.find_iter(reply)
        .filter_map(|m| m.as_str().parse::<u32>().ok())
        .find(|&v| v <= 10)
        .map(|v| v as u8)
}

/// Scores `generated_cot` against `ground_truth_cot` with a judge model,
/// retrying replies that carry no score.
pub fn judge_score(
    client: &dyn TextClient,
    judge_id: &str,
    generated_cot: &str,
    ground_truth_cot: &str,
    context: &ProductContext,
) -> Result<JudgeVerdict, MetricsError> {
    let prompt = judge_prompt(generated_cot, ground_truth_cot, context);
    let attempts = JUDGE_RETRIES + 1;
    for attempt in 1..=attempts {
        let reply = client.complete(&prompt, &[])?;
        if let Some(score) = first_score(&reply) {
            let rationale = Some(reply.trim().to_string()).filter(|r| !r.is_empty());
            return Ok(JudgeVerdict::new(score, judge_id, rationale, attempt));
        }
    }
    Err(MetricsError::JudgeUnparseable { attempts })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmMetrics {
    pub arm: String,
    pub ctr: f64,
    pub cvr: f64,
    pub rpm: f64,
}

/// Aggregated online metrics per experiment arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnlineReport {
    pub arms: Vec<ArmMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Uplift {
    pub ctr: f64,
    pub cvr: f64,
    pub rpm: f64,
}

impl OnlineReport {
    pub fn validate(&self) -> Result<(), MetricsError> {
        for a in &self.arms {
            let rate = |x: f64| (0.0..=1.0).contains(&x);
            if !rate(a.ctr) || !rate(a.cvr) || !(a.rpm >= 0.0 && a.rpm.is_finite()) {
                return Err(MetricsError::InvalidReport(format!("arm {} out of range", a.arm)));
            }
        }
        Ok(())
    }

    pub fn arm(&self, name: &str) -> Option<&ArmMetrics> {
        self.arms.iter().find(|a| a.arm == name)
    }

    /// Relative improvement of `treatment` over `control` on each metric.
    pub fn uplift(&self, treatment: &str, control: &str) -> Result<Uplift, MetricsError> {
        self.validate()?;
        let missing = |n: &str| MetricsError::InvalidReport(format!("no arm named {n}"));
        let t = self.arm(treatment).ok_or_else(|| missing(treatment))?;
        let c = self.arm(control).ok_or_else(|| missing(control))?;
        Ok(Uplift {
            ctr: relative_improvement(t.ctr, c.ctr)?,
            cvr: relative_improvement(t.cvr, c.cvr)?,
            rpm: relative_improvement(t.rpm, c.rpm)?,
        })
    }
}

/// Per-sample evaluation line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub pair_id: String,
    pub label: Label,
    pub prediction: Option<Label>,
    pub correct: bool,
    pub well_formed: bool,
    pub response: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub judge: Option<JudgeVerdict>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub count: usize,
    /// Percentage of samples whose parsed answer equals the label; malformed
    /// responses count as wrong.
    pub accuracy: f64,
    /// Percentage of responses that parse.
    pub format_rate: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub mean_judge_score: Option<f64>,
    pub records: Vec<EvalRecord>,
}

/// Optional judge scoring of generated reasoning against the sample's
/// reference reasoning.
pub struct JudgeSetup<'a> {
    pub client: &'a dyn TextClient,
    pub judge_id: String,
}

/// Asks `comparator` about every sample once, in its stored A/B order.
pub fn evaluate_test_set(
    comparator: &dyn Comparator,
    samples: &[CreativePairSample],
    judge: Option<&JudgeSetup<'_>>,
) -> Result<EvalReport, MetricsError> {
    if samples.is_empty() {
        return Err(MetricsError::Empty);
    }
    let records: Vec<EvalRecord> = samples
        .par_iter()
        .map(|s| {
            let label = s.label.ok_or_else(|| MetricsError::Unlabeled(s.pair_id.clone()))?;
            let response = comparator.compare(&s.image_a, &s.image_b, &s.context)?;
            let parsed = parse(&response).ok();
            let prediction = parsed.as_ref().and_then(|r| r.answer_label());
            let judge = match (judge, parsed.as_ref(), s.cot.as_deref()) {
                (Some(j), Some(r), Some(reference)) => {
                    Some(judge_score(j.client, &j.judge_id, &r.think, reference, &s.context)?)
                }
                _ => None,
            };
            Ok(EvalRecord {
                pair_id: s.pair_id.clone(),
                label,
                prediction,
                correct: prediction == Some(label),
                well_formed: format_reward(&response) == 1,
                response,
                judge,
            })
        })
        .collect::<Result<_, MetricsError>>()?;
    let n = records.len() as f64;
    let correct = records.iter().filter(|r| r.correct).count() as f64;
    let formed = records.iter().filter(|r| r.well_formed).count() as f64;
    let judged: Vec<f64> = records.iter().filter_map(|r| r.judge.as_ref().map(|j| j.normalized)).collect();
    Ok(EvalReport {
        count: records.len(),
        accuracy: 100.0 * correct / n,
        format_rate: 100.0 * formed / n,
        mean_judge_score: (!judged.is_empty()).then(|| judged.iter().sum::<f64>() / judged.len() as f64),
        records,
    })
}
