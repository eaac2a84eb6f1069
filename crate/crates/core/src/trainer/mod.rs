//! Two-stage fine-tuning of a [`ToyPolicy`](crate::policy::ToyPolicy):
//! supervised training on reasoning-plus-answer targets, then group-relative
//! policy optimization against the rule-based reward.
//!
//! Both stages use plain gradient steps with a cosine-annealed step size.
//! Per-example work runs on the rayon pool, and every reduction sums in
//! input order, so a run is bit-reproducible for a given seed.

mod grpo;
mod sft;

pub use grpo::*;
pub use sft::*;

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

use crate::policy::{PolicyError, Stage};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrainError {
    #[error("EMPTY_BATCH")]
    EmptyBatch,
    #[error("MISSING_OLD_LOGPROBS: rollout {0}")]
    MissingOldLogprobs(usize),
    #[error("checkpoint stage is {0:?}, expected cot_sft")]
    WrongStage(Stage),
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

/// `lr0 * 0.5 * (1 + cos(pi * step / total))`.
pub fn cosine_lr(lr0: f64, step: usize, total: usize) -> f64 {
    if total == 0 {
        return lr0;
    }
    lr0 * 0.5 * (1.0 + (PI * step as f64 / total as f64).cos())
}

/// One line of a training curve, written as line-delimited JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub epoch: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub loss: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reward: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub format_rate: Option<f64>,
}

/// Sums equally sized vectors in slice order.
fn sum_in_order(parts: &[Vec<f64>], len: usize) -> Vec<f64> {
    let mut out = vec![0.0; len];
    for p in parts {
        for (o, x) in out.iter_mut().zip(p) {
            *o += x;
        }
    }
    out
}

fn check_positive(name: &str, value: f64) -> Result<(), TrainError> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(TrainError::Config(format!("{name} must be positive, got {value}")))
    }
}
