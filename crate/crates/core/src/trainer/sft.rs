use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_positive, cosine_lr, sum_in_order, CurvePoint, TrainError};
use crate::policy::{Checkpoint, Stage, ToyPolicy};
use crate::rng::rng_for;
use crate::task::SftExample;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SftConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Only `"cosine"` is supported.
    pub lr_schedule: String,
    pub seed: u64,
}

impl Default for SftConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 32,
            learning_rate: 1e-5,
            lr_schedule: "cosine".into(),
            seed: 0,
        }
    }
}

impl SftConfig {
    /// Step size suited to the toy policy, whose logits are sums of a few
    /// unit features rather than the outputs of a deep network.
    pub fn toy() -> Self {
        Self {
            learning_rate: 0.2,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(TrainError::Config("epochs and batch_size must be positive".into()));
        }
        check_positive("learning_rate", self.learning_rate)?;
        if self.lr_schedule != "cosine" {
            return Err(TrainError::Config(format!("unknown lr_schedule {:?}", self.lr_schedule)));
        }
        Ok(())
    }
}

/// Mean negative log-likelihood per target token over the batch, and its
/// gradient with respect to the weights.
pub fn sft_loss(policy: &ToyPolicy, batch: &[SftExample]) -> Result<(f64, Vec<f64>), TrainError> {
    let tokens: usize = batch.iter().map(|e| e.target.len()).sum();
    if tokens == 0 {
        return Err(TrainError::EmptyBatch);
    }
    let scale = 1.0 / tokens as f64;
    let parts: Vec<(f64, Vec<f64>)> = batch
        .par_iter()
        .map(|ex| {
            let mut g = vec![0.0; policy.num_params()];
            let coeffs = vec![-scale; ex.target.len()];
            let lps = policy.accumulate_grad(&ex.context, &ex.target, &coeffs, &mut g)?;
            Ok((-lps.iter().sum::<f64>(), g))
        })
        .collect::<Result<_, TrainError>>()?;
    let nll: f64 = parts.iter().map(|(l, _)| l).sum();
    let grads: Vec<Vec<f64>> = parts.into_iter().map(|(_, g)| g).collect();
    Ok((nll * scale, sum_in_order(&grads, policy.num_params())))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SftOutcome {
    pub checkpoint: Checkpoint,
    /// Loss on the full dataset before the first step.
    pub initial_loss: f64,
    /// Mean batch loss per epoch.
    pub curve: Vec<CurvePoint>,
}

/// Minimizes [`sft_loss`] with shuffled mini-batches.
pub fn train_sft(policy: &ToyPolicy, data: &[SftExample], cfg: &SftConfig) -> Result<SftOutcome, TrainError> {
    cfg.validate()?;
    let (initial_loss, _) = sft_loss(policy, data)?;
    let mut policy = policy.clone();
    let batches_per_epoch = data.len().div_ceil(cfg.batch_size);
    let total = cfg.epochs * batches_per_epoch;
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut curve = Vec::with_capacity(cfg.epochs);
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng_for(cfg.seed, &[epoch as u64]));
        let mut loss_sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<SftExample> = chunk.iter().map(|&i| data[i].clone()).collect();
            let (loss, grad) = sft_loss(&policy, &batch)?;
            policy.step(&grad, -cosine_lr(cfg.learning_rate, step, total));
            loss_sum += loss;
            step += 1;
        }
        curve.push(CurvePoint {
            epoch,
            loss: Some(loss_sum / batches_per_epoch as f64),
            reward: None,
            accuracy: None,
            format_rate: None,
        });
    }
    Ok(SftOutcome {
        checkpoint: policy.to_checkpoint(Stage::CotSft),
        initial_loss,
        curve,
    })
}
