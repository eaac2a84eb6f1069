use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_positive, cosine_lr, sum_in_order, CurvePoint, TrainError};
use crate::codec::total_reward;
use crate::model::{Label, RewardBreakdown};
use crate::policy::{Checkpoint, PolicyContext, Stage, ToyPolicy, TokenId, Trajectory};
use crate::rng::{derive_seed, rng_for};
use crate::task::{LabeledContext, MAX_LEN};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GrpoConfig {
    pub group_size: usize,
    pub alpha: f64,
    pub beta: f64,
    pub clip_epsilon: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub std_floor: f64,
    pub max_len: usize,
    pub seed: u64,
}

impl Default for GrpoConfig {
    fn default() -> Self {
        Self {
            group_size: 8,
            alpha: 0.2,
            beta: 0.001,
            clip_epsilon: 0.2,
            epochs: 3,
            batch_size: 16,
            learning_rate: 1e-6,
            std_floor: 1e-8,
            max_len: MAX_LEN,
            seed: 0,
        }
    }
}

impl GrpoConfig {
    /// Step size suited to the toy policy; everything else stays at the
    /// published values.
    pub fn toy() -> Self {
        Self {
            learning_rate: 20.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if self.group_size < 2 {
            return Err(TrainError::Config("group_size must be at least 2".into()));
        }
        if !(self.clip_epsilon > 0.0 && self.clip_epsilon < 1.0) {
            return Err(TrainError::Config("clip_epsilon must lie in (0, 1)".into()));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(TrainError::Config("beta must be non-negative".into()));
        }
        if self.epochs == 0 || self.batch_size == 0 || self.max_len == 0 {
            return Err(TrainError::Config("epochs, batch_size and max_len must be positive".into()));
        }
        check_positive("learning_rate", self.learning_rate)?;
        Ok(())
    }
}

/// One prompt with its sampled group. Each trajectory keeps the per-token
/// log-probabilities of the policy that sampled it (the old policy).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRollout {
    pub context: PolicyContext,
    pub label: Label,
    pub trajectories: Vec<Trajectory>,
    pub rewards: Vec<f64>,
    pub advantages: Vec<f64>,
}

/// `g` independent draws; draw `i` uses the stream derived from `(seed, i)`.
pub fn sample_group(policy: &ToyPolicy, ctx: &PolicyContext, g: usize, seed: u64, max_len: usize) -> Vec<Trajectory> {
    (0..g)
        .map(|i| policy.sample_with(ctx, &mut rng_for(seed, &[i as u64]), max_len))
        .collect()
}

/// Z-scores with the population standard deviation. A group whose spread
/// is at most `std_floor` carries no signal and gets all-zero advantages.
pub fn compute_advantages(rewards: &[f64], std_floor: f64) -> Vec<f64> {
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let var = rewards.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    if std.is_nan() || std <= std_floor {
        return vec![0.0; rewards.len()];
    }
    rewards.iter().map(|r| (r - mean) / std).collect()
}

/// `rho - ln rho - 1` with `rho = pi_ref / pi_theta`, from log-probabilities.
pub fn kl_k3(lp_theta: f64, lp_ref: f64) -> f64 {
    let d = lp_ref - lp_theta;
    (d.exp_m1() - d).max(0.0)
}

/// The per-token KL estimate at position `t` of `y`.
pub fn kl_token(
    policy: &ToyPolicy,
    reference: &ToyPolicy,
    ctx: &PolicyContext,
    y: &[TokenId],
    t: usize,
) -> Result<f64, TrainError> {
    let prefix = &y[..=t];
    let lp = policy.log_prob(ctx, prefix)?[t];
    let lr = reference.log_prob(ctx, prefix)?[t];
    Ok(kl_k3(lp, lr))
}

/// Samples a group for one prompt and scores it with the rule-based reward.
pub fn rollout(policy: &ToyPolicy, item: &LabeledContext, cfg: &GrpoConfig, seed: u64) -> (GroupRollout, Vec<RewardBreakdown>) {
    let trajectories = sample_group(policy, &item.context, cfg.group_size, seed, cfg.max_len);
    let breakdowns: Vec<RewardBreakdown> = trajectories
        .iter()
        .map(|y| total_reward(&policy.vocab().detokenize(&y.tokens), item.label, cfg.alpha))
        .collect();
    let rewards: Vec<f64> = breakdowns.iter().map(|b| b.total).collect();
    let advantages = compute_advantages(&rewards, cfg.std_floor);
    (
        GroupRollout {
            context: item.context.clone(),
            label: item.label,
            trajectories,
            rewards,
            advantages,
        },
        breakdowns,
    )
}

/// Clipped-surrogate objective with a KL penalty toward `reference`,
/// averaged per token within a response, then over the group, then over
/// groups. Returns `J` (to be maximized) and `dJ/dW`. Advantages and the
/// stored old log-probabilities are constants.
pub fn grpo_objective(
    policy: &ToyPolicy,
    reference: &ToyPolicy,
    rollouts: &[GroupRollout],
    cfg: &GrpoConfig,
) -> Result<(f64, Vec<f64>), TrainError> {
    if rollouts.is_empty() {
        return Err(TrainError::EmptyBatch);
    }
    for (k, r) in rollouts.iter().enumerate() {
        let g = r.trajectories.len();
        if g == 0 || r.advantages.len() != g || r.trajectories.iter().any(|y| y.logprobs.len() != y.tokens.len()) {
            return Err(TrainError::MissingOldLogprobs(k));
        }
    }
    let n_groups = rollouts.len() as f64;
    let eps = cfg.clip_epsilon;
    let parts: Vec<(f64, Vec<f64>)> = rollouts
        .par_iter()
        .map(|r| {
            let g = r.trajectories.len() as f64;
            let mut grad = vec![0.0; policy.num_params()];
            let mut j = 0.0;
            for (y, &adv) in r.trajectories.iter().zip(&r.advantages) {
                if y.is_empty() {
                    continue;
                }
                let len = y.len() as f64;
                let lp = policy.log_prob(&r.context, &y.tokens)?;
                let lp_ref = reference.log_prob(&r.context, &y.tokens)?;
                let mut sum = 0.0;
                let mut coeffs = Vec::with_capacity(y.len());
                for t in 0..y.len() {
                    let rho = (lp[t] - y.logprobs[t]).exp();
                    let unclipped = rho * adv;
                    let clipped = rho.clamp(1.0 - eps, 1.0 + eps) * adv;
                    let (surrogate, d_surrogate) = if unclipped <= clipped {
                        (unclipped, unclipped)
                    } else {
                        (clipped, 0.0)
                    };
                    let rho_ref = (lp_ref[t] - lp[t]).exp();
                    sum += surrogate - cfg.beta * kl_k3(lp[t], lp_ref[t]);
                    coeffs.push((d_surrogate + cfg.beta * (rho_ref - 1.0)) / len / g / n_groups);
                }
                j += sum / len / g;
                policy.accumulate_grad(&r.context, &y.tokens, &coeffs, &mut grad)?;
            }
            Ok((j / n_groups, grad))
        })
        .collect::<Result<_, TrainError>>()?;
    let j = parts.iter().map(|(j, _)| j).sum();
    let grads: Vec<Vec<f64>> = parts.into_iter().map(|(_, g)| g).collect();
    Ok((j, sum_in_order(&grads, policy.num_params())))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrpoOutcome {
    pub checkpoint: Checkpoint,
    /// Mean total reward, accuracy and format rate of the sampled responses
    /// in each epoch.
    pub curve: Vec<CurvePoint>,
}

/// Refines `init` with one ascent step per batch. The reference policy is
/// `init` for the whole run. Unless `allow_non_sft` is set, `init` must be
/// a supervised checkpoint.
pub fn train_grpo(
    init: &Checkpoint,
    data: &[LabeledContext],
    cfg: &GrpoConfig,
    allow_non_sft: bool,
) -> Result<GrpoOutcome, TrainError> {
    cfg.validate()?;
    if init.stage != Stage::CotSft && !allow_non_sft {
        return Err(TrainError::WrongStage(init.stage));
    }
    if data.is_empty() {
        return Err(TrainError::EmptyBatch);
    }
    let reference = init.to_policy()?.snapshot();
    let mut policy = init.to_policy()?;
    let batches_per_epoch = data.len().div_ceil(cfg.batch_size);
    let total = cfg.epochs * batches_per_epoch;
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut curve = Vec::with_capacity(cfg.epochs);
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        use rand::seq::SliceRandom;
        order.shuffle(&mut rng_for(cfg.seed, &[0, epoch as u64]));
        let (mut reward, mut acc, mut fmt, mut n) = (0.0, 0.0, 0.0, 0usize);
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let old = policy.snapshot();
            let results: Vec<(GroupRollout, Vec<RewardBreakdown>)> = chunk
                .par_iter()
                .map(|&i| {
                    let seed = derive_seed(cfg.seed, &[1, epoch as u64, b as u64, i as u64]);
                    rollout(&old, &data[i], cfg, seed)
                })
                .collect();
            for bd in results.iter().flat_map(|(_, bd)| bd) {
                reward += bd.total;
                acc += f64::from(bd.accuracy_reward);
                fmt += f64::from(bd.format_reward);
                n += 1;
            }
            let rollouts: Vec<GroupRollout> = results.into_iter().map(|(r, _)| r).collect();
            let (_, grad) = grpo_objective(&policy, &reference, &rollouts, cfg)?;
            policy.step(&grad, cosine_lr(cfg.learning_rate, step, total));
            step += 1;
        }
        let n = n as f64;
        curve.push(CurvePoint {
            epoch,
            loss: None,
            reward: Some(reward / n),
            accuracy: Some(acc / n),
            format_rate: Some(fmt / n),
        });
    }
    Ok(GrpoOutcome {
        checkpoint: policy.to_checkpoint(Stage::Grpo),
        curve,
    })
}
