//! The synthetic end-to-end benchmark: generate and annotate pairs, split,
//! then measure a format-primed base policy, the supervised checkpoint, and
//! the reinforcement-tuned checkpoint on the held-out pairs.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::time::Instant;

use crate::codec::{parse, total_reward};
use crate::model::{CreativePairSample, Split};
use crate::pipeline::{assign_split, PipelineError, SplitConfig};
use crate::policy::{Checkpoint, ToyPolicy};
use crate::synth::{annotate, generate_synthetic, PreferenceRule};
use crate::task::{LabeledContext, PairTask, SftExample, TaskError};
use crate::trainer::{train_grpo, train_sft, CurvePoint, GrpoConfig, SftConfig, TrainError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchmarkConfig {
    pub train: usize,
    pub test: usize,
    pub seed: u64,
    pub rule: PreferenceRule,
    /// Logit margin the base policy puts on the output skeleton.
    pub base_margin: f64,
    pub sft: SftConfig,
    pub grpo: GrpoConfig,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            train: 2000,
            test: 500,
            seed: 7,
            rule: PreferenceRule::default(),
            base_margin: 6.0,
            sft: SftConfig::toy(),
            grpo: GrpoConfig::toy(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageScore {
    /// Percentage of greedy decodes whose answer matches the label.
    pub accuracy: f64,
    /// Percentage of greedy decodes that parse.
    pub format_rate: f64,
    /// Mean total reward of the greedy decodes.
    pub mean_reward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub train_size: usize,
    pub test_size: usize,
    pub num_params: usize,
    pub untrained: StageScore,
    pub sft: StageScore,
    pub grpo: StageScore,
    pub sft_initial_loss: f64,
    pub sft_curve: Vec<CurvePoint>,
    pub grpo_curve: Vec<CurvePoint>,
    pub seconds: f64,
    #[serde(skip)]
    pub sft_checkpoint: Option<Checkpoint>,
    #[serde(skip)]
    pub grpo_checkpoint: Option<Checkpoint>,
}

#[derive(Debug, thiserror::Error)]
pub enum BenchmarkError {
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error(transparent)]
    Train(#[from] TrainError),
}

/// Annotated, split synthetic pairs: `(train, test)`.
pub fn synthetic_dataset(cfg: &BenchmarkConfig) -> Result<(Vec<CreativePairSample>, Vec<CreativePairSample>), PipelineError> {
    let total = cfg.train + cfg.test;
    let mut pairs = generate_synthetic(total, cfg.seed, &cfg.rule);
    for p in &mut pairs {
        p.annotations = Some(annotate(p, &cfg.rule, 0.0));
    }
    let split = SplitConfig {
        train_fraction: cfg.train as f64 / total as f64,
        seed: cfg.seed,
        group_by_product: true,
    };
    let pairs = assign_split(&pairs, &split)?;
    let (train, test) = pairs.into_iter().partition(|p| p.split == Split::Train);
    Ok((train, test))
}

/// Greedy-decodes every item and scores the answers.
pub fn score_policy(task: &PairTask, policy: &ToyPolicy, items: &[LabeledContext], alpha: f64) -> StageScore {
    let scored: Vec<(bool, bool, f64)> = items
        .par_iter()
        .map(|it| {
            let text = task.respond(policy, &it.context);
            let r = total_reward(&text, it.label, alpha);
            let correct = parse(&text).ok().and_then(|p| p.answer_label()) == Some(it.label);
            (correct, r.format_reward == 1, r.total)
        })
        .collect();
    let n = items.len().max(1) as f64;
    StageScore {
        accuracy: 100.0 * scored.iter().filter(|s| s.0).count() as f64 / n,
        format_rate: 100.0 * scored.iter().filter(|s| s.1).count() as f64 / n,
        mean_reward: scored.iter().map(|s| s.2).sum::<f64>() / n,
    }
}

pub fn run_benchmark(cfg: &BenchmarkConfig) -> Result<BenchmarkReport, BenchmarkError> {
    let start = Instant::now();
    let task = PairTask::new();
    let (train, test) = synthetic_dataset(cfg)?;
    let sft_data: Vec<SftExample> = train.iter().map(|s| task.sft_example(s)).collect::<Result<_, _>>()?;
    let rl_data: Vec<LabeledContext> = train.iter().map(|s| task.labeled(s)).collect::<Result<_, _>>()?;
    let test_data: Vec<LabeledContext> = test.iter().map(|s| task.labeled(s)).collect::<Result<_, _>>()?;
    let alpha = cfg.grpo.alpha;

    let base = task.base_policy(cfg.base_margin);
    let untrained = score_policy(&task, &base, &test_data, alpha);

    let sft = train_sft(&base, &sft_data, &cfg.sft)?;
    let sft_policy = sft.checkpoint.to_policy().map_err(TrainError::from)?;
    let sft_score = score_policy(&task, &sft_policy, &test_data, alpha);

    let grpo = train_grpo(&sft.checkpoint, &rl_data, &cfg.grpo, false)?;
    let grpo_policy = grpo.checkpoint.to_policy().map_err(TrainError::from)?;
    let grpo_score = score_policy(&task, &grpo_policy, &test_data, alpha);

    Ok(BenchmarkReport {
        train_size: train.len(),
        test_size: test.len(),
        num_params: base.num_params(),
        untrained,
        sft: sft_score,
        grpo: grpo_score,
        sft_initial_loss: sft.initial_loss,
        sft_curve: sft.curve,
        grpo_curve: grpo.curve,
        seconds: start.elapsed().as_secs_f64(),
        sft_checkpoint: Some(sft.checkpoint),
        grpo_checkpoint: Some(grpo.checkpoint),
    })
}
