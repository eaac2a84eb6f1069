//! A linear-softmax autoregressive token policy.
//!
//! At each step the next-token distribution is
//! `softmax(W^T phi(context, prefix) / temperature)` where `phi` is the
//! binary feature map of [`FeatureSpec`] and `W` is a features-by-vocabulary
//! weight matrix. Log-probabilities and their gradients are exact; all
//! reductions run in a fixed order in `f64`, so results are bit-reproducible.

mod checkpoint;
mod features;
mod vocab;

pub use checkpoint::{Checkpoint, CheckpointError, Stage, CHECKPOINT_FORMAT};
pub use features::{Conjunction, CopyFeature, FeatureSpec, PolicyContext, SparseFeatures};
pub use vocab::*;

use rand::Rng;
use serde::{Deserialize, Serialize};
use std::ops::Deref;
use std::sync::Arc;
use thiserror::Error;

use crate::rng::rng_for;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PolicyError {
    #[error("UNKNOWN_TOKEN: id {0}")]
    UnknownToken(TokenId),
    #[error("UNKNOWN_TOKEN: {0:?}")]
    UnknownWord(String),
    #[error("invalid vocabulary token: {0}")]
    BadToken(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub tokens: Vec<TokenId>,
    /// Log-probability of each token under the policy that produced it.
    pub logprobs: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn total_logprob(&self) -> f64 {
        self.logprobs.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyPolicy {
    vocab: Vocabulary,
    spec: FeatureSpec,
    /// Row-major `features x vocab`.
    weights: Vec<f64>,
    temperature: f64,
}

/// Numerically stable log-softmax with a fixed summation order.
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for &z in logits {
        sum += (z - max).exp();
    }
    let log_norm = max + sum.ln();
    logits.iter().map(|&z| z - log_norm).collect()
}

impl ToyPolicy {
    /// All-zero weights: the uniform policy.
    pub fn new(vocab: Vocabulary, spec: FeatureSpec, temperature: f64) -> Result<Self, PolicyError> {
        if spec.vocab_size != vocab.len() {
            return Err(PolicyError::Shape(format!(
                "feature spec expects {} tokens, vocabulary has {}",
                spec.vocab_size,
                vocab.len()
            )));
        }
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(PolicyError::Shape(format!("temperature must be positive, got {temperature}")));
        }
        let weights = vec![0.0; spec.width() * vocab.len()];
        Ok(Self {
            vocab,
            spec,
            weights,
            temperature,
        })
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self, PolicyError> {
        if weights.len() != self.weights.len() {
            return Err(PolicyError::Shape(format!(
                "expected {} weights, got {}",
                self.weights.len(),
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(PolicyError::Shape("weights must be finite".into()));
        }
        self.weights = weights;
        Ok(self)
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn spec(&self) -> &FeatureSpec {
        &self.spec
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn num_params(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn weight_index(&self, feature: usize, token: TokenId) -> usize {
        feature * self.vocab.len() + token
    }

    pub fn add_weight(&mut self, feature: usize, token: TokenId, delta: f64) {
        let i = self.weight_index(feature, token);
        self.weights[i] += delta;
    }

    /// `weights += scale * direction`.
    pub fn step(&mut self, direction: &[f64], scale: f64) {
        for (w, d) in self.weights.iter_mut().zip(direction) {
            *w += scale * d;
        }
    }

    fn logits(&self, features: &SparseFeatures) -> Vec<f64> {
        let v = self.vocab.len();
        let mut logits = vec![0.0; v];
        for &(f, x) in features {
            let row = &self.weights[f * v..(f + 1) * v];
            for (l, w) in logits.iter_mut().zip(row) {
                *l += x * w;
            }
        }
        for l in &mut logits {
            *l /= self.temperature;
        }
        logits
    }

    /// Features and next-token log-probabilities after `prefix`.
    pub fn step_distribution(&self, ctx: &PolicyContext, prefix: &[TokenId]) -> (SparseFeatures, Vec<f64>) {
        let features = self.spec.extract(ctx, prefix);
        let lp = log_softmax(&self.logits(&features));
        (features, lp)
    }

    fn check_tokens(&self, y: &[TokenId]) -> Result<(), PolicyError> {
        match y.iter().find(|&&t| t >= self.vocab.len()) {
            Some(&t) => Err(PolicyError::UnknownToken(t)),
            None => Ok(()),
        }
    }

    /// Per-token log-probabilities of `y` given `ctx`.
    pub fn log_prob(&self, ctx: &PolicyContext, y: &[TokenId]) -> Result<Vec<f64>, PolicyError> {
        self.check_tokens(y)?;
        Ok((0..y.len())
            .map(|t| self.step_distribution(ctx, &y[..t]).1[y[t]])
            .collect())
    }

    /// `out += sum_t coeffs[t] * d log pi(y_t | ctx, y_<t) / dW`; returns the
    /// per-token log-probabilities computed on the way.
    pub fn accumulate_grad(
        &self,
        ctx: &PolicyContext,
        y: &[TokenId],
        coeffs: &[f64],
        out: &mut [f64],
    ) -> Result<Vec<f64>, PolicyError> {
        self.check_tokens(y)?;
        if coeffs.len() != y.len() || out.len() != self.weights.len() {
            return Err(PolicyError::Shape("coefficient or gradient length".into()));
        }
        let v = self.vocab.len();
        let mut lps = Vec::with_capacity(y.len());
        for t in 0..y.len() {
            let (features, lp) = self.step_distribution(ctx, &y[..t]);
            lps.push(lp[y[t]]);
            let c = coeffs[t] / self.temperature;
            if c == 0.0 {
                continue;
            }
            for &(f, x) in &features {
                let row = &mut out[f * v..(f + 1) * v];
                let scale = c * x;
                for (k, g) in row.iter_mut().enumerate() {
                    *g -= scale * lp[k].exp();
                }
                row[y[t]] += scale;
            }
        }
        Ok(lps)
    }

    /// Gradient of `sum_t log pi(y_t | ...)` with respect to the weights.
    pub fn grad_log_prob(&self, ctx: &PolicyContext, y: &[TokenId]) -> Result<Vec<f64>, PolicyError> {
        let mut g = vec![0.0; self.weights.len()];
        self.accumulate_grad(ctx, y, &vec![1.0; y.len()], &mut g)?;
        Ok(g)
    }

    /// Ancestral sampling until end-of-sequence or `max_len` tokens.
    pub fn sample_with<R: Rng + ?Sized>(&self, ctx: &PolicyContext, rng: &mut R, max_len: usize) -> Trajectory {
        let mut tokens = Vec::new();
        let mut logprobs = Vec::new();
        while tokens.len() < max_len {
            let (_, lp) = self.step_distribution(ctx, &tokens);
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut pick = lp.len() - 1;
            for (k, l) in lp.iter().enumerate() {
                acc += l.exp();
                if u < acc {
                    pick = k;
                    break;
                }
            }
            tokens.push(pick);
            logprobs.push(lp[pick]);
            if pick == EOS_ID {
                break;
            }
        }
        Trajectory { tokens, logprobs }
    }

    pub fn sample(&self, ctx: &PolicyContext, seed: u64, max_len: usize) -> Trajectory {
        self.sample_with(ctx, &mut rng_for(seed, &[]), max_len)
    }

    /// Argmax decoding; ties go to the lowest token id.
    pub fn greedy(&self, ctx: &PolicyContext, max_len: usize) -> Trajectory {
        let mut tokens = Vec::new();
        let mut logprobs = Vec::new();
        while tokens.len() < max_len {
            let (_, lp) = self.step_distribution(ctx, &tokens);
            let mut best = 0;
            for k in 1..lp.len() {
                if lp[k] > lp[best] {
                    best = k;
                }
            }
            tokens.push(best);
            logprobs.push(lp[best]);
            if best == EOS_ID {
                break;
            }
        }
        Trajectory { tokens, logprobs }
    }

    /// Frozen deep copy, used as the old and reference policies.
    pub fn snapshot(&self) -> Snapshot {
        Snapshot(Arc::new(self.clone()))
    }

    pub fn to_checkpoint(&self, stage: Stage) -> Checkpoint {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            stage,
            vocab: self.vocab.clone(),
            spec: self.spec.clone(),
            temperature: self.temperature,
            weights: self.weights.clone(),
        }
    }
}

/// An immutable, cheaply clonable policy copy.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot(Arc<ToyPolicy>);

impl Deref for Snapshot {
    type Target = ToyPolicy;

    fn deref(&self) -> &ToyPolicy {
        &self.0
    }
}

impl Snapshot {
    pub fn to_policy(&self) -> ToyPolicy {
        (*self.0).clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small(max_len: usize) -> ToyPolicy {
        let vocab = Vocabulary::new(["x", "y", "z"]).unwrap();
        let spec = FeatureSpec::plain(vocab.len(), max_len);
        ToyPolicy::new(vocab, spec, 1.0).unwrap()
    }

    fn randomized(max_len: usize, seed: u64) -> ToyPolicy {
        let p = small(max_len);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = (0..p.num_params()).map(|_| rng.random_range(-1.5..1.5)).collect();
        p.with_weights(w).unwrap()
    }

    #[test]
    fn uniform_weights_give_log_v() {
        let p = small(4);
        let v = p.vocab().len() as f64;
        for lp in p.log_prob(&PolicyContext::default(), &[7, 8, 0]).unwrap() {
            assert!((lp + v.ln()).abs() < 1e-15);
        }
    }

    #[test]
    fn length_one_sequences_normalize() {
        let p = randomized(3, 1);
        let ctx = PolicyContext::default();
        let total: f64 = (0..p.vocab().len())
            .map(|t| p.log_prob(&ctx, &[t]).unwrap()[0].exp())
            .sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn large_logit_dominates() {
        let mut p = small(3);
        p.add_weight(0, 8, 20.0);
        let lp = p.log_prob(&PolicyContext::default(), &[8]).unwrap()[0];
        assert!(lp > -1e-3, "{lp}");
    }

    #[test]
    fn unknown_token() {
        let p = small(3);
        assert_eq!(p.log_prob(&PolicyContext::default(), &[99]), Err(PolicyError::UnknownToken(99)));
    }

    #[test]
    fn sampling_is_deterministic_and_recorded_logprobs_match() {
        let p = randomized(6, 2);
        let ctx = PolicyContext::default();
        let a = p.sample(&ctx, 42, 6);
        assert_eq!(a, p.sample(&ctx, 42, 6));
        assert_eq!(a.logprobs, p.log_prob(&ctx, &a.tokens).unwrap());
        assert_eq!(p.sample(&ctx, 42, 1).len(), 1);
    }

    #[test]
    fn single_token_gradient_at_uniform() {
        let p = small(3);
        let ctx = PolicyContext::default();
        let g = p.grad_log_prob(&ctx, &[8]).unwrap();
        let v = p.vocab().len();
        let phi = p.spec().dense(&ctx, &[]);
        for f in 0..phi.len() {
            for k in 0..v {
                let expected = phi[f] * (f64::from(u8::from(k == 8)) - 1.0 / v as f64);
                assert!((g[f * v + k] - expected).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn inactive_features_get_zero_gradient() {
        let p = randomized(5, 5);
        let ctx = PolicyContext::default();
        let y = [7, 8];
        let g = p.grad_log_prob(&ctx, &y).unwrap();
        let v = p.vocab().len();
        let active: Vec<bool> = (0..p.spec().width())
            .map(|f| (0..y.len()).any(|t| p.spec().dense(&ctx, &y[..t])[f] != 0.0))
            .collect();
        for (f, &on) in active.iter().enumerate() {
            let row = &g[f * v..(f + 1) * v];
            assert_eq!(row.iter().any(|&x| x != 0.0), on, "feature {f}");
        }
        let mut zero = vec![0.0; p.num_params()];
        p.accumulate_grad(&ctx, &y, &[0.0, 0.0], &mut zero).unwrap();
        assert!(zero.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn snapshot_isolation() {
        let mut p = randomized(3, 3);
        let snap = p.snapshot();
        assert_eq!(*snap, p);
        assert_eq!(*snap.snapshot(), *snap);
        let ctx = PolicyContext::default();
        let y = [7, 8];
        let live = p.log_prob(&ctx, &y).unwrap();
        let frozen = snap.log_prob(&ctx, &y).unwrap();
        for (a, b) in live.iter().zip(&frozen) {
            assert_eq!((a - b).exp(), 1.0);
        }
        p.add_weight(0, 7, 1.0);
        assert_ne!(*snap, p);
        assert_eq!(snap.log_prob(&ctx, &y).unwrap(), frozen);
    }

    #[test]
    fn temperature_scales_logits() {
        let p = randomized(3, 4);
        let hot = ToyPolicy::new(p.vocab().clone(), p.spec().clone(), 2.0)
            .unwrap()
            .with_weights(p.weights().iter().map(|w| w * 2.0).collect())
            .unwrap();
        let ctx = PolicyContext::default();
        let a = p.log_prob(&ctx, &[7, 9]).unwrap();
        let b = hot.log_prob(&ctx, &[7, 9]).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}
