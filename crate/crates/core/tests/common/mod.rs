//! Shared fixtures and independent oracles for integration tests.
#![allow(dead_code)]

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use creative_select::policy::{
    Conjunction, CopyFeature, FeatureSpec, PolicyContext, TokenId, ToyPolicy, Vocabulary, ANSWER_OPEN_ID, A_ID, B_ID,
};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A policy with every feature family active and under 500 parameters.
pub fn small_policy() -> ToyPolicy {
    let vocab = Vocabulary::new(["Q", "x", "y", "t1", "t2"]).unwrap();
    let q = vocab.id("Q").unwrap();
    let t1 = vocab.id("t1").unwrap();
    let t2 = vocab.id("t2").unwrap();
    let spec = FeatureSpec {
        vocab_size: vocab.len(),
        max_len: 6,
        conjunctions: vec![
            Conjunction { trigger: q, tags: vec![t1, t2], pairwise: false },
            Conjunction { trigger: q, tags: vec![t1, t2], pairwise: true },
        ],
        copies: vec![CopyFeature { trigger: ANSWER_OPEN_ID, source: q, values: vec![A_ID, B_ID] }],
    };
    let p = ToyPolicy::new(vocab, spec, 1.0).unwrap();
    assert!(p.num_params() <= 500, "{}", p.num_params());
    p
}

pub fn randomize(p: &ToyPolicy, r: &mut ChaCha8Rng, scale: f64) -> ToyPolicy {
    let w = (0..p.num_params()).map(|_| r.random_range(-scale..scale)).collect();
    p.clone().with_weights(w).unwrap()
}

pub fn perturb(p: &ToyPolicy, r: &mut ChaCha8Rng, scale: f64) -> ToyPolicy {
    let w = p.weights().iter().map(|w| w + r.random_range(-scale..scale)).collect();
    p.clone().with_weights(w).unwrap()
}

pub fn random_context(p: &ToyPolicy, r: &mut ChaCha8Rng) -> PolicyContext {
    let t1 = p.vocab().id("t1").unwrap();
    let t2 = p.vocab().id("t2").unwrap();
    let mut pick = || [t1, t2].into_iter().filter(|_| r.random_bool(0.5)).collect();
    PolicyContext { slot_a: pick(), slot_b: pick() }
}

pub fn random_tokens(p: &ToyPolicy, r: &mut ChaCha8Rng, len: usize) -> Vec<TokenId> {
    (0..len).map(|_| r.random_range(0..p.vocab().len())).collect()
}

/// Central differences of `f` at `w`.
pub fn central_difference(w: &[f64], h: f64, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let mut x = w.to_vec();
    (0..w.len())
        .map(|i| {
            x[i] = w[i] + h;
            let up = f(&x);
            x[i] = w[i] - h;
            let down = f(&x);
            x[i] = w[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `max |g - fd| / max |fd|`: error relative to the gradient's scale.
pub fn max_relative_error(g: &[f64], fd: &[f64]) -> f64 {
    let scale = fd.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1e-12);
    g.iter().zip(fd).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())) / scale
}

pub mod oracles;
