//! The linear-softmax token policy on its own: log-probabilities, exact
//! gradients, seeded sampling, and checkpoint round trips.
//!
//! ```text
//! cargo run -p creative-select --example toy_policy
//! ```

use creative_select::policy::{Checkpoint, Stage};
use creative_select::synth::{generate_synthetic, PreferenceRule};
use creative_select::task::{PairTask, MAX_LEN};

fn main() {
    let task = PairTask::new();
    let policy = task.base_policy(6.0);
    println!("vocabulary {} tokens, {} features, {} weights", task.vocab().len(), task.spec().width(), policy.num_params());

    let sample = generate_synthetic(1, 1, &PreferenceRule::default()).remove(0);
    let ctx = task.encode(&sample);
    let greedy = policy.greedy(&ctx, MAX_LEN);
    println!("greedy: {}", task.vocab().detokenize(&greedy.tokens));
    let sampled = policy.sample(&ctx, 7, MAX_LEN);
    println!("sampled: {} (log-prob {:.3})", task.vocab().detokenize(&sampled.tokens), sampled.total_logprob());

    let grad = policy.grad_log_prob(&ctx, &sampled.tokens).expect("known tokens");
    let touched = grad.iter().filter(|g| **g != 0.0).count();
    println!("gradient touches {touched} of {} weights", grad.len());

    let path = std::env::temp_dir().join("toy-policy-example.json");
    policy.to_checkpoint(Stage::Base).save(&path).expect("writable temp dir");
    let back = Checkpoint::load(&path).expect("just written").to_policy().expect("valid");
    println!("checkpoint round trip exact: {}", back == policy);
}
