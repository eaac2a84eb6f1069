//! Group-relative advantages, the per-token KL estimate, and group sampling.

mod common;

use common::*;
use proptest::prelude::*;
use rand::Rng;

use creative_select::policy::{log_softmax, PolicyContext};
use creative_select::task::{PairTask, MAX_LEN};
use creative_select::trainer::{compute_advantages, kl_k3, kl_token, sample_group};

proptest! {
    #[test]
    fn advantages_are_z_scores(rewards in prop::collection::vec(prop::sample::select(vec![0.0, 1.0, 1.2]), 2..=8)) {
        let adv = compute_advantages(&rewards, 1e-8);
        prop_assert_eq!(adv.len(), rewards.len());
        let n = rewards.len() as f64;
        let mean = rewards.iter().sum::<f64>() / n;
        let std = (rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n).sqrt();
        if std > 1e-8 {
            let m = adv.iter().sum::<f64>();
            let s = (adv.iter().map(|a| a * a).sum::<f64>() / n).sqrt();
            prop_assert!(m.abs() < 1e-9);
            prop_assert!((s - 1.0).abs() < 1e-9);
        } else {
            prop_assert!(adv.iter().all(|&a| a == 0.0));
        }
    }

    #[test]
    fn k3_is_non_negative(a in -30.0f64..0.0, b in -30.0f64..0.0) {
        prop_assert!(kl_k3(a, b) >= 0.0);
    }
}

#[test]
fn eight_element_group_matches_scalar_recomputation() {
    let rewards = [1.2, 1.0, 0.0, 1.2, 1.0, 0.0, 1.2, 1.0];
    let adv = compute_advantages(&rewards, 1e-8);
    let mut sum = 0.0;
    for r in rewards {
        sum += r;
    }
    let mean = sum / 8.0;
    let mut sq = 0.0;
    for r in rewards {
        sq += (r - mean) * (r - mean);
    }
    let std = (sq / 8.0).sqrt();
    for (a, r) in adv.iter().zip(rewards) {
        assert!((a - (r - mean) / std).abs() < 1e-12);
    }
}

#[test]
fn k3_mean_tracks_exact_kl_on_five_tokens() {
    let mut r = rng(11);
    for _ in 0..5 {
        let theta = log_softmax(&(0..5).map(|_| r.random_range(-1.0..1.0)).collect::<Vec<f64>>());
        let reference = log_softmax(&(0..5).map(|_| r.random_range(-1.0..1.0)).collect::<Vec<f64>>());
        let exact: f64 = (0..5).map(|k| theta[k].exp() * (theta[k] - reference[k])).sum();
        let n = 200_000;
        let mut total = 0.0;
        for _ in 0..n {
            let u: f64 = r.random();
            let mut acc = 0.0;
            let mut y = 4;
            for (k, lp) in theta.iter().enumerate() {
                acc += lp.exp();
                if u < acc {
                    y = k;
                    break;
                }
            }
            total += kl_k3(theta[y], reference[y]);
        }
        let estimate = total / n as f64;
        assert!((estimate - exact).abs() <= 0.02 * exact, "{estimate} vs {exact}");
    }
}

#[test]
fn kl_token_is_zero_for_equal_policies() {
    let mut r = rng(12);
    let p = randomize(&small_policy(), &mut r, 1.0);
    let ctx = random_context(&p, &mut r);
    let y = random_tokens(&p, &mut r, 4);
    for t in 0..y.len() {
        assert_eq!(kl_token(&p, &p, &ctx, &y, t).unwrap(), 0.0);
    }
    let q = perturb(&p, &mut r, 0.5);
    assert!((0..y.len()).all(|t| kl_token(&p, &q, &ctx, &y, t).unwrap() >= 0.0));
}

#[test]
fn groups_are_seeded_per_index() {
    let mut r = rng(13);
    let p = randomize(&small_policy(), &mut r, 1.0);
    let ctx = random_context(&p, &mut r);
    let g = sample_group(&p, &ctx, 8, 99, 6);
    assert_eq!(g.len(), 8);
    assert_eq!(g, sample_group(&p, &ctx, 8, 99, 6));
    assert_eq!(sample_group(&p, &ctx, 3, 99, 6)[..], g[..3]);
}

#[test]
fn forced_policy_yields_identical_trajectories() {
    let task = PairTask::new();
    let forced = task.base_policy(60.0);
    let mut forced = forced;
    let spec = forced.spec().clone();
    for pos in [16, 19] {
        forced.add_weight(spec.position_offset() + pos, creative_select::policy::A_ID, 60.0);
    }
    for pos in (2..=14).step_by(2) {
        let verdict = forced.vocab().id("A=B").unwrap();
        forced.add_weight(spec.position_offset() + pos, verdict, 60.0);
    }
    let g = sample_group(&forced, &PolicyContext::default(), 8, 5, MAX_LEN);
    assert!(g.iter().all(|y| y.tokens == g[0].tokens));
}
