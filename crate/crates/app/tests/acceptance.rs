//! One line per acceptance criterion, each with its runtime. Exits non-zero
//! if any criterion fails or overruns its time budget.

mod common;
#[path = "../../core/tests/common/mod.rs"]
mod fixtures;

use rand::seq::SliceRandom;
use rand::Rng;
use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::time::{Duration, Instant};

use creative_select::benchmark::{run_benchmark, BenchmarkConfig};
use creative_select::codec::{accuracy_reward, format_reward, total_reward};
use creative_select::model::{CreativeImageRef, Label, ProductContext, Split};
use creative_select::metrics::{judge_score, relative_improvement, selection_accuracy, JudgeVerdict};
use creative_select::pipeline::{assign_split, drop_indistinguishable, filter_candidates, CollectionCriteria, SplitConfig};
use creative_select::policy::ToyPolicy;
use creative_select::rng::derive_seed;
use creative_select::task::SftExample;
use creative_select::tournament::{run_tournament, Comparator, ComparatorError, TournamentConfig};
use creative_select::trainer::{compute_advantages, grpo_objective, sample_group, sft_loss, GroupRollout, GrpoConfig};
use creative_select_app::service::ServiceState;
use creative_select_app::store::{replay, DatasetStore, Recovery};
use fixtures::oracles::*;
use fixtures::*;

type Outcome = Result<String, String>;
type Criterion = (&'static str, Duration, fn() -> Outcome);

fn check(ok: bool, what: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(what())
    }
}

fn rewards() -> Outcome {
    let mut r = rng(4);
    let mut seen = BTreeSet::new();
    for i in 0..10_000 {
        let raw = tag_soup(&mut r);
        let label = if i % 2 == 0 { Label::A } else { Label::B };
        let (fmt, acc) = (format_reward(&raw), accuracy_reward(&raw, label));
        check(acc <= fmt, || format!("accuracy above format on {raw:?}"))?;
        let total = total_reward(&raw, label, 0.2).total;
        check([0.0, 1.0, 1.2].contains(&total), || format!("total {total} on {raw:?}"))?;
        seen.insert(total.to_bits());
    }
    check(seen.len() == 3, || format!("only {} distinct totals", seen.len()))?;
    Ok("10000 cases, totals {0, 1, 1.2}".into())
}

fn advantages() -> Outcome {
    let mut r = rng(21);
    let mut constant = 0;
    for i in 0..1_000 {
        let g = [2, 4, 8][i % 3];
        let rewards: Vec<f64> = match i % 4 {
            0 => vec![[0.0, 1.0, 1.2][r.random_range(0..3)]; g],
            1 => (0..g).map(|_| r.random_range(-5.0..5.0)).collect(),
            _ => (0..g).map(|_| [0.0, 1.0, 1.2][r.random_range(0..3)]).collect(),
        };
        let n = g as f64;
        let mean = rewards.iter().sum::<f64>() / n;
        let std = (rewards.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
        let adv = compute_advantages(&rewards, 1e-8);
        if std > 1e-8 {
            let m = adv.iter().sum::<f64>();
            let s = (adv.iter().map(|a| a * a).sum::<f64>() / n).sqrt();
            check(m.abs() < 1e-9 && (s - 1.0).abs() < 1e-9, || format!("group {i}: sum {m}, std {s}"))?;
        } else {
            constant += 1;
            check(adv.iter().all(|&a| a == 0.0), || format!("group {i}: non-zero advantage for constant rewards"))?;
        }
    }
    Ok(format!("1000 groups, {constant} with zero variance"))
}

fn with(p: &ToyPolicy, w: &[f64]) -> ToyPolicy {
    p.clone().with_weights(w.to_vec()).expect("same length")
}

fn rollouts(old: &ToyPolicy, r: &mut rand_chacha::ChaCha8Rng, groups: usize, g: usize) -> Vec<GroupRollout> {
    (0..groups)
        .map(|k| {
            let ctx = random_context(old, r);
            let trajectories = sample_group(old, &ctx, g, r.random(), 5);
            let rewards: Vec<f64> = (0..g).map(|_| [0.0, 1.0, 1.2][r.random_range(0..3)]).collect();
            GroupRollout {
                context: ctx,
                label: if k % 2 == 0 { Label::A } else { Label::B },
                advantages: compute_advantages(&rewards, 1e-8),
                rewards,
                trajectories,
            }
        })
        .collect()
}

fn gradients() -> Outcome {
    const H: f64 = 1e-5;
    let base = small_policy();
    let mut worst = [0.0f64; 3];
    for seed in 0..50 {
        let mut r = rng(1_000 + seed);
        let p = randomize(&base, &mut r, 1.0);
        let ctx = random_context(&p, &mut r);
        let y = random_tokens(&p, &mut r, 5);
        let g = p.grad_log_prob(&ctx, &y).map_err(|e| e.to_string())?;
        let fd = central_difference(p.weights(), H, |w| with(&p, w).log_prob(&ctx, &y).unwrap().iter().sum());
        worst[0] = worst[0].max(max_relative_error(&g, &fd));

        let batch: Vec<SftExample> = (0..3)
            .map(|k| SftExample { context: random_context(&p, &mut r), target: random_tokens(&p, &mut r, 2 + k) })
            .collect();
        let (_, g) = sft_loss(&p, &batch).map_err(|e| e.to_string())?;
        let fd = central_difference(p.weights(), H, |w| sft_loss(&with(&p, w), &batch).unwrap().0);
        worst[1] = worst[1].max(max_relative_error(&g, &fd));

        let reference = perturb(&p, &mut r, 0.3);
        let current = perturb(&p, &mut r, 0.1);
        let rollouts = rollouts(&p, &mut r, 2, 4);
        let cfg = GrpoConfig { beta: 0.05, ..GrpoConfig::default() };
        let (_, g) = grpo_objective(&current, &reference, &rollouts, &cfg).map_err(|e| e.to_string())?;
        let fd = central_difference(current.weights(), H, |w| grpo_objective(&with(&current, w), &reference, &rollouts, &cfg).unwrap().0);
        worst[2] = worst[2].max(max_relative_error(&g, &fd));
    }
    check(worst.iter().all(|&e| e < 1e-4), || format!("max relative errors {worst:?}"))?;
    Ok(format!(
        "50 instances, {} params, max rel err log_prob {:.1e} sft {:.1e} grpo {:.1e}",
        base.num_params(),
        worst[0],
        worst[1],
        worst[2]
    ))
}

fn anchors() -> Outcome {
    let mut r = rng(31);
    let p = randomize(&small_policy(), &mut r, 1.0);
    let batch = rollouts(&p, &mut r, 4, 8);
    let cfg = GrpoConfig::default();
    let (j, _) = grpo_objective(&p, &p, &batch, &cfg).map_err(|e| e.to_string())?;
    check(j.abs() < 1e-12, || format!("J = {j} at the old and reference policy"))?;

    let reference = perturb(&p, &mut r, 0.3);
    let current = perturb(&p, &mut r, 0.1);
    let shifted: Vec<GroupRollout> = batch
        .iter()
        .map(|g| {
            let rewards: Vec<f64> = g.rewards.iter().map(|x| x + 3.7).collect();
            GroupRollout { advantages: compute_advantages(&rewards, 1e-8), rewards, ..g.clone() }
        })
        .collect();
    let (a, _) = grpo_objective(&current, &reference, &batch, &cfg).map_err(|e| e.to_string())?;
    let (b, _) = grpo_objective(&current, &reference, &shifted, &cfg).map_err(|e| e.to_string())?;
    check((a - b).abs() < 1e-12, || format!("shift moved J from {a} to {b}"))?;

    // Every token of the response is pushed past the clip range.
    let no_kl = GrpoConfig { beta: 0.0, ..GrpoConfig::default() };
    for (adv, rho) in [(1.0, 1.5), (-1.0, 0.5)] {
        let ctx = random_context(&p, &mut r);
        let mut y = p.sample(&ctx, 9, 5);
        y.logprobs = p.log_prob(&ctx, &y.tokens).unwrap().iter().map(|lp| lp - f64::ln(rho)).collect();
        let one = vec![GroupRollout { context: ctx, label: Label::A, trajectories: vec![y], rewards: vec![0.0], advantages: vec![adv] }];
        let (_, g) = grpo_objective(&p, &p, &one, &no_kl).map_err(|e| e.to_string())?;
        check(g.iter().all(|&x| x == 0.0), || format!("clipped tokens with A = {adv}, ratio {rho} carry gradient"))?;
    }
    Ok(format!("J = {j:.1e}, shift delta {:.1e}, clipped gradient 0", (a - b).abs()))
}

fn synthetic_end_to_end() -> Outcome {
    let cfg = BenchmarkConfig::default();
    check(cfg.train == 2_000 && cfg.test == 500, || format!("sizes {}/{}", cfg.train, cfg.test))?;
    check(cfg.grpo.group_size == 8 && cfg.grpo.alpha == 0.2 && cfg.grpo.beta == 0.001, || format!("{:?}", cfg.grpo))?;
    let a = run_benchmark(&cfg).map_err(|e| e.to_string())?;
    check((45.0..=55.0).contains(&a.untrained.accuracy), || format!("untrained {}", a.untrained.accuracy))?;
    check(a.sft.format_rate >= 99.0 && a.sft.accuracy >= 80.0, || format!("sft {:?}", a.sft))?;
    check(a.grpo.accuracy >= 90.0 && a.grpo.accuracy >= a.sft.accuracy, || format!("grpo {:?} vs sft {:?}", a.grpo, a.sft))?;
    let b = run_benchmark(&cfg).map_err(|e| e.to_string())?;
    check(
        a.grpo_checkpoint == b.grpo_checkpoint && a.untrained == b.untrained && a.sft == b.sft && a.grpo == b.grpo,
        || "two runs with one seed differ".into(),
    )?;
    Ok(format!(
        "{}/{} pairs, accuracy untrained {:.1}, sft {:.1} (format {:.1}), grpo {:.1}, deterministic",
        a.train_size, a.test_size, a.untrained.accuracy, a.sft.accuracy, a.sft.format_rate, a.grpo.accuracy
    ))
}

fn pipeline() -> Outcome {
    let pairs = random_pairs(&mut rng(41), 10_000);
    let kept: BTreeSet<String> = filter_candidates(&pairs, &CollectionCriteria::default())
        .map_err(|e| e.to_string())?
        .into_iter()
        .map(|p| p.pair_id)
        .collect();
    let expected = brute_force_filter(&pairs);
    check(kept == expected, || format!("filter kept {} vs oracle {}", kept.len(), expected.len()))?;

    let out = assign_split(&pairs, &SplitConfig::default()).map_err(|e| e.to_string())?;
    let mut splits: BTreeMap<&str, BTreeSet<String>> = BTreeMap::new();
    let mut sizes: BTreeMap<&str, usize> = BTreeMap::new();
    for (before, after) in pairs.iter().zip(&out) {
        check(before.pair_id == after.pair_id && after.split != Split::Unassigned, || format!("{} not split", before.pair_id))?;
        splits.entry(&after.product_id).or_default().insert(format!("{:?}", after.split));
        *sizes.entry(&after.product_id).or_default() += 1;
    }
    check(out.len() == pairs.len() && splits.values().all(|s| s.len() == 1), || "split is not a grouped partition".into())?;
    let train = out.iter().filter(|p| p.split == Split::Train).count();
    let target = (0.8 * pairs.len() as f64).round() as usize;
    let largest = *sizes.values().max().unwrap_or(&0);
    check(train >= target && train - target < largest, || format!("{train} train vs target {target}"))?;

    let mut r = rng(42);
    let mut annotated = random_pairs(&mut r, 2_000);
    for p in &mut annotated {
        p.annotations = Some(random_answers(&mut r));
    }
    let report = drop_indistinguishable(&annotated).map_err(|e| e.to_string())?;
    let expected_drops = brute_force_exit_count(&annotated);
    check(report.removed_count == expected_drops, || format!("dropped {} vs oracle {expected_drops}", report.removed_count))?;
    Ok(format!("filter kept {}/10000, train {train} (target {target}), dropped {expected_drops}/2000", kept.len()))
}

fn indexed(n: usize) -> Vec<CreativeImageRef> {
    (0..n).map(|i| CreativeImageRef::new(format!("{i}"), format!("img://{i}"), vec![])).collect()
}

fn index(c: &CreativeImageRef) -> usize {
    c.id.parse().expect("numeric id")
}

struct Ranked(Vec<i64>);

impl Comparator for Ranked {
    fn compare(&self, a: &CreativeImageRef, b: &CreativeImageRef, _: &ProductContext) -> Result<String, ComparatorError> {
        let w = if self.0[index(a)] > self.0[index(b)] { "A" } else { "B" };
        Ok(format!("<think>rank</think><answer>{w}</answer>"))
    }
}

struct Arbitrary(u64);

impl Comparator for Arbitrary {
    fn compare(&self, a: &CreativeImageRef, b: &CreativeImageRef, _: &ProductContext) -> Result<String, ComparatorError> {
        Ok(match derive_seed(self.0, &[index(a) as u64, index(b) as u64]) % 3 {
            0 => "<think>t</think><answer>A</answer>".into(),
            1 => "<think>t</think><answer>B</answer>".into(),
            _ => "no tags at all".into(),
        })
    }
}

fn tournament() -> Outcome {
    let mut r = rng(51);
    let ctx = ProductContext::default();
    for n in 2..=8 {
        for trial in 0..200 {
            let mut scores: Vec<i64> = (0..n as i64).collect();
            scores.shuffle(&mut r);
            let cfg = TournamentConfig { max_concurrency: 1 + trial % 4, ..Default::default() };
            let res = run_tournament(&indexed(n), &ctx, &Ranked(scores.clone()), &cfg).map_err(|e| e.to_string())?;
            check(res.ranking == sorted_by_score(&scores), || format!("n = {n}: ranking {:?} vs {scores:?}", res.ranking))?;
        }
    }
    let mut undecided = 0;
    for trial in 0..200u64 {
        let n = r.random_range(2..=8);
        let res = run_tournament(&indexed(n), &ctx, &Arbitrary(trial), &TournamentConfig::default()).map_err(|e| e.to_string())?;
        let total = res.wins.iter().sum::<f64>() + res.undecided_count as f64;
        check(total == (n * (n - 1) / 2) as f64, || format!("trial {trial}: wins + undecided = {total}"))?;
        undecided += res.undecided_count;
    }

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let state = ServiceState::new(vec![DatasetStore::open(dir.path(), "d").map_err(|e| e.to_string())?])
        .with_toy(Arc::new(common::RuleComparator(creative_select::synth::PreferenceRule::default())));
    let (base, _) = common::spawn_service(state);
    let req = serde_json::json!({"candidates": common::candidates(4, 9), "context": {"title": "Mug", "query_terms": []}, "k": 2});
    let resp = reqwest::blocking::Client::new().post(format!("{base}/v1/select")).json(&req).send().map_err(|e| e.to_string())?;
    let status = resp.status();
    let body: serde_json::Value = resp.json().map_err(|e| e.to_string())?;
    let comparisons = body["result"]["comparisons"].as_array().map_or(0, Vec::len);
    check(status.is_success() && comparisons == 6, || format!("POST /v1/select gave {status} with {comparisons} comparisons"))?;
    Ok(format!("1400 transitive and 200 arbitrary tournaments ({undecided} undecided), POST /v1/select ran 6 comparisons"))
}

fn metrics() -> Outcome {
    let rel = relative_improvement(0.0525, 0.05).map_err(|e| e.to_string())?;
    check(rel == 5.0, || format!("relative_improvement(0.0525, 0.05) = {rel}"))?;
    use Label::{A, B};
    for (pred, labels, want) in [
        (vec![A, B, A, B], vec![A, B, A, B], 100.0),
        (vec![A, A, A, A], vec![A, B, A, B], 50.0),
        (vec![B, B, B, A], vec![A, A, A, B], 0.0),
        (vec![A, B, B, B], vec![A, B, A, B], 75.0),
    ] {
        let got = selection_accuracy(&pred, &labels).map_err(|e| e.to_string())?;
        check(got == want, || format!("selection_accuracy {got} vs {want}"))?;
    }
    check(selection_accuracy(&[A], &[A, B]).is_err() && selection_accuracy(&[], &[]).is_err(), || "bad inputs accepted".into())?;
    for raw in 0..=10u8 {
        let v = JudgeVerdict::new(raw, "j", None, 1);
        check(v.normalized == f64::from(raw) * 10.0, || format!("raw {raw} normalized to {}", v.normalized))?;
        let reply = format!("Score: {raw}");
        let client = |_: &str| -> Result<String, creative_select::client::ClientError> { Ok(reply.clone()) };
        let judged = judge_score(&client, "j", "a", "b", &ProductContext::default()).map_err(|e| e.to_string())?;
        check(judged.normalized == f64::from(raw) * 10.0, || format!("judge reply {reply:?} gave {}", judged.normalized))?;
    }
    Ok("+5.0 exactly, 4 accuracy fixtures, judge 0..10 -> 0..100".into())
}

fn persistence() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut store = DatasetStore::open(dir.path(), "p").map_err(|e| e.to_string())?;
    common::random_run(&mut store, 1_000, 61);
    store.write_snapshot().map_err(|e| e.to_string())?;
    let log = std::fs::read(store.log_path()).map_err(|e| e.to_string())?;
    let snapshot = std::fs::read(store.snapshot_path()).map_err(|e| e.to_string())?;
    let replayed = replay("p", log.as_slice()).map_err(|e| e.to_string())?;
    check(replayed.to_bytes() == snapshot, || "replay differs from snapshot".into())?;
    let (log_path, expected) = (store.log_path(), store.state().clone());
    drop(store);

    // Half-written event 1001 after a crash.
    let mut f = std::fs::OpenOptions::new().append(true).open(&log_path).map_err(|e| e.to_string())?;
    f.write_all(br#"{"seq":1001,"event":{"split_ass"#).map_err(|e| e.to_string())?;
    drop(f);
    let refused = DatasetStore::open(dir.path(), "p").err().map(|e| e.code());
    check(refused == Some("CORRUPT_LOG"), || format!("torn tail opened with {refused:?}"))?;
    let recovered = DatasetStore::open_with(dir.path(), "p", Recovery::TruncateTail).map_err(|e| e.to_string())?;
    check(*recovered.state() == expected, || "recovery lost events".into())?;
    Ok(format!("1000 events, snapshot {} bytes identical, torn tail recovered to seq {}", snapshot.len(), recovered.state().last_seq))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("reward unit suite", Duration::from_secs(5), rewards),
        ("advantage normalization", Duration::from_secs(5), advantages),
        ("gradient oracles", Duration::from_secs(120), gradients),
        ("grpo sanity anchors", Duration::from_secs(60), anchors),
        ("synthetic end-to-end", Duration::from_secs(15 * 60), synthetic_end_to_end),
        ("pipeline oracle", Duration::from_secs(60), pipeline),
        ("tournament oracle", Duration::from_secs(60), tournament),
        ("metric arithmetic", Duration::from_secs(5), metrics),
        ("persistence", Duration::from_secs(60), persistence),
    ];
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (name, budget, run) in criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_else(|| "panicked".into()))
        });
        let took = start.elapsed();
        let outcome = outcome.and_then(|d| if took <= budget { Ok(d) } else { Err(format!("{d}; over the {budget:?} budget")) });
        let (tag, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(e) => {
                failed += 1;
                ("FAIL", e)
            }
        };
        println!("{tag} {name:<24} {:>7.2}s  {detail}", took.as_secs_f64());
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
