//! End-to-end run on synthetic pairs: base policy, supervised fine-tuning on
//! reasoning traces, then GRPO. Prints held-out accuracy for each stage.
//!
//! ```text
//! cargo run --release -p creative-select --example synthetic_benchmark
//! ```

use creative_select::benchmark::{run_benchmark, BenchmarkConfig};

fn main() {
    let mut cfg = BenchmarkConfig::default();
    let mut args = std::env::args().skip(1);
    while let Some(flag) = args.next() {
        let value = args.next().expect("flag needs a value");
        match flag.as_str() {
            "--seed" => cfg.seed = value.parse().expect("seed"),
            "--train" => cfg.train = value.parse().expect("train"),
            "--test" => cfg.test = value.parse().expect("test"),
            "--sft-lr" => cfg.sft.learning_rate = value.parse().expect("sft lr"),
            "--sft-epochs" => cfg.sft.epochs = value.parse().expect("sft epochs"),
            "--grpo-lr" => cfg.grpo.learning_rate = value.parse().expect("grpo lr"),
            "--grpo-epochs" => cfg.grpo.epochs = value.parse().expect("grpo epochs"),
            "--margin" => cfg.base_margin = value.parse().expect("margin"),
            other => panic!("unknown flag {other}"),
        }
    }
    let report = run_benchmark(&cfg).expect("benchmark");
    println!("pairs: {} train / {} test, {} parameters", report.train_size, report.test_size, report.num_params);
    for (name, s) in [("untrained", report.untrained), ("cot-sft", report.sft), ("grpo", report.grpo)] {
        println!(
            "{name:>10}: accuracy {:6.2}%  format {:6.2}%  mean reward {:.3}",
            s.accuracy, s.format_rate, s.mean_reward
        );
    }
    println!("sft loss: initial {:.4}", report.sft_initial_loss);
    for p in &report.sft_curve {
        println!("  epoch {} loss {:.4}", p.epoch, p.loss.unwrap_or(f64::NAN));
    }
    for p in &report.grpo_curve {
        println!(
            "  grpo epoch {} reward {:.4} accuracy {:.4} format {:.4}",
            p.epoch,
            p.reward.unwrap_or(f64::NAN),
            p.accuracy.unwrap_or(f64::NAN),
            p.format_rate.unwrap_or(f64::NAN)
        );
    }
    println!("elapsed {:.1}s", report.seconds);
}
