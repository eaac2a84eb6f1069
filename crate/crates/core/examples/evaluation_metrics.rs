//! Offline accuracy on held-out pairs, judge scoring of reasoning, and the
//! online uplift arithmetic used to compare traffic arms.
//!
//! ```text
//! cargo run -p creative-select --example evaluation_metrics
//! ```

use creative_select::client::ClientError;
use creative_select::metrics::{evaluate_test_set, relative_improvement, ArmMetrics, JudgeSetup, OnlineReport};
use creative_select::model::{CreativeImageRef, ProductContext};
use creative_select::synth::{annotate, generate_synthetic, PreferenceRule};
use creative_select::cot::render_cot;
use creative_select::tournament::{Comparator, ComparatorError};

/// Prefers whichever creative has more text content (Q5 only).
struct TextHeavy;

impl Comparator for TextHeavy {
    fn compare(&self, a: &CreativeImageRef, b: &CreativeImageRef, _: &ProductContext) -> Result<String, ComparatorError> {
        let rule = PreferenceRule::only(5);
        let w = rule.winner(&a.descriptor, &b.descriptor);
        Ok(format!("<think>Compared the text in both images.</think><answer>{}</answer>", w.letter()))
    }
}

fn main() {
    let rule = PreferenceRule::default();
    let mut samples = generate_synthetic(200, 5, &rule);
    for s in &mut samples {
        let answers = annotate(s, &rule, 0.0);
        s.cot = Some(render_cot(s, &answers, None).expect("complete"));
    }

    // A stub judge that rewards length, standing in for a remote model.
    let judge = |prompt: &str| -> Result<String, ClientError> {
        let generated = prompt.rsplit("[Assistant reasoning]\n").next().unwrap_or("");
        Ok(format!("{} - brief but relevant", (generated.len() / 40).min(10)))
    };
    let setup = JudgeSetup { client: &judge, judge_id: "length-stub".into() };
    let report = evaluate_test_set(&TextHeavy, &samples, Some(&setup)).expect("labelled samples");
    println!(
        "accuracy {:.1}% over {} pairs, format {:.1}%, judge {:?}",
        report.accuracy, report.count, report.format_rate, report.mean_judge_score
    );

    println!("CTR uplift 0.0525 vs 0.05: {:+.2}%", relative_improvement(0.0525, 0.05).expect("positive control"));
    let online = OnlineReport {
        arms: vec![
            ArmMetrics { arm: "control".into(), ctr: 0.0410, cvr: 0.0120, rpm: 38.0 },
            ArmMetrics { arm: "selected".into(), ctr: 0.0436, cvr: 0.0123, rpm: 39.5 },
        ],
    };
    println!("{:?}", online.uplift("selected", "control").expect("valid arms"));
}
