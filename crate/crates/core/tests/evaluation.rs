//! Test-set evaluation with stub comparators and judges.

use creative_select::client::ClientError;
use creative_select::metrics::{evaluate_test_set, JudgeSetup, JudgeVerdict};
use creative_select::model::{CreativeImageRef, Label, ProductContext};
use creative_select::rng::derive_seed;
use creative_select::synth::{generate_synthetic, PreferenceRule};
use creative_select::tournament::{Comparator, ComparatorError};

struct RuleOracle(PreferenceRule);

impl Comparator for RuleOracle {
    fn compare(&self, a: &CreativeImageRef, b: &CreativeImageRef, _: &ProductContext) -> Result<String, ComparatorError> {
        let w = self.0.winner(&a.descriptor, &b.descriptor);
        Ok(format!("<think>rule</think><answer>{}</answer>", w.letter()))
    }
}

struct CoinFlip;

impl Comparator for CoinFlip {
    fn compare(&self, a: &CreativeImageRef, _: &CreativeImageRef, _: &ProductContext) -> Result<String, ComparatorError> {
        let h = derive_seed(17, &a.id.bytes().map(u64::from).collect::<Vec<_>>());
        Ok(format!("<think>coin</think><answer>{}</answer>", if h.is_multiple_of(2) { "A" } else { "B" }))
    }
}

#[test]
fn perfect_comparator_scores_one_hundred() {
    let rule = PreferenceRule::default();
    let samples = generate_synthetic(50, 1, &rule);
    let report = evaluate_test_set(&RuleOracle(rule), &samples, None).unwrap();
    assert_eq!(report.count, 50);
    assert_eq!(report.records.len(), 50);
    assert_eq!(report.accuracy, 100.0);
    assert_eq!(report.format_rate, 100.0);
}

#[test]
fn coin_flip_stays_near_half() {
    let samples = generate_synthetic(1000, 2, &PreferenceRule::default());
    let report = evaluate_test_set(&CoinFlip, &samples, None).unwrap();
    assert!((45.0..=55.0).contains(&report.accuracy), "{}", report.accuracy);
}

#[test]
fn honest_judge_gives_ten_for_identical_reasoning() {
    let rule = PreferenceRule::default();
    let mut samples = generate_synthetic(4, 3, &rule);
    for s in &mut samples {
        s.cot = Some("rule".into());
    }
    let honest = |prompt: &str| -> Result<String, ClientError> {
        let reference = prompt.split("[Reference reasoning]\n").nth(1).unwrap().split("\n\n").next().unwrap();
        let generated = prompt.split("[Assistant reasoning]\n").nth(1).unwrap().split("\n\n").next().unwrap();
        Ok(if reference == generated { "10".into() } else { "2".into() })
    };
    let judge = JudgeSetup { client: &honest, judge_id: "honest".into() };
    let report = evaluate_test_set(&RuleOracle(rule), &samples, Some(&judge)).unwrap();
    assert_eq!(report.mean_judge_score, Some(100.0));
    let v = report.records[0].judge.clone().unwrap();
    let back: JudgeVerdict = serde_json::from_str(&serde_json::to_string(&v).unwrap()).unwrap();
    assert_eq!(back, v);
    assert_eq!(report.records[0].label, samples[0].label.unwrap());
    assert!(matches!(report.records[1].prediction, Some(Label::A | Label::B)));
}
