//! Brute-force reference implementations, written independently of the
//! library code they check. Shared with the workspace acceptance suite.
#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use std::collections::BTreeSet;
use std::sync::OnceLock;

use creative_select::model::{CreativeImageRef, CreativePairSample, ExposureStats, Label, ProductContext, Split};
use creative_select::protocol::{AnswerValue, ProtocolAnswers};

/// Pairs with random exposure stats, including values sitting exactly on
/// the default thresholds, grouped into products of 1 to 4 pairs.
pub fn random_pairs(r: &mut ChaCha8Rng, n: usize) -> Vec<CreativePairSample> {
    let mut product = 0;
    let mut left_in_product = 0;
    (0..n)
        .map(|i| {
            if left_in_product == 0 {
                product += 1;
                left_in_product = r.random_range(1..=4);
            }
            left_in_product -= 1;
            let mut pv = || match r.random_range(0..4) {
                0 => 1000,
                1 => 1001,
                _ => r.random_range(0..5000),
            };
            let (pv_a, pv_b) = (pv(), pv());
            let ctr_a: f64 = r.random_range(0.001..0.2);
            let ctr_b = match r.random_range(0..4) {
                0 => ctr_a * 1.6,
                1 => ctr_a / 1.6,
                _ => r.random_range(0.001..0.2),
            };
            let id = format!("p{i:05}");
            CreativePairSample {
                pair_id: id.clone(),
                product_id: format!("prod{product:05}"),
                context: ProductContext { title: "Mug".into(), query_terms: vec!["ceramic".into()] },
                image_a: CreativeImageRef::new(format!("{id}a"), "img://a", vec![]),
                image_b: CreativeImageRef::new(format!("{id}b"), "img://b", vec![]),
                stats_a: Some(ExposureStats { pv: pv_a, ctr: ctr_a }),
                stats_b: Some(ExposureStats { pv: pv_b, ctr: ctr_b }),
                label: Some(if ctr_a >= ctr_b { Label::A } else { Label::B }),
                annotations: None,
                cot: None,
                split: Split::Unassigned,
            }
        })
        .collect()
}

/// Ids of pairs with both pv > 1000 and relative CTR gap > 0.60.
pub fn brute_force_filter(pairs: &[CreativePairSample]) -> BTreeSet<String> {
    let mut keep = BTreeSet::new();
    for p in pairs {
        let a = p.stats_a.unwrap();
        let b = p.stats_b.unwrap();
        let lower = if a.ctr < b.ctr { a.ctr } else { b.ctr };
        let upper = if a.ctr < b.ctr { b.ctr } else { a.ctr };
        let gap = if lower == 0.0 { if upper > 0.0 { f64::INFINITY } else { 0.0 } } else { (upper - lower) / lower };
        if a.pv > 1000 && b.pv > 1000 && gap > 0.60 {
            keep.insert(p.pair_id.clone());
        }
    }
    keep
}

/// Annotations where Q1 or Q2 is YES roughly one time in three.
pub fn random_answers(r: &mut ChaCha8Rng) -> ProtocolAnswers {
    let yes = |r: &mut ChaCha8Rng| if r.random_range(0..6) == 0 { "YES" } else { "NO" };
    ProtocolAnswers::new("oracle").with(1, yes(r)).with(2, yes(r))
}

pub fn brute_force_exit_count(pairs: &[CreativePairSample]) -> usize {
    pairs
        .iter()
        .filter(|p| {
            let a = &p.annotations.as_ref().unwrap().answers;
            a.get(&1) == Some(&AnswerValue::Yes) || a.get(&2) == Some(&AnswerValue::Yes)
        })
        .count()
}

const FRAGMENTS: &[&str] = &[
    "<think>", "</think>", "<answer>", "</answer>", "A", "B", "a", "b", "C", "x", " ", "\n", "\t", "A>B", "<", ">",
];

/// A random concatenation of tags, answer letters, whitespace and junk.
pub fn tag_soup(r: &mut ChaCha8Rng) -> String {
    if r.random_bool(0.3) {
        let think: String = (0..r.random_range(0..4)).map(|_| FRAGMENTS[r.random_range(4..FRAGMENTS.len())]).collect();
        let answer = ["A", "B", " a ", "b", "C", "", "AB"][r.random_range(0..7)];
        let ws = [" ", "", "\n"][r.random_range(0..3)];
        return format!("{ws}<think>{think}</think>{ws}<answer>{answer}</answer>{ws}");
    }
    (0..r.random_range(0..10)).map(|_| FRAGMENTS[r.random_range(0..FRAGMENTS.len())]).collect()
}

/// Format check from a regular expression; the captured blocks may not
/// contain their own closing tag.
pub fn regex_answer(raw: &str) -> Option<String> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r"(?s)^\s*<think>(.*?)</think>\s*<answer>(.*?)</answer>\s*$").unwrap());
    let c = re.captures(raw)?;
    if c[1].contains("</think>") || c[2].contains("</answer>") {
        return None;
    }
    Some(c[2].trim().to_string())
}

/// Descending order of `scores`, ties by index.
pub fn sorted_by_score(scores: &[i64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    for i in 0..idx.len() {
        for j in 0..idx.len() - 1 - i {
            let (x, y) = (idx[j], idx[j + 1]);
            if scores[y] > scores[x] || (scores[y] == scores[x] && y < x) {
                idx.swap(j, j + 1);
            }
        }
    }
    idx
}
