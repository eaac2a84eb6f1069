//! Synthetic creative pairs for desk-scale runs.
//!
//! Each creative gets one graded tag (level 0..2) on every scored protocol
//! dimension, plus a couple of ungraded decorative tags. A
//! [`PreferenceRule`] turns the graded tags into a score; the higher score
//! wins and exposure stats are drawn so the winner's CTR clears the default
//! collection criteria.

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::model::{CreativeImageRef, CreativePairSample, ExposureStats, Label, ProductContext, Split};
use crate::protocol::{AnswerValue, ProtocolAnswers};
use crate::rng::rng_for;
use crate::taxonomy::{NUM_SCORED, SCORED_DIMENSIONS};

/// Weights over the Q3–Q9 dimensions, in question order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceRule {
    pub weights: [f64; NUM_SCORED],
}

impl Default for PreferenceRule {
    fn default() -> Self {
        Self {
            weights: [3.0, 2.5, 2.0, 1.6, 1.3, 1.0, 0.7],
        }
    }
}

impl PreferenceRule {
    /// A rule that looks at a single question (3..=9).
    pub fn only(question: u8) -> Self {
        let mut weights = [0.0; NUM_SCORED];
        weights[usize::from(question - 3)] = 1.0;
        Self { weights }
    }

    /// Graded levels of a descriptor; missing dimensions count as level 0.
    pub fn levels(descriptor: &[String]) -> [u8; NUM_SCORED] {
        let mut out = [0; NUM_SCORED];
        for (slot, dim) in out.iter_mut().zip(SCORED_DIMENSIONS.iter()) {
            *slot = dim.level_of(descriptor).unwrap_or(0);
        }
        out
    }

    pub fn score(&self, descriptor: &[String]) -> f64 {
        Self::levels(descriptor)
            .iter()
            .zip(self.weights.iter())
            .map(|(&l, w)| w * f64::from(l))
            .sum()
    }

    /// Higher score wins; equal scores go to A.
    pub fn winner(&self, a: &[String], b: &[String]) -> Label {
        if self.score(b) > self.score(a) {
            Label::B
        } else {
            Label::A
        }
    }
}

const DECORATIVE: &[&str] = &[
    "Moderate Size",
    "Oversized Subject",
    "Suitable Angle",
    "Awkward Angle",
    "Centered Position",
    "Off-center Position",
    "Complete Subject",
    "Partial Subject",
    "Multiple Colors",
    "Single Type",
    "Consistent Scene",
    "Clean Background",
];

const QUERY_ADJECTIVES: &[&str] = &[
    "stylish", "black", "soft", "warm", "cute", "breathable", "portable", "lightweight", "organic",
    "waterproof", "classic", "comfortable",
];

const PRODUCTS: &[&str] = &[
    "Cotton Socks", "Running Shoes", "Summer Dress", "Phone Case", "Green Tea", "Desk Lamp",
    "Wool Scarf", "Travel Mug", "Wireless Earbuds", "Face Cream",
];

fn descriptor(levels: &[u8; NUM_SCORED], extras: &[&str]) -> Vec<String> {
    SCORED_DIMENSIONS
        .iter()
        .zip(levels)
        .map(|(d, &l)| d.levels[usize::from(l)].to_string())
        .chain(extras.iter().map(|s| s.to_string()))
        .collect()
}

fn weighted(rule: &PreferenceRule, levels: &[u8; NUM_SCORED]) -> f64 {
    levels
        .iter()
        .zip(rule.weights.iter())
        .map(|(&l, w)| w * f64::from(l))
        .sum()
}

/// `count` labelled pairs, deterministic in `seed`. Labels alternate A, B,
/// A, ... by swapping sides, and pairs with equal scores are redrawn, so the
/// set is balanced and every pair is distinguishable under `rule`. Pairs
/// `2k` and `2k + 1` share a product, so a split grouped by product keeps
/// both sides balanced too.
pub fn generate_synthetic(count: usize, seed: u64, rule: &PreferenceRule) -> Vec<CreativePairSample> {
    (0..count).map(|i| generate_one(i, seed, rule)).collect()
}

fn generate_one(i: usize, seed: u64, rule: &PreferenceRule) -> CreativePairSample {
    let mut rng = rng_for(seed, &[i as u64]);
    let (mut la, mut lb) = loop {
        let mut a = [0u8; NUM_SCORED];
        let mut b = [0u8; NUM_SCORED];
        for k in 0..NUM_SCORED {
            a[k] = rng.random_range(0..3);
            b[k] = rng.random_range(0..3);
        }
        if a != b && (weighted(rule, &a) - weighted(rule, &b)).abs() > 1e-9 {
            break (a, b);
        }
    };
    let want = if i.is_multiple_of(2) { Label::A } else { Label::B };
    let winner = if weighted(rule, &la) > weighted(rule, &lb) { Label::A } else { Label::B };
    if winner != want {
        std::mem::swap(&mut la, &mut lb);
    }

    let extras_a: Vec<&str> = DECORATIVE.choose_multiple(&mut rng, 2).copied().collect();
    let extras_b: Vec<&str> = DECORATIVE.choose_multiple(&mut rng, 2).copied().collect();
    let product = PRODUCTS.choose(&mut rng).copied().unwrap_or("Gadget");
    let n_terms = rng.random_range(1..=3);
    let query_terms: Vec<String> = QUERY_ADJECTIVES
        .choose_multiple(&mut rng, n_terms)
        .map(|s| s.to_string())
        .collect();
    let title = format!("{} {} {}", query_terms[0], product, rng.random_range(100..1000));

    let ctr_lo: f64 = rng.random_range(0.01..0.06);
    let ctr_hi = ctr_lo * (1.0 + rng.random_range(0.65..1.5));
    let (ctr_a, ctr_b) = match want {
        Label::A => (ctr_hi, ctr_lo),
        Label::B => (ctr_lo, ctr_hi),
    };
    let pv_a = rng.random_range(1001..50_000);
    let pv_b = rng.random_range(1001..50_000);

    let pair_id = format!("syn-{seed}-{i:06}");
    CreativePairSample {
        product_id: format!("prod-{seed}-{:06}", i / 2),
        context: ProductContext { title, query_terms },
        image_a: CreativeImageRef::new(
            format!("{pair_id}-a"),
            format!("synthetic://{pair_id}/a"),
            descriptor(&la, &extras_a),
        ),
        image_b: CreativeImageRef::new(
            format!("{pair_id}-b"),
            format!("synthetic://{pair_id}/b"),
            descriptor(&lb, &extras_b),
        ),
        stats_a: Some(ExposureStats { pv: pv_a, ctr: ctr_a }),
        stats_b: Some(ExposureStats { pv: pv_b, ctr: ctr_b }),
        label: Some(want),
        annotations: None,
        cot: None,
        split: Split::Unassigned,
        pair_id,
    }
}

/// A rule-following annotator. Q1 is YES for identical graded levels and Q2
/// is YES when the score gap is below `similarity_threshold`; otherwise every
/// question is answered from the graded levels and Q10 names the rule winner.
pub fn annotate(sample: &CreativePairSample, rule: &PreferenceRule, similarity_threshold: f64) -> ProtocolAnswers {
    let la = PreferenceRule::levels(&sample.image_a.descriptor);
    let lb = PreferenceRule::levels(&sample.image_b.descriptor);
    let same = la == lb;
    let close = (weighted(rule, &la) - weighted(rule, &lb)).abs() < similarity_threshold;
    let yes_no = |b: bool| if b { AnswerValue::Yes } else { AnswerValue::No };
    let mut answers = ProtocolAnswers::new("synthetic")
        .with(1, yes_no(same))
        .with(2, yes_no(!same && close));
    if same || close {
        return answers;
    }
    for (k, dim) in SCORED_DIMENSIONS.iter().enumerate() {
        answers = answers.with(dim.question, AnswerValue::from_comparison(la[k], lb[k]));
    }
    answers.with(10, rule.winner(&sample.image_a.descriptor, &sample.image_b.descriptor))
}
