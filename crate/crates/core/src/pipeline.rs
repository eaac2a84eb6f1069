//! Dataset construction: exposure filtering, query-term filtering, split
//! assignment, and removal of pairs annotators could not tell apart.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashSet};
use thiserror::Error;

use crate::model::{CreativePairSample, Split};
use crate::protocol;
use crate::tagger::{PosTag, PosTagger, TaggerError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GapMode {
    /// `(max - min) / min`
    #[default]
    RelativeToLower,
    /// `|a - b|`
    Absolute,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CollectionCriteria {
    /// Both creatives need strictly more impressions than this.
    pub min_pv: u64,
    /// The CTR gap must strictly exceed this.
    pub min_ctr_gap: f64,
    pub gap_mode: GapMode,
}

impl Default for CollectionCriteria {
    fn default() -> Self {
        Self {
            min_pv: 1000,
            min_ctr_gap: 0.60,
            gap_mode: GapMode::RelativeToLower,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitConfig {
    pub train_fraction: f64,
    pub seed: u64,
    pub group_by_product: bool,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            train_fraction: 0.8,
            seed: 0,
            group_by_product: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PipelineError {
    #[error("MISSING_STATS: pair {0} has no exposure stats")]
    MissingStats(String),
    #[error("UNANNOTATED: pair {0} has no annotations")]
    Unannotated(String),
    #[error("pair {pair_id}: {source}")]
    Protocol {
        pair_id: String,
        source: protocol::ProtocolError,
    },
    #[error("train_fraction must lie in (0, 1), got {0}")]
    TrainFraction(f64),
}

/// CTR difference under `mode`. In relative mode a zero lower CTR with a
/// positive upper CTR yields `f64::INFINITY`; two zeros yield 0.
pub fn ctr_gap(ctr_a: f64, ctr_b: f64, mode: GapMode) -> f64 {
    let (lo, hi) = if ctr_a <= ctr_b { (ctr_a, ctr_b) } else { (ctr_b, ctr_a) };
    match mode {
        GapMode::Absolute => hi - lo,
        GapMode::RelativeToLower if lo == 0.0 => {
            if hi > 0.0 {
                f64::INFINITY
            } else {
                0.0
            }
        }
        GapMode::RelativeToLower => (hi - lo) / lo,
    }
}

/// Keeps pairs where both sides exceed `min_pv` impressions and the CTR gap
/// exceeds `min_ctr_gap`. Input order is preserved.
pub fn filter_candidates(
    pairs: &[CreativePairSample],
    criteria: &CollectionCriteria,
) -> Result<Vec<CreativePairSample>, PipelineError> {
    let mut out = Vec::new();
    for pair in pairs {
        let (Some(a), Some(b)) = (pair.stats_a, pair.stats_b) else {
            return Err(PipelineError::MissingStats(pair.pair_id.clone()));
        };
        if a.pv > criteria.min_pv
            && b.pv > criteria.min_pv
            && ctr_gap(a.ctr, b.ctr, criteria.gap_mode) > criteria.min_ctr_gap
        {
            out.push(pair.clone());
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct QueryFilterOutcome {
    pub kept: Vec<String>,
    /// Terms the tagger could not classify; they are dropped.
    pub skipped: Vec<(String, TaggerError)>,
}

/// Keeps adjectives in input order, dropping exact repeats.
pub fn filter_query_terms(terms: &[String], tagger: &dyn PosTagger) -> QueryFilterOutcome {
    let mut seen = HashSet::new();
    let mut out = QueryFilterOutcome::default();
    for term in terms {
        match tagger.tag(term) {
            Ok(PosTag::Adjective) => {
                if seen.insert(term.as_str()) {
                    out.kept.push(term.clone());
                }
            }
            Ok(_) => {}
            Err(e) => out.skipped.push((term.clone(), e)),
        }
    }
    out
}

fn stable_hash(seed: u64, key: &str) -> u64 {
    // FNV-1a over the seed bytes then the key, finished with a splitmix round
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in seed.to_le_bytes().iter().chain(key.as_bytes()) {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    crate::rng::splitmix64(h)
}

/// Assigns TRAIN/TEST. Groups (products, or single pairs when
/// `group_by_product` is off) are visited in an order fixed by the seed and
/// the group key alone, and go to TRAIN until the train count reaches
/// `round(train_fraction * n)`. The result does not depend on input order or
/// on any split already present.
pub fn assign_split(
    samples: &[CreativePairSample],
    config: &SplitConfig,
) -> Result<Vec<CreativePairSample>, PipelineError> {
    if !(config.train_fraction > 0.0 && config.train_fraction < 1.0) {
        return Err(PipelineError::TrainFraction(config.train_fraction));
    }
    let mut groups: BTreeMap<&str, usize> = BTreeMap::new();
    for s in samples {
        let key = if config.group_by_product { &s.product_id } else { &s.pair_id };
        *groups.entry(key.as_str()).or_default() += 1;
    }
    let mut order: Vec<(u64, &str, usize)> = groups
        .into_iter()
        .map(|(k, n)| (stable_hash(config.seed, k), k, n))
        .collect();
    order.sort_unstable();

    let target = (config.train_fraction * samples.len() as f64).round() as usize;
    let mut train_keys = HashSet::new();
    let mut train_count = 0;
    for (_, key, n) in order {
        if train_count < target {
            train_keys.insert(key);
            train_count += n;
        }
    }
    Ok(samples
        .iter()
        .map(|s| {
            let key = if config.group_by_product { &s.product_id } else { &s.pair_id };
            let mut s = s.clone();
            s.split = if train_keys.contains(key.as_str()) { Split::Train } else { Split::Test };
            s
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DropReport {
    pub kept: Vec<CreativePairSample>,
    pub removed_count: usize,
}

/// Removes pairs whose Q1 or Q2 answer is YES.
pub fn drop_indistinguishable(samples: &[CreativePairSample]) -> Result<DropReport, PipelineError> {
    let mut report = DropReport::default();
    for s in samples {
        let answers = s
            .annotations
            .as_ref()
            .ok_or_else(|| PipelineError::Unannotated(s.pair_id.clone()))?;
        let exited = protocol::early_exit(answers).map_err(|source| PipelineError::Protocol {
            pair_id: s.pair_id.clone(),
            source,
        })?;
        if exited {
            report.removed_count += 1;
        } else {
            report.kept.push(s.clone());
        }
    }
    Ok(report)
}

/// Counts at each stage of dataset construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FunnelCounts {
    pub collected: usize,
    pub filtered: usize,
    pub annotated: usize,
    pub excluded: usize,
    pub train: usize,
    pub test: usize,
}
