//! Round-robin selection: every pair of candidates is judged once by a
//! pairwise comparator, and candidates are ranked by win count.

use serde::{Deserialize, Serialize};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;
use thiserror::Error;

use crate::client::{ClientError, TextClient};
use crate::codec::{parse, StructuredResponse};
use crate::model::{CreativeImageRef, CreativePairSample, Label, ProductContext, Split};
use crate::prompt::build_prompt;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ComparatorError {
    #[error("COMPARATOR_UNAVAILABLE: {0}")]
    Unavailable(String),
}

impl From<ClientError> for ComparatorError {
    fn from(e: ClientError) -> Self {
        ComparatorError::Unavailable(e.to_string())
    }
}

/// Anything that reads two creatives and answers in the structured
/// `<think>..</think><answer>..</answer>` shape.
pub trait Comparator: Send + Sync {
    fn compare(
        &self,
        a: &CreativeImageRef,
        b: &CreativeImageRef,
        context: &ProductContext,
    ) -> Result<String, ComparatorError>;
}

/// Comparator backed by a remote text-generation client, prompted exactly
/// like a training sample.
pub struct ClientComparator<C> {
    pub client: C,
}

impl<C: TextClient> Comparator for ClientComparator<C> {
    fn compare(
        &self,
        a: &CreativeImageRef,
        b: &CreativeImageRef,
        context: &ProductContext,
    ) -> Result<String, ComparatorError> {
        let sample = CreativePairSample {
            pair_id: format!("{}|{}", a.id, b.id),
            product_id: String::new(),
            context: context.clone(),
            image_a: a.clone(),
            image_b: b.clone(),
            stats_a: None,
            stats_b: None,
            label: None,
            annotations: None,
            cot: None,
            split: Split::Unassigned,
        };
        let bundle = build_prompt(&sample);
        Ok(self.client.complete(&bundle.prompt_text, &bundle.image_slots)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Winner {
    A,
    B,
    Undecided,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparatorOutcome {
    pub winner: Winner,
    pub response: Option<StructuredResponse>,
    pub attempts: u32,
}

/// Asks `comparator` about one ordered pair, retrying malformed replies up
/// to `retries` times before giving up as undecided.
pub fn compare_pair(
    comparator: &dyn Comparator,
    a: &CreativeImageRef,
    b: &CreativeImageRef,
    context: &ProductContext,
    retries: u32,
) -> Result<ComparatorOutcome, ComparatorError> {
    for attempt in 1..=retries + 1 {
        let raw = comparator.compare(a, b, context)?;
        if let Ok(resp) = parse(&raw) {
            if let Some(label) = resp.answer_label() {
                let winner = match label {
                    Label::A => Winner::A,
                    Label::B => Winner::B,
                };
                return Ok(ComparatorOutcome {
                    winner,
                    response: Some(resp),
                    attempts: attempt,
                });
            }
        }
    }
    Ok(ComparatorOutcome {
        winner: Winner::Undecided,
        response: None,
        attempts: retries + 1,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TournamentError {
    #[error("TOO_FEW: need at least 2 candidates, got {0}")]
    TooFew(usize),
    #[error("K_RANGE: k = {k} outside 1..={n}")]
    KRange { k: usize, n: usize },
}

/// All `(i, j)` with `i < j`, in lexicographic order.
pub fn enumerate_pairs(n: usize) -> Result<Vec<(usize, usize)>, TournamentError> {
    if n < 2 {
        return Err(TournamentError::TooFew(n));
    }
    Ok((0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TournamentConfig {
    pub retries: u32,
    /// Present every pair in both orders, each worth half a win.
    pub both_orders: bool,
    /// Upper bound on comparator calls in flight.
    pub max_concurrency: usize,
}

impl Default for TournamentConfig {
    fn default() -> Self {
        Self {
            retries: 2,
            both_orders: false,
            max_concurrency: 4,
        }
    }
}

/// One presentation: candidate `a` shown in slot A, `b` in slot B.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub a: usize,
    pub b: usize,
    pub outcome: ComparatorOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TournamentResult {
    pub candidates: Vec<CreativeImageRef>,
    /// Whole wins, or halves when every pair is shown in both orders.
    pub wins: Vec<f64>,
    pub comparisons: Vec<Comparison>,
    /// Candidate indices by wins descending, ties by index ascending.
    pub ranking: Vec<usize>,
    /// Presentations that ended undecided.
    pub undecided_count: usize,
    pub both_orders: bool,
    /// Set when the comparator became unavailable mid-run; only the
    /// comparisons listed were completed.
    pub partial: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

impl TournamentResult {
    /// Weight of one presentation: 1, or 1/2 in mirrored mode.
    pub fn presentation_weight(&self) -> f64 {
        if self.both_orders {
            0.5
        } else {
            1.0
        }
    }
}

/// Sorts indices by wins descending, breaking ties by index.
pub fn rank_by_wins(wins: &[f64]) -> Vec<usize> {
    let mut ranking: Vec<usize> = (0..wins.len()).collect();
    ranking.sort_by(|&x, &y| wins[y].total_cmp(&wins[x]).then(x.cmp(&y)));
    ranking
}

/// Runs every comparison with at most `cfg.max_concurrency` in flight.
/// Results are gathered by pair index, so scheduling never changes them.
pub fn run_tournament(
    candidates: &[CreativeImageRef],
    context: &ProductContext,
    comparator: &dyn Comparator,
    cfg: &TournamentConfig,
) -> Result<TournamentResult, TournamentError> {
    let n = candidates.len();
    let mut jobs = enumerate_pairs(n)?;
    let weight = if cfg.both_orders {
        jobs = jobs.into_iter().flat_map(|(i, j)| [(i, j), (j, i)]).collect();
        0.5
    } else {
        1.0
    };
    let slots: Vec<Mutex<Option<ComparatorOutcome>>> = jobs.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let failed = AtomicBool::new(false);
    let error: Mutex<Option<String>> = Mutex::new(None);
    let workers = cfg.max_concurrency.clamp(1, jobs.len());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                if failed.load(Ordering::SeqCst) {
                    break;
                }
                let k = next.fetch_add(1, Ordering::SeqCst);
                let Some(&(i, j)) = jobs.get(k) else { break };
                match compare_pair(comparator, &candidates[i], &candidates[j], context, cfg.retries) {
                    Ok(outcome) => *slots[k].lock().expect("slot lock") = Some(outcome),
                    Err(e) => {
                        failed.store(true, Ordering::SeqCst);
                        error.lock().expect("error lock").get_or_insert(e.to_string());
                        break;
                    }
                }
            });
        }
    });

    let mut wins = vec![0.0; n];
    let mut comparisons = Vec::with_capacity(jobs.len());
    let mut undecided_count = 0;
    for (&(a, b), slot) in jobs.iter().zip(slots) {
        let Some(outcome) = slot.into_inner().expect("slot lock") else { continue };
        match outcome.winner {
            Winner::A => wins[a] += weight,
            Winner::B => wins[b] += weight,
            Winner::Undecided => undecided_count += 1,
        }
        comparisons.push(Comparison { a, b, outcome });
    }
    let error = error.into_inner().expect("error lock");
    Ok(TournamentResult {
        candidates: candidates.to_vec(),
        ranking: rank_by_wins(&wins),
        wins,
        comparisons,
        undecided_count,
        both_orders: cfg.both_orders,
        partial: error.is_some(),
        error,
    })
}

/// The first `k` candidates of the ranking.
pub fn top_k(result: &TournamentResult, k: usize) -> Result<Vec<CreativeImageRef>, TournamentError> {
    let n = result.candidates.len();
    if k == 0 || k > n {
        return Err(TournamentError::KRange { k, n });
    }
    Ok(result.ranking[..k].iter().map(|&i| result.candidates[i].clone()).collect())
}
