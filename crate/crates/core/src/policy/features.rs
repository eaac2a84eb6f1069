use serde::{Deserialize, Serialize};

use super::vocab::TokenId;

/// Input encoding: the descriptor tag tokens of each image slot.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PolicyContext {
    pub slot_a: Vec<TokenId>,
    pub slot_b: Vec<TokenId>,
}

/// Features gated on `previous token == trigger`.
///
/// By default there is one feature per (slot, tag), `[slot contains tag]`,
/// with all A-slot tags first. With `pairwise` there is one feature per
/// (A tag, B tag) combination, `[A has tag i] * [B has tag j]`, row-major in
/// `i`, which lets a linear policy read off a comparison in one step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conjunction {
    pub trigger: TokenId,
    pub tags: Vec<TokenId>,
    #[serde(default)]
    pub pairwise: bool,
}

impl Conjunction {
    pub fn width(&self) -> usize {
        if self.pairwise {
            self.tags.len() * self.tags.len()
        } else {
            2 * self.tags.len()
        }
    }
}

/// `[previous token == trigger] * [token right after the first `source` in the prefix == value]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CopyFeature {
    pub trigger: TokenId,
    pub source: TokenId,
    pub values: Vec<TokenId>,
}

/// Deterministic map from (context, prefix) to a fixed-width binary feature
/// vector. Layout: bias, position one-hot (`max_len`), previous-token
/// one-hot (`vocab_size`), then each conjunction block, then each copy block.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub vocab_size: usize,
    pub max_len: usize,
    #[serde(default)]
    pub conjunctions: Vec<Conjunction>,
    #[serde(default)]
    pub copies: Vec<CopyFeature>,
}

/// Non-zero features as `(index, value)`, ascending by index.
pub type SparseFeatures = Vec<(usize, f64)>;

impl FeatureSpec {
    pub fn plain(vocab_size: usize, max_len: usize) -> Self {
        Self {
            vocab_size,
            max_len,
            conjunctions: Vec::new(),
            copies: Vec::new(),
        }
    }

    pub fn position_offset(&self) -> usize {
        1
    }

    pub fn prev_offset(&self) -> usize {
        1 + self.max_len
    }

    fn conj_offset(&self) -> usize {
        self.prev_offset() + self.vocab_size
    }

    pub fn width(&self) -> usize {
        self.conj_offset()
            + self.conjunctions.iter().map(Conjunction::width).sum::<usize>()
            + self.copies.iter().map(|c| c.values.len()).sum::<usize>()
    }

    pub fn extract(&self, ctx: &PolicyContext, prefix: &[TokenId]) -> SparseFeatures {
        let mut out = vec![(0, 1.0)];
        let pos = prefix.len();
        if pos < self.max_len {
            out.push((self.position_offset() + pos, 1.0));
        }
        let prev = prefix.last().copied();
        if let Some(p) = prev {
            out.push((self.prev_offset() + p, 1.0));
        }
        let mut offset = self.conj_offset();
        for conj in &self.conjunctions {
            if prev == Some(conj.trigger) {
                let n = conj.tags.len();
                if conj.pairwise {
                    for (i, ta) in conj.tags.iter().enumerate() {
                        if !ctx.slot_a.contains(ta) {
                            continue;
                        }
                        for (j, tb) in conj.tags.iter().enumerate() {
                            if ctx.slot_b.contains(tb) {
                                out.push((offset + i * n + j, 1.0));
                            }
                        }
                    }
                } else {
                    for (slot_index, slot) in [&ctx.slot_a, &ctx.slot_b].into_iter().enumerate() {
                        for (k, tag) in conj.tags.iter().enumerate() {
                            if slot.contains(tag) {
                                out.push((offset + slot_index * n + k, 1.0));
                            }
                        }
                    }
                }
            }
            offset += conj.width();
        }
        for copy in &self.copies {
            if prev == Some(copy.trigger) {
                let copied = prefix
                    .iter()
                    .position(|&t| t == copy.source)
                    .and_then(|i| prefix.get(i + 1));
                if let Some(k) = copied.and_then(|c| copy.values.iter().position(|v| v == c)) {
                    out.push((offset + k, 1.0));
                }
            }
            offset += copy.values.len();
        }
        out
    }

    pub fn dense(&self, ctx: &PolicyContext, prefix: &[TokenId]) -> Vec<f64> {
        let mut v = vec![0.0; self.width()];
        for (i, x) in self.extract(ctx, prefix) {
            v[i] = x;
        }
        v
    }
}
