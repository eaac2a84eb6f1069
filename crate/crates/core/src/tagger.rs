//! Part-of-speech tagging for query terms.

use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PosTag {
    Adjective,
    Noun,
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("TAGGER_FAILURE: {0}")]
pub struct TaggerError(pub String);

pub trait PosTagger: Send + Sync {
    fn tag(&self, term: &str) -> Result<PosTag, TaggerError>;
}

const ADJECTIVES: &[&str] = &[
    "black", "white", "red", "blue", "green", "pink", "grey", "gray", "brown", "beige", "purple",
    "yellow", "stylish", "soft", "warm", "cool", "cute", "elegant", "vintage", "casual", "formal",
    "slim", "loose", "thick", "thin", "light", "lightweight", "heavy", "large", "small", "big",
    "mini", "long", "short", "new", "cheap", "premium", "luxury", "organic", "fresh", "sweet",
    "spicy", "crispy", "natural", "waterproof", "breathable", "portable", "durable", "comfortable",
    "wireless", "quiet", "fast", "smart", "simple", "classic", "modern", "retro", "oversized",
    "plus-size", "anti-slip", "non-stick", "handmade", "healthy", "sugar-free", "gluten-free",
];

const NOUNS: &[&str] = &[
    "t-shirt", "shirt", "socks", "shoes", "sneakers", "dress", "jacket", "coat", "pants", "jeans",
    "bag", "phone", "case", "charger", "cable", "headphones", "earbuds", "watch", "lamp", "chair",
    "table", "cup", "bottle", "snack", "tea", "coffee", "cookie", "cream", "lipstick", "shampoo",
    "cotton", "wool", "silk", "leather", "kids", "women", "men", "gift", "set",
];

const ADJECTIVE_SUFFIXES: &[&str] = &["ful", "ous", "able", "ible", "ive", "less", "ish", "ic", "al"];

/// Lexicon lookup with a suffix fallback. Deterministic and case-insensitive.
/// Terms without any letter cannot be tagged.
#[derive(Debug, Clone)]
pub struct LexiconTagger {
    adjectives: HashSet<String>,
    nouns: HashSet<String>,
}

impl Default for LexiconTagger {
    fn default() -> Self {
        Self {
            adjectives: ADJECTIVES.iter().map(|s| s.to_string()).collect(),
            nouns: NOUNS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl LexiconTagger {
    pub fn with_adjectives<I: IntoIterator<Item = S>, S: Into<String>>(mut self, words: I) -> Self {
        self.adjectives.extend(words.into_iter().map(|w| w.into().to_lowercase()));
        self
    }
}

impl PosTagger for LexiconTagger {
    fn tag(&self, term: &str) -> Result<PosTag, TaggerError> {
        let t = term.trim().to_lowercase();
        if !t.chars().any(char::is_alphabetic) {
            return Err(TaggerError(format!("cannot tag {term:?}")));
        }
        if self.adjectives.contains(&t) {
            Ok(PosTag::Adjective)
        } else if self.nouns.contains(&t) {
            Ok(PosTag::Noun)
        } else if ADJECTIVE_SUFFIXES.iter().any(|s| t.len() > s.len() + 2 && t.ends_with(s)) {
            Ok(PosTag::Adjective)
        } else {
            Ok(PosTag::Other)
        }
    }
}
