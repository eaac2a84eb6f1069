use serde::{Deserialize, Serialize};
use std::collections::HashMap;

use super::PolicyError;
use crate::codec::{ANSWER_CLOSE, ANSWER_OPEN, THINK_CLOSE, THINK_OPEN};

pub type TokenId = usize;

pub const EOS: &str = "<eos>";

/// Tokens every vocabulary starts with, at ids 0..=6.
pub const RESERVED: [&str; 7] = [THINK_OPEN, THINK_CLOSE, ANSWER_OPEN, ANSWER_CLOSE, EOS, "A", "B"];

pub const THINK_OPEN_ID: TokenId = 0;
pub const THINK_CLOSE_ID: TokenId = 1;
pub const ANSWER_OPEN_ID: TokenId = 2;
pub const ANSWER_CLOSE_ID: TokenId = 3;
pub const EOS_ID: TokenId = 4;
pub const A_ID: TokenId = 5;
pub const B_ID: TokenId = 6;

/// Dense token inventory. Tokenization splits on the four tag tokens and
/// then on whitespace; there is no subword model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
}

fn is_tag(id: TokenId) -> bool {
    id <= ANSWER_CLOSE_ID
}

impl Vocabulary {
    /// Reserved tokens followed by `content` in order, duplicates dropped.
    pub fn new<I, S>(content: I) -> Result<Self, PolicyError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut tokens: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        for t in content {
            let t = t.into();
            if RESERVED.contains(&t.as_str()) {
                continue;
            }
            if t.is_empty() || t.chars().any(char::is_whitespace) || RESERVED[..5].iter().any(|r| t.contains(r)) {
                return Err(PolicyError::BadToken(t));
            }
            if !tokens.contains(&t) {
                tokens.push(t);
            }
        }
        Self::try_from(tokens)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: TokenId) -> &str {
        &self.tokens[id]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn tokenize(&self, text: &str) -> Result<Vec<TokenId>, PolicyError> {
        let mut out = Vec::new();
        let mut rest = text;
        while !rest.is_empty() {
            let next_tag = RESERVED[..4]
                .iter()
                .enumerate()
                .filter_map(|(id, tag)| rest.find(tag).map(|pos| (pos, id, tag.len())))
                .min();
            let (plain, after) = match next_tag {
                Some((pos, _, _)) => rest.split_at(pos),
                None => (rest, ""),
            };
            for word in plain.split_whitespace() {
                out.push(self.id(word).ok_or_else(|| PolicyError::UnknownWord(word.to_string()))?);
            }
            match next_tag {
                Some((_, id, len)) => {
                    out.push(id);
                    rest = &after[len..];
                }
                None => rest = "",
            }
        }
        Ok(out)
    }

    /// Tag tokens are glued to their neighbours, other tokens are separated
    /// by single spaces, and end-of-sequence is dropped.
    pub fn detokenize(&self, ids: &[TokenId]) -> String {
        let mut out = String::new();
        let mut prev_plain = false;
        for &id in ids {
            if id == EOS_ID {
                continue;
            }
            let plain = !is_tag(id);
            if plain && prev_plain {
                out.push(' ');
            }
            out.push_str(self.token(id));
            prev_plain = plain;
        }
        out
    }
}

impl TryFrom<Vec<String>> for Vocabulary {
    type Error = PolicyError;

    fn try_from(tokens: Vec<String>) -> Result<Self, PolicyError> {
        if tokens.len() < RESERVED.len() || tokens[..RESERVED.len()] != RESERVED {
            return Err(PolicyError::BadToken("reserved tokens must come first".into()));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(PolicyError::BadToken(format!("duplicate token {t}")));
            }
        }
        Ok(Self { tokens, index })
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.tokens
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reserved_ids_and_round_trip() {
        let v = Vocabulary::new(["Q3", "A>B", "A<B", "Q3"]).unwrap();
        assert_eq!(v.len(), 10);
        assert_eq!(v.id("<think>"), Some(THINK_OPEN_ID));
        assert_eq!(v.id("B"), Some(B_ID));
        let text = "<think>Q3 A>B Q3 A<B</think><answer>A</answer>";
        let ids = v.tokenize(text).unwrap();
        assert_eq!(ids.len(), 9);
        assert_eq!(v.detokenize(&ids), text);
        let mut with_eos = ids.clone();
        with_eos.push(EOS_ID);
        assert_eq!(v.detokenize(&with_eos), text);
    }

    #[test]
    fn unknown_and_bad_tokens() {
        let v = Vocabulary::new(["x"]).unwrap();
        assert!(matches!(v.tokenize("<think>y</think>"), Err(PolicyError::UnknownWord(_))));
        assert!(Vocabulary::new(["two words"]).is_err());
        assert!(Vocabulary::new(["x<answer>"]).is_err());
        assert!(Vocabulary::try_from(vec!["x".to_string()]).is_err());
    }
}
