//! The creative-pair task at toy scale.
//!
//! A pair is encoded as the graded descriptor tags of each slot. The target
//! output is a compact reasoning trace with one marker and verdict per
//! protocol question, followed by the answer:
//!
//! ```text
//! <think>Q3 A>B Q4 A=B ... Q9 A<B Q10 A</think><answer>A</answer><eos>
//! ```
//!
//! The prose reasoning of [`crate::cot`] is for people and remote models;
//! the toy policy learns this compact form.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec;
use crate::model::{CreativeImageRef, CreativePairSample, Label, ProductContext};
use crate::policy::{
    Conjunction, CopyFeature, FeatureSpec, PolicyContext, PolicyError, TokenId, ToyPolicy, Vocabulary,
    ANSWER_CLOSE_ID, ANSWER_OPEN_ID, A_ID, B_ID, EOS_ID, THINK_CLOSE_ID, THINK_OPEN_ID,
};
use crate::protocol::{AnswerValue, ProtocolAnswers};
use crate::taxonomy::{NUM_SCORED, SCORED_DIMENSIONS};
use crate::tournament::{Comparator, ComparatorError};

pub const MAX_LEN: usize = 24;
pub const TARGET_LEN: usize = 22;

const VERDICTS: [&str; 3] = ["A>B", "A=B", "A<B"];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TaskError {
    #[error("pair {0} has no annotations")]
    Unannotated(String),
    #[error("pair {0} has no label")]
    Unlabeled(String),
    #[error("Q{0} is missing or out of domain")]
    Answer(u8),
}

/// Training example for supervised fine-tuning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SftExample {
    pub context: PolicyContext,
    pub target: Vec<TokenId>,
}

/// Prompt plus ground truth for reinforcement fine-tuning and evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledContext {
    pub context: PolicyContext,
    pub label: Label,
}

#[derive(Debug, Clone)]
pub struct PairTask {
    vocab: Vocabulary,
    spec: FeatureSpec,
    /// Q3..=Q10
    markers: [TokenId; 8],
    verdicts: [TokenId; 3],
    /// `tags[d][level]`
    tags: [[TokenId; 3]; NUM_SCORED],
}

impl Default for PairTask {
    fn default() -> Self {
        Self::new()
    }
}

/// Descriptor tags become single tokens by replacing spaces.
pub fn tag_token(tag: &str) -> String {
    tag.replace(' ', "_")
}

impl PairTask {
    pub fn new() -> Self {
        let markers: Vec<String> = (3..=10).map(|q| format!("Q{q}")).collect();
        let tag_tokens: Vec<String> = SCORED_DIMENSIONS
            .iter()
            .flat_map(|d| d.levels.iter().map(|l| tag_token(l)))
            .collect();
        let vocab = Vocabulary::new(
            markers
                .iter()
                .cloned()
                .chain(VERDICTS.iter().map(|v| v.to_string()))
                .chain(tag_tokens.iter().cloned()),
        )
        .expect("static vocabulary");
        let id = |t: &str| vocab.id(t).expect("token in vocabulary");
        let markers: [TokenId; 8] = std::array::from_fn(|i| id(&markers[i]));
        let verdicts = VERDICTS.map(id);
        let tags: [[TokenId; 3]; NUM_SCORED] =
            std::array::from_fn(|d| SCORED_DIMENSIONS[d].levels.map(|l| id(&tag_token(l))));

        let mut conjunctions: Vec<Conjunction> = (0..NUM_SCORED)
            .map(|d| Conjunction {
                trigger: markers[d],
                tags: tags[d].to_vec(),
                pairwise: true,
            })
            .collect();
        conjunctions.push(Conjunction {
            trigger: markers[7],
            tags: tags.iter().flatten().copied().collect(),
            pairwise: false,
        });
        let spec = FeatureSpec {
            vocab_size: vocab.len(),
            max_len: MAX_LEN,
            conjunctions,
            copies: vec![CopyFeature {
                trigger: ANSWER_OPEN_ID,
                source: markers[7],
                values: vec![A_ID, B_ID],
            }],
        };
        Self {
            vocab,
            spec,
            markers,
            verdicts,
            tags,
        }
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn spec(&self) -> &FeatureSpec {
        &self.spec
    }

    /// Uniform policy over the task vocabulary.
    pub fn zero_policy(&self) -> ToyPolicy {
        ToyPolicy::new(self.vocab.clone(), self.spec.clone(), 1.0).expect("consistent spec")
    }

    /// A policy that knows the output skeleton but nothing about the task:
    /// every fixed position gets `margin` on its token, every verdict slot
    /// gets `margin` on all three verdicts, and both answer slots get
    /// `margin` on A and B alike.
    pub fn base_policy(&self, margin: f64) -> ToyPolicy {
        let mut p = self.zero_policy();
        let pos = self.spec.position_offset();
        for (t, allowed) in self.skeleton().iter().enumerate() {
            for &tok in allowed {
                p.add_weight(pos + t, tok, margin);
            }
        }
        p
    }

    /// Tokens admissible at each target position.
    fn skeleton(&self) -> Vec<Vec<TokenId>> {
        let mut s = vec![vec![THINK_OPEN_ID]];
        for d in 0..NUM_SCORED {
            s.push(vec![self.markers[d]]);
            s.push(self.verdicts.to_vec());
        }
        s.push(vec![self.markers[7]]);
        s.push(vec![A_ID, B_ID]);
        s.push(vec![THINK_CLOSE_ID]);
        s.push(vec![ANSWER_OPEN_ID]);
        s.push(vec![A_ID, B_ID]);
        s.push(vec![ANSWER_CLOSE_ID]);
        s.push(vec![EOS_ID]);
        debug_assert_eq!(s.len(), TARGET_LEN);
        s
    }

    /// Graded tags of each image; ungraded tags are ignored.
    pub fn encode_images(&self, a: &CreativeImageRef, b: &CreativeImageRef) -> PolicyContext {
        let encode = |img: &CreativeImageRef| -> Vec<TokenId> {
            let mut out: Vec<TokenId> = img
                .descriptor
                .iter()
                .filter_map(|t| self.vocab.id(&tag_token(t)))
                .filter(|id| self.tags.iter().flatten().any(|t| t == id))
                .collect();
            out.sort_unstable();
            out.dedup();
            out
        };
        PolicyContext {
            slot_a: encode(a),
            slot_b: encode(b),
        }
    }

    pub fn encode(&self, sample: &CreativePairSample) -> PolicyContext {
        self.encode_images(&sample.image_a, &sample.image_b)
    }

    /// Compact reasoning text for Q3..Q10, e.g. `Q3 A>B Q4 A=B ... Q10 A`.
    pub fn compact_cot(&self, answers: &ProtocolAnswers) -> Result<String, TaskError> {
        let mut words = Vec::new();
        for q in 3..=10u8 {
            let v = answers.get(q).ok_or(TaskError::Answer(q))?;
            let ok = match q {
                10 => matches!(v, AnswerValue::A | AnswerValue::B),
                _ => matches!(v, AnswerValue::Better | AnswerValue::Same | AnswerValue::Worse),
            };
            if !ok {
                return Err(TaskError::Answer(q));
            }
            words.push(format!("Q{q}"));
            words.push(v.token().to_string());
        }
        Ok(words.join(" "))
    }

    /// `<think>cot</think><answer>a</answer>` followed by end-of-sequence.
    pub fn target(&self, answers: &ProtocolAnswers, label: Label) -> Result<Vec<TokenId>, TaskError> {
        let raw = codec::render(&self.compact_cot(answers)?, label.letter());
        let mut ids = self
            .vocab
            .tokenize(&raw)
            .expect("compact reasoning uses task tokens only");
        ids.push(EOS_ID);
        Ok(ids)
    }

    pub fn sft_example(&self, sample: &CreativePairSample) -> Result<SftExample, TaskError> {
        let answers = sample
            .annotations
            .as_ref()
            .ok_or_else(|| TaskError::Unannotated(sample.pair_id.clone()))?;
        let label = sample.label.ok_or_else(|| TaskError::Unlabeled(sample.pair_id.clone()))?;
        Ok(SftExample {
            context: self.encode(sample),
            target: self.target(answers, label)?,
        })
    }

    pub fn labeled(&self, sample: &CreativePairSample) -> Result<LabeledContext, TaskError> {
        let label = sample.label.ok_or_else(|| TaskError::Unlabeled(sample.pair_id.clone()))?;
        Ok(LabeledContext {
            context: self.encode(sample),
            label,
        })
    }

    /// Greedy decode rendered as text.
    pub fn respond(&self, policy: &ToyPolicy, ctx: &PolicyContext) -> String {
        policy.vocab().detokenize(&policy.greedy(ctx, MAX_LEN).tokens)
    }
}

/// Pairwise comparator backed by a toy policy and greedy decoding.
#[derive(Debug, Clone)]
pub struct ToyComparator {
    task: PairTask,
    policy: ToyPolicy,
}

impl ToyComparator {
    pub fn new(task: PairTask, policy: ToyPolicy) -> Result<Self, PolicyError> {
        if policy.vocab() != task.vocab() || policy.spec() != task.spec() {
            return Err(PolicyError::Shape("policy was not built for this task".into()));
        }
        Ok(Self { task, policy })
    }

    pub fn policy(&self) -> &ToyPolicy {
        &self.policy
    }
}

impl Comparator for ToyComparator {
    fn compare(
        &self,
        a: &CreativeImageRef,
        b: &CreativeImageRef,
        _context: &ProductContext,
    ) -> Result<String, ComparatorError> {
        Ok(self.task.respond(&self.policy, &self.task.encode_images(a, b)))
    }
}
