//! Pairwise selection of advertising creatives with explainable reasoning.
//!
//! The crate covers the whole loop at desk scale:
//!
//! * [`model`], [`taxonomy`]: pair records and the creative feature taxonomy.
//! * [`pipeline`], [`synth`], [`tagger`]: dataset construction from exposure
//!   logs and a synthetic generator.
//! * [`protocol`], [`cot`], [`prompt`]: the ten-question comparison protocol,
//!   reasoning text, and prompts.
//! * [`codec`]: `<think>…</think><answer>…</answer>` parsing and rewards.
//! * [`policy`], [`task`]: a linear-softmax token policy with exact gradients.
//! * [`trainer`]: supervised fine-tuning on reasoning traces, then GRPO.
//! * [`tournament`], [`metrics`]: round-robin selection and evaluation.

pub mod benchmark;
pub mod client;
pub mod codec;
pub mod cot;
pub mod io;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod policy;
pub mod prompt;
pub mod protocol;
pub mod rng;
pub mod synth;
pub mod tagger;
pub mod task;
pub mod taxonomy;
pub mod tournament;
pub mod trainer;

pub use codec::{parse, StructuredResponse};
pub use model::{CreativeImageRef, CreativePairSample, ExposureStats, Label, ProductContext, RewardBreakdown, Split};
pub use protocol::{AnswerValue, ProtocolAnswers};
