//! Training and inference prompt assembly.

use serde::{Deserialize, Serialize};

use crate::model::{CreativeImageRef, CreativePairSample};
use crate::protocol;

pub const IMAGE_PLACEHOLDER: &str = "<image>";
pub const OUTPUT_GRAMMAR: &str = "<think>cot</think><answer>a</answer>";

const INSTRUCTION: &str = "Please answer each question in the Creative Evaluation Protocol based on the high-frequency queries and product information, providing detailed explanations for your answers.";

const OUTPUT_FORMAT: &str = "Output format: enclose the comparative reasoning process in <think></think> tags and the final answer (A or B) in <answer></answer> tags, i.e. <think>comparative reasoning process</think><answer>final answer</answer>";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub prompt_text: String,
    /// Images in placeholder order: A first, then B.
    pub image_slots: [CreativeImageRef; 2],
    pub expected_output_grammar: String,
}

impl PromptBundle {
    pub fn placeholder_count(&self) -> usize {
        self.prompt_text.matches(IMAGE_PLACEHOLDER).count()
    }
}

// User text is made single-line and free of the image placeholder so the
// prompt keeps its line structure and exactly two placeholders. The escape
// is injective: `&` and `\` are escaped before anything else.
fn escape_field(s: &str, escape_comma: bool) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            ',' if escape_comma => out.push_str("\\,"),
            c => out.push(c),
        }
    }
    out
}

/// Query terms joined by ", " as they appear in the prompt.
pub fn join_queries(terms: &[String]) -> String {
    terms
        .iter()
        .map(|t| escape_field(t, true))
        .collect::<Vec<_>>()
        .join(", ")
}

pub fn build_prompt(sample: &CreativePairSample) -> PromptBundle {
    let prompt_text = format!(
        "{INSTRUCTION}\nHigh-frequency queries: {};\nProduct title: {};\nCreative A: {IMAGE_PLACEHOLDER}, Creative B: {IMAGE_PLACEHOLDER};\n{};\n{OUTPUT_FORMAT}.",
        join_queries(&sample.context.query_terms),
        escape_field(&sample.context.title, false),
        protocol::protocol_text(),
    );
    PromptBundle {
        prompt_text,
        image_slots: [sample.image_a.clone(), sample.image_b.clone()],
        expected_output_grammar: OUTPUT_GRAMMAR.to_string(),
    }
}
