//! Parses model outputs and scores them with the rule-based reward
//! `format + 0.2 * accuracy`.
//!
//! ```text
//! cargo run -p creative-select --example parse_and_reward
//! ```

use creative_select::codec::{parse, total_reward};
use creative_select::model::Label;

fn main() {
    let outputs = [
        "<think>A shows the product in use.</think><answer>A</answer>",
        "<think>B has the cleaner layout.</think>\n<answer> b </answer>",
        "<answer>A</answer>",
        "<think>unsure</think><answer>A</answer> trailing words",
    ];
    for raw in outputs {
        let reward = total_reward(raw, Label::A, 0.2);
        let parsed = match parse(raw) {
            Ok(r) => format!("answer {:?}", r.answer),
            Err(e) => e.to_string(),
        };
        println!("{:<70} {parsed:<28} reward {}", format!("{raw:?}"), reward.total);
    }
}
