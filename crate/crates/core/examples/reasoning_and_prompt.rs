//! Turns an annotated pair into reasoning text, optionally polished by a
//! text model, and builds the model prompt for the pair.
//!
//! ```text
//! cargo run -p creative-select --example reasoning_and_prompt
//! ```

use creative_select::client::ClientError;
use creative_select::cot::{extract_verdicts, render_cot};
use creative_select::prompt::build_prompt;
use creative_select::synth::{annotate, generate_synthetic, PreferenceRule};

fn main() {
    let rule = PreferenceRule::default();
    let sample = generate_synthetic(1, 3, &rule).remove(0);
    let answers = annotate(&sample, &rule, 0.0);

    let template = render_cot(&sample, &answers, None).expect("complete answers");
    println!("{template}\n");

    // Stand-in for a remote rewriter: keeps the verdict lines, adds a preface.
    let polisher = |prompt: &str| -> Result<String, ClientError> {
        let body = prompt.split_once("\n\n").map(|(_, t)| t).unwrap_or(prompt);
        Ok(format!("Looking at both creatives side by side.\n\n{body}"))
    };
    let polished = render_cot(&sample, &answers, Some(&polisher)).expect("verdicts preserved");
    println!("polished keeps {} verdicts", extract_verdicts(&polished).len());

    let bundle = build_prompt(&sample);
    println!("\n{}\n(image slots: {})", bundle.prompt_text, bundle.placeholder_count());
}
