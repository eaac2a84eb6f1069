//! Prints the ten-question comparison protocol, validates a filled-in answer
//! sheet, and shows the early exit for near-duplicate pairs.
//!
//! ```text
//! cargo run -p creative-select --example evaluation_protocol
//! ```

use creative_select::protocol::{early_exit, protocol_text, validate_answers, ProtocolAnswers, PROTOCOL_VERSION};

fn main() {
    println!("{PROTOCOL_VERSION}\n{}", protocol_text());

    let mut sheet = ProtocolAnswers::new("annotator-7").with(1, "NO").with(2, "NO");
    for q in 3..=9 {
        sheet = sheet.with(q, if q % 2 == 0 { "A>B" } else { "A=B" });
    }
    let sheet = sheet.with(10, "A");
    println!("complete sheet violations: {:?}", validate_answers(&sheet));
    println!("winner: {:?}", sheet.conclusion());

    let bad = sheet.clone().with(5, "YES");
    for v in validate_answers(&bad) {
        println!("violation {} on Q{}: {v}", v.code(), v.question());
    }

    let twins = ProtocolAnswers::new("annotator-7").with(1, "YES").with(2, "NO");
    println!("identical pair exits early: {:?}", early_exit(&twins));
}
