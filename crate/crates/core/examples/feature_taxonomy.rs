//! Walks the creative feature taxonomy and the seven graded dimensions the
//! comparison protocol scores.
//!
//! ```text
//! cargo run -p creative-select --example feature_taxonomy
//! ```

use creative_select::taxonomy::{taxonomy, SCORED_DIMENSIONS};

fn main() {
    for category in &taxonomy().categories {
        println!("{}", category.name);
        for sub in &category.subcategories {
            let mark = if sub.unverified_from_figure { " (placeholder values)" } else { "" };
            println!("  {}{mark}: {}", sub.name, sub.values.join(", "));
        }
    }

    println!("\nGraded dimensions, lowest level first:");
    for d in &SCORED_DIMENSIONS {
        println!("  Q{} {:<24} {}", d.question, d.name, d.levels.join(" < "));
    }

    let tag = "Handheld Display";
    if let Some((category, sub)) = taxonomy().locate(tag) {
        println!("\n{tag:?} lives under {category} / {sub}");
    }
}
