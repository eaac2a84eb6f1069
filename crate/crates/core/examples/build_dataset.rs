//! Dataset construction end to end: exposure filter, query-term filter,
//! annotation, early-exit removal, and a product-grouped 8:2 split.
//!
//! ```text
//! cargo run -p creative-select --example build_dataset
//! ```

use creative_select::model::Split;
use creative_select::pipeline::{
    assign_split, drop_indistinguishable, filter_candidates, filter_query_terms, CollectionCriteria, FunnelCounts,
    SplitConfig,
};
use creative_select::synth::{annotate, generate_synthetic, PreferenceRule};
use creative_select::tagger::LexiconTagger;

fn main() {
    let rule = PreferenceRule::default();
    let collected = generate_synthetic(1_000, 42, &rule);
    let mut filtered = filter_candidates(&collected, &CollectionCriteria::default()).expect("stats present");

    let tagger = LexiconTagger::default();
    for pair in &mut filtered {
        let mut terms = pair.context.query_terms.clone();
        terms.push("mug".into());
        pair.context.query_terms = filter_query_terms(&terms, &tagger).kept;
    }

    // A similarity threshold of 1.0 marks pairs whose weighted scores are
    // within one point as too close to call.
    for pair in &mut filtered {
        pair.annotations = Some(annotate(pair, &rule, 1.0));
    }
    let report = drop_indistinguishable(&filtered).expect("every pair annotated");
    let split = assign_split(&report.kept, &SplitConfig::default()).expect("valid fraction");

    let funnel = FunnelCounts {
        collected: collected.len(),
        filtered: filtered.len(),
        annotated: filtered.len(),
        excluded: report.removed_count,
        train: split.iter().filter(|p| p.split == Split::Train).count(),
        test: split.iter().filter(|p| p.split == Split::Test).count(),
    };
    println!("{}", serde_json::to_string_pretty(&funnel).expect("serializable"));
    println!("first kept query terms: {:?}", split[0].context.query_terms);
}
