//! Picks the best creatives for a product by running every pairwise
//! comparison and ranking by wins. The comparator is a briefly trained toy
//! policy; any text model implementing `Comparator` works the same way.
//!
//! ```text
//! cargo run --release -p creative-select --example round_robin_selection
//! ```

use creative_select::benchmark::{synthetic_dataset, BenchmarkConfig};
use creative_select::model::{CreativeImageRef, ProductContext};
use creative_select::synth::PreferenceRule;
use creative_select::task::{PairTask, SftExample, ToyComparator};
use creative_select::tournament::{run_tournament, top_k, TournamentConfig};
use creative_select::trainer::{train_sft, SftConfig};

fn main() {
    let cfg = BenchmarkConfig { train: 400, test: 8, ..BenchmarkConfig::default() };
    let (train, test) = synthetic_dataset(&cfg).expect("dataset");
    let task = PairTask::new();
    let examples: Vec<SftExample> = train.iter().map(|s| task.sft_example(s).expect("annotated")).collect();
    let trained = train_sft(&task.base_policy(cfg.base_margin), &examples, &SftConfig::toy()).expect("training");
    let comparator = ToyComparator::new(task, trained.checkpoint.to_policy().expect("valid")).expect("same task");

    // Candidates: both creatives of the first few held-out pairs.
    let candidates: Vec<CreativeImageRef> = test.iter().take(3).flat_map(|s| [s.image_a.clone(), s.image_b.clone()]).collect();
    let context = ProductContext { title: "Ceramic Mug 350ml".into(), query_terms: vec!["ceramic".into()] };
    let result = run_tournament(&candidates, &context, &comparator, &TournamentConfig::default()).expect("two or more");

    let rule = PreferenceRule::default();
    println!("{} comparisons, {} undecided", result.comparisons.len(), result.undecided_count);
    for (rank, i) in result.ranking.iter().enumerate() {
        let c = &result.candidates[*i];
        println!("#{} {} wins {} (rule score {:.1})", rank + 1, c.id, result.wins[*i], rule.score(&c.descriptor));
    }
    let best = top_k(&result, 2).expect("k in range");
    println!("top 2: {:?}", best.iter().map(|c| &c.id).collect::<Vec<_>>());
}
