//! Serves creative selection over HTTP. A toy policy is fine-tuned on
//! synthetic pairs, loaded as the comparator, and `POST /v1/select` ranks
//! the creatives of six held-out pairs by round-robin wins.
//!
//! ```text
//! cargo run --release -p creative-select-app --example selection_service
//! ```

use reqwest::blocking::Client;
use serde_json::{json, Value};
use std::sync::Arc;

use creative_select::benchmark::{synthetic_dataset, BenchmarkConfig};
use creative_select::model::CreativeImageRef;
use creative_select::trainer::SftConfig;
use creative_select_app::commands::{toy_comparator, train_sft_on};
use creative_select_app::service::{router, ServiceState};
use creative_select_app::store::DatasetStore;

fn main() {
    let cfg = BenchmarkConfig { train: 400, test: 6, ..BenchmarkConfig::default() };
    let (train, test) = synthetic_dataset(&cfg).expect("dataset");
    let trained = train_sft_on(&train, &SftConfig::toy(), cfg.base_margin).expect("training");
    let comparator = toy_comparator(&trained.checkpoint).expect("checkpoint");

    let dir = tempfile::tempdir().expect("temp dir");
    let store = DatasetStore::open(dir.path(), "default").expect("store");
    let app = router(Arc::new(ServiceState::new(vec![store]).with_toy(Arc::new(comparator))));
    let listener = std::net::TcpListener::bind("127.0.0.1:0").expect("port");
    listener.set_nonblocking(true).expect("nonblocking");
    let addr = listener.local_addr().expect("addr");
    std::thread::spawn(move || {
        let rt = tokio::runtime::Runtime::new().expect("runtime");
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::from_std(listener).expect("listener");
            axum::serve(listener, app).await.expect("serve");
        });
    });

    let candidates: Vec<CreativeImageRef> = test.iter().flat_map(|s| [s.image_a.clone(), s.image_b.clone()]).collect();
    let req = json!({
        "candidates": candidates,
        "context": {"title": "Ceramic Mug 350ml", "query_terms": ["ceramic"]},
        "k": 3,
        "comparator": "toy"
    });
    let body: Value = Client::new().post(format!("http://{addr}/v1/select")).json(&req).send().expect("select").json().expect("json");
    println!("{} comparisons", body["result"]["comparisons"].as_array().map_or(0, Vec::len));
    println!("wins {}", body["result"]["wins"]);
    for (rank, c) in body["top_k"].as_array().expect("top_k").iter().enumerate() {
        println!("#{} {}", rank + 1, c["uri"]);
    }
}
