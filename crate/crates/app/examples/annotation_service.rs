//! Walks one annotator through the HTTP annotation flow: open a session,
//! lease the next pair, submit the ten protocol answers, and read the
//! dataset funnel. A second annotator asking for the same last pair gets
//! nothing while the lease is live.
//!
//! ```text
//! cargo run -p creative-select-app --example annotation_service
//! ```

use reqwest::blocking::Client;
use serde_json::{json, Value};
use std::sync::Arc;

use creative_select::synth::{generate_synthetic, PreferenceRule};
use creative_select_app::service::{router, ServiceState};
use creative_select_app::store::{DatasetStore, Event};

fn serve(state: ServiceState) -> String {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").expect("port");
    listener.set_nonblocking(true).expect("nonblocking");
    let addr = listener.local_addr().expect("addr");
    let app = router(Arc::new(state));
    std::thread::spawn(move || {
        let rt = tokio::runtime::Runtime::new().expect("runtime");
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::from_std(listener).expect("listener");
            axum::serve(listener, app).await.expect("serve");
        });
    });
    format!("http://{addr}")
}

fn main() {
    let dir = tempfile::tempdir().expect("temp dir");
    let mut store = DatasetStore::open(dir.path(), "mugs").expect("store");
    store.append(Event::IngestRecorded { collected: 1, filtered: 1 }, 0).expect("ingest");
    for sample in generate_synthetic(1, 2, &PreferenceRule::default()) {
        store.append(Event::SampleAdded { sample }, 0).expect("add");
    }
    let base = serve(ServiceState::new(vec![store]));
    let http = Client::new();

    let protocol: Value = http.get(format!("{base}/v1/protocol")).send().expect("protocol").json().expect("json");
    println!("protocol version {} with {} questions", protocol["version"], protocol["questions"].as_array().map_or(0, Vec::len));

    let open = |who: &str| -> String {
        let created: Value = http
            .post(format!("{base}/v1/sessions"))
            .json(&json!({"annotator_id": who, "dataset_id": "mugs"}))
            .send()
            .expect("create")
            .json()
            .expect("json");
        created["session_id"].as_str().expect("id").to_string()
    };
    let alice = open("alice");
    let bob = open("bob");

    let next: Value = http.get(format!("{base}/v1/sessions/{alice}/next")).send().expect("next").json().expect("json");
    println!("alice leased {} until {}", next["pair_id"], next["lease_expires_at_ms"]);
    let status = http.get(format!("{base}/v1/sessions/{bob}/next")).send().expect("next").status();
    println!("bob asks for the same pair: {status}");

    let mut answers = json!({
        "1": "NO", "2": "NO", "3": "A>B", "4": "A=B", "5": "YES",
        "6": "A>B", "7": "A=B", "8": "A>B", "9": "A=B", "10": "A"
    });
    // Q5 compares the two creatives, so a yes/no value is out of its domain.
    let bad = json!({"pair_id": next["pair_id"], "answers": answers});
    let rejected: Value = http.post(format!("{base}/v1/sessions/{alice}/answers")).json(&bad).send().expect("submit").json().expect("json");
    println!("invalid submission: {}", rejected["code"]);

    answers["5"] = json!("A<B");
    let outcome: Value = http
        .post(format!("{base}/v1/sessions/{alice}/answers"))
        .json(&json!({"pair_id": next["pair_id"], "answers": answers}))
        .send()
        .expect("submit")
        .json()
        .expect("json");
    println!("submitted: {outcome}");

    let stats: Value = http.get(format!("{base}/v1/datasets/mugs/stats")).send().expect("stats").json().expect("json");
    println!("funnel: {stats}");
}
