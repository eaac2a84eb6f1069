//! Calls an OpenAI-style chat endpoint as a pairwise comparator. A stub
//! upstream stands in for the hosted model: it fails once with 503, which
//! the gateway retries, then always answers "A". The same client then
//! fails fast on an endpoint nobody listens on.
//!
//! ```text
//! cargo run -p creative-select-app --example remote_gateway
//! ```

use axum::http::StatusCode;
use axum::routing::post;
use axum::{Json, Router};
use serde_json::{json, Value};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use creative_select::codec::parse;
use creative_select::model::ProductContext;
use creative_select::synth::{generate_synthetic, PreferenceRule};
use creative_select::tournament::{ClientComparator, Comparator};
use creative_select_app::gateway::{gateway_call, GatewayClient, GatewayConfig, GatewayRole};

fn spawn_stub() -> String {
    let hits = Arc::new(AtomicUsize::new(0));
    let app = Router::new().route(
        "/v1/chat/completions",
        post(move |Json(_body): Json<Value>| {
            let hits = hits.clone();
            async move {
                if hits.fetch_add(1, Ordering::SeqCst) == 0 {
                    return (StatusCode::SERVICE_UNAVAILABLE, Json(json!({"error": "warming up"})));
                }
                let content = "<think>A shows the mug in a kitchen scene.</think><answer>A</answer>";
                (StatusCode::OK, Json(json!({"choices": [{"message": {"role": "assistant", "content": content}}]})))
            }
        }),
    );
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
    format!("http://{addr}/v1/chat/completions")
}

fn main() {
    let mut cfg = GatewayConfig::new(spawn_stub(), GatewayRole::Comparator);
    cfg.backoff_ms = 10;
    cfg.model = Some("stub".into());

    let raw = gateway_call(&cfg, "Say A or B.", &[]).expect("retried past the 503");
    println!("raw reply: {raw}");
    println!("parsed answer: {}", parse(&raw).expect("well formed").answer);

    let pair = generate_synthetic(1, 5, &PreferenceRule::default()).remove(0);
    let comparator = ClientComparator { client: GatewayClient::new(cfg.clone()).expect("valid config") };
    let ctx = ProductContext { title: "Ceramic Mug 350ml".into(), query_terms: vec!["ceramic".into()] };
    let reply = comparator.compare(&pair.image_a, &pair.image_b, &ctx).expect("reply");
    println!("comparator reply: {reply}");

    // Nothing listens here, so every attempt fails and the error says how many were made.
    let dead = std::net::TcpListener::bind("127.0.0.1:0").expect("port").local_addr().expect("addr");
    let mut down = GatewayConfig::new(format!("http://{dead}/v1/chat/completions"), GatewayRole::Judge);
    down.max_retries = 2;
    down.backoff_ms = 10;
    let err = gateway_call(&down, "Score this.", &[]).expect_err("unreachable");
    println!("unreachable: {} ({err})", err.code());
}
