//! The dataset store is an append-only event log. State is rebuilt by
//! replaying it, the snapshot is just a cache of that replay, and a torn
//! final line is reported with its byte offset and cut on request.
//!
//! ```text
//! cargo run -p creative-select-app --example event_log
//! ```

use std::io::Write;

use creative_select::synth::{annotate, generate_synthetic, PreferenceRule};
use creative_select_app::store::{replay, DatasetStore, Event, Recovery};

fn main() {
    let dir = tempfile::tempdir().expect("temp dir");
    let rule = PreferenceRule::default();
    let pairs = generate_synthetic(4, 11, &rule);

    let mut store = DatasetStore::open(dir.path(), "mugs").expect("fresh store");
    store.append(Event::IngestRecorded { collected: 4, filtered: 4 }, 0).expect("ingest");
    for sample in pairs.clone() {
        store.append(Event::SampleAdded { sample }, 0).expect("add");
    }

    // One annotator claims a pair and submits answers for it.
    let session = store.create_session("ann-1", 1_000).expect("session");
    let claim = store.claim_next(&session, 60_000, 1_000).expect("claim").expect("pending pair");
    let sample = &store.state().samples[&claim.pair_id].sample;
    let answers = annotate(sample, &rule, 1.0);
    store
        .append(Event::AnnotationSubmitted { session_id: Some(session.clone()), pair_id: claim.pair_id.clone(), answers }, 2_000)
        .expect("submit");
    store.write_snapshot().expect("snapshot");
    println!("{} events, funnel {:?}", store.state().last_seq, store.state().funnel());

    // Replaying the log reproduces the snapshot byte for byte.
    let log = std::fs::read(store.log_path()).expect("log");
    let snapshot = std::fs::read(store.snapshot_path()).expect("snapshot");
    let replayed = replay("mugs", log.as_slice()).expect("clean log");
    println!("replay matches snapshot: {}", replayed.to_bytes() == snapshot);
    let log_path = store.log_path();
    drop(store);

    // Simulate a crash halfway through writing an event.
    let mut f = std::fs::OpenOptions::new().append(true).open(&log_path).expect("log");
    f.write_all(br#"{"seq":9,"event":{"sample_a"#).expect("torn write");
    drop(f);
    match DatasetStore::open(dir.path(), "mugs") {
        Err(e) => println!("refused: {} ({e})", e.code()),
        Ok(_) => println!("unexpectedly opened"),
    }
    let store = DatasetStore::open_with(dir.path(), "mugs", Recovery::TruncateTail).expect("recovered");
    println!("recovered with {} events", store.state().last_seq);
}
