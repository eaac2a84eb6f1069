#![allow(dead_code)]

use axum::Router;
use serde_json::Value;
use std::net::SocketAddr;
use std::path::Path;
use std::sync::Arc;

use creative_select::model::{CreativeImageRef, ProductContext};
use creative_select::synth::{generate_synthetic, PreferenceRule};
use creative_select::tournament::{Comparator, ComparatorError};
use creative_select_app::service::{router, ServiceState};
use creative_select_app::store::{DatasetStore, Event};

/// Serves `app` on an ephemeral port from a background thread with its own
/// runtime, so tests can stay synchronous.
pub fn spawn_router(app: Router) -> SocketAddr {
    let std_listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    std_listener.set_nonblocking(true).unwrap();
    let addr = std_listener.local_addr().unwrap();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()
            .unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::from_std(std_listener).unwrap();
            axum::serve(listener, app).await.unwrap();
        });
    });
    addr
}

pub fn spawn_service(state: ServiceState) -> (String, Arc<ServiceState>) {
    let state = Arc::new(state);
    let addr = spawn_router(router(state.clone()));
    (format!("http://{addr}"), state)
}

/// A port nothing listens on.
pub fn dead_endpoint() -> String {
    let l = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = l.local_addr().unwrap();
    drop(l);
    format!("http://{addr}/v1/chat/completions")
}

/// Store with `n` synthetic pairs and nothing else.
pub fn seeded_store(root: &Path, dataset: &str, n: usize, seed: u64) -> DatasetStore {
    let mut store = DatasetStore::open(root, dataset).unwrap();
    store
        .append(Event::IngestRecorded { collected: n, filtered: n }, 0)
        .unwrap();
    for sample in generate_synthetic(n, seed, &PreferenceRule::default()) {
        store.append(Event::SampleAdded { sample }, 0).unwrap();
    }
    store
}

/// Validates `value` against `schemas/<name>.schema.json`.
pub fn assert_schema(name: &str, value: &Value) {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("schemas").join(format!("{name}.schema.json"));
    let schema: Value = serde_json::from_slice(&std::fs::read(&path).unwrap()).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    let errors: Vec<String> = validator.iter_errors(value).map(|e| format!("{} at {}", e, e.instance_path)).collect();
    assert!(errors.is_empty(), "{name}: {errors:?}\n{value:#}");
}

/// Answers like an annotator following the preference rule.
pub struct RuleComparator(pub PreferenceRule);

impl Comparator for RuleComparator {
    fn compare(&self, a: &CreativeImageRef, b: &CreativeImageRef, _: &ProductContext) -> Result<String, ComparatorError> {
        let w = self.0.winner(&a.descriptor, &b.descriptor);
        Ok(format!("<think>rule score comparison</think><answer>{}</answer>", w.letter()))
    }
}

/// `n` candidates with distinct descriptors drawn from synthetic pairs.
pub fn candidates(n: usize, seed: u64) -> Vec<CreativeImageRef> {
    let pairs = generate_synthetic(n.div_ceil(2), seed, &PreferenceRule::default());
    let mut out: Vec<CreativeImageRef> = pairs.into_iter().flat_map(|p| [p.image_a, p.image_b]).collect();
    out.truncate(n);
    out
}

pub fn full_answers(q5: &str) -> Value {
    serde_json::json!({
        "1": "NO", "2": "NO", "3": "A>B", "4": "A=B", "5": q5, "6": "A<B",
        "7": "A=B", "8": "A>B", "9": "A>B", "10": "A"
    })
}

/// What a random run did, counted by the driver rather than the store.
#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct Tally {
    pub samples: usize,
    pub sessions: usize,
    pub claims: usize,
    pub annotated: usize,
    pub excluded: usize,
    pub train: usize,
    pub test: usize,
    pub rejected: usize,
}

/// Drives a store through a random mix of ingests, sessions, claims,
/// submissions, splits and clock jumps until the log holds exactly `events`
/// entries. Conflicting claims are attempted too and must be rejected
/// without touching the log.
pub fn random_run(store: &mut DatasetStore, events: u64, seed: u64) -> Tally {
    use creative_select::model::Split;
    use creative_select::protocol::early_exit;
    use creative_select::synth::annotate;
    use creative_select_app::store::{SampleStatus, StoreError};
    use rand::{Rng, SeedableRng};

    let rule = PreferenceRule::default();
    let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
    let pool = generate_synthetic(400, seed, &rule);
    let lease_ms = 10_000;
    let mut now = 1_000u64;
    let mut t = Tally::default();
    let mut sessions: Vec<String> = Vec::new();
    while store.state().last_seq < events {
        let before = store.state().last_seq;
        match rng.random_range(0..10) {
            0 | 1 if t.samples < pool.len() => {
                let sample = pool[t.samples].clone();
                store.append(Event::SampleAdded { sample }, now).unwrap();
                t.samples += 1;
            }
            2 if sessions.len() < 6 => {
                sessions.push(store.create_session(&format!("ann-{}", sessions.len()), now).unwrap());
                t.sessions += 1;
            }
            3 | 4 if !sessions.is_empty() => {
                let s = &sessions[rng.random_range(0..sessions.len())];
                if store.claim_next(s, lease_ms, now).unwrap().is_some() {
                    t.claims += 1;
                }
            }
            5 if sessions.len() >= 2 => {
                // Steal attempt: another session's live lease must win.
                let state = store.state();
                let held = state.samples.iter().find_map(|(id, r)| {
                    r.lease
                        .as_ref()
                        .filter(|l| l.expires_at_ms > now && r.status == SampleStatus::Pending)
                        .map(|l| (id.clone(), l.session_id.clone()))
                });
                if let Some((pair, owner)) = held {
                    let thief = sessions.iter().find(|s| **s != owner).unwrap().clone();
                    let err = store.claim(&thief, &pair, lease_ms, now).unwrap_err();
                    assert!(matches!(err, StoreError::LeaseConflict { .. }), "{err}");
                    t.rejected += 1;
                }
            }
            6 | 7 if !sessions.is_empty() => {
                let s = sessions[rng.random_range(0..sessions.len())].clone();
                let view = store.state().session(&s, now).unwrap();
                if let Some(claim) = view.claims.first() {
                    let sample = &store.state().samples[&claim.pair_id].sample;
                    let answers = annotate(sample, &rule, rng.random_range(0.0..2.0));
                    let event = if early_exit(&answers).unwrap() {
                        t.excluded += 1;
                        Event::SampleExcluded { session_id: Some(s), pair_id: claim.pair_id.clone(), answers }
                    } else {
                        t.annotated += 1;
                        Event::AnnotationSubmitted { session_id: Some(s), pair_id: claim.pair_id.clone(), answers }
                    };
                    store.append(event, now).unwrap();
                }
            }
            8 => {
                let todo = store.state().samples.iter().find_map(|(id, r)| {
                    (r.status == SampleStatus::Annotated && r.sample.split == Split::Unassigned).then(|| id.clone())
                });
                if let Some(pair_id) = todo {
                    let split = if rng.random_bool(0.8) { Split::Train } else { Split::Test };
                    match split {
                        Split::Train => t.train += 1,
                        _ => t.test += 1,
                    }
                    store.append(Event::SplitAssigned { pair_id, split }, now).unwrap();
                }
            }
            _ => now += rng.random_range(0..6_000),
        }
        assert!(store.state().last_seq <= before + 1);
    }
    t
}
