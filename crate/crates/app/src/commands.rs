//! The work behind each CLI subcommand, as plain functions over files and
//! stores so it can be called from tests and examples too.

use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use thiserror::Error;

use creative_select::client::TextClient;
use creative_select::cot::render_cot;
use creative_select::io::{read_jsonl_file, write_jsonl_file, JsonlError};
use creative_select::metrics::{evaluate_test_set, EvalReport, JudgeSetup, MetricsError};
use creative_select::model::{CreativeImageRef, CreativePairSample, ProductContext, Split};
use creative_select::pipeline::{
    assign_split, filter_candidates, filter_query_terms, CollectionCriteria, PipelineError, SplitConfig,
};
use creative_select::policy::{Checkpoint, CheckpointError, PolicyError, Stage};
use creative_select::protocol::{early_exit, validate_answers};
use creative_select::synth::{annotate, generate_synthetic, PreferenceRule};
use creative_select::tagger::LexiconTagger;
use creative_select::task::{PairTask, TaskError, ToyComparator};
use creative_select::tournament::{run_tournament, top_k, Comparator, TournamentConfig, TournamentError};
use creative_select::trainer::{train_grpo, train_sft, CurvePoint, GrpoConfig, GrpoOutcome, SftConfig, SftOutcome, TrainError};

use crate::service::{DatasetStats, SelectResponse};
use crate::store::{DatasetStore, Event, SampleStatus, StoreError};

#[derive(Debug, Error)]
pub enum CommandError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Jsonl(#[from] JsonlError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Tournament(#[from] TournamentError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Invalid(String),
}

type Result<T> = std::result::Result<T, CommandError>;

/// Synthetic raw pairs with exposure stats; with `annotate`, protocol
/// answers are filled in by the preference rule as a stand-in annotator.
pub fn synth(count: usize, seed: u64, annotate_with: Option<f64>) -> Vec<CreativePairSample> {
    let rule = PreferenceRule::default();
    let mut pairs = generate_synthetic(count, seed, &rule);
    if let Some(threshold) = annotate_with {
        for p in &mut pairs {
            p.annotations = Some(annotate(p, &rule, threshold));
        }
    }
    pairs
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct IngestReport {
    pub collected: usize,
    pub filtered: usize,
    pub added: usize,
    pub duplicates: usize,
    pub annotated: usize,
    pub excluded: usize,
    /// Carried annotations that failed validation and were left out.
    pub invalid_annotations: usize,
}

/// Filters raw pairs by exposure, keeps adjective query terms, and logs
/// every surviving pair. Annotations already present on a pair are
/// validated and logged as submissions without a session.
pub fn ingest(
    store: &mut DatasetStore,
    raw: &[CreativePairSample],
    criteria: &CollectionCriteria,
    now_ms: u64,
) -> Result<IngestReport> {
    let filtered = filter_candidates(raw, criteria)?;
    let mut report = IngestReport {
        collected: raw.len(),
        filtered: filtered.len(),
        ..IngestReport::default()
    };
    store.append(
        Event::IngestRecorded {
            collected: report.collected,
            filtered: report.filtered,
        },
        now_ms,
    )?;
    let tagger = LexiconTagger::default();
    for pair in filtered {
        if store.state().samples.contains_key(&pair.pair_id) {
            report.duplicates += 1;
            continue;
        }
        let answers = pair.annotations.clone();
        let mut sample = pair;
        sample.context.query_terms = filter_query_terms(&sample.context.query_terms, &tagger).kept;
        sample.annotations = None;
        sample.split = Split::Unassigned;
        let pair_id = sample.pair_id.clone();
        store.append(Event::SampleAdded { sample }, now_ms)?;
        report.added += 1;

        let Some(answers) = answers else { continue };
        if !validate_answers(&answers).is_empty() {
            report.invalid_annotations += 1;
            continue;
        }
        let event = if early_exit(&answers).expect("validated") {
            report.excluded += 1;
            Event::SampleExcluded {
                session_id: None,
                pair_id,
                answers,
            }
        } else {
            report.annotated += 1;
            Event::AnnotationSubmitted {
                session_id: None,
                pair_id,
                answers,
            }
        };
        store.append(event, now_ms)?;
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SplitReport {
    pub train: usize,
    pub test: usize,
}

/// Splits every annotated pair that has no split yet and logs the result.
pub fn split(store: &mut DatasetStore, cfg: &SplitConfig, now_ms: u64) -> Result<SplitReport> {
    let todo: Vec<CreativePairSample> = store
        .state()
        .samples
        .values()
        .filter(|r| r.status == SampleStatus::Annotated && r.sample.split == Split::Unassigned)
        .map(|r| r.sample.clone())
        .collect();
    let mut report = SplitReport::default();
    if todo.is_empty() {
        return Ok(report);
    }
    for s in assign_split(&todo, cfg)? {
        match s.split {
            Split::Train => report.train += 1,
            Split::Test => report.test += 1,
            Split::Unassigned => {}
        }
        store.append(
            Event::SplitAssigned {
                pair_id: s.pair_id,
                split: s.split,
            },
            now_ms,
        )?;
    }
    Ok(report)
}

pub fn stats(store: &DatasetStore) -> DatasetStats {
    let f = store.state().funnel();
    DatasetStats {
        dataset_id: store.dataset_id().to_string(),
        collected: f.collected,
        filtered: f.filtered,
        annotated: f.annotated,
        excluded: f.excluded,
        train: f.train,
        test: f.test,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportReport {
    pub train_path: PathBuf,
    pub test_path: PathBuf,
    pub train: usize,
    pub test: usize,
}

/// Writes annotated, split pairs to `train.jsonl` and `test.jsonl`.
pub fn annotate_export(store: &DatasetStore, out_dir: &Path) -> Result<ExportReport> {
    std::fs::create_dir_all(out_dir)?;
    let pick = |split: Split| -> Vec<&CreativePairSample> {
        store
            .state()
            .samples
            .values()
            .filter(|r| r.status == SampleStatus::Annotated && r.sample.split == split)
            .map(|r| &r.sample)
            .collect()
    };
    let (train, test) = (pick(Split::Train), pick(Split::Test));
    let report = ExportReport {
        train_path: out_dir.join("train.jsonl"),
        test_path: out_dir.join("test.jsonl"),
        train: train.len(),
        test: test.len(),
    };
    write_jsonl_file(&report.train_path, &train)?;
    write_jsonl_file(&report.test_path, &test)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RenderReport {
    pub rendered: usize,
    /// Pair ids whose reasoning could not be rendered, with the reason.
    pub failed: Vec<(String, String)>,
}

/// Fills `cot` on every annotated pair. Pairs that fail keep `cot` empty.
pub fn render_cots(samples: &mut [CreativePairSample], polisher: Option<&dyn TextClient>) -> RenderReport {
    let mut report = RenderReport::default();
    for s in samples.iter_mut() {
        let Some(answers) = s.annotations.clone() else {
            report.failed.push((s.pair_id.clone(), "no annotations".into()));
            continue;
        };
        match render_cot(s, &answers, polisher) {
            Ok(text) => {
                s.cot = Some(text);
                report.rendered += 1;
            }
            Err(e) => report.failed.push((s.pair_id.clone(), e.to_string())),
        }
    }
    report
}

/// One line of a curve log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveEvent {
    pub stage: Stage,
    #[serde(flatten)]
    pub point: CurvePoint,
}

pub fn write_curve(path: &Path, stage: Stage, curve: &[CurvePoint]) -> Result<()> {
    let events: Vec<CurveEvent> = curve
        .iter()
        .map(|p| CurveEvent {
            stage,
            point: p.clone(),
        })
        .collect();
    write_jsonl_file(path, &events)?;
    Ok(())
}

pub fn load_samples(path: &Path) -> Result<Vec<CreativePairSample>> {
    Ok(read_jsonl_file(path)?)
}

/// Supervised fine-tuning from the format-primed base policy.
pub fn train_sft_on(data: &[CreativePairSample], cfg: &SftConfig, base_margin: f64) -> Result<SftOutcome> {
    let task = PairTask::new();
    let examples = data.iter().map(|s| task.sft_example(s)).collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(train_sft(&task.base_policy(base_margin), &examples, cfg)?)
}

pub fn train_grpo_on(init: &Checkpoint, data: &[CreativePairSample], cfg: &GrpoConfig, allow_non_sft: bool) -> Result<GrpoOutcome> {
    let task = PairTask::new();
    let items = data.iter().map(|s| task.labeled(s)).collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(train_grpo(init, &items, cfg, allow_non_sft)?)
}

pub fn toy_comparator(checkpoint: &Checkpoint) -> Result<ToyComparator> {
    Ok(ToyComparator::new(PairTask::new(), checkpoint.to_policy()?)?)
}

pub fn evaluate_checkpoint(
    checkpoint: &Checkpoint,
    data: &[CreativePairSample],
    judge: Option<(&dyn TextClient, &str)>,
) -> Result<EvalReport> {
    let comparator = toy_comparator(checkpoint)?;
    let setup = judge.map(|(client, id)| JudgeSetup {
        client,
        judge_id: id.to_string(),
    });
    Ok(evaluate_test_set(&comparator, data, setup.as_ref())?)
}

/// Input of the `select` subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateFile {
    #[serde(default)]
    pub context: ProductContext,
    pub candidates: Vec<CreativeImageRef>,
}

pub fn select(file: &CandidateFile, k: usize, comparator: Arc<dyn Comparator>, cfg: &TournamentConfig) -> Result<SelectResponse> {
    let result = run_tournament(&file.candidates, &file.context, comparator.as_ref(), cfg)?;
    if result.partial {
        return Err(CommandError::Invalid(result.error.unwrap_or_default()));
    }
    let top = top_k(&result, k)?;
    Ok(SelectResponse { top_k: top, result })
}
