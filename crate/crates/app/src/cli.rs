//! Command-line surface. Every subcommand prints one JSON document on
//! stdout; logs go to stderr.

use clap::{Parser, Subcommand, ValueEnum};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use creative_select::client::TextClient;
use creative_select::io::write_jsonl_file;
use creative_select::policy::{Checkpoint, Stage};
use creative_select::tournament::{ClientComparator, Comparator};

use crate::commands::{self, CandidateFile, CommandError};
use crate::config::AppConfig;
use crate::gateway::{GatewayClient, GatewayRole};
use crate::service::{router, ServiceState};
use crate::store::{Clock, DatasetStore, Recovery, SystemClock};

type BoxError = Box<dyn std::error::Error + Send + Sync>;

#[derive(Debug, Parser)]
#[command(name = "creative-select", version, about = "Pairwise creative selection toolkit")]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides `data_dir` from the configuration.
    #[arg(long, global = true)]
    pub data_dir: Option<PathBuf>,
    /// Overrides `dataset` from the configuration.
    #[arg(long, global = true)]
    pub dataset: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ComparatorChoice {
    Toy,
    Remote,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Filter raw pairs by exposure and add them to the dataset log.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        /// Cut a torn final log line instead of refusing to open.
        #[arg(long)]
        recover: bool,
    },
    /// Write synthetic raw pairs with exposure stats.
    Synth {
        #[arg(long, default_value_t = 1000)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Fill protocol answers from the preference rule, with this
        /// similarity threshold for the Q2 early exit.
        #[arg(long)]
        annotate: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Assign TRAIN/TEST to annotated pairs, grouped by product.
    Split {
        #[arg(long)]
        train_fraction: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long)]
        addr: Option<String>,
    },
    /// Write annotated, split pairs as train.jsonl and test.jsonl.
    AnnotateExport {
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Fill the reasoning text of annotated pairs.
    RenderCot {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Rewrite the template through the configured cot_polisher gateway.
        #[arg(long)]
        polish: bool,
    },
    /// Supervised fine-tuning on reasoning targets.
    TrainSft {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "cot_sft.ckpt")]
        out: PathBuf,
        /// Line-delimited JSON training curve.
        #[arg(long)]
        curve: Option<PathBuf>,
    },
    /// Reinforcement fine-tuning from a supervised checkpoint.
    TrainGrpo {
        #[arg(long)]
        init: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "grpo.ckpt")]
        out: PathBuf,
        #[arg(long)]
        curve: Option<PathBuf>,
        /// Start from a checkpoint that did not come out of supervised
        /// fine-tuning.
        #[arg(long)]
        allow_non_sft: bool,
    },
    /// Accuracy, format rate and optional judge score on labelled pairs.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Score reasoning with the configured judge gateway.
        #[arg(long)]
        judge: bool,
        /// Per-pair records as line-delimited JSON.
        #[arg(long)]
        records: Option<PathBuf>,
    },
    /// Rank candidates by round-robin wins and print the top k.
    Select {
        /// JSON file with `context` and `candidates`.
        #[arg(long)]
        candidates: PathBuf,
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[arg(long, value_enum, default_value_t = ComparatorChoice::Toy)]
        comparator: ComparatorChoice,
        /// Checkpoint for the toy comparator.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        both_orders: bool,
    },
    /// Funnel counts of the dataset.
    Stats,
}

impl Cli {
    pub fn app_config(&self) -> Result<AppConfig, BoxError> {
        let mut cfg = match &self.config {
            Some(p) => AppConfig::load(p)?,
            None => AppConfig::default(),
        };
        if let Some(d) = &self.data_dir {
            cfg.data_dir = d.clone();
        }
        if let Some(d) = &self.dataset {
            cfg.dataset = d.clone();
        }
        Ok(cfg)
    }
}

fn print_json(value: &impl serde::Serialize) -> Result<(), BoxError> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn gateway(cfg: &AppConfig, role: GatewayRole) -> Result<GatewayClient, BoxError> {
    let g = cfg
        .gateway_for(role)?
        .ok_or_else(|| format!("no [gateway.{}] table in the configuration", serde_json::to_value(role).unwrap_or_default().as_str().unwrap_or("?")))?;
    Ok(GatewayClient::new(g)?)
}

fn open_store(cfg: &AppConfig, recover: bool) -> Result<DatasetStore, BoxError> {
    let recovery = if recover { Recovery::TruncateTail } else { Recovery::Fail };
    Ok(DatasetStore::open_with(&cfg.data_dir, &cfg.dataset, recovery)?)
}

fn toy_from(path: &Path) -> Result<Arc<dyn Comparator>, BoxError> {
    Ok(Arc::new(commands::toy_comparator(&Checkpoint::load(path)?)?))
}

pub fn run(cli: Cli) -> Result<(), BoxError> {
    let cfg = cli.app_config()?;
    let clock = SystemClock;
    match cli.command {
        Command::Ingest { input, recover } => {
            let raw = commands::load_samples(&input)?;
            let mut store = open_store(&cfg, recover)?;
            let report = commands::ingest(&mut store, &raw, &cfg.collection, clock.now_ms())?;
            store.write_snapshot()?;
            print_json(&report)
        }
        Command::Synth {
            count,
            seed,
            annotate,
            out,
        } => {
            let pairs = commands::synth(count, seed, annotate);
            write_jsonl_file(&out, &pairs)?;
            print_json(&serde_json::json!({"written": pairs.len(), "out": out}))
        }
        Command::Split { train_fraction, seed } => {
            let mut split_cfg = cfg.split;
            if let Some(f) = train_fraction {
                split_cfg.train_fraction = f;
            }
            if let Some(s) = seed {
                split_cfg.seed = s;
            }
            let mut store = open_store(&cfg, false)?;
            let report = commands::split(&mut store, &split_cfg, clock.now_ms())?;
            store.write_snapshot()?;
            print_json(&report)
        }
        Command::Serve { addr } => serve(&cfg, addr),
        Command::AnnotateExport { out_dir } => {
            let store = open_store(&cfg, false)?;
            print_json(&commands::annotate_export(&store, &out_dir)?)
        }
        Command::RenderCot { input, out, polish } => {
            let mut samples = commands::load_samples(&input)?;
            let polisher = if polish { Some(gateway(&cfg, GatewayRole::CotPolisher)?) } else { None };
            let report = commands::render_cots(&mut samples, polisher.as_ref().map(|p| p as &dyn TextClient));
            write_jsonl_file(&out, &samples)?;
            print_json(&report)
        }
        Command::TrainSft { data, out, curve } => {
            let samples = commands::load_samples(&data)?;
            let outcome = commands::train_sft_on(&samples, &cfg.sft, cfg.base_margin)?;
            outcome.checkpoint.save(&out)?;
            if let Some(c) = curve {
                commands::write_curve(&c, Stage::CotSft, &outcome.curve)?;
            }
            print_json(&serde_json::json!({
                "checkpoint": out,
                "initial_loss": outcome.initial_loss,
                "final": outcome.curve.last(),
            }))
        }
        Command::TrainGrpo {
            init,
            data,
            out,
            curve,
            allow_non_sft,
        } => {
            let samples = commands::load_samples(&data)?;
            let init = Checkpoint::load(&init)?;
            let outcome = commands::train_grpo_on(&init, &samples, &cfg.grpo, allow_non_sft)?;
            outcome.checkpoint.save(&out)?;
            if let Some(c) = curve {
                commands::write_curve(&c, Stage::Grpo, &outcome.curve)?;
            }
            print_json(&serde_json::json!({"checkpoint": out, "final": outcome.curve.last()}))
        }
        Command::Evaluate {
            checkpoint,
            data,
            judge,
            records,
        } => {
            let samples = commands::load_samples(&data)?;
            let ckpt = Checkpoint::load(&checkpoint)?;
            let client = if judge { Some(gateway(&cfg, GatewayRole::Judge)?) } else { None };
            let judge_id = client.as_ref().and_then(|c| c.config.model.clone()).unwrap_or_else(|| "judge".into());
            let report = commands::evaluate_checkpoint(
                &ckpt,
                &samples,
                client.as_ref().map(|c| (c as &dyn TextClient, judge_id.as_str())),
            )?;
            if let Some(r) = records {
                write_jsonl_file(&r, &report.records)?;
            }
            print_json(&serde_json::json!({
                "count": report.count,
                "accuracy": report.accuracy,
                "format_rate": report.format_rate,
                "mean_judge_score": report.mean_judge_score,
            }))
        }
        Command::Select {
            candidates,
            k,
            comparator,
            checkpoint,
            both_orders,
        } => {
            let file: CandidateFile = serde_json::from_slice(&std::fs::read(&candidates)?)?;
            let comp: Arc<dyn Comparator> = match comparator {
                ComparatorChoice::Toy => {
                    let path = checkpoint
                        .or(cfg.serve.toy_checkpoint.clone())
                        .ok_or_else(|| CommandError::Invalid("the toy comparator needs --checkpoint".into()))?;
                    toy_from(&path)?
                }
                ComparatorChoice::Remote => Arc::new(ClientComparator {
                    client: gateway(&cfg, GatewayRole::Comparator)?,
                }),
            };
            let mut tcfg = cfg.tournament.clone();
            tcfg.both_orders |= both_orders;
            print_json(&commands::select(&file, k, comp, &tcfg)?)
        }
        Command::Stats => {
            let store = open_store(&cfg, false)?;
            print_json(&commands::stats(&store))
        }
    }
}

/// Builds the service state from the configuration: the configured dataset,
/// a toy comparator if a checkpoint is set, a remote comparator if a
/// comparator gateway is set.
pub fn service_state(cfg: &AppConfig) -> Result<ServiceState, BoxError> {
    let store = open_store(cfg, false)?;
    let mut state = ServiceState::new(vec![store])
        .with_lease_ms(cfg.serve.lease_minutes * 60 * 1000)
        .with_snapshot_every(cfg.serve.snapshot_every)
        .with_tournament(cfg.tournament.clone());
    if let Some(path) = &cfg.serve.toy_checkpoint {
        state = state.with_toy(toy_from(path)?);
    }
    if let Some(g) = cfg.gateway_for(GatewayRole::Comparator)? {
        state = state.with_remote(Arc::new(ClientComparator {
            client: GatewayClient::new(g)?,
        }));
    }
    if let Some(var) = &cfg.serve.bearer_token_env {
        let token = std::env::var(var).map_err(|_| format!("environment variable {var} is not set"))?;
        state = state.with_bearer_token(Some(token));
    }
    Ok(state)
}

fn serve(cfg: &AppConfig, addr: Option<String>) -> Result<(), BoxError> {
    let state = Arc::new(service_state(cfg)?);
    let addr = addr.unwrap_or_else(|| cfg.serve.addr.clone());
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(&addr).await?;
        tracing::info!(addr = %listener.local_addr()?, "listening");
        axum::serve(listener, router(state.clone()))
            .with_graceful_shutdown(async {
                tokio::signal::ctrl_c().await.ok();
            })
            .await?;
        Ok::<_, BoxError>(())
    })?;
    state.write_snapshots()?;
    Ok(())
}
