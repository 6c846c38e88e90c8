//! Command-line front end. Stages talk to each other through files only.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;
use tracing::info;

use crate::actions::{self, ActionError, ActionToken, NavAction};
use crate::assessor::{accuracy_report, corpus_stats};
use crate::balancer::{self, augment_negatives, build_existence_eval, BalanceError};
use crate::config::{Config, ConfigError};
use crate::emitter::{read_dataset, read_jsonl, write_dataset, write_jsonl, EmitError, GenRecord};
use crate::lexicon::{Lexicon, LexiconError};
use crate::llm::{ChatBackend, HttpBackend, LlmError, RecordingBackend, ReplayBackend};
use crate::mock::MockBackend;
use crate::pipeline::{self, GenerateOptions, GeneratedItem, PipelineError, RefinedItem, StageItem};
use crate::prompt::{DemoLibrary, InstructionPools, PromptError, TaskKind};
use crate::qa_match::{score_file, MatchError, Normalization, Protocol};
use crate::refiner::Refiner;
use crate::sampler::{sweep, PolicyError};
use crate::scene_graph::{index_scenes, load_scene_dir, SceneGraphError, SceneSet};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Scene(#[from] SceneGraphError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Lexicon(#[from] LexiconError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Emit(#[from] EmitError),
    #[error(transparent)]
    Balance(#[from] BalanceError),
    #[error(transparent)]
    Match(#[from] MatchError),
    #[error(transparent)]
    Action(#[from] ActionError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Parser)]
#[command(
    name = "scene-factory",
    version,
    about = "Scene-graph grounded instruction data factory"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
struct Common {
    /// Base seed for every random choice of the stage.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output file or directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BackendKind {
    Real,
    Replay,
    Mock,
}

#[derive(Debug, Clone, Args)]
struct BackendArgs {
    #[arg(long, value_enum)]
    backend: Option<BackendKind>,
    /// Recorded exchanges for the replay backend.
    #[arg(long)]
    store: Option<PathBuf>,
    /// Append every exchange to this store.
    #[arg(long)]
    record: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate scene graphs and print a summary.
    Ingest {
        #[arg(long)]
        scenes: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Write the subgraph sweep of every scene.
    Sample {
        #[arg(long)]
        scenes: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Prompt the backend and parse its responses.
    Generate {
        #[arg(long)]
        scenes: PathBuf,
        #[arg(long)]
        task: TaskKind,
        #[command(flatten)]
        backend: BackendArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Check generated items against the scene graphs.
    Refine {
        #[arg(long)]
        scenes: PathBuf,
        #[arg(long)]
        input: PathBuf,
        /// Verdict log path.
        #[arg(long)]
        verdicts: Option<PathBuf>,
        #[command(flatten)]
        backend: BackendArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Negative augmentation and existence evaluation splits.
    Balance {
        #[command(subcommand)]
        action: BalanceCommand,
    },
    /// Accuracy against the scene graphs and corpus statistics.
    Assess {
        #[arg(long)]
        scenes: Option<PathBuf>,
        /// Generated or refined items.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Emitted dataset directory.
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Write refined items as sharded training records.
    Emit {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        shard_size: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Exact-match scoring of QA predictions.
    EvalQa {
        #[arg(long, value_enum)]
        protocol: Protocol,
        #[arg(long)]
        preds: PathBuf,
        #[arg(long)]
        refs: PathBuf,
        /// Compare strings as given, without lowercasing or trimming.
        #[arg(long)]
        raw: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Encode or decode action tokens.
    Actions {
        #[command(subcommand)]
        action: ActionsCommand,
    },
}

#[derive(Debug, Subcommand)]
enum BalanceCommand {
    /// Append absent-object "no" questions to a QA corpus.
    Augment {
        #[arg(long)]
        scenes: PathBuf,
        /// Dataset directory or JSONL file of records.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        ratio: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Build the Yes / No-1 / No-2 existence questions.
    Eval {
        #[arg(long)]
        scenes: PathBuf,
        #[arg(long)]
        n: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug, Subcommand)]
enum ActionsCommand {
    Encode {
        #[arg(long, value_enum, conflicts_with = "pose")]
        nav: Option<NavAction>,
        /// x y rotation
        #[arg(long, num_args = 3, allow_negative_numbers = true, value_names = ["X", "Y", "ROT"])]
        pose: Option<Vec<f64>>,
        #[command(flatten)]
        common: Common,
    },
    Decode {
        /// One navigation token or three pose tokens, e.g. "<31748> <31644> <31511>".
        tokens: String,
        #[command(flatten)]
        common: Common,
    },
}

fn init_logging() {
    let filter = tracing_subscriber::EnvFilter::try_from_default_env()
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info"));
    let _ = tracing_subscriber::fmt()
        .json()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .try_init();
}

/// Runs the CLI and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    init_logging();
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn load_scenes(dir: &Path) -> Result<SceneSet, CliError> {
    Ok(index_scenes(load_scene_dir(dir)?))
}

/// Writes to `out` or stdout.
fn emit_text(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(p) => {
            if let Some(parent) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(parent).map_err(io_err(parent))?;
            }
            fs::write(p, text).map_err(io_err(p))
        }
        None => {
            let mut so = std::io::stdout().lock();
            so.write_all(text.as_bytes()).map_err(|source| CliError::Io {
                path: "<stdout>".into(),
                source,
            })
        }
    }
}

fn jsonl_or_stdout<T: serde::Serialize>(out: Option<&Path>, rows: &[T]) -> Result<(), CliError> {
    match out {
        Some(p) => Ok(write_jsonl(p, rows)?),
        None => {
            let mut s = String::new();
            for r in rows {
                s.push_str(&serde_json::to_string(r).expect("row serializes"));
                s.push('\n');
            }
            emit_text(None, &s)
        }
    }
}

fn required<'a>(out: &'a Option<PathBuf>, what: &str) -> Result<&'a Path, CliError> {
    out.as_deref()
        .ok_or_else(|| CliError::Invalid(format!("--out is required for {what}")))
}

fn make_backend(args: &BackendArgs, cfg: &Config) -> Result<Option<Box<dyn ChatBackend>>, CliError> {
    let Some(kind) = args.backend else {
        return Ok(None);
    };
    let inner: Box<dyn ChatBackend> = match kind {
        BackendKind::Real => Box::new(HttpBackend::new(cfg.llm.clone().with_env())),
        BackendKind::Mock => Box::new(MockBackend::new(cfg.mock.clone())),
        BackendKind::Replay => {
            let store = args
                .store
                .as_deref()
                .ok_or_else(|| CliError::Invalid("--store is required for the replay backend".into()))?;
            Box::new(ReplayBackend::open(store)?)
        }
    };
    Ok(Some(match &args.record {
        Some(store) => Box::new(RecordingBackend::new(inner, store)?),
        None => inner,
    }))
}

fn refiner_from(cfg: &Config) -> Result<Refiner, CliError> {
    let lexicon = match &cfg.refiner.lexicon {
        Some(p) => Lexicon::load(p)?,
        None => Lexicon::default(),
    };
    Ok(Refiner::new(lexicon, cfg.refiner.max_rewrite_rounds))
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Ingest { scenes, common } => {
            Config::load_or_default(common.config.as_deref())?;
            let set = load_scenes(&scenes)?;
            let summary: Vec<serde_json::Value> = set
                .values()
                .map(|g| {
                    serde_json::json!({
                        "scene_id": g.scene_id(),
                        "nodes": g.nodes().len(),
                        "relations": g.relations().len(),
                        "labels": g.label_counts(),
                    })
                })
                .collect();
            info!(scenes = set.len(), "scene graphs valid");
            emit_text(
                common.out.as_deref(),
                &(serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n"),
            )
        }
        Command::Sample { scenes, common } => {
            let cfg = Config::load_or_default(common.config.as_deref())?;
            let mut policy = cfg.sampler;
            policy.seed = common.seed;
            policy.validate()?;
            let out = required(&common.out, "sample")?;
            fs::create_dir_all(out).map_err(io_err(out))?;
            let mut written = 0;
            for g in load_scenes(&scenes)?.values() {
                for s in sweep(g, &policy) {
                    let path = out.join(format!("{}.json", s.derived_scene_id()));
                    fs::write(&path, s.graph.to_json_string() + "\n").map_err(io_err(&path))?;
                    written += 1;
                }
            }
            info!(written, "subgraphs written");
            Ok(())
        }
        Command::Generate {
            scenes,
            task,
            backend,
            common,
        } => {
            let cfg = Config::load_or_default(common.config.as_deref())?;
            let set = load_scenes(&scenes)?;
            let demos = match &cfg.prompt.demos {
                Some(p) => DemoLibrary::load(p)?,
                None => DemoLibrary::default(),
            };
            let mut pools = InstructionPools::default();
            if let Some(p) = &cfg.prompt.instructions {
                pools.extend(InstructionPools::load(p)?);
            }
            let be = make_backend(&backend, &cfg)?
                .ok_or_else(|| CliError::Invalid("--backend is required for generate".into()))?;
            cfg.sampler.validate()?;
            let opts = GenerateOptions {
                task,
                n_demos: cfg.prompt.n_demos,
                seed: common.seed,
                temperature: cfg.llm.temperature,
                max_tokens: cfg.llm.max_tokens,
                jobs: backend.jobs,
                policy: cfg.sampler.clone(),
            };
            let out = pipeline::generate(&set, &opts, &demos, &pools, be.as_ref())?;
            jsonl_or_stdout(common.out.as_deref(), &out.items)
        }
        Command::Refine {
            scenes,
            input,
            verdicts,
            backend,
            common,
        } => {
            let cfg = Config::load_or_default(common.config.as_deref())?;
            let set = load_scenes(&scenes)?;
            let items: Vec<GeneratedItem> = read_jsonl(&input)?;
            let be = make_backend(&backend, &cfg)?;
            let refiner = refiner_from(&cfg)?;
            let out = pipeline::refine_items(&items, &set, &refiner, be.as_deref(), backend.jobs)?;
            if let Some(v) = verdicts {
                write_jsonl(&v, &out.verdicts)?;
            }
            jsonl_or_stdout(common.out.as_deref(), &out.items)
        }
        Command::Emit {
            input,
            shard_size,
            common,
        } => {
            let cfg = Config::load_or_default(common.config.as_deref())?;
            let items: Vec<RefinedItem> = read_jsonl(&input)?;
            let records = pipeline::emit_items(&items, cfg.emitter.image_tokens, cfg.emitter.object_tokens)?;
            let out = required(&common.out, "emit")?;
            let manifest = write_dataset(&records, out, shard_size.unwrap_or(cfg.emitter.shard_size))?;
            info!(
                records = manifest.total_records,
                shards = manifest.shards.len(),
                "dataset written"
            );
            Ok(())
        }
        Command::Assess {
            scenes,
            input,
            dataset,
            common,
        } => {
            let cfg = Config::load_or_default(common.config.as_deref())?;
            if input.is_none() && dataset.is_none() {
                return Err(CliError::Invalid("assess needs --input or --dataset".into()));
            }
            let mut report = serde_json::Map::new();
            if let Some(input) = input {
                let scenes = scenes.ok_or_else(|| CliError::Invalid("--scenes is required with --input".into()))?;
                let set = load_scenes(&scenes)?;
                let items: Vec<StageItem> = read_jsonl(&input)?;
                let lexicon = refiner_from(&cfg)?.lexicon;
                let acc = accuracy_report(&pipeline::qa_pairs(&items), &set, &lexicon);
                report.insert("accuracy".into(), serde_json::to_value(acc).expect("report serializes"));
            }
            if let Some(dir) = dataset {
                let records = read_dataset(&dir)?;
                report.insert(
                    "corpus".into(),
                    serde_json::to_value(corpus_stats(&records)).expect("stats serialize"),
                );
            }
            emit_text(
                common.out.as_deref(),
                &(serde_json::to_string_pretty(&report).expect("report serializes") + "\n"),
            )
        }
        Command::EvalQa {
            protocol,
            preds,
            refs,
            raw,
            common,
        } => {
            let norm = if raw {
                Normalization::RAW
            } else {
                Normalization::default()
            };
            let report = score_file(&preds, &refs, protocol, norm, common.out.as_deref())?;
            println!("EM@1: {:.4}", report.em_at_1);
            Ok(())
        }
        Command::Balance { action } => balance(action),
        Command::Actions { action } => actions_cmd(action),
    }
}

fn read_records(input: &Path) -> Result<Vec<GenRecord>, CliError> {
    if input.is_dir() {
        Ok(read_dataset(input)?)
    } else {
        Ok(read_jsonl(input)?)
    }
}

fn balance(action: BalanceCommand) -> Result<(), CliError> {
    match action {
        BalanceCommand::Augment {
            scenes,
            input,
            ratio,
            common,
        } => {
            let cfg = Config::load_or_default(common.config.as_deref())?;
            let set = load_scenes(&scenes)?;
            let records = read_records(&input)?;
            let ratio = ratio.unwrap_or(cfg.balancer.ratio);
            let out_records = augment_negatives(&records, &set, ratio, common.seed)?;
            info!(input = records.len(), output = out_records.len(), "negatives appended");
            let out = required(&common.out, "balance augment")?;
            write_dataset(&out_records, out, cfg.emitter.shard_size)?;
            Ok(())
        }
        BalanceCommand::Eval { scenes, n, common } => {
            let cfg = Config::load_or_default(common.config.as_deref())?;
            let set = load_scenes(&scenes)?;
            let distractors: Vec<String> = match &cfg.balancer.distractors {
                Some(p) => {
                    let text = fs::read_to_string(p).map_err(io_err(p))?;
                    serde_json::from_str(&text).map_err(|e| CliError::Invalid(format!("{}: {e}", p.display())))?
                }
                None => balancer::default_distractors(),
            };
            let qs = build_existence_eval(&set, n.unwrap_or(cfg.balancer.n_per_subset), &distractors, common.seed)?;
            jsonl_or_stdout(common.out.as_deref(), &qs)
        }
    }
}

fn actions_cmd(action: ActionsCommand) -> Result<(), CliError> {
    match action {
        ActionsCommand::Encode { nav, pose, common } => {
            let cfg = Config::load_or_default(common.config.as_deref())?.actions;
            cfg.validate()?;
            let text = match (nav, pose) {
                (Some(a), _) => actions::encode_nav(a, &cfg).to_string(),
                (None, Some(p)) => actions::encode_pose(p[0], p[1], p[2], &cfg)?
                    .iter()
                    .map(ToString::to_string)
                    .collect::<Vec<_>>()
                    .join(" "),
                (None, None) => return Err(CliError::Invalid("encode needs --nav or --pose".into())),
            };
            emit_text(common.out.as_deref(), &(text + "\n"))
        }
        ActionsCommand::Decode { tokens, common } => {
            let cfg = Config::load_or_default(common.config.as_deref())?.actions;
            cfg.validate()?;
            let toks: Vec<ActionToken> = actions::parse_tokens(&tokens)?;
            let value = match toks.as_slice() {
                [t] => serde_json::json!({ "nav": actions::decode_nav(*t, &cfg)? }),
                [x, y, r] => {
                    let (x, y, rot) = actions::decode_pose([*x, *y, *r], &cfg)?;
                    serde_json::json!({ "x": x, "y": y, "rot": rot })
                }
                _ => {
                    return Err(CliError::Invalid(
                        "decode takes one navigation token or three pose tokens".into(),
                    ))
                }
            };
            emit_text(common.out.as_deref(), &(value.to_string() + "\n"))
        }
    }
}
