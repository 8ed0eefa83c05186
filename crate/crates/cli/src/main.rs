//! `sea`: generate synthetic corpora, train, evaluate, predict and analyze.
//!
//! Exit codes: 0 on success, 1 for invalid input (arguments, paths, files,
//! configs), 2 for failures while computing.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use log::info;

use sea_core::analysis::{similarity_analysis, write_embeddings_tsv, AnalysisConfig};
use sea_core::checkpoint::Checkpoint;
use sea_core::corpus::{
    generate_synthetic, load_corpus, load_schema, synthetic_schema, write_corpus, write_schema, Document, EventSchema,
    GeneratorConfig,
};
use sea_core::error::SeaError;
use sea_core::eval::{align_predictions, evaluate_predictions, predict_all, read_predictions, write_predictions};
use sea_core::model::{Ablation, SeaModel};
use sea_core::train::{train, TrainConfig};

#[derive(Parser)]
#[command(name = "sea", version, about = "Document-level event extraction with explicit event aggregation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a seeded synthetic corpus (and optionally its schema).
    Generate(GenerateArgs),
    /// Train a model and write a checkpoint plus an epoch log.
    Train(TrainArgs),
    /// Score a checkpoint or a prediction file against a gold corpus.
    Eval(EvalArgs),
    /// Write predicted records for every document of a corpus.
    Predict(PredictArgs),
    /// Intra/inter-class similarity of event-type representations.
    Analyze(AnalyzeArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Output JSONL corpus.
    #[arg(long)]
    out: PathBuf,
    /// Where to write the matching schema.
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Generator settings (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    schema: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    /// Development corpus used for model selection.
    #[arg(long)]
    dev: Option<PathBuf>,
    /// Output checkpoint.
    #[arg(long)]
    out: PathBuf,
    /// Training settings (JSON); flags below take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    ablation: Option<String>,
    /// Batch 64 and learning rate 5e-5.
    #[arg(long)]
    paper_mode: bool,
    #[arg(long)]
    epochs: Option<usize>,
    /// Epoch log (JSONL); defaults to `<out>.log.jsonl`.
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    schema: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, required_unless_present = "predictions", conflicts_with = "predictions")]
    checkpoint: Option<PathBuf>,
    /// Score an existing prediction file instead of running a checkpoint.
    #[arg(long)]
    predictions: Option<PathBuf>,
    /// Output metrics report (JSON).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    schema: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Output predictions (JSONL).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long)]
    schema: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Output similarity report (JSON).
    #[arg(long)]
    out: PathBuf,
    /// Embedding dump (TSV); defaults to `<out>.tsv`.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// Sampling settings (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

/// A failure and the exit code it maps to.
enum Failure {
    Validation(anyhow::Error),
    Runtime(anyhow::Error),
}

impl From<SeaError> for Failure {
    fn from(e: SeaError) -> Self {
        if e.is_validation() {
            Failure::Validation(e.into())
        } else {
            Failure::Runtime(e.into())
        }
    }
}

fn invalid(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Validation(e.into())
}

type CmdResult<T = ()> = Result<T, Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let (name, result) = match cli.command {
        Command::Generate(a) => ("generate", generate(a)),
        Command::Train(a) => ("train", train_cmd(a)),
        Command::Eval(a) => ("eval", eval_cmd(a)),
        Command::Predict(a) => ("predict", predict_cmd(a)),
        Command::Analyze(a) => ("analyze", analyze_cmd(a)),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(e)) => {
            eprintln!("sea {name}: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("sea {name}: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CmdResult<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display())).map_err(invalid)?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display())).map_err(invalid)
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> CmdResult {
    let text = serde_json::to_string_pretty(value).map_err(|e| Failure::Runtime(e.into()))?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display())).map_err(invalid)
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Loads schema and corpus; any rejected line makes the input invalid.
fn load_inputs(schema: &Path, corpus: &Path) -> CmdResult<(EventSchema, Vec<Document>)> {
    let schema = load_schema(schema)?;
    let loaded = load_corpus(corpus, &schema)?;
    if let Some(r) = loaded.rejected.first() {
        return Err(invalid(anyhow!(
            "{}: {} invalid line(s); first at line {}: {}",
            corpus.display(),
            loaded.rejected.len(),
            r.line,
            r.reason
        )));
    }
    Ok((schema, loaded.documents))
}

fn load_model(path: &Path, schema: &EventSchema) -> CmdResult<SeaModel> {
    let model = SeaModel::from_checkpoint(&Checkpoint::load(path)?)?;
    if &model.schema != schema {
        return Err(invalid(anyhow!("{}: checkpoint was trained on a different schema", path.display())));
    }
    Ok(model)
}

fn generate(a: GenerateArgs) -> CmdResult {
    let cfg: GeneratorConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => GeneratorConfig::default(),
    };
    let docs = generate_synthetic(&cfg, a.seed)?;
    write_corpus(&a.out, &docs)?;
    if let Some(p) = &a.schema {
        write_schema(p, &synthetic_schema(&cfg))?;
    }
    info!("wrote {} documents to {}", docs.len(), a.out.display());
    Ok(())
}

fn train_cmd(a: TrainArgs) -> CmdResult {
    let mut cfg: TrainConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => TrainConfig::default(),
    };
    if a.paper_mode {
        cfg = cfg.paper_mode();
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(e) = a.epochs {
        cfg.epochs = e;
    }
    if let Some(ab) = &a.ablation {
        cfg.model.ablation = ab.parse::<Ablation>()?;
    }
    let (schema, docs) = load_inputs(&a.schema, &a.corpus)?;
    if docs.is_empty() {
        return Err(invalid(anyhow!("{}: corpus has no documents", a.corpus.display())));
    }
    let dev = match &a.dev {
        Some(p) => Some(load_inputs(&a.schema, p)?.1),
        None => None,
    };
    let log_path = a.log.clone().unwrap_or_else(|| with_suffix(&a.out, ".log.jsonl"));
    let mut log = fs::File::create(&log_path).with_context(|| format!("creating {}", log_path.display())).map_err(invalid)?;
    let mut log_error = None;
    let outcome = train(&docs, dev.as_deref(), &schema, &cfg, |entry| {
        let line = serde_json::to_string(entry).expect("epoch log serializes");
        if let Err(e) = writeln!(log, "{line}") {
            log_error.get_or_insert(e);
        }
    })?;
    if let Some(e) = log_error {
        return Err(invalid(anyhow!("writing {}: {e}", log_path.display())));
    }
    outcome.model.to_checkpoint()?.save(&a.out)?;
    info!("wrote checkpoint {}", a.out.display());
    Ok(())
}

fn eval_cmd(a: EvalArgs) -> CmdResult {
    let (schema, docs) = load_inputs(&a.schema, &a.corpus)?;
    let records = match (&a.checkpoint, &a.predictions) {
        (Some(ckpt), _) => {
            let model = load_model(ckpt, &schema)?;
            align_predictions(&docs, predict_all(&model, &docs)?)
        }
        (None, Some(p)) => align_predictions(&docs, read_predictions(p)?),
        (None, None) => return Err(invalid(anyhow!("either --checkpoint or --predictions is required"))),
    };
    let report = evaluate_predictions(&docs, &records)?;
    info!("micro F1 {:.4} (P {:.4}, R {:.4})", report.f1, report.precision, report.recall);
    write_json(&a.out, &report)
}

fn predict_cmd(a: PredictArgs) -> CmdResult {
    let (schema, docs) = load_inputs(&a.schema, &a.corpus)?;
    let model = load_model(&a.checkpoint, &schema)?;
    let preds = predict_all(&model, &docs)?;
    write_predictions(&a.out, &preds)?;
    Ok(())
}

fn analyze_cmd(a: AnalyzeArgs) -> CmdResult {
    let mut cfg: AnalysisConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => AnalysisConfig::default(),
    };
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    let (schema, docs) = load_inputs(&a.schema, &a.corpus)?;
    let model = load_model(&a.checkpoint, &schema)?;
    let (report, embeddings) = similarity_analysis(&model, &docs, &cfg)?;
    write_json(&a.out, &report)?;
    let tsv = a.embeddings.clone().unwrap_or_else(|| with_suffix(&a.out, ".tsv"));
    write_embeddings_tsv(&tsv, &embeddings)?;
    Ok(())
}
