//! Operator entry point. Subcommands cover corpus construction (`ingest`,
//! `synth`), training (`pretrain`, `train`, `pipeline`), and post-hoc
//! tooling (`eval`, `sweep`, `explain`). Machine-readable results go to
//! stdout; progress and errors go to stderr.
//!
//! Exit codes: 0 success, 1 usage, 2 bad input data, 3 training failure.
//! `RAYON_NUM_THREADS` bounds worker threads; nothing else is read from
//! the environment.

mod artifacts;

use std::collections::HashMap;
use std::fs;
use std::io::Write as _;
use std::path::PathBuf;
use std::process;

use anyhow::{Context, Result};
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use relmine::bimodal::explain;
use relmine::codebook::Codebook;
use relmine::config::RunConfig;
use relmine::embed::TextEmbedder;
use relmine::graph::corpus_stats;
use relmine::ingest::{ingest_csv, Corpus};
use relmine::pipeline::{
    evaluate, predict, run_pipeline, run_seeds, stratified_split, MetricRow,
};
use relmine::pretext::{masked_accuracy, train_pretext, PretextModel};
use relmine::synth::{generate_synthetic_corpus, SynthSpec};

#[derive(Parser)]
#[command(
    name = "relmine",
    version,
    about = "Latent-relation mining over survey response graphs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a relational-graph corpus from a survey CSV and a codebook.
    Ingest(IngestArgs),
    /// Generate a synthetic corpus with planted cross-topic dependencies.
    Synth(SynthArgs),
    /// Run the masked edge-type stage alone and save the mined structures.
    Pretrain(StageArgs),
    /// Train the full model on one seed; save checkpoints and a test report.
    Train(StageArgs),
    /// Score a saved model on one corpus split.
    Eval(EvalArgs),
    /// Full protocol; more than one seed aggregates mean and deviation.
    Pipeline(PipelineArgs),
    /// One pipeline run per hyperparameter value, collected as CSV.
    Sweep(SweepArgs),
    /// Generate answer-and-reason text for individual respondents.
    Explain(ExplainArgs),
}

/// Config file plus the overrides every training command accepts.
#[derive(Args)]
struct ConfigArgs {
    /// JSON run configuration; omitted fields keep their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Base random seed (overrides the config file).
    #[arg(long)]
    seed: Option<u64>,
    /// Ablation switches, comma separated.
    #[arg(
        long,
        value_delimiter = ',',
        value_parser = ["no_relation_matrix", "no_latent_learning", "no_llm"]
    )]
    ablation: Vec<String>,
    /// Initialize the detector encoder from the pretext encoder.
    #[arg(long)]
    warm_start: bool,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::read_json(path)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        for flag in &self.ablation {
            match flag.as_str() {
                "no_relation_matrix" => cfg.ablation.no_relation_matrix = true,
                "no_latent_learning" => cfg.ablation.no_latent_learning = true,
                "no_llm" => cfg.ablation.no_llm = true,
                other => unreachable!("clap rejects {other}"),
            }
        }
        if self.warm_start {
            cfg.warm_start = true;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct IngestArgs {
    /// Survey responses, one respondent per CSV row.
    #[arg(long)]
    survey: PathBuf,
    /// Codebook JSON: questions, topics, demographics, label rule.
    #[arg(long)]
    codebook: PathBuf,
    /// Output corpus path (JSON lines).
    #[arg(long)]
    out: PathBuf,
    /// Precomputed text embeddings (hash<TAB>floats per line). Without
    /// this, a deterministic hashing embedder is used.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// Node feature dimension.
    #[arg(long, default_value_t = 32)]
    dim: usize,
}

#[derive(Args)]
struct SynthArgs {
    /// Output corpus path (JSON lines).
    #[arg(long)]
    out: PathBuf,
    /// Where to write the planted ground truth (JSON).
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long, default_value_t = 200)]
    graphs: usize,
    #[arg(long, default_value_t = 12)]
    questions: usize,
    #[arg(long, default_value_t = 4)]
    topics: usize,
    /// Answer categories per question.
    #[arg(long, default_value_t = 3)]
    categories: usize,
    /// Coupled cross-topic question pairs to plant.
    #[arg(long, default_value_t = 2)]
    planted: usize,
    /// Probability that a planted pair answers in its coupled state.
    #[arg(long, default_value_t = 0.9)]
    pair_strength: f64,
    /// Target positive-label rate.
    #[arg(long, default_value_t = 0.3)]
    base_rate: f64,
    /// Spread of per-category label weights.
    #[arg(long, default_value_t = 1.0)]
    weight_scale: f64,
    /// Extra logit when a planted pair is in its coupled state.
    #[arg(long, default_value_t = 0.0)]
    interaction_weight: f64,
    /// Node feature dimension.
    #[arg(long, default_value_t = 32)]
    dim: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct StageArgs {
    /// Corpus file (JSON lines).
    #[arg(long)]
    corpus: PathBuf,
    /// Output directory for checkpoints, logs, and reports.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct EvalArgs {
    /// Corpus file the model was trained on (JSON lines).
    #[arg(long)]
    corpus: PathBuf,
    /// Directory written by `train` or single-seed `pipeline`.
    #[arg(long)]
    model: PathBuf,
    /// Which split to score.
    #[arg(long, default_value = "test", value_parser = ["train", "val", "test"])]
    split: String,
    /// Optional path for per-respondent predictions (JSON).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PipelineArgs {
    /// Corpus file (JSON lines).
    #[arg(long)]
    corpus: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Number of seeded runs, counting up from the base seed.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    seeds: u64,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct SweepArgs {
    /// Corpus file (JSON lines).
    #[arg(long)]
    corpus: PathBuf,
    /// Hyperparameter to vary.
    #[arg(long, value_parser = ["k_sim", "k_att", "lambda_deg"])]
    param: String,
    /// Comma-separated values, one pipeline run each.
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<f64>,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct ExplainArgs {
    /// Corpus file the model was trained on (JSON lines).
    #[arg(long)]
    corpus: PathBuf,
    /// Directory written by `train` or single-seed `pipeline`.
    #[arg(long)]
    model: PathBuf,
    /// Respondent ids, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    ids: Vec<String>,
    /// Decoding budget; defaults to the model's configured value.
    #[arg(long)]
    max_new: Option<usize>,
    /// Optional path for the records (JSON lines).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            process::exit(code);
        }
    };
    if let Err(err) = run(cli) {
        eprintln!("error: {err:#}");
        process::exit(exit_code(&err));
    }
}

/// Training dynamics get 3; everything else that reaches main is bad
/// input data or a bad artifact, which gets 2.
fn exit_code(err: &anyhow::Error) -> i32 {
    match err.downcast_ref::<relmine::Error>() {
        Some(e) if !e.is_data_error() => 3,
        _ => 2,
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest(args) => cmd_ingest(&args),
        Command::Synth(args) => cmd_synth(&args),
        Command::Pretrain(args) => cmd_pretrain(&args),
        Command::Train(args) => cmd_train(&args),
        Command::Eval(args) => cmd_eval(&args),
        Command::Pipeline(args) => cmd_pipeline(&args),
        Command::Sweep(args) => cmd_sweep(&args),
        Command::Explain(args) => cmd_explain(&args),
    }
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn cmd_ingest(args: &IngestArgs) -> Result<()> {
    let codebook = Codebook::from_path(&args.codebook)?;
    let embedder = match &args.embeddings {
        Some(path) => TextEmbedder::precomputed_from_path(path, args.dim)?,
        None => TextEmbedder::hashing(args.dim),
    };
    let corpus = ingest_csv(&args.survey, &codebook, &embedder)?;
    corpus.write_jsonl(&args.out)?;
    let stats = corpus_stats(&corpus.graphs)?;
    eprintln!("wrote {}", args.out.display());
    print_json(&stats)
}

fn cmd_synth(args: &SynthArgs) -> Result<()> {
    let spec = SynthSpec {
        n_graphs: args.graphs,
        n_questions: args.questions,
        n_topics: args.topics,
        n_categories: args.categories,
        n_planted: args.planted,
        pair_strength: args.pair_strength,
        base_rate: args.base_rate,
        weight_scale: args.weight_scale,
        interaction_weight: args.interaction_weight,
        d_in: args.dim,
    };
    let (corpus, truth) = generate_synthetic_corpus(&spec, args.seed)?;
    corpus.write_jsonl(&args.out)?;
    if let Some(path) = &args.truth {
        truth.write_json(path)?;
    }
    let stats = corpus_stats(&corpus.graphs)?;
    eprintln!("wrote {}", args.out.display());
    print_json(&stats)
}

fn cmd_pretrain(args: &StageArgs) -> Result<()> {
    let cfg = args.config.resolve()?;
    let mut corpus = Corpus::read_jsonl(&args.corpus)?;
    corpus.check_shape()?;
    let splits = stratified_split(&corpus, &cfg.splits, cfg.seed)?;
    if !corpus.header.standardized {
        corpus.standardize_numeric(&splits.train)?;
    }

    let outcome = train_pretext(&corpus, &splits.train, &cfg)?;
    fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    cfg.write_json(&args.out.join(artifacts::CONFIG_FILE))?;
    relmine::checkpoint::save(&outcome.store, &args.out.join("pretext.bin"))?;
    artifacts::write_json(&args.out.join(artifacts::STRUCTURES_FILE), &outcome.structures)?;
    artifacts::write_json(&args.out.join("pretext_log.json"), &outcome.log)?;

    let model = PretextModel::attach(&outcome.store, &corpus, &cfg)?;
    let val_accuracy = masked_accuracy(&outcome.store, &model, &corpus, &splits.val)?;
    eprintln!("wrote {}", args.out.display());
    print_json(&serde_json::json!({
        "epochs": outcome.log.len(),
        "final": outcome.log.last(),
        "val_masked_accuracy": val_accuracy,
    }))
}

fn cmd_train(args: &StageArgs) -> Result<()> {
    let cfg = args.config.resolve()?;
    let corpus = Corpus::read_jsonl(&args.corpus)?;
    let run = run_pipeline(&corpus, &cfg)?;
    artifacts::save_run(&args.out, &cfg, &run)?;
    eprintln!("wrote {}", args.out.display());
    print_json(&run.report)
}

fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let saved = artifacts::load_model(&args.model)?;
    let corpus = Corpus::read_jsonl(&args.corpus)?;
    let (corpus, splits) = saved.prepare(corpus)?;
    let model = saved.attach(&corpus)?;
    let indices = match args.split.as_str() {
        "train" => &splits.train,
        "val" => &splits.val,
        _ => &splits.test,
    };
    let predictions = predict(&saved.store, &model, &corpus, indices)?;
    let report = evaluate(&predictions)?;
    if let Some(path) = &args.out {
        artifacts::write_json(path, &predictions)?;
    }
    print_json(&report)
}

fn cmd_pipeline(args: &PipelineArgs) -> Result<()> {
    let cfg = args.config.resolve()?;
    let corpus = Corpus::read_jsonl(&args.corpus)?;
    if args.seeds == 1 {
        let run = run_pipeline(&corpus, &cfg)?;
        artifacts::save_run(&args.out, &cfg, &run)?;
        eprintln!("wrote {}", args.out.display());
        return print_json(&run.report);
    }
    let seeds: Vec<u64> = (0..args.seeds).map(|i| cfg.seed + i).collect();
    let agg = run_seeds(&corpus, &cfg, &seeds)?;
    fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    cfg.write_json(&args.out.join(artifacts::CONFIG_FILE))?;
    artifacts::write_json(&args.out.join("aggregate.json"), &agg)?;
    eprintln!("wrote {}", args.out.display());
    print_json(&agg)
}

fn cmd_sweep(args: &SweepArgs) -> Result<()> {
    let base = args.config.resolve()?;
    let corpus = Corpus::read_jsonl(&args.corpus)?;
    let mut csv = String::from("param,value,accuracy,precision,recall,macro_f1,auc\n");
    for &value in &args.values {
        let mut cfg = base.clone();
        apply_sweep_value(&mut cfg, &args.param, value)?;
        let run = run_pipeline(&corpus, &cfg)?;
        let m = MetricRow::from_metrics(&run.report.metrics);
        let line = format!(
            "{},{},{},{},{},{},{}",
            args.param, value, m.accuracy, m.precision, m.recall, m.macro_f1, m.auc
        );
        println!("{line}");
        csv.push_str(&line);
        csv.push('\n');
    }
    fs::write(&args.out, csv).with_context(|| format!("writing {}", args.out.display()))?;
    eprintln!("wrote {}", args.out.display());
    Ok(())
}

fn apply_sweep_value(cfg: &mut RunConfig, param: &str, value: f64) -> Result<()> {
    match param {
        "k_sim" | "k_att" => {
            if value.fract() != 0.0 || value < 1.0 {
                anyhow::bail!("{param} requires a positive integer, got {value}");
            }
            if param == "k_sim" {
                cfg.k_sim = value as usize;
            } else {
                cfg.k_att = value as usize;
            }
        }
        "lambda_deg" => {
            if !(value >= 0.0) {
                anyhow::bail!("lambda_deg requires a nonnegative value, got {value}");
            }
            cfg.lambda_deg = value;
        }
        other => unreachable!("clap rejects {other}"),
    }
    cfg.validate()?;
    Ok(())
}

fn cmd_explain(args: &ExplainArgs) -> Result<()> {
    let saved = artifacts::load_model(&args.model)?;
    let corpus = Corpus::read_jsonl(&args.corpus)?;
    let (corpus, _splits) = saved.prepare(corpus)?;
    let model = saved.attach(&corpus)?;
    let max_new = args.max_new.unwrap_or(saved.cfg.max_new_tokens);

    let by_id: HashMap<&str, usize> = corpus
        .graphs
        .iter()
        .enumerate()
        .map(|(i, g)| (g.respondent_id.as_str(), i))
        .collect();

    let mut lines = String::new();
    for id in &args.ids {
        let gi = *by_id
            .get(id.as_str())
            .ok_or_else(|| relmine::Error::UnknownRespondent(id.clone()))?;
        let record = explain(&saved.store, &model, &corpus, &saved.structures, gi, max_new)?;
        let line = serde_json::to_string(&record)?;
        println!("{line}");
        lines.push_str(&line);
        lines.push('\n');
    }
    if let Some(path) = &args.out {
        let mut f = fs::File::create(path)
            .with_context(|| format!("creating {}", path.display()))?;
        f.write_all(lines.as_bytes())
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}
