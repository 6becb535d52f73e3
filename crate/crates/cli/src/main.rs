use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;

use dcarec::data::{
    ingest, load_dataset, preprocess, split_sequences, write_dataset, write_records,
    DatasetManifest, IngestOptions, PreprocessConfig, DAY_SECS,
};
use dcarec::harness::{
    generate_records, render_report, run_experiment, sweep, ExperimentConfig, SyntheticSpec,
};
use dcarec::metrics::{evaluate, ModelRanker, RunMetadata};
use dcarec::model::{forward_scores, load_checkpoint, save_checkpoint};
use dcarec::objective::{train_with, CombinedLoss, Selection};
use dcarec::rerank::{rerank_file, write_scores_file, ScoreRow};
use dcarec::{AttentionMode, LossConfig, MmrConfig, ModelConfig, Session, SplitDataset};

#[derive(Parser)]
#[command(name = "dcarec", version, about = "Diversified session-based recommendation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ingest an interaction log and write a filtered, split dataset.
    Prepare(PrepareArgs),
    /// Generate a synthetic category-clustered dataset.
    Synth(SynthArgs),
    /// Train one model on a prepared dataset.
    Train(TrainArgs),
    /// Score a checkpoint on a dataset partition.
    Evaluate(EvaluateArgs),
    /// Re-rank a scores file with MMR.
    Rerank(RerankArgs),
    /// Run an ablation over the configured variants.
    Run(ExperimentArgs),
    /// Train one model per λ and summarize the trend.
    Sweep(ExperimentArgs),
    /// Render the comparison table for a results directory.
    Report(ReportArgs),
}

#[derive(Args)]
struct PrepareArgs {
    /// Interaction log with header session_id,item_id,category_id,timestamp.
    #[arg(long)]
    input: PathBuf,
    /// Output dataset directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 5)]
    min_support: usize,
    /// Width of the test and validation windows in days.
    #[arg(long, default_value_t = 7)]
    window_days: i64,
    /// Fail on the first malformed row instead of skipping it.
    #[arg(long)]
    strict: bool,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 200)]
    items: usize,
    #[arg(long, default_value_t = 10)]
    categories: usize,
    #[arg(long, default_value_t = 2000)]
    sessions: usize,
    #[arg(long, default_value_t = 3)]
    min_len: usize,
    #[arg(long, default_value_t = 10)]
    max_len: usize,
    #[arg(long, default_value_t = 0.9)]
    p_stay: f64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 56)]
    span_days: i64,
}

#[derive(Args)]
struct TrainArgs {
    /// Prepared dataset directory.
    #[arg(long)]
    data: PathBuf,
    /// Run directory for checkpoint.json and train_log.jsonl.
    #[arg(long)]
    out: PathBuf,
    /// Diversity-loss weight.
    #[arg(long, default_value_t = 0.0)]
    lambda: f64,
    /// standard or category-aware.
    #[arg(long, default_value = "standard")]
    attention: AttentionMode,
    #[arg(long, default_value_t = 32)]
    embedding_dim: usize,
    #[arg(long, default_value_t = 32)]
    hidden_dim: usize,
    #[arg(long, default_value_t = 10)]
    epochs: usize,
    #[arg(long, default_value_t = 0.005)]
    learning_rate: f64,
    #[arg(long, default_value_t = 64)]
    batch_size: usize,
    #[arg(long, default_value_t = 1e-12)]
    epsilon: f64,
    /// validation_f1, validation_hit_rate or last_epoch.
    #[arg(long, default_value = "validation_f1", value_parser = parse_selection)]
    selection: Selection,
    #[arg(long, env = "SEED", default_value_t = 11)]
    seed: u64,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Directory for report.json and report.txt.
    #[arg(long)]
    out: PathBuf,
    /// test or validation.
    #[arg(long, default_value = "test")]
    partition: String,
    #[arg(long, value_delimiter = ',', default_value = "5,10,20")]
    cutoffs: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "0.5")]
    betas: Vec<f64>,
    /// Re-rank every list with MMR at this trade-off.
    #[arg(long)]
    mmr_lambda: Option<f64>,
    #[arg(long, default_value_t = 100)]
    mmr_pool: usize,
    /// Also write the raw score of every item for every prefix here.
    #[arg(long)]
    scores_out: Option<PathBuf>,
    /// Label stored in the report.
    #[arg(long)]
    name: Option<String>,
}

#[derive(Args)]
struct RerankArgs {
    /// Scores file as written by `evaluate --scores-out`.
    #[arg(long)]
    scores: PathBuf,
    /// Dataset whose catalogue the scores refer to.
    #[arg(long)]
    data: PathBuf,
    /// Output rec-list file.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    lambda: f64,
    #[arg(long, default_value_t = 100)]
    pool: usize,
    #[arg(short = 'n', long, default_value_t = 10)]
    length: usize,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Experiment config file; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Results directory.
    #[arg(long)]
    out: PathBuf,
    /// Override a config key, e.g. `--set loss.epochs=3`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct ReportArgs {
    /// Results directory.
    dir: PathBuf,
}

fn parse_selection(s: &str) -> Result<Selection, String> {
    match s {
        "validation_f1" => Ok(Selection::ValidationF1),
        "validation_hit_rate" => Ok(Selection::ValidationHitRate),
        "last_epoch" => Ok(Selection::LastEpoch),
        other => Err(format!(
            "unknown selection {other:?} (validation_f1, validation_hit_rate, last_epoch)"
        )),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Prepare(a) => prepare(a),
        Command::Synth(a) => synth(a),
        Command::Train(a) => train(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Rerank(a) => rerank(a),
        Command::Run(a) => {
            let cfg = load_config(&a)?;
            let out = run_experiment(&cfg, &a.out)?;
            let failed: Vec<_> = out
                .arms
                .iter()
                .filter(|(_, r)| !r.summary.ok)
                .map(|(v, r)| format!("{v}: {}", r.summary.error.as_deref().unwrap_or("?")))
                .collect();
            print_comparison(&a.out)?;
            if !failed.is_empty() {
                bail!("{} variant(s) failed: {}", failed.len(), failed.join("; "));
            }
            Ok(())
        }
        Command::Sweep(a) => {
            let cfg = load_config(&a)?;
            let out = sweep(&cfg, &a.out)?;
            print_comparison(&a.out)?;
            match out.summary.spearman_lambda_ild {
                Some(r) => println!(
                    "Spearman(λ, ILD@{}) = {r:.4}",
                    out.summary.trend_cutoff
                ),
                None => println!("Spearman(λ, ILD@{}) undefined", out.summary.trend_cutoff),
            }
            let failed = out.summary.points.iter().filter(|p| !p.ok).count();
            if failed > 0 {
                bail!("{failed} sweep point(s) failed; see sweep.json");
            }
            Ok(())
        }
        Command::Report(a) => {
            print!("{}", render_report(&a.dir)?);
            Ok(())
        }
    }
}

fn load_config(a: &ExperimentArgs) -> Result<ExperimentConfig> {
    let cfg = ExperimentConfig::load_with_overrides(a.config.as_deref(), &a.overrides)?;
    cfg.validate()?;
    Ok(cfg)
}

fn print_comparison(dir: &Path) -> Result<()> {
    let path = dir.join("comparison.txt");
    if path.is_file() {
        print!("{}", fs::read_to_string(&path)?);
    }
    Ok(())
}

fn prepare(a: PrepareArgs) -> Result<()> {
    let ingested = ingest(
        &a.input,
        IngestOptions {
            strict: a.strict,
            ..IngestOptions::default()
        },
    )?;
    if ingested.skipped > 0 {
        log::warn!("skipped {} malformed row(s)", ingested.skipped);
    }
    let cfg = PreprocessConfig {
        min_item_support: a.min_support,
        split_boundary_secs: a.window_days * DAY_SECS,
    };
    let ds = preprocess(&ingested.records, cfg)?;
    let manifest = DatasetManifest::describe(
        &ds,
        a.input.display().to_string(),
        cfg,
        ingested.records.len(),
        ingested.skipped,
    );
    write_dataset(&a.out, &ds, &manifest)?;
    print_counts(&manifest);
    Ok(())
}

fn print_counts(m: &DatasetManifest) {
    println!(
        "{} items, {} categories; sessions train/validation/test = {}/{}/{}; instances = {}/{}/{}",
        m.item_count,
        m.category_count,
        m.train.sessions,
        m.validation.sessions,
        m.test.sessions,
        m.train.instances,
        m.validation.instances,
        m.test.instances
    );
}

fn synth(a: SynthArgs) -> Result<()> {
    let spec = SyntheticSpec {
        item_count: a.items,
        category_count: a.categories,
        session_count: a.sessions,
        min_len: a.min_len,
        max_len: a.max_len,
        p_stay: a.p_stay,
        seed: a.seed,
        span_days: a.span_days,
    };
    let records = generate_records(&spec)?;
    let cfg = PreprocessConfig::default();
    let ds = preprocess(&records, cfg)?;
    let mut manifest = DatasetManifest::describe(&ds, "synthetic", cfg, records.len(), 0);
    manifest.generator = Some(serde_json::to_value(&spec)?);
    write_dataset(&a.out, &ds, &manifest)?;
    write_records(&a.out.join("raw_log.tsv"), &records)?;
    print_counts(&manifest);
    Ok(())
}

fn train(a: TrainArgs) -> Result<()> {
    let (ds, _) = load_dataset(&a.data)?;
    let model = ModelConfig {
        embedding_dim: a.embedding_dim,
        hidden_dim: a.hidden_dim,
        attention_mode: a.attention,
        vocab_size: ds.catalog.item_count(),
        category_count: ds.catalog.category_count(),
        seed: a.seed,
    };
    let loss = LossConfig {
        lambda: a.lambda,
        epsilon: a.epsilon,
        learning_rate: a.learning_rate,
        batch_size: a.batch_size,
        epochs: a.epochs,
        selection: a.selection,
    };
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let log_path = a.out.join("train_log.jsonl");
    let mut sink = BufWriter::new(
        File::create(&log_path).with_context(|| format!("creating {}", log_path.display()))?,
    );
    let outcome = train_with(&ds, &model, &loss, &CombinedLoss::from(&loss), Some(&mut sink))?;
    save_checkpoint(&a.out.join("checkpoint.json"), &model, &outcome.params)?;
    let last = outcome.log.last().expect("log has the epoch-0 record");
    info!(
        "selected epoch {} of {}; final train loss {:.4}",
        outcome.best_epoch, a.epochs, last.train_loss
    );
    println!("{}", a.out.join("checkpoint.json").display());
    Ok(())
}

fn partition<'a>(ds: &'a SplitDataset, name: &str) -> Result<&'a [Session]> {
    Ok(match name {
        "test" => &ds.test,
        "validation" => &ds.validation,
        "train" => &ds.train,
        other => bail!("unknown partition {other:?} (test, validation, train)"),
    })
}

fn evaluate_cmd(a: EvaluateArgs) -> Result<()> {
    let (ds, _) = load_dataset(&a.data)?;
    let (model, params) = load_checkpoint(&a.checkpoint)?;
    if model.vocab_size != ds.catalog.item_count() || model.category_count != ds.catalog.category_count() {
        bail!(
            "checkpoint expects {} items / {} categories but the dataset has {} / {}",
            model.vocab_size,
            model.category_count,
            ds.catalog.item_count(),
            ds.catalog.category_count()
        );
    }
    let sessions = partition(&ds, &a.partition)?;
    let instances = split_sequences(sessions);

    let ranker = ModelRanker::new(&params, &model);
    let (ranker, lambda_note) = match a.mmr_lambda {
        Some(l) => {
            let mmr = MmrConfig {
                lambda: l,
                pool_size: a.mmr_pool.min(ds.catalog.item_count()),
                output_len: 1,
            };
            mmr.validate()?;
            (ranker.with_mmr(&ds.catalog, mmr), format!(" +MMR({l})"))
        }
        None => (ranker, String::new()),
    };
    let metadata = RunMetadata {
        model_id: a.name.clone().unwrap_or_else(|| {
            format!(
                "{}{}",
                a.checkpoint.file_stem().unwrap_or_default().to_string_lossy(),
                lambda_note
            )
        }),
        lambda: 0.0,
        seed: model.seed,
        attention: model.attention_mode.to_string(),
    };
    let report = evaluate(&ranker, &instances, &ds.catalog, &a.cutoffs, &a.betas, metadata)?;
    report.write(&a.out)?;
    print!("{}", report.to_table());

    if let Some(path) = &a.scores_out {
        let mut rows = Vec::with_capacity(instances.len());
        for s in sessions {
            for k in 1..s.len() {
                rows.push(ScoreRow {
                    query_id: format!("{}#{k}", s.id),
                    scores: forward_scores(&s.items[..k], &s.categories[..k], &params, &model, false)?,
                });
            }
        }
        write_scores_file(path, &ds.catalog, &rows)?;
        info!("wrote {} score rows to {}", rows.len(), path.display());
    }
    Ok(())
}

fn rerank(a: RerankArgs) -> Result<()> {
    let (ds, _) = load_dataset(&a.data)?;
    let cfg = MmrConfig {
        lambda: a.lambda,
        pool_size: a.pool,
        output_len: a.length,
    };
    let n = rerank_file(&a.scores, &ds.catalog, &cfg, &a.out)?;
    println!("re-ranked {n} rows into {}", a.out.display());
    Ok(())
}
