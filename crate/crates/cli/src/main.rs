use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use idiomspan::analysis::{emit_plot, extract_embeddings, project, EmbeddingDump, ProjectionMethod, ProjectionParams};
use idiomspan::corpus::{generate_synthetic_corpus, read_corpus, write_corpus, LabeledSentence, SynthesisConfig};
use idiomspan::encoder::TaggerModel;
use idiomspan::harness::{
    ablate_lambda, cross_evaluate, default_lambda_grid, emit_reports, evaluate_model, lambda_dir, load_dataset,
    train_on, ExperimentConfig, RunRecord, CHECKPOINT_FILE, RECORD_FILE,
};
use idiomspan::{Error, Result};

#[derive(Parser)]
#[command(name = "idiomspan", version, about = "Idiom span tagging with span contrastive training")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic literal/figurative corpus as train/dev/test CoNLL files.
    SynthData(SynthArgs),
    /// Train one model.
    Train(RunArgs),
    /// Train one model per λ and pick the best λ on dev.
    Ablate(AblateArgs),
    /// Evaluate saved models on every dataset.
    CrossEval(CrossEvalArgs),
    /// Score one saved model on one file.
    Evaluate(EvaluateArgs),
    /// Project CLS/word/span embeddings to 2-D and plot them.
    Visualize(VisualizeArgs),
}

#[derive(Args, Serialize)]
struct SynthArgs {
    /// Output directory for train.conll, dev.conll and test.conll.
    #[arg(long)]
    out: PathBuf,
    /// Flat key/value generator config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// `key=value` overrides applied after the config file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args, Serialize)]
struct RunArgs {
    /// Experiment config file (flat key/value).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args, Serialize)]
struct AblateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    run: RunArgs,
    /// Comma-separated λ values; defaults to 0.0, 0.1, …, 1.0.
    #[arg(long, value_delimiter = ',')]
    grid: Vec<f64>,
}

#[derive(Args, Serialize)]
struct CrossEvalArgs {
    /// `name=path` to a run directory or checkpoint file; repeatable.
    #[arg(long = "model", required = true, value_name = "NAME=PATH")]
    models: Vec<String>,
    /// `name=dir` holding train/dev/test files; repeatable.
    #[arg(long = "dataset", required = true, value_name = "NAME=DIR")]
    datasets: Vec<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct EvaluateArgs {
    /// Run directory or checkpoint file.
    #[arg(long)]
    model: PathBuf,
    /// Labeled `.conll`, `.jsonl` or `.json` file.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct VisualizeArgs {
    /// `name=path` to a run directory or checkpoint file; repeatable.
    #[arg(long = "model", required = true, value_name = "NAME=PATH")]
    models: Vec<String>,
    /// Labeled file whose sentences are embedded.
    #[arg(long)]
    data: PathBuf,
    /// cls, word or span.
    #[arg(long, default_value = "span")]
    kind: String,
    /// pca or tsne.
    #[arg(long, default_value = "pca")]
    method: String,
    #[arg(long, default_value_t = 30.0)]
    perplexity: f64,
    #[arg(long, default_value_t = 1000)]
    iterations: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for dumps, plot.png and its sidecars.
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::SynthData(a) => synth_data(&a),
        Command::Train(a) => {
            let cfg = experiment_config(&a)?;
            let data = load_dataset(&cfg.data_dir)?;
            let record = train_on(&cfg, &data)?;
            println!("{}", summary_line(&cfg.dataset, &record));
            Ok(())
        }
        Command::Ablate(a) => ablate(&a),
        Command::CrossEval(a) => cross_eval(&a),
        Command::Evaluate(a) => evaluate(&a),
        Command::Visualize(a) => visualize(&a),
    }
}

fn summary_line(name: &str, r: &RunRecord) -> String {
    format!(
        "{name} λ={:.1} best step {}: dev {} test {} (SA/F1/P/R %)",
        r.lambda_span,
        r.best_step,
        r.dev.quadruple(),
        r.test.quadruple()
    )
}

/// Saves the resolved arguments of a verb next to its outputs.
fn write_resolved<T: Serialize>(dir: &Path, verb: &str, args: &T) -> Result<()> {
    let text = toml::to_string(args).map_err(|e| Error::Config(e.to_string()))?;
    idiomspan::io::write_atomic(&dir.join(format!("{verb}.resolved.toml")), text.as_bytes())
}

fn experiment_config(a: &RunArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &a.config {
        Some(p) => ExperimentConfig::from_file(p)?,
        None => ExperimentConfig::default(),
    };
    for o in &a.overrides {
        cfg.set(o)?;
    }
    Ok(cfg)
}

fn synth_data(a: &SynthArgs) -> Result<()> {
    let (mut table, base) = match &a.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::Io {
                path: p.clone(),
                source: e,
            })?;
            let table: toml::Table = toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
            (table, p.parent().unwrap_or(Path::new(".")).to_path_buf())
        }
        None => (toml::Table::new(), PathBuf::from(".")),
    };
    for o in &a.overrides {
        let (k, v) = split_pair(o)?;
        let value = match toml::from_str::<toml::Table>(&format!("v = {v}")) {
            Ok(mut t) => t.remove("v").expect("parsed key"),
            Err(_) => toml::Value::String(v.to_string()),
        };
        table.insert(k.to_string(), value);
    }
    let flat = toml::to_string(&table).map_err(|e| Error::Config(e.to_string()))?;
    let cfg = SynthesisConfig::from_flat_str(&flat, &base)?;
    let data = generate_synthetic_corpus(&cfg)?;
    for (name, split) in [("train", &data.train), ("dev", &data.dev), ("test", &data.test)] {
        write_corpus(&a.out.join(format!("{name}.conll")), split)?;
    }
    let resolved = toml::to_string(&cfg).map_err(|e| Error::Config(e.to_string()))?;
    idiomspan::io::write_atomic(&a.out.join("synth.resolved.toml"), resolved.as_bytes())?;
    println!(
        "wrote {} train, {} dev and {} test sentences to {}",
        data.train.len(),
        data.dev.len(),
        data.test.len(),
        a.out.display()
    );
    Ok(())
}

fn ablate(a: &AblateArgs) -> Result<()> {
    let cfg = experiment_config(&a.run)?;
    let grid = if a.grid.is_empty() { default_lambda_grid() } else { a.grid.clone() };
    let data = load_dataset(&cfg.data_dir)?;
    let ab = ablate_lambda(&cfg, &data, &grid)?;
    let out = cfg.resolved_out_dir();
    let named: Vec<(String, RunRecord)> =
        ab.records.iter().map(|r| (lambda_dir(r.lambda_span), r.clone())).collect();
    for (name, r) in &named {
        println!("{}", summary_line(name, r));
    }
    emit_reports(None, &named, &out)?;
    idiomspan::io::write_atomic(&out.join("config.resolved.toml"), cfg.to_toml().as_bytes())?;
    idiomspan::io::write_json(
        &out.join("best_lambda.json"),
        &BestLambda {
            by_dev_sa: ab.best_by_sa,
            by_dev_f1: ab.best_by_f1,
        },
    )?;
    println!("best λ by dev SA: {:.1}; by dev F1: {:.1}", ab.best_by_sa, ab.best_by_f1);
    Ok(())
}

#[derive(Serialize)]
struct BestLambda {
    by_dev_sa: f64,
    by_dev_f1: f64,
}

fn split_pair(s: &str) -> Result<(&str, &str)> {
    s.split_once('=')
        .map(|(k, v)| (k.trim(), v.trim()))
        .filter(|(k, v)| !k.is_empty() && !v.is_empty())
        .ok_or_else(|| Error::Config(format!("`{s}` is not name=value")))
}

/// A run directory's checkpoint and, if recorded there, its λ.
fn load_model(path: &Path) -> Result<(TaggerModel, f64)> {
    let (file, dir) = if path.is_dir() {
        (path.join(CHECKPOINT_FILE), path.to_path_buf())
    } else {
        (path.to_path_buf(), path.parent().unwrap_or(Path::new(".")).to_path_buf())
    };
    let model = TaggerModel::load(&file)?;
    let record = dir.join(RECORD_FILE);
    let lambda = if record.exists() {
        idiomspan::io::read_json::<RunRecord>(&record)?.lambda_span
    } else {
        0.0
    };
    Ok((model, lambda))
}

fn cross_eval(a: &CrossEvalArgs) -> Result<()> {
    let mut models = Vec::new();
    for m in &a.models {
        let (name, path) = split_pair(m)?;
        models.push((name.to_string(), load_model(Path::new(path))?.0));
    }
    let mut datasets = Vec::new();
    for d in &a.datasets {
        let (name, dir) = split_pair(d)?;
        datasets.push((name.to_string(), load_dataset(Path::new(dir))?));
    }
    let matrix = cross_evaluate(&models, &datasets)?;
    let written = emit_reports(Some(&matrix), &[], &a.out)?;
    write_resolved(&a.out, "cross-eval", a)?;
    print!("{}", std::fs::read_to_string(a.out.join("cross_eval_test.txt")).map_err(|e| Error::Io {
        path: a.out.join("cross_eval_test.txt"),
        source: e,
    })?);
    log::info!("wrote {} report files to {}", written.len(), a.out.display());
    Ok(())
}

fn evaluate(a: &EvaluateArgs) -> Result<()> {
    let (model, _) = load_model(&a.model)?;
    let sentences = read_corpus(&a.data)?;
    let (report, preds) = evaluate_model(&model, &sentences)?;
    let predicted: Vec<LabeledSentence> = sentences
        .iter()
        .zip(preds)
        .map(|(s, labels)| LabeledSentence {
            labels,
            ..s.clone()
        })
        .collect();
    idiomspan::io::write_json(&a.out.join("report.json"), &report)?;
    write_corpus(&a.out.join("predictions.conll"), &predicted)?;
    write_resolved(&a.out, "evaluate", a)?;
    println!("SA/F1/P/R (%): {}", report.quadruple());
    Ok(())
}

fn visualize(a: &VisualizeArgs) -> Result<()> {
    let method: ProjectionMethod = a.method.parse()?;
    let params = ProjectionParams {
        perplexity: a.perplexity,
        iterations: a.iterations,
        seed: a.seed,
        ..ProjectionParams::default()
    };
    let sentences = read_corpus(&a.data)?;
    let mut dumps: Vec<EmbeddingDump> = Vec::new();
    for m in &a.models {
        let (name, path) = split_pair(m)?;
        let (model, lambda) = load_model(Path::new(path))?;
        let dump = extract_embeddings(&model, &sentences, &a.kind, name, lambda)?;
        dump.write(&a.out.join(format!("{name}.{}.jsonl", a.kind)))?;
        dumps.push(dump);
    }
    let projections = dumps.iter().map(|d| project(d, method, &params)).collect::<Result<Vec<_>>>()?;
    let pairs: Vec<_> = dumps.iter().zip(&projections).collect();
    let files = emit_plot(&pairs, &a.out.join("plot.png"))?;
    write_resolved(&a.out, "visualize", a)?;
    println!(
        "wrote {}, {} and {}",
        files.image.display(),
        files.data.display(),
        files.silhouette.display()
    );
    Ok(())
}
