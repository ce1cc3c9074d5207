//! `shm`: generate FRF datasets, train the CNN/LSTM/PBP models, score them
//! and export gradient saliency.

mod config;
mod error;

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};
use shm_core::dataset::{FrfDataset, Manifest, MANIFEST_FILE};
use shm_core::experiments::{
    evaluate_all, saliency, summary_table, train_model, write_summary, ModelKind, TrainedModel,
};
use shm_core::par::{self, Execution};

use config::{json_diff, Overrides, Preset, RunConfig};
use error::CliError;

#[derive(Parser, Debug)]
#[command(name = "shm", version, about = "Vibration-based damage identification for a four-element cantilever")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    preset: Option<Preset>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overwrite existing datasets or run directories.
    #[arg(long, global = true)]
    force: bool,
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// cnn, lstm or pbp.
    #[arg(long, global = true)]
    model: Option<ModelKind>,
    /// E1..E4.
    #[arg(long, global = true)]
    element: Option<String>,
    #[arg(long, global = true)]
    sample_id: Option<usize>,
    #[arg(long, global = true)]
    top_k: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the FRF dataset for the configured preset.
    Generate,
    /// Train one model kind and write its checkpoint and reports.
    Train,
    /// Score trained models on their held-out splits.
    Evaluate,
    /// Export top-k gradient saliency for one sample.
    Saliency,
    /// Print the dataset manifest.
    Inspect,
}

const WORKERS_ENV: &str = "SHM_WORKERS";

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        match v.parse::<usize>() {
            Ok(n) if n > 0 => par::init_workers(n),
            _ => {
                eprintln!("error: {WORKERS_ENV}={v:?} is not a positive integer");
                return ExitCode::from(error::Kind::Config.exit_code());
            }
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.kind.exit_code())
        }
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let flags = Overrides {
        preset: cli.preset,
        seed: cli.seed,
        out_dir: cli.out_dir.clone(),
        model: cli.model,
        element: cli.element.clone(),
        sample_id: cli.sample_id,
        top_k: cli.top_k,
    };
    let cfg = RunConfig::load(cli.config.as_deref(), &flags)?;
    match cli.command {
        Command::Generate => generate(&cfg, cli.force),
        Command::Train => train(&cfg, cli.force),
        Command::Evaluate => evaluate(&cfg),
        Command::Saliency => saliency_cmd(&cfg),
        Command::Inspect => inspect(&cfg),
    }
}

/// Appends a timestamped line to `<dir>/run.log`. Timings live only here
/// so that every other artifact is reproducible byte for byte.
fn log_line(dir: &Path, msg: &str) -> Result<(), CliError> {
    log::info!("{msg}");
    let ts = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let mut f = fs::OpenOptions::new().create(true).append(true).open(dir.join("run.log"))?;
    writeln!(f, "[{ts}] {msg}")?;
    Ok(())
}

fn generate(cfg: &RunConfig, force: bool) -> Result<(), CliError> {
    let spec = cfg.dataset_spec()?;
    let dir = cfg.dataset_dir()?;
    if dir.join(MANIFEST_FILE).exists() && !force {
        return Err(CliError::config(format!(
            "dataset already exists at {}; pass --force to overwrite",
            dir.display()
        )));
    }
    fs::create_dir_all(&dir)?;
    println!(
        "generating {} samples × {} features into {}",
        spec.num_samples(),
        spec.feature_length(),
        dir.display()
    );
    let t = Instant::now();
    let m = spec.write_to(&dir, Execution::Parallel)?;
    log_line(&dir, &format!("generate: {} samples in {:.1} s", m.n_samples, t.elapsed().as_secs_f64()))?;
    println!("{} samples × {} features", m.n_samples, m.feature_length);
    Ok(())
}

fn load_dataset(cfg: &RunConfig) -> Result<FrfDataset, CliError> {
    let dir = cfg.dataset_dir()?;
    if !dir.join(MANIFEST_FILE).exists() {
        return Err(CliError::io(format!(
            "no dataset at {}; run `shm generate` with the same configuration first",
            dir.display()
        )));
    }
    let manifest = Manifest::read(&dir)?;
    let want = serde_json::to_value(cfg.dataset_spec()?)?;
    let have = serde_json::to_value(&manifest.spec)?;
    let diff = json_diff(&have, &want);
    if !diff.is_empty() {
        return Err(CliError::config(format!(
            "dataset manifest at {} does not match the configuration (manifest -> config):\n  {}",
            dir.display(),
            diff.join("\n  ")
        )));
    }
    Ok(FrfDataset::load(&dir)?)
}

fn require_model(cfg: &RunConfig) -> Result<ModelKind, CliError> {
    cfg.model.ok_or_else(|| CliError::config("no model selected; pass --model cnn|lstm|pbp"))
}

fn train(cfg: &RunConfig, force: bool) -> Result<(), CliError> {
    let model = require_model(cfg)?;
    let element = cfg.element()?;
    let exp = cfg.experiment(model, element)?;
    let hash = cfg.run_hash(element)?;
    let dir = cfg.run_dir(model, element)?;
    if dir.join("report.json").exists() && !force {
        return Err(CliError::config(format!("run already exists at {}; pass --force to retrain", dir.display())));
    }
    let ds = load_dataset(cfg)?;
    fs::create_dir_all(&dir)?;
    let t = Instant::now();
    let (trained, report) = train_model(&ds, &exp, &hash)?;
    trained.save(&dir.join("checkpoint"))?;
    report.write(&dir)?;
    #[derive(serde::Serialize)]
    struct Echo<'a> {
        config_hash: &'a str,
        run: &'a RunConfig,
        experiment: &'a shm_core::experiments::ExperimentConfig,
    }
    fs::write(
        dir.join("config.json"),
        serde_json::to_string_pretty(&Echo { config_hash: &hash, run: cfg, experiment: &exp })? + "\n",
    )?;
    log_line(&dir, &format!("train {}: {:.1} s", model.name(), t.elapsed().as_secs_f64()))?;
    println!("{} run {} ({})", model.name(), &hash[..16], dir.display());
    for (e, r) in report.r2.per_output.iter().enumerate() {
        if let Some(r) = r {
            println!("  E{} R2 {:.4}", e + 1, r);
        }
    }
    println!("  mean R2 {:.4}", report.r2.mean);
    Ok(())
}

/// Checkpoint for `model`: the run trained with the given element filter
/// first, then the all-element run.
fn find_checkpoint(cfg: &RunConfig, model: ModelKind, element: Option<usize>) -> Result<TrainedModel, CliError> {
    let mut tried = Vec::new();
    for el in [element, None] {
        let dir = cfg.run_dir(model, el)?.join("checkpoint");
        if dir.exists() {
            return Ok(TrainedModel::load(&dir)?);
        }
        tried.push(dir.display().to_string());
        if element.is_none() {
            break;
        }
    }
    Err(CliError::io(format!(
        "no {} checkpoint (looked in {}); run `shm train --model {}` first",
        model.name(),
        tried.join(", "),
        model.name()
    )))
}

fn evaluate(cfg: &RunConfig) -> Result<(), CliError> {
    let ds = load_dataset(cfg)?;
    let kinds = match cfg.model {
        Some(m) => vec![m],
        None => vec![ModelKind::Pbp, ModelKind::Lstm, ModelKind::Cnn],
    };
    let element = cfg.element()?;
    let models = kinds.iter().map(|&k| find_checkpoint(cfg, k, element)).collect::<Result<Vec<_>, _>>()?;
    let rows = evaluate_all(&models, &ds, Execution::Parallel)?;
    let dir = cfg.out_dir().join("runs").join(&cfg.run_hash(element)?[..16]);
    write_summary(&rows, &dir)?;
    print!("{}", summary_table(&rows));
    println!("summary written to {}", dir.display());
    Ok(())
}

fn saliency_cmd(cfg: &RunConfig) -> Result<(), CliError> {
    let model = require_model(cfg)?;
    let element = cfg.element()?;
    let ds = load_dataset(cfg)?;
    let sample_id = cfg.sample_id.unwrap_or(0);
    let k = cfg.top_k.unwrap_or(shm_core::experiments::saliency::DEFAULT_TOP_K);
    let trained = find_checkpoint(cfg, model, element)?;
    let mut report = saliency(&trained, &ds, sample_id, k)?;
    if let Some(e) = element {
        report.elements.retain(|s| s.element == e);
        if report.elements.is_empty() {
            return Err(CliError::config(format!("the {} model does not predict E{}", model.name(), e + 1)));
        }
    }
    let dir = cfg.run_dir(model, element)?.join(format!("saliency-{sample_id}"));
    report.write(&dir)?;
    print!("{}", report.table_block());
    for el in &report.elements {
        let idx: Vec<String> = el.features.iter().map(|f| f.index.to_string()).collect();
        println!("E{} top {}: {}", el.element + 1, el.features.len(), idx.join(" "));
    }
    println!("saliency written to {}", dir.display());
    Ok(())
}

fn inspect(cfg: &RunConfig) -> Result<(), CliError> {
    let dir = cfg.dataset_dir()?;
    if !dir.join(MANIFEST_FILE).exists() {
        return Err(CliError::io(format!(
            "no dataset at {}; run `shm generate` with the same configuration first",
            dir.display()
        )));
    }
    let m = Manifest::read(&dir)?;
    println!("{}", serde_json::to_string_pretty(&m)?);
    Ok(())
}
