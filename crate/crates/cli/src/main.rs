mod svg;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use amber_core::dataset::{generate_dataset, load_instances, write_dataset, DatasetConfig, Difficulty, Split, MANIFEST_FILE};
use amber_core::mesh::write_tmesh;
use amber_core::mesher::MesherConfig;
use amber_core::metrics::{evaluate, EvalReport};
use amber_core::mpn::{load_checkpoint, save_checkpoint, Checkpoint, LossKind};
use amber_core::projection::Aggregator;
use amber_core::trainer::{infer, merge_json, predict_sizing, read_train_config, train, Preset, TrainConfig, TrainIo};
use amber_core::{AmberError, GmmLoad, Polygon2};
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;

const SEED_VAR: &str = "AMBER_SEED";

#[derive(Parser)]
#[command(name = "amber", version, about = "Adaptive mesh generation by imitating an expert sizing field")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample domains and loads and build expert meshes for them.
    Generate(GenerateArgs),
    /// Train a sizing-field network on the train split of a dataset.
    Train(TrainArgs),
    /// Generate a mesh sequence for one domain and render each step.
    Infer(InferArgs),
    /// Score a checkpoint against the experts of one split.
    Evaluate(EvaluateArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Output directory; receives the manifest and all instance files.
    #[arg(long)]
    out: PathBuf,
    /// Expert refinement depth: easy, medium or hard.
    #[arg(long, default_value = "easy")]
    preset: Difficulty,
    /// JSON dataset configuration applied over the preset.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n_train: Option<usize>,
    #[arg(long)]
    n_eval: Option<usize>,
    #[arg(long)]
    n_test: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset manifest written by `generate`.
    #[arg(long)]
    manifest: PathBuf,
    /// Checkpoint file to write.
    #[arg(long)]
    out: PathBuf,
    /// Named base configuration: desk or paper.
    #[arg(long, default_value = "desk")]
    preset: Preset,
    /// JSON training configuration applied over the preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Label aggregator: mean or max.
    #[arg(long)]
    agg: Option<Aggregator>,
    /// Loss: mse or log_mse.
    #[arg(long)]
    loss: Option<LossKind>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    node_budget: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// JSON-lines run log; defaults to the checkpoint path with a `.jsonl` extension.
    #[arg(long)]
    log: Option<PathBuf>,
    /// Directory for intermediate checkpoints and failure dumps.
    #[arg(long)]
    checkpoint_dir: Option<PathBuf>,
    #[arg(long)]
    checkpoint_every: Option<usize>,
}

#[derive(Args)]
struct InferArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Domain polygon as JSON.
    #[arg(long)]
    geometry: PathBuf,
    /// Load as JSON.
    #[arg(long)]
    load: PathBuf,
    /// Generation steps; defaults to the value the checkpoint was trained with.
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value = "test")]
    split: Split,
    /// Generation steps; defaults to the value the checkpoint was trained with.
    #[arg(long)]
    steps: Option<usize>,
    /// Report file.
    #[arg(long, default_value = "eval_report.json")]
    out: PathBuf,
}

enum Failure {
    Usage(String),
    Runtime(AmberError),
}

impl From<AmberError> for Failure {
    fn from(e: AmberError) -> Self {
        Failure::Runtime(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

/// Flag, then `AMBER_SEED`, then nothing.
fn resolve_seed(flag: Option<u64>) -> Result<Option<u64>, Failure> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var(SEED_VAR) {
        Ok(v) => v.trim().parse().map(Some).map_err(|_| Failure::Usage(format!("{SEED_VAR}={v:?} is not a seed"))),
        Err(_) => Ok(None),
    }
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| AmberError::InvalidInput(format!("{}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

fn cmd_generate(a: GenerateArgs) -> Result<(), Failure> {
    let mut cfg = DatasetConfig::preset(a.preset);
    if let Some(path) = &a.config {
        let mut merged = serde_json::to_value(&cfg)?;
        merge_json(&mut merged, read_json(path)?);
        cfg = serde_json::from_value(merged)?;
    }
    if let Some(n) = a.n_train {
        cfg.n_train = n;
    }
    if let Some(n) = a.n_eval {
        cfg.n_eval = n;
    }
    if let Some(n) = a.n_test {
        cfg.n_test = n;
    }
    if let Some(seed) = resolve_seed(a.seed)? {
        cfg.seed = seed;
    }
    let (instances, failed) = generate_dataset(&cfg)?;
    for (id, reason) in &failed {
        log::warn!("instance {id} skipped: {reason}");
    }
    write_dataset(&a.out, &cfg, &instances)?;
    println!("wrote {} instances ({} skipped) to {}", instances.len(), failed.len(), a.out.join(MANIFEST_FILE).display());
    Ok(())
}

fn cmd_train(a: TrainArgs) -> Result<(), Failure> {
    let base = TrainConfig::preset(a.preset);
    let mut cfg = match &a.config {
        Some(path) => read_train_config(path, &base)?,
        None => base,
    };
    if let Some(agg) = a.agg {
        cfg.aggregator = agg;
    }
    if let Some(loss) = a.loss {
        cfg.loss = loss;
    }
    if let Some(steps) = a.steps {
        cfg.training_steps = steps;
    }
    if let Some(b) = a.node_budget {
        cfg.buffer.node_budget = b;
    }
    if let Some(every) = a.checkpoint_every {
        cfg.checkpoint_every = every;
    }
    if let Some(seed) = resolve_seed(a.seed)? {
        cfg.seed = seed;
    }
    cfg.validate()?;
    let instances = load_instances(&a.manifest, Some(Split::Train))?;
    let log_path = a.log.clone().unwrap_or_else(|| a.out.with_extension("jsonl"));
    let mut log = BufWriter::new(File::create(&log_path)?);
    log::info!(
        "training on {} instances for {} steps (digest {})",
        instances.len(),
        cfg.training_steps,
        cfg.digest()
    );
    let ck = train(&instances, &cfg, TrainIo { log: Some(&mut log), checkpoint_dir: a.checkpoint_dir.clone() })?;
    log.flush()?;
    save_checkpoint(&ck, &a.out)?;
    println!("checkpoint {} ({} parameters), log {}", a.out.display(), ck.mpn.n_params(), log_path.display());
    Ok(())
}

/// A field of the training configuration stored in a checkpoint.
fn trained_with<T: DeserializeOwned>(ck: &Checkpoint, key: &str) -> Option<T> {
    ck.training.get(key).and_then(|v| serde_json::from_value(v.clone()).ok())
}

fn run_settings(ck: &Checkpoint, steps: Option<usize>) -> (usize, MesherConfig) {
    let t = steps.or_else(|| trained_with(ck, "inference_steps")).unwrap_or(5);
    (t, trained_with(ck, "mesher").unwrap_or_default())
}

fn cmd_infer(a: InferArgs) -> Result<(), Failure> {
    let ck = load_checkpoint(&a.checkpoint)?;
    let domain: Polygon2 = read_json(&a.geometry)?;
    let load: GmmLoad = read_json(&a.load)?;
    let (t_steps, mesher) = run_settings(&ck, a.steps);
    let run = infer(&ck, &domain, &load, t_steps, &mesher)?;
    if run.truncated {
        log::warn!("element cap reached after {} of {t_steps} steps", run.meshes.len() - 1);
    }
    std::fs::create_dir_all(&a.out)?;
    for (t, mesh) in run.meshes.iter().enumerate() {
        let field = match run.predictions.get(t) {
            Some(f) => f.clone(),
            None => predict_sizing(&ck, mesh, &load)?,
        };
        std::fs::write(a.out.join(format!("mesh_{t}.tmesh")), write_tmesh(mesh, &[("predicted_sizing", &field.values)])?)?;
        let title = format!("step {t}: {} elements", mesh.n_triangles());
        std::fs::write(a.out.join(format!("mesh_{t}.svg")), svg::render(mesh, &field.values, &title))?;
        println!("t={t} elements={}", mesh.n_triangles());
    }
    Ok(())
}

fn summary_table(report: &EvalReport) -> String {
    let agg = &report.aggregate;
    let mut out = format!("{:<4} {:<24} {:<24} {:<24}\n", "t", "mean_dcd", "mean_vol_diff", "mean_n_elements");
    for (t, ((d, v), n)) in agg.dcd.iter().zip(&agg.vol_diff).zip(&agg.n_elements).enumerate() {
        out += &format!("{:<4} {:<24} {:<24} {:<24}\n", t, d.mean, v.mean, n.mean);
    }
    match &agg.ndcd_final {
        Some(s) => out += &format!("final normalized dcd: mean {} q25 {} q75 {}\n", s.mean, s.q25, s.q75),
        None => out += "final normalized dcd: unavailable\n",
    }
    let failed = report.geometries.iter().filter(|g| g.error.is_some()).count();
    if failed > 0 {
        out += &format!("{failed} of {} geometries failed\n", report.geometries.len());
    }
    out
}

fn cmd_evaluate(a: EvaluateArgs) -> Result<(), Failure> {
    let ck = load_checkpoint(&a.checkpoint)?;
    let instances = load_instances(&a.manifest, Some(a.split))?;
    let (t_steps, mesher) = run_settings(&ck, a.steps);
    let report = evaluate(&ck, &instances, t_steps, &mesher)?;
    for g in &report.geometries {
        if let Some(e) = &g.error {
            log::warn!("geometry {} failed: {e}", g.id);
        }
    }
    std::fs::write(&a.out, serde_json::to_string_pretty(&report)?)?;
    print!("{}", summary_table(&report));
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Train(a) => cmd_train(a),
        Command::Infer(a) => cmd_infer(a),
        Command::Evaluate(a) => cmd_evaluate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
