//! Training loop and iterative inference.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::buffer::{init_buffer, max_expert_sizing, min_expert_sizing, AddOutcome, BufferConfig};
use crate::dataset::Instance;
use crate::error::{AmberError, Result};
use crate::geometry::{GmmLoad, Polygon2};
use crate::graph::{normalize, poisson_graph, MeshGraph};
use crate::mesh::{ElementField, TriMesh};
use crate::mesher::{generate, uniform_initial_mesh, MesherConfig, SizingQuery};
use crate::mpn::{save_checkpoint, AdamState, Checkpoint, LossKind, Mpn, MpnConfig, NormPlacement, DEFAULT_LR};
use crate::projection::Aggregator;
use crate::rng::{fnv1a64, stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// Published scale: 128 000 steps on 400 000-node batches.
    Paper,
    /// Single-CPU scale.
    Desk,
}

impl std::str::FromStr for Preset {
    type Err = AmberError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(Preset::Paper),
            "desk" => Ok(Preset::Desk),
            other => Err(AmberError::InvalidInput(format!("unknown preset {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub training_steps: usize,
    pub loss: LossKind,
    pub aggregator: Aggregator,
    pub inference_steps: usize,
    /// Initial mesh size; the largest training expert sizing when unset.
    pub h0: Option<f64>,
    /// Prediction floor; the smallest training expert sizing when unset.
    pub s_min: Option<f64>,
    pub seed: u64,
    /// Intermediate checkpoint cadence in steps; 0 saves only the final one.
    pub checkpoint_every: usize,
    pub learning_rate: f64,
    pub network: MpnConfig,
    pub buffer: BufferConfig,
    pub mesher: MesherConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig::preset(Preset::Paper)
    }
}

impl TrainConfig {
    pub fn preset(p: Preset) -> Self {
        let paper = TrainConfig {
            training_steps: 128_000,
            loss: LossKind::Mse,
            aggregator: Aggregator::Mean,
            inference_steps: 5,
            h0: None,
            s_min: None,
            seed: 0,
            checkpoint_every: 0,
            learning_rate: DEFAULT_LR,
            network: MpnConfig::default(),
            buffer: BufferConfig::default(),
            mesher: MesherConfig::default(),
        };
        match p {
            Preset::Paper => paper,
            Preset::Desk => TrainConfig {
                training_steps: 2_000,
                learning_rate: 1e-3,
                network: MpnConfig { latent: 16, steps: 4, norm_placement: NormPlacement::Post, ..MpnConfig::default() },
                buffer: BufferConfig { node_budget: 20_000, ..BufferConfig::default() },
                ..paper
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.network.validate()?;
        self.buffer.validate()?;
        self.mesher.validate()?;
        if self.inference_steps == 0 {
            return Err(AmberError::InvalidInput("inference_steps must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(AmberError::InvalidInput("learning rate must be positive".into()));
        }
        for v in [self.h0, self.s_min].into_iter().flatten() {
            if !(v > 0.0 && v.is_finite()) {
                return Err(AmberError::InvalidInput("h0 and s_min must be positive".into()));
            }
        }
        Ok(())
    }

    /// Hex FNV-1a digest of the JSON form.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serialises");
        format!("{:016x}", fnv1a64(&json))
    }
}

/// Optional side outputs of a training run.
#[derive(Default)]
pub struct TrainIo<'a> {
    /// JSON-lines run log: one record per step and per buffer addition.
    pub log: Option<&'a mut dyn Write>,
    /// Directory for intermediate checkpoints and failure dumps.
    pub checkpoint_dir: Option<PathBuf>,
}

fn write_line(log: &mut Option<&mut dyn Write>, value: serde_json::Value) -> Result<()> {
    if let Some(w) = log {
        writeln!(w, "{value}")?;
    }
    Ok(())
}

fn all_finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

fn make_checkpoint(mpn: &Mpn, adam: &AdamState, stats: &crate::graph::FeatureStats, cfg: &TrainConfig, s_min: f64, h0: f64) -> Checkpoint {
    Checkpoint {
        mpn: mpn.clone(),
        adam: adam.clone(),
        stats: stats.clone(),
        config_digest: cfg.digest(),
        s_min,
        h0,
        training: serde_json::to_value(cfg).expect("config serialises"),
    }
}

/// Imitation training against the experts of `instances`.
pub fn train(instances: &[Instance], cfg: &TrainConfig, mut io: TrainIo<'_>) -> Result<Checkpoint> {
    cfg.validate()?;
    if instances.is_empty() {
        return Err(AmberError::InvalidInput("training needs at least one instance".into()));
    }
    let s_min = cfg.s_min.unwrap_or_else(|| min_expert_sizing(instances));
    let h0 = cfg.h0.unwrap_or_else(|| max_expert_sizing(instances));
    let mut init_rng = stream(cfg.seed, 0);
    let mut batch_rng = stream(cfg.seed, 1);
    let mut dropout_rng = stream(cfg.seed, 2);
    let mut add_rng = stream(cfg.seed, 3);

    let mut buffer = init_buffer(instances, h0, cfg.aggregator, cfg.buffer.clone(), cfg.mesher.clone())?;
    buffer.set_s_min(s_min);
    let mut mpn = Mpn::init(cfg.network.clone(), &mut init_rng)?;
    let mut adam = AdamState::for_model(&mpn, cfg.learning_rate);

    for step in 1..=cfg.training_steps {
        let picked = buffer.sample_batch(cfg.buffer.node_budget, &mut batch_rng);
        let normalized: Vec<MeshGraph> = picked
            .iter()
            .map(|&i| normalize(&buffer.entries()[i].graph, buffer.stats()))
            .collect::<Result<_>>()?;
        let batch = MeshGraph::concat(&normalized.iter().collect::<Vec<_>>())?;
        let labels: Vec<f64> = picked.iter().flat_map(|&i| buffer.entries()[i].labels.values.iter().copied()).collect();
        let cache = mpn.forward_train(&batch, &mut dropout_rng)?;
        let (loss, grad) = mpn.backward_loss(&cache, cfg.loss, &labels)?;
        if !loss.is_finite() || !all_finite(&grad) {
            let detail = format!("loss {loss}, batch of {} graphs / {} nodes", picked.len(), batch.n_nodes);
            if let Some(dir) = &io.checkpoint_dir {
                std::fs::create_dir_all(dir)?;
                let dump = serde_json::json!({
                    "step": step, "loss": loss.to_string(), "entries": picked,
                    "geometry_ids": picked.iter().map(|&i| buffer.entries()[i].geometry_id).collect::<Vec<_>>(),
                    "depths": picked.iter().map(|&i| buffer.entries()[i].depth).collect::<Vec<_>>(),
                });
                std::fs::write(dir.join("nonfinite_dump.json"), serde_json::to_string_pretty(&dump)?)?;
                save_checkpoint(&make_checkpoint(&mpn, &adam, buffer.stats(), cfg, s_min, h0), &dir.join("nonfinite.ambr"))?;
            }
            return Err(AmberError::NonFiniteLoss { step, detail });
        }
        adam.apply(&mut mpn, &grad)?;
        write_line(
            &mut io.log,
            serde_json::json!({
                "step": step, "loss": loss, "batch_graphs": picked.len(),
                "batch_nodes": batch.n_nodes, "occupancy": buffer.occupancy(),
            }),
        )?;
        if step % cfg.buffer.add_frequency == 0 {
            let outcome = buffer.add_stratified(instances, &mpn, &mut add_rng)?;
            let mut rec = serde_json::to_value(&outcome)?;
            rec["event"] = "add".into();
            rec["step"] = step.into();
            write_line(&mut io.log, rec)?;
            if let AddOutcome::Failed { .. } = outcome {
                log::warn!("buffer addition at step {step} failed: {outcome:?}");
            }
        }
        if cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0 {
            if let Some(dir) = &io.checkpoint_dir {
                std::fs::create_dir_all(dir)?;
                let ck = make_checkpoint(&mpn, &adam, buffer.stats(), cfg, s_min, h0);
                save_checkpoint(&ck, &dir.join(format!("step_{step:07}.ambr")))?;
            }
        }
    }
    Ok(make_checkpoint(&mpn, &adam, buffer.stats(), cfg, s_min, h0))
}

/// Mesh sequence `M⁰..M^T` with the sizing predicted on each `Mᵗ`, `t < T`.
#[derive(Debug, Clone)]
pub struct InferenceRun {
    pub meshes: Vec<TriMesh>,
    pub predictions: Vec<ElementField>,
    /// Set when the mesher hit its element cap before step `T`.
    pub truncated: bool,
}

/// Sizing field predicted on `mesh`, clipped below by the checkpoint floor.
pub fn predict_sizing(ck: &Checkpoint, mesh: &TriMesh, load: &GmmLoad) -> Result<ElementField> {
    let g = normalize(&poisson_graph(mesh, load)?, &ck.stats)?;
    let pred = ck.mpn.predict(&g)?;
    ElementField::new(mesh, pred.into_iter().map(|v| v.max(ck.s_min)).collect())
}

pub fn infer(ck: &Checkpoint, domain: &Polygon2, load: &GmmLoad, t_steps: usize, mesher: &MesherConfig) -> Result<InferenceRun> {
    let mut meshes = vec![uniform_initial_mesh(domain, ck.h0)?];
    let mut predictions = Vec::with_capacity(t_steps);
    let mut truncated = false;
    for _ in 0..t_steps {
        let m = meshes.last().expect("non-empty");
        let field = predict_sizing(ck, m, load)?;
        let q = SizingQuery::field(m, &field, ck.s_min)?;
        predictions.push(field);
        match generate(domain, &q, mesher) {
            Ok(next) => meshes.push(next),
            Err(AmberError::ElementCap { .. }) => {
                truncated = true;
                break;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(InferenceRun { meshes, predictions, truncated })
}

/// Recursive object merge; values of `over` win.
pub fn merge_json(base: &mut serde_json::Value, over: serde_json::Value) {
    match (base, over) {
        (serde_json::Value::Object(b), serde_json::Value::Object(o)) => {
            for (k, v) in o {
                merge_json(b.entry(k).or_insert(serde_json::Value::Null), v);
            }
        }
        (b, o) => *b = o,
    }
}

/// Reads a JSON training configuration; fields it omits, at any depth, keep
/// their values from `base`.
pub fn read_train_config(path: &Path, base: &TrainConfig) -> Result<TrainConfig> {
    let over: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    let mut merged = serde_json::to_value(base)?;
    merge_json(&mut merged, over);
    let cfg: TrainConfig = serde_json::from_value(merged)?;
    cfg.validate()?;
    Ok(cfg)
}
