//! Poisson problem instances with expert meshes, and their on-disk manifest.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{AmberError, Result};
use crate::fem::{expert_heuristic, ExpertConfig};
use crate::geometry::{sample_gmm_load, sample_lshape, GmmLoad, Polygon2};
use crate::mesh::{read_tmesh, write_tmesh, TriMesh};
use crate::rng::stream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Eval,
    Test,
}

impl std::str::FromStr for Split {
    type Err = AmberError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "eval" => Ok(Split::Eval),
            "test" => Ok(Split::Test),
            other => Err(AmberError::InvalidInput(format!("unknown split {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Difficulty {
    Easy,
    Medium,
    Hard,
}

impl Difficulty {
    pub fn n_refinements(self) -> usize {
        match self {
            Difficulty::Easy => 25,
            Difficulty::Medium => 50,
            Difficulty::Hard => 75,
        }
    }
}

impl std::str::FromStr for Difficulty {
    type Err = AmberError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "easy" => Ok(Difficulty::Easy),
            "medium" => Ok(Difficulty::Medium),
            "hard" => Ok(Difficulty::Hard),
            other => Err(AmberError::InvalidInput(format!("unknown preset {other:?}"))),
        }
    }
}

/// One L-shaped domain, its load and the expert mesh for it.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub id: u64,
    pub split: Split,
    pub domain: Polygon2,
    pub load: GmmLoad,
    pub expert: TriMesh,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    pub n_train: usize,
    pub n_eval: usize,
    pub n_test: usize,
    pub seed: u64,
    pub expert: ExpertConfig,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig { n_train: 20, n_eval: 0, n_test: 100, seed: 0, expert: ExpertConfig::default() }
    }
}

impl DatasetConfig {
    pub fn preset(difficulty: Difficulty) -> Self {
        let mut cfg = DatasetConfig::default();
        cfg.expert.n_refinements = difficulty.n_refinements();
        cfg
    }

    fn split_of(&self, i: usize) -> Split {
        if i < self.n_train {
            Split::Train
        } else if i < self.n_train + self.n_eval {
            Split::Eval
        } else {
            Split::Test
        }
    }
}

/// Samples instance `id`: domain and load come from stream `id` of the seed,
/// so each instance is reproducible on its own.
pub fn sample_instance(cfg: &DatasetConfig, id: u64) -> Result<Instance> {
    let mut rng = stream(cfg.seed, id);
    let domain = sample_lshape(&mut rng);
    let load = sample_gmm_load(&mut rng, &domain)?;
    let expert = expert_heuristic(&domain, &load, &cfg.expert)?;
    Ok(Instance { id, split: cfg.split_of(id as usize), domain, load, expert })
}

/// All instances in id order, plus the ids that failed with their errors.
pub fn generate_dataset(cfg: &DatasetConfig) -> Result<(Vec<Instance>, Vec<(u64, String)>)> {
    cfg.expert.validate()?;
    let total = (cfg.n_train + cfg.n_eval + cfg.n_test) as u64;
    let results: Vec<(u64, Result<Instance>)> =
        (0..total).into_par_iter().map(|id| (id, sample_instance(cfg, id))).collect();
    let mut ok = Vec::new();
    let mut failed = Vec::new();
    for (id, r) in results {
        match r {
            Ok(inst) => ok.push(inst),
            Err(e) => failed.push((id, e.to_string())),
        }
    }
    Ok((ok, failed))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: u64,
    pub split: Split,
    /// Paths relative to the manifest's directory.
    pub geometry: PathBuf,
    pub load: PathBuf,
    pub expert: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub root: PathBuf,
    pub seed: u64,
    pub config: DatasetConfig,
    pub instances: Vec<ManifestEntry>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

/// Writes geometry and load JSON, expert `.tmesh` files and `manifest.json`
/// into `dir`.
pub fn write_dataset(dir: &Path, cfg: &DatasetConfig, instances: &[Instance]) -> Result<Manifest> {
    std::fs::create_dir_all(dir)?;
    let mut entries = Vec::with_capacity(instances.len());
    for inst in instances {
        let e = ManifestEntry {
            id: inst.id,
            split: inst.split,
            geometry: format!("geometry_{:04}.json", inst.id).into(),
            load: format!("load_{:04}.json", inst.id).into(),
            expert: format!("expert_{:04}.tmesh", inst.id).into(),
        };
        std::fs::write(dir.join(&e.geometry), serde_json::to_string_pretty(&inst.domain)?)?;
        std::fs::write(dir.join(&e.load), serde_json::to_string_pretty(&inst.load)?)?;
        let sizing = inst.expert.induced_sizing_field().values;
        std::fs::write(dir.join(&e.expert), write_tmesh(&inst.expert, &[("sizing", &sizing)])?)?;
        entries.push(e);
    }
    let manifest = Manifest { root: dir.to_path_buf(), seed: cfg.seed, config: cfg.clone(), instances: entries };
    std::fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let text = std::fs::read_to_string(path)?;
    let m: Manifest = serde_json::from_str(&text)?;
    let mut seen = std::collections::HashSet::new();
    if !m.instances.iter().all(|e| seen.insert(e.id)) {
        return Err(AmberError::InvalidInput(format!("{}: duplicate instance ids", path.display())));
    }
    Ok(m)
}

/// Loads every instance of `split` (all of them for `None`), resolving
/// paths against the manifest's directory.
pub fn load_instances(manifest_path: &Path, split: Option<Split>) -> Result<Vec<Instance>> {
    let m = read_manifest(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let mut out = Vec::new();
    for e in m.instances.iter().filter(|e| split.is_none_or(|s| e.split == s)) {
        let read = |p: &Path| {
            let full = base.join(p);
            if !full.exists() {
                return Err(AmberError::InvalidInput(format!("missing dataset file {}", full.display())));
            }
            Ok(full)
        };
        let domain: Polygon2 = serde_json::from_str(&std::fs::read_to_string(read(&e.geometry)?)?)?;
        let load: GmmLoad = serde_json::from_str(&std::fs::read_to_string(read(&e.load)?)?)?;
        let expert = read_tmesh(read(&e.expert)?)?.mesh;
        out.push(Instance { id: e.id, split: e.split, domain, load, expert });
    }
    Ok(out)
}
