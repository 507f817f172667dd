//! Depth-stratified replay buffer of intermediate meshes.

use std::path::Path;

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Instance;
use crate::error::{AmberError, Result};
use crate::graph::{normalize, poisson_graph, FeatureStats, MeshGraph, POISSON_FEATURES};
use crate::mesh::{write_tmesh, ElementField, TriMesh};
use crate::mesher::{generate, uniform_initial_mesh, MesherConfig, SizingQuery};
use crate::mpn::Mpn;
use crate::projection::{project_expert_sizing, Aggregator};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BufferConfig {
    pub max_depth: usize,
    pub max_size: usize,
    /// Generated meshes larger than this multiple of the largest expert mesh
    /// are discarded.
    pub element_cap_ratio: f64,
    pub node_budget: usize,
    /// Training steps between buffer additions.
    pub add_frequency: usize,
}

impl Default for BufferConfig {
    fn default() -> Self {
        BufferConfig { max_depth: 5, max_size: 1000, element_cap_ratio: 1.2, node_budget: 400_000, add_frequency: 8 }
    }
}

impl BufferConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_depth == 0 || self.max_size == 0 || self.node_budget == 0 || self.add_frequency == 0 {
            return Err(AmberError::InvalidInput("buffer sizes and frequencies must be positive".into()));
        }
        if !(self.element_cap_ratio > 0.0) {
            return Err(AmberError::InvalidInput("element cap ratio must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct BufferEntry {
    pub mesh: TriMesh,
    /// Unnormalised features.
    pub graph: MeshGraph,
    pub labels: ElementField,
    pub depth: usize,
    pub use_count: u64,
    pub geometry_id: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum AddOutcome {
    Inserted { depth: usize, n_elements: usize, evicted_depth: Option<usize> },
    Rejected { depth: usize, n_elements: Option<usize> },
    Failed { depth: usize, reason: String },
}

#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    cfg: BufferConfig,
    entries: Vec<BufferEntry>,
    stats: FeatureStats,
    agg: Aggregator,
    s_min: f64,
    element_cap: usize,
    mesher: MesherConfig,
}

fn find<'a>(instances: &'a [Instance], id: u64) -> Result<&'a Instance> {
    instances
        .iter()
        .find(|i| i.id == id)
        .ok_or_else(|| AmberError::InvalidInput(format!("no training instance with id {id}")))
}

/// Smallest expert sizing value over `instances`.
pub fn min_expert_sizing(instances: &[Instance]) -> f64 {
    instances
        .iter()
        .flat_map(|i| i.expert.induced_sizing_field().values)
        .fold(f64::INFINITY, f64::min)
}

/// Largest expert sizing value over `instances`.
pub fn max_expert_sizing(instances: &[Instance]) -> f64 {
    instances
        .iter()
        .flat_map(|i| i.expert.induced_sizing_field().values)
        .fold(f64::NEG_INFINITY, f64::max)
}

fn labelled_entry(mesh: TriMesh, inst: &Instance, agg: Aggregator, depth: usize) -> Result<BufferEntry> {
    let graph = poisson_graph(&mesh, &inst.load)?.with_provenance(inst.id, depth);
    let labels = project_expert_sizing(&mesh, &inst.expert, agg)?;
    Ok(BufferEntry { mesh, graph, labels, depth, use_count: 0, geometry_id: inst.id })
}

/// One depth-0 entry per instance: a uniform mesh of size `h0`.
pub fn init_buffer(
    instances: &[Instance],
    h0: f64,
    agg: Aggregator,
    cfg: BufferConfig,
    mesher: MesherConfig,
) -> Result<ReplayBuffer> {
    cfg.validate()?;
    if instances.is_empty() {
        return Err(AmberError::InvalidInput("cannot build a replay buffer without training instances".into()));
    }
    let mut stats = FeatureStats::new(POISSON_FEATURES);
    let mut entries = Vec::with_capacity(instances.len());
    for inst in instances {
        let e = labelled_entry(uniform_initial_mesh(&inst.domain, h0)?, inst, agg, 0)?;
        stats.update(&e.graph)?;
        entries.push(e);
    }
    let largest = instances.iter().map(|i| i.expert.n_triangles()).max().unwrap_or(0);
    let element_cap = (cfg.element_cap_ratio * largest as f64).floor() as usize;
    Ok(ReplayBuffer { cfg, entries, stats, agg, s_min: min_expert_sizing(instances), element_cap, mesher })
}

impl ReplayBuffer {
    pub fn config(&self) -> &BufferConfig {
        &self.cfg
    }

    pub fn entries(&self) -> &[BufferEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn stats(&self) -> &FeatureStats {
        &self.stats
    }

    pub fn s_min(&self) -> f64 {
        self.s_min
    }

    /// Overrides the prediction floor taken from the expert meshes.
    pub fn set_s_min(&mut self, s_min: f64) {
        self.s_min = s_min;
    }

    pub fn element_cap(&self) -> usize {
        self.element_cap
    }

    /// Entry count per depth `0..=max_depth`.
    pub fn occupancy(&self) -> Vec<usize> {
        let mut occ = vec![0; self.cfg.max_depth + 1];
        for e in &self.entries {
            occ[e.depth] += 1;
        }
        occ
    }

    /// Refines one stored mesh with the model and stores the result one
    /// level deeper. Mesher failures and oversized meshes leave the buffer
    /// unchanged.
    pub fn add_stratified<R: Rng + ?Sized>(&mut self, instances: &[Instance], model: &Mpn, rng: &mut R) -> Result<AddOutcome> {
        let occ = self.occupancy();
        let depths: Vec<usize> = (0..self.cfg.max_depth).filter(|&d| occ[d] > 0).collect();
        let &depth = depths.choose(rng).ok_or_else(|| AmberError::InvalidInput("replay buffer is empty".into()))?;
        let candidates: Vec<usize> = (0..self.entries.len()).filter(|&i| self.entries[i].depth == depth).collect();
        let src = &self.entries[*candidates.choose(rng).expect("stratum is non-empty")];
        let inst = find(instances, src.geometry_id)?;

        let pred = model.predict(&normalize(&src.graph, &self.stats)?)?;
        let field = ElementField::new(&src.mesh, pred.iter().map(|&v| v.max(self.s_min)).collect())?;
        let mut mesher = self.mesher.clone();
        mesher.max_elements = self.element_cap.max(1);
        let target = depth + 1;
        let mesh = match generate(&inst.domain, &SizingQuery::field(&src.mesh, &field, self.s_min)?, &mesher) {
            Ok(m) => m,
            Err(AmberError::ElementCap { .. }) => return Ok(AddOutcome::Rejected { depth: target, n_elements: None }),
            Err(e) => return Ok(AddOutcome::Failed { depth: target, reason: e.to_string() }),
        };
        let n = mesh.n_triangles();
        if n > self.element_cap {
            return Ok(AddOutcome::Rejected { depth: target, n_elements: Some(n) });
        }
        let entry = match labelled_entry(mesh, inst, self.agg, target) {
            Ok(e) => e,
            Err(e) => return Ok(AddOutcome::Failed { depth: target, reason: e.to_string() }),
        };
        self.stats.update(&entry.graph)?;
        self.entries.push(entry);
        let evicted_depth = (self.entries.len() > self.cfg.max_size).then(|| self.evict());
        Ok(AddOutcome::Inserted { depth: target, n_elements: n, evicted_depth })
    }

    /// Drops the most used entry of the largest stratum (deepest stratum and
    /// oldest entry on ties). Returns the evicted depth.
    fn evict(&mut self) -> usize {
        let occ = self.occupancy();
        let depth = (0..occ.len()).rev().max_by_key(|&d| occ[d]).expect("non-empty");
        let victim = (0..self.entries.len())
            .filter(|&i| self.entries[i].depth == depth)
            .rev()
            .max_by_key(|&i| self.entries[i].use_count)
            .expect("stratum is non-empty");
        self.entries.remove(victim);
        depth
    }

    /// Least used entries first (random order among equal counts) until the
    /// next one would exceed `node_budget`; at least one entry. Increments
    /// the use count of every selected entry.
    pub fn sample_batch<R: Rng + ?Sized>(&mut self, node_budget: usize, rng: &mut R) -> Vec<usize> {
        let mut order: Vec<(u64, u64, usize)> =
            self.entries.iter().enumerate().map(|(i, e)| (e.use_count, rng.random::<u64>(), i)).collect();
        order.sort_unstable();
        let mut picked = Vec::new();
        let mut nodes = 0;
        for (_, _, i) in order {
            let n = self.entries[i].graph.n_nodes;
            if !picked.is_empty() && nodes + n > node_budget {
                break;
            }
            nodes += n;
            picked.push(i);
        }
        for &i in &picked {
            self.entries[i].use_count += 1;
        }
        picked
    }

    /// Writes every entry as `.tmesh` with its labels plus `index.json`.
    pub fn dump(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut index = Vec::new();
        for (i, e) in self.entries.iter().enumerate() {
            let name = format!("entry_{i:05}.tmesh");
            std::fs::write(dir.join(&name), write_tmesh(&e.mesh, &[("labels", &e.labels.values)])?)?;
            index.push(serde_json::json!({
                "file": name, "depth": e.depth, "geometry_id": e.geometry_id, "use_count": e.use_count,
            }));
        }
        std::fs::write(dir.join("index.json"), serde_json::to_string_pretty(&index)?)?;
        Ok(())
    }

    #[cfg(test)]
    pub(crate) fn entries_mut(&mut self) -> &mut Vec<BufferEntry> {
        &mut self.entries
    }
}

#[cfg(test)]
pub(crate) mod tests;
