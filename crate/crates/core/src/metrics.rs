//! Mesh similarity: density-aware Chamfer distance over element midpoints,
//! its normalised form, and the volume difference.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Instance;
use crate::error::{AmberError, Result};
use crate::geometry::{Point2, Polygon2};
use crate::mesh::{PointGrid, TriMesh};
use crate::mesher::{generate, MesherConfig, SizingQuery};
use crate::mpn::Checkpoint;
use crate::trainer::infer;

/// Mean over `a` of `1 − e^{−‖x − ẑ‖} / n_ẑ`, where `ẑ` is the nearest
/// point of `b` (lowest index on ties) and `n_ẑ` the number of points of `a`
/// that chose `ẑ`.
fn directed(a: &[Point2], b: &PointGrid) -> f64 {
    let targets: Vec<usize> = a.iter().map(|&p| b.nearest(p).expect("non-empty")).collect();
    let mut hits = vec![0u32; b.len()];
    for &t in &targets {
        hits[t] += 1;
    }
    let total: f64 = a
        .iter()
        .zip(&targets)
        .map(|(&p, &t)| 1.0 - (-p.dist(b.points()[t])).exp() / hits[t] as f64)
        .sum();
    total / a.len() as f64
}

/// Density-aware Chamfer distance between two point sets, in `[0, 1]`.
pub fn dcd(a: &[Point2], b: &[Point2]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(AmberError::InvalidInput("distance between empty point sets".into()));
    }
    let ga = PointGrid::build(a.to_vec());
    let gb = PointGrid::build(b.to_vec());
    Ok(0.5 * (directed(a, &gb) + directed(b, &ga)))
}

/// [`dcd`] over element midpoints.
pub fn mesh_dcd(a: &TriMesh, b: &TriMesh) -> Result<f64> {
    dcd(&a.midpoints(), &b.midpoints())
}

/// `(d(Mᵗ, M*) − d(M⁰, M*)) / (d(M̂, M*) − d(M⁰, M*))`: 0 at the initial
/// mesh, 1 at the reconstruction.
pub fn normalized_dcd(mt: &TriMesh, mstar: &TriMesh, m0: &TriMesh, mhat: &TriMesh) -> Result<f64> {
    let d0 = mesh_dcd(m0, mstar)?;
    let denom = mesh_dcd(mhat, mstar)? - d0;
    if denom.abs() <= 1e-12 {
        return Err(AmberError::InvalidInput(
            "normalisation undefined: initial mesh is as close to the expert as its reconstruction".into(),
        ));
    }
    Ok((mesh_dcd(mt, mstar)? - d0) / denom)
}

/// The expert's own sizing field fed back through the mesher.
pub fn reconstruction(expert: &TriMesh, domain: &Polygon2, cfg: &MesherConfig) -> Result<TriMesh> {
    if expert.is_empty() {
        return Err(AmberError::InvalidInput("expert mesh is empty".into()));
    }
    let field = expert.induced_sizing_field();
    let floor = field.values.iter().copied().fold(f64::INFINITY, f64::min);
    generate(domain, &SizingQuery::field(expert, &field, floor)?, cfg)
}

fn one_way_volume(a: &TriMesh, b: &TriMesh) -> f64 {
    (0..a.n_triangles())
        .map(|i| {
            let j = b.locate_or_nearest(a.element_midpoint(i)).expect("non-empty");
            (a.element_volume(i) - b.element_volume(j)).abs()
        })
        .sum()
}

/// `Σᵢ |V(Aᵢ) − V(B_j(i))| + Σᵢ |V(Bᵢ) − V(A_j(i))|`, where `j(i)` is the
/// element of the other mesh containing the midpoint of element `i`.
pub fn volume_difference(a: &TriMesh, b: &TriMesh) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(AmberError::InvalidInput("volume difference of an empty mesh".into()));
    }
    Ok(one_way_volume(a, b) + one_way_volume(b, a))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: usize,
    pub n_elements: usize,
    pub dcd: f64,
    pub vol_diff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometryReport {
    pub id: u64,
    /// One record per generation step `0..=T`. A truncated sequence repeats
    /// its last mesh for the remaining steps.
    pub steps: Vec<StepRecord>,
    pub ndcd_final: Option<f64>,
    /// Why `ndcd_final` is missing, if it is.
    pub ndcd_error: Option<String>,
    pub truncated: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub q25: f64,
    pub q75: f64,
}

impl Summary {
    /// Mean and linearly interpolated quartiles; `None` without samples.
    pub fn of(values: &[f64]) -> Option<Summary> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let q = |p: f64| {
            let x = p * (v.len() - 1) as f64;
            let lo = x.floor() as usize;
            let hi = x.ceil() as usize;
            v[lo] + (v[hi] - v[lo]) * (x - lo as f64)
        };
        Some(Summary { mean: values.iter().sum::<f64>() / values.len() as f64, q25: q(0.25), q75: q(0.75) })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    /// Per generation step.
    pub dcd: Vec<Summary>,
    pub vol_diff: Vec<Summary>,
    pub n_elements: Vec<Summary>,
    pub ndcd_final: Option<Summary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub geometries: Vec<GeometryReport>,
    pub aggregate: Aggregate,
}

impl EvalReport {
    pub fn from_geometries(geometries: Vec<GeometryReport>) -> EvalReport {
        let ok: Vec<&GeometryReport> = geometries.iter().filter(|g| g.error.is_none()).collect();
        let n_steps = ok.iter().map(|g| g.steps.len()).max().unwrap_or(0);
        let per_step = |f: &dyn Fn(&StepRecord) -> f64| -> Vec<Summary> {
            (0..n_steps)
                .filter_map(|t| {
                    let vals: Vec<f64> = ok.iter().filter_map(|g| g.steps.get(t)).map(f).collect();
                    Summary::of(&vals)
                })
                .collect()
        };
        let ndcd: Vec<f64> = ok.iter().filter_map(|g| g.ndcd_final).collect();
        let aggregate = Aggregate {
            dcd: per_step(&|s| s.dcd),
            vol_diff: per_step(&|s| s.vol_diff),
            n_elements: per_step(&|s| s.n_elements as f64),
            ndcd_final: Summary::of(&ndcd),
        };
        EvalReport { geometries, aggregate }
    }
}

fn evaluate_one(ck: &Checkpoint, inst: &Instance, t_steps: usize, cfg: &MesherConfig) -> Result<GeometryReport> {
    let run = infer(ck, &inst.domain, &inst.load, t_steps, cfg)?;
    let mut steps = Vec::with_capacity(t_steps + 1);
    for t in 0..=t_steps {
        let m = &run.meshes[t.min(run.meshes.len() - 1)];
        steps.push(StepRecord {
            t,
            n_elements: m.n_triangles(),
            dcd: mesh_dcd(m, &inst.expert)?,
            vol_diff: volume_difference(m, &inst.expert)?,
        });
    }
    let last = run.meshes.last().expect("sequence holds the initial mesh");
    let (ndcd_final, ndcd_error) = match reconstruction(&inst.expert, &inst.domain, cfg)
        .and_then(|mhat| normalized_dcd(last, &inst.expert, &run.meshes[0], &mhat))
    {
        Ok(v) => (Some(v), None),
        Err(e) => (None, Some(e.to_string())),
    };
    Ok(GeometryReport { id: inst.id, steps, ndcd_final, ndcd_error, truncated: run.truncated, error: None })
}

/// Runs inference on every instance and scores each step against the
/// expert. Per-instance failures are recorded in the report.
pub fn evaluate(ck: &Checkpoint, instances: &[Instance], t_steps: usize, cfg: &MesherConfig) -> Result<EvalReport> {
    if instances.is_empty() {
        return Err(AmberError::InvalidInput("nothing to evaluate: the split is empty".into()));
    }
    let reports = instances
        .par_iter()
        .map(|inst| {
            evaluate_one(ck, inst, t_steps, cfg).unwrap_or_else(|e| GeometryReport {
                id: inst.id,
                steps: Vec::new(),
                ndcd_final: None,
                ndcd_error: None,
                truncated: false,
                error: Some(e.to_string()),
            })
        })
        .collect();
    Ok(EvalReport::from_geometries(reports))
}

#[cfg(test)]
mod tests;
