//! P1 Poisson solver, residual error indicator and red-green-blue refinement:
//! the algorithmic expert that produces the training meshes.

mod rgb;

use serde::{Deserialize, Serialize};

use crate::error::{AmberError, Result};
use crate::geometry::{GmmLoad, Point2, Polygon2};
use crate::mesh::{ElementField, TriMesh};
use crate::mesher::{laplacian_smooth, uniform_initial_mesh};

pub use rgb::{reference_edges, rgb_refine};

/// Marker in [`SparseSystem::dof_of`] for Dirichlet vertices.
pub const FIXED: usize = usize::MAX;

/// Symmetric sparse system in compressed rows, restricted to free vertices.
#[derive(Debug, Clone)]
pub struct SparseSystem {
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
    pub rhs: Vec<f64>,
    /// Free-dof index per mesh vertex, or [`FIXED`].
    pub dof_of: Vec<usize>,
}

impl SparseSystem {
    pub fn n(&self) -> usize {
        self.rhs.len()
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.values[k] * x[self.col_idx[k]];
            }
            *yi = s;
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let row = &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]];
        match row.binary_search(&j) {
            Ok(k) => self.values[self.row_ptr[i] + k],
            Err(_) => 0.0,
        }
    }

    fn diagonal(&self) -> Vec<f64> {
        (0..self.n()).map(|i| self.get(i, i)).collect()
    }
}

/// Gradients of the three P1 hat functions of a triangle, and its area.
pub fn hat_gradients(p: [Point2; 3]) -> ([Point2; 3], f64) {
    let area = 0.5 * (p[1] - p[0]).cross(p[2] - p[0]);
    let s = 1.0 / (2.0 * area);
    let g = |b: Point2, c: Point2| Point2::new((b.y - c.y) * s, (c.x - b.x) * s);
    ([g(p[1], p[2]), g(p[2], p[0]), g(p[0], p[1])], area)
}

/// Element stiffness matrix `A · ∇φ_i · ∇φ_j`.
pub fn element_stiffness(p: [Point2; 3]) -> [[f64; 3]; 3] {
    let (g, area) = hat_gradients(p);
    let mut k = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            k[i][j] = area * g[i].dot(g[j]);
        }
    }
    k
}

fn compress(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> (Vec<usize>, Vec<usize>, Vec<f64>) {
    triplets.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
    let mut row_ptr = vec![0; n + 1];
    let mut col_idx = Vec::with_capacity(triplets.len());
    let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
    let mut last = None;
    for (i, j, v) in triplets {
        if last == Some((i, j)) {
            *values.last_mut().unwrap() += v;
        } else {
            col_idx.push(j);
            values.push(v);
            row_ptr[i + 1] += 1;
            last = Some((i, j));
        }
    }
    for i in 0..n {
        row_ptr[i + 1] += row_ptr[i];
    }
    (row_ptr, col_idx, values)
}

/// Full stiffness matrix over all vertices, before boundary elimination.
pub fn full_stiffness(mesh: &TriMesh) -> SparseSystem {
    let n = mesh.n_vertices();
    let mut triplets = Vec::with_capacity(9 * mesh.n_triangles());
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let k = element_stiffness(mesh.corners(t));
        for a in 0..3 {
            for b in 0..3 {
                triplets.push((tri[a], tri[b], k[a][b]));
            }
        }
    }
    let (row_ptr, col_idx, values) = compress(n, triplets);
    SparseSystem { row_ptr, col_idx, values, rhs: vec![0.0; n], dof_of: (0..n).collect() }
}

/// Assembles `-Δu = f` with zero Dirichlet data, centroid quadrature for `f`.
pub fn assemble_poisson_with(mesh: &TriMesh, f: impl Fn(Point2) -> f64) -> Result<SparseSystem> {
    let mut dof_of = vec![FIXED; mesh.n_vertices()];
    let mut n = 0;
    for (v, slot) in dof_of.iter_mut().enumerate() {
        if !mesh.is_boundary_vertex(v) {
            *slot = n;
            n += 1;
        }
    }
    if n == 0 {
        return Err(AmberError::InvalidInput("mesh has no interior vertices".into()));
    }
    let mut rhs = vec![0.0; n];
    let mut triplets = Vec::with_capacity(9 * mesh.n_triangles());
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let p = mesh.corners(t);
        let k = element_stiffness(p);
        let fc = f(mesh.element_midpoint(t)) * mesh.element_volume(t) / 3.0;
        for a in 0..3 {
            let ia = dof_of[tri[a]];
            if ia == FIXED {
                continue;
            }
            rhs[ia] += fc;
            for b in 0..3 {
                let ib = dof_of[tri[b]];
                if ib != FIXED {
                    triplets.push((ia, ib, k[a][b]));
                }
            }
        }
    }
    let (row_ptr, col_idx, values) = compress(n, triplets);
    Ok(SparseSystem { row_ptr, col_idx, values, rhs, dof_of })
}

pub fn assemble_poisson(mesh: &TriMesh, load: &GmmLoad) -> Result<SparseSystem> {
    assemble_poisson_with(mesh, |p| load.eval(p))
}

pub const DEFAULT_CG_TOL: f64 = 1e-10;

/// Jacobi-preconditioned conjugate gradients. Returns the nodal solution with
/// zeros on Dirichlet vertices.
pub fn solve_cg(sys: &SparseSystem, tol: f64) -> Result<Vec<f64>> {
    let n = sys.n();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mut x = vec![0.0; n];
    let b_norm = dot(&sys.rhs, &sys.rhs).sqrt();
    let scatter = |x: &[f64]| {
        sys.dof_of.iter().map(|&d| if d == FIXED { 0.0 } else { x[d] }).collect::<Vec<f64>>()
    };
    if b_norm == 0.0 {
        return Ok(scatter(&x));
    }
    let inv_diag: Vec<f64> = sys.diagonal().iter().map(|d| 1.0 / d).collect();
    let mut r = sys.rhs.clone();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let cap = 10 * n.max(1);
    for _ in 0..cap {
        sys.matvec(&p, &mut ap);
        let alpha = rz / dot(&p, &ap);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        if dot(&r, &r).sqrt() <= tol * b_norm {
            return Ok(scatter(&x));
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(AmberError::NoConvergence { iterations: cap, residual: dot(&r, &r).sqrt() / b_norm })
}

/// Assemble and solve the Poisson problem for `load` on `mesh`. A mesh
/// without interior vertices has only the zero discrete solution.
pub fn solve_poisson(mesh: &TriMesh, load: &GmmLoad) -> Result<Vec<f64>> {
    if (0..mesh.n_vertices()).all(|v| mesh.is_boundary_vertex(v)) {
        return Ok(vec![0.0; mesh.n_vertices()]);
    }
    solve_cg(&assemble_poisson(mesh, load)?, DEFAULT_CG_TOL)
}

fn element_gradient(mesh: &TriMesh, t: usize, u: &[f64]) -> Point2 {
    let (g, _) = hat_gradients(mesh.corners(t));
    let tri = mesh.triangles()[t];
    g[0] * u[tri[0]] + g[1] * u[tri[1]] + g[2] * u[tri[2]]
}

/// Residual indicator `h²‖f‖² + h Σ_e |e| [[∇u·n]]²` with `h` the longest
/// edge; each interior edge jump counts fully for both elements.
pub fn error_estimate_with(mesh: &TriMesh, u: &[f64], f: impl Fn(Point2) -> f64) -> Result<ElementField> {
    if u.len() != mesh.n_vertices() {
        return Err(AmberError::Shape(format!(
            "solution has {} values for {} vertices",
            u.len(),
            mesh.n_vertices()
        )));
    }
    let grads: Vec<Point2> = (0..mesh.n_triangles()).map(|t| element_gradient(mesh, t, u)).collect();
    let mut jump = vec![0.0; mesh.n_triangles()];
    for (t, nb) in mesh.neighbors().iter().enumerate() {
        let tri = mesh.triangles()[t];
        for k in 0..3 {
            if let Some(s) = nb[k] {
                let a = mesh.vertices()[tri[(k + 1) % 3]];
                let b = mesh.vertices()[tri[(k + 2) % 3]];
                let e = b - a;
                let len = e.norm();
                let normal = Point2::new(e.y / len, -e.x / len);
                let j = (grads[t] - grads[s]).dot(normal);
                jump[t] += len * j * j;
            }
        }
    }
    let values = (0..mesh.n_triangles())
        .map(|t| {
            let h = mesh.longest_edge(t);
            let fc = f(mesh.element_midpoint(t));
            h * h * fc * fc * mesh.element_volume(t) + h * jump[t]
        })
        .collect();
    ElementField::new(mesh, values)
}

pub fn error_estimate(mesh: &TriMesh, u: &[f64], load: &GmmLoad) -> Result<ElementField> {
    error_estimate_with(mesh, u, |p| load.eval(p))
}

/// Elements with error strictly above `theta` times the maximum, plus the
/// (lowest-index) argmax.
pub fn mark(err: &ElementField, theta: f64) -> Vec<usize> {
    let Some(arg) = (0..err.len()).reduce(|i, j| if err.values[j] > err.values[i] { j } else { i }) else {
        return Vec::new();
    };
    let bound = theta * err.values[arg];
    (0..err.len()).filter(|&i| i == arg || err.values[i] > bound).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExpertConfig {
    pub n_refinements: usize,
    pub theta: f64,
    pub smoothing_iters: usize,
    /// Size of the uniform mesh the heuristic starts from.
    pub initial_size: f64,
}

impl Default for ExpertConfig {
    fn default() -> Self {
        ExpertConfig { n_refinements: 25, theta: 0.5, smoothing_iters: 2, initial_size: 0.1 }
    }
}

impl ExpertConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return Err(AmberError::InvalidInput(format!("theta must lie in (0, 1), got {}", self.theta)));
        }
        if !(self.initial_size > 0.0) {
            return Err(AmberError::InvalidInput("initial_size must be positive".into()));
        }
        Ok(())
    }
}

/// Solve, estimate, mark, refine and smooth, `n_refinements` times.
pub fn expert_heuristic(domain: &Polygon2, load: &GmmLoad, cfg: &ExpertConfig) -> Result<TriMesh> {
    cfg.validate()?;
    let mut mesh = uniform_initial_mesh(domain, cfg.initial_size)?;
    for _ in 0..cfg.n_refinements {
        let u = solve_poisson(&mesh, load)?;
        let err = error_estimate(&mesh, &u, load)?;
        let marked = mark(&err, cfg.theta);
        mesh = laplacian_smooth(&rgb_refine(&mesh, &marked)?, cfg.smoothing_iters);
    }
    Ok(mesh)
}
