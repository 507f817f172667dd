//! Element-adjacency graphs with per-node task features, and the streaming
//! statistics used to normalise them.

use serde::{Deserialize, Serialize};

use crate::error::{AmberError, Result};
use crate::geometry::GmmLoad;
use crate::mesh::TriMesh;

/// Node feature width without task information: `[volume]`.
pub const GEOMETRY_FEATURES: usize = 1;
/// Node feature width for the Poisson task:
/// `[volume, load at midpoint, solution mean, solution std]`.
pub const POISSON_FEATURES: usize = 4;
pub const EDGE_FEATURES: usize = 1;

const NORM_EPS: f64 = 1e-8;

/// Directed graph over mesh elements; every adjacency appears in both
/// directions. Feature matrices are row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MeshGraph {
    pub n_nodes: usize,
    pub senders: Vec<usize>,
    pub receivers: Vec<usize>,
    pub node_width: usize,
    pub node_features: Vec<f64>,
    pub edge_features: Vec<f64>,
    pub geometry_id: u64,
    pub depth: usize,
}

impl MeshGraph {
    pub fn n_edges(&self) -> usize {
        self.senders.len()
    }

    pub fn node(&self, i: usize) -> &[f64] {
        &self.node_features[i * self.node_width..(i + 1) * self.node_width]
    }

    pub fn with_provenance(mut self, geometry_id: u64, depth: usize) -> Self {
        self.geometry_id = geometry_id;
        self.depth = depth;
        self
    }

    /// Disjoint union; node indices of later graphs are offset.
    pub fn concat(graphs: &[&MeshGraph]) -> Result<MeshGraph> {
        let width = graphs.first().map_or(GEOMETRY_FEATURES, |g| g.node_width);
        let mut out = MeshGraph {
            n_nodes: 0,
            senders: Vec::new(),
            receivers: Vec::new(),
            node_width: width,
            node_features: Vec::new(),
            edge_features: Vec::new(),
            geometry_id: 0,
            depth: 0,
        };
        for g in graphs {
            if g.node_width != width {
                return Err(AmberError::Shape("graphs in a batch have different feature widths".into()));
            }
            let off = out.n_nodes;
            out.senders.extend(g.senders.iter().map(|s| s + off));
            out.receivers.extend(g.receivers.iter().map(|r| r + off));
            out.node_features.extend_from_slice(&g.node_features);
            out.edge_features.extend_from_slice(&g.edge_features);
            out.n_nodes += g.n_nodes;
        }
        Ok(out)
    }
}

/// Builds the element graph of `mesh`. With a load and a nodal solution the
/// Poisson features are included; with neither, only the element volume.
pub fn build_graph(mesh: &TriMesh, load: Option<&GmmLoad>, solution: Option<&[f64]>) -> Result<MeshGraph> {
    let width = match (load, solution) {
        (None, None) => GEOMETRY_FEATURES,
        (Some(_), Some(u)) => {
            if u.len() != mesh.n_vertices() {
                return Err(AmberError::Shape(format!(
                    "solution has {} values for {} vertices",
                    u.len(),
                    mesh.n_vertices()
                )));
            }
            POISSON_FEATURES
        }
        (None, Some(_)) => return Err(AmberError::InvalidInput("solution features need a load".into())),
        (Some(_), None) => return Err(AmberError::InvalidInput("load features need a solution".into())),
    };
    let n = mesh.n_triangles();
    let mids = mesh.midpoints();
    let mut node_features = Vec::with_capacity(n * width);
    for (t, tri) in mesh.triangles().iter().enumerate() {
        node_features.push(mesh.element_volume(t));
        if let (Some(load), Some(u)) = (load, solution) {
            let vals = tri.map(|v| u[v]);
            let mean = (vals[0] + vals[1] + vals[2]) / 3.0;
            let var = vals.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / 3.0;
            node_features.push(load.eval(mids[t]));
            node_features.push(mean);
            node_features.push(var.sqrt());
        }
    }
    let pairs = mesh.adjacency()?;
    let mut senders = Vec::with_capacity(2 * pairs.len());
    let mut receivers = Vec::with_capacity(2 * pairs.len());
    let mut edge_features = Vec::with_capacity(2 * pairs.len());
    for (i, j) in pairs {
        let d = mids[i].dist(mids[j]);
        senders.extend([i, j]);
        receivers.extend([j, i]);
        edge_features.extend([d, d]);
    }
    if node_features.iter().chain(&edge_features).any(|x| !x.is_finite()) {
        return Err(AmberError::InvalidInput("non-finite graph feature".into()));
    }
    Ok(MeshGraph {
        n_nodes: n,
        senders,
        receivers,
        node_width: width,
        node_features,
        edge_features,
        geometry_id: 0,
        depth: 0,
    })
}

/// Solves the Poisson problem on `mesh` and builds its graph with the
/// solution features.
pub fn poisson_graph(mesh: &TriMesh, load: &GmmLoad) -> Result<MeshGraph> {
    let u = crate::fem::solve_poisson(mesh, load)?;
    build_graph(mesh, Some(load), Some(&u))
}

/// Streaming per-channel mean and population variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunningStats {
    pub count: u64,
    pub mean: Vec<f64>,
    /// Sum of squared deviations from the mean.
    pub m2: Vec<f64>,
}

impl RunningStats {
    pub fn new(width: usize) -> Self {
        RunningStats { count: 0, mean: vec![0.0; width], m2: vec![0.0; width] }
    }

    pub fn width(&self) -> usize {
        self.mean.len()
    }

    /// Adds a row-major block of samples via a pairwise (Chan) merge.
    pub fn push_rows(&mut self, data: &[f64]) {
        let w = self.width();
        let n = (data.len() / w) as u64;
        if n == 0 {
            return;
        }
        let mut bmean = vec![0.0; w];
        for row in data.chunks_exact(w) {
            for c in 0..w {
                bmean[c] += row[c];
            }
        }
        for m in &mut bmean {
            *m /= n as f64;
        }
        let mut bm2 = vec![0.0; w];
        for row in data.chunks_exact(w) {
            for c in 0..w {
                let d = row[c] - bmean[c];
                bm2[c] += d * d;
            }
        }
        let (na, nb) = (self.count as f64, n as f64);
        let total = na + nb;
        for c in 0..w {
            let delta = bmean[c] - self.mean[c];
            self.mean[c] += delta * nb / total;
            self.m2[c] += bm2[c] + delta * delta * na * nb / total;
        }
        self.count += n;
    }

    pub fn variance(&self) -> Vec<f64> {
        if self.count == 0 {
            return vec![0.0; self.width()];
        }
        self.m2.iter().map(|m| (m / self.count as f64).max(0.0)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub node: RunningStats,
    pub edge: RunningStats,
}

impl FeatureStats {
    pub fn new(node_width: usize) -> Self {
        FeatureStats { node: RunningStats::new(node_width), edge: RunningStats::new(EDGE_FEATURES) }
    }

    pub fn update(&mut self, g: &MeshGraph) -> Result<()> {
        if g.node_width != self.node.width() {
            return Err(AmberError::Shape(format!(
                "graph has {} node features, statistics track {}",
                g.node_width,
                self.node.width()
            )));
        }
        self.node.push_rows(&g.node_features);
        self.edge.push_rows(&g.edge_features);
        Ok(())
    }
}

pub fn update_stats(stats: &mut FeatureStats, g: &MeshGraph) -> Result<()> {
    stats.update(g)
}

fn standardize(data: &mut [f64], s: &RunningStats) {
    let w = s.width();
    let scale: Vec<f64> = s.variance().iter().map(|v| 1.0 / (v + NORM_EPS).sqrt()).collect();
    for row in data.chunks_exact_mut(w) {
        for c in 0..w {
            row[c] = (row[c] - s.mean[c]) * scale[c];
        }
    }
}

/// `(x − mean) / sqrt(var + 1e-8)` per channel.
pub fn normalize(g: &MeshGraph, stats: &FeatureStats) -> Result<MeshGraph> {
    if g.node_width != stats.node.width() {
        return Err(AmberError::Shape(format!(
            "graph has {} node features, statistics track {}",
            g.node_width,
            stats.node.width()
        )));
    }
    let mut out = g.clone();
    standardize(&mut out.node_features, &stats.node);
    standardize(&mut out.edge_features, &stats.edge);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::solve_poisson;
    use crate::geometry::{sample_gmm_load, Point2, Polygon2};
    use crate::mesh::tests::jittered_grid;
    use crate::rng::seeded;
    use rand::Rng;

    fn poisson_graph(m: &TriMesh, seed: u64) -> (MeshGraph, GmmLoad) {
        let domain = Polygon2::new(vec![
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(1.0, 1.0),
            Point2::new(0.0, 1.0),
        ])
        .unwrap();
        let load = sample_gmm_load(&mut seeded(seed), &domain).unwrap();
        let u = solve_poisson(m, &load).unwrap();
        (build_graph(m, Some(&load), Some(&u)).unwrap(), load)
    }

    #[test]
    fn single_element_graph() {
        let m = TriMesh::new(
            vec![Point2::new(0.0, 0.0), Point2::new(1.0, 0.0), Point2::new(0.0, 1.0)],
            vec![[0, 1, 2]],
        )
        .unwrap();
        let g = build_graph(&m, None, None).unwrap();
        assert_eq!((g.n_nodes, g.n_edges()), (1, 0));
        assert_eq!(g.node_features, vec![0.5]);
    }

    #[test]
    fn two_elements_two_edges() {
        let m = crate::mesh::structured_square(1, Point2::new(0.0, 0.0), 1.0);
        let g = build_graph(&m, None, None).unwrap();
        assert_eq!(g.n_edges(), 2);
        assert_eq!(g.edge_features[0], g.edge_features[1]);
        assert_eq!((g.senders[0], g.receivers[0]), (g.receivers[1], g.senders[1]));
    }

    #[test]
    fn constant_solution_features() {
        let m = jittered_grid(3, 0);
        let load = GmmLoad::new(
            vec![1.0],
            vec![Point2::new(0.5, 0.5)],
            vec![[[0.01, 0.0], [0.0, 0.01]]],
        )
        .unwrap();
        let u = vec![2.5; m.n_vertices()];
        let g = build_graph(&m, Some(&load), Some(&u)).unwrap();
        for i in 0..g.n_nodes {
            assert_eq!(g.node(i)[2], 2.5);
            assert_eq!(g.node(i)[3], 0.0);
        }
        assert!(build_graph(&m, Some(&load), Some(&u[1..])).is_err());
        assert!(build_graph(&m, None, Some(&u)).is_err());
    }

    #[test]
    fn relabeling_permutes_features() {
        let m = jittered_grid(4, 5);
        let (g, load) = poisson_graph(&m, 1);
        let mut perm: Vec<usize> = (0..m.n_triangles()).collect();
        let mut rng = seeded(2);
        for i in (1..perm.len()).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        // new element k is old element perm[k]
        let shuffled =
            TriMesh::new(m.vertices().to_vec(), perm.iter().map(|&t| m.triangles()[t]).collect()).unwrap();
        let u = solve_poisson(&shuffled, &load).unwrap();
        let h = build_graph(&shuffled, Some(&load), Some(&u)).unwrap();
        for (k, &old) in perm.iter().enumerate() {
            for (a, b) in h.node(k).iter().zip(g.node(old)) {
                assert!((a - b).abs() <= 1e-9 * b.abs().max(1e-300));
            }
        }
        let edges = |g: &MeshGraph, map: &dyn Fn(usize) -> usize| {
            let mut e: Vec<(usize, usize)> =
                g.senders.iter().zip(&g.receivers).map(|(&s, &r)| (map(s), map(r))).collect();
            e.sort_unstable();
            e
        };
        assert_eq!(edges(&h, &|k| perm[k]), edges(&g, &|k| k));
    }

    #[test]
    fn rigid_motion_leaves_features_unchanged() {
        let m = jittered_grid(4, 7);
        let (angle, shift) = (0.7f64, Point2::new(2.0, -1.0));
        let (c, s) = (angle.cos(), angle.sin());
        let rot = |p: Point2| Point2::new(c * p.x - s * p.y, s * p.x + c * p.y) + shift;
        let moved = m.map_vertices(rot).unwrap();
        let load = GmmLoad::new(
            vec![0.6, 0.4],
            vec![Point2::new(0.3, 0.4), Point2::new(0.7, 0.6)],
            vec![[[0.01, 0.002], [0.002, 0.02]], [[0.02, 0.0], [0.0, 0.01]]],
        )
        .unwrap();
        let r = [[c, -s], [s, c]];
        let cov_moved = load
            .covariances
            .iter()
            .map(|cv| {
                let mut out = [[0.0; 2]; 2];
                for i in 0..2 {
                    for j in 0..2 {
                        for k in 0..2 {
                            for l in 0..2 {
                                out[i][j] += r[i][k] * cv[k][l] * r[j][l];
                            }
                        }
                    }
                }
                out
            })
            .collect();
        let load_moved =
            GmmLoad::new(load.weights.clone(), load.means.iter().map(|&p| rot(p)).collect(), cov_moved).unwrap();
        let u = solve_poisson(&m, &load).unwrap();
        let v = solve_poisson(&moved, &load_moved).unwrap();
        let a = build_graph(&m, Some(&load), Some(&u)).unwrap();
        let b = build_graph(&moved, Some(&load_moved), Some(&v)).unwrap();
        assert_eq!(a.senders, b.senders);
        for (x, y) in a.node_features.iter().zip(&b.node_features).chain(a.edge_features.iter().zip(&b.edge_features)) {
            assert!((x - y).abs() <= 1e-9 * x.abs().max(1e-6), "{x} vs {y}");
        }
    }

    fn two_pass(rows: &[f64], w: usize) -> (Vec<f64>, Vec<f64>) {
        let n = (rows.len() / w) as f64;
        let mean: Vec<f64> = (0..w).map(|c| rows.iter().skip(c).step_by(w).sum::<f64>() / n).collect();
        let var = (0..w)
            .map(|c| rows.iter().skip(c).step_by(w).map(|x| (x - mean[c]).powi(2)).sum::<f64>() / n)
            .collect();
        (mean, var)
    }

    #[test]
    fn streaming_matches_two_pass() {
        let graphs: Vec<MeshGraph> = (0..4).map(|s| poisson_graph(&jittered_grid(3 + s, s as u64), s as u64).0).collect();
        let mut stats = FeatureStats::new(POISSON_FEATURES);
        for g in &graphs {
            update_stats(&mut stats, g).unwrap();
        }
        let all_nodes: Vec<f64> = graphs.iter().flat_map(|g| g.node_features.clone()).collect();
        let all_edges: Vec<f64> = graphs.iter().flat_map(|g| g.edge_features.clone()).collect();
        for (s, rows, w) in [(&stats.node, &all_nodes, POISSON_FEATURES), (&stats.edge, &all_edges, 1)] {
            let (mean, var) = two_pass(rows, w);
            for c in 0..w {
                assert!((s.mean[c] - mean[c]).abs() <= 1e-10 * mean[c].abs().max(1.0));
                assert!((s.variance()[c] - var[c]).abs() <= 1e-10 * var[c].abs().max(1.0));
            }
        }
        assert!(update_stats(&mut FeatureStats::new(1), &graphs[0]).is_err());
    }

    #[test]
    fn single_graph_stats_and_repeat() {
        let g = build_graph(&jittered_grid(3, 1), None, None).unwrap();
        let mut s = FeatureStats::new(1);
        s.update(&g).unwrap();
        let mean = g.node_features.iter().sum::<f64>() / g.n_nodes as f64;
        assert!((s.node.mean[0] - mean).abs() < 1e-15);
        let var1 = s.node.variance()[0] / s.node.count as f64;
        s.update(&g).unwrap();
        assert!((s.node.mean[0] - mean).abs() < 1e-15);
        assert!(s.node.variance()[0] / (s.node.count as f64) <= var1);
    }

    #[test]
    fn normalization() {
        let g = build_graph(&jittered_grid(4, 2), None, None).unwrap();
        let mut s = FeatureStats::new(1);
        s.update(&g).unwrap();
        let n = normalize(&g, &s).unwrap();
        let mean = n.node_features.iter().sum::<f64>() / n.n_nodes as f64;
        assert!(mean.abs() < 1e-12);

        // a node equal to the mean maps to zero
        let mut at_mean = g.clone();
        at_mean.node_features[0] = s.node.mean[0];
        assert_eq!(normalize(&at_mean, &s).unwrap().node_features[0], 0.0);

        // constant channel: zero variance handled by the epsilon
        let m = crate::mesh::structured_square(3, Point2::new(0.0, 0.0), 1.0);
        let c = build_graph(&m, None, None).unwrap();
        let mut cs = FeatureStats::new(1);
        cs.update(&c).unwrap();
        assert!(normalize(&c, &cs).unwrap().node_features.iter().all(|&x| x.abs() < 1e-6));

        // affine: scaling features by a and stats accordingly leaves the
        // normalised values unchanged up to the epsilon
        let a = 3.0;
        let mut scaled = g.clone();
        scaled.node_features.iter_mut().for_each(|x| *x = a * *x + 1.0);
        let mut ss = FeatureStats::new(1);
        ss.update(&scaled).unwrap();
        let ns = normalize(&scaled, &ss).unwrap();
        let var = s.node.variance()[0];
        let ratio = ((var + 1e-8) / (var + 1e-8 / (a * a))).sqrt();
        for (x, y) in n.node_features.iter().zip(&ns.node_features) {
            assert!((y - x * ratio).abs() < 1e-9);
        }
    }
}
