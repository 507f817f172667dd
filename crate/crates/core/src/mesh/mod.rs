//! Triangle meshes, per-element fields and the geometric queries built on them.

mod grid;
mod io;

use std::collections::HashMap;
use std::sync::OnceLock;

pub use grid::{barycentric, triangle_contains, triangle_contains_tol, PointGrid, TriangleGrid, BARY_TOL};
pub use io::{parse_tmesh, read_tmesh, write_tmesh, TmeshFile};

use crate::error::{AmberError, Result};
use crate::geometry::Point2;
use crate::rng::fnv1a64;

/// Triangles with smaller area are rejected as degenerate.
pub const MIN_AREA: f64 = 1e-14;

/// Spatial dimension of every mesh in this crate.
pub const DIM: usize = 2;

/// Conforming, positively oriented triangle mesh.
///
/// Immutable after construction; the spatial search structures are built
/// lazily on first query and shared by clones.
#[derive(Debug, Clone)]
pub struct TriMesh {
    vertices: Vec<Point2>,
    triangles: Vec<[usize; 3]>,
    boundary: Vec<bool>,
    id: u64,
    locator: OnceLock<TriangleGrid>,
    centroid_grid: OnceLock<PointGrid>,
}

impl PartialEq for TriMesh {
    fn eq(&self, other: &Self) -> bool {
        self.vertices == other.vertices && self.triangles == other.triangles
    }
}

/// One scalar per element of a specific mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementField {
    pub values: Vec<f64>,
    pub mesh_id: u64,
}

impl ElementField {
    pub fn new(mesh: &TriMesh, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.n_triangles() {
            return Err(AmberError::Shape(format!(
                "field has {} values for {} elements",
                values.len(),
                mesh.n_triangles()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(AmberError::InvalidInput("element field contains non-finite values".into()));
        }
        Ok(Self { values, mesh_id: mesh.id() })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn belongs_to(&self, mesh: &TriMesh) -> bool {
        self.mesh_id == mesh.id() && self.values.len() == mesh.n_triangles()
    }
}

pub(crate) fn signed_area(a: Point2, b: Point2, c: Point2) -> f64 {
    0.5 * (b - a).cross(c - a)
}

/// `(V · d! / √(d+1))^(1/d)` for a triangle of area `area`.
pub fn sizing_from_area(area: f64) -> f64 {
    (area * 2.0 / 3f64.sqrt()).sqrt()
}

/// Inverse of [`sizing_from_area`].
pub fn area_from_sizing(size: f64) -> f64 {
    size * size * 3f64.sqrt() / 2.0
}

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

impl TriMesh {
    /// Builds a mesh, checking indices, orientation and edge-manifoldness.
    /// Boundary flags are derived from edges with a single incident triangle.
    pub fn new(vertices: Vec<Point2>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        let nv = vertices.len();
        if vertices.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return Err(AmberError::Mesh("non-finite vertex coordinate".into()));
        }
        for (t, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&v| v >= nv) {
                return Err(AmberError::Mesh(format!("triangle {t} has an out-of-range index")));
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(AmberError::Mesh(format!("triangle {t} repeats a vertex")));
            }
            let area = signed_area(vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]);
            if !(area > MIN_AREA) {
                return Err(AmberError::Mesh(format!(
                    "triangle {t} is inverted or degenerate (area {area:e})"
                )));
            }
        }
        let mut boundary = vec![false; nv];
        for ((a, b), tris) in edge_map(&triangles)? {
            if tris.len() == 1 {
                boundary[a] = true;
                boundary[b] = true;
            }
        }
        let id = mesh_digest(&vertices, &triangles);
        Ok(TriMesh {
            vertices,
            triangles,
            boundary,
            id,
            locator: OnceLock::new(),
            centroid_grid: OnceLock::new(),
        })
    }

    pub fn vertices(&self) -> &[Point2] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_flags(&self) -> &[bool] {
        &self.boundary
    }

    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        self.boundary[v]
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    /// Content hash of coordinates and connectivity.
    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn corners(&self, i: usize) -> [Point2; 3] {
        self.triangles[i].map(|v| self.vertices[v])
    }

    pub fn element_volume(&self, i: usize) -> f64 {
        let [a, b, c] = self.corners(i);
        signed_area(a, b, c)
    }

    pub fn element_midpoint(&self, i: usize) -> Point2 {
        let [a, b, c] = self.corners(i);
        Point2::new((a.x + b.x + c.x) / 3.0, (a.y + b.y + c.y) / 3.0)
    }

    pub fn midpoints(&self) -> Vec<Point2> {
        (0..self.n_triangles()).map(|i| self.element_midpoint(i)).collect()
    }

    pub fn volumes(&self) -> Vec<f64> {
        (0..self.n_triangles()).map(|i| self.element_volume(i)).collect()
    }

    pub fn total_area(&self) -> f64 {
        self.volumes().iter().sum()
    }

    pub fn sizing_of_element(&self, i: usize) -> f64 {
        sizing_from_area(self.element_volume(i))
    }

    pub fn induced_sizing_field(&self) -> ElementField {
        let values = (0..self.n_triangles()).map(|i| self.sizing_of_element(i)).collect();
        ElementField { values, mesh_id: self.id }
    }

    pub fn edge_lengths(&self, i: usize) -> [f64; 3] {
        let [a, b, c] = self.corners(i);
        [b.dist(c), c.dist(a), a.dist(b)]
    }

    pub fn longest_edge(&self, i: usize) -> f64 {
        self.edge_lengths(i).into_iter().fold(0.0, f64::max)
    }

    /// Smallest interior angle of element `i`, in degrees.
    pub fn min_angle_deg(&self, i: usize) -> f64 {
        let [a, b, c] = self.corners(i);
        min_angle_deg(a, b, c)
    }

    /// Unordered pairs of elements sharing a full edge, sorted ascending.
    pub fn adjacency(&self) -> Result<Vec<(usize, usize)>> {
        let mut pairs: Vec<(usize, usize)> = edge_map(&self.triangles)?
            .into_values()
            .filter(|t| t.len() == 2)
            .map(|t| (t[0].0.min(t[1].0), t[0].0.max(t[1].0)))
            .collect();
        pairs.sort_unstable();
        Ok(pairs)
    }

    /// For each element, the neighbour across the edge opposite each local vertex.
    pub fn neighbors(&self) -> Vec<[Option<usize>; 3]> {
        let mut out = vec![[None; 3]; self.n_triangles()];
        let map = edge_map(&self.triangles).expect("validated at construction");
        for tris in map.values() {
            if tris.len() == 2 {
                let (t0, k0) = tris[0];
                let (t1, k1) = tris[1];
                out[t0][k0] = Some(t1);
                out[t1][k1] = Some(t0);
            }
        }
        out
    }

    /// Sorted one-ring vertex neighbours of every vertex.
    pub fn vertex_neighbors(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n_vertices()];
        for tri in &self.triangles {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                out[a].push(b);
                out[b].push(a);
            }
        }
        for n in &mut out {
            n.sort_unstable();
            n.dedup();
        }
        out
    }

    /// Elements incident to each vertex.
    pub fn vertex_triangles(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n_vertices()];
        for (t, tri) in self.triangles.iter().enumerate() {
            for &v in tri {
                out[v].push(t);
            }
        }
        out
    }

    /// Boundary edges `(a, b)` oriented with the domain on their left.
    pub fn boundary_edges(&self) -> Vec<(usize, usize)> {
        let map = edge_map(&self.triangles).expect("validated at construction");
        let mut out: Vec<(usize, usize)> = map
            .values()
            .filter(|t| t.len() == 1)
            .map(|t| {
                let (tri, k) = t[0];
                let v = self.triangles[tri];
                (v[(k + 1) % 3], v[(k + 2) % 3])
            })
            .collect();
        out.sort_unstable();
        out
    }

    fn locator(&self) -> &TriangleGrid {
        self.locator.get_or_init(|| TriangleGrid::build(&self.vertices, &self.triangles))
    }

    fn centroid_grid(&self) -> &PointGrid {
        self.centroid_grid.get_or_init(|| PointGrid::build(self.midpoints()))
    }

    /// Lowest-index element whose closed triangle contains `p`.
    pub fn locate(&self, p: Point2) -> Option<usize> {
        self.locator().locate(&self.vertices, &self.triangles, p)
    }

    /// Element whose centroid is closest to `p`; ties go to the lowest index.
    pub fn nearest_element(&self, p: Point2) -> Option<usize> {
        self.centroid_grid().nearest(p)
    }

    /// `locate`, falling back to `nearest_element` outside the mesh.
    pub fn locate_or_nearest(&self, p: Point2) -> Option<usize> {
        self.locate(p).or_else(|| self.nearest_element(p))
    }

    /// Full invariant check: orientation, manifoldness and conformity (no
    /// vertex inside or on the relative interior of a foreign element).
    pub fn check_invariants(&self) -> Result<()> {
        let _ = edge_map(&self.triangles)?;
        let mut seen = HashMap::new();
        for (t, tri) in self.triangles.iter().enumerate() {
            let mut key = *tri;
            key.sort_unstable();
            if let Some(other) = seen.insert(key, t) {
                return Err(AmberError::Mesh(format!("triangles {other} and {t} coincide")));
            }
            if !(self.element_volume(t) > MIN_AREA) {
                return Err(AmberError::Mesh(format!("triangle {t} is degenerate")));
            }
        }
        let grid = self.locator();
        let mut used = vec![false; self.n_vertices()];
        for tri in &self.triangles {
            for &v in tri {
                used[v] = true;
            }
        }
        // a vertex inside or on the boundary of an element it does not belong
        // to is a hanging node, a duplicate or an overlap
        for (v, p) in self.vertices.iter().enumerate() {
            if !used[v] {
                continue;
            }
            for &t in grid.candidates(*p) {
                let t = t as usize;
                if self.triangles[t].contains(&v) {
                    continue;
                }
                let [a, b, c] = self.corners(t);
                if triangle_contains_tol(a, b, c, *p) {
                    return Err(AmberError::Mesh(format!(
                        "vertex {v} lies inside or on the boundary of triangle {t}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Returns a copy with vertices moved; connectivity is unchanged.
    pub fn with_vertices(&self, vertices: Vec<Point2>) -> Result<TriMesh> {
        TriMesh::new(vertices, self.triangles.clone())
    }

    /// Applies `f` to every vertex.
    pub fn map_vertices(&self, f: impl Fn(Point2) -> Point2) -> Result<TriMesh> {
        self.with_vertices(self.vertices.iter().map(|&p| f(p)).collect())
    }
}

pub fn min_angle_deg(a: Point2, b: Point2, c: Point2) -> f64 {
    let angle = |p: Point2, q: Point2, r: Point2| {
        let u = q - p;
        let v = r - p;
        u.cross(v).abs().atan2(u.dot(v))
    };
    let m = angle(a, b, c).min(angle(b, c, a)).min(angle(c, a, b));
    m.to_degrees()
}

type EdgeMap = HashMap<(usize, usize), Vec<(usize, usize)>>;

/// Edge → incident `(triangle, local index of the opposite vertex)`.
fn edge_map(triangles: &[[usize; 3]]) -> Result<EdgeMap> {
    let mut map: EdgeMap = HashMap::with_capacity(triangles.len() * 2);
    for (t, tri) in triangles.iter().enumerate() {
        for k in 0..3 {
            let key = edge_key(tri[(k + 1) % 3], tri[(k + 2) % 3]);
            let entry = map.entry(key).or_default();
            entry.push((t, k));
            if entry.len() > 2 {
                return Err(AmberError::NonManifoldEdge(key.0, key.1));
            }
        }
    }
    for (key, tris) in &map {
        if tris.len() == 2 {
            // the two triangles must traverse the shared edge in opposite directions
            let dir = |(t, k): (usize, usize)| triangles[t][(k + 1) % 3] == key.0;
            if dir(tris[0]) == dir(tris[1]) {
                return Err(AmberError::Mesh(format!(
                    "edge ({}, {}) is traversed in the same direction by two triangles",
                    key.0, key.1
                )));
            }
        }
    }
    Ok(map)
}

fn mesh_digest(vertices: &[Point2], triangles: &[[usize; 3]]) -> u64 {
    let mut bytes = Vec::with_capacity(vertices.len() * 16 + triangles.len() * 24);
    for p in vertices {
        bytes.extend_from_slice(&p.x.to_bits().to_le_bytes());
        bytes.extend_from_slice(&p.y.to_bits().to_le_bytes());
    }
    for t in triangles {
        for &v in t {
            bytes.extend_from_slice(&(v as u64).to_le_bytes());
        }
    }
    fnv1a64(&bytes)
}

/// Structured `n × n` grid over `[x0, x0 + size]²` split into `2n²` triangles
/// along the same diagonal.
pub fn structured_square(n: usize, origin: Point2, size: f64) -> TriMesh {
    let h = size / n as f64;
    let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            vertices.push(Point2::new(origin.x + i as f64 * h, origin.y + j as f64 * h));
        }
    }
    let idx = |i: usize, j: usize| j * (n + 1) + i;
    let mut triangles = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            triangles.push([idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)]);
            triangles.push([idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)]);
        }
    }
    TriMesh::new(vertices, triangles).expect("structured grid is valid")
}
