//! Sizing-field-driven triangle mesh generation.
//!
//! Delaunay refinement in the style of Ruppert: boundary segments are split
//! while encroached, and circumcenters of triangles that are too skinny or
//! too large for the local sizing are inserted until every interior triangle
//! is acceptable. A few sweeps of Laplacian smoothing follow.

mod delaunay;
mod smooth;

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use serde::{Deserialize, Serialize};

pub use smooth::laplacian_smooth;

use crate::error::{AmberError, Result};
use crate::geometry::{segments_intersect, Point2, Polygon2};
use crate::mesh::{min_angle_deg, ElementField, TriMesh};
use delaunay::{circumcenter, InsertError, Triangulation, SUPER};

/// A triangle is too large when its longest edge exceeds this multiple of
/// the local sizing value. Calibrated so that the induced sizing of the
/// output is centred on a constant target; the sizing formula reports about
/// 0.7 of the edge length of an equilateral triangle.
pub const SIZE_FACTOR: f64 = 2.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MesherConfig {
    /// Minimum interior angle in degrees.
    pub min_angle: f64,
    /// Maximum growth of the sizing value per unit distance.
    pub gradation: f64,
    pub smoothing_iters: usize,
    pub max_elements: usize,
}

impl Default for MesherConfig {
    fn default() -> Self {
        MesherConfig { min_angle: 20.0, gradation: 0.3, smoothing_iters: 3, max_elements: 200_000 }
    }
}

impl MesherConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.min_angle > 0.0 && self.min_angle <= 28.0) {
            return Err(AmberError::InvalidInput(format!(
                "min_angle must lie in (0, 28], got {}",
                self.min_angle
            )));
        }
        if !(self.gradation > 0.0) {
            return Err(AmberError::InvalidInput("gradation must be positive".into()));
        }
        if self.max_elements == 0 {
            return Err(AmberError::InvalidInput("max_elements must be positive".into()));
        }
        Ok(())
    }
}

/// Requested element size over the domain.
#[derive(Debug, Clone)]
pub enum SizingQuery {
    Constant(f64),
    /// Piecewise constant per element of `carrier`, clamped below by `floor`.
    Field { carrier: TriMesh, values: Vec<f64>, floor: f64 },
}

impl SizingQuery {
    pub fn constant(h: f64) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(AmberError::InvalidInput(format!("constant sizing must be positive, got {h}")));
        }
        Ok(SizingQuery::Constant(h))
    }

    pub fn field(carrier: &TriMesh, field: &ElementField, floor: f64) -> Result<Self> {
        if !field.belongs_to(carrier) {
            return Err(AmberError::Shape("sizing field does not belong to the carrier mesh".into()));
        }
        if !(floor > 0.0 && floor.is_finite()) {
            return Err(AmberError::InvalidInput(format!("sizing floor must be positive, got {floor}")));
        }
        if field.values.iter().any(|v| !v.is_finite()) {
            return Err(AmberError::InvalidInput("sizing field has non-finite values".into()));
        }
        Ok(SizingQuery::Field { carrier: carrier.clone(), values: field.values.clone(), floor })
    }

    /// Carrier value at `p` (located element, else nearest centroid),
    /// clamped below by the floor; no gradation.
    pub fn eval_raw(&self, p: Point2) -> f64 {
        match self {
            SizingQuery::Constant(h) => *h,
            SizingQuery::Field { carrier, values, floor } => {
                let i = carrier.locate_or_nearest(p).expect("carrier is non-empty");
                values[i].max(*floor)
            }
        }
    }

    /// Lipschitz-limits the carrier values over element adjacency:
    /// `s_i ≤ s_j + gradation · |c_i − c_j|` along every path.
    pub fn graded(&self, gradation: f64) -> Result<GradedSizing<'_>> {
        match self {
            SizingQuery::Constant(_) => Ok(GradedSizing { query: self, values: Vec::new() }),
            SizingQuery::Field { carrier, values, floor } => {
                if carrier.is_empty() {
                    return Err(AmberError::InvalidInput("empty carrier mesh".into()));
                }
                let mut s: Vec<f64> = values.iter().map(|v| v.max(*floor)).collect();
                let mids = carrier.midpoints();
                let mut adj = vec![Vec::new(); carrier.n_triangles()];
                for (i, j) in carrier.adjacency()? {
                    let d = mids[i].dist(mids[j]);
                    adj[i].push((j, d));
                    adj[j].push((i, d));
                }
                // Dijkstra from every element at once
                let mut heap: BinaryHeap<HeapItem> =
                    s.iter().enumerate().map(|(i, &v)| HeapItem { key: -v, id: i }).collect();
                while let Some(HeapItem { key, id }) = heap.pop() {
                    if -key > s[id] {
                        continue;
                    }
                    for &(j, d) in &adj[id] {
                        let cand = s[id] + gradation * d;
                        if cand < s[j] {
                            s[j] = cand;
                            heap.push(HeapItem { key: -cand, id: j });
                        }
                    }
                }
                Ok(GradedSizing { query: self, values: s })
            }
        }
    }
}

/// Requested size at `p` after flooring and gradation. Builds the graded
/// field on every call; use [`SizingQuery::graded`] for repeated queries.
pub fn eval_sizing(q: &SizingQuery, gradation: f64, p: Point2) -> Result<f64> {
    Ok(q.graded(gradation)?.eval(p))
}

/// A sizing query after gradation, ready for point evaluation.
#[derive(Debug)]
pub struct GradedSizing<'a> {
    query: &'a SizingQuery,
    values: Vec<f64>,
}

impl GradedSizing<'_> {
    pub fn eval(&self, p: Point2) -> f64 {
        match self.query {
            SizingQuery::Constant(h) => *h,
            SizingQuery::Field { carrier, .. } => {
                self.values[carrier.locate_or_nearest(p).expect("carrier is non-empty")]
            }
        }
    }

    pub fn min_value(&self) -> f64 {
        match self.query {
            SizingQuery::Constant(h) => *h,
            SizingQuery::Field { .. } => self.values.iter().copied().fold(f64::INFINITY, f64::min),
        }
    }
}

/// Max-heap item ordered by `key`, ties to the smaller id first.
#[derive(Debug, Clone, Copy)]
struct HeapItem {
    key: f64,
    id: usize,
}

impl PartialEq for HeapItem {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}
impl Eq for HeapItem {}
impl PartialOrd for HeapItem {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for HeapItem {
    fn cmp(&self, o: &Self) -> Ordering {
        self.key.total_cmp(&o.key).then_with(|| o.id.cmp(&self.id))
    }
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: usize,
    b: usize,
    alive: bool,
}

struct Refiner<'a> {
    domain: &'a Polygon2,
    sizing: GradedSizing<'a>,
    tr: Triangulation,
    segs: Vec<Segment>,
    split_queue: VecDeque<usize>,
    bad: BinaryHeap<HeapItem>,
    min_angle: f64,
    /// Polygon corners too sharp for the angle bound; their triangles are exempt.
    sharp_corner: Vec<bool>,
    unrefinable: std::collections::HashSet<usize>,
    /// Element cap.
    element_cap: usize,
}

/// `p` lies strictly inside the diametral circle of `(a, b)`.
fn encroaches(a: Point2, b: Point2, p: Point2) -> bool {
    (a - p).dot(b - p) < 0.0
}

impl<'a> Refiner<'a> {
    fn n_real_vertices(&self) -> usize {
        self.tr.pts.len() - SUPER
    }

    /// Element count of the final mesh follows from Euler's formula once
    /// all vertices are in, so the cap can be checked during refinement.
    fn check_cap(&self) -> Result<()> {
        let boundary = self.segs.iter().filter(|s| s.alive).count();
        if 2 * self.n_real_vertices() > self.element_cap + boundary + 2 {
            return Err(AmberError::ElementCap { cap: self.element_cap });
        }
        Ok(())
    }

    fn insert(&mut self, p: Point2) -> std::result::Result<usize, InsertError> {
        let (v, new_tris) = self.tr.insert(p)?;
        if self.sharp_corner.len() < self.tr.pts.len() {
            self.sharp_corner.resize(self.tr.pts.len(), false);
        }
        for t in new_tris {
            self.consider(t);
        }
        // the new vertex may encroach existing segments
        for (s, seg) in self.segs.iter().enumerate() {
            if seg.alive && seg.a != v && seg.b != v {
                let (a, b) = (self.tr.pts[seg.a], self.tr.pts[seg.b]);
                if encroaches(a, b, p) {
                    self.split_queue.push_back(s);
                }
            }
        }
        Ok(v)
    }

    fn segment_encroached(&self, s: usize) -> bool {
        let seg = self.segs[s];
        let tris = self.tr.edge_triangles(seg.a, seg.b);
        if tris.is_empty() {
            return true;
        }
        let (a, b) = (self.tr.pts[seg.a], self.tr.pts[seg.b]);
        tris.iter().any(|&(t, k)| {
            let apex = self.tr.tris[t].v[k];
            apex >= SUPER && encroaches(a, b, self.tr.pts[apex])
        })
    }

    fn split_segment(&mut self, s: usize) -> Result<()> {
        let seg = self.segs[s];
        let m = self.tr.pts[seg.a].midpoint(self.tr.pts[seg.b]);
        match self.insert(m) {
            Ok(v) => {
                self.segs[s].alive = false;
                let s1 = self.segs.len();
                self.segs.push(Segment { a: seg.a, b: v, alive: true });
                self.segs.push(Segment { a: v, b: seg.b, alive: true });
                for ns in [s1, s1 + 1] {
                    if self.segment_encroached(ns) {
                        self.split_queue.push_back(ns);
                    }
                }
                self.check_cap()
            }
            Err(e) => Err(AmberError::Mesher(format!("segment split failed: {e:?}"))),
        }
    }

    fn drain_splits(&mut self) -> Result<()> {
        while let Some(s) = self.split_queue.pop_front() {
            if self.segs[s].alive && self.segment_encroached(s) {
                self.split_segment(s)?;
            }
        }
        Ok(())
    }

    fn centroid(&self, t: usize) -> Point2 {
        let [a, b, c] = self.tr.tris[t].v.map(|v| self.tr.pts[v]);
        Point2::new((a.x + b.x + c.x) / 3.0, (a.y + b.y + c.y) / 3.0)
    }

    fn is_interior(&self, t: usize) -> bool {
        let tri = &self.tr.tris[t];
        tri.alive && tri.v.iter().all(|&v| v >= SUPER) && self.domain.contains(self.centroid(t))
    }

    /// Violation severity (> 1 means the triangle must be refined).
    fn severity(&self, t: usize) -> f64 {
        let [a, b, c] = self.tr.tris[t].v.map(|v| self.tr.pts[v]);
        let longest = a.dist(b).max(b.dist(c)).max(c.dist(a));
        let h = self.sizing.eval(self.centroid(t));
        let size_ratio = longest / (SIZE_FACTOR * h);
        let exempt = self.tr.tris[t].v.iter().any(|&v| self.sharp_corner[v]);
        let angle_ratio = if exempt {
            0.0
        } else {
            let m = min_angle_deg(a, b, c);
            if m > 0.0 {
                self.min_angle / m
            } else {
                f64::INFINITY
            }
        };
        size_ratio.max(angle_ratio)
    }

    fn consider(&mut self, t: usize) {
        if self.is_interior(t) {
            let s = self.severity(t);
            if s > 1.0 {
                self.bad.push(HeapItem { key: s, id: t });
            }
        }
    }

    fn refine_triangle(&mut self, t: usize) -> Result<()> {
        let [a, b, c] = self.tr.tris[t].v.map(|v| self.tr.pts[v]);
        let cc = circumcenter(a, b, c);
        let encroached: Vec<usize> = self
            .segs
            .iter()
            .enumerate()
            .filter(|(_, s)| s.alive && encroaches(self.tr.pts[s.a], self.tr.pts[s.b], cc))
            .map(|(i, _)| i)
            .collect();
        if !encroached.is_empty() {
            for s in encroached {
                self.split_now(s)?;
            }
            if self.tr.tris[t].alive {
                self.consider(t);
            }
            return Ok(());
        }
        if !cc.x.is_finite() || !cc.y.is_finite() {
            self.unrefinable.insert(t);
            return Ok(());
        }
        if !self.domain.contains(cc) {
            // split the boundary segment separating the triangle from its circumcenter
            let from = self.centroid(t);
            let hit = self.segs.iter().enumerate().find(|(_, s)| {
                s.alive && segments_intersect(from, cc, self.tr.pts[s.a], self.tr.pts[s.b])
            });
            match hit {
                Some((s, _)) => self.split_now(s)?,
                None => {
                    self.unrefinable.insert(t);
                }
            }
            if self.tr.tris[t].alive {
                self.consider(t);
            }
            return Ok(());
        }
        match self.insert(cc) {
            Ok(_) => {
                self.check_cap()?;
                self.drain_splits()
            }
            Err(InsertError::Duplicate) | Err(InsertError::Degenerate) => {
                self.unrefinable.insert(t);
                Ok(())
            }
            Err(InsertError::OutsideHull) => {
                Err(AmberError::Mesher("circumcenter left the bounding triangle".into()))
            }
        }
    }

    fn split_now(&mut self, s: usize) -> Result<()> {
        if self.segs[s].alive {
            self.split_segment(s)?;
        }
        self.drain_splits()
    }

    fn run(&mut self, max_rounds: usize) -> Result<()> {
        let mut rounds = 0;
        loop {
            self.drain_splits()?;
            while let Some(HeapItem { id: t, .. }) = self.bad.pop() {
                if !self.is_interior(t) || self.unrefinable.contains(&t) {
                    continue;
                }
                if self.severity(t) <= 1.0 {
                    continue;
                }
                self.refine_triangle(t)?;
                rounds += 1;
                if rounds > max_rounds {
                    return Err(AmberError::Mesher("refinement did not terminate".into()));
                }
            }
            // sweep for anything the queue missed while segments were absent
            let pending: Vec<usize> = (0..self.tr.tris.len())
                .filter(|&t| {
                    self.is_interior(t) && !self.unrefinable.contains(&t) && self.severity(t) > 1.0
                })
                .collect();
            let unsplit = self.segs.iter().enumerate().any(|(s, seg)| seg.alive && self.segment_encroached(s));
            if pending.is_empty() && !unsplit {
                return Ok(());
            }
            for (s, seg) in self.segs.clone().iter().enumerate() {
                if seg.alive && self.segment_encroached(s) {
                    self.split_queue.push_back(s);
                }
            }
            for t in pending {
                self.consider(t);
            }
        }
    }
}

fn interior_angle_deg(prev: Point2, p: Point2, next: Point2) -> f64 {
    let u = next - p;
    let v = prev - p;
    let ang = u.cross(v).atan2(u.dot(v)).to_degrees();
    if ang < 0.0 {
        ang + 360.0
    } else {
        ang
    }
}

/// Meshes `domain` so that elements follow the sizing query `q`.
pub fn generate(domain: &Polygon2, q: &SizingQuery, cfg: &MesherConfig) -> Result<TriMesh> {
    cfg.validate()?;
    let sizing = q.graded(cfg.gradation)?;
    let (lo, hi) = domain.bbox();
    let poly = domain.vertices();
    let n = poly.len();

    let element_cap = cfg.max_elements;

    let mut tr = Triangulation::new(lo, hi);
    let mut corner_ids = Vec::with_capacity(n);
    for &p in poly {
        let (v, _) = tr
            .insert(p)
            .map_err(|e| AmberError::Mesher(format!("cannot insert polygon vertex: {e:?}")))?;
        corner_ids.push(v);
    }
    let mut sharp_corner = vec![false; tr.pts.len()];
    for i in 0..n {
        let ang = interior_angle_deg(poly[(i + n - 1) % n], poly[i], poly[(i + 1) % n]);
        if ang < 60.0 {
            sharp_corner[corner_ids[i]] = true;
        }
    }

    let mut refiner = Refiner {
        domain,
        sizing,
        tr,
        segs: Vec::new(),
        split_queue: VecDeque::new(),
        bad: BinaryHeap::new(),
        min_angle: cfg.min_angle,
        sharp_corner,
        unrefinable: Default::default(),
        element_cap,
    };

    // boundary pre-split so segments start near the requested size
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        // adaptive bisection: a piece is split while it is too long for the
        // sizing at its midpoint
        let len = a.dist(b);
        let mut cuts = Vec::new();
        let mut stack = vec![(0.0f64, 1.0f64, 0u32)];
        while let Some((t0, t1, depth)) = stack.pop() {
            let mid = 0.5 * (t0 + t1);
            if depth < 20 && len * (t1 - t0) > SIZE_FACTOR * refiner.sizing.eval(a + (b - a) * mid) {
                cuts.push(mid);
                stack.push((t0, mid, depth + 1));
                stack.push((mid, t1, depth + 1));
            }
        }
        cuts.sort_by(f64::total_cmp);
        let mut prev = corner_ids[i];
        for t in cuts {
            let p = a + (b - a) * t;
            let v = refiner
                .tr
                .insert(p)
                .map_err(|e| AmberError::Mesher(format!("cannot insert boundary point: {e:?}")))?
                .0;
            refiner.segs.push(Segment { a: prev, b: v, alive: true });
            prev = v;
            if refiner.tr.pts.len() - SUPER > 2 * element_cap + 2 {
                return Err(AmberError::ElementCap { cap: cfg.max_elements });
            }
        }
        refiner.segs.push(Segment { a: prev, b: corner_ids[(i + 1) % n], alive: true });
    }
    refiner.sharp_corner.resize(refiner.tr.pts.len(), false);
    for s in 0..refiner.segs.len() {
        if refiner.segment_encroached(s) {
            refiner.split_queue.push_back(s);
        }
    }
    let initial: Vec<usize> = refiner.tr.alive_triangles().map(|(t, _)| t).collect();
    for t in initial {
        refiner.consider(t);
    }
    refiner.run(50 * cfg.max_elements + 10_000).map_err(|e| match e {
        AmberError::ElementCap { .. } => AmberError::ElementCap { cap: cfg.max_elements },
        other => other,
    })?;

    let mesh = extract(&refiner)?;
    if mesh.n_triangles() > cfg.max_elements {
        return Err(AmberError::ElementCap { cap: cfg.max_elements });
    }
    Ok(laplacian_smooth(&mesh, cfg.smoothing_iters))
}

fn extract(r: &Refiner<'_>) -> Result<TriMesh> {
    let mut remap = vec![usize::MAX; r.tr.pts.len()];
    let interior: Vec<usize> = (0..r.tr.tris.len()).filter(|&t| r.is_interior(t)).collect();
    for &t in &interior {
        for &v in &r.tr.tris[t].v {
            remap[v] = 0;
        }
    }
    let mut vertices = Vec::new();
    for (v, slot) in remap.iter_mut().enumerate() {
        if *slot == 0 {
            *slot = vertices.len();
            vertices.push(r.tr.pts[v]);
        }
    }
    let triangles = interior.iter().map(|&t| r.tr.tris[t].v.map(|v| remap[v])).collect();
    TriMesh::new(vertices, triangles)
}

/// Coarse uniform mesh with constant sizing `h0` and default settings.
pub fn uniform_initial_mesh(domain: &Polygon2, h0: f64) -> Result<TriMesh> {
    generate(domain, &SizingQuery::constant(h0)?, &MesherConfig::default())
}

#[cfg(test)]
mod tests;
