//! Incremental Bowyer–Watson triangulation inside a bounding super-triangle.
//!
//! Triangles are never reused: a triangle's index is its creation order, which
//! the refinement queue uses as a deterministic tie-breaker.

use robust::{incircle, orient2d, Coord};

use crate::geometry::Point2;

pub(crate) const NONE: usize = usize::MAX;

#[derive(Debug, Clone)]
pub(crate) struct Tri {
    pub v: [usize; 3],
    /// `nb[k]` lies across the edge opposite `v[k]`.
    pub nb: [usize; 3],
    pub alive: bool,
}

#[derive(Debug)]
pub(crate) enum InsertError {
    Duplicate,
    OutsideHull,
    Degenerate,
}

fn c(p: Point2) -> Coord<f64> {
    Coord { x: p.x, y: p.y }
}

pub(crate) fn orient(a: Point2, b: Point2, p: Point2) -> f64 {
    orient2d(c(a), c(b), c(p))
}

pub(crate) fn circumcenter(a: Point2, b: Point2, c: Point2) -> Point2 {
    let ab = b - a;
    let ac = c - a;
    let d = 2.0 * ab.cross(ac);
    let ab2 = ab.dot(ab);
    let ac2 = ac.dot(ac);
    Point2::new(a.x + (ac.y * ab2 - ab.y * ac2) / d, a.y + (ab.x * ac2 - ac.x * ab2) / d)
}

#[derive(Debug)]
pub(crate) struct Triangulation {
    pub pts: Vec<Point2>,
    pub tris: Vec<Tri>,
    vert_tri: Vec<usize>,
    last: usize,
}

/// Number of super-triangle vertices at the start of `pts`.
pub(crate) const SUPER: usize = 3;

impl Triangulation {
    pub fn new(lo: Point2, hi: Point2) -> Self {
        let center = lo.midpoint(hi);
        let r = (hi - lo).norm().max(1e-6) * 20.0;
        let pts = vec![
            Point2::new(center.x - 2.0 * r, center.y - r),
            Point2::new(center.x + 2.0 * r, center.y - r),
            Point2::new(center.x, center.y + 2.0 * r),
        ];
        let tris = vec![Tri { v: [0, 1, 2], nb: [NONE; 3], alive: true }];
        Triangulation { pts, tris, vert_tri: vec![0, 0, 0], last: 0 }
    }

    /// Alive triangle whose closed interior contains `p`.
    fn locate(&self, p: Point2) -> Option<usize> {
        let mut t = if self.tris[self.last].alive { self.last } else { self.any_alive()? };
        let limit = 4 * self.tris.len() + 16;
        'walk: for _ in 0..limit {
            let tri = &self.tris[t];
            for k in 0..3 {
                let a = self.pts[tri.v[(k + 1) % 3]];
                let b = self.pts[tri.v[(k + 2) % 3]];
                if orient(a, b, p) < 0.0 {
                    if tri.nb[k] == NONE {
                        return None;
                    }
                    t = tri.nb[k];
                    continue 'walk;
                }
            }
            return Some(t);
        }
        // walk did not converge; exhaustive fallback
        self.tris.iter().position(|tri| {
            tri.alive
                && (0..3).all(|k| {
                    orient(self.pts[tri.v[(k + 1) % 3]], self.pts[tri.v[(k + 2) % 3]], p) >= 0.0
                })
        })
    }

    fn any_alive(&self) -> Option<usize> {
        self.tris.iter().rposition(|t| t.alive)
    }

    fn in_circle(&self, t: usize, p: Point2) -> bool {
        let v = self.tris[t].v;
        incircle(c(self.pts[v[0]]), c(self.pts[v[1]]), c(self.pts[v[2]]), c(p)) > 0.0
    }

    /// Inserts `p`, returning its vertex index and the range of new triangles.
    pub fn insert(&mut self, p: Point2) -> Result<(usize, std::ops::Range<usize>), InsertError> {
        let t0 = self.locate(p).ok_or(InsertError::OutsideHull)?;
        for &v in &self.tris[t0].v {
            if self.pts[v] == p {
                return Err(InsertError::Duplicate);
            }
        }

        let mut cavity = vec![t0];
        let mut in_cavity = std::collections::HashSet::new();
        in_cavity.insert(t0);
        let mut i = 0;
        while i < cavity.len() {
            let t = cavity[i];
            i += 1;
            for k in 0..3 {
                let n = self.tris[t].nb[k];
                if n != NONE && !in_cavity.contains(&n) && self.in_circle(n, p) {
                    in_cavity.insert(n);
                    cavity.push(n);
                }
            }
        }

        // boundary edges (a, b) of the cavity with the outside neighbour
        let mut boundary = Vec::new();
        for &t in &cavity {
            let tri = &self.tris[t];
            for k in 0..3 {
                let n = tri.nb[k];
                if n == NONE || !in_cavity.contains(&n) {
                    let a = tri.v[(k + 1) % 3];
                    let b = tri.v[(k + 2) % 3];
                    if orient(self.pts[a], self.pts[b], p) <= 0.0 {
                        return Err(InsertError::Degenerate);
                    }
                    boundary.push((a, b, n, t));
                }
            }
        }

        let vid = self.pts.len();
        self.pts.push(p);
        self.vert_tri.push(NONE);
        for &t in &cavity {
            self.tris[t].alive = false;
        }
        let first = self.tris.len();
        for &(a, b, n, old) in &boundary {
            let id = self.tris.len();
            self.tris.push(Tri { v: [a, b, vid], nb: [NONE, NONE, n], alive: true });
            if n != NONE {
                let slot = self.tris[n].nb.iter().position(|&x| x == old).expect("mutual neighbours");
                self.tris[n].nb[slot] = id;
            }
            self.vert_tri[a] = id;
            self.vert_tri[b] = id;
        }
        let end = self.tris.len();
        // link fan triangles: (a, b, p) meets the fan triangle starting at b
        // across (b, p) and the one ending at a across (p, a)
        for id in first..end {
            let [a, b, _] = self.tris[id].v;
            let next = (first..end).find(|&j| self.tris[j].v[0] == b).expect("closed cavity");
            let prev = (first..end).find(|&j| self.tris[j].v[1] == a).expect("closed cavity");
            self.tris[id].nb[0] = next;
            self.tris[id].nb[1] = prev;
        }
        self.vert_tri[vid] = first;
        self.last = first;
        Ok((vid, first..end))
    }

    /// Alive triangles sharing edge `(a, b)`, with the local index of the apex.
    pub fn edge_triangles(&self, a: usize, b: usize) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(2);
        let start = self.vert_tri[a];
        if start == NONE || !self.tris[start].alive {
            return out;
        }
        let mut t = start;
        let mut guard = 0;
        loop {
            let tri = &self.tris[t];
            let i = tri.v.iter().position(|&x| x == a).expect("star triangle contains vertex");
            if let Some(j) = tri.v.iter().position(|&x| x == b) {
                out.push((t, 3 - i - j));
            }
            // rotate clockwise around a: across the edge (a, v[i+1])
            let next = tri.nb[(i + 2) % 3];
            if next == NONE || next == start {
                break;
            }
            t = next;
            guard += 1;
            if guard > 10_000 {
                break;
            }
        }
        out
    }

    pub fn alive_triangles(&self) -> impl Iterator<Item = (usize, &Tri)> {
        self.tris.iter().enumerate().filter(|(_, t)| t.alive)
    }
}
