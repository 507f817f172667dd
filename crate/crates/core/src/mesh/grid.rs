//! Uniform background grids for point location and nearest-point queries.

use robust::Coord;

use crate::geometry::{Point2, BOUNDARY_TOL};

/// Barycentric-coordinate slack for the widened containment test.
pub const BARY_TOL: f64 = 1e-12;

const BBOX_MARGIN: f64 = 1e-9;

/// Barycentric coordinates of `p` with respect to `(a, b, c)`.
pub fn barycentric(a: Point2, b: Point2, c: Point2, p: Point2) -> [f64; 3] {
    let det = (b - a).cross(c - a);
    [
        (b - p).cross(c - p) / det,
        (c - p).cross(a - p) / det,
        (a - p).cross(b - p) / det,
    ]
}

/// Exact closed point-in-triangle test, for either orientation.
pub fn triangle_contains(a: Point2, b: Point2, c: Point2, p: Point2) -> bool {
    let o = |u: Point2, v: Point2, w: Point2| {
        robust::orient2d(Coord { x: u.x, y: u.y }, Coord { x: v.x, y: v.y }, Coord { x: w.x, y: w.y })
    };
    let s = o(a, b, c).signum();
    o(a, b, p) * s >= 0.0 && o(b, c, p) * s >= 0.0 && o(c, a, p) * s >= 0.0
}

/// Closed containment widened by [`BARY_TOL`] in barycentric coordinates.
pub fn triangle_contains_tol(a: Point2, b: Point2, c: Point2, p: Point2) -> bool {
    barycentric(a, b, c, p).iter().all(|&l| l >= -BARY_TOL)
}

#[derive(Debug, Clone)]
struct GridFrame {
    lo: Point2,
    cell_w: f64,
    cell_h: f64,
    nx: usize,
    ny: usize,
}

impl GridFrame {
    fn new(lo: Point2, hi: Point2, n_items: usize) -> Self {
        let w = (hi.x - lo.x).max(BOUNDARY_TOL);
        let h = (hi.y - lo.y).max(BOUNDARY_TOL);
        let target = (n_items.max(1) as f64).max(1.0);
        let aspect = w / h;
        let nx = ((target * aspect).sqrt().ceil() as usize).clamp(1, 4096);
        let ny = ((target / aspect).sqrt().ceil() as usize).clamp(1, 4096);
        GridFrame { lo, cell_w: w / nx as f64, cell_h: h / ny as f64, nx, ny }
    }

    fn col(&self, x: f64) -> usize {
        let c = ((x - self.lo.x) / self.cell_w).floor();
        if c < 0.0 {
            0
        } else {
            (c as usize).min(self.nx - 1)
        }
    }

    fn row(&self, y: f64) -> usize {
        let r = ((y - self.lo.y) / self.cell_h).floor();
        if r < 0.0 {
            0
        } else {
            (r as usize).min(self.ny - 1)
        }
    }
}

/// Buckets triangle bounding boxes; answers "lowest-index triangle containing p".
#[derive(Debug, Clone)]
pub struct TriangleGrid {
    frame: GridFrame,
    hi: Point2,
    cells: Vec<Vec<u32>>,
}

impl TriangleGrid {
    pub fn build(vertices: &[Point2], triangles: &[[usize; 3]]) -> Self {
        let mut lo = Point2::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in vertices {
            lo.x = lo.x.min(p.x);
            lo.y = lo.y.min(p.y);
            hi.x = hi.x.max(p.x);
            hi.y = hi.y.max(p.y);
        }
        lo = lo - Point2::new(BBOX_MARGIN, BBOX_MARGIN);
        hi = hi + Point2::new(BBOX_MARGIN, BBOX_MARGIN);
        let frame = GridFrame::new(lo, hi, triangles.len());
        let mut cells = vec![Vec::new(); frame.nx * frame.ny];
        for (t, tri) in triangles.iter().enumerate() {
            let ps = tri.map(|v| vertices[v]);
            let x0 = ps.iter().map(|p| p.x).fold(f64::INFINITY, f64::min) - BBOX_MARGIN;
            let x1 = ps.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max) + BBOX_MARGIN;
            let y0 = ps.iter().map(|p| p.y).fold(f64::INFINITY, f64::min) - BBOX_MARGIN;
            let y1 = ps.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max) + BBOX_MARGIN;
            for r in frame.row(y0)..=frame.row(y1) {
                for c in frame.col(x0)..=frame.col(x1) {
                    cells[r * frame.nx + c].push(t as u32);
                }
            }
        }
        TriangleGrid { frame, hi, cells }
    }

    /// Triangles whose padded bounding boxes overlap the cell containing `p`.
    pub fn candidates(&self, p: Point2) -> &[u32] {
        &self.cells[self.frame.row(p.y) * self.frame.nx + self.frame.col(p.x)]
    }

    pub fn locate(&self, vertices: &[Point2], triangles: &[[usize; 3]], p: Point2) -> Option<usize> {
        let lo = self.frame.lo;
        if p.x < lo.x || p.y < lo.y || p.x > self.hi.x || p.y > self.hi.y {
            return None;
        }
        let cell = &self.cells[self.frame.row(p.y) * self.frame.nx + self.frame.col(p.x)];
        cell.iter().map(|&t| t as usize).find(|&t| {
            let [a, b, c] = triangles[t];
            triangle_contains(vertices[a], vertices[b], vertices[c], p)
        })
    }
}

/// Static point set with nearest-neighbour queries. Ties resolve to the
/// lowest point index, matching an exhaustive scan.
#[derive(Debug, Clone)]
pub struct PointGrid {
    frame: GridFrame,
    points: Vec<Point2>,
    cells: Vec<Vec<u32>>,
}

impl PointGrid {
    pub fn build(points: Vec<Point2>) -> Self {
        let mut lo = Point2::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in &points {
            lo.x = lo.x.min(p.x);
            lo.y = lo.y.min(p.y);
            hi.x = hi.x.max(p.x);
            hi.y = hi.y.max(p.y);
        }
        if points.is_empty() {
            lo = Point2::new(0.0, 0.0);
            hi = Point2::new(1.0, 1.0);
        }
        let frame = GridFrame::new(lo, hi, points.len());
        let mut cells = vec![Vec::new(); frame.nx * frame.ny];
        for (i, p) in points.iter().enumerate() {
            cells[frame.row(p.y) * frame.nx + frame.col(p.x)].push(i as u32);
        }
        PointGrid { frame, points, cells }
    }

    pub fn points(&self) -> &[Point2] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Index of the nearest point, or `None` for an empty set.
    pub fn nearest(&self, p: Point2) -> Option<usize> {
        if self.points.is_empty() {
            return None;
        }
        let f = &self.frame;
        let (c0, r0) = (f.col(p.x) as isize, f.row(p.y) as isize);
        let step = f.cell_w.min(f.cell_h);
        let max_ring = f.nx.max(f.ny) as isize;
        let mut best: Option<(f64, usize)> = None;
        for ring in 0..=max_ring {
            for r in (r0 - ring)..=(r0 + ring) {
                if r < 0 || r >= f.ny as isize {
                    continue;
                }
                let on_edge_row = r == r0 - ring || r == r0 + ring;
                let mut c = c0 - ring;
                while c <= c0 + ring {
                    if c >= 0 && c < f.nx as isize {
                        for &i in &self.cells[r as usize * f.nx + c as usize] {
                            let i = i as usize;
                            let d = self.points[i].dist2(p);
                            let better = match best {
                                None => true,
                                Some((bd, bi)) => d < bd || (d == bd && i < bi),
                            };
                            if better {
                                best = Some((d, i));
                            }
                        }
                    }
                    // interior rows only need the two ring columns
                    c += if on_edge_row || ring == 0 { 1 } else { 2 * ring };
                }
            }
            if let Some((bd, _)) = best {
                let reach = ring as f64 * step;
                if bd.sqrt() < reach {
                    break;
                }
            }
        }
        best.map(|(_, i)| i)
    }
}
