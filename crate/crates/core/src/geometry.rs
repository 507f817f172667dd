//! Problem instances: L-shaped domains, Gaussian-mixture load functions and
//! point-in-polygon queries.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Sub};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{AmberError, Result};

/// Containment tolerance shared by every inside/outside test in the crate.
pub const BOUNDARY_TOL: f64 = 1e-12;

/// Number of mixture components of a sampled load.
pub const GMM_COMPONENTS: usize = 3;

const MEAN_ATTEMPTS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, o: Point2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the 3D cross product.
    pub fn cross(self, o: Point2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dist(self, o: Point2) -> f64 {
        (self - o).norm()
    }

    pub fn dist2(self, o: Point2) -> f64 {
        let dx = self.x - o.x;
        let dy = self.y - o.y;
        dx * dx + dy * dy
    }

    pub fn midpoint(self, o: Point2) -> Point2 {
        Point2::new(0.5 * (self.x + o.x), 0.5 * (self.y + o.y))
    }
}

impl From<[f64; 2]> for Point2 {
    fn from(a: [f64; 2]) -> Self {
        Point2::new(a[0], a[1])
    }
}

impl From<Point2> for [f64; 2] {
    fn from(p: Point2) -> Self {
        [p.x, p.y]
    }
}

impl Add for Point2 {
    type Output = Point2;
    fn add(self, o: Point2) -> Point2 {
        Point2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point2 {
    type Output = Point2;
    fn sub(self, o: Point2) -> Point2 {
        Point2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, s: f64) -> Point2 {
        Point2::new(self.x * s, self.y * s)
    }
}

/// Distance from `p` to the closed segment `[a, b]`.
pub fn segment_distance(a: Point2, b: Point2, p: Point2) -> f64 {
    let ab = b - a;
    let len2 = ab.dot(ab);
    if len2 == 0.0 {
        return p.dist(a);
    }
    let t = ((p - a).dot(ab) / len2).clamp(0.0, 1.0);
    p.dist(a + ab * t)
}

/// Simple counter-clockwise polygon without holes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PolygonRepr", into = "PolygonRepr")]
pub struct Polygon2 {
    vertices: Vec<Point2>,
}

#[derive(Serialize, Deserialize)]
struct PolygonRepr {
    vertices: Vec<Point2>,
}

impl TryFrom<PolygonRepr> for Polygon2 {
    type Error = AmberError;
    fn try_from(r: PolygonRepr) -> Result<Self> {
        Polygon2::new(r.vertices)
    }
}

impl From<Polygon2> for PolygonRepr {
    fn from(p: Polygon2) -> Self {
        PolygonRepr { vertices: p.vertices }
    }
}

impl Polygon2 {
    pub fn new(vertices: Vec<Point2>) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(AmberError::Geometry(format!(
                "polygon needs at least 3 vertices, got {}",
                vertices.len()
            )));
        }
        if vertices.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return Err(AmberError::Geometry("non-finite vertex".into()));
        }
        let poly = Polygon2 { vertices };
        if poly.signed_area() <= 0.0 {
            return Err(AmberError::Geometry(
                "polygon must be counter-clockwise with positive area".into(),
            ));
        }
        if !poly.is_simple() {
            return Err(AmberError::Geometry("polygon is self-intersecting".into()));
        }
        Ok(poly)
    }

    /// The L-shape `(0,1)² \ [p0, (1,1)]`.
    pub fn lshape(corner: Point2) -> Result<Self> {
        if !(corner.x > 0.0 && corner.x < 1.0 && corner.y > 0.0 && corner.y < 1.0) {
            return Err(AmberError::Geometry(format!(
                "L-shape corner ({}, {}) must lie in (0,1)²",
                corner.x, corner.y
            )));
        }
        Polygon2::new(vec![
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(1.0, corner.y),
            corner,
            Point2::new(corner.x, 1.0),
            Point2::new(0.0, 1.0),
        ])
    }

    pub fn vertices(&self) -> &[Point2] {
        &self.vertices
    }

    /// Edges as `(start, end)` pairs in counter-clockwise order.
    pub fn edges(&self) -> impl Iterator<Item = (Point2, Point2)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    pub fn signed_area(&self) -> f64 {
        0.5 * self.edges().map(|(a, b)| a.cross(b)).sum::<f64>()
    }

    pub fn bbox(&self) -> (Point2, Point2) {
        let mut lo = Point2::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in &self.vertices {
            lo.x = lo.x.min(p.x);
            lo.y = lo.y.min(p.y);
            hi.x = hi.x.max(p.x);
            hi.y = hi.y.max(p.y);
        }
        (lo, hi)
    }

    pub fn perimeter(&self) -> f64 {
        self.edges().map(|(a, b)| a.dist(b)).sum()
    }

    fn is_simple(&self) -> bool {
        let n = self.vertices.len();
        let edges: Vec<_> = self.edges().collect();
        for i in 0..n {
            for j in (i + 1)..n {
                let adjacent = j == i + 1 || (i == 0 && j == n - 1);
                let (a, b) = edges[i];
                let (c, d) = edges[j];
                if adjacent {
                    // consecutive edges may only share their common vertex
                    let (far_i, far_j) = if j == i + 1 { (a, d) } else { (b, c) };
                    if segment_distance(c, d, far_i) <= BOUNDARY_TOL
                        || segment_distance(a, b, far_j) <= BOUNDARY_TOL
                    {
                        return false;
                    }
                } else if segments_intersect(a, b, c, d) {
                    return false;
                }
            }
        }
        true
    }

    pub fn boundary_distance(&self, p: Point2) -> f64 {
        self.edges()
            .map(|(a, b)| segment_distance(a, b, p))
            .fold(f64::INFINITY, f64::min)
    }

    /// Even-odd containment; points within [`BOUNDARY_TOL`] of the boundary
    /// count as inside.
    pub fn contains(&self, p: Point2) -> bool {
        if self.boundary_distance(p) <= BOUNDARY_TOL {
            return true;
        }
        let mut inside = false;
        for (a, b) in self.edges() {
            if (a.y > p.y) != (b.y > p.y) {
                let x = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
                if p.x < x {
                    inside = !inside;
                }
            }
        }
        inside
    }

    /// Inside and farther than [`BOUNDARY_TOL`] from the boundary.
    pub fn strictly_contains(&self, p: Point2) -> bool {
        self.contains(p) && self.boundary_distance(p) > BOUNDARY_TOL
    }
}

fn orient(a: Point2, b: Point2, c: Point2) -> f64 {
    (b - a).cross(c - a)
}

/// Closed-segment intersection test.
pub fn segments_intersect(a: Point2, b: Point2, c: Point2, d: Point2) -> bool {
    let d1 = orient(c, d, a);
    let d2 = orient(c, d, b);
    let d3 = orient(a, b, c);
    let d4 = orient(a, b, d);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    segment_distance(c, d, a) <= BOUNDARY_TOL
        || segment_distance(c, d, b) <= BOUNDARY_TOL
        || segment_distance(a, b, c) <= BOUNDARY_TOL
        || segment_distance(a, b, d) <= BOUNDARY_TOL
}

/// Draws the L-shape corner with both coordinates independent in U(0.2, 0.95).
pub fn sample_lshape_corner<R: Rng + ?Sized>(rng: &mut R) -> Point2 {
    let x = rng.random_range(0.2..0.95);
    let y = rng.random_range(0.2..0.95);
    Point2::new(x, y)
}

pub fn sample_lshape<R: Rng + ?Sized>(rng: &mut R) -> Polygon2 {
    let corner = sample_lshape_corner(rng);
    Polygon2::lshape(corner).expect("sampled corner lies in (0,1)²")
}

/// Gaussian mixture used as the Poisson load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmLoad {
    pub weights: Vec<f64>,
    pub means: Vec<Point2>,
    /// Row-major 2×2 covariance matrices.
    pub covariances: Vec<[[f64; 2]; 2]>,
}

impl GmmLoad {
    pub fn new(
        weights: Vec<f64>,
        means: Vec<Point2>,
        covariances: Vec<[[f64; 2]; 2]>,
    ) -> Result<Self> {
        let n = weights.len();
        if n == 0 || means.len() != n || covariances.len() != n {
            return Err(AmberError::InvalidInput(
                "mixture weights, means and covariances must have equal non-zero length".into(),
            ));
        }
        if weights.iter().any(|w| !(*w > 0.0)) || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-12
        {
            return Err(AmberError::InvalidInput(
                "mixture weights must be positive and sum to 1".into(),
            ));
        }
        for c in &covariances {
            let (l1, l2) = sym_eigenvalues(c);
            if (c[0][1] - c[1][0]).abs() > 1e-15 || !(l1 > 0.0 && l2 > 0.0) {
                return Err(AmberError::InvalidInput(
                    "covariances must be symmetric positive definite".into(),
                ));
            }
        }
        Ok(Self { weights, means, covariances })
    }

    /// Value of component `i` alone (without its weight).
    pub fn component_density(&self, i: usize, p: Point2) -> f64 {
        let c = &self.covariances[i];
        let det = c[0][0] * c[1][1] - c[0][1] * c[1][0];
        let d = p - self.means[i];
        // inverse of [[a, b], [b, d]] is [[d, -b], [-b, a]] / det
        let q = (c[1][1] * d.x * d.x - (c[0][1] + c[1][0]) * d.x * d.y + c[0][0] * d.y * d.y) / det;
        (-0.5 * q).exp() / (2.0 * PI * det.sqrt())
    }

    pub fn eval(&self, p: Point2) -> f64 {
        (0..self.weights.len())
            .map(|i| self.weights[i] * self.component_density(i, p))
            .sum()
    }
}

/// Eigenvalues `(min, max)` of a symmetric 2×2 matrix.
pub fn sym_eigenvalues(c: &[[f64; 2]; 2]) -> (f64, f64) {
    let tr = c[0][0] + c[1][1];
    let half_diff = 0.5 * (c[0][0] - c[1][1]);
    let r = half_diff.hypot(c[0][1]);
    (0.5 * tr - r, 0.5 * tr + r)
}

/// Samples a three-component mixture: means uniform in (0.1, 0.9)² and
/// resampled until inside `domain`, log-uniform diagonal variances in
/// [1e-4, 1e-3] rotated by an angle from U(0, π), weights `exp(N(0,1)) + 1`
/// normalized.
pub fn sample_gmm_load<R: Rng + ?Sized>(rng: &mut R, domain: &Polygon2) -> Result<GmmLoad> {
    let mut means = Vec::with_capacity(GMM_COMPONENTS);
    for _ in 0..GMM_COMPONENTS {
        let mut found = None;
        for _ in 0..MEAN_ATTEMPTS {
            let p = Point2::new(rng.random_range(0.1..0.9), rng.random_range(0.1..0.9));
            if domain.strictly_contains(p) {
                found = Some(p);
                break;
            }
        }
        means.push(found.ok_or(AmberError::Sampling(MEAN_ATTEMPTS))?);
    }

    let (lo, hi) = (1e-4f64.ln(), 1e-3f64.ln());
    let mut covariances = Vec::with_capacity(GMM_COMPONENTS);
    for _ in 0..GMM_COMPONENTS {
        let a = rng.random_range(lo..hi).exp();
        let b = rng.random_range(lo..hi).exp();
        let angle = rng.random_range(0.0..PI);
        covariances.push(rotated_diagonal(a, b, angle));
    }

    let raw: Vec<f64> = (0..GMM_COMPONENTS)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            z.exp() + 1.0
        })
        .collect();
    let total: f64 = raw.iter().sum();
    let weights = raw.iter().map(|w| w / total).collect();
    Ok(GmmLoad { weights, means, covariances })
}

/// `R(angle) · diag(a, b) · R(angle)ᵀ`, symmetrized exactly.
pub fn rotated_diagonal(a: f64, b: f64, angle: f64) -> [[f64; 2]; 2] {
    let (s, c) = angle.sin_cos();
    let xx = a * c * c + b * s * s;
    let yy = a * s * s + b * c * c;
    let xy = (a - b) * c * s;
    [[xx, xy], [xy, yy]]
}
