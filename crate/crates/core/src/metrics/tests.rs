use super::*;
use crate::buffer::tests::tiny_instances;
use crate::fem::rgb_refine;
use crate::mesh::tests::jittered_grid;
use crate::mesh::{structured_square, triangle_contains};
use crate::mesher::uniform_initial_mesh;
use crate::rng::seeded;
use proptest::prelude::*;
use rand::Rng;

fn nearest_scan(p: Point2, set: &[Point2]) -> usize {
    let mut best = 0;
    for (i, q) in set.iter().enumerate() {
        if q.dist2(p) < set[best].dist2(p) {
            best = i;
        }
    }
    best
}

fn dcd_oracle(a: &[Point2], b: &[Point2]) -> f64 {
    let one = |a: &[Point2], b: &[Point2]| {
        let t: Vec<usize> = a.iter().map(|&p| nearest_scan(p, b)).collect();
        let mut s = 0.0;
        for (i, &j) in t.iter().enumerate() {
            let n = t.iter().filter(|&&k| k == j).count() as f64;
            s += 1.0 - (-(a[i].dist(b[j]))).exp() / n;
        }
        s / a.len() as f64
    };
    0.5 * (one(a, b) + one(b, a))
}

fn random_points<R: Rng>(rng: &mut R, n: usize) -> Vec<Point2> {
    (0..n).map(|_| Point2::new(rng.random_range(-1.0..2.0), rng.random_range(0.0..1.0))).collect()
}

#[test]
fn dcd_closed_forms() {
    let a = [Point2::new(0.0, 0.0)];
    let b = [Point2::new(2f64.ln(), 0.0)];
    assert_eq!(dcd(&a, &b).unwrap(), 0.5);
    let mut rng = seeded(0);
    let p = random_points(&mut rng, 50);
    assert_eq!(dcd(&p, &p).unwrap(), 0.0);
    assert!(dcd(&[], &p).is_err());
    // two points sharing one target each contribute 1 − e^{−d}/2
    let two = [Point2::new(0.0, 1.0), Point2::new(0.0, -1.0)];
    let want = 0.5 * ((1.0 - (-1f64).exp() / 2.0) + (1.0 - (-1f64).exp()));
    assert!((dcd(&two, &a).unwrap() - want).abs() < 1e-15);
}

#[test]
fn dcd_matches_brute_force() {
    let mut rng = seeded(1);
    for _ in 0..100 {
        let (n, m) = (rng.random_range(1..80), rng.random_range(1..80));
        let a = random_points(&mut rng, n);
        let b = random_points(&mut rng, m);
        let d = dcd(&a, &b).unwrap();
        assert!((d - dcd_oracle(&a, &b)).abs() < 1e-12);
        assert!((d - dcd(&b, &a).unwrap()).abs() < 1e-12);
        assert!((0.0..=1.0).contains(&d));
        assert!(d > 0.0);
    }
}

proptest! {
    #[test]
    fn dcd_bounded_and_symmetric(seed in 0u64..10_000, n in 1usize..40, m in 1usize..40) {
        let mut rng = seeded(seed);
        let a = random_points(&mut rng, n);
        let b = random_points(&mut rng, m);
        let d = dcd(&a, &b).unwrap();
        prop_assert!((0.0..=1.0).contains(&d));
        prop_assert!((d - dcd(&b, &a).unwrap()).abs() < 1e-12);
    }
}

fn locate_scan(m: &TriMesh, p: Point2) -> usize {
    (0..m.n_triangles())
        .find(|&t| {
            let [a, b, c] = m.corners(t);
            triangle_contains(a, b, c, p)
        })
        .unwrap_or_else(|| nearest_scan(p, &m.midpoints()))
}

fn volume_oracle(a: &TriMesh, b: &TriMesh) -> f64 {
    let one = |a: &TriMesh, b: &TriMesh| {
        (0..a.n_triangles())
            .map(|i| (a.element_volume(i) - b.element_volume(locate_scan(b, a.element_midpoint(i)))).abs())
            .sum::<f64>()
    };
    one(a, b) + one(b, a)
}

#[test]
fn volume_difference_cases() {
    let m = jittered_grid(5, 2);
    assert_eq!(volume_difference(&m, &m).unwrap(), 0.0);
    let single = |s: f64| {
        TriMesh::new(vec![Point2::new(0.0, 0.0), Point2::new(s, 0.0), Point2::new(0.0, s)], vec![[0, 1, 2]]).unwrap()
    };
    let (a, b) = (single(1.0), single(2.0));
    assert!((volume_difference(&a, &b).unwrap() - 2.0 * (2.0 - 0.5)).abs() < 1e-15);
    assert!(volume_difference(&a, &TriMesh::new(vec![], vec![]).unwrap()).is_err());
    for seed in 0..20 {
        let a = jittered_grid(3 + (seed % 5) as usize, seed);
        let b = jittered_grid(4 + (seed % 7) as usize, seed + 100).map_vertices(|p| p * 1.1).unwrap();
        let v = volume_difference(&a, &b).unwrap();
        assert!((v - volume_oracle(&a, &b)).abs() < 1e-12);
        assert!((v - volume_difference(&b, &a).unwrap()).abs() < 1e-12);
    }
}

#[test]
fn normalized_anchors() {
    let inst = &tiny_instances(1)[0];
    let cfg = MesherConfig::default();
    let m0 = uniform_initial_mesh(&inst.domain, 0.3).unwrap();
    let mhat = reconstruction(&inst.expert, &inst.domain, &cfg).unwrap();
    assert_eq!(normalized_dcd(&m0, &inst.expert, &m0, &mhat).unwrap(), 0.0);
    assert_eq!(normalized_dcd(&mhat, &inst.expert, &m0, &mhat).unwrap(), 1.0);
    assert!(normalized_dcd(&m0, &inst.expert, &m0, &m0).is_err());
    // a uniform mesh between the two resolutions scores strictly inside
    let mid = uniform_initial_mesh(&inst.domain, 0.1).unwrap();
    let d = |m: &TriMesh| mesh_dcd(m, &inst.expert).unwrap();
    assert!(d(&mhat) < d(&mid) && d(&mid) < d(&m0));
    let v = normalized_dcd(&mid, &inst.expert, &m0, &mhat).unwrap();
    assert!(v > 0.0 && v < 1.0, "{v}");
}

#[test]
fn reconstruction_properties() {
    for inst in tiny_instances(3) {
        let cfg = MesherConfig::default();
        let r = reconstruction(&inst.expert, &inst.domain, &cfg).unwrap();
        let (n, e) = (r.n_triangles() as f64, inst.expert.n_triangles() as f64);
        assert!((n / e - 1.0).abs() < 0.3, "{n} vs {e}");
        let coarse = uniform_initial_mesh(&inst.domain, 0.3).unwrap();
        assert!(mesh_dcd(&r, &inst.expert).unwrap() < mesh_dcd(&coarse, &inst.expert).unwrap());
        assert_eq!(r, reconstruction(&inst.expert, &inst.domain, &cfg).unwrap());
        assert_eq!(mesh_dcd(&inst.expert, &inst.expert).unwrap(), 0.0);
    }
}

#[test]
fn nested_refinement_reduces_distance() {
    let coarse = structured_square(4, Point2::new(0.0, 0.0), 1.0);
    let fine = rgb_refine(&coarse, &(0..coarse.n_triangles()).collect::<Vec<_>>()).unwrap();
    let finer = rgb_refine(&fine, &(0..fine.n_triangles()).collect::<Vec<_>>()).unwrap();
    assert!(mesh_dcd(&fine, &finer).unwrap() < mesh_dcd(&coarse, &finer).unwrap());
}

#[test]
fn summary_quantiles() {
    let s = Summary::of(&[4.0, 1.0, 3.0, 2.0, 5.0]).unwrap();
    assert_eq!((s.mean, s.q25, s.q75), (3.0, 2.0, 4.0));
    let s = Summary::of(&[1.0, 2.0]).unwrap();
    assert_eq!((s.q25, s.q75), (1.25, 1.75));
    assert!(Summary::of(&[]).is_none());
}

#[test]
fn report_json_round_trip() {
    let g = |id, d: f64| GeometryReport {
        id,
        steps: (0..3).map(|t| StepRecord { t, n_elements: 10 * (t + 1), dcd: d / (t + 1) as f64, vol_diff: 0.1 }).collect(),
        ndcd_final: Some(0.5),
        ndcd_error: None,
        truncated: false,
        error: None,
    };
    let failed = GeometryReport {
        id: 9,
        steps: vec![],
        ndcd_final: None,
        ndcd_error: None,
        truncated: false,
        error: Some("boom".into()),
    };
    let r = EvalReport::from_geometries(vec![g(0, 0.6), g(1, 0.3), failed]);
    assert_eq!(r.aggregate.dcd.len(), 3);
    assert!((r.aggregate.dcd[0].mean - 0.45).abs() < 1e-15);
    assert_eq!(r.aggregate.n_elements[2].mean, 30.0);
    let text = serde_json::to_string(&r).unwrap();
    let back: EvalReport = serde_json::from_str(&text).unwrap();
    assert_eq!(back, r);
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert!(v["geometries"][0]["steps"][0]["vol_diff"].is_number());
    assert!(v["aggregate"]["dcd"][0]["q25"].is_number());
}
