use super::*;
use crate::geometry::{sample_lshape, segment_distance};
use crate::mesh::structured_square;
use crate::rng::seeded;
use rand::Rng;

fn unit_square() -> Polygon2 {
    Polygon2::new(vec![
        Point2::new(0.0, 0.0),
        Point2::new(1.0, 0.0),
        Point2::new(1.0, 1.0),
        Point2::new(0.0, 1.0),
    ])
    .unwrap()
}

fn lshape() -> Polygon2 {
    Polygon2::lshape(Point2::new(0.5, 0.5)).unwrap()
}

fn assert_boundary_on_polygon(mesh: &TriMesh, domain: &Polygon2) {
    let v = mesh.vertices();
    let mut len = 0.0;
    for (a, b) in mesh.boundary_edges() {
        let (pa, pb) = (v[a], v[b]);
        len += pa.dist(pb);
        let on_edge = domain.edges().any(|(p, q)| {
            segment_distance(p, q, pa) < 1e-10 && segment_distance(p, q, pb) < 1e-10
        });
        assert!(on_edge, "boundary edge {pa:?}-{pb:?} leaves the polygon");
    }
    assert!((len - domain.perimeter()).abs() < 1e-10);
}

#[test]
fn unit_square_constant_half() {
    let cfg = MesherConfig::default();
    let m = generate(&unit_square(), &SizingQuery::constant(0.5).unwrap(), &cfg).unwrap();
    assert!((4..=32).contains(&m.n_triangles()), "{} elements", m.n_triangles());
    for i in 0..m.n_triangles() {
        assert!(m.min_angle_deg(i) >= 20.0);
    }
    m.check_invariants().unwrap();
    assert!((m.total_area() - 1.0).abs() < 1e-12);
    assert_boundary_on_polygon(&m, &unit_square());
}

#[test]
fn halving_size_quadruples_count() {
    let cfg = MesherConfig::default();
    for h in [0.1, 0.05] {
        let coarse = generate(&lshape(), &SizingQuery::constant(h).unwrap(), &cfg).unwrap();
        let fine = generate(&lshape(), &SizingQuery::constant(h / 2.0).unwrap(), &cfg).unwrap();
        let ratio = fine.n_triangles() as f64 / coarse.n_triangles() as f64;
        assert!(ratio > 4.0 / 1.5 && ratio < 4.0 * 1.5, "ratio {ratio}");
    }
}

#[test]
fn coarse_initial_lshape() {
    let m = uniform_initial_mesh(&lshape(), 0.3).unwrap();
    assert!(m.n_triangles() < 100);
    m.check_invariants().unwrap();
    for i in 0..m.n_triangles() {
        let f = m.sizing_of_element(i);
        assert!(f >= 0.1 && f <= 0.9, "sizing {f}");
    }
    assert_eq!(m, uniform_initial_mesh(&lshape(), 0.3).unwrap());
}

#[test]
fn constant_sizing_adherence() {
    let cfg = MesherConfig::default();
    for h in [0.2, 0.07, 0.03] {
        let m = generate(&lshape(), &SizingQuery::constant(h).unwrap(), &cfg).unwrap();
        let bad = (0..m.n_triangles())
            .filter(|&i| {
                let r = m.sizing_of_element(i) / h;
                !(1.0 / 3.0..=3.0).contains(&r)
            })
            .count();
        assert!(bad as f64 <= 0.02 * m.n_triangles() as f64);
    }
}

fn random_field(carrier: &TriMesh, seed: u64) -> ElementField {
    let mut rng = seeded(seed);
    let values = (0..carrier.n_triangles()).map(|_| 10f64.powf(rng.random_range(-1.6..-0.8))).collect();
    ElementField::new(carrier, values).unwrap()
}

#[test]
fn random_fields_on_lshapes() {
    let cfg = MesherConfig::default();
    let mut rng = seeded(5);
    for k in 0..4 {
        let domain = sample_lshape(&mut rng);
        let carrier = uniform_initial_mesh(&domain, 0.2).unwrap();
        let q = SizingQuery::field(&carrier, &random_field(&carrier, k), 0.01).unwrap();
        let m = generate(&domain, &q, &cfg).unwrap();
        m.check_invariants().unwrap();
        assert_boundary_on_polygon(&m, &domain);
        assert!((m.total_area() - domain.signed_area()).abs() < 1e-10);
        let graded = q.graded(cfg.gradation).unwrap();
        let bad = (0..m.n_triangles())
            .filter(|&i| {
                let r = m.sizing_of_element(i) / graded.eval(m.element_midpoint(i));
                !(1.0 / 3.0..=3.0).contains(&r) || m.min_angle_deg(i) < cfg.min_angle
            })
            .count();
        assert!(bad as f64 <= 0.02 * m.n_triangles() as f64, "{bad} of {}", m.n_triangles());
    }
}

#[test]
fn sizing_query_lookup() {
    let q = SizingQuery::constant(0.1).unwrap();
    assert_eq!(q.eval_raw(Point2::new(7.0, -3.0)), 0.1);
    assert_eq!(eval_sizing(&q, 0.3, Point2::new(0.2, 0.2)).unwrap(), 0.1);

    let carrier = structured_square(2, Point2::new(0.0, 0.0), 1.0);
    let mut values = vec![0.2; carrier.n_triangles()];
    values[3] = 0.05;
    values[5] = 1e-6;
    let f = ElementField::new(&carrier, values).unwrap();
    let q = SizingQuery::field(&carrier, &f, 0.01).unwrap();
    assert_eq!(q.eval_raw(carrier.element_midpoint(3)), 0.05);
    assert_eq!(q.eval_raw(carrier.element_midpoint(5)), 0.01);
    // outside the carrier falls back to the nearest centroid
    assert_eq!(q.eval_raw(Point2::new(2.0, 2.0)), q.eval_raw(carrier.element_midpoint(7)));

    assert!(SizingQuery::constant(0.0).is_err());
    assert!(SizingQuery::field(&carrier, &f, 0.0).is_err());
}

#[test]
fn gradation_is_lipschitz() {
    let carrier = crate::mesh::tests::jittered_grid(8, 3);
    let f = random_field(&carrier, 9);
    let q = SizingQuery::field(&carrier, &f, 0.01).unwrap();
    let g = 0.3;
    let graded = q.graded(g).unwrap();
    let mids = carrier.midpoints();
    for (i, j) in carrier.adjacency().unwrap() {
        let (si, sj) = (graded.eval(mids[i]), graded.eval(mids[j]));
        assert!((si - sj).abs() <= g * mids[i].dist(mids[j]) + 1e-15);
    }
    for i in 0..carrier.n_triangles() {
        assert!(graded.eval(mids[i]) <= f.values[i].max(0.01));
    }
}

#[test]
fn element_cap_is_enforced() {
    let cfg = MesherConfig { max_elements: 100, ..MesherConfig::default() };
    let err = generate(&unit_square(), &SizingQuery::constant(0.02).unwrap(), &cfg).unwrap_err();
    assert!(matches!(err, AmberError::ElementCap { cap: 100 }));
}

#[test]
fn invalid_config_rejected() {
    let q = SizingQuery::constant(0.2).unwrap();
    for cfg in [
        MesherConfig { min_angle: 30.0, ..Default::default() },
        MesherConfig { min_angle: 0.0, ..Default::default() },
        MesherConfig { gradation: 0.0, ..Default::default() },
    ] {
        assert!(generate(&unit_square(), &q, &cfg).is_err());
    }
}

#[test]
fn remeshing_own_sizing_is_stable() {
    let cfg = MesherConfig::default();
    let mut rng = seeded(21);
    for k in 0..3 {
        let domain = sample_lshape(&mut rng);
        let carrier = uniform_initial_mesh(&domain, 0.2).unwrap();
        let q = SizingQuery::field(&carrier, &random_field(&carrier, 100 + k), 0.01).unwrap();
        let m = generate(&domain, &q, &cfg).unwrap();
        let own = SizingQuery::field(&m, &m.induced_sizing_field(), 1e-4).unwrap();
        let again = generate(&domain, &own, &cfg).unwrap();
        let change = (again.n_triangles() as f64 / m.n_triangles() as f64 - 1.0).abs();
        assert!(change < 0.3, "{} -> {}", m.n_triangles(), again.n_triangles());
    }
}

#[test]
fn smoothing_all_boundary_mesh_is_identity() {
    let m = structured_square(1, Point2::new(0.0, 0.0), 1.0);
    assert_eq!(laplacian_smooth(&m, 5), m);
}

#[test]
fn smoothing_fixed_point() {
    // regular grid: every interior vertex already sits at its ring average
    // under the grid's hexagonal connectivity
    let m = structured_square(4, Point2::new(0.0, 0.0), 1.0);
    let s = laplacian_smooth(&m, 3);
    for (p, q) in m.vertices().iter().zip(s.vertices()) {
        assert!(p.dist(*q) < 1e-12);
    }
}

#[test]
fn smoothing_keeps_positive_area() {
    let m = crate::mesh::tests::jittered_grid(10, 4);
    let s = laplacian_smooth(&m, 10);
    assert_eq!(s.triangles(), m.triangles());
    for i in 0..s.n_triangles() {
        assert!(s.element_volume(i) > 0.0);
    }
    for v in 0..m.n_vertices() {
        if m.is_boundary_vertex(v) {
            assert_eq!(m.vertices()[v], s.vertices()[v]);
        }
    }
}
