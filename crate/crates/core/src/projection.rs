//! Sizing labels for an intermediate mesh, projected from an expert mesh.

use serde::{Deserialize, Serialize};

use crate::error::{AmberError, Result};
use crate::mesh::{ElementField, TriMesh};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregator {
    Mean,
    Max,
}

impl std::str::FromStr for Aggregator {
    type Err = AmberError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Aggregator::Mean),
            "max" => Ok(Aggregator::Max),
            other => Err(AmberError::InvalidInput(format!("unknown aggregator {other:?}"))),
        }
    }
}

/// Label for each element of `inter`.
///
/// Every expert element is assigned to the intermediate element containing
/// its midpoint (nearest centroid if none does); assigned sizing values are
/// averaged or maximised. Elements that receive nothing take the sizing of
/// the expert element at their own centroid, again with a nearest-centroid
/// fallback.
pub fn project_expert_sizing(inter: &TriMesh, expert: &TriMesh, agg: Aggregator) -> Result<ElementField> {
    if expert.is_empty() {
        return Err(AmberError::InvalidInput("expert mesh is empty".into()));
    }
    if inter.is_empty() {
        return Err(AmberError::InvalidInput("intermediate mesh is empty".into()));
    }
    let expert_sizing = expert.induced_sizing_field().values;
    let n = inter.n_triangles();
    let mut sum = vec![0.0; n];
    let mut max = vec![f64::NEG_INFINITY; n];
    let mut count = vec![0usize; n];
    for (j, &f) in expert_sizing.iter().enumerate() {
        let i = inter.locate_or_nearest(expert.element_midpoint(j)).expect("non-empty mesh");
        sum[i] += f;
        max[i] = max[i].max(f);
        count[i] += 1;
    }
    let values = (0..n)
        .map(|i| {
            if count[i] == 0 {
                let j = expert.locate_or_nearest(inter.element_midpoint(i)).expect("non-empty mesh");
                expert_sizing[j]
            } else {
                match agg {
                    // the clamp only absorbs summation round-off
                    Aggregator::Mean => (sum[i] / count[i] as f64).min(max[i]),
                    Aggregator::Max => max[i],
                }
            }
        })
        .collect();
    ElementField::new(inter, values)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelStats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

pub fn label_statistics(field: &ElementField) -> Result<LabelStats> {
    if field.is_empty() {
        return Err(AmberError::InvalidInput("empty field".into()));
    }
    let v = &field.values;
    Ok(LabelStats {
        min: v.iter().copied().fold(f64::INFINITY, f64::min),
        max: v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        mean: v.iter().sum::<f64>() / v.len() as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::rgb_refine;
    use crate::geometry::Point2;
    use crate::mesh::structured_square;
    use crate::mesh::tests::jittered_grid;
    use crate::rng::seeded;
    use rand::Rng;

    #[test]
    fn identity_projection() {
        for seed in 0..5 {
            let m = jittered_grid(4 + seed as usize, seed);
            let own = m.induced_sizing_field();
            for agg in [Aggregator::Mean, Aggregator::Max] {
                assert_eq!(project_expert_sizing(&m, &m, agg).unwrap(), own);
            }
        }
    }

    #[test]
    fn coarse_element_aggregates_contained_values() {
        // a fan of four triangles under a common apex with sizing 1, 2, 3, 4,
        // tiling one coarse triangle
        let h = 2.0;
        let mut xs = vec![0.0];
        for f in [1.0f64, 2.0, 3.0, 4.0] {
            let area = crate::mesh::area_from_sizing(f);
            xs.push(xs.last().unwrap() + 2.0 * area / h);
        }
        let w = *xs.last().unwrap();
        let mut verts: Vec<Point2> = xs.iter().map(|&x| Point2::new(x, 0.0)).collect();
        verts.push(Point2::new(0.0, h));
        let fan = TriMesh::new(verts, (0..4).map(|k| [k, k + 1, 5]).collect()).unwrap();
        let coarse = TriMesh::new(
            vec![Point2::new(0.0, 0.0), Point2::new(w, 0.0), Point2::new(0.0, h)],
            vec![[0, 1, 2]],
        )
        .unwrap();
        let mean = project_expert_sizing(&coarse, &fan, Aggregator::Mean).unwrap();
        let max = project_expert_sizing(&coarse, &fan, Aggregator::Max).unwrap();
        assert!((mean.values[0] - 2.5).abs() < 1e-12);
        assert!((max.values[0] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn empty_expert_rejected() {
        let e = TriMesh::new(vec![], vec![]).unwrap();
        let m = structured_square(2, Point2::new(0.0, 0.0), 1.0);
        assert!(project_expert_sizing(&m, &e, Aggregator::Mean).is_err());
    }

    #[test]
    fn fallback_for_empty_elements() {
        // a fine intermediate mesh under a single coarse expert element: most
        // intermediate elements receive no midpoint and copy the expert value
        let expert = structured_square(1, Point2::new(0.0, 0.0), 1.0);
        let inter = structured_square(4, Point2::new(0.0, 0.0), 1.0);
        let p = project_expert_sizing(&inter, &expert, Aggregator::Max).unwrap();
        let f = expert.sizing_of_element(0);
        assert!(p.values.iter().all(|&v| (v - f).abs() < 1e-15));
    }

    #[test]
    fn midpoints_outside_go_to_nearest() {
        let expert = structured_square(4, Point2::new(0.0, 0.0), 1.0);
        let inter = structured_square(2, Point2::new(0.0, 0.0), 0.5);
        let p = project_expert_sizing(&inter, &expert, Aggregator::Mean).unwrap();
        assert!(p.values.iter().all(|v| v.is_finite() && *v > 0.0));
        // everything lands somewhere: the max over all labels equals the
        // largest expert sizing
        let x = project_expert_sizing(&inter, &expert, Aggregator::Max).unwrap();
        let top = expert.induced_sizing_field().values.iter().copied().fold(0.0, f64::max);
        assert!(x.values.iter().any(|&v| v == top));
    }

    #[test]
    fn max_dominates_mean_and_nested_refinement_reduces() {
        let mut rng = seeded(4);
        for seed in 0..10 {
            let coarse = jittered_grid(3, seed);
            let marked: Vec<usize> = (0..coarse.n_triangles()).filter(|_| rng.random::<f64>() < 0.5).collect();
            let fine = rgb_refine(&rgb_refine(&coarse, &marked).unwrap(), &[0, 1, 2]).unwrap();
            let mean = project_expert_sizing(&coarse, &fine, Aggregator::Mean).unwrap();
            let max = project_expert_sizing(&coarse, &fine, Aggregator::Max).unwrap();
            for i in 0..coarse.n_triangles() {
                assert!(max.values[i] >= mean.values[i]);
                assert!(mean.values[i] <= coarse.sizing_of_element(i) + 1e-12);
            }
        }
    }

    #[test]
    fn permutation_of_expert_elements() {
        let inter = jittered_grid(3, 1);
        let expert = jittered_grid(7, 2);
        let mut perm: Vec<usize> = (0..expert.n_triangles()).collect();
        let mut rng = seeded(3);
        for i in (1..perm.len()).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        let shuffled =
            TriMesh::new(expert.vertices().to_vec(), perm.iter().map(|&t| expert.triangles()[t]).collect()).unwrap();
        for agg in [Aggregator::Mean, Aggregator::Max] {
            let a = project_expert_sizing(&inter, &expert, agg).unwrap();
            let b = project_expert_sizing(&inter, &shuffled, agg).unwrap();
            for (x, y) in a.values.iter().zip(&b.values) {
                assert!((x - y).abs() <= 1e-15 * x.abs());
            }
        }
    }

    #[test]
    fn statistics() {
        let m = structured_square(1, Point2::new(0.0, 0.0), 1.0);
        let s = label_statistics(&ElementField { values: vec![1.0, 3.0], mesh_id: m.id() }).unwrap();
        assert_eq!((s.min, s.max, s.mean), (1.0, 3.0, 2.0));
        let one = label_statistics(&ElementField { values: vec![0.7], mesh_id: 0 }).unwrap();
        assert_eq!((one.min, one.max, one.mean), (0.7, 0.7, 0.7));
        let c = label_statistics(&ElementField { values: vec![2.0; 5], mesh_id: 0 }).unwrap();
        assert_eq!((c.min, c.max, c.mean), (2.0, 2.0, 2.0));
        assert!(label_statistics(&ElementField { values: vec![], mesh_id: 0 }).is_err());
    }
}
