use crate::error::{AmberError, Result};
use crate::mesh::TriMesh;

/// Local index `k` of each element's reference edge (the edge opposite
/// vertex `k`): its longest edge, ties to the smaller sorted vertex pair.
pub fn reference_edges(mesh: &TriMesh) -> Vec<usize> {
    mesh.triangles()
        .iter()
        .enumerate()
        .map(|(t, tri)| {
            let len = mesh.edge_lengths(t);
            let key = |k: usize| sorted(tri[(k + 1) % 3], tri[(k + 2) % 3]);
            (0..3)
                .reduce(|best, k| match len[k].total_cmp(&len[best]) {
                    std::cmp::Ordering::Greater => k,
                    std::cmp::Ordering::Equal if key(k) < key(best) => k,
                    _ => best,
                })
                .unwrap()
        })
        .collect()
}

fn sorted(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Red-green-blue refinement. Marked elements are split red; the closure
/// marks an element's reference edge whenever any of its edges is split,
/// so every element ends up green (reference edge only), blue (reference
/// edge plus one more) or red (all three).
pub fn rgb_refine(mesh: &TriMesh, marked: &[usize]) -> Result<TriMesh> {
    let nt = mesh.n_triangles();
    if let Some(&bad) = marked.iter().find(|&&t| t >= nt) {
        return Err(AmberError::InvalidInput(format!("marked element {bad} out of range")));
    }
    if marked.is_empty() {
        return Ok(mesh.clone());
    }
    let tris = mesh.triangles();
    let edge_key = |t: usize, k: usize| sorted(tris[t][(k + 1) % 3], tris[t][(k + 2) % 3]);

    let mut keys: Vec<(usize, usize)> = (0..nt).flat_map(|t| (0..3).map(move |k| (t, k))).map(|(t, k)| edge_key(t, k)).collect();
    keys.sort_unstable();
    keys.dedup();
    let edge_of: Vec<[usize; 3]> = (0..nt)
        .map(|t| [0, 1, 2].map(|k| keys.binary_search(&edge_key(t, k)).unwrap()))
        .collect();
    let refe = reference_edges(mesh);

    let mut split = vec![false; keys.len()];
    for &t in marked {
        for e in edge_of[t] {
            split[e] = true;
        }
    }
    loop {
        let mut changed = false;
        for t in 0..nt {
            let r = edge_of[t][refe[t]];
            if !split[r] && edge_of[t].iter().any(|&e| split[e]) {
                split[r] = true;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }

    let mut vertices = mesh.vertices().to_vec();
    let mut mid = vec![usize::MAX; keys.len()];
    for (e, &(a, b)) in keys.iter().enumerate() {
        if split[e] {
            mid[e] = vertices.len();
            vertices.push(vertices[a].midpoint(vertices[b]));
        }
    }

    let mut out = Vec::with_capacity(nt + 3 * marked.len());
    for t in 0..nt {
        let v = tris[t];
        let e = edge_of[t];
        let m = |k: usize| if split[e[k]] { Some(mid[e[k]]) } else { None };
        match (m(0), m(1), m(2)) {
            (None, None, None) => out.push(v),
            (Some(m12), Some(m20), Some(m01)) => {
                out.push([v[0], m01, m20]);
                out.push([m01, v[1], m12]);
                out.push([m20, m12, v[2]]);
                out.push([m01, m12, m20]);
            }
            _ => {
                let k = refe[t];
                let (apex, p, q) = (v[k], v[(k + 1) % 3], v[(k + 2) % 3]);
                let mr = m(k).expect("closure marks the reference edge");
                // left child (apex, p, mr) holds edge (apex, p), opposite v[k+2];
                // right child (apex, mr, q) holds edge (q, apex), opposite v[k+1]
                match m((k + 2) % 3) {
                    Some(ml) => {
                        out.push([apex, ml, mr]);
                        out.push([ml, p, mr]);
                    }
                    None => out.push([apex, p, mr]),
                }
                match m((k + 1) % 3) {
                    Some(mq) => {
                        out.push([apex, mr, mq]);
                        out.push([mq, mr, q]);
                    }
                    None => out.push([apex, mr, q]),
                }
            }
        }
    }
    TriMesh::new(vertices, out)
}
