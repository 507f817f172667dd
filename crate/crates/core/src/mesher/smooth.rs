use crate::mesh::{signed_area, TriMesh, MIN_AREA};

const DAMPING: f64 = 0.5;

/// Damped Laplacian smoothing of interior vertices.
///
/// Targets are computed from the positions at the start of each sweep; a
/// vertex keeps its old position if the move would push any incident
/// triangle to an area at or below [`MIN_AREA`].
pub fn laplacian_smooth(mesh: &TriMesh, iters: usize) -> TriMesh {
    if iters == 0 {
        return mesh.clone();
    }
    let ring = mesh.vertex_neighbors();
    let incident = mesh.vertex_triangles();
    let tris = mesh.triangles();
    let mut pos = mesh.vertices().to_vec();
    for _ in 0..iters {
        let old = pos.clone();
        for v in 0..pos.len() {
            if mesh.is_boundary_vertex(v) || ring[v].is_empty() {
                continue;
            }
            let mut avg = old[ring[v][0]] * 0.0;
            for &u in &ring[v] {
                avg = avg + old[u];
            }
            avg = avg * (1.0 / ring[v].len() as f64);
            let target = old[v] + (avg - old[v]) * DAMPING;
            let prev = pos[v];
            pos[v] = target;
            let ok = incident[v].iter().all(|&t| {
                let [a, b, c] = tris[t];
                signed_area(pos[a], pos[b], pos[c]) > MIN_AREA
            });
            if !ok {
                pos[v] = prev;
            }
        }
    }
    mesh.with_vertices(pos).expect("smoothing keeps every triangle valid")
}
