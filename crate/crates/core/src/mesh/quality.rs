use super::PolytopalMesh;

/// Mesh regularity parameter `γ_T`: the largest `max_σ h_K/d_{K,σ} + Card(F_K)`
/// over cells plus the largest `d_{K,σ}/d_{L,σ} + d_{L,σ}/d_{K,σ}` over
/// interior faces (zero when there are none).
pub fn regularity_gamma(mesh: &PolytopalMesh) -> f64 {
    let cell_term = mesh
        .cells
        .iter()
        .map(|c| {
            let flat = c
                .face_distances
                .iter()
                .map(|&d| c.diameter / d)
                .fold(0.0, f64::max);
            flat + c.n_faces() as f64
        })
        .fold(0.0, f64::max);
    let face_term = mesh
        .faces
        .iter()
        .filter(|f| f.sides.len() == 2)
        .map(|f| {
            let (dk, dl) = (f.sides[0].distance, f.sides[1].distance);
            dk / dl + dl / dk
        })
        .fold(0.0, f64::max);
    cell_term + face_term
}

/// Smallest ratio `inradius(D_{K,σ}) / h_K` over all pyramids of all cells.
pub fn estimate_rho(mesh: &PolytopalMesh) -> f64 {
    (0..mesh.n_cells())
        .flat_map(|c| {
            let h = mesh.cells[c].diameter;
            mesh.pyramids(c).map(move |p| p.inradius() / h)
        })
        .fold(f64::INFINITY, f64::min)
}
