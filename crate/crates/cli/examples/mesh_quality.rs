//! Prints quality metrics of freshly generated preset meshes.

use interfem_cli::presets;
use interfem_cli::runner::Simulation;
use interfem_core::mesh::quality;

fn main() {
    for name in ["relaxation", "droplet-marangoni", "shear", "rising-bubble"] {
        let sc = presets::by_name(name).unwrap();
        let sim = Simulation::new(sc).unwrap();
        let q = quality(&sim.mesh);
        println!(
            "{name:<18} verts={:<6} tris={:<6} min_angle={:.2} area_ratio={:.2} min_area={:.3e}",
            sim.mesh.vertices.len(),
            sim.mesh.triangles.len(),
            q.min_angle_deg,
            q.max_area_ratio,
            q.min_area
        );
    }
}
