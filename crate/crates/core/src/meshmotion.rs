//! Propagates interface displacement into the bulk mesh by a weighted
//! elastic equation and produces the ALE mesh velocity and per-triangle
//! step Jacobians.

use thiserror::Error;

use crate::fem::tri_geom;
use crate::geometry::Point;
use crate::linalg::{CachedLu, LinalgError};
use crate::mesh::{FittedMesh, MeshMotionRecord, RectSide};

#[derive(Debug, Error)]
pub enum MotionError {
    #[error("interface displacement list does not match mesh interfaces")]
    DisplacementShape,
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Per-triangle stiffening weight `1 + (max|o| - min|o|) / |o|`: small
/// elements are made stiffer so they distort less.
pub fn stiffness_weight(mesh: &FittedMesh) -> Vec<f64> {
    let areas: Vec<f64> = (0..mesh.triangles.len()).map(|t| mesh.tri_area(t)).collect();
    let max = areas.iter().cloned().fold(f64::MIN, f64::max);
    let min = areas.iter().cloned().fold(f64::MAX, f64::min);
    areas.iter().map(|a| 1.0 + (max - min) / a).collect()
}

/// Elastic mesh-displacement solver with a cached factorization pattern;
/// valid while the mesh connectivity is unchanged.
pub struct ElasticSolver {
    pattern: Vec<(usize, usize)>,
    lu: CachedLu,
    /// Constrained dof -> fixed (slave dofs of periodic pairs are mapped).
    constrained: Vec<bool>,
    remap: Vec<usize>,
    n_dofs: usize,
}

impl ElasticSolver {
    pub fn new(mesh: &FittedMesh) -> Result<Self, MotionError> {
        let nv = mesh.vertices.len();
        let n_dofs = 2 * nv;

        // Periodic identification: slave dofs redirect to their master.
        let mut remap: Vec<usize> = (0..n_dofs).collect();
        for &(slave, master) in &mesh.periodic_vertex_pairs {
            remap[2 * slave] = 2 * master;
            remap[2 * slave + 1] = 2 * master + 1;
        }

        let mut constrained = vec![false; n_dofs];
        for iface in &mesh.interfaces {
            for &v in &iface.verts {
                constrained[2 * v] = true;
                constrained[2 * v + 1] = true;
            }
        }
        // Zero normal displacement on the outer rectangle; on a periodic
        // seam the x component is pinned so the seam stays straight.
        for side in [RectSide::Left, RectSide::Right, RectSide::Bottom, RectSide::Top] {
            let comp = match side {
                RectSide::Left | RectSide::Right => 0,
                RectSide::Bottom | RectSide::Top => 1,
            };
            for v in mesh.side_vertices(side) {
                constrained[remap[2 * v + comp]] = true;
            }
        }

        let mut pattern = Vec::new();
        for t in &mesh.triangles {
            for a in 0..3 {
                for i in 0..2 {
                    let row = remap[2 * t.v[a] + i];
                    for b in 0..3 {
                        for j in 0..2 {
                            let col = remap[2 * t.v[b] + j];
                            pattern.push((row, col));
                        }
                    }
                }
            }
        }
        // Identity rows for constrained dofs and slave-tie rows.
        for d in 0..n_dofs {
            if constrained[d] && remap[d] == d {
                pattern.push((d, d));
            }
        }
        for &(slave, master) in &mesh.periodic_vertex_pairs {
            for c in 0..2 {
                pattern.push((2 * slave + c, 2 * slave + c));
                pattern.push((2 * slave + c, 2 * master + c));
            }
        }
        let lu = CachedLu::new(n_dofs, &pattern)?;
        Ok(ElasticSolver {
            pattern,
            lu,
            constrained,
            remap,
            n_dofs,
        })
    }

    /// Solves `2 (lambda D(phi), D(psi)) + (lambda div phi, div psi) = 0`
    /// with `phi` equal to the given displacement on every interface vertex
    /// and `phi . n = 0` on the outer boundary, then forms the mesh velocity
    /// `w = phi / dt` and the per-triangle Jacobian of the backward-in-time
    /// map, `det(I - dt grad w)`.
    pub fn solve(
        &self,
        mesh: &FittedMesh,
        interface_disp: &[Vec<Point>],
        dt: f64,
    ) -> Result<MeshMotionRecord, MotionError> {
        if interface_disp.len() != mesh.interfaces.len()
            || interface_disp
                .iter()
                .zip(&mesh.interfaces)
                .any(|(d, i)| d.len() != i.verts.len())
        {
            return Err(MotionError::DisplacementShape);
        }

        let weights = stiffness_weight(mesh);
        let mut fixed_value = vec![0.0f64; self.n_dofs];
        for (iface, disp) in mesh.interfaces.iter().zip(interface_disp) {
            for (&v, d) in iface.verts.iter().zip(disp) {
                fixed_value[2 * v] = d[0];
                fixed_value[2 * v + 1] = d[1];
            }
        }

        let mut values = Vec::with_capacity(self.pattern.len());
        let mut rhs = vec![0.0f64; self.n_dofs];
        let mut idx = 0usize;
        for (ti, t) in mesh.triangles.iter().enumerate() {
            let p = [
                mesh.vertices[t.v[0]],
                mesh.vertices[t.v[1]],
                mesh.vertices[t.v[2]],
            ];
            let geom = tri_geom(p);
            let lam = weights[ti];
            let scale = lam * geom.area;
            for a in 0..3 {
                for i in 0..2 {
                    let row = self.remap[2 * t.v[a] + i];
                    let row_constrained = self.constrained[row];
                    for b in 0..3 {
                        for j in 0..2 {
                            let col = self.remap[2 * t.v[b] + j];
                            let ga = geom.grad_l[a];
                            let gb = geom.grad_l[b];
                            // 2 lambda D(phi):D(psi) + lambda (div phi)(div psi)
                            let mut v = scale
                                * (if i == j { ga[0] * gb[0] + ga[1] * gb[1] } else { 0.0 }
                                    + gb[i] * ga[j]
                                    + gb[j] * ga[i]);
                            if row_constrained {
                                v = 0.0;
                            } else if self.constrained[col] {
                                // Move the known column to the right-hand side.
                                rhs[row] -= v * fixed_value[col];
                                v = 0.0;
                            }
                            values.push(v);
                            idx += 1;
                        }
                    }
                }
            }
        }
        for d in 0..self.n_dofs {
            if self.constrained[d] && self.remap[d] == d {
                values.push(1.0);
                rhs[d] = fixed_value[d];
                idx += 1;
            }
        }
        for &(slave, _master) in &mesh.periodic_vertex_pairs {
            for c in 0..2 {
                let d = 2 * slave + c;
                values.push(1.0);
                values.push(-1.0);
                rhs[d] = 0.0;
                idx += 2;
            }
        }
        debug_assert_eq!(idx, self.pattern.len());

        let sol = self.lu.solve(&values, &rhs)?;
        let mut displacement = vec![[0.0f64; 2]; mesh.vertices.len()];
        for v in 0..mesh.vertices.len() {
            displacement[v] = [sol[self.remap[2 * v]], sol[self.remap[2 * v + 1]]];
        }
        // Exactness of the interface constraint.
        for (iface, disp) in mesh.interfaces.iter().zip(interface_disp) {
            for (&v, d) in iface.verts.iter().zip(disp) {
                displacement[v] = *d;
            }
        }

        let inv_dt = 1.0 / dt;
        let velocity: Vec<Point> = displacement
            .iter()
            .map(|d| [d[0] * inv_dt, d[1] * inv_dt])
            .collect();
        let jacobian = step_jacobian(mesh, &displacement, dt, &velocity);
        Ok(MeshMotionRecord {
            displacement,
            velocity,
            jacobian,
            dt,
        })
    }
}

/// `det(I - dt grad w)` per triangle, with `grad w` computed on the moved
/// mesh; this equals the (signed) old-to-new area ratio of the element.
fn step_jacobian(
    mesh: &FittedMesh,
    displacement: &[Point],
    dt: f64,
    velocity: &[Point],
) -> Vec<f64> {
    let new_pos: Vec<Point> = mesh
        .vertices
        .iter()
        .zip(displacement)
        .map(|(p, d)| [p[0] + d[0], p[1] + d[1]])
        .collect();
    mesh.triangles
        .iter()
        .map(|t| {
            let p = [new_pos[t.v[0]], new_pos[t.v[1]], new_pos[t.v[2]]];
            let geom = tri_geom(p);
            let mut grad_w = [[0.0f64; 2]; 2];
            for k in 0..3 {
                let w = velocity[t.v[k]];
                for i in 0..2 {
                    for j in 0..2 {
                        grad_w[i][j] += w[i] * geom.grad_l[k][j];
                    }
                }
            }
            let a = 1.0 - dt * grad_w[0][0];
            let b = -dt * grad_w[0][1];
            let c = -dt * grad_w[1][0];
            let d = 1.0 - dt * grad_w[1][1];
            a * d - b * c
        })
        .collect()
}

/// One-shot convenience wrapper around [`ElasticSolver`].
pub fn solve_elastic_displacement(
    mesh: &FittedMesh,
    interface_disp: &[Vec<Point>],
    dt: f64,
) -> Result<MeshMotionRecord, MotionError> {
    ElasticSolver::new(mesh)?.solve(mesh, interface_disp, dt)
}

/// Divergence of the mesh velocity per triangle (for consistency checks of
/// the Jacobian expansion).
pub fn velocity_divergence(mesh: &FittedMesh, record: &MeshMotionRecord) -> Vec<f64> {
    let new_pos: Vec<Point> = mesh
        .vertices
        .iter()
        .zip(&record.displacement)
        .map(|(p, d)| [p[0] + d[0], p[1] + d[1]])
        .collect();
    mesh.triangles
        .iter()
        .map(|t| {
            let p = [new_pos[t.v[0]], new_pos[t.v[1]], new_pos[t.v[2]]];
            let geom = tri_geom(p);
            let mut div = 0.0;
            for k in 0..3 {
                let w = record.velocity[t.v[k]];
                div += w[0] * geom.grad_l[k][0] + w[1] * geom.grad_l[k][1];
            }
            div
        })
        .collect()
}
