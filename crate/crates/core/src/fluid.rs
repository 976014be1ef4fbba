//! One time step of the coupled discrete fluid-interface system: velocity,
//! pressure, new interface positions, and curvature are solved together,
//! with Picard iteration on the time-weighted normals.
//!
//! Bulk elements are Taylor-Hood (quadratic velocity, continuous-linear plus
//! piecewise-constant pressure with a mean-zero gauge); the interface
//! carries linear nodal position and curvature fields tied to the bulk by
//! the kinematic row (mass-lumped, time-weighted normal) and the
//! curvature row. The interface force uses the current edge normals.

use std::sync::Arc;

use crate::fem::{edge_gauss3, p2_grads, p2_shapes, tri_geom, P2Connectivity};
use crate::geometry::{self, Point};
use crate::linalg::{FrozenLu, LinalgError, SparseSystem};
use crate::mesh::{FittedMesh, MeshMotionRecord, RectSide};
use crate::params::DimensionlessParams;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FluidError {
    #[error("surface tension non-positive (min gamma = {0}); aborting")]
    GammaNonPositive(f64),
    #[error("Picard iteration did not converge in {max_iter} iterations (last change {last_delta})")]
    PicardMaxIter { max_iter: usize, last_delta: f64 },
    #[error("interface edge degenerated during the step")]
    DegenerateEdge,
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Prescribed velocity on a boundary side.
#[derive(Clone)]
pub enum VelocityBc {
    /// u = 0.
    NoSlip,
    /// u = g(x, y).
    Dirichlet(VectorField),
    /// u . n = 0, tangential traction-free.
    Slip,
    /// Natural (stress-free) boundary.
    StressFree,
    /// Identified with the opposite side.
    Periodic,
}

#[derive(Clone)]
pub struct VectorField(pub Arc<dyn Fn(f64, f64) -> [f64; 2] + Send + Sync>);

impl VectorField {
    pub fn eval(&self, x: f64, y: f64) -> [f64; 2] {
        (self.0)(x, y)
    }
}

impl std::fmt::Debug for VelocityBc {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            VelocityBc::NoSlip => "NoSlip",
            VelocityBc::Dirichlet(_) => "Dirichlet",
            VelocityBc::Slip => "Slip",
            VelocityBc::StressFree => "StressFree",
            VelocityBc::Periodic => "Periodic",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone)]
pub struct FluidBc {
    pub left: VelocityBc,
    pub right: VelocityBc,
    pub bottom: VelocityBc,
    pub top: VelocityBc,
}

impl FluidBc {
    fn side(&self, s: RectSide) -> &VelocityBc {
        match s {
            RectSide::Left => &self.left,
            RectSide::Right => &self.right,
            RectSide::Bottom => &self.bottom,
            RectSide::Top => &self.top,
        }
    }

    pub fn has_stress_free(&self) -> bool {
        [&self.left, &self.right, &self.bottom, &self.top]
            .iter()
            .any(|b| matches!(b, VelocityBc::StressFree))
    }
}

/// Velocity and pressure coefficients on the current mesh. The pressure
/// vector stores the continuous-linear nodal part first, then one constant
/// per triangle.
#[derive(Debug, Clone)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FluidState {
    pub velocity: Vec<f64>,
    pub pressure: Vec<f64>,
    pub max_velocity: f64,
}

impl FluidState {
    pub fn zero(p2: &P2Connectivity, n_triangles: usize) -> Self {
        FluidState {
            velocity: vec![0.0; 2 * p2.n_nodes],
            pressure: vec![0.0; p2.n_vertices + n_triangles],
            max_velocity: 0.0,
        }
    }
}

/// Solution of one coupled step.
#[derive(Debug, Clone)]
pub struct CoupledUnknowns {
    pub fluid: FluidState,
    /// New interface vertex positions, per interface.
    pub positions: Vec<Vec<Point>>,
    /// Curvature nodal values, per interface.
    pub curvature: Vec<Vec<f64>>,
    pub picard_iterations: usize,
}

/// Inputs of one fluid step on mesh `T^m`.
pub struct FluidStepInputs<'a> {
    pub mesh: &'a FittedMesh,
    pub p2: &'a P2Connectivity,
    /// Previous velocity coefficients, reinterpreted on the current mesh
    /// (the coefficient-preserving ALE pullback).
    pub u_prev: &'a [f64],
    /// Motion that produced the current mesh (velocity `w^m`, Jacobian `J^m`).
    pub motion: &'a MeshMotionRecord,
    /// Surface tension nodal values per interface.
    pub gamma: &'a [Vec<f64>],
    pub params: &'a DimensionlessParams,
    pub dt: f64,
    /// Clamp non-positive surface tension at 1e-3 instead of aborting.
    pub clamp_gamma: bool,
    /// Optional warm start for the Picard iteration (extrapolated new
    /// interface positions).
    pub predicted_positions: Option<&'a [Vec<Point>]>,
}

trait Emitter {
    fn entry(&mut self, r: usize, c: usize, v: f64);
    fn rhs(&mut self, r: usize, v: f64);
}

struct StructurePass {
    pattern: Vec<(usize, usize)>,
}

impl Emitter for StructurePass {
    fn entry(&mut self, r: usize, c: usize, _v: f64) {
        self.pattern.push((r, c));
    }
    fn rhs(&mut self, _r: usize, _v: f64) {}
}

struct ValuePass<'a> {
    values: &'a mut Vec<f64>,
    rhs: &'a mut [f64],
}

impl Emitter for ValuePass<'_> {
    fn entry(&mut self, _r: usize, _c: usize, v: f64) {
        self.values.push(v);
    }
    fn rhs(&mut self, r: usize, v: f64) {
        self.rhs[r] += v;
    }
}

/// Coupled Taylor-Hood/interface solver with cached dof layout, boundary
/// conditions, and factorization pattern; valid while mesh connectivity is
/// unchanged.
pub struct FluidSolver {
    bc: FluidBc,
    n_u: usize,
    off_p1: usize,
    off_p0: usize,
    off_gauge: usize,
    use_lambda_gauge: bool,
    /// P0 dof pinned to zero to fix the S1/S0 representation redundancy
    /// (its divergence row is implied exactly by the remaining rows).
    pinned_p0: usize,
    off_x: Vec<usize>,
    off_kappa: Vec<usize>,
    n_total: usize,
    remap: Vec<usize>,
    /// Constrained velocity dofs (on remapped indices).
    constrained: Vec<bool>,
    slave_u: Vec<(usize, usize)>,
    slave_p1: Vec<(usize, usize)>,
    pattern_static_len: usize,
    lu: FrozenLu,
}

impl FluidSolver {
    pub fn new(mesh: &FittedMesh, p2: &P2Connectivity, bc: FluidBc) -> Result<Self, FluidError> {
        let n_u = 2 * p2.n_nodes;
        let off_p1 = n_u;
        let off_p0 = off_p1 + mesh.vertices.len();
        let off_gauge = off_p0 + mesh.triangles.len();
        let use_lambda_gauge = !bc.has_stress_free();
        let n_gauge = if use_lambda_gauge { 1 } else { 0 };
        let mut next = off_gauge + n_gauge;
        // Pin the constant of the element-wise pressure part on a triangle
        // of the exterior region.
        let pinned_p0 = off_p0
            + mesh
                .triangles
                .iter()
                .position(|t| t.region == 0)
                .unwrap_or(0);
        let mut off_x = Vec::new();
        let mut off_kappa = Vec::new();
        for iface in &mesh.interfaces {
            off_x.push(next);
            next += 2 * iface.verts.len();
            off_kappa.push(next);
            next += iface.verts.len();
        }
        let n_total = next;

        let mut remap: Vec<usize> = (0..n_total).collect();
        let mut slave_u = Vec::new();
        let mut slave_p1 = Vec::new();
        for &(slave, master) in &mesh.periodic_vertex_pairs {
            for c in 0..2 {
                remap[2 * slave + c] = 2 * master + c;
                slave_u.push((2 * slave + c, 2 * master + c));
            }
            remap[off_p1 + slave] = off_p1 + master;
            slave_p1.push((off_p1 + slave, off_p1 + master));
        }
        for &((la, lb), (ra, rb)) in &mesh.periodic_edge_pairs {
            let (Some(lm), Some(rm)) = (p2.midpoint_node(la, lb), p2.midpoint_node(ra, rb)) else {
                continue;
            };
            for c in 0..2 {
                remap[2 * rm + c] = 2 * lm + c;
                slave_u.push((2 * rm + c, 2 * lm + c));
            }
        }

        let mut constrained = vec![false; n_total];
        let mut mark = |d: usize, remap: &Vec<usize>, constrained: &mut Vec<bool>| {
            constrained[remap[d]] = true;
        };
        for side in [RectSide::Left, RectSide::Right, RectSide::Bottom, RectSide::Top] {
            let comps: &[usize] = match bc.side(side) {
                VelocityBc::NoSlip | VelocityBc::Dirichlet(_) => &[0, 1],
                VelocityBc::Slip => match side {
                    RectSide::Left | RectSide::Right => &[0],
                    RectSide::Bottom | RectSide::Top => &[1],
                },
                VelocityBc::StressFree | VelocityBc::Periodic => &[],
            };
            if comps.is_empty() {
                continue;
            }
            for node in side_p2_nodes(mesh, p2, side) {
                for &c in comps {
                    mark(2 * node + c, &remap, &mut constrained);
                }
            }
        }

        let mut solver = FluidSolver {
            bc,
            n_u,
            off_p1,
            off_p0,
            off_gauge,
            use_lambda_gauge,
            pinned_p0,
            off_x,
            off_kappa,
            n_total,
            remap,
            constrained,
            slave_u,
            slave_p1,
            pattern_static_len: 0,
            lu: FrozenLu::new(1, &[(0, 0)])?,
        };

        let mut stat = StructurePass { pattern: Vec::new() };
        let dummy = DummyStepData::build(mesh, p2);
        solver.assemble_static(&dummy, &mut stat);
        solver.pattern_static_len = stat.pattern.len();
        solver.assemble_kinematic(&dummy, &dummy.x_init, &mut stat);
        solver.lu = FrozenLu::new(n_total, &stat.pattern)?;
        Ok(solver)
    }

    pub fn n_total(&self) -> usize {
        self.n_total
    }

    /// (solves, refinement steps, refactorizations) since construction.
    pub fn solver_stats(&self) -> (usize, usize, usize) {
        (self.lu.solves, self.lu.refinement_steps, self.lu.refactorizations)
    }

    /// Assembles the full system (both phases) into a [`SparseSystem`]; used
    /// for inspection and tests. `x_iter` supplies the tentative new
    /// interface positions for the time-weighted normals.
    pub fn assemble_system(
        &self,
        inputs: &FluidStepInputs<'_>,
        x_iter: &[Vec<Point>],
    ) -> Result<SparseSystem, FluidError> {
        let data = StepData::build(self, inputs)?;
        let mut stat = StructurePass { pattern: Vec::new() };
        self.assemble_static(&data, &mut stat);
        self.assemble_kinematic(&data, x_iter, &mut stat);
        let mut values = Vec::with_capacity(stat.pattern.len());
        let mut rhs = vec![0.0; self.n_total];
        {
            let mut pass = ValuePass { values: &mut values, rhs: &mut rhs };
            self.assemble_static(&data, &mut pass);
            self.assemble_kinematic(&data, x_iter, &mut pass);
        }
        let mut sys = SparseSystem::new(self.n_total);
        sys.rhs = rhs;
        sys.triplets = stat
            .pattern
            .iter()
            .zip(&values)
            .map(|(&(r, c), &v)| (r, c, v))
            .collect();
        Ok(sys)
    }

    /// One coupled step with Picard iteration on the time-weighted normals:
    /// stops when the maximum interface-vertex displacement change drops
    /// below `tol`.
    pub fn step(
        &mut self,
        inputs: &FluidStepInputs<'_>,
        tol: f64,
        max_iter: usize,
    ) -> Result<CoupledUnknowns, FluidError> {
        let data = StepData::build(self, inputs)?;

        let mut values_static = Vec::new();
        let mut rhs_static = vec![0.0; self.n_total];
        {
            let mut pass = ValuePass { values: &mut values_static, rhs: &mut rhs_static };
            self.assemble_static(&data, &mut pass);
        }

        // Warm start from the caller's predicted positions when provided.
        let mut x_iter: Vec<Vec<Point>> = match inputs.predicted_positions {
            Some(p) if p.len() == data.x_init.len() => p.to_vec(),
            _ => data.x_init.clone(),
        };
        let mut last_delta = f64::INFINITY;
        let mut prev_update: Option<Vec<f64>> = None;
        for it in 1..=max_iter {
            let mut values = values_static.clone();
            let mut rhs = rhs_static.clone();
            {
                let mut pass = ValuePass { values: &mut values, rhs: &mut rhs };
                self.assemble_kinematic(&data, &x_iter, &mut pass);
            }
            let sol = self.lu.solve(&values, &rhs, 1e-13)?;

            let mut delta = 0.0f64;
            let mut x_new = Vec::with_capacity(x_iter.len());
            let mut update = Vec::new();
            for (f, iface) in data.mesh.interfaces.iter().enumerate() {
                let mut pos = Vec::with_capacity(iface.verts.len());
                for k in 0..iface.verts.len() {
                    let p = [
                        sol[self.off_x[f] + 2 * k],
                        sol[self.off_x[f] + 2 * k + 1],
                    ];
                    delta = delta
                        .max((p[0] - x_iter[f][k][0]).abs())
                        .max((p[1] - x_iter[f][k][1]).abs());
                    update.push(p[0] - x_iter[f][k][0]);
                    update.push(p[1] - x_iter[f][k][1]);
                    pos.push(p);
                }
                x_new.push(pos);
            }

            if delta <= tol {
                return Ok(self.extract(&data, sol, x_new, it));
            }

            // Aitken overrelaxation: the iteration is linear to leading
            // order, so extrapolating along the update direction with the
            // estimated contraction rate removes the dominant mode.
            let mut omega = 0.0;
            if let Some(prev) = &prev_update {
                let (mut num, mut den) = (0.0, 0.0);
                for (d, p) in update.iter().zip(prev) {
                    num += d * p;
                    den += p * p;
                }
                let rho = if den > 0.0 { (num / den).clamp(-0.5, 0.9) } else { 0.0 };
                omega = rho / (1.0 - rho);
            }
            let mut idx = 0;
            for pos in x_new.iter_mut() {
                for p in pos.iter_mut() {
                    p[0] += omega * update[idx];
                    p[1] += omega * update[idx + 1];
                    idx += 2;
                }
            }
            prev_update = Some(update);
            x_iter = x_new;
            last_delta = delta;
        }
        Err(FluidError::PicardMaxIter { max_iter, last_delta })
    }

    fn extract(
        &self,
        data: &StepData<'_>,
        sol: Vec<f64>,
        positions: Vec<Vec<Point>>,
        iterations: usize,
    ) -> CoupledUnknowns {
        let mesh = data.mesh;
        let mut velocity = vec![0.0; self.n_u];
        for d in 0..self.n_u {
            velocity[d] = sol[self.remap[d]];
        }
        let nv = mesh.vertices.len();
        let mut p1 = vec![0.0; nv];
        for v in 0..nv {
            p1[v] = sol[self.remap[self.off_p1 + v]];
        }
        let p0: Vec<f64> = (0..mesh.triangles.len())
            .map(|o| sol[self.off_p0 + o])
            .collect();

        // Shift the reported pressure to zero mean. With velocity-controlled
        // boundaries this is the usual gauge choice; with stress-free
        // boundaries the level is a property of the output only (the
        // pressure never feeds back into later steps).
        let mut p1 = p1;
        {
            let mut integral = 0.0;
            let mut total_area = 0.0;
            for (o, t) in mesh.triangles.iter().enumerate() {
                let area = mesh.tri_area(o);
                let mean_p1 = (p1[t.v[0]] + p1[t.v[1]] + p1[t.v[2]]) / 3.0;
                integral += area * (mean_p1 + p0[o]);
                total_area += area;
            }
            let mean = integral / total_area;
            for v in p1.iter_mut() {
                *v -= mean;
            }
        }

        let mut pressure = p1;
        pressure.extend_from_slice(&p0);

        let mut max_velocity = 0.0f64;
        for k in 0..self.n_u / 2 {
            max_velocity = max_velocity.max(velocity[2 * k].hypot(velocity[2 * k + 1]));
        }

        let curvature = (0..mesh.interfaces.len())
            .map(|f| {
                (0..mesh.interfaces[f].verts.len())
                    .map(|k| sol[self.off_kappa[f] + k])
                    .collect()
            })
            .collect();

        CoupledUnknowns {
            fluid: FluidState { velocity, pressure, max_velocity },
            positions,
            curvature,
            picard_iterations: iterations,
        }
    }

    /// Static phase: everything that does not depend on the Picard iterate.
    fn assemble_static(&self, data: &dyn StaticData, emit: &mut dyn Emitter) {
        let mesh = data.mesh_ref();
        let p2 = data.p2_ref();
        let quad = crate::fem::tri_quad_deg4();

        let nq = quad.points.len();
        for (o, t) in mesh.triangles.iter().enumerate() {
            let nodes = &p2.tri_nodes[o];
            let pos = [
                mesh.vertices[t.v[0]],
                mesh.vertices[t.v[1]],
                mesh.vertices[t.v[2]],
            ];
            let geom = tri_geom(pos);
            let (rho, eta) = data.rho_eta(o);
            let (inv_dt, sqrt_j) = data.mass_factors(o);
            let re = data.re();

            // Local blocks: mass+advection (component-diagonal), viscous
            // (component-coupled), pressure couplings.
            let mut n_adv = [[0.0f64; 6]; 6]; // rho (g . grad phi_b) phi_a
            let mut mass = [[0.0f64; 6]; 6];
            let mut visc_gg = [[0.0f64; 6]; 6]; // grad phi_a . grad phi_b
            let mut visc_cross = [[[[0.0f64; 2]; 2]; 6]; 6]; // d_i phi_b d_j phi_a
            let mut rhs_u = [[0.0f64; 2]; 6];
            let mut div_p1 = [[[0.0f64; 2]; 6]; 3]; // int phi1_j d_i phi2_a
            let mut div_p0 = [[0.0f64; 2]; 6];

            for q in 0..nq {
                let l = quad.points[q];
                let w = quad.weights[q] * geom.area;
                let shapes = p2_shapes(l);
                let grads = p2_grads(l, &geom);
                let g_vec = data.advect_velocity(o, l, &shapes);
                let body = data.body_force(o);
                let u_a = data.prev_velocity(o, &shapes);

                for a in 0..6 {
                    for b in 0..6 {
                        mass[a][b] += w * shapes[a] * shapes[b];
                        n_adv[a][b] +=
                            w * rho * (g_vec[0] * grads[b][0] + g_vec[1] * grads[b][1]) * shapes[a];
                        visc_gg[a][b] += w * (grads[a][0] * grads[b][0] + grads[a][1] * grads[b][1]);
                        for i in 0..2 {
                            for j in 0..2 {
                                visc_cross[a][b][i][j] += w * grads[b][i] * grads[a][j];
                            }
                        }
                    }
                    for i in 0..2 {
                        rhs_u[a][i] += w
                            * (rho * inv_dt * sqrt_j * u_a[i] * shapes[a]
                                + rho * body[i] * shapes[a]);
                    }
                }
                for j in 0..3 {
                    for a in 0..6 {
                        for i in 0..2 {
                            div_p1[j][a][i] += w * l[j] * grads[a][i];
                        }
                    }
                }
                for a in 0..6 {
                    for i in 0..2 {
                        div_p0[a][i] += w * grads[a][i];
                    }
                }
            }

            for a in 0..6 {
                for i in 0..2 {
                    let row = self.remap[2 * nodes[a] + i];
                    let row_con = self.constrained[row];
                    for b in 0..6 {
                        for j in 0..2 {
                            let col = self.remap[2 * nodes[b] + j];
                            let mut v = (eta / re)
                                * (if i == j { visc_gg[a][b] } else { 0.0 }
                                    + visc_cross[a][b][i][j]);
                            if i == j {
                                v += rho * inv_dt * mass[a][b]
                                    + 0.5 * (n_adv[a][b] - n_adv[b][a]);
                            }
                            if row_con {
                                v = 0.0;
                            }
                            emit.entry(row, col, v);
                        }
                    }
                    // Pressure coupling and divergence rows.
                    for j in 0..3 {
                        let pcol = self.remap[self.off_p1 + t.v[j]];
                        let vv = div_p1[j][a][i];
                        emit.entry(row, pcol, if row_con { 0.0 } else { -vv });
                        emit.entry(pcol, row, vv);
                    }
                    let pcol = self.off_p0 + o;
                    let vv = div_p0[a][i];
                    emit.entry(row, pcol, if row_con { 0.0 } else { -vv });
                    // The pinned element's divergence row is implied by the
                    // continuous-pressure rows minus the remaining element
                    // rows; it is replaced by the pin below.
                    emit.entry(pcol, row, if pcol == self.pinned_p0 { 0.0 } else { vv });
                    if !row_con {
                        emit.rhs(row, rhs_u[a][i]);
                    }
                }
            }
        }

        // Interface force on the momentum rows (uses current normals), the
        // Marangoni right-hand side, and the u-coupling of the kinematic
        // rows (all independent of the Picard iterate).
        let egauss = edge_gauss3();
        for (f, iface) in mesh.interfaces.iter().enumerate() {
            let n = iface.verts.len();
            let inv_we = 1.0 / data.we();
            for j in 0..n {
                let (k0, k1) = (j, (j + 1) % n);
                let (va, vb) = (iface.verts[k0], iface.verts[k1]);
                let vm = p2
                    .midpoint_node(va, vb)
                    .expect("interface edge is a mesh edge");
                let (qa, qb) = (mesh.vertices[va], mesh.vertices[vb]);
                let len = geometry::norm(geometry::sub(qb, qa));
                let nrm = data.edge_normal(f, j);
                let (g0, g1) = data.gamma_at(f, k0, k1);
                let grad_gamma = [
                    (qb[0] - qa[0]) * (g1 - g0) / (len * len),
                    (qb[1] - qa[1]) * (g1 - g0) / (len * len),
                ];
                let unodes = [va, vb, vm];
                for (tq, wq) in egauss {
                    let wl = wq * len;
                    let shapes = [
                        (1.0 - tq) * (1.0 - 2.0 * tq),
                        tq * (2.0 * tq - 1.0),
                        4.0 * tq * (1.0 - tq),
                    ];
                    let gamma_t = g0 * (1.0 - tq) + g1 * tq;
                    for (a, &ua) in unodes.iter().enumerate() {
                        for i in 0..2 {
                            let row = self.remap[2 * ua + i];
                            let row_con = self.constrained[row];
                            // + (1/We) < gamma kappa n, v >
                            for (kk, psi) in [(k0, 1.0 - tq), (k1, tq)] {
                                let col = self.off_kappa[f] + kk;
                                let v = inv_we * wl * gamma_t * psi * nrm[i] * shapes[a];
                                emit.entry(row, col, if row_con { 0.0 } else { v });
                            }
                            // + (1/We) < grad_s gamma, v > moved to the RHS.
                            if !row_con {
                                emit.rhs(row, inv_we * wl * grad_gamma[i] * shapes[a]);
                            }
                        }
                    }
                    // Kinematic rows: - < u . n^m, psi >.
                    for (kk, psi) in [(k0, 1.0 - tq), (k1, tq)] {
                        let row = self.kin_row(f, kk);
                        for (a, &ua) in unodes.iter().enumerate() {
                            for i in 0..2 {
                                let col = self.remap[2 * ua + i];
                                emit.entry(row, col, -wl * psi * nrm[i] * shapes[a]);
                            }
                        }
                    }
                }
                // Curvature rows: surface-Laplacian stencil on X. The sign
                // pairs with the + sign of the interface force so that
                // curvature is positive on a circle with outward normals and
                // the pressure jump comes out positive inside.
                for (kk, other) in [(k0, k1), (k1, k0)] {
                    for i in 0..2 {
                        let row = self.curv_row(f, kk, i);
                        emit.entry(row, self.off_x[f] + 2 * kk + i, -1.0 / len);
                        emit.entry(row, self.off_x[f] + 2 * other + i, 1.0 / len);
                    }
                }
            }
        }

        // Pressure gauges. The element-constant redundancy of the
        // composite pressure space is removed by pinning one element dof;
        // with flux-free velocity boundaries the physical constant mode is
        // pinned through a sparse Lagrange pair whose multiplier vanishes at
        // the solution, so no discrete equation is perturbed. The reported
        // pressure is shifted to zero mean afterwards.
        emit.entry(self.pinned_p0, self.pinned_p0, 1.0);
        if self.use_lambda_gauge {
            let lam = self.off_gauge;
            let p1_pin = self.remap[self.off_p1];
            emit.entry(lam, p1_pin, 1.0);
            emit.entry(p1_pin, lam, 1.0);
        }

        for d in 0..self.n_u {
            if self.remap[d] == d && self.constrained[d] {
                emit.entry(d, d, 1.0);
                emit.rhs(d, data.dirichlet_value(d));
            }
        }
        for &(s, m) in self.slave_u.iter().chain(&self.slave_p1) {
            emit.entry(s, s, 1.0);
            emit.entry(s, m, -1.0);
        }
    }

    // The interface block is square: 3n unknowns (X, kappa) against 3n
    // equations (two curvature components + one kinematic row per vertex).
    // Kinematic rows live at the kappa indices and curvature rows at the X
    // indices; the factorization does not care about the pairing.
    fn kin_row(&self, f: usize, k: usize) -> usize {
        self.off_kappa[f] + k
    }

    fn curv_row(&self, f: usize, k: usize, comp: usize) -> usize {
        self.off_x[f] + 2 * k + comp
    }

    /// Picard-dependent phase: the time-weighted-normal couplings of the
    /// kinematic and curvature rows.
    fn assemble_kinematic(
        &self,
        data: &dyn StaticData,
        x_iter: &[Vec<Point>],
        emit: &mut dyn Emitter,
    ) {
        let mesh = data.mesh_ref();
        for (f, iface) in mesh.interfaces.iter().enumerate() {
            let n = iface.verts.len();
            let x_old: Vec<Point> = iface.verts.iter().map(|&v| mesh.vertices[v]).collect();
            // Per-edge (A_old + A_new)/2 = |sigma^m| n^{m+1/2}.
            let mut wj = Vec::with_capacity(n);
            for j in 0..n {
                let k = (j + 1) % n;
                let a_old = geometry::orientation_vector(x_old[j], x_old[k]);
                let a_new = geometry::orientation_vector(x_iter[f][j], x_iter[f][k]);
                wj.push([0.5 * (a_old[0] + a_new[0]), 0.5 * (a_old[1] + a_new[1])]);
            }
            let inv_dt = data.inv_dt();
            for k in 0..n {
                let prev = (k + n - 1) % n;
                let nu = [
                    0.5 * (wj[prev][0] + wj[k][0]),
                    0.5 * (wj[prev][1] + wj[k][1]),
                ];
                // Kinematic row: (1/dt) X . nu  = (1/dt) X^m . nu + <u.n^m, psi>.
                let row = self.kin_row(f, k);
                emit.entry(row, self.off_x[f] + 2 * k, inv_dt * nu[0]);
                emit.entry(row, self.off_x[f] + 2 * k + 1, inv_dt * nu[1]);
                emit.rhs(row, inv_dt * (x_old[k][0] * nu[0] + x_old[k][1] * nu[1]));
                // Curvature rows: kappa_k nu_i.
                for i in 0..2 {
                    emit.entry(self.curv_row(f, k, i), self.off_kappa[f] + k, nu[i]);
                }
            }
        }
    }
}

fn side_p2_nodes(mesh: &FittedMesh, p2: &P2Connectivity, side: RectSide) -> Vec<usize> {
    let mut nodes = mesh.side_vertices(side);
    for e in &mesh.boundary_edges {
        if e.side == side {
            if let Some(m) = p2.midpoint_node(e.v.0, e.v.1) {
                nodes.push(m);
            }
        }
    }
    nodes.sort_unstable();
    nodes.dedup();
    nodes
}

/// Data consumed by the assembler; the dummy implementation drives the
/// structure pass at construction time.
trait StaticData {
    fn mesh_ref(&self) -> &FittedMesh;
    fn p2_ref(&self) -> &P2Connectivity;
    fn rho_eta(&self, tri: usize) -> (f64, f64);
    fn mass_factors(&self, tri: usize) -> (f64, f64);
    fn re(&self) -> f64;
    fn we(&self) -> f64;
    fn inv_dt(&self) -> f64;
    fn body_force(&self, tri: usize) -> [f64; 2];
    fn advect_velocity(&self, tri: usize, l: [f64; 3], shapes: &[f64; 6]) -> [f64; 2];
    fn prev_velocity(&self, tri: usize, shapes: &[f64; 6]) -> [f64; 2];
    fn edge_normal(&self, iface: usize, edge: usize) -> [f64; 2];
    fn gamma_at(&self, iface: usize, k0: usize, k1: usize) -> (f64, f64);
    fn dirichlet_value(&self, dof: usize) -> f64;
}

struct StepData<'a> {
    mesh: &'a FittedMesh,
    p2: &'a P2Connectivity,
    rho: Vec<f64>,
    eta: Vec<f64>,
    inv_dt: f64,
    sqrt_j: Vec<f64>,
    re: f64,
    we: f64,
    gravity: f64,
    u_prev: &'a [f64],
    w: &'a [Point],
    gamma: Vec<Vec<f64>>,
    normals: Vec<Vec<[f64; 2]>>,
    x_init: Vec<Vec<Point>>,
    dirichlet: Vec<f64>,
}

impl<'a> StepData<'a> {
    fn build(
        solver: &FluidSolver,
        inputs: &FluidStepInputs<'a>,
    ) -> Result<StepData<'a>, FluidError> {
        let mesh = inputs.mesh;
        let params = inputs.params;
        let mut gamma = Vec::with_capacity(mesh.interfaces.len());
        for g in inputs.gamma {
            let min = g.iter().cloned().fold(f64::INFINITY, f64::min);
            if min <= 0.0 {
                if inputs.clamp_gamma {
                    gamma.push(g.iter().map(|&v| v.max(1e-3)).collect());
                    continue;
                }
                return Err(FluidError::GammaNonPositive(min));
            }
            gamma.push(g.clone());
        }

        let mut normals = Vec::new();
        let mut x_init = Vec::new();
        for iface in &mesh.interfaces {
            let pos: Vec<Point> = iface.verts.iter().map(|&v| mesh.vertices[v]).collect();
            let n = pos.len();
            let mut nrm = Vec::with_capacity(n);
            for j in 0..n {
                let k = (j + 1) % n;
                nrm.push(
                    geometry::element_normal(pos[j], pos[k])
                        .map_err(|_| FluidError::DegenerateEdge)?,
                );
            }
            normals.push(nrm);
            x_init.push(pos);
        }

        let (rho, eta): (Vec<f64>, Vec<f64>) = mesh
            .triangles
            .iter()
            .map(|t| {
                let kind = mesh.region_kinds[t.region];
                (params.density(kind), params.viscosity(kind))
            })
            .unzip();

        let sqrt_j: Vec<f64> = inputs
            .motion
            .jacobian
            .iter()
            .map(|&j| j.max(0.0).sqrt())
            .collect();

        // Dirichlet values at constrained velocity dofs.
        let node_pos = inputs.p2.node_positions(&mesh.vertices);
        let mut dirichlet = vec![0.0; solver.n_u];
        for side in [RectSide::Left, RectSide::Right, RectSide::Bottom, RectSide::Top] {
            if let VelocityBc::Dirichlet(g) = solver.bc.side(side) {
                for node in side_p2_nodes(mesh, inputs.p2, side) {
                    let p = node_pos[node];
                    let v = g.eval(p[0], p[1]);
                    let d0 = solver.remap[2 * node];
                    let d1 = solver.remap[2 * node + 1];
                    dirichlet[d0] = v[0];
                    dirichlet[d1] = v[1];
                }
            }
        }

        Ok(StepData {
            mesh,
            p2: inputs.p2,
            rho,
            eta,
            inv_dt: 1.0 / inputs.dt,
            sqrt_j,
            re: params.re,
            we: params.we,
            gravity: params.gravity,
            u_prev: inputs.u_prev,
            w: &inputs.motion.velocity,
            gamma,
            normals,
            x_init,
            dirichlet,
        })
    }
}

impl StaticData for StepData<'_> {
    fn mesh_ref(&self) -> &FittedMesh {
        self.mesh
    }
    fn p2_ref(&self) -> &P2Connectivity {
        self.p2
    }
    fn rho_eta(&self, tri: usize) -> (f64, f64) {
        (self.rho[tri], self.eta[tri])
    }
    fn mass_factors(&self, tri: usize) -> (f64, f64) {
        (self.inv_dt, self.sqrt_j[tri])
    }
    fn re(&self) -> f64 {
        self.re
    }
    fn we(&self) -> f64 {
        self.we
    }
    fn inv_dt(&self) -> f64 {
        self.inv_dt
    }
    fn body_force(&self, _tri: usize) -> [f64; 2] {
        [0.0, self.gravity]
    }
    fn advect_velocity(&self, tri: usize, l: [f64; 3], shapes: &[f64; 6]) -> [f64; 2] {
        // g = u_A - w at the quadrature point.
        let nodes = &self.p2.tri_nodes[tri];
        let verts = &self.mesh.triangles[tri].v;
        let mut g = [0.0f64; 2];
        for k in 0..6 {
            g[0] += shapes[k] * self.u_prev[2 * nodes[k]];
            g[1] += shapes[k] * self.u_prev[2 * nodes[k] + 1];
        }
        for k in 0..3 {
            g[0] -= l[k] * self.w[verts[k]][0];
            g[1] -= l[k] * self.w[verts[k]][1];
        }
        g
    }
    fn prev_velocity(&self, tri: usize, shapes: &[f64; 6]) -> [f64; 2] {
        let nodes = &self.p2.tri_nodes[tri];
        let mut u = [0.0f64; 2];
        for k in 0..6 {
            u[0] += shapes[k] * self.u_prev[2 * nodes[k]];
            u[1] += shapes[k] * self.u_prev[2 * nodes[k] + 1];
        }
        u
    }
    fn edge_normal(&self, iface: usize, edge: usize) -> [f64; 2] {
        self.normals[iface][edge]
    }
    fn gamma_at(&self, iface: usize, k0: usize, k1: usize) -> (f64, f64) {
        (self.gamma[iface][k0], self.gamma[iface][k1])
    }
    fn dirichlet_value(&self, dof: usize) -> f64 {
        self.dirichlet[dof]
    }
}

/// Zero-valued stand-in used only to trace the sparsity pattern.
struct DummyStepData<'a> {
    mesh: &'a FittedMesh,
    p2: &'a P2Connectivity,
    x_init: Vec<Vec<Point>>,
}

impl<'a> DummyStepData<'a> {
    fn build(mesh: &'a FittedMesh, p2: &'a P2Connectivity) -> Self {
        let x_init = (0..mesh.interfaces.len())
            .map(|f| mesh.interface_positions(f))
            .collect();
        DummyStepData { mesh, p2, x_init }
    }
}

impl StaticData for DummyStepData<'_> {
    fn mesh_ref(&self) -> &FittedMesh {
        self.mesh
    }
    fn p2_ref(&self) -> &P2Connectivity {
        self.p2
    }
    fn rho_eta(&self, _tri: usize) -> (f64, f64) {
        (1.0, 1.0)
    }
    fn mass_factors(&self, _tri: usize) -> (f64, f64) {
        (1.0, 1.0)
    }
    fn re(&self) -> f64 {
        1.0
    }
    fn we(&self) -> f64 {
        1.0
    }
    fn inv_dt(&self) -> f64 {
        1.0
    }
    fn body_force(&self, _tri: usize) -> [f64; 2] {
        [0.0, 0.0]
    }
    fn advect_velocity(&self, _tri: usize, _l: [f64; 3], _s: &[f64; 6]) -> [f64; 2] {
        [0.0, 0.0]
    }
    fn prev_velocity(&self, _tri: usize, _s: &[f64; 6]) -> [f64; 2] {
        [0.0, 0.0]
    }
    fn edge_normal(&self, _f: usize, _e: usize) -> [f64; 2] {
        [0.0, 0.0]
    }
    fn gamma_at(&self, _f: usize, _k0: usize, _k1: usize) -> (f64, f64) {
        (1.0, 1.0)
    }
    fn dirichlet_value(&self, _dof: usize) -> f64 {
        0.0
    }
}

/// The antisymmetrized advection form
/// `1/2 [ (rho (g . grad) u, v) - (rho (g . grad) v, u) ]` evaluated by
/// quadrature; exactly zero for `u = v` by construction.
pub fn antisymmetric_advection(
    mesh: &FittedMesh,
    p2: &P2Connectivity,
    rho_per_tri: &[f64],
    g_p2: &[f64],
    u: &[f64],
    v: &[f64],
) -> f64 {
    let quad = crate::fem::tri_quad_deg4();
    let mut acc = 0.0;
    for (o, _t) in mesh.triangles.iter().enumerate() {
        let nodes = &p2.tri_nodes[o];
        let pos = [
            mesh.vertices[mesh.triangles[o].v[0]],
            mesh.vertices[mesh.triangles[o].v[1]],
            mesh.vertices[mesh.triangles[o].v[2]],
        ];
        let geom = tri_geom(pos);
        for q in 0..quad.points.len() {
            let l = quad.points[q];
            let w = quad.weights[q] * geom.area;
            let shapes = p2_shapes(l);
            let grads = p2_grads(l, &geom);
            let mut g = [0.0f64; 2];
            let mut uu = [0.0f64; 2];
            let mut vv = [0.0f64; 2];
            let mut gu = [[0.0f64; 2]; 2];
            let mut gv = [[0.0f64; 2]; 2];
            for k in 0..6 {
                let n = nodes[k];
                for i in 0..2 {
                    g[i] += shapes[k] * g_p2[2 * n + i];
                    uu[i] += shapes[k] * u[2 * n + i];
                    vv[i] += shapes[k] * v[2 * n + i];
                    for j in 0..2 {
                        gu[i][j] += grads[k][j] * u[2 * n + i];
                        gv[i][j] += grads[k][j] * v[2 * n + i];
                    }
                }
            }
            let rho = rho_per_tri[o];
            let mut term = 0.0;
            for i in 0..2 {
                let gdu = g[0] * gu[i][0] + g[1] * gu[i][1];
                let gdv = g[0] * gv[i][0] + g[1] * gv[i][1];
                term += gdu * vv[i] - gdv * uu[i];
            }
            acc += 0.5 * w * rho * term;
        }
    }
    acc
}
