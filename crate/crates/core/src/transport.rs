//! One time step of the species system on the new mesh: all bulk and
//! surface species advance in a single coupled linear solve with linearized
//! reaction/adsorption sources, doubled interface dofs for bulk jumps, and
//! optional gated transmembrane permeability.
//!
//! The right-hand side evaluates the previous mass on the OLD element
//! geometry with the same dof coefficients, which realizes the discrete ALE
//! pullback and makes the conservation identities exact: summing the rows
//! with unit test functions telescopes the configured mass combinations.

use thiserror::Error;

use crate::fem::{edge_gauss3, p2_shapes, tri_geom, P2Connectivity};
use crate::geometry::{self, Point};
use crate::linalg::{CachedLu, LinalgError};
use crate::mesh::{FittedMesh, RectSide};
use crate::params::{
    CheckedNetwork, CheckedPermeabilityKind, DimensionlessParams, ScalarField,
};

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("non-positive value {value} raised to non-integer exponent {exponent}")]
    NonIntegerPower { value: f64, exponent: f64 },
    #[error("species/interface shape mismatch in inputs")]
    ShapeMismatch,
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Dof layout for one mesh + network: per bulk species one dof per vertex of
/// each region it lives on (interface vertices are doubled per side), then
/// per surface species one dof per interface vertex.
#[derive(Debug, Clone)]
pub struct SpeciesLayout {
    pub n_dofs: usize,
    /// `bulk_dof[s][slot][vertex]` -> dof id or `usize::MAX`.
    bulk_dof: Vec<Vec<Vec<usize>>>,
    /// `bulk_verts[s][slot]` -> vertices carrying dofs, ascending.
    bulk_verts: Vec<Vec<Vec<usize>>>,
    surf_off: Vec<usize>,
}

impl SpeciesLayout {
    pub fn build(mesh: &FittedMesh, network: &CheckedNetwork) -> Self {
        let nv = mesh.vertices.len();
        let mut next = 0usize;
        let mut bulk_dof = Vec::with_capacity(network.bulk.len());
        let mut bulk_verts = Vec::with_capacity(network.bulk.len());
        for b in &network.bulk {
            let mut per_slot_dof = Vec::with_capacity(b.regions.len());
            let mut per_slot_verts = Vec::with_capacity(b.regions.len());
            for &region in &b.regions {
                let verts = mesh.region_vertices(region);
                let mut map = vec![usize::MAX; nv];
                for &v in &verts {
                    map[v] = next;
                    next += 1;
                }
                per_slot_dof.push(map);
                per_slot_verts.push(verts);
            }
            bulk_dof.push(per_slot_dof);
            bulk_verts.push(per_slot_verts);
        }
        let mut surf_off = Vec::with_capacity(network.surface.len());
        for s in &network.surface {
            surf_off.push(next);
            next += mesh.interfaces[s.interface].verts.len();
        }
        SpeciesLayout {
            n_dofs: next,
            bulk_dof,
            bulk_verts,
            surf_off,
        }
    }

    #[inline]
    pub fn bulk_dof(&self, species: usize, slot: usize, vertex: usize) -> Option<usize> {
        let d = self.bulk_dof[species][slot][vertex];
        (d != usize::MAX).then_some(d)
    }

    pub fn bulk_vertices(&self, species: usize, slot: usize) -> &[usize] {
        &self.bulk_verts[species][slot]
    }

    #[inline]
    pub fn surf_dof(&self, species: usize, polyline_index: usize) -> usize {
        self.surf_off[species] + polyline_index
    }

    pub fn surf_range(&self, species: usize, n: usize) -> std::ops::Range<usize> {
        self.surf_off[species]..self.surf_off[species] + n
    }
}

/// Species coefficients at one time level.
#[derive(Debug, Clone)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SpeciesState {
    pub values: Vec<f64>,
    pub time: f64,
}

/// Nodal interpolation of the configured initial data, per side.
pub fn initialize_state(
    mesh: &FittedMesh,
    network: &CheckedNetwork,
    layout: &SpeciesLayout,
) -> SpeciesState {
    let mut values = vec![0.0; layout.n_dofs];
    for (s, b) in network.bulk.iter().enumerate() {
        for slot in 0..b.regions.len() {
            let init = &b.initial[slot];
            for &v in layout.bulk_vertices(s, slot) {
                let p = mesh.vertices[v];
                values[layout.bulk_dof(s, slot, v).unwrap()] = init.eval(p[0], p[1]);
            }
        }
    }
    for (s, sp) in network.surface.iter().enumerate() {
        let n = mesh.interfaces[sp.interface].verts.len();
        for k in 0..n {
            values[layout.surf_dof(s, k)] = sp.initial;
        }
    }
    SpeciesState { values, time: 0.0 }
}

/// Surface tension nodal values on one interface:
/// `gamma = 1 - E sum_K omega_K K`.
pub fn surface_tension_field(
    mesh: &FittedMesh,
    iface: usize,
    network: &CheckedNetwork,
    layout: &SpeciesLayout,
    state: &SpeciesState,
    elasticity: f64,
) -> Vec<f64> {
    let n = mesh.interfaces[iface].verts.len();
    let mut gamma = vec![1.0; n];
    for (s, sp) in network.surface.iter().enumerate() {
        if sp.interface != iface {
            continue;
        }
        for k in 0..n {
            gamma[k] -= elasticity * sp.omega * state.values[layout.surf_dof(s, k)];
        }
    }
    gamma
}

fn pow_checked(x: f64, w: f64) -> Result<f64, TransportError> {
    if w == 1.0 {
        return Ok(x);
    }
    if w == 0.0 {
        return Ok(1.0);
    }
    if w.fract() == 0.0 && w.abs() < 1e6 {
        return Ok(x.powi(w as i32));
    }
    if x <= 0.0 {
        return Err(TransportError::NonIntegerPower { value: x, exponent: w });
    }
    Ok(x.powf(w))
}

/// Nonlinear reference reaction rate
/// `Bi (k_f B^wb C^wc - k_r A^wa)`.
pub fn reaction_rate(
    a: f64,
    b: f64,
    c_g: f64,
    bi: f64,
    k_f: f64,
    k_r: f64,
    omega_a: f64,
    omega_b: f64,
    omega_c: f64,
) -> Result<f64, TransportError> {
    Ok(bi * (k_f * pow_checked(b, omega_b)? * pow_checked(c_g, omega_c)? - k_r * pow_checked(a, omega_a)?))
}

/// Adsorption/desorption source `Bi (k_ad C_side - k_d C_G^wc)`.
pub fn adsorption_source(
    c_side: f64,
    c_g: f64,
    bi: f64,
    k_ad: f64,
    k_d: f64,
    omega_c: f64,
) -> Result<f64, TransportError> {
    Ok(bi * (k_ad * c_side - k_d * pow_checked(c_g, omega_c)?))
}

/// Logistic gate coefficient `k_max / (1 + exp(-beta (K - a0)))`.
pub fn gate_coefficient(k_max: f64, a0: f64, beta: f64, controller: f64) -> f64 {
    k_max / (1.0 + (-beta * (controller - a0)).exp())
}

/// Transmembrane flux `Bi k [[C]]`, with `k` constant or gated.
pub fn transmembrane_flux(
    c_plus: f64,
    c_minus: f64,
    bi: f64,
    rule: &CheckedPermeabilityKind,
    controller_value: f64,
) -> f64 {
    let k = match rule {
        CheckedPermeabilityKind::Constant { k } => *k,
        CheckedPermeabilityKind::Gated { k_max, a0, beta, .. } => {
            gate_coefficient(*k_max, *a0, *beta, controller_value)
        }
    };
    bi * k * (c_plus - c_minus)
}

/// The three dissipation-sign pairings of the source terms. Each returns
/// `(potential difference) * source`; the first two are non-positive and the
/// last non-negative for all positive inputs, given the derived potentials.
/// Both factors are built from the same computed monomials so the sign
/// identities survive floating-point rounding.
pub mod dissipation {
    /// `(g'(A) - g'(B) - g'(C)) * R <= 0`.
    pub fn reaction(
        a: f64,
        b: f64,
        c_g: f64,
        elasticity: f64,
        bi: f64,
        k_r: f64,
        lambda_c: f64,
        omega_a: f64,
        omega_b: f64,
        omega_c: f64,
    ) -> f64 {
        let fwd = lambda_c * b.powf(omega_b) * c_g.powf(omega_c);
        let rev = a.powf(omega_a);
        let rate = bi * k_r * (fwd - rev);
        let potential = elasticity * (rev.ln() - fwd.ln());
        potential * rate
    }

    /// `(g'(C_G) - f'(C_side)) * S <= 0`.
    pub fn adsorption(
        c_side: f64,
        c_g: f64,
        elasticity: f64,
        bi: f64,
        k_d: f64,
        lambda_a: f64,
        omega_c: f64,
    ) -> f64 {
        let ads = lambda_a * c_side;
        let des = c_g.powf(omega_c);
        let source = bi * k_d * (ads - des);
        let potential = elasticity * (des.ln() - ads.ln());
        potential * source
    }

    /// `[[f'(C)]] * J_s >= 0`.
    pub fn flux(c_plus: f64, c_minus: f64, elasticity: f64, bi: f64, k: f64) -> f64 {
        let source = bi * k * (c_plus - c_minus);
        let potential = elasticity * (c_plus.ln() - c_minus.ln());
        potential * source
    }
}

/// Dirichlet boundary data for one bulk species on tagged outer sides.
#[derive(Clone)]
pub struct SpeciesDirichlet {
    pub species: usize,
    pub sides: Vec<RectSide>,
    pub value: ScalarField,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct StepReport {
    /// Tilde values clipped at 1e-12 before a fractional power.
    pub clipped_tilde: usize,
    /// min/max gated permeability coefficient over all gated rules, NaN if
    /// no gated rule is configured.
    pub gate_min: f64,
    pub gate_max: f64,
}

pub struct TransportInputs<'a> {
    /// Mesh holding the NEW vertex positions (time t_{m+1}).
    pub mesh: &'a FittedMesh,
    /// Vertex positions at the previous time level (same connectivity).
    pub old_vertices: &'a [Point],
    pub p2: &'a P2Connectivity,
    /// New velocity coefficients (zeros when the fluid is off).
    pub u_new: &'a [f64],
    /// New mesh velocity (zeros when the fluid is off).
    pub w_new: &'a [Point],
    pub params: &'a DimensionlessParams,
    pub network: &'a CheckedNetwork,
    pub dt: f64,
}

/// Coupled solver for all species with a cached factorization pattern;
/// valid while mesh connectivity and the network are unchanged.
pub struct TransportSolver {
    layout: SpeciesLayout,
    dirichlet: Vec<SpeciesDirichlet>,
    /// (dof, vertex, dirichlet spec index)
    dirichlet_dofs: Vec<(usize, usize, usize)>,
    remap: Vec<usize>,
    slaves: Vec<(usize, usize)>,
    constrained: Vec<bool>,
    pattern: Vec<(usize, usize)>,
    lu: CachedLu,
}

enum Pass<'v> {
    Structure(Vec<(usize, usize)>),
    Values(&'v mut Vec<f64>),
}

impl Pass<'_> {
    #[inline]
    fn entry(&mut self, r: usize, c: usize, v: f64) {
        match self {
            Pass::Structure(p) => p.push((r, c)),
            Pass::Values(vals) => vals.push(v),
        }
    }
}

impl TransportSolver {
    pub fn new(
        mesh: &FittedMesh,
        network: &CheckedNetwork,
        dirichlet: Vec<SpeciesDirichlet>,
    ) -> Result<Self, TransportError> {
        let layout = SpeciesLayout::build(mesh, network);
        let n = layout.n_dofs;

        let mut remap: Vec<usize> = (0..n).collect();
        let mut slaves = Vec::new();
        for (s, b) in network.bulk.iter().enumerate() {
            for slot in 0..b.regions.len() {
                for &(rv, lv) in &mesh.periodic_vertex_pairs {
                    if let (Some(ds), Some(dm)) = (
                        layout.bulk_dof(s, slot, rv),
                        layout.bulk_dof(s, slot, lv),
                    ) {
                        remap[ds] = dm;
                        slaves.push((ds, dm));
                    }
                }
            }
        }

        let mut constrained = vec![false; n];
        let mut dirichlet_dofs = Vec::new();
        for (di, d) in dirichlet.iter().enumerate() {
            let b = &network.bulk[d.species];
            for side in &d.sides {
                for v in mesh.side_vertices(*side) {
                    for slot in 0..b.regions.len() {
                        if let Some(dof) = layout.bulk_dof(d.species, slot, v) {
                            let dof = remap[dof];
                            if !constrained[dof] {
                                constrained[dof] = true;
                                dirichlet_dofs.push((dof, v, di));
                            }
                        }
                    }
                }
            }
        }

        let mut solver = TransportSolver {
            layout,
            dirichlet,
            dirichlet_dofs,
            remap,
            slaves,
            constrained,
            pattern: Vec::new(),
            lu: CachedLu::new(1, &[(0, 0)])?,
        };

        // Structure pass with zero-valued state.
        let zero_state = SpeciesState {
            values: vec![0.0; solver.layout.n_dofs],
            time: 0.0,
        };
        let params_dummy = None;
        let mut pass = Pass::Structure(Vec::new());
        solver.assemble(
            mesh,
            &mesh.vertices.clone(),
            None,
            &zero_state,
            network,
            params_dummy,
            1.0,
            &mut pass,
            &mut vec![0.0; n],
            &mut StepReport::default(),
        )?;
        let Pass::Structure(pattern) = pass else { unreachable!() };
        solver.lu = CachedLu::new(n, &pattern)?;
        solver.pattern = pattern;
        Ok(solver)
    }

    pub fn layout(&self) -> &SpeciesLayout {
        &self.layout
    }

    /// Advances all species by one step; postcondition: the discrete
    /// conservation identities hold to solver precision.
    pub fn step(
        &self,
        inputs: &TransportInputs<'_>,
        state: &SpeciesState,
    ) -> Result<(SpeciesState, StepReport), TransportError> {
        if state.values.len() != self.layout.n_dofs {
            return Err(TransportError::ShapeMismatch);
        }
        let mut report = StepReport {
            clipped_tilde: 0,
            gate_min: f64::NAN,
            gate_max: f64::NAN,
        };
        let mut values = Vec::with_capacity(self.pattern.len());
        let mut rhs = vec![0.0; self.layout.n_dofs];
        let mut pass = Pass::Values(&mut values);
        self.assemble(
            inputs.mesh,
            inputs.old_vertices,
            Some((inputs.p2, inputs.u_new, inputs.w_new)),
            state,
            inputs.network,
            Some(inputs.params),
            inputs.dt,
            &mut pass,
            &mut rhs,
            &mut report,
        )?;
        let sol = self.lu.solve(&values, &rhs)?;
        let mut out = sol;
        for &(s, m) in &self.slaves {
            out[s] = out[m];
        }
        Ok((
            SpeciesState {
                values: out,
                time: state.time + inputs.dt,
            },
            report,
        ))
    }

    /// Assembles the coupled system. `flow` is `None` for the structure pass
    /// and for fluid-off scenarios the caller passes zero fields.
    #[allow(clippy::too_many_arguments)]
    fn assemble(
        &self,
        mesh: &FittedMesh,
        old_vertices: &[Point],
        flow: Option<(&P2Connectivity, &[f64], &[Point])>,
        state: &SpeciesState,
        network: &CheckedNetwork,
        params: Option<&DimensionlessParams>,
        dt: f64,
        pass: &mut Pass<'_>,
        rhs: &mut Vec<f64>,
        report: &mut StepReport,
    ) -> Result<(), TransportError> {
        let inv_dt = 1.0 / dt;
        let (pe, pe_gamma, bi, da) = match params {
            Some(p) => (p.pe, p.pe_gamma, p.bi, p.da),
            None => (1.0, 1.0, 1.0, 1.0),
        };
        let quad = crate::fem::tri_quad_deg4();

        // Bulk blocks, per species and region.
        for (s, b) in network.bulk.iter().enumerate() {
            for (slot, &region) in b.regions.iter().enumerate() {
                let diff = b.diffusivities[slot] / pe;
                for (o, t) in mesh.triangles.iter().enumerate() {
                    if t.region != region {
                        continue;
                    }
                    let dofs = [
                        self.layout.bulk_dof(s, slot, t.v[0]).unwrap(),
                        self.layout.bulk_dof(s, slot, t.v[1]).unwrap(),
                        self.layout.bulk_dof(s, slot, t.v[2]).unwrap(),
                    ];
                    let pos_new = [
                        mesh.vertices[t.v[0]],
                        mesh.vertices[t.v[1]],
                        mesh.vertices[t.v[2]],
                    ];
                    let geom = tri_geom(pos_new);
                    // Advection integrals by quadrature.
                    let mut adv = [[0.0f64; 3]; 3];
                    if let Some((p2, u_new, w_new)) = flow {
                        let nodes = &p2.tri_nodes[o];
                        for q in 0..quad.points.len() {
                            let l = quad.points[q];
                            let w = quad.weights[q] * geom.area;
                            let shapes2 = p2_shapes(l);
                            let mut vel = [0.0f64; 2];
                            for k in 0..6 {
                                vel[0] += shapes2[k] * u_new[2 * nodes[k]];
                                vel[1] += shapes2[k] * u_new[2 * nodes[k] + 1];
                            }
                            for k in 0..3 {
                                vel[0] -= l[k] * w_new[t.v[k]][0];
                                vel[1] -= l[k] * w_new[t.v[k]][1];
                            }
                            for a in 0..3 {
                                let gdot =
                                    vel[0] * geom.grad_l[a][0] + vel[1] * geom.grad_l[a][1];
                                for bb in 0..3 {
                                    adv[a][bb] -= w * l[bb] * gdot;
                                }
                            }
                        }
                    }
                    // Consistent P1 mass matrices on new and old geometry.
                    let area_new = geom.area;
                    let pos_old = [
                        old_vertices[t.v[0]],
                        old_vertices[t.v[1]],
                        old_vertices[t.v[2]],
                    ];
                    let area_old =
                        crate::fem::tri_signed_area(pos_old[0], pos_old[1], pos_old[2]);
                    for a in 0..3 {
                        let row = self.remap[dofs[a]];
                        let row_con = self.constrained[row];
                        let mut rhs_a = 0.0;
                        for bb in 0..3 {
                            let col = self.remap[dofs[bb]];
                            let mfac = if a == bb { 1.0 / 6.0 } else { 1.0 / 12.0 };
                            let mut v = inv_dt * area_new * mfac
                                + adv[a][bb]
                                + diff
                                    * area_new
                                    * (geom.grad_l[a][0] * geom.grad_l[bb][0]
                                        + geom.grad_l[a][1] * geom.grad_l[bb][1]);
                            rhs_a += inv_dt * area_old * mfac * state.values[dofs[bb]];
                            if row_con {
                                v = 0.0;
                            }
                            pass.entry(row, col, v);
                        }
                        if !row_con {
                            rhs[row] += rhs_a;
                        }
                    }
                }
            }
        }

        // Surface blocks, per species.
        for (s, sp) in network.surface.iter().enumerate() {
            let iface = &mesh.interfaces[sp.interface];
            let n = iface.verts.len();
            let diff = sp.diffusivity / pe_gamma;
            for j in 0..n {
                let (k0, k1) = (j, (j + 1) % n);
                let (va, vb) = (iface.verts[k0], iface.verts[k1]);
                let (qa, qb) = (mesh.vertices[va], mesh.vertices[vb]);
                let len_new = geometry::norm(geometry::sub(qb, qa));
                let len_old = geometry::norm(geometry::sub(old_vertices[vb], old_vertices[va]));
                let (d0, d1) = (self.layout.surf_dof(s, k0), self.layout.surf_dof(s, k1));
                // Lumped mass, new on the left, old on the right.
                pass.entry(d0, d0, inv_dt * 0.5 * len_new);
                pass.entry(d1, d1, inv_dt * 0.5 * len_new);
                rhs[d0] += inv_dt * 0.5 * len_old * state.values[d0];
                rhs[d1] += inv_dt * 0.5 * len_old * state.values[d1];
                // Surface diffusion.
                pass.entry(d0, d0, diff / len_new);
                pass.entry(d0, d1, -diff / len_new);
                pass.entry(d1, d1, diff / len_new);
                pass.entry(d1, d0, -diff / len_new);
                // Surface advection - <K (u - w_G), grad_s psi>, accumulated
                // into a 2x2 local block so both passes emit four entries.
                let mut local = [[0.0f64; 2]; 2];
                if let Some((p2, u_new, w_new)) = flow {
                    let vm = p2.midpoint_node(va, vb).expect("interface edge");
                    let tangent = [(qb[0] - qa[0]) / len_new, (qb[1] - qa[1]) / len_new];
                    for (tq, wq) in edge_gauss3() {
                        let wl = wq * len_new;
                        let sh = [
                            (1.0 - tq) * (1.0 - 2.0 * tq),
                            tq * (2.0 * tq - 1.0),
                            4.0 * tq * (1.0 - tq),
                        ];
                        let mut rel = [0.0f64; 2];
                        for (k, &node) in [va, vb, vm].iter().enumerate() {
                            rel[0] += sh[k] * u_new[2 * node];
                            rel[1] += sh[k] * u_new[2 * node + 1];
                        }
                        rel[0] -= (1.0 - tq) * w_new[va][0] + tq * w_new[vb][0];
                        rel[1] -= (1.0 - tq) * w_new[va][1] + tq * w_new[vb][1];
                        let rel_t = rel[0] * tangent[0] + rel[1] * tangent[1];
                        // Trial K is linear on the edge; test gradient is
                        // +-1/len along the tangent.
                        for (a, dpsi) in [(0, -1.0 / len_new), (1, 1.0 / len_new)] {
                            for (bb, shape) in [(0, 1.0 - tq), (1, tq)] {
                                local[a][bb] -= wl * shape * rel_t * dpsi;
                            }
                        }
                    }
                }
                for (a, row) in [d0, d1].into_iter().enumerate() {
                    for (bb, col) in [d0, d1].into_iter().enumerate() {
                        pass.entry(row, col, local[a][bb]);
                    }
                }
            }
        }

        // Lumped vertex weights on the new interfaces.
        let weights: Vec<Vec<f64>> = mesh
            .interfaces
            .iter()
            .map(|iface| {
                let pos: Vec<Point> = iface.verts.iter().map(|&v| mesh.vertices[v]).collect();
                geometry::lumped_vertex_weights(&pos)
            })
            .collect();

        let mut clip = |x: f64, report: &mut StepReport| -> f64 {
            if x < 1e-12 {
                report.clipped_tilde += 1;
                1e-12
            } else {
                x
            }
        };

        // Reaction rows: product gains R, both reactants lose it.
        for r in &network.reactions {
            let iface = &mesh.interfaces[r.interface];
            let n = iface.verts.len();
            let (wa, wb, wc) = (
                network.surface[r.product].omega,
                network.surface[r.reactant_b].omega,
                network.surface[r.reactant_c].omega,
            );
            for k in 0..n {
                let w = weights[r.interface][k];
                let (da_, db_, dc_) = (
                    self.layout.surf_dof(r.product, k),
                    self.layout.surf_dof(r.reactant_b, k),
                    self.layout.surf_dof(r.reactant_c, k),
                );
                // Linearized R = Bi [ k_f/2 (B bt^{wb-1} ct^{wc} + C bt^{wb} ct^{wc-1}) - k_r A at^{wa-1} ].
                let (at, bt, ct) = (state.values[da_], state.values[db_], state.values[dc_]);
                let pw = |x: f64, e: f64, rep: &mut StepReport| -> f64 {
                    if e == 0.0 {
                        1.0
                    } else if e == 1.0 {
                        x
                    } else {
                        clip(x, rep).powf(e)
                    }
                };
                let coef_b = bi * 0.5 * r.k_f * pw(bt, wb - 1.0, report) * pw(ct, wc, report);
                let coef_c = bi * 0.5 * r.k_f * pw(bt, wb, report) * pw(ct, wc - 1.0, report);
                let coef_a = -bi * r.k_r * pw(at, wa - 1.0, report);
                for (row, sign) in [(da_, -1.0), (db_, 1.0), (dc_, 1.0)] {
                    pass.entry(row, db_, sign * w * coef_b);
                    pass.entry(row, dc_, sign * w * coef_c);
                    pass.entry(row, da_, sign * w * coef_a);
                }
            }
        }

        // Adsorption rows: bulk side loses Da*S, surface target gains S.
        for ad in &network.adsorptions {
            let iface = &mesh.interfaces[ad.interface];
            let n = iface.verts.len();
            let omega_c = network.surface[ad.target].omega;
            for side in &ad.sides {
                let slot = network.bulk[ad.bulk].region_slot(side.region).unwrap();
                for k in 0..n {
                    let w = weights[ad.interface][k];
                    let v = iface.verts[k];
                    let dof_b = self.layout.bulk_dof(ad.bulk, slot, v).unwrap();
                    let dof_t = self.layout.surf_dof(ad.target, k);
                    let t_pow = if omega_c == 1.0 {
                        1.0
                    } else {
                        clip(state.values[dof_t], report).powf(omega_c - 1.0)
                    };
                    let c_ad = bi * side.k_ad;
                    let c_de = bi * side.k_d * t_pow;
                    // Bulk row: + Da <S, Phi>.
                    let row_b = self.remap[dof_b];
                    let (vb1, vb2) = if self.constrained[row_b] {
                        (0.0, 0.0)
                    } else {
                        (da * w * c_ad, -da * w * c_de)
                    };
                    pass.entry(row_b, self.remap[dof_b], vb1);
                    pass.entry(row_b, dof_t, vb2);
                    // Target row: - <S, Psi>.
                    pass.entry(dof_t, self.remap[dof_b], -w * c_ad);
                    pass.entry(dof_t, dof_t, w * c_de);
                }
            }
        }

        // Transmembrane flux rows: plus side +Da J_s, minus side -Da J_s.
        let mut gate_min = f64::NAN;
        let mut gate_max = f64::NAN;
        for p in &network.permeabilities {
            let iface = &mesh.interfaces[p.interface];
            let n = iface.verts.len();
            let bulk = &network.bulk[p.bulk];
            let slot_plus = bulk.region_slot(p.region_plus).unwrap();
            let slot_minus = bulk.region_slot(p.region_minus).unwrap();
            for k in 0..n {
                let w = weights[p.interface][k];
                let v = iface.verts[k];
                let k_eff = match &p.rule {
                    CheckedPermeabilityKind::Constant { k } => *k,
                    CheckedPermeabilityKind::Gated { controller, k_max, a0, beta } => {
                        let ctrl = state.values[self.layout.surf_dof(*controller, k)];
                        let g = gate_coefficient(*k_max, *a0, *beta, ctrl);
                        gate_min = if gate_min.is_nan() { g } else { gate_min.min(g) };
                        gate_max = if gate_max.is_nan() { g } else { gate_max.max(g) };
                        g
                    }
                };
                let dof_p = self.layout.bulk_dof(p.bulk, slot_plus, v).unwrap();
                let dof_m = self.layout.bulk_dof(p.bulk, slot_minus, v).unwrap();
                let (row_p, row_m) = (self.remap[dof_p], self.remap[dof_m]);
                let coef = da * w * bi * k_eff;
                let cp = if self.constrained[row_p] { 0.0 } else { coef };
                let cm = if self.constrained[row_m] { 0.0 } else { coef };
                pass.entry(row_p, self.remap[dof_p], cp);
                pass.entry(row_p, self.remap[dof_m], -cp);
                pass.entry(row_m, self.remap[dof_p], -cm);
                pass.entry(row_m, self.remap[dof_m], cm);
            }
        }
        report.gate_min = gate_min;
        report.gate_max = gate_max;

        // Dirichlet identities and periodic ties.
        for &(dof, vertex, di) in &self.dirichlet_dofs {
            pass.entry(dof, dof, 1.0);
            let p = mesh.vertices[vertex];
            rhs[dof] = self.dirichlet[di].value.eval(p[0], p[1]);
        }
        for &(sl, ms) in &self.slaves {
            pass.entry(sl, sl, 1.0);
            pass.entry(sl, ms, -1.0);
            rhs[sl] = 0.0;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{generate_fitted_mesh, BoundaryTag, DomainSpec, Rect};
    use crate::params::{
        derive_parameters, validate_network, RawPhysics, SpeciesNetworkConfig,
    };

    fn circle(n: usize, r: f64, c: Point) -> Vec<Point> {
        (0..n)
            .map(|k| {
                let t = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
                [c[0] + r * t.cos(), c[1] + r * t.sin()]
            })
            .collect()
    }

    fn params_51() -> DimensionlessParams {
        derive_parameters(&RawPhysics {
            re: Some(10.0),
            ca: Some(0.1),
            bi: Some(0.4),
            da: Some(1.0),
            pe: Some(1.0),
            pe_gamma: Some(1.0),
            elasticity: Some(0.1),
            rho_plus: Some(10.0),
            rho_minus: Some(1.0),
            eta_plus: Some(10.0),
            eta_minus: Some(1.0),
            lambda_a: Some(1.0),
            lambda_c: Some(1.0),
            omega_a: Some(1.0),
            omega_b: Some(1.0),
            omega_c: Some(1.0),
            k_r: Some(1.0),
            k_d_plus: Some(1.0),
            k_d_minus: Some(1.0),
            d_c_plus: Some(0.5),
            d_c_minus: Some(1.0),
            d_a: Some(1.0),
            d_b: Some(1.0),
            d_cg: Some(1.0),
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn reaction_rate_examples() {
        // Detailed balance: A = lambda_c B C with unit exponents.
        let r = reaction_rate(0.5 * 0.8, 0.5, 0.8, 0.4, 1.0, 1.0, 1.0, 1.0, 1.0).unwrap();
        assert!(r.abs() < 1e-16);
        // Direct evaluation.
        let r = reaction_rate(0.8, 0.8, 0.8, 0.4, 1.0, 1.0, 1.0, 1.0, 1.0).unwrap();
        assert!((r - 0.4 * (0.64 - 0.8)).abs() < 1e-15);
        assert!((r + 0.064).abs() < 1e-15);
        // Homogeneity in the rate constants.
        let r1 = reaction_rate(0.3, 0.7, 0.9, 0.4, 2.0, 1.0, 1.0, 1.0, 1.0).unwrap();
        let r2 = reaction_rate(0.3, 0.7, 0.9, 0.4, 6.0, 3.0, 1.0, 1.0, 1.0).unwrap();
        assert!((3.0 * r1 - r2).abs() < 1e-14);
        // Non-positive input with fractional exponent is an error.
        assert!(reaction_rate(-0.1, 0.7, 0.9, 0.4, 1.0, 1.0, 1.5, 1.0, 1.0).is_err());
    }

    #[test]
    fn adsorption_source_examples() {
        // Equilibrium: C_side = C_G with lambda_a = 1.
        let s = adsorption_source(0.8, 0.8, 0.4, 1.0, 1.0, 1.0).unwrap();
        assert_eq!(s, 0.0);
        // Bi=0.1, k_d=1, lambda_a=10, C=0.1, C_G=1 -> 0.
        let s = adsorption_source(0.1, 1.0, 0.1, 10.0, 1.0, 1.0).unwrap();
        assert!(s.abs() < 1e-16);
        // Pure adsorption.
        let s = adsorption_source(1.0, 0.0, 0.1, 2.5, 1.0, 1.0).unwrap();
        assert!((s - 0.25).abs() < 1e-16);
    }

    #[test]
    fn transmembrane_flux_examples() {
        let cst = CheckedPermeabilityKind::Constant { k: 1.0 };
        assert_eq!(transmembrane_flux(0.7, 0.7, 0.4, &cst, 0.0), 0.0);
        // Gated at the midpoint: half-max permeability.
        let gated = CheckedPermeabilityKind::Gated {
            controller: 0,
            k_max: 0.1,
            a0: 0.8,
            beta: 50.0,
        };
        let j = transmembrane_flux(1.0, 0.0, 0.4, &gated, 0.8);
        assert!((j - 0.4 * 0.05).abs() < 1e-15);
        // Sealed far below the threshold: coefficient ~ k_max e^{-40}.
        let g = gate_coefficient(0.1, 0.8, 50.0, 0.0);
        assert!(g < 1e-18);
        assert!((g - 0.1 * (-40.0f64).exp()).abs() < 1e-3 * g.max(1e-300));
    }

    #[test]
    fn dissipation_sign_identities_hold_for_random_positives() {
        // Appendix-style inequality checks on 10_000 random tuples.
        let mut state = 0x2545f4914f6cdd1du64;
        let mut rnd = || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            // Log-uniform over ~[1e-3, 1e3].
            let u = (state >> 11) as f64 / (1u64 << 53) as f64;
            (10.0f64).powf(6.0 * u - 3.0)
        };
        for _ in 0..10_000 {
            let (a, b, c) = (rnd(), rnd(), rnd());
            let (cp, cm) = (rnd(), rnd());
            let (la, lc) = (rnd(), rnd());
            let (wa, wb, wc) = (rnd().min(8.0), rnd().min(8.0), rnd().min(8.0));
            let e = rnd();
            let r = dissipation::reaction(a, b, c, e, 0.4, rnd(), lc, wa, wb, wc);
            assert!(r <= 0.0, "reaction pairing {r}");
            let s = dissipation::adsorption(cp, c, e, 0.4, rnd(), la, wc);
            assert!(s <= 0.0, "adsorption pairing {s}");
            let f = dissipation::flux(cp, cm, e, 0.4, rnd());
            assert!(f >= 0.0, "flux pairing {f}");
        }
    }

    #[test]
    fn linearized_reaction_consistent_with_nonlinear_rate() {
        // At K^{m+1} = tilde K^m the linearization reproduces R exactly for
        // unit exponents, and to rounding for general ones.
        let (a, b, c) = (0.37, 0.82, 0.64);
        let (bi, k_f, k_r) = (0.4, 2.0, 0.5);
        let lin = |wa: f64, wb: f64, wc: f64| {
            let pw = |x: f64, e: f64| if e == 0.0 { 1.0 } else { x.powf(e) };
            bi * (0.5 * k_f * (b * pw(b, wb - 1.0) * pw(c, wc) + c * pw(b, wb) * pw(c, wc - 1.0))
                - k_r * a * pw(a, wa - 1.0))
        };
        let exact = reaction_rate(a, b, c, bi, k_f, k_r, 1.0, 1.0, 1.0).unwrap();
        assert_eq!(lin(1.0, 1.0, 1.0), exact);
        let exact = reaction_rate(a, b, c, bi, k_f, k_r, 2.5, 1.3, 0.7).unwrap();
        assert!((lin(2.5, 1.3, 0.7) - exact).abs() < 1e-14);
    }

    fn mesh_51(j_gamma: usize) -> FittedMesh {
        let h = 1.6295 / j_gamma as f64;
        generate_fitted_mesh(
            &DomainSpec {
                rect: Rect { x0: -0.5, y0: -0.5, x1: 0.5, y1: 0.5 },
                target_h: h,
                periodic_x: false,
                side_tags: [
                    BoundaryTag::Wall,
                    BoundaryTag::Wall,
                    BoundaryTag::Free,
                    BoundaryTag::Free,
                ],
            },
            &[(
                "gamma".into(),
                (0..j_gamma)
                    .map(|k| {
                        let t = 2.0 * std::f64::consts::PI * k as f64 / j_gamma as f64;
                        [0.3125 * t.cos(), 0.2 * t.sin()]
                    })
                    .collect(),
            )],
            None,
        )
        .unwrap()
    }

    #[test]
    fn constant_data_is_fixed_point_without_sources() {
        // Stationary mesh, no flow, no reactions/adsorption/flux: backward
        // Euler heat equation per region keeps constants exactly.
        let params = params_51();
        let mesh = mesh_51(16);
        let mut cfg = SpeciesNetworkConfig::default_network(&params, "gamma");
        cfg.reactions.clear();
        cfg.adsorptions.clear();
        cfg.permeabilities.clear();
        for b in &mut cfg.bulk {
            b.initial = vec![ScalarField::constant(0.8), ScalarField::constant(0.8)];
        }
        for s in &mut cfg.surface {
            s.initial = 0.8;
        }
        let net = validate_network(&cfg, &mesh.metadata()).unwrap();
        let solver = TransportSolver::new(&mesh, &net, vec![]).unwrap();
        let state = initialize_state(&mesh, &net, solver.layout());
        let p2 = mesh.p2();
        let u = vec![0.0; 2 * p2.n_nodes];
        let w = vec![[0.0, 0.0]; mesh.vertices.len()];
        let inputs = TransportInputs {
            mesh: &mesh,
            old_vertices: &mesh.vertices.clone(),
            p2: &p2,
            u_new: &u,
            w_new: &w,
            params: &params,
            network: &net,
            dt: 0.02,
        };
        let (next, _) = solver.step(&inputs, &state).unwrap();
        for (a, b) in next.values.iter().zip(&state.values) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn equilibrium_data_is_fixed_point_of_full_network() {
        // A = lambda_c B C_G and C = C_G / lambda_a make all sources vanish.
        let params = params_51();
        let mesh = mesh_51(16);
        let mut cfg = SpeciesNetworkConfig::default_network(&params, "gamma");
        let (b0, cg0) = (0.9, 0.7);
        let a0 = params.lambda_c * b0 * cg0;
        let c0 = cg0 / params.lambda_a;
        cfg.bulk[0].initial = vec![ScalarField::constant(c0), ScalarField::constant(c0)];
        for s in &mut cfg.surface {
            s.initial = match s.name.as_str() {
                "A_G" => a0,
                "B_G" => b0,
                _ => cg0,
            };
        }
        let net = validate_network(&cfg, &mesh.metadata()).unwrap();
        let solver = TransportSolver::new(&mesh, &net, vec![]).unwrap();
        let state = initialize_state(&mesh, &net, solver.layout());
        let p2 = mesh.p2();
        let u = vec![0.0; 2 * p2.n_nodes];
        let w = vec![[0.0, 0.0]; mesh.vertices.len()];
        let inputs = TransportInputs {
            mesh: &mesh,
            old_vertices: &mesh.vertices.clone(),
            p2: &p2,
            u_new: &u,
            w_new: &w,
            params: &params,
            network: &net,
            dt: 0.02,
        };
        let (next, _) = solver.step(&inputs, &state).unwrap();
        for (a, b) in next.values.iter().zip(&state.values) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn surface_tension_field_from_species() {
        let params = params_51();
        let mesh = mesh_51(16);
        let cfg = SpeciesNetworkConfig::default_network(&params, "gamma");
        let net = validate_network(&cfg, &mesh.metadata()).unwrap();
        let layout = SpeciesLayout::build(&mesh, &net);
        let mut state = SpeciesState {
            values: vec![0.0; layout.n_dofs],
            time: 0.0,
        };
        let n = mesh.interfaces[0].verts.len();
        for s in 0..3 {
            for k in 0..n {
                state.values[layout.surf_dof(s, k)] = 0.8;
            }
        }
        let gamma = surface_tension_field(&mesh, 0, &net, &layout, &state, params.elasticity);
        for g in gamma {
            assert!((g - (1.0 - 0.1 * 3.0 * 0.8)).abs() < 1e-14);
        }
    }
}
