//! Reported observables: conserved mass combinations, total free energy,
//! droplet/bubble metrics, the Marangoni asymmetry, and the equilibrium-state
//! oracle for the relaxation benchmark.

use thiserror::Error;

use crate::fem::{p2_shapes, tri_geom, P2Connectivity};
use crate::geometry::{self, Point};
use crate::mesh::FittedMesh;
use crate::params::{CheckedNetwork, DimensionlessParams};
use crate::transport::{SpeciesLayout, SpeciesState};

#[derive(Debug, Error, PartialEq)]
pub enum DiagnosticsError {
    #[error("no positive root for the equilibrium state")]
    NoPositiveRoot,
}

/// Which species enter a conserved mass combination
/// `sum_K <K,1>_lumped + (1/Da) sum (C,1)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MassSelector {
    pub surface: Vec<usize>,
    pub bulk: Vec<usize>,
}

/// Consistent integral of one bulk species over all its regions.
pub fn bulk_species_integral(
    mesh: &FittedMesh,
    network: &CheckedNetwork,
    layout: &SpeciesLayout,
    state: &SpeciesState,
    species: usize,
) -> f64 {
    let b = &network.bulk[species];
    let mut acc = 0.0;
    for (slot, &region) in b.regions.iter().enumerate() {
        for (o, t) in mesh.triangles.iter().enumerate() {
            if t.region != region {
                continue;
            }
            let area = mesh.tri_area(o);
            let _ = o;
            let s: f64 = t
                .v
                .iter()
                .map(|&v| state.values[layout.bulk_dof(species, slot, v).unwrap()])
                .sum();
            acc += area * s / 3.0;
        }
    }
    acc
}

/// Integral of one bulk species over a single region slot.
pub fn bulk_species_region_integral(
    mesh: &FittedMesh,
    network: &CheckedNetwork,
    layout: &SpeciesLayout,
    state: &SpeciesState,
    species: usize,
    region: usize,
) -> f64 {
    let b = &network.bulk[species];
    let Some(slot) = b.region_slot(region) else {
        return 0.0;
    };
    let mut acc = 0.0;
    for (o, t) in mesh.triangles.iter().enumerate() {
        if t.region != region {
            continue;
        }
        let area = mesh.tri_area(o);
        let s: f64 = t
            .v
            .iter()
            .map(|&v| state.values[layout.bulk_dof(species, slot, v).unwrap()])
            .sum();
        acc += area * s / 3.0;
    }
    acc
}

/// Mass-lumped integral of one surface species over its interface.
pub fn surface_species_mass(
    mesh: &FittedMesh,
    network: &CheckedNetwork,
    layout: &SpeciesLayout,
    state: &SpeciesState,
    species: usize,
) -> f64 {
    let iface = network.surface[species].interface;
    let pos = mesh.interface_positions(iface);
    let w = geometry::lumped_vertex_weights(&pos);
    (0..pos.len())
        .map(|k| w[k] * state.values[layout.surf_dof(species, k)])
        .sum()
}

/// `m_s` for the selected combination: lumped surface masses plus bulk
/// integrals weighted by `1/Da`.
pub fn total_mass(
    selector: &MassSelector,
    mesh: &FittedMesh,
    network: &CheckedNetwork,
    layout: &SpeciesLayout,
    state: &SpeciesState,
    da: f64,
) -> f64 {
    let mut acc = 0.0;
    for &s in &selector.surface {
        acc += surface_species_mass(mesh, network, layout, state, s);
    }
    for &b in &selector.bulk {
        acc += bulk_species_integral(mesh, network, layout, state, b) / da;
    }
    acc
}

const LN_CLIP: f64 = 1e-12;

fn mix_energy(value: f64, potential: f64, omega: f64, elasticity: f64, clipped: &mut usize) -> f64 {
    let v = if value < LN_CLIP {
        *clipped += 1;
        LN_CLIP
    } else {
        value
    };
    elasticity * (potential + omega * (v.ln() - 1.0)) * v
}

/// Total free energy: kinetic + bulk mixing + interfacial. The surface part
/// uses consistent 3-point quadrature of the nonlinear density; `ln` at
/// non-positive concentrations is clipped at 1e-12 and counted.
pub fn total_energy(
    mesh: &FittedMesh,
    p2: &P2Connectivity,
    velocity: &[f64],
    network: &CheckedNetwork,
    layout: &SpeciesLayout,
    state: &SpeciesState,
    params: &DimensionlessParams,
) -> (f64, usize) {
    let mut clipped = 0usize;
    let quad = crate::fem::tri_quad_deg4();

    // Kinetic part.
    let mut kinetic = 0.0;
    for (o, t) in mesh.triangles.iter().enumerate() {
        let rho = params.density(mesh.region_kinds[t.region]);
        let pos = [
            mesh.vertices[t.v[0]],
            mesh.vertices[t.v[1]],
            mesh.vertices[t.v[2]],
        ];
        let geom = tri_geom(pos);
        let nodes = &p2.tri_nodes[o];
        for q in 0..quad.points.len() {
            let shapes = p2_shapes(quad.points[q]);
            let mut u = [0.0f64; 2];
            for k in 0..6 {
                u[0] += shapes[k] * velocity[2 * nodes[k]];
                u[1] += shapes[k] * velocity[2 * nodes[k] + 1];
            }
            kinetic += 0.5 * rho * (u[0] * u[0] + u[1] * u[1]) * quad.weights[q] * geom.area;
        }
    }

    // Bulk mixing energy, consistent quadrature of the nonlinear density.
    let mut mixing = 0.0;
    for (s, b) in network.bulk.iter().enumerate() {
        for (slot, &region) in b.regions.iter().enumerate() {
            for (o, t) in mesh.triangles.iter().enumerate() {
                if t.region != region {
                    continue;
                }
                let pos = [
                    mesh.vertices[t.v[0]],
                    mesh.vertices[t.v[1]],
                    mesh.vertices[t.v[2]],
                ];
                let geom = tri_geom(pos);
                let vals = [
                    state.values[layout.bulk_dof(s, slot, t.v[0]).unwrap()],
                    state.values[layout.bulk_dof(s, slot, t.v[1]).unwrap()],
                    state.values[layout.bulk_dof(s, slot, t.v[2]).unwrap()],
                ];
                for q in 0..quad.points.len() {
                    let l = quad.points[q];
                    let c = l[0] * vals[0] + l[1] * vals[1] + l[2] * vals[2];
                    mixing += quad.weights[q]
                        * geom.area
                        * mix_energy(c, b.potential, 1.0, params.elasticity, &mut clipped);
                }
            }
        }
    }

    // Interfacial energy: 1 + sum_K g(K) per interface.
    let mut interfacial = 0.0;
    for (f, iface) in mesh.interfaces.iter().enumerate() {
        let pos: Vec<Point> = iface.verts.iter().map(|&v| mesh.vertices[v]).collect();
        let n = pos.len();
        for j in 0..n {
            let k = (j + 1) % n;
            let len = geometry::norm(geometry::sub(pos[k], pos[j]));
            interfacial += len;
            for (tq, wq) in crate::fem::edge_gauss3() {
                let mut density = 0.0;
                for (s, sp) in network.surface.iter().enumerate() {
                    if sp.interface != f {
                        continue;
                    }
                    let v = state.values[layout.surf_dof(s, j)] * (1.0 - tq)
                        + state.values[layout.surf_dof(s, k)] * tq;
                    density +=
                        mix_energy(v, sp.potential, sp.omega, params.elasticity, &mut clipped);
                }
                interfacial += wq * len * density;
            }
        }
    }

    (
        kinetic + mixing / (params.we * params.da) + interfacial / params.we,
        clipped,
    )
}

/// Circularity, vertical center of mass, and rise velocity of the region
/// enclosed by one interface.
pub fn bubble_metrics(
    mesh: &FittedMesh,
    p2: &P2Connectivity,
    velocity: &[f64],
    iface: usize,
) -> (f64, f64, f64) {
    let pos = mesh.interface_positions(iface);
    let area = geometry::signed_area(&pos);
    let perimeter = geometry::perimeter(&pos);
    let c_d = 2.0 * (std::f64::consts::PI * area).sqrt() / perimeter;
    let (_, my) = geometry::area_moments(&pos);
    let y_c = my / area;

    let region = mesh.interfaces[iface].region_minus;
    let quad = crate::fem::tri_quad_deg4();
    let mut uy_int = 0.0;
    for (o, t) in mesh.triangles.iter().enumerate() {
        if t.region != region {
            continue;
        }
        let tri_pos = [
            mesh.vertices[t.v[0]],
            mesh.vertices[t.v[1]],
            mesh.vertices[t.v[2]],
        ];
        let geom = tri_geom(tri_pos);
        let nodes = &p2.tri_nodes[o];
        for q in 0..quad.points.len() {
            let shapes = p2_shapes(quad.points[q]);
            let mut uy = 0.0;
            for k in 0..6 {
                uy += shapes[k] * velocity[2 * nodes[k] + 1];
            }
            uy_int += uy * quad.weights[q] * geom.area;
        }
    }
    (c_d, y_c, uy_int / area)
}

/// Horizontal center of mass of the region enclosed by one interface.
pub fn droplet_center_x(mesh: &FittedMesh, iface: usize) -> f64 {
    let pos = mesh.interface_positions(iface);
    let area = geometry::signed_area(&pos);
    let (mx, _) = geometry::area_moments(&pos);
    mx / area
}

/// Net Marangoni traction along x: `int_Gamma grad_s gamma . e_x`.
pub fn marangoni_asymmetry_x(mesh: &FittedMesh, iface: usize, gamma: &[f64]) -> f64 {
    let pos = mesh.interface_positions(iface);
    let n = pos.len();
    let mut acc = 0.0;
    for j in 0..n {
        let k = (j + 1) % n;
        let e = geometry::sub(pos[k], pos[j]);
        let len = geometry::norm(e);
        // grad_s gamma * len = (gamma_k - gamma_j) * tangent
        acc += (gamma[k] - gamma[j]) * e[0] / len;
    }
    acc
}

/// Uniform equilibrium state of the default network: concentrations solve
/// the zero-source conditions and the two mass constraints, and the shape is
/// the area-equivalent circle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquilibriumState {
    pub l_e: f64,
    pub a_gamma: f64,
    pub b_gamma: f64,
    pub c_gamma: f64,
    pub c_bulk: f64,
}

/// Solves the equilibrium equations by nested bisection after eliminating
/// `A` and `C`; residuals at the root are below 1e-12.
///
/// `area_minus` is the conserved enclosed area, `domain_area` the total
/// domain area, `m1 = <A+B, 1>` and `m2 = <A+C_G, 1> + (1/Da) (C, 1)` the
/// conserved combinations of the initial data.
pub fn equilibrium_oracle(
    area_minus: f64,
    domain_area: f64,
    m1: f64,
    m2: f64,
    params: &DimensionlessParams,
) -> Result<EquilibriumState, DiagnosticsError> {
    let l_e = 2.0 * (std::f64::consts::PI * area_minus).sqrt();
    let (wa, wb, wc) = (params.omega_a, params.omega_b, params.omega_c);
    let (la, lc) = (params.lambda_a, params.lambda_c);
    let s1 = m1 / l_e;
    let s2 = m2 / l_e;
    if !(s1 > 0.0 && s2 > 0.0) {
        return Err(DiagnosticsError::NoPositiveRoot);
    }

    // For a given c = C_G: B solves B + (lc B^wb c^wc)^{1/wa} = s1.
    let solve_b = |c: f64| -> f64 {
        let f = |b: f64| b + (lc * b.powf(wb) * c.powf(wc)).powf(1.0 / wa) - s1;
        let (mut lo, mut hi) = (0.0f64, s1);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    };
    let residual = |c: f64| -> f64 {
        let b = solve_b(c);
        let a = (lc * b.powf(wb) * c.powf(wc)).powf(1.0 / wa);
        let cb = c.powf(wc) / la;
        a + c + cb * domain_area / (params.da * l_e) - s2
    };

    // Bracket the root in c.
    let mut hi = 1.0;
    let mut guard = 0;
    while residual(hi) < 0.0 {
        hi *= 2.0;
        guard += 1;
        if guard > 200 {
            return Err(DiagnosticsError::NoPositiveRoot);
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if residual(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let c_gamma = 0.5 * (lo + hi);
    let b_gamma = solve_b(c_gamma);
    let a_gamma = (lc * b_gamma.powf(wb) * c_gamma.powf(wc)).powf(1.0 / wa);
    let c_bulk = c_gamma.powf(wc) / la;
    Ok(EquilibriumState {
        l_e,
        a_gamma,
        b_gamma,
        c_gamma,
        c_bulk,
    })
}

/// One CSV row of observables; optional entries are NaN when the scenario
/// does not define them.
#[derive(Debug, Clone)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub areas: Vec<f64>,
    pub perimeters: Vec<f64>,
    pub ms: Vec<f64>,
    pub e_tot: f64,
    pub max_u: f64,
    pub min_gamma: f64,
    pub x_c: f64,
    pub y_c: f64,
    pub v_c: f64,
    pub c_d: f64,
    pub gate_min: f64,
    pub gate_max: f64,
    pub marangoni_x: f64,
    pub species_masses: Vec<f64>,
}
