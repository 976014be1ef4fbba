//! The scenario runner: builds the initial state from a declarative
//! configuration and advances it with the per-step order
//! fluid solve -> mesh update -> species solve, regenerating the bulk mesh
//! when quality degrades.

use anyhow::{anyhow, bail, Context, Result};

use interfem_core::diagnostics::{self, DiagnosticsRecord, MassSelector};
use interfem_core::fem::P2Connectivity;
use interfem_core::fluid::{
    FluidBc, FluidSolver, FluidState, FluidStepInputs, VectorField, VelocityBc,
};
use interfem_core::geometry;
use interfem_core::mesh::{
    self, generate_fitted_mesh, quality, update_vertices, BoundaryTag, DomainSpec, FittedMesh,
    MeshMotionRecord, Rect,
};
use interfem_core::meshmotion::ElasticSolver;
use interfem_core::params::{
    derive_parameters, validate_network, CheckedNetwork, DimensionlessParams,
};
use interfem_core::transport::{
    initialize_state, surface_tension_field, SpeciesDirichlet, SpeciesLayout, SpeciesState,
    StepReport, TransportInputs, TransportSolver,
};

use crate::config::{Scenario, VelBcCfg};
use crate::io::Checkpoint;

pub struct Simulation {
    pub scenario: Scenario,
    pub params: DimensionlessParams,
    pub network: CheckedNetwork,
    pub mesh: FittedMesh,
    pub p2: P2Connectivity,
    pub layout: SpeciesLayout,
    pub fluid: FluidState,
    pub species: SpeciesState,
    pub motion: MeshMotionRecord,
    pub time: f64,
    pub step_index: u64,
    pub last_gate: (f64, f64),
    pub last_picard: usize,
    pub regen_events: u64,
    pub clipped_tilde: u64,
    prev_interface_positions: Option<Vec<Vec<[f64; 2]>>>,
    pub check_invariants: bool,
    solvers: Option<Solvers>,
    initial_masses: Vec<f64>,
}

struct Solvers {
    fluid: Option<FluidSolver>,
    elastic: Option<ElasticSolver>,
    transport: TransportSolver,
}

/// Result of one step, as far as the output loop cares.
pub struct StepInfo {
    pub picard_iterations: usize,
    pub regenerated: Option<Vec<f64>>,
    pub report: StepReport,
}

fn domain_spec(sc: &Scenario) -> DomainSpec {
    let tag = |b: &VelBcCfg| match b {
        VelBcCfg::NoSlip | VelBcCfg::Dirichlet(..) => BoundaryTag::Wall,
        VelBcCfg::StressFree | VelBcCfg::Slip => BoundaryTag::Free,
        VelBcCfg::Periodic => BoundaryTag::Periodic(0),
    };
    DomainSpec {
        rect: Rect {
            x0: sc.domain.rect[0],
            y0: sc.domain.rect[1],
            x1: sc.domain.rect[2],
            y1: sc.domain.rect[3],
        },
        target_h: sc.domain.target_h,
        periodic_x: sc.domain.periodic_x,
        side_tags: [
            tag(&sc.velocity_bc[0]),
            tag(&sc.velocity_bc[1]),
            tag(&sc.velocity_bc[2]),
            tag(&sc.velocity_bc[3]),
        ],
    }
}

fn fluid_bc(sc: &Scenario) -> FluidBc {
    let conv = |b: &VelBcCfg| match b {
        VelBcCfg::NoSlip => VelocityBc::NoSlip,
        VelBcCfg::StressFree => VelocityBc::StressFree,
        VelBcCfg::Slip => VelocityBc::Slip,
        VelBcCfg::Periodic => VelocityBc::Periodic,
        VelBcCfg::Dirichlet(ex, ey) => {
            let (ex, ey) = (ex.clone(), ey.clone());
            VelocityBc::Dirichlet(VectorField(std::sync::Arc::new(move |x, y| {
                [ex.eval(x, y), ey.eval(x, y)]
            })))
        }
    };
    FluidBc {
        left: conv(&sc.velocity_bc[0]),
        right: conv(&sc.velocity_bc[1]),
        bottom: conv(&sc.velocity_bc[2]),
        top: conv(&sc.velocity_bc[3]),
    }
}

fn species_dirichlet(sc: &Scenario, network: &CheckedNetwork) -> Result<Vec<SpeciesDirichlet>> {
    sc.conc_dirichlet
        .iter()
        .map(|c| {
            let species = network
                .bulk
                .iter()
                .position(|b| b.name == c.species)
                .ok_or_else(|| anyhow!("conc_dirichlet references unknown species {}", c.species))?;
            let sides = c
                .sides
                .iter()
                .map(|s| match s.as_str() {
                    "left" => Ok(mesh::RectSide::Left),
                    "right" => Ok(mesh::RectSide::Right),
                    "bottom" => Ok(mesh::RectSide::Bottom),
                    "top" => Ok(mesh::RectSide::Top),
                    other => Err(anyhow!("unknown side `{other}`")),
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(SpeciesDirichlet {
                species,
                sides,
                value: c.value.field(),
            })
        })
        .collect()
}

impl Simulation {
    pub fn new(scenario: Scenario) -> Result<Self> {
        let params = derive_parameters(&scenario.physics).context("deriving parameters")?;
        let polylines: Vec<(String, Vec<[f64; 2]>)> = scenario
            .interfaces
            .iter()
            .map(|i| (i.id.clone(), i.shape.markers()))
            .collect();
        let mesh = generate_fitted_mesh(&domain_spec(&scenario), &polylines, None)
            .context("generating the fitted mesh")?;
        let network = validate_network(&scenario.network()?, &mesh.metadata())
            .map_err(|e| anyhow!("network validation: {e}"))?;
        let layout = SpeciesLayout::build(&mesh, &network);
        let species = initialize_state(&mesh, &network, &layout);
        let p2 = mesh.p2();
        let fluid = FluidState::zero(&p2, mesh.triangles.len());
        let motion = MeshMotionRecord::zero(&mesh, scenario.dt);
        let mut sim = Simulation {
            scenario,
            params,
            network,
            mesh,
            p2,
            layout,
            fluid,
            species,
            motion,
            time: 0.0,
            step_index: 0,
            last_gate: (f64::NAN, f64::NAN),
            last_picard: 0,
            regen_events: 0,
            clipped_tilde: 0,
            check_invariants: false,
            solvers: None,
            initial_masses: Vec::new(),
            prev_interface_positions: None,
        };
        sim.initial_masses = sim.ms_values();
        Ok(sim)
    }

    pub fn from_checkpoint(scenario: Scenario, ck: Checkpoint) -> Result<Self> {
        let params = derive_parameters(&scenario.physics)?;
        let network = validate_network(&scenario.network()?, &ck.mesh.metadata())
            .map_err(|e| anyhow!("network validation: {e}"))?;
        let layout = SpeciesLayout::build(&ck.mesh, &network);
        if layout.n_dofs != ck.species.values.len() {
            bail!("checkpoint does not match the scenario's species layout");
        }
        let p2 = ck.mesh.p2();
        let mut sim = Simulation {
            scenario,
            params,
            network,
            mesh: ck.mesh,
            p2,
            layout,
            fluid: ck.fluid,
            species: ck.species,
            motion: ck.motion,
            time: ck.time,
            step_index: ck.step_index,
            last_gate: (f64::NAN, f64::NAN),
            last_picard: 0,
            regen_events: 0,
            clipped_tilde: 0,
            check_invariants: false,
            solvers: None,
            initial_masses: Vec::new(),
            prev_interface_positions: ck.prev_interface_positions,
        };
        sim.initial_masses = sim.ms_values();
        Ok(sim)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            scenario_name: self.scenario.name.clone(),
            time: self.time,
            step_index: self.step_index,
            mesh: self.mesh.clone(),
            fluid: self.fluid.clone(),
            species: self.species.clone(),
            motion: self.motion.clone(),
            prev_interface_positions: self.prev_interface_positions.clone(),
        }
    }

    fn ensure_solvers(&mut self) -> Result<()> {
        if self.solvers.is_some() {
            return Ok(());
        }
        let transport = TransportSolver::new(
            &self.mesh,
            &self.network,
            species_dirichlet(&self.scenario, &self.network)?,
        )
        .map_err(|e| anyhow!("transport setup: {e}"))?;
        let (fluid, elastic) = if self.scenario.fluid_on {
            (
                Some(FluidSolver::new(&self.mesh, &self.p2, fluid_bc(&self.scenario))
                    .map_err(|e| anyhow!("fluid setup: {e}"))?),
                Some(ElasticSolver::new(&self.mesh).map_err(|e| anyhow!("elastic setup: {e}"))?),
            )
        } else {
            (None, None)
        };
        self.solvers = Some(Solvers {
            fluid,
            elastic,
            transport,
        });
        Ok(())
    }

    pub fn surface_tensions(&self) -> Vec<Vec<f64>> {
        (0..self.mesh.interfaces.len())
            .map(|f| {
                surface_tension_field(
                    &self.mesh,
                    f,
                    &self.network,
                    &self.layout,
                    &self.species,
                    self.params.elasticity,
                )
            })
            .collect()
    }

    /// One full step: fluid system on the current mesh, elastic mesh update,
    /// species on the new mesh; then a quality-triggered regeneration.
    pub fn step(&mut self) -> Result<StepInfo> {
        self.ensure_solvers()?;
        let dt = self.scenario.dt;
        let gamma = self.surface_tensions();

        let old_vertices = self.mesh.vertices.clone();
        let (u_new, w_new, picard) = if self.scenario.fluid_on {
            // Linear extrapolation of the interface as the Picard warm start.
            let current: Vec<Vec<[f64; 2]>> = (0..self.mesh.interfaces.len())
                .map(|f| self.mesh.interface_positions(f))
                .collect();
            let predicted: Option<Vec<Vec<[f64; 2]>>> =
                self.prev_interface_positions.as_ref().and_then(|prev| {
                    if prev.len() != current.len()
                        || prev.iter().zip(&current).any(|(a, b)| a.len() != b.len())
                    {
                        return None;
                    }
                    Some(
                        current
                            .iter()
                            .zip(prev)
                            .map(|(c, p)| {
                                c.iter()
                                    .zip(p)
                                    .map(|(cc, pp)| {
                                        [2.0 * cc[0] - pp[0], 2.0 * cc[1] - pp[1]]
                                    })
                                    .collect()
                            })
                            .collect(),
                    )
                });
            let solvers = self.solvers.as_mut().unwrap();
            let out = solvers
                .fluid
                .as_mut()
                .expect("fluid solver present when fluid is on")
                .step(
                    &FluidStepInputs {
                        mesh: &self.mesh,
                        p2: &self.p2,
                        u_prev: &self.fluid.velocity,
                        motion: &self.motion,
                        gamma: &gamma,
                        params: &self.params,
                        dt,
                        clamp_gamma: self.scenario.clamp_gamma,
                        predicted_positions: predicted.as_deref(),
                    },
                    self.scenario.picard_tol,
                    self.scenario.picard_max,
                )
                .map_err(|e| anyhow!("fluid step {}: {e}", self.step_index))?;
            self.prev_interface_positions = Some(current);

            let disp: Vec<Vec<[f64; 2]>> = self
                .mesh
                .interfaces
                .iter()
                .zip(&out.positions)
                .map(|(iface, new)| {
                    iface
                        .verts
                        .iter()
                        .zip(new)
                        .map(|(&v, p)| {
                            [
                                p[0] - self.mesh.vertices[v][0],
                                p[1] - self.mesh.vertices[v][1],
                            ]
                        })
                        .collect()
                })
                .collect();
            let motion = solvers
                .elastic
                .as_ref()
                .expect("elastic solver present when fluid is on")
                .solve(&self.mesh, &disp, dt)
                .map_err(|e| anyhow!("mesh motion step {}: {e}", self.step_index))?;
            let new_mesh = update_vertices(&self.mesh, &motion.displacement)
                .map_err(|e| anyhow!("mesh update step {}: {e}", self.step_index))?;
            self.mesh = new_mesh;
            self.fluid = out.fluid;
            self.motion = motion;
            (
                self.fluid.velocity.clone(),
                self.motion.velocity.clone(),
                out.picard_iterations,
            )
        } else {
            (
                vec![0.0; 2 * self.p2.n_nodes],
                vec![[0.0, 0.0]; self.mesh.vertices.len()],
                0,
            )
        };

        let solvers = self.solvers.as_ref().unwrap();
        let (species, report) = solvers
            .transport
            .step(
                &TransportInputs {
                    mesh: &self.mesh,
                    old_vertices: &old_vertices,
                    p2: &self.p2,
                    u_new: &u_new,
                    w_new: &w_new,
                    params: &self.params,
                    network: &self.network,
                    dt,
                },
                &self.species,
            )
            .map_err(|e| anyhow!("species step {}: {e}", self.step_index))?;
        self.species = species;
        self.clipped_tilde += report.clipped_tilde as u64;
        self.last_gate = (report.gate_min, report.gate_max);
        self.last_picard = picard;
        self.time += dt;
        self.step_index += 1;

        if self.check_invariants {
            self.run_checks()?;
        }

        // Quality-triggered regeneration, after the step so the written
        // diagnostics see the conservative state first.
        let mut regenerated = None;
        if self.scenario.fluid_on && self.scenario.domain.regen {
            let q = quality(&self.mesh);
            if q.min_angle_deg < self.scenario.domain.regen_min_angle
                || q.max_area_ratio > self.scenario.domain.regen_area_ratio
            {
                let out = mesh::regenerate_and_interpolate(
                    &self.mesh,
                    &domain_spec(&self.scenario),
                    &self.p2,
                    &self.fluid,
                    &self.network,
                    &self.layout,
                    &self.species,
                )
                .map_err(|e| anyhow!("regeneration step {}: {e}", self.step_index))?;
                self.mesh = out.mesh;
                self.p2 = self.mesh.p2();
                self.layout = out.layout;
                self.fluid = out.fluid;
                self.species = out.species;
                self.motion = MeshMotionRecord::zero(&self.mesh, dt);
                self.solvers = None;
                self.regen_events += 1;
                regenerated = Some(out.mass_jumps);
            }
        }

        Ok(StepInfo {
            picard_iterations: picard,
            regenerated,
            report,
        })
    }

    fn run_checks(&self) -> Result<()> {
        self.mesh
            .validate_fitted()
            .map_err(|e| anyhow!("invariant check (fitted mesh): {e}"))?;
        let area = self.mesh.domain_area();
        let rect = self.mesh.rect;
        if (area - rect.area()).abs() > 1e-10 * rect.area() {
            bail!("invariant check: triangle areas sum to {area}, domain has {}", rect.area());
        }
        if !self.species.values.iter().all(|v| v.is_finite())
            || !self.fluid.velocity.iter().all(|v| v.is_finite())
        {
            bail!("invariant check: non-finite state");
        }
        for g in self.surface_tensions() {
            let min = g.iter().cloned().fold(f64::INFINITY, f64::min);
            if min <= 0.0 && !self.scenario.clamp_gamma {
                bail!("invariant check: min gamma {min} <= 0");
            }
        }
        Ok(())
    }

    /// Resolves the configured mass combinations.
    pub fn mass_selectors(&self) -> Vec<(String, MassSelector)> {
        self.scenario
            .ms_combos
            .iter()
            .map(|m| {
                let mut sel = MassSelector::default();
                for name in &m.species {
                    if let Some(i) = self.network.surface.iter().position(|s| &s.name == name) {
                        sel.surface.push(i);
                    } else if let Some(i) = self.network.bulk.iter().position(|b| &b.name == name)
                    {
                        sel.bulk.push(i);
                    }
                }
                (m.label.clone(), sel)
            })
            .collect()
    }

    pub fn fluid_solver_stats(&self) -> (usize, usize, usize) {
        self.solvers
            .as_ref()
            .and_then(|s| s.fluid.as_ref())
            .map_or((0, 0, 0), |f| f.solver_stats())
    }

    pub fn ms_values(&self) -> Vec<f64> {
        self.mass_selectors()
            .iter()
            .map(|(_, sel)| {
                diagnostics::total_mass(
                    sel,
                    &self.mesh,
                    &self.network,
                    &self.layout,
                    &self.species,
                    self.params.da,
                )
            })
            .collect()
    }

    pub fn initial_ms(&self) -> &[f64] {
        &self.initial_masses
    }

    pub fn diagnostics(&self) -> DiagnosticsRecord {
        let n_ifaces = self.mesh.interfaces.len();
        let mut areas = Vec::with_capacity(n_ifaces);
        let mut perimeters = Vec::with_capacity(n_ifaces);
        for f in 0..n_ifaces {
            let pos = self.mesh.interface_positions(f);
            areas.push(geometry::signed_area(&pos));
            perimeters.push(geometry::perimeter(&pos));
        }
        let (e_tot, _clip) = diagnostics::total_energy(
            &self.mesh,
            &self.p2,
            &self.fluid.velocity,
            &self.network,
            &self.layout,
            &self.species,
            &self.params,
        );
        let gammas = self.surface_tensions();
        let min_gamma = gammas
            .iter()
            .flat_map(|g| g.iter())
            .cloned()
            .fold(f64::INFINITY, f64::min);
        let (c_d, y_c, v_c) = if n_ifaces > 0 {
            diagnostics::bubble_metrics(&self.mesh, &self.p2, &self.fluid.velocity, 0)
        } else {
            (f64::NAN, f64::NAN, f64::NAN)
        };
        let x_c = if n_ifaces > 0 {
            diagnostics::droplet_center_x(&self.mesh, 0)
        } else {
            f64::NAN
        };
        let marangoni_x = if n_ifaces > 0 {
            diagnostics::marangoni_asymmetry_x(&self.mesh, 0, &gammas[0])
        } else {
            f64::NAN
        };
        let mut species_masses = Vec::new();
        for (b, _) in self.network.bulk.iter().enumerate() {
            species_masses.push(diagnostics::bulk_species_integral(
                &self.mesh,
                &self.network,
                &self.layout,
                &self.species,
                b,
            ));
        }
        for (s, _) in self.network.surface.iter().enumerate() {
            species_masses.push(diagnostics::surface_species_mass(
                &self.mesh,
                &self.network,
                &self.layout,
                &self.species,
                s,
            ));
        }
        DiagnosticsRecord {
            t: self.time,
            areas,
            perimeters,
            ms: self.ms_values(),
            e_tot,
            max_u: self.fluid.max_velocity,
            min_gamma,
            x_c,
            y_c,
            v_c,
            c_d,
            gate_min: self.last_gate.0,
            gate_max: self.last_gate.1,
            marangoni_x,
            species_masses,
        }
    }

    /// Column names for the diagnostics CSV, matching
    /// [`crate::io::csv_row`].
    pub fn csv_header(&self) -> Vec<String> {
        let mut cols = vec!["t".to_string(), "step".to_string(), "picard".to_string()];
        for i in &self.mesh.interfaces {
            cols.push(format!("area_{}", i.id));
            cols.push(format!("perimeter_{}", i.id));
        }
        for (label, _) in self.mass_selectors() {
            cols.push(format!("ms_{label}"));
        }
        cols.extend(
            [
                "e_tot",
                "max_u",
                "min_gamma",
                "x_c",
                "y_c",
                "v_c",
                "c_d",
                "gate_min",
                "gate_max",
                "marangoni_x",
            ]
            .map(String::from),
        );
        for b in &self.network.bulk {
            cols.push(format!("mass_{}", b.name));
        }
        for s in &self.network.surface {
            cols.push(format!("mass_{}", s.name));
        }
        cols
    }

    pub fn n_steps(&self) -> u64 {
        (self.scenario.t_end / self.scenario.dt).round() as u64
    }
}
