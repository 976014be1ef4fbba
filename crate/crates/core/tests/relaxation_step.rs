//! Full-coupling integration checks on the ellipse-relaxation setup: one or
//! a few complete steps of the fluid -> mesh -> species loop, verifying the
//! exact discrete conservation identities and the dof-preserving pullback.

use interfem_core::diagnostics::{self, MassSelector};
use interfem_core::fluid::{FluidBc, FluidSolver, FluidState, FluidStepInputs, VelocityBc};
use interfem_core::geometry;
use interfem_core::mesh::{
    generate_fitted_mesh, update_vertices, BoundaryTag, DomainSpec, FittedMesh, MeshMotionRecord,
    Rect,
};
use interfem_core::meshmotion::ElasticSolver;
use interfem_core::params::{
    derive_parameters, validate_network, DimensionlessParams, ScalarField, SpeciesNetworkConfig,
};
use interfem_core::transport::{
    initialize_state, surface_tension_field, SpeciesState, TransportInputs, TransportSolver,
};

fn params_51() -> DimensionlessParams {
    derive_parameters(&interfem_core::RawPhysics {
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

fn bc_51() -> FluidBc {
    FluidBc {
        left: VelocityBc::NoSlip,
        right: VelocityBc::NoSlip,
        bottom: VelocityBc::StressFree,
        top: VelocityBc::StressFree,
    }
}

struct MiniRun {
    mesh: FittedMesh,
    fluid: FluidState,
    species: SpeciesState,
    motion: MeshMotionRecord,
    network: interfem_core::params::CheckedNetwork,
    layout: interfem_core::transport::SpeciesLayout,
    params: DimensionlessParams,
    dt: f64,
    picard_iters: usize,
    /// Vertex positions of the mesh the last fluid solve ran on.
    solve_vertices: Vec<[f64; 2]>,
}

fn setup(j_gamma: usize, dt: f64) -> MiniRun {
    let params = params_51();
    let mesh = mesh_51(j_gamma);
    let mut cfg = SpeciesNetworkConfig::default_network(&params, "gamma");
    cfg.bulk[0].initial = vec![ScalarField::constant(0.8), ScalarField::constant(0.8)];
    for s in &mut cfg.surface {
        s.initial = 0.8;
    }
    let network = validate_network(&cfg, &mesh.metadata()).unwrap();
    let solver = TransportSolver::new(&mesh, &network, vec![]).unwrap();
    let species = initialize_state(&mesh, &network, solver.layout());
    let layout = solver.layout().clone();
    let p2 = mesh.p2();
    let fluid = FluidState::zero(&p2, mesh.triangles.len());
    let motion = MeshMotionRecord::zero(&mesh, dt);
    let solve_vertices = mesh.vertices.clone();
    MiniRun {
        mesh,
        fluid,
        species,
        motion,
        network,
        layout,
        params,
        dt,
        picard_iters: 0,
        solve_vertices,
    }
}

fn advance(run: &mut MiniRun) {
    let p2 = run.mesh.p2();
    let gamma: Vec<Vec<f64>> = (0..run.mesh.interfaces.len())
        .map(|f| {
            surface_tension_field(
                &run.mesh,
                f,
                &run.network,
                &run.layout,
                &run.species,
                run.params.elasticity,
            )
        })
        .collect();
    let mut fluid_solver = FluidSolver::new(&run.mesh, &p2, bc_51()).unwrap();
    let out = fluid_solver
        .step(
            &FluidStepInputs {
                mesh: &run.mesh,
                p2: &p2,
                u_prev: &run.fluid.velocity,
                motion: &run.motion,
                gamma: &gamma,
                params: &run.params,
                dt: run.dt,
                clamp_gamma: false,
                predicted_positions: None,
            },
            1e-12,
            50,
        )
        .unwrap();
    run.picard_iters = out.picard_iterations;

    let disp: Vec<Vec<[f64; 2]>> = run
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
                        p[0] - run.mesh.vertices[v][0],
                        p[1] - run.mesh.vertices[v][1],
                    ]
                })
                .collect()
        })
        .collect();
    let elastic = ElasticSolver::new(&run.mesh).unwrap();
    let motion = elastic.solve(&run.mesh, &disp, run.dt).unwrap();
    let old_vertices = run.mesh.vertices.clone();
    let new_mesh = update_vertices(&run.mesh, &motion.displacement).unwrap();

    let transport = TransportSolver::new(&new_mesh, &run.network, vec![]).unwrap();
    let (species, _) = transport
        .step(
            &TransportInputs {
                mesh: &new_mesh,
                old_vertices: &old_vertices,
                p2: &p2,
                u_new: &out.fluid.velocity,
                w_new: &motion.velocity,
                params: &run.params,
                network: &run.network,
                dt: run.dt,
            },
            &run.species,
        )
        .unwrap();

    run.solve_vertices = old_vertices;
    run.mesh = new_mesh;
    run.fluid = out.fluid;
    run.species = species;
    run.motion = motion;
}

fn masses(run: &MiniRun) -> (f64, f64) {
    let m1 = diagnostics::total_mass(
        &MassSelector { surface: vec![0, 1], bulk: vec![] },
        &run.mesh,
        &run.network,
        &run.layout,
        &run.species,
        run.params.da,
    );
    let m2 = diagnostics::total_mass(
        &MassSelector { surface: vec![0, 2], bulk: vec![0] },
        &run.mesh,
        &run.network,
        &run.layout,
        &run.species,
        run.params.da,
    );
    (m1, m2)
}

#[test]
fn first_steps_conserve_area_and_mass_exactly() {
    let mut run = setup(16, 2e-2);
    let area0 = geometry::enclosed_area(&run.mesh.interface_positions(0)).unwrap();
    let (m1_0, m2_0) = masses(&run);
    let p2 = run.mesh.p2();
    let (e0, _) = diagnostics::total_energy(
        &run.mesh,
        &p2,
        &run.fluid.velocity,
        &run.network,
        &run.layout,
        &run.species,
        &run.params,
    );

    let mut e_prev = e0;
    for step in 0..5 {
        advance(&mut run);
        let area = geometry::enclosed_area(&run.mesh.interface_positions(0)).unwrap();
        assert!(
            (area - area0).abs() / area0 < 1e-10,
            "step {step}: area drift {}",
            (area - area0).abs() / area0
        );
        let (m1, m2) = masses(&run);
        assert!(
            (m1 - m1_0).abs() / m1_0 < 1e-12,
            "step {step}: m1 drift {}",
            (m1 - m1_0).abs() / m1_0
        );
        assert!(
            (m2 - m2_0).abs() / m2_0 < 1e-12,
            "step {step}: m2 drift {}",
            (m2 - m2_0).abs() / m2_0
        );
        let p2 = run.mesh.p2();
        let (e, _) = diagnostics::total_energy(
            &run.mesh,
            &p2,
            &run.fluid.velocity,
            &run.network,
            &run.layout,
            &run.species,
            &run.params,
        );
        assert!(e <= e_prev + 1e-12, "step {step}: energy rose {e} > {e_prev}");
        e_prev = e;
        // The ellipse relaxes: the fluid actually moves.
        assert!(run.fluid.max_velocity > 1e-4);
        assert!(run.picard_iters <= 25, "picard {}", run.picard_iters);
    }
}

#[test]
fn pressure_is_mean_zero_after_solve() {
    // The mean-zero gauge refers to the mesh the pressure was solved on.
    let mut run = setup(16, 2e-2);
    advance(&mut run);
    let verts = &run.solve_vertices;
    let nv = verts.len();
    let mut integral = 0.0;
    for (o, t) in run.mesh.triangles.iter().enumerate() {
        let area = interfem_core::fem::tri_signed_area(verts[t.v[0]], verts[t.v[1]], verts[t.v[2]]);
        let p1 = (run.fluid.pressure[t.v[0]] + run.fluid.pressure[t.v[1]] + run.fluid.pressure[t.v[2]]) / 3.0;
        integral += area * (p1 + run.fluid.pressure[nv + o]);
    }
    assert!(integral.abs() < 1e-10, "mean pressure {integral}");
}
