//! The six shipped scenarios as declarative configurations.

use crate::config::{
    AdsorptionCfgLine, BulkCfg, ConcDirichletCfg, DomainCfg, Expr, InterfaceCfg, MsComboCfg,
    PermCfg, ReactionCfg, Scenario, Shape, SurfCfg, VelBcCfg,
};
use interfem_core::params::RawPhysics;

pub const NAMES: [&str; 6] = [
    "relaxation",
    "cholesterol",
    "droplet-marangoni",
    "gating",
    "shear",
    "rising-bubble",
];

pub fn by_name(name: &str) -> Option<Scenario> {
    match name {
        "relaxation" => Some(relaxation(64)),
        "cholesterol" => Some(cholesterol()),
        "droplet-marangoni" => Some(droplet_marangoni()),
        "gating" => Some(gating()),
        "shear" => Some(shear(1.0)),
        "rising-bubble" => Some(rising_bubble(1.0)),
        _ => None,
    }
}

pub fn summary(name: &str) -> &'static str {
    match name {
        "relaxation" => "ellipse relaxing to a circle; convergence and conservation benchmark",
        "cholesterol" => "two-interface efflux cascade with the fluid solver disabled",
        "droplet-marangoni" => "reaction-driven droplet migration in a bulk concentration gradient",
        "gating" => "droplet migration with a payload species behind a sigmoidal permeability gate",
        "shear" => "droplet deformation in shear flow, periodic in x",
        "rising-bubble" => "buoyant bubble with gravity -0.98 and slip top/bottom walls",
        _ => "",
    }
}

fn walls() -> [VelBcCfg; 4] {
    [
        VelBcCfg::NoSlip,
        VelBcCfg::NoSlip,
        VelBcCfg::StressFree,
        VelBcCfg::StressFree,
    ]
}

fn default_surfaces(iface: &str, d: [f64; 3], omega_a: f64, init: [f64; 3]) -> Vec<SurfCfg> {
    ["A_G", "B_G", "C_G"]
        .iter()
        .enumerate()
        .map(|(i, name)| SurfCfg {
            name: (*name).to_string(),
            iface: iface.into(),
            d: d[i],
            omega: if i == 0 { omega_a } else { 1.0 },
            init: init[i],
            potential: 0.0,
        })
        .collect()
}

fn default_ms() -> Vec<MsComboCfg> {
    vec![
        MsComboCfg {
            label: "m1".into(),
            species: vec!["A_G".into(), "B_G".into()],
        },
        MsComboCfg {
            label: "m2".into(),
            species: vec!["A_G".into(), "C_G".into(), "C".into()],
        },
    ]
}

/// Ellipse relaxation and conservation benchmark; `j_gamma` in {16, 32, 64}
/// selects the resolution ladder with its paired time step.
pub fn relaxation(j_gamma: usize) -> Scenario {
    let dt = match j_gamma {
        16 => 2.0e-2,
        32 => 5.0e-3,
        _ => 1.25e-3,
    };
    // Bulk spacing tied to the interface marker spacing.
    let target_h = 1.6295 / j_gamma as f64;
    Scenario {
        name: format!("relaxation (J_Gamma = {j_gamma})"),
        domain: DomainCfg {
            rect: [-0.5, -0.5, 0.5, 0.5],
            target_h,
            periodic_x: false,
            regen: false,
            regen_min_angle: 10.0,
            regen_area_ratio: 50.0,
        },
        interfaces: vec![InterfaceCfg {
            id: "gamma".into(),
            shape: Shape::Ellipse {
                cx: 0.0,
                cy: 0.0,
                rx: 0.3125,
                ry: 0.2,
                n: j_gamma,
            },
        }],
        physics: RawPhysics {
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
        },
        fluid_on: true,
        clamp_gamma: false,
        bulk: vec![BulkCfg {
            name: "C".into(),
            regions: vec!["plus".into(), "minus".into()],
            d: vec![0.5, 1.0],
            init: vec![Expr::constant(0.8), Expr::constant(0.8)],
            potential: 0.0,
        }],
        surface: default_surfaces("gamma", [1.0, 1.0, 1.0], 1.0, [0.8, 0.8, 0.8]),
        reactions: vec![ReactionCfg {
            iface: "gamma".into(),
            c: "C_G".into(),
            b: "B_G".into(),
            product: "A_G".into(),
            k_r: 1.0,
            lambda_c: 1.0,
        }],
        adsorptions: vec![AdsorptionCfgLine {
            bulk: "C".into(),
            iface: "gamma".into(),
            side: "both".into(),
            target: "C_G".into(),
            k_d_plus: 1.0,
            k_d_minus: 1.0,
            lambda_a: 1.0,
        }],
        permeabilities: vec![PermCfg::Constant {
            bulk: "C".into(),
            iface: "gamma".into(),
            k: 1.0,
        }],
        velocity_bc: walls(),
        conc_dirichlet: vec![],
        ms_combos: default_ms(),
        dt,
        t_end: 10.0,
        picard_tol: 1e-12,
        picard_max: 50,
        snapshot_every: 0,
        checkpoint_every: 0,
    }
}

/// Two-interface efflux cascade; the fluid solver is disabled and the mesh
/// stays frozen. Circle centers/radii are declared defaults (the reference
/// figures do not state them numerically).
pub fn cholesterol() -> Scenario {
    let mk_surf = |name: &str, iface: &str, init: f64| SurfCfg {
        name: name.into(),
        iface: iface.into(),
        d: 5.0,
        omega: 1.0,
        init,
        potential: 0.0,
    };
    Scenario {
        name: "cholesterol".into(),
        domain: DomainCfg {
            rect: [-0.5, -0.5, 0.5, 0.5],
            target_h: 0.035,
            periodic_x: false,
            regen: false,
            regen_min_angle: 10.0,
            regen_area_ratio: 50.0,
        },
        interfaces: vec![
            InterfaceCfg {
                id: "g1".into(),
                shape: Shape::Circle { cx: -0.2, cy: -0.2, r: 0.25, n: 64 },
            },
            InterfaceCfg {
                id: "g2".into(),
                shape: Shape::Circle { cx: 0.25, cy: 0.25, r: 0.15, n: 40 },
            },
        ],
        physics: RawPhysics {
            re: Some(1.0),
            ca: Some(1.0),
            bi: Some(0.1),
            da: Some(0.1),
            pe: Some(1.0),
            pe_gamma: Some(10.0),
            elasticity: Some(0.1),
            rho_plus: Some(1.0),
            rho_minus: Some(1.0),
            eta_plus: Some(1.0),
            eta_minus: Some(1.0),
            lambda_a: Some(10.0),
            lambda_c: Some(10.0),
            omega_a: Some(1.0),
            omega_b: Some(1.0),
            omega_c: Some(1.0),
            k_r: Some(1.0),
            k_d_plus: Some(1.0),
            k_d_minus: Some(1.0),
            d_c_plus: Some(5.0),
            d_c_minus: Some(1.0),
            d_a: Some(5.0),
            d_b: Some(5.0),
            d_cg: Some(5.0),
            ..Default::default()
        },
        fluid_on: false,
        clamp_gamma: false,
        bulk: vec![
            BulkCfg {
                name: "C".into(),
                regions: vec!["minus:g1".into()],
                d: vec![1.0],
                init: vec![Expr::constant(0.1)],
                potential: 0.0,
            },
            BulkCfg {
                name: "A".into(),
                regions: vec!["plus".into()],
                d: vec![5.0],
                init: vec![Expr::constant(0.0)],
                potential: 0.0,
            },
            BulkCfg {
                name: "G".into(),
                regions: vec!["minus:g2".into()],
                d: vec![1.0],
                init: vec![Expr::constant(0.0)],
                potential: 0.0,
            },
        ],
        surface: vec![
            mk_surf("A_G1", "g1", 0.0),
            mk_surf("B_G1", "g1", 1.0),
            mk_surf("C_G1", "g1", 1.0),
            mk_surf("A_G2", "g2", 0.0),
            mk_surf("F_G2", "g2", 1.0),
            mk_surf("G_G2", "g2", 0.0),
        ],
        reactions: vec![
            ReactionCfg {
                iface: "g1".into(),
                c: "C_G1".into(),
                b: "B_G1".into(),
                product: "A_G1".into(),
                k_r: 1.0,
                lambda_c: 10.0,
            },
            ReactionCfg {
                iface: "g2".into(),
                c: "A_G2".into(),
                b: "F_G2".into(),
                product: "G_G2".into(),
                k_r: 1.0,
                lambda_c: 10.0,
            },
        ],
        adsorptions: vec![
            AdsorptionCfgLine {
                bulk: "C".into(),
                iface: "g1".into(),
                side: "minus".into(),
                target: "C_G1".into(),
                k_d_plus: 1.0,
                k_d_minus: 1.0,
                lambda_a: 10.0,
            },
            AdsorptionCfgLine {
                bulk: "A".into(),
                iface: "g1".into(),
                side: "plus".into(),
                target: "A_G1".into(),
                k_d_plus: 1.0,
                k_d_minus: 1.0,
                lambda_a: 0.1,
            },
            AdsorptionCfgLine {
                bulk: "A".into(),
                iface: "g2".into(),
                side: "plus".into(),
                target: "A_G2".into(),
                k_d_plus: 1.0,
                k_d_minus: 1.0,
                lambda_a: 10.0,
            },
            AdsorptionCfgLine {
                bulk: "G".into(),
                iface: "g2".into(),
                side: "minus".into(),
                target: "G_G2".into(),
                k_d_plus: 1.0,
                k_d_minus: 1.0,
                lambda_a: 0.1,
            },
        ],
        permeabilities: vec![],
        velocity_bc: walls(),
        conc_dirichlet: vec![],
        ms_combos: vec![
            MsComboCfg {
                label: "chol".into(),
                species: vec![
                    "C".into(),
                    "A".into(),
                    "G".into(),
                    "C_G1".into(),
                    "A_G1".into(),
                    "A_G2".into(),
                    "G_G2".into(),
                ],
            },
            // The transporter and enzyme travel bound inside the complexes,
            // so their conserved pools extend through the bulk carriers.
            MsComboCfg {
                label: "transporter".into(),
                species: vec![
                    "B_G1".into(),
                    "A_G1".into(),
                    "A".into(),
                    "A_G2".into(),
                    "G_G2".into(),
                    "G".into(),
                ],
            },
            MsComboCfg {
                label: "enzyme".into(),
                species: vec!["F_G2".into(), "G_G2".into(), "G".into()],
            },
        ],
        dt: 0.02,
        t_end: 100.0,
        picard_tol: 1e-10,
        picard_max: 50,
        snapshot_every: 0,
        checkpoint_every: 0,
    }
}

/// Reaction-driven droplet migration in a maintained bulk gradient.
pub fn droplet_marangoni() -> Scenario {
    Scenario {
        name: "droplet-marangoni".into(),
        domain: DomainCfg {
            rect: [-0.5, -0.5, 0.5, 0.5],
            target_h: 0.049,
            periodic_x: false,
            regen: true,
            regen_min_angle: 10.0,
            regen_area_ratio: 50.0,
        },
        interfaces: vec![InterfaceCfg {
            id: "gamma".into(),
            shape: Shape::Circle { cx: 0.0, cy: 0.0, r: 0.25, n: 32 },
        }],
        physics: RawPhysics {
            re: Some(10.0),
            ca: Some(0.1),
            bi: Some(0.8),
            da: Some(1.0),
            pe: Some(1.0),
            pe_gamma: Some(10.0),
            elasticity: Some(1.0e-3),
            rho_plus: Some(0.1),
            rho_minus: Some(1.0),
            eta_plus: Some(0.01),
            eta_minus: Some(1.0),
            lambda_a: Some(1.0),
            lambda_c: Some(1.0),
            omega_a: Some(100.0),
            omega_b: Some(1.0),
            omega_c: Some(1.0),
            k_r: Some(0.25),
            k_d_plus: Some(0.25),
            k_d_minus: Some(0.25),
            d_c_plus: Some(0.1),
            d_c_minus: Some(1.0),
            d_a: Some(1.0),
            d_b: Some(1.0),
            d_cg: Some(1.0),
            ..Default::default()
        },
        fluid_on: true,
        clamp_gamma: false,
        bulk: vec![BulkCfg {
            name: "C".into(),
            regions: vec!["plus".into(), "minus".into()],
            d: vec![0.1, 1.0],
            init: vec![Expr::parse("x+0.5").unwrap(), Expr::constant(0.0)],
            potential: 0.0,
        }],
        surface: default_surfaces("gamma", [1.0, 1.0, 1.0], 100.0, [0.0, 1.0, 0.5]),
        reactions: vec![ReactionCfg {
            iface: "gamma".into(),
            c: "C_G".into(),
            b: "B_G".into(),
            product: "A_G".into(),
            k_r: 0.25,
            lambda_c: 1.0,
        }],
        adsorptions: vec![AdsorptionCfgLine {
            bulk: "C".into(),
            iface: "gamma".into(),
            side: "both".into(),
            target: "C_G".into(),
            k_d_plus: 0.25,
            k_d_minus: 0.25,
            lambda_a: 1.0,
        }],
        permeabilities: vec![PermCfg::Constant {
            bulk: "C".into(),
            iface: "gamma".into(),
            k: 1.0,
        }],
        velocity_bc: walls(),
        conc_dirichlet: vec![ConcDirichletCfg {
            species: "C".into(),
            sides: vec!["left".into(), "right".into()],
            value: Expr::parse("0.5+x").unwrap(),
        }],
        ms_combos: vec![MsComboCfg {
            label: "m1".into(),
            species: vec!["A_G".into(), "B_G".into()],
        }],
        dt: 1.0e-3,
        t_end: 100.0,
        picard_tol: 1e-10,
        picard_max: 50,
        snapshot_every: 0,
        checkpoint_every: 0,
    }
}

/// The droplet scenario plus a payload solute behind a sigmoidal
/// permeability gate controlled by the reaction product.
pub fn gating() -> Scenario {
    let mut sc = droplet_marangoni();
    sc.name = "gating".into();
    sc.bulk.push(BulkCfg {
        name: "Cs".into(),
        regions: vec!["plus".into(), "minus".into()],
        d: vec![1.0, 1.0],
        init: vec![Expr::constant(0.0), Expr::constant(1.0)],
        potential: 0.0,
    });
    sc.permeabilities.push(PermCfg::Gated {
        bulk: "Cs".into(),
        iface: "gamma".into(),
        controller: "A_G".into(),
        k_max: 0.1,
        a0: 0.8,
        beta: 50.0,
    });
    sc.ms_combos.push(MsComboCfg {
        label: "cs_total".into(),
        species: vec!["Cs".into()],
    });
    sc
}

/// Droplet in shear flow: periodic in x, driven lids `u = (y, 0)`.
/// `k_r_scale` of zero switches the interfacial reaction off.
pub fn shear(k_r_scale: f64) -> Scenario {
    Scenario {
        name: "shear".into(),
        domain: DomainCfg {
            rect: [-0.75, -0.5, 0.75, 0.5],
            target_h: 0.026,
            periodic_x: true,
            regen: true,
            regen_min_angle: 10.0,
            regen_area_ratio: 50.0,
        },
        interfaces: vec![InterfaceCfg {
            id: "gamma".into(),
            shape: Shape::Circle { cx: 0.0, cy: 0.0, r: 0.25, n: 64 },
        }],
        physics: RawPhysics {
            re: Some(5.0),
            ca: Some(0.2),
            bi: Some(0.1),
            da: Some(1.0),
            pe: Some(1.0),
            pe_gamma: Some(100.0),
            elasticity: Some(0.4),
            rho_plus: Some(10.0),
            rho_minus: Some(1.0),
            eta_plus: Some(10.0),
            eta_minus: Some(1.0),
            lambda_a: Some(1.0),
            lambda_c: Some(0.01),
            omega_a: Some(1.0),
            omega_b: Some(1.0),
            omega_c: Some(1.0),
            // A zero rate switches the reaction off; the positive-parameter
            // validation sees a tiny epsilon instead.
            k_r: Some((k_r_scale).max(1e-300)),
            k_d_plus: Some(1.0),
            k_d_minus: Some(1.0),
            d_c_plus: Some(0.5),
            d_c_minus: Some(1.0),
            d_a: Some(100.0),
            d_b: Some(1.0),
            d_cg: Some(1.0),
            ..Default::default()
        },
        fluid_on: true,
        clamp_gamma: false,
        bulk: vec![BulkCfg {
            name: "C".into(),
            regions: vec!["plus".into(), "minus".into()],
            d: vec![0.5, 1.0],
            init: vec![Expr::constant(0.0), Expr::constant(0.0)],
            potential: 0.0,
        }],
        surface: default_surfaces("gamma", [100.0, 1.0, 1.0], 1.0, [0.5, 0.0, 0.0]),
        reactions: vec![ReactionCfg {
            iface: "gamma".into(),
            c: "C_G".into(),
            b: "B_G".into(),
            product: "A_G".into(),
            k_r: k_r_scale,
            lambda_c: 0.01,
        }],
        adsorptions: vec![AdsorptionCfgLine {
            bulk: "C".into(),
            iface: "gamma".into(),
            side: "both".into(),
            target: "C_G".into(),
            k_d_plus: 1.0,
            k_d_minus: 1.0,
            lambda_a: 1.0,
        }],
        permeabilities: vec![PermCfg::Constant {
            bulk: "C".into(),
            iface: "gamma".into(),
            k: 1.0,
        }],
        velocity_bc: [
            VelBcCfg::Periodic,
            VelBcCfg::Periodic,
            VelBcCfg::Dirichlet(Expr::parse("y").unwrap(), Expr::constant(0.0)),
            VelBcCfg::Dirichlet(Expr::parse("y").unwrap(), Expr::constant(0.0)),
        ],
        conc_dirichlet: vec![],
        ms_combos: default_ms(),
        dt: 1.0e-3,
        t_end: 2.0,
        picard_tol: 1e-10,
        picard_max: 50,
        snapshot_every: 0,
        checkpoint_every: 0,
    }
}

/// Buoyant bubble with gravity `-0.98 e_y`, no-slip side walls and slip
/// top/bottom. `k_r_scale` of zero switches the reaction off.
pub fn rising_bubble(k_r_scale: f64) -> Scenario {
    Scenario {
        name: "rising-bubble".into(),
        domain: DomainCfg {
            rect: [-0.5, -0.5, 0.5, 1.5],
            target_h: 0.045,
            periodic_x: false,
            regen: true,
            regen_min_angle: 10.0,
            regen_area_ratio: 50.0,
        },
        interfaces: vec![InterfaceCfg {
            id: "gamma".into(),
            shape: Shape::Circle { cx: 0.0, cy: 0.0, r: 0.25, n: 64 },
        }],
        physics: RawPhysics {
            re: Some(100.0),
            ca: Some(1.0 / 24.5),
            bi: Some(0.1),
            da: Some(1.0),
            pe: Some(1.0),
            pe_gamma: Some(10.0),
            elasticity: Some(0.4),
            rho_plus: Some(10.0),
            rho_minus: Some(1.0),
            eta_plus: Some(25.0),
            eta_minus: Some(1.0),
            lambda_a: Some(1.0),
            lambda_c: Some(0.01),
            omega_a: Some(1.0),
            omega_b: Some(1.0),
            omega_c: Some(1.0),
            k_r: Some((k_r_scale).max(1e-300)),
            k_d_plus: Some(1.0),
            k_d_minus: Some(1.0),
            d_c_plus: Some(0.5),
            d_c_minus: Some(1.0),
            d_a: Some(1000.0),
            d_b: Some(1.0),
            d_cg: Some(1.0),
            gravity: Some(-0.98),
            ..Default::default()
        },
        fluid_on: true,
        clamp_gamma: false,
        bulk: vec![BulkCfg {
            name: "C".into(),
            regions: vec!["plus".into(), "minus".into()],
            d: vec![0.5, 1.0],
            init: vec![Expr::constant(0.0), Expr::constant(0.0)],
            potential: 0.0,
        }],
        surface: default_surfaces("gamma", [1000.0, 1.0, 1.0], 1.0, [0.5, 0.0, 0.0]),
        reactions: vec![ReactionCfg {
            iface: "gamma".into(),
            c: "C_G".into(),
            b: "B_G".into(),
            product: "A_G".into(),
            k_r: k_r_scale,
            lambda_c: 0.01,
        }],
        adsorptions: vec![AdsorptionCfgLine {
            bulk: "C".into(),
            iface: "gamma".into(),
            side: "both".into(),
            target: "C_G".into(),
            k_d_plus: 1.0,
            k_d_minus: 1.0,
            lambda_a: 1.0,
        }],
        permeabilities: vec![PermCfg::Constant {
            bulk: "C".into(),
            iface: "gamma".into(),
            k: 1.0,
        }],
        velocity_bc: [
            VelBcCfg::NoSlip,
            VelBcCfg::NoSlip,
            VelBcCfg::Slip,
            VelBcCfg::Slip,
        ],
        conc_dirichlet: vec![],
        ms_combos: default_ms(),
        dt: 1.0e-3,
        t_end: 6.0,
        picard_tol: 1e-10,
        picard_max: 50,
        snapshot_every: 0,
        checkpoint_every: 0,
    }
}
