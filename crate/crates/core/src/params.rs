//! Dimensionless groups, derived rate constants, and the declarative species
//! network that a scenario runs with.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ParamError {
    #[error("missing configuration key `{0}`")]
    MissingKey(&'static str),
    #[error("key `{key}` must be strictly positive, got {value}")]
    NonPositive { key: &'static str, value: f64 },
    #[error("explicit We = {we} is inconsistent with Re*Ca = {re_ca}")]
    InconsistentWeber { we: f64, re_ca: f64 },
    #[error("value for `{0}` is not finite")]
    NotFinite(&'static str),
}

#[derive(Debug, Error, PartialEq)]
pub enum NetworkError {
    #[error("unknown region `{0}`")]
    UnknownRegion(String),
    #[error("unknown interface `{0}`")]
    UnknownInterface(String),
    #[error("unknown species `{0}`")]
    UnknownSpecies(String),
    #[error("duplicate species name `{0}`")]
    DuplicateSpecies(String),
    #[error("bulk species `{species}` is not defined on the {side} side of interface `{interface}`")]
    SideNotAdjacent {
        species: String,
        interface: String,
        side: &'static str,
    },
    #[error("surface species `{species}` does not live on interface `{interface}`")]
    WrongInterface { species: String, interface: String },
    #[error("diffusivity list for `{0}` does not match its region list")]
    DiffusivityMismatch(String),
}

/// All dimensionless groups and rate/diffusion constants for one run.
///
/// Derived quantities (`we`, `k_f`, `k_ad_*`, the standard potentials) are
/// filled by [`derive_parameters`]; afterwards the struct is immutable and
/// safe to share across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct DimensionlessParams {
    pub re: f64,
    pub ca: f64,
    pub we: f64,
    pub bi: f64,
    pub da: f64,
    pub pe: f64,
    pub pe_gamma: f64,
    pub elasticity: f64,
    pub rho_plus: f64,
    pub rho_minus: f64,
    pub eta_plus: f64,
    pub eta_minus: f64,
    pub lambda_a: f64,
    pub lambda_c: f64,
    pub omega_a: f64,
    pub omega_b: f64,
    pub omega_c: f64,
    pub k_r: f64,
    pub k_d_plus: f64,
    pub k_d_minus: f64,
    pub k_f: f64,
    pub k_ad_plus: f64,
    pub k_ad_minus: f64,
    pub d_c_plus: f64,
    pub d_c_minus: f64,
    pub d_a: f64,
    pub d_b: f64,
    pub d_cg: f64,
    /// Signed vertical body-force coefficient; zero outside the buoyancy scenario.
    pub gravity: f64,
    pub u_c: f64,
    pub u_a: f64,
    pub u_b: f64,
    pub u_cg: f64,
}

/// Raw configuration values before derivation/validation. `None` means the
/// key was absent from the scenario configuration.
#[derive(Debug, Clone, Default)]
pub struct RawPhysics {
    pub re: Option<f64>,
    pub ca: Option<f64>,
    pub we: Option<f64>,
    pub bi: Option<f64>,
    pub da: Option<f64>,
    pub pe: Option<f64>,
    pub pe_gamma: Option<f64>,
    pub elasticity: Option<f64>,
    pub rho_plus: Option<f64>,
    pub rho_minus: Option<f64>,
    pub eta_plus: Option<f64>,
    pub eta_minus: Option<f64>,
    pub lambda_a: Option<f64>,
    pub lambda_c: Option<f64>,
    pub omega_a: Option<f64>,
    pub omega_b: Option<f64>,
    pub omega_c: Option<f64>,
    pub k_r: Option<f64>,
    pub k_d_plus: Option<f64>,
    pub k_d_minus: Option<f64>,
    pub d_c_plus: Option<f64>,
    pub d_c_minus: Option<f64>,
    pub d_a: Option<f64>,
    pub d_b: Option<f64>,
    pub d_cg: Option<f64>,
    pub gravity: Option<f64>,
    pub u_c: Option<f64>,
    pub u_a: Option<f64>,
    pub u_b: Option<f64>,
    pub u_cg: Option<f64>,
}

fn required(key: &'static str, v: Option<f64>) -> Result<f64, ParamError> {
    let v = v.ok_or(ParamError::MissingKey(key))?;
    if !v.is_finite() {
        return Err(ParamError::NotFinite(key));
    }
    Ok(v)
}

fn positive(key: &'static str, v: Option<f64>) -> Result<f64, ParamError> {
    let v = required(key, v)?;
    if v <= 0.0 {
        return Err(ParamError::NonPositive { key, value: v });
    }
    Ok(v)
}

/// Fills every derived constant from the raw values.
///
/// `we` is `re * ca` (rejecting an explicit value that disagrees by more than
/// 1e-12 relative), `k_f = lambda_c * k_r`, `k_ad_± = lambda_a * k_d_±`.
/// Absent standard potentials default to `u_c = 0`, `u_cg = u_b = -ln
/// lambda_a`, `u_a = u_b + u_cg - ln lambda_c`, which makes the
/// dissipation-sign identities of the source terms hold exactly.
pub fn derive_parameters(raw: &RawPhysics) -> Result<DimensionlessParams, ParamError> {
    let re = positive("re", raw.re)?;
    let ca = positive("ca", raw.ca)?;
    let re_ca = re * ca;
    let we = match raw.we {
        Some(we) => {
            if !we.is_finite() {
                return Err(ParamError::NotFinite("we"));
            }
            if (we - re_ca).abs() > 1e-12 * re_ca.abs().max(we.abs()) {
                return Err(ParamError::InconsistentWeber { we, re_ca });
            }
            we
        }
        None => re_ca,
    };
    let lambda_a = positive("lambda_a", raw.lambda_a)?;
    let lambda_c = positive("lambda_c", raw.lambda_c)?;
    let k_r = positive("k_r", raw.k_r)?;
    let k_d_plus = positive("k_d_plus", raw.k_d_plus)?;
    let k_d_minus = positive("k_d_minus", raw.k_d_minus)?;

    let u_c = raw.u_c.unwrap_or(0.0);
    let u_cg = raw.u_cg.unwrap_or(u_c - lambda_a.ln());
    let u_b = raw.u_b.unwrap_or(u_cg);
    let u_a = raw.u_a.unwrap_or(u_b + u_cg - lambda_c.ln());
    for (k, v) in [("u_c", u_c), ("u_a", u_a), ("u_b", u_b), ("u_cg", u_cg)] {
        if !v.is_finite() {
            return Err(ParamError::NotFinite(k));
        }
    }

    let gravity = raw.gravity.unwrap_or(0.0);
    if !gravity.is_finite() {
        return Err(ParamError::NotFinite("gravity"));
    }

    Ok(DimensionlessParams {
        re,
        ca,
        we,
        bi: positive("bi", raw.bi)?,
        da: positive("da", raw.da)?,
        pe: positive("pe", raw.pe)?,
        pe_gamma: positive("pe_gamma", raw.pe_gamma)?,
        elasticity: positive("elasticity", raw.elasticity)?,
        rho_plus: positive("rho_plus", raw.rho_plus)?,
        rho_minus: positive("rho_minus", raw.rho_minus)?,
        eta_plus: positive("eta_plus", raw.eta_plus)?,
        eta_minus: positive("eta_minus", raw.eta_minus)?,
        lambda_a,
        lambda_c,
        omega_a: positive("omega_a", raw.omega_a)?,
        omega_b: positive("omega_b", raw.omega_b)?,
        omega_c: positive("omega_c", raw.omega_c)?,
        k_r,
        k_d_plus,
        k_d_minus,
        k_f: lambda_c * k_r,
        k_ad_plus: lambda_a * k_d_plus,
        k_ad_minus: lambda_a * k_d_minus,
        d_c_plus: positive("d_c_plus", raw.d_c_plus)?,
        d_c_minus: positive("d_c_minus", raw.d_c_minus)?,
        d_a: positive("d_a", raw.d_a)?,
        d_b: positive("d_b", raw.d_b)?,
        d_cg: positive("d_cg", raw.d_cg)?,
        gravity,
        u_c,
        u_a,
        u_b,
        u_cg,
    })
}

impl DimensionlessParams {
    /// Re-expresses the parameters as raw values; `derive_parameters` on the
    /// result reproduces `self` (idempotence).
    pub fn to_raw(&self) -> RawPhysics {
        RawPhysics {
            re: Some(self.re),
            ca: Some(self.ca),
            we: Some(self.we),
            bi: Some(self.bi),
            da: Some(self.da),
            pe: Some(self.pe),
            pe_gamma: Some(self.pe_gamma),
            elasticity: Some(self.elasticity),
            rho_plus: Some(self.rho_plus),
            rho_minus: Some(self.rho_minus),
            eta_plus: Some(self.eta_plus),
            eta_minus: Some(self.eta_minus),
            lambda_a: Some(self.lambda_a),
            lambda_c: Some(self.lambda_c),
            omega_a: Some(self.omega_a),
            omega_b: Some(self.omega_b),
            omega_c: Some(self.omega_c),
            k_r: Some(self.k_r),
            k_d_plus: Some(self.k_d_plus),
            k_d_minus: Some(self.k_d_minus),
            d_c_plus: Some(self.d_c_plus),
            d_c_minus: Some(self.d_c_minus),
            d_a: Some(self.d_a),
            d_b: Some(self.d_b),
            d_cg: Some(self.d_cg),
            gravity: Some(self.gravity),
            u_c: Some(self.u_c),
            u_a: Some(self.u_a),
            u_b: Some(self.u_b),
            u_cg: Some(self.u_cg),
        }
    }

    pub fn density(&self, region: RegionKind) -> f64 {
        match region {
            RegionKind::Plus => self.rho_plus,
            RegionKind::Minus(_) => self.rho_minus,
        }
    }

    pub fn viscosity(&self, region: RegionKind) -> f64 {
        match region {
            RegionKind::Plus => self.eta_plus,
            RegionKind::Minus(_) => self.eta_minus,
        }
    }
}

/// Phase of a bulk region: the connected exterior, or the interior of one
/// interface.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum RegionKind {
    Plus,
    Minus(usize),
}

/// Mesh-level facts the network validator needs: region labels and
/// interface ids with their adjacent regions.
#[derive(Debug, Clone)]
pub struct MeshMetadata {
    /// Region names; index is the region id used everywhere else.
    pub regions: Vec<String>,
    pub kinds: Vec<RegionKind>,
    pub interfaces: Vec<InterfaceMeta>,
}

#[derive(Debug, Clone)]
pub struct InterfaceMeta {
    pub id: String,
    pub region_minus: usize,
    pub region_plus: usize,
}

impl MeshMetadata {
    /// Resolves a region reference. Accepts the canonical names plus the
    /// shorthand `minus` when there is exactly one interior region.
    pub fn resolve_region(&self, name: &str) -> Result<usize, NetworkError> {
        if let Some(i) = self.regions.iter().position(|r| r == name) {
            return Ok(i);
        }
        if name == "minus" {
            let minus: Vec<usize> = self
                .kinds
                .iter()
                .enumerate()
                .filter(|(_, k)| matches!(k, RegionKind::Minus(_)))
                .map(|(i, _)| i)
                .collect();
            if minus.len() == 1 {
                return Ok(minus[0]);
            }
        }
        Err(NetworkError::UnknownRegion(name.to_string()))
    }

    pub fn resolve_interface(&self, id: &str) -> Result<usize, NetworkError> {
        self.interfaces
            .iter()
            .position(|m| m.id == id)
            .ok_or_else(|| NetworkError::UnknownInterface(id.to_string()))
    }
}

/// Spatial initial-value field; wraps a closure so presets and the config
/// expression evaluator can both produce one.
#[derive(Clone)]
pub struct ScalarField(pub Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>);

impl ScalarField {
    pub fn constant(v: f64) -> Self {
        ScalarField(Arc::new(move |_, _| v))
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        (self.0)(x, y)
    }
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ScalarField(..)")
    }
}

/// Which side(s) of an interface a bulk species exchanges with.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SideSelector {
    Plus,
    Minus,
    Both,
}

#[derive(Debug, Clone)]
pub struct BulkSpeciesConfig {
    pub name: String,
    /// Region references (by name) where the species is defined.
    pub regions: Vec<String>,
    /// Diffusivity per region, aligned with `regions`.
    pub diffusivities: Vec<f64>,
    /// Initial value per region, aligned with `regions`.
    pub initial: Vec<ScalarField>,
    /// Standard chemical potential entering the mixing energy.
    pub potential: f64,
}

#[derive(Debug, Clone)]
pub struct SurfaceSpeciesConfig {
    pub name: String,
    pub interface: String,
    pub diffusivity: f64,
    /// Adsorption-intensity exponent of this species.
    pub omega: f64,
    pub initial: f64,
    /// Standard chemical potential entering the interfacial energy.
    pub potential: f64,
}

/// One reversible surface reaction `reactant_c + reactant_b <-> product`.
#[derive(Debug, Clone)]
pub struct ReactionConfig {
    pub interface: String,
    pub reactant_c: String,
    pub reactant_b: String,
    pub product: String,
    pub k_r: f64,
    pub lambda_c: f64,
}

#[derive(Debug, Clone)]
pub struct AdsorptionConfig {
    pub bulk: String,
    pub interface: String,
    pub side: SideSelector,
    pub target: String,
    pub k_d_plus: f64,
    pub k_d_minus: f64,
    pub lambda_a: f64,
}

#[derive(Debug, Clone)]
pub enum PermeabilityKind {
    /// `J_s = Bi * k * [[C]]`.
    Constant { k: f64 },
    /// `J_s = Bi * k_max / (1 + exp(-beta (K - a0))) * [[C]]` with the
    /// controller `K` a surface species on the same interface.
    Gated {
        controller: String,
        k_max: f64,
        a0: f64,
        beta: f64,
    },
}

#[derive(Debug, Clone)]
pub struct PermeabilityConfig {
    pub bulk: String,
    pub interface: String,
    pub rule: PermeabilityKind,
}

/// Declarative species network: which species exist where, and how they
/// exchange through reactions, adsorption, and transmembrane flux.
#[derive(Debug, Clone, Default)]
pub struct SpeciesNetworkConfig {
    pub bulk: Vec<BulkSpeciesConfig>,
    pub surface: Vec<SurfaceSpeciesConfig>,
    pub reactions: Vec<ReactionConfig>,
    pub adsorptions: Vec<AdsorptionConfig>,
    pub permeabilities: Vec<PermeabilityConfig>,
}

impl SpeciesNetworkConfig {
    /// The paper's default network: one interface carrying `A_G`, `B_G`,
    /// `C_G`, a bulk solute `C` on both sides, the single reaction
    /// `C_G + B_G <-> A_G`, both-side adsorption into `C_G`, and constant
    /// permeability.
    pub fn default_network(params: &DimensionlessParams, interface: &str) -> Self {
        SpeciesNetworkConfig {
            bulk: vec![BulkSpeciesConfig {
                name: "C".into(),
                regions: vec!["plus".into(), "minus".into()],
                diffusivities: vec![params.d_c_plus, params.d_c_minus],
                initial: vec![ScalarField::constant(0.0), ScalarField::constant(0.0)],
                potential: params.u_c,
            }],
            surface: ["A_G", "B_G", "C_G"]
                .iter()
                .zip([
                    (params.d_a, params.omega_a, params.u_a),
                    (params.d_b, params.omega_b, params.u_b),
                    (params.d_cg, params.omega_c, params.u_cg),
                ])
                .map(|(name, (d, omega, potential))| SurfaceSpeciesConfig {
                    name: (*name).into(),
                    interface: interface.into(),
                    diffusivity: d,
                    omega,
                    initial: 0.0,
                    potential,
                })
                .collect(),
            reactions: vec![ReactionConfig {
                interface: interface.into(),
                reactant_c: "C_G".into(),
                reactant_b: "B_G".into(),
                product: "A_G".into(),
                k_r: params.k_r,
                lambda_c: params.lambda_c,
            }],
            adsorptions: vec![AdsorptionConfig {
                bulk: "C".into(),
                interface: interface.into(),
                side: SideSelector::Both,
                target: "C_G".into(),
                k_d_plus: params.k_d_plus,
                k_d_minus: params.k_d_minus,
                lambda_a: params.lambda_a,
            }],
            permeabilities: vec![PermeabilityConfig {
                bulk: "C".into(),
                interface: interface.into(),
                rule: PermeabilityKind::Constant { k: 1.0 },
            }],
        }
    }
}

/// Network with all references resolved to indices, ready for assembly.
#[derive(Debug, Clone)]
pub struct CheckedNetwork {
    pub bulk: Vec<CheckedBulkSpecies>,
    pub surface: Vec<CheckedSurfaceSpecies>,
    pub reactions: Vec<CheckedReaction>,
    pub adsorptions: Vec<CheckedAdsorption>,
    pub permeabilities: Vec<CheckedPermeability>,
}

#[derive(Debug, Clone)]
pub struct CheckedBulkSpecies {
    pub name: String,
    pub regions: Vec<usize>,
    pub diffusivities: Vec<f64>,
    pub initial: Vec<ScalarField>,
    pub potential: f64,
}

impl CheckedBulkSpecies {
    pub fn region_slot(&self, region: usize) -> Option<usize> {
        self.regions.iter().position(|&r| r == region)
    }
}

#[derive(Debug, Clone)]
pub struct CheckedSurfaceSpecies {
    pub name: String,
    pub interface: usize,
    pub diffusivity: f64,
    pub omega: f64,
    pub initial: f64,
    pub potential: f64,
}

#[derive(Debug, Clone)]
pub struct CheckedReaction {
    pub interface: usize,
    /// Surface-species indices: product (A-role), and the two reactants.
    pub product: usize,
    pub reactant_b: usize,
    pub reactant_c: usize,
    pub k_r: f64,
    pub k_f: f64,
}

#[derive(Debug, Clone)]
pub struct CheckedAdsorption {
    pub bulk: usize,
    pub interface: usize,
    pub target: usize,
    /// (side, region slot of the bulk species on that side, k_d, k_ad).
    pub sides: Vec<AdsorptionSide>,
}

#[derive(Debug, Clone, Copy)]
pub struct AdsorptionSide {
    pub plus: bool,
    pub region: usize,
    pub k_d: f64,
    pub k_ad: f64,
}

#[derive(Debug, Clone)]
pub struct CheckedPermeability {
    pub bulk: usize,
    pub interface: usize,
    pub region_plus: usize,
    pub region_minus: usize,
    pub rule: CheckedPermeabilityKind,
}

#[derive(Debug, Clone)]
pub enum CheckedPermeabilityKind {
    Constant { k: f64 },
    Gated { controller: usize, k_max: f64, a0: f64, beta: f64 },
}

/// Resolves and checks a network against the mesh metadata: every referenced
/// species/interface/region must exist, and a bulk species coupled on side
/// `s` of an interface must be defined on the region touching that side.
pub fn validate_network(
    cfg: &SpeciesNetworkConfig,
    meta: &MeshMetadata,
) -> Result<CheckedNetwork, NetworkError> {
    let mut names = BTreeSet::new();
    for n in cfg
        .bulk
        .iter()
        .map(|b| &b.name)
        .chain(cfg.surface.iter().map(|s| &s.name))
    {
        if !names.insert(n.clone()) {
            return Err(NetworkError::DuplicateSpecies(n.clone()));
        }
    }

    let mut bulk = Vec::with_capacity(cfg.bulk.len());
    for b in &cfg.bulk {
        if b.diffusivities.len() != b.regions.len() || b.initial.len() != b.regions.len() {
            return Err(NetworkError::DiffusivityMismatch(b.name.clone()));
        }
        let regions = b
            .regions
            .iter()
            .map(|r| meta.resolve_region(r))
            .collect::<Result<Vec<_>, _>>()?;
        bulk.push(CheckedBulkSpecies {
            name: b.name.clone(),
            regions,
            diffusivities: b.diffusivities.clone(),
            initial: b.initial.clone(),
            potential: b.potential,
        });
    }

    let mut surface = Vec::with_capacity(cfg.surface.len());
    for s in &cfg.surface {
        surface.push(CheckedSurfaceSpecies {
            name: s.name.clone(),
            interface: meta.resolve_interface(&s.interface)?,
            diffusivity: s.diffusivity,
            omega: s.omega,
            initial: s.initial,
            potential: s.potential,
        });
    }

    let find_bulk = |name: &str| {
        bulk.iter()
            .position(|b: &CheckedBulkSpecies| b.name == name)
            .ok_or_else(|| NetworkError::UnknownSpecies(name.to_string()))
    };
    let find_surface_on = |name: &str, iface: usize, iface_id: &str| {
        let i = surface
            .iter()
            .position(|s: &CheckedSurfaceSpecies| s.name == name)
            .ok_or_else(|| NetworkError::UnknownSpecies(name.to_string()))?;
        if surface[i].interface != iface {
            return Err(NetworkError::WrongInterface {
                species: name.to_string(),
                interface: iface_id.to_string(),
            });
        }
        Ok(i)
    };

    let mut reactions = Vec::with_capacity(cfg.reactions.len());
    for r in &cfg.reactions {
        let iface = meta.resolve_interface(&r.interface)?;
        reactions.push(CheckedReaction {
            interface: iface,
            product: find_surface_on(&r.product, iface, &r.interface)?,
            reactant_b: find_surface_on(&r.reactant_b, iface, &r.interface)?,
            reactant_c: find_surface_on(&r.reactant_c, iface, &r.interface)?,
            k_r: r.k_r,
            k_f: r.lambda_c * r.k_r,
        });
    }

    let mut adsorptions = Vec::with_capacity(cfg.adsorptions.len());
    for a in &cfg.adsorptions {
        let iface = meta.resolve_interface(&a.interface)?;
        let im = &meta.interfaces[iface];
        let b = find_bulk(&a.bulk)?;
        let target = find_surface_on(&a.target, iface, &a.interface)?;
        let mut sides = Vec::new();
        let mut couple = |plus: bool, k_d: f64| -> Result<(), NetworkError> {
            let region = if plus { im.region_plus } else { im.region_minus };
            match bulk[b].region_slot(region) {
                Some(_) => {
                    sides.push(AdsorptionSide {
                        plus,
                        region,
                        k_d,
                        k_ad: a.lambda_a * k_d,
                    });
                    Ok(())
                }
                None => Err(NetworkError::SideNotAdjacent {
                    species: a.bulk.clone(),
                    interface: a.interface.clone(),
                    side: if plus { "plus" } else { "minus" },
                }),
            }
        };
        match a.side {
            SideSelector::Plus => couple(true, a.k_d_plus)?,
            SideSelector::Minus => couple(false, a.k_d_minus)?,
            SideSelector::Both => {
                couple(true, a.k_d_plus)?;
                couple(false, a.k_d_minus)?;
            }
        }
        adsorptions.push(CheckedAdsorption {
            bulk: b,
            interface: iface,
            target,
            sides,
        });
    }

    let mut permeabilities = Vec::with_capacity(cfg.permeabilities.len());
    for p in &cfg.permeabilities {
        let iface = meta.resolve_interface(&p.interface)?;
        let im = &meta.interfaces[iface];
        let b = find_bulk(&p.bulk)?;
        for (region, side) in [(im.region_plus, "plus"), (im.region_minus, "minus")] {
            if bulk[b].region_slot(region).is_none() {
                return Err(NetworkError::SideNotAdjacent {
                    species: p.bulk.clone(),
                    interface: p.interface.clone(),
                    side,
                });
            }
        }
        let rule = match &p.rule {
            PermeabilityKind::Constant { k } => CheckedPermeabilityKind::Constant { k: *k },
            PermeabilityKind::Gated {
                controller,
                k_max,
                a0,
                beta,
            } => CheckedPermeabilityKind::Gated {
                controller: find_surface_on(controller, iface, &p.interface)?,
                k_max: *k_max,
                a0: *a0,
                beta: *beta,
            },
        };
        permeabilities.push(CheckedPermeability {
            bulk: b,
            interface: iface,
            region_plus: im.region_plus,
            region_minus: im.region_minus,
            rule,
        });
    }

    Ok(CheckedNetwork {
        bulk,
        surface,
        reactions,
        adsorptions,
        permeabilities,
    })
}
