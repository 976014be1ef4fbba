//! Scenario configuration: a flat, sectioned key-value text format and its
//! in-memory form.
//!
//! Grammar (one entry per line, `#` starts a comment):
//!
//! ```text
//! [domain]
//! rect = x0 y0 x1 y1
//! target_h = H
//! periodic_x = on|off
//! regen = on|off
//! regen_min_angle = DEG          # regeneration trigger
//! regen_area_ratio = RATIO
//! [interfaces]
//! interface = ID circle=CX,CY,R,N
//! interface = ID ellipse=CX,CY,RX,RY,N
//! [physics]
//! re = ... ca = ... (one key per line; see `RawPhysics` field names)
//! fluid = on|off
//! clamp_gamma = on|off
//! [species]
//! bulk = NAME regions=R1,R2 d=D1,D2 init=E1,E2 potential=U
//! surface = NAME iface=ID d=D omega=W init=V potential=U
//! ms = LABEL species=NAME1,NAME2
//! [reactions]
//! reaction = ID c=CNAME b=BNAME product=ANAME k_r=K lambda_c=L
//! [couplings]
//! adsorption = NAME iface=ID side=plus|minus|both target=SNAME k_d=KP,KM lambda_a=L
//! [permeability]
//! constant = NAME iface=ID k=K
//! gated = NAME iface=ID controller=SNAME k_max=K a0=A beta=B
//! [boundary]
//! velocity = LEFT RIGHT BOTTOM TOP   # noslip|stressfree|slip|periodic|dirichlet(EX;EY)
//! conc_dirichlet = NAME sides=left,right value=EXPR
//! [time]
//! dt = ... t_end = ... picard_tol = ... picard_max = ...
//! [output]
//! snapshot_every = N
//! checkpoint_every = N
//! ```
//!
//! Expressions admit numbers, `x`, `y`, `+ - * /`, parentheses, and unary
//! minus, with no embedded spaces.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::Arc;

use interfem_core::params::{
    AdsorptionConfig, BulkSpeciesConfig, PermeabilityConfig, PermeabilityKind, RawPhysics,
    ScalarField, SideSelector, SpeciesNetworkConfig, SurfaceSpeciesConfig,
};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {0}: {1}")]
    Parse(usize, String),
    #[error("section [{0}] missing required key `{1}`")]
    MissingKey(&'static str, &'static str),
    #[error("bad expression `{0}`: {1}")]
    Expr(String, String),
    #[error("{0}")]
    Invalid(String),
}

// ---------------------------------------------------------------------------
// Arithmetic expressions over (x, y).

#[derive(Debug, Clone, PartialEq)]
enum Ast {
    Num(f64),
    X,
    Y,
    Add(Box<Ast>, Box<Ast>),
    Sub(Box<Ast>, Box<Ast>),
    Mul(Box<Ast>, Box<Ast>),
    Div(Box<Ast>, Box<Ast>),
    Neg(Box<Ast>),
}

impl Ast {
    fn eval(&self, x: f64, y: f64) -> f64 {
        match self {
            Ast::Num(v) => *v,
            Ast::X => x,
            Ast::Y => y,
            Ast::Add(a, b) => a.eval(x, y) + b.eval(x, y),
            Ast::Sub(a, b) => a.eval(x, y) - b.eval(x, y),
            Ast::Mul(a, b) => a.eval(x, y) * b.eval(x, y),
            Ast::Div(a, b) => a.eval(x, y) / b.eval(x, y),
            Ast::Neg(a) => -a.eval(x, y),
        }
    }
}

/// A parsed scalar expression that remembers its source text.
#[derive(Debug, Clone)]
pub struct Expr {
    pub src: String,
    ast: Ast,
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr, ConfigError> {
        let mut p = ExprParser { s: src.as_bytes(), i: 0 };
        let ast = p.sum().map_err(|e| ConfigError::Expr(src.into(), e))?;
        p.skip_ws();
        if p.i != p.s.len() {
            return Err(ConfigError::Expr(src.into(), "trailing input".into()));
        }
        Ok(Expr { src: src.to_string(), ast })
    }

    pub fn constant(v: f64) -> Expr {
        Expr { src: format!("{v}"), ast: Ast::Num(v) }
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        self.ast.eval(x, y)
    }

    pub fn field(&self) -> ScalarField {
        let ast = self.ast.clone();
        ScalarField(Arc::new(move |x, y| ast.eval(x, y)))
    }
}

struct ExprParser<'a> {
    s: &'a [u8],
    i: usize,
}

impl ExprParser<'_> {
    fn skip_ws(&mut self) {
        while self.i < self.s.len() && self.s[self.i].is_ascii_whitespace() {
            self.i += 1;
        }
    }
    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.s.get(self.i).copied()
    }
    fn sum(&mut self) -> Result<Ast, String> {
        let mut lhs = self.product()?;
        loop {
            match self.peek() {
                Some(b'+') => {
                    self.i += 1;
                    lhs = Ast::Add(Box::new(lhs), Box::new(self.product()?));
                }
                Some(b'-') => {
                    self.i += 1;
                    lhs = Ast::Sub(Box::new(lhs), Box::new(self.product()?));
                }
                _ => return Ok(lhs),
            }
        }
    }
    fn product(&mut self) -> Result<Ast, String> {
        let mut lhs = self.atom()?;
        loop {
            match self.peek() {
                Some(b'*') => {
                    self.i += 1;
                    lhs = Ast::Mul(Box::new(lhs), Box::new(self.atom()?));
                }
                Some(b'/') => {
                    self.i += 1;
                    lhs = Ast::Div(Box::new(lhs), Box::new(self.atom()?));
                }
                _ => return Ok(lhs),
            }
        }
    }
    fn atom(&mut self) -> Result<Ast, String> {
        match self.peek() {
            Some(b'-') => {
                self.i += 1;
                Ok(Ast::Neg(Box::new(self.atom()?)))
            }
            Some(b'(') => {
                self.i += 1;
                let inner = self.sum()?;
                if self.peek() != Some(b')') {
                    return Err("expected ')'".into());
                }
                self.i += 1;
                Ok(inner)
            }
            Some(b'x') => {
                self.i += 1;
                Ok(Ast::X)
            }
            Some(b'y') => {
                self.i += 1;
                Ok(Ast::Y)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => {
                let start = self.i;
                while self.i < self.s.len()
                    && (self.s[self.i].is_ascii_digit()
                        || self.s[self.i] == b'.'
                        || self.s[self.i] == b'e'
                        || self.s[self.i] == b'E'
                        || ((self.s[self.i] == b'+' || self.s[self.i] == b'-')
                            && self.i > start
                            && (self.s[self.i - 1] == b'e' || self.s[self.i - 1] == b'E')))
                {
                    self.i += 1;
                }
                let txt = std::str::from_utf8(&self.s[start..self.i]).unwrap();
                txt.parse::<f64>().map(Ast::Num).map_err(|e| e.to_string())
            }
            other => Err(format!("unexpected token {other:?}")),
        }
    }
}

// ---------------------------------------------------------------------------
// Scenario description.

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    Circle { cx: f64, cy: f64, r: f64, n: usize },
    Ellipse { cx: f64, cy: f64, rx: f64, ry: f64, n: usize },
}

impl Shape {
    /// Marker positions, uniform in the parameter angle.
    pub fn markers(&self) -> Vec<[f64; 2]> {
        match *self {
            Shape::Circle { cx, cy, r, n } => (0..n)
                .map(|k| {
                    let t = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
                    [cx + r * t.cos(), cy + r * t.sin()]
                })
                .collect(),
            Shape::Ellipse { cx, cy, rx, ry, n } => (0..n)
                .map(|k| {
                    let t = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
                    [cx + rx * t.cos(), cy + ry * t.sin()]
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum VelBcCfg {
    NoSlip,
    StressFree,
    Slip,
    Periodic,
    Dirichlet(Expr, Expr),
}

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        self.src == other.src
    }
}

#[derive(Debug, Clone)]
pub struct DomainCfg {
    pub rect: [f64; 4],
    pub target_h: f64,
    pub periodic_x: bool,
    pub regen: bool,
    pub regen_min_angle: f64,
    pub regen_area_ratio: f64,
}

#[derive(Debug, Clone)]
pub struct InterfaceCfg {
    pub id: String,
    pub shape: Shape,
}

#[derive(Debug, Clone)]
pub struct BulkCfg {
    pub name: String,
    pub regions: Vec<String>,
    pub d: Vec<f64>,
    pub init: Vec<Expr>,
    pub potential: f64,
}

#[derive(Debug, Clone)]
pub struct SurfCfg {
    pub name: String,
    pub iface: String,
    pub d: f64,
    pub omega: f64,
    pub init: f64,
    pub potential: f64,
}

#[derive(Debug, Clone)]
pub struct ReactionCfg {
    pub iface: String,
    pub c: String,
    pub b: String,
    pub product: String,
    pub k_r: f64,
    pub lambda_c: f64,
}

#[derive(Debug, Clone)]
pub struct AdsorptionCfgLine {
    pub bulk: String,
    pub iface: String,
    pub side: String,
    pub target: String,
    pub k_d_plus: f64,
    pub k_d_minus: f64,
    pub lambda_a: f64,
}

#[derive(Debug, Clone)]
pub enum PermCfg {
    Constant { bulk: String, iface: String, k: f64 },
    Gated {
        bulk: String,
        iface: String,
        controller: String,
        k_max: f64,
        a0: f64,
        beta: f64,
    },
}

#[derive(Debug, Clone)]
pub struct ConcDirichletCfg {
    pub species: String,
    pub sides: Vec<String>,
    pub value: Expr,
}

#[derive(Debug, Clone)]
pub struct MsComboCfg {
    pub label: String,
    pub species: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub domain: DomainCfg,
    pub interfaces: Vec<InterfaceCfg>,
    pub physics: RawPhysics,
    pub fluid_on: bool,
    pub clamp_gamma: bool,
    pub bulk: Vec<BulkCfg>,
    pub surface: Vec<SurfCfg>,
    pub reactions: Vec<ReactionCfg>,
    pub adsorptions: Vec<AdsorptionCfgLine>,
    pub permeabilities: Vec<PermCfg>,
    pub velocity_bc: [VelBcCfg; 4],
    pub conc_dirichlet: Vec<ConcDirichletCfg>,
    pub ms_combos: Vec<MsComboCfg>,
    pub dt: f64,
    pub t_end: f64,
    pub picard_tol: f64,
    pub picard_max: usize,
    pub snapshot_every: usize,
    pub checkpoint_every: usize,
}

impl Scenario {
    /// The declarative network in core form.
    pub fn network(&self) -> Result<SpeciesNetworkConfig, ConfigError> {
        Ok(SpeciesNetworkConfig {
            bulk: self
                .bulk
                .iter()
                .map(|b| BulkSpeciesConfig {
                    name: b.name.clone(),
                    regions: b.regions.clone(),
                    diffusivities: b.d.clone(),
                    initial: b.init.iter().map(|e| e.field()).collect(),
                    potential: b.potential,
                })
                .collect(),
            surface: self
                .surface
                .iter()
                .map(|s| SurfaceSpeciesConfig {
                    name: s.name.clone(),
                    interface: s.iface.clone(),
                    diffusivity: s.d,
                    omega: s.omega,
                    initial: s.init,
                    potential: s.potential,
                })
                .collect(),
            reactions: self
                .reactions
                .iter()
                .map(|r| interfem_core::params::ReactionConfig {
                    interface: r.iface.clone(),
                    reactant_c: r.c.clone(),
                    reactant_b: r.b.clone(),
                    product: r.product.clone(),
                    k_r: r.k_r,
                    lambda_c: r.lambda_c,
                })
                .collect(),
            adsorptions: self
                .adsorptions
                .iter()
                .map(|a| {
                    Ok(AdsorptionConfig {
                        bulk: a.bulk.clone(),
                        interface: a.iface.clone(),
                        side: match a.side.as_str() {
                            "plus" => SideSelector::Plus,
                            "minus" => SideSelector::Minus,
                            "both" => SideSelector::Both,
                            other => {
                                return Err(ConfigError::Invalid(format!(
                                    "bad adsorption side `{other}`"
                                )))
                            }
                        },
                        target: a.target.clone(),
                        k_d_plus: a.k_d_plus,
                        k_d_minus: a.k_d_minus,
                        lambda_a: a.lambda_a,
                    })
                })
                .collect::<Result<_, _>>()?,
            permeabilities: self
                .permeabilities
                .iter()
                .map(|p| match p {
                    PermCfg::Constant { bulk, iface, k } => PermeabilityConfig {
                        bulk: bulk.clone(),
                        interface: iface.clone(),
                        rule: PermeabilityKind::Constant { k: *k },
                    },
                    PermCfg::Gated { bulk, iface, controller, k_max, a0, beta } => {
                        PermeabilityConfig {
                            bulk: bulk.clone(),
                            interface: iface.clone(),
                            rule: PermeabilityKind::Gated {
                                controller: controller.clone(),
                                k_max: *k_max,
                                a0: *a0,
                                beta: *beta,
                            },
                        }
                    }
                })
                .collect(),
        })
    }
}

// ---------------------------------------------------------------------------
// Parsing.

fn parse_kv(parts: &[&str]) -> BTreeMap<String, String> {
    parts
        .iter()
        .filter_map(|p| p.split_once('='))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

fn num(v: &str) -> Result<f64, String> {
    v.parse::<f64>().map_err(|e| format!("bad number `{v}`: {e}"))
}

fn num_list(v: &str) -> Result<Vec<f64>, String> {
    v.split(',').map(num).collect()
}

fn on_off(v: &str) -> Result<bool, String> {
    match v {
        "on" | "true" | "1" => Ok(true),
        "off" | "false" | "0" => Ok(false),
        other => Err(format!("expected on/off, got `{other}`")),
    }
}

pub fn parse(text: &str, name: &str) -> Result<Scenario, ConfigError> {
    let mut section = String::new();
    let mut physics_keys: BTreeMap<String, f64> = BTreeMap::new();
    let mut domain_keys: BTreeMap<String, String> = BTreeMap::new();
    let mut time_keys: BTreeMap<String, String> = BTreeMap::new();
    let mut output_keys: BTreeMap<String, String> = BTreeMap::new();
    let mut fluid_on = true;
    let mut clamp_gamma = false;
    let mut interfaces = Vec::new();
    let mut bulk = Vec::new();
    let mut surface = Vec::new();
    let mut reactions = Vec::new();
    let mut adsorptions = Vec::new();
    let mut permeabilities = Vec::new();
    let mut velocity_bc: Option<[VelBcCfg; 4]> = None;
    let mut conc_dirichlet = Vec::new();
    let mut ms_combos = Vec::new();

    for (ln, raw) in text.lines().enumerate() {
        let ln = ln + 1;
        let line = raw.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        if let Some(sec) = line.strip_prefix('[') {
            section = sec
                .strip_suffix(']')
                .ok_or_else(|| ConfigError::Parse(ln, "unterminated section header".into()))?
                .to_string();
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| ConfigError::Parse(ln, "expected key = value".into()))?;
        let key = key.trim();
        let value = value.trim();
        let err = |m: String| ConfigError::Parse(ln, m);

        match section.as_str() {
            "domain" => {
                domain_keys.insert(key.into(), value.into());
            }
            "interfaces" => {
                let parts: Vec<&str> = value.split_whitespace().collect();
                if parts.len() != 2 {
                    return Err(err("expected `interface = ID shape=args`".into()));
                }
                let id = parts[0].to_string();
                let (shape_name, args) = parts[1]
                    .split_once('=')
                    .ok_or_else(|| err("expected shape=args".into()))?;
                let vals = num_list(args).map_err(err)?;
                let shape = match (shape_name, vals.len()) {
                    ("circle", 4) => Shape::Circle {
                        cx: vals[0],
                        cy: vals[1],
                        r: vals[2],
                        n: vals[3] as usize,
                    },
                    ("ellipse", 5) => Shape::Ellipse {
                        cx: vals[0],
                        cy: vals[1],
                        rx: vals[2],
                        ry: vals[3],
                        n: vals[4] as usize,
                    },
                    _ => return Err(err(format!("bad shape `{}`", parts[1]))),
                };
                interfaces.push(InterfaceCfg { id, shape });
            }
            "physics" => match key {
                "fluid" => fluid_on = on_off(value).map_err(err)?,
                "clamp_gamma" => clamp_gamma = on_off(value).map_err(err)?,
                _ => {
                    physics_keys.insert(key.into(), num(value).map_err(err)?);
                }
            },
            "species" => {
                let parts: Vec<&str> = value.split_whitespace().collect();
                if parts.is_empty() {
                    return Err(err("empty species line".into()));
                }
                let kv = parse_kv(&parts[1..]);
                let get = |k: &str| {
                    kv.get(k)
                        .cloned()
                        .ok_or_else(|| ConfigError::Parse(ln, format!("missing `{k}=`")))
                };
                match key {
                    "bulk" => {
                        let regions: Vec<String> =
                            get("regions")?.split(',').map(|s| s.to_string()).collect();
                        let d = num_list(&get("d")?).map_err(err)?;
                        let init = get("init")?
                            .split(',')
                            .map(Expr::parse)
                            .collect::<Result<Vec<_>, _>>()?;
                        bulk.push(BulkCfg {
                            name: parts[0].into(),
                            regions,
                            d,
                            init,
                            potential: kv.get("potential").map(|v| num(v)).transpose().map_err(err)?.unwrap_or(0.0),
                        });
                    }
                    "surface" => {
                        surface.push(SurfCfg {
                            name: parts[0].into(),
                            iface: get("iface")?,
                            d: num(&get("d")?).map_err(err)?,
                            omega: num(&get("omega")?).map_err(err)?,
                            init: num(&get("init")?).map_err(err)?,
                            potential: kv.get("potential").map(|v| num(v)).transpose().map_err(err)?.unwrap_or(0.0),
                        });
                    }
                    "ms" => {
                        ms_combos.push(MsComboCfg {
                            label: parts[0].into(),
                            species: get("species")?.split(',').map(|s| s.to_string()).collect(),
                        });
                    }
                    other => return Err(err(format!("unknown species entry `{other}`"))),
                }
            }
            "reactions" => {
                let parts: Vec<&str> = value.split_whitespace().collect();
                let kv = parse_kv(&parts[1..]);
                let get = |k: &str| {
                    kv.get(k)
                        .cloned()
                        .ok_or_else(|| ConfigError::Parse(ln, format!("missing `{k}=`")))
                };
                reactions.push(ReactionCfg {
                    iface: parts[0].into(),
                    c: get("c")?,
                    b: get("b")?,
                    product: get("product")?,
                    k_r: num(&get("k_r")?).map_err(err)?,
                    lambda_c: num(&get("lambda_c")?).map_err(err)?,
                });
            }
            "couplings" => {
                let parts: Vec<&str> = value.split_whitespace().collect();
                let kv = parse_kv(&parts[1..]);
                let get = |k: &str| {
                    kv.get(k)
                        .cloned()
                        .ok_or_else(|| ConfigError::Parse(ln, format!("missing `{k}=`")))
                };
                let k_d = num_list(&get("k_d")?).map_err(err)?;
                let (k_d_plus, k_d_minus) = match k_d.len() {
                    1 => (k_d[0], k_d[0]),
                    2 => (k_d[0], k_d[1]),
                    _ => return Err(err("k_d wants one or two values".into())),
                };
                adsorptions.push(AdsorptionCfgLine {
                    bulk: parts[0].into(),
                    iface: get("iface")?,
                    side: get("side")?,
                    target: get("target")?,
                    k_d_plus,
                    k_d_minus,
                    lambda_a: num(&get("lambda_a")?).map_err(err)?,
                });
            }
            "permeability" => {
                let parts: Vec<&str> = value.split_whitespace().collect();
                let kv = parse_kv(&parts[1..]);
                let get = |k: &str| {
                    kv.get(k)
                        .cloned()
                        .ok_or_else(|| ConfigError::Parse(ln, format!("missing `{k}=`")))
                };
                match key {
                    "constant" => permeabilities.push(PermCfg::Constant {
                        bulk: parts[0].into(),
                        iface: get("iface")?,
                        k: num(&get("k")?).map_err(err)?,
                    }),
                    "gated" => permeabilities.push(PermCfg::Gated {
                        bulk: parts[0].into(),
                        iface: get("iface")?,
                        controller: get("controller")?,
                        k_max: num(&get("k_max")?).map_err(err)?,
                        a0: num(&get("a0")?).map_err(err)?,
                        beta: num(&get("beta")?).map_err(err)?,
                    }),
                    other => return Err(err(format!("unknown permeability rule `{other}`"))),
                }
            }
            "boundary" => match key {
                "velocity" => {
                    let parts: Vec<&str> = value.split_whitespace().collect();
                    if parts.len() != 4 {
                        return Err(err("velocity wants 4 entries (left right bottom top)".into()));
                    }
                    let parse_one = |s: &str| -> Result<VelBcCfg, ConfigError> {
                        Ok(match s {
                            "noslip" => VelBcCfg::NoSlip,
                            "stressfree" => VelBcCfg::StressFree,
                            "slip" => VelBcCfg::Slip,
                            "periodic" => VelBcCfg::Periodic,
                            other => {
                                let inner = other
                                    .strip_prefix("dirichlet(")
                                    .and_then(|v| v.strip_suffix(')'))
                                    .ok_or_else(|| {
                                        ConfigError::Parse(ln, format!("bad velocity bc `{other}`"))
                                    })?;
                                let (ex, ey) = inner.split_once(';').ok_or_else(|| {
                                    ConfigError::Parse(ln, "dirichlet wants (ex;ey)".into())
                                })?;
                                VelBcCfg::Dirichlet(Expr::parse(ex)?, Expr::parse(ey)?)
                            }
                        })
                    };
                    velocity_bc = Some([
                        parse_one(parts[0])?,
                        parse_one(parts[1])?,
                        parse_one(parts[2])?,
                        parse_one(parts[3])?,
                    ]);
                }
                "conc_dirichlet" => {
                    let parts: Vec<&str> = value.split_whitespace().collect();
                    let kv = parse_kv(&parts[1..]);
                    let get = |k: &str| {
                        kv.get(k)
                            .cloned()
                            .ok_or_else(|| ConfigError::Parse(ln, format!("missing `{k}=`")))
                    };
                    conc_dirichlet.push(ConcDirichletCfg {
                        species: parts[0].into(),
                        sides: get("sides")?.split(',').map(|s| s.to_string()).collect(),
                        value: Expr::parse(&get("value")?)?,
                    });
                }
                other => return Err(err(format!("unknown boundary key `{other}`"))),
            },
            "time" => {
                time_keys.insert(key.into(), value.into());
            }
            "output" => {
                output_keys.insert(key.into(), value.into());
            }
            other => return Err(err(format!("unknown section `[{other}]`"))),
        }
    }

    let dget = |k: &'static str| {
        domain_keys
            .get(k)
            .ok_or(ConfigError::MissingKey("domain", k))
    };
    let rect_vals = num_list(dget("rect")?).map_err(|e| ConfigError::Invalid(e))?;
    if rect_vals.len() != 4 {
        return Err(ConfigError::Invalid("rect wants 4 numbers".into()));
    }
    let domain = DomainCfg {
        rect: [rect_vals[0], rect_vals[1], rect_vals[2], rect_vals[3]],
        target_h: num(dget("target_h")?).map_err(ConfigError::Invalid)?,
        periodic_x: domain_keys
            .get("periodic_x")
            .map(|v| on_off(v))
            .transpose()
            .map_err(ConfigError::Invalid)?
            .unwrap_or(false),
        regen: domain_keys
            .get("regen")
            .map(|v| on_off(v))
            .transpose()
            .map_err(ConfigError::Invalid)?
            .unwrap_or(false),
        regen_min_angle: domain_keys
            .get("regen_min_angle")
            .map(|v| num(v))
            .transpose()
            .map_err(ConfigError::Invalid)?
            .unwrap_or(10.0),
        regen_area_ratio: domain_keys
            .get("regen_area_ratio")
            .map(|v| num(v))
            .transpose()
            .map_err(ConfigError::Invalid)?
            .unwrap_or(50.0),
    };

    let physics = physics_from_map(&physics_keys);
    let tget = |k: &'static str| time_keys.get(k).ok_or(ConfigError::MissingKey("time", k));
    let dt = num(tget("dt")?).map_err(ConfigError::Invalid)?;
    let t_end = num(tget("t_end")?).map_err(ConfigError::Invalid)?;

    Ok(Scenario {
        name: name.to_string(),
        domain,
        interfaces,
        physics,
        fluid_on,
        clamp_gamma,
        bulk,
        surface,
        reactions,
        adsorptions,
        permeabilities,
        velocity_bc: velocity_bc.ok_or(ConfigError::MissingKey("boundary", "velocity"))?,
        conc_dirichlet,
        ms_combos,
        dt,
        t_end,
        picard_tol: time_keys
            .get("picard_tol")
            .map(|v| num(v))
            .transpose()
            .map_err(ConfigError::Invalid)?
            .unwrap_or(1e-10),
        picard_max: time_keys
            .get("picard_max")
            .map(|v| num(v))
            .transpose()
            .map_err(ConfigError::Invalid)?
            .unwrap_or(50.0) as usize,
        snapshot_every: output_keys
            .get("snapshot_every")
            .map(|v| num(v))
            .transpose()
            .map_err(ConfigError::Invalid)?
            .unwrap_or(0.0) as usize,
        checkpoint_every: output_keys
            .get("checkpoint_every")
            .map(|v| num(v))
            .transpose()
            .map_err(ConfigError::Invalid)?
            .unwrap_or(0.0) as usize,
    })
}

fn physics_from_map(m: &BTreeMap<String, f64>) -> RawPhysics {
    let g = |k: &str| m.get(k).copied();
    RawPhysics {
        re: g("re"),
        ca: g("ca"),
        we: g("we"),
        bi: g("bi"),
        da: g("da"),
        pe: g("pe"),
        pe_gamma: g("pe_gamma"),
        elasticity: g("elasticity"),
        rho_plus: g("rho_plus"),
        rho_minus: g("rho_minus"),
        eta_plus: g("eta_plus"),
        eta_minus: g("eta_minus"),
        lambda_a: g("lambda_a"),
        lambda_c: g("lambda_c"),
        omega_a: g("omega_a"),
        omega_b: g("omega_b"),
        omega_c: g("omega_c"),
        k_r: g("k_r"),
        k_d_plus: g("k_d_plus"),
        k_d_minus: g("k_d_minus"),
        d_c_plus: g("d_c_plus"),
        d_c_minus: g("d_c_minus"),
        d_a: g("d_a"),
        d_b: g("d_b"),
        d_cg: g("d_cg"),
        gravity: g("gravity"),
        u_c: g("u_c"),
        u_a: g("u_a"),
        u_b: g("u_b"),
        u_cg: g("u_cg"),
    }
}

/// Applies a `key=value` override to a [physics] key (used by `--set`).
pub fn apply_physics_override(sc: &mut Scenario, key: &str, value: &str) -> Result<(), ConfigError> {
    match key {
        "fluid" => sc.fluid_on = on_off(value).map_err(ConfigError::Invalid)?,
        "clamp_gamma" => sc.clamp_gamma = on_off(value).map_err(ConfigError::Invalid)?,
        _ => {
            let v = num(value).map_err(ConfigError::Invalid)?;
            let mut m = BTreeMap::new();
            m.insert(key.to_string(), v);
            let patch = physics_from_map(&m);
            let p = &mut sc.physics;
            macro_rules! merge {
                ($($f:ident),*) => { $( if patch.$f.is_some() { p.$f = patch.$f; } )* };
            }
            merge!(
                re, ca, we, bi, da, pe, pe_gamma, elasticity, rho_plus, rho_minus, eta_plus,
                eta_minus, lambda_a, lambda_c, omega_a, omega_b, omega_c, k_r, k_d_plus,
                k_d_minus, d_c_plus, d_c_minus, d_a, d_b, d_cg, gravity, u_c, u_a, u_b, u_cg
            );
            if [
                "re", "ca", "we", "bi", "da", "pe", "pe_gamma", "elasticity", "rho_plus",
                "rho_minus", "eta_plus", "eta_minus", "lambda_a", "lambda_c", "omega_a",
                "omega_b", "omega_c", "k_r", "k_d_plus", "k_d_minus", "d_c_plus", "d_c_minus",
                "d_a", "d_b", "d_cg", "gravity", "u_c", "u_a", "u_b", "u_cg",
            ]
            .iter()
            .all(|k2| *k2 != key)
            {
                return Err(ConfigError::Invalid(format!("unknown physics key `{key}`")));
            }
        }
    }
    Ok(())
}

/// Serializes a scenario back into the config grammar (the `describe`
/// output); `parse` on the result reproduces the scenario.
pub fn describe(sc: &Scenario) -> String {
    let mut out = String::new();
    let w = &mut out;
    let _ = writeln!(w, "# scenario: {}", sc.name);
    let _ = writeln!(w, "[domain]");
    let _ = writeln!(
        w,
        "rect = {},{},{},{}",
        sc.domain.rect[0], sc.domain.rect[1], sc.domain.rect[2], sc.domain.rect[3]
    );
    let _ = writeln!(w, "target_h = {}", sc.domain.target_h);
    let _ = writeln!(w, "periodic_x = {}", if sc.domain.periodic_x { "on" } else { "off" });
    let _ = writeln!(w, "regen = {}", if sc.domain.regen { "on" } else { "off" });
    let _ = writeln!(w, "regen_min_angle = {}", sc.domain.regen_min_angle);
    let _ = writeln!(w, "regen_area_ratio = {}", sc.domain.regen_area_ratio);
    let _ = writeln!(w, "\n[interfaces]");
    for i in &sc.interfaces {
        match i.shape {
            Shape::Circle { cx, cy, r, n } => {
                let _ = writeln!(w, "interface = {} circle={cx},{cy},{r},{n}", i.id);
            }
            Shape::Ellipse { cx, cy, rx, ry, n } => {
                let _ = writeln!(w, "interface = {} ellipse={cx},{cy},{rx},{ry},{n}", i.id);
            }
        }
    }
    let _ = writeln!(w, "\n[physics]");
    let p = &sc.physics;
    let mut phys: Vec<(&str, Option<f64>)> = vec![
        ("re", p.re),
        ("ca", p.ca),
        ("bi", p.bi),
        ("da", p.da),
        ("pe", p.pe),
        ("pe_gamma", p.pe_gamma),
        ("elasticity", p.elasticity),
        ("rho_plus", p.rho_plus),
        ("rho_minus", p.rho_minus),
        ("eta_plus", p.eta_plus),
        ("eta_minus", p.eta_minus),
        ("lambda_a", p.lambda_a),
        ("lambda_c", p.lambda_c),
        ("omega_a", p.omega_a),
        ("omega_b", p.omega_b),
        ("omega_c", p.omega_c),
        ("k_r", p.k_r),
        ("k_d_plus", p.k_d_plus),
        ("k_d_minus", p.k_d_minus),
        ("d_c_plus", p.d_c_plus),
        ("d_c_minus", p.d_c_minus),
        ("d_a", p.d_a),
        ("d_b", p.d_b),
        ("d_cg", p.d_cg),
    ];
    if p.gravity.is_some() {
        phys.push(("gravity", p.gravity));
    }
    for (k, v) in phys {
        if let Some(v) = v {
            let _ = writeln!(w, "{k} = {v}");
        }
    }
    let _ = writeln!(w, "fluid = {}", if sc.fluid_on { "on" } else { "off" });
    let _ = writeln!(w, "clamp_gamma = {}", if sc.clamp_gamma { "on" } else { "off" });
    let _ = writeln!(w, "\n[species]");
    for b in &sc.bulk {
        let _ = writeln!(
            w,
            "bulk = {} regions={} d={} init={} potential={}",
            b.name,
            b.regions.join(","),
            b.d.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","),
            b.init.iter().map(|e| e.src.clone()).collect::<Vec<_>>().join(","),
            b.potential
        );
    }
    for s in &sc.surface {
        let _ = writeln!(
            w,
            "surface = {} iface={} d={} omega={} init={} potential={}",
            s.name, s.iface, s.d, s.omega, s.init, s.potential
        );
    }
    for m in &sc.ms_combos {
        let _ = writeln!(w, "ms = {} species={}", m.label, m.species.join(","));
    }
    let _ = writeln!(w, "\n[reactions]");
    for r in &sc.reactions {
        let _ = writeln!(
            w,
            "reaction = {} c={} b={} product={} k_r={} lambda_c={}",
            r.iface, r.c, r.b, r.product, r.k_r, r.lambda_c
        );
    }
    let _ = writeln!(w, "\n[couplings]");
    for a in &sc.adsorptions {
        let _ = writeln!(
            w,
            "adsorption = {} iface={} side={} target={} k_d={},{} lambda_a={}",
            a.bulk, a.iface, a.side, a.target, a.k_d_plus, a.k_d_minus, a.lambda_a
        );
    }
    let _ = writeln!(w, "\n[permeability]");
    for pr in &sc.permeabilities {
        match pr {
            PermCfg::Constant { bulk, iface, k } => {
                let _ = writeln!(w, "constant = {bulk} iface={iface} k={k}");
            }
            PermCfg::Gated { bulk, iface, controller, k_max, a0, beta } => {
                let _ = writeln!(
                    w,
                    "gated = {bulk} iface={iface} controller={controller} k_max={k_max} a0={a0} beta={beta}"
                );
            }
        }
    }
    let _ = writeln!(w, "\n[boundary]");
    let vb = |b: &VelBcCfg| match b {
        VelBcCfg::NoSlip => "noslip".to_string(),
        VelBcCfg::StressFree => "stressfree".to_string(),
        VelBcCfg::Slip => "slip".to_string(),
        VelBcCfg::Periodic => "periodic".to_string(),
        VelBcCfg::Dirichlet(ex, ey) => format!("dirichlet({};{})", ex.src, ey.src),
    };
    let _ = writeln!(
        w,
        "velocity = {} {} {} {}",
        vb(&sc.velocity_bc[0]),
        vb(&sc.velocity_bc[1]),
        vb(&sc.velocity_bc[2]),
        vb(&sc.velocity_bc[3])
    );
    for c in &sc.conc_dirichlet {
        let _ = writeln!(
            w,
            "conc_dirichlet = {} sides={} value={}",
            c.species,
            c.sides.join(","),
            c.value.src
        );
    }
    let _ = writeln!(w, "\n[time]");
    let _ = writeln!(w, "dt = {}", sc.dt);
    let _ = writeln!(w, "t_end = {}", sc.t_end);
    let _ = writeln!(w, "picard_tol = {}", sc.picard_tol);
    let _ = writeln!(w, "picard_max = {}", sc.picard_max);
    let _ = writeln!(w, "\n[output]");
    let _ = writeln!(w, "snapshot_every = {}", sc.snapshot_every);
    let _ = writeln!(w, "checkpoint_every = {}", sc.checkpoint_every);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expressions_evaluate() {
        let e = Expr::parse("0.5+x").unwrap();
        assert_eq!(e.eval(0.25, 0.0), 0.75);
        let e = Expr::parse("-(x*2-y)/4").unwrap();
        assert_eq!(e.eval(1.0, 2.0), 0.0);
        let e = Expr::parse("1e-3*(x+y)").unwrap();
        assert!((e.eval(2.0, 3.0) - 5e-3).abs() < 1e-18);
        assert!(Expr::parse("x+").is_err());
        assert!(Expr::parse("z").is_err());
    }
}
