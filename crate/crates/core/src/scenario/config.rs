//! Scenario configuration, read from TOML. Every table rejects unknown keys.

use serde::{Deserialize, Deserializer, Serialize};

use crate::couple::CouplingConfig;
use crate::fluid::FluidConfig;
use crate::gas::{GasModel, Primitive};
use crate::geom::Vec2;
use crate::mesh::{AdaptLimits, BoundaryKind, SideKinds};
use crate::structure::{CanopyGeometry, Material, Section};

use super::ScenarioError;

const LENGTH_UNITS: &[(&str, f64)] = &[("m", 1.0), ("cm", 0.01), ("mm", 1e-3), ("in", 0.0254), ("ft", 0.3048)];
const SPEED_UNITS: &[(&str, f64)] = &[
    ("m/s", 1.0),
    ("mm/s", 1e-3),
    ("mm/min", 1e-3 / 60.0),
    ("in/s", 0.0254),
    ("in/min", 0.0254 / 60.0),
];

fn parse_quantity(text: &str, units: &[(&str, f64)], what: &str) -> Result<f64, String> {
    let text = text.trim();
    let split = text.find(char::is_whitespace).ok_or_else(|| format!("{what} `{text}` has no unit"))?;
    let (num, unit) = text.split_at(split);
    let value: f64 = num.parse().map_err(|_| format!("bad number in {what} `{text}`"))?;
    let unit = unit.trim();
    units
        .iter()
        .find(|(u, _)| *u == unit)
        .map(|(_, f)| value * f)
        .ok_or_else(|| format!("unknown {what} unit `{unit}`"))
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawQuantity {
    Int(i64),
    Float(f64),
    Text(String),
}

macro_rules! quantity {
    ($name:ident, $units:expr, $what:expr, $doc:expr) => {
        #[doc = $doc]
        #[derive(Debug, Clone, Copy, PartialEq, Serialize)]
        #[serde(transparent)]
        pub struct $name(pub f64);

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                match RawQuantity::deserialize(d)? {
                    RawQuantity::Int(v) => Ok($name(v as f64)),
                    RawQuantity::Float(v) => Ok($name(v)),
                    RawQuantity::Text(s) => parse_quantity(&s, $units, $what).map($name).map_err(serde::de::Error::custom),
                }
            }
        }
    };
}

quantity!(Length, LENGTH_UNITS, "length", "Length in metres; text such as `\"3 in\"` or `\"76.2 mm\"` is converted.");
quantity!(Speed, SPEED_UNITS, "speed", "Speed in m/s; text such as `\"12 in/min\"` is converted.");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Case {
    Sod,
    Bluffbody,
    PorousMembrane,
    Coupon,
    Parachute2d,
}

impl Case {
    pub fn as_str(self) -> &'static str {
        match self {
            Case::Sod => "sod",
            Case::Bluffbody => "bluffbody",
            Case::PorousMembrane => "porous_membrane",
            Case::Coupon => "coupon",
            Case::Parachute2d => "parachute2d",
        }
    }
}

/// Uniform far-field state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Freestream {
    pub rho: f64,
    pub p: f64,
    pub mach: f64,
    /// Flow direction, degrees counter-clockwise from `+x`.
    pub angle_deg: f64,
}

impl Default for Freestream {
    fn default() -> Self {
        Self::scenario1()
    }
}

impl Freestream {
    /// Mars conditions at the first flight point.
    pub fn scenario1() -> Self {
        Freestream { rho: 0.0067, p: 260.0, mach: 1.8, angle_deg: 0.0 }
    }

    /// Mars conditions at the fourth flight point.
    pub fn scenario4() -> Self {
        Freestream { rho: 0.0060, p: 244.4, mach: 1.74, angle_deg: 0.0 }
    }

    pub fn direction(&self) -> Vec2 {
        let a = self.angle_deg.to_radians();
        [a.cos(), a.sin()]
    }

    pub fn primitive(&self, gas: &GasModel) -> Primitive {
        let c = (gas.gamma * self.p / self.rho).sqrt();
        let d = self.direction();
        Primitive::new(self.rho, [self.mach * c * d[0], self.mach * c * d[1]], self.p)
    }
}

/// Rectangular background grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DomainConfig {
    pub lo: Vec2,
    pub hi: Vec2,
    pub nx: usize,
    pub ny: usize,
    pub sides: SideKinds,
}

impl Default for DomainConfig {
    fn default() -> Self {
        DomainConfig { lo: [-9.0, -11.25], hi: [13.5, 11.25], nx: 30, ny: 30, sides: SideKinds::all(BoundaryKind::FarField) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AmrConfig {
    /// Rounds of geometry-driven refinement before the run.
    pub initial_rounds: usize,
    /// Solution-driven levels (bluff body).
    pub levels: usize,
    /// Refinement rounds per level; two rounds halve the mesh size.
    pub rounds_per_level: usize,
    /// Triangles whose Hessian indicator exceeds this fraction of the
    /// largest one are refined.
    pub hessian_fraction: f64,
    /// Flow time after each adaptation.
    pub level_time: f64,
    pub limits: AdaptLimits,
}

impl Default for AmrConfig {
    fn default() -> Self {
        AmrConfig {
            initial_rounds: 4,
            levels: 3,
            rounds_per_level: 2,
            hessian_fraction: 0.05,
            level_time: 0.02,
            limits: AdaptLimits { wall_distance: 0.5, wall_h: 0.2, min_h: 0.02, ..AdaptLimits::default() },
        }
    }
}

/// Durations of the rigid-body-only, fixed-surface and coupled phases, in
/// seconds of flow time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Phases {
    pub rigid: f64,
    pub fixed: f64,
    pub coupled: f64,
}

impl Default for Phases {
    fn default() -> Self {
        Phases { rigid: 0.15, fixed: 0.15, coupled: 0.05 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    /// Steps between history rows.
    pub history_every: usize,
    /// Steps between snapshots; 0 disables them.
    pub snapshot_every: usize,
    /// Number of largest element stresses averaged into `vm_topk`.
    pub top_k: usize,
    /// Write a checkpoint at the end of every phase.
    pub checkpoints: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { history_every: 10, snapshot_every: 0, top_k: 80, checkpoints: true }
    }
}

/// Shock tube on a one-cell-high strip over `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SodConfig {
    pub cells: usize,
    pub t_end: f64,
    pub diaphragm: f64,
    /// Density, velocity and pressure.
    pub left: [f64; 3],
    pub right: [f64; 3],
}

impl Default for SodConfig {
    fn default() -> Self {
        SodConfig { cells: 400, t_end: 0.2, diaphragm: 0.5, left: [1.0, 0.0, 1.0], right: [0.125, 0.0, 0.1] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BodyShape {
    /// Sphere-cone heat shield with a conical back shell.
    Capsule,
    Cylinder,
}

/// Rigid forebody, nose pointing upstream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BodyConfig {
    pub shape: BodyShape,
    /// Upstream-most point (bluff body case; the parachute places the body
    /// ahead of the confluence).
    pub nose: Vec2,
    pub diameter: f64,
    pub length: f64,
    pub cone_half_angle_deg: f64,
    pub nose_radius: f64,
    pub rear_diameter: f64,
    /// Facet length.
    pub element: f64,
}

impl Default for BodyConfig {
    fn default() -> Self {
        BodyConfig {
            shape: BodyShape::Capsule,
            nose: [0.0, 0.0],
            diameter: 4.5,
            length: 2.7647,
            cone_half_angle_deg: 70.0,
            nose_radius: 1.125,
            rear_diameter: 2.25,
            element: 0.25,
        }
    }
}

/// Porous sheet spanning a channel across the flow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MembraneConfig {
    pub x: f64,
    pub alphas: Vec<f64>,
    pub t_end: f64,
    /// Trailing fraction of the run the transmitted flux is averaged over.
    pub average: f64,
}

impl Default for MembraneConfig {
    fn default() -> Self {
        MembraneConfig { x: 2.025, alphas: vec![0.0, 0.08, 0.5, 1.0], t_end: 30.0, average: 0.25 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grips {
    /// Both in-plane displacements held along the gripped edges.
    Clamped,
    /// Only the pull direction is held; the edges may contract.
    Sliding,
}

impl Grips {
    pub fn as_str(self) -> &'static str {
        match self {
            Grips::Clamped => "clamped",
            Grips::Sliding => "sliding",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Fabric {
    pub e: f64,
    pub nu: f64,
    pub rho: f64,
    pub thickness: f64,
}

impl Default for Fabric {
    fn default() -> Self {
        Fabric { e: 9.448e8, nu: 0.4, rho: 1154.25, thickness: 7.6073e-5 }
    }
}

impl Fabric {
    pub fn membrane(&self) -> Material {
        Material { e: self.e, nu: self.nu, rho: self.rho, section: Section::Membrane { thickness: self.thickness } }
    }

    pub fn strip(&self) -> Material {
        Material { e: self.e, nu: self.nu, rho: self.rho, section: Section::strip(self.thickness) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LineMaterial {
    pub e: f64,
    pub nu: f64,
    pub rho: f64,
    pub diameter: f64,
}

impl Default for LineMaterial {
    fn default() -> Self {
        LineMaterial { e: 2.951e10, nu: 0.4, rho: 1154.25, diameter: 3.175e-3 }
    }
}

impl LineMaterial {
    pub fn material(&self) -> Material {
        Material { e: self.e, nu: self.nu, rho: self.rho, section: Section::rod(self.diameter) }
    }
}

/// Fabric tensile coupon pulled at constant rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CouponConfig {
    pub width: Length,
    pub height: Length,
    pub nx: usize,
    pub ny: usize,
    pub rate: Speed,
    /// Nominal strain at the end of the pull.
    pub strain: f64,
    pub grips: Grips,
    /// Mass-proportional damping (1/s).
    pub damping: f64,
    pub safety: f64,
    /// Central fraction of width and height probed for the stress state.
    pub probe: f64,
    pub fabric: Fabric,
}

impl Default for CouponConfig {
    fn default() -> Self {
        CouponConfig {
            width: Length(0.0762),
            height: Length(0.1524),
            nx: 12,
            ny: 24,
            rate: Speed(5.08e-3),
            strain: 1e-3,
            grips: Grips::Clamped,
            damping: 2e4,
            safety: 0.8,
            probe: 1.0 / 3.0,
            fabric: Fabric::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Porosity {
    pub disk: f64,
    pub band: f64,
}

impl Default for Porosity {
    fn default() -> Self {
        Porosity { disk: 0.08, band: 0.08 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CanopyConfig {
    pub geometry: CanopyGeometry,
    /// Distance from the back of the forebody to the confluence point.
    pub riser: f64,
    pub fabric: Fabric,
    pub line: LineMaterial,
    pub porosity: Porosity,
    /// Spacing of the hexagonal cable cross-sections along the lines.
    pub cable_spacing: f64,
    /// Penalty stiffness between the two canopy halves; 0 disables contact.
    pub contact_stiffness: f64,
    pub contact_band: f64,
    pub damping: f64,
    /// Amplitude (m/s) of the seeded random velocity given to the canopy at
    /// release.
    pub perturbation: f64,
}

impl Default for CanopyConfig {
    fn default() -> Self {
        CanopyConfig {
            geometry: CanopyGeometry::default(),
            riser: 8.895,
            fabric: Fabric::default(),
            line: LineMaterial::default(),
            porosity: Porosity::default(),
            cable_spacing: 0.5,
            contact_stiffness: 0.0,
            contact_band: 0.05,
            damping: 0.0,
            perturbation: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub case: Case,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub gas: GasModel,
    #[serde(default)]
    pub freestream: Freestream,
    #[serde(default)]
    pub domain: DomainConfig,
    #[serde(default)]
    pub fluid: FluidConfig,
    #[serde(default)]
    pub amr: AmrConfig,
    #[serde(default)]
    pub coupling: CouplingConfig,
    #[serde(default)]
    pub phases: Phases,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub sod: SodConfig,
    #[serde(default)]
    pub body: BodyConfig,
    #[serde(default)]
    pub membrane: MembraneConfig,
    #[serde(default)]
    pub coupon: CouponConfig,
    #[serde(default)]
    pub canopy: CanopyConfig,
}

/// Replaces entries of `base` by those of `over`, descending into tables.
fn overlay(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => overlay(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

impl ScenarioConfig {
    /// Defaults for `case`: the channel case runs a low-Mach ideal gas in a
    /// walled strip and the parachute gets a domain that holds the canopy.
    pub fn new(case: Case) -> Self {
        let mut cfg = Self::base(case);
        match case {
            Case::PorousMembrane => {
                cfg.gas = GasModel::ideal(1.4);
                cfg.freestream = Freestream { rho: 1.0, p: 1.0, mach: 0.3, angle_deg: 0.0 };
                cfg.domain = DomainConfig {
                    lo: [0.0, 0.0],
                    hi: [4.0, 1.0],
                    nx: 40,
                    ny: 10,
                    sides: SideKinds {
                        left: BoundaryKind::FarField,
                        right: BoundaryKind::FarField,
                        bottom: BoundaryKind::SlipWall,
                        top: BoundaryKind::SlipWall,
                    },
                };
            }
            Case::Sod => cfg.gas = GasModel::ideal(1.4),
            Case::Parachute2d => {
                cfg.domain = DomainConfig { lo: [-20.0, -40.0], hi: [80.0, 40.0], nx: 40, ny: 32, ..DomainConfig::default() };
                cfg.amr.initial_rounds = 10;
            }
            _ => {}
        }
        cfg
    }

    fn base(case: Case) -> Self {
        ScenarioConfig {
            case,
            seed: 0,
            gas: GasModel::default(),
            freestream: Freestream::default(),
            domain: DomainConfig::default(),
            fluid: FluidConfig::default(),
            amr: AmrConfig::default(),
            coupling: CouplingConfig::default(),
            phases: Phases::default(),
            output: OutputConfig::default(),
            sod: SodConfig::default(),
            body: BodyConfig::default(),
            membrane: MembraneConfig::default(),
            coupon: CouponConfig::default(),
            canopy: CanopyConfig::default(),
        }
    }

    /// Parses a configuration. Missing keys take the defaults of the
    /// selected case; unknown keys are errors.
    pub fn from_toml(text: &str) -> Result<Self, ScenarioError> {
        let err = |e: &dyn std::fmt::Display| ScenarioError::Config(e.to_string());
        let given: toml::Table = text.parse().map_err(|e: toml::de::Error| err(&e))?;
        let case = given.get("case").ok_or_else(|| ScenarioError::Config("missing key `case`".into()))?;
        let case = Case::deserialize(case.clone()).map_err(|e| err(&e))?;
        let mut merged = toml::Table::try_from(Self::new(case)).map_err(|e| err(&e))?;
        overlay(&mut merged, given);
        let cfg = ScenarioConfig::deserialize(toml::Value::Table(merged)).map_err(|e| err(&e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |msg: String| Err(ScenarioError::Config(msg));
        let positive = |name: &str, v: f64| if v > 0.0 && v.is_finite() { Ok(()) } else { bad(format!("{name} must be positive, got {v}")) };
        let fraction = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                bad(format!("{name} must lie in [0, 1], got {v}"))
            }
        };
        self.gas.validate().map_err(|e| ScenarioError::Config(e.to_string()))?;
        let f = &self.freestream;
        positive("freestream.rho", f.rho)?;
        positive("freestream.p", f.p)?;
        if !(f.mach >= 0.0 && f.mach.is_finite() && f.angle_deg.is_finite()) {
            return bad(format!("freestream.mach must be non-negative, got {}", f.mach));
        }
        let d = &self.domain;
        if !(d.hi[0] > d.lo[0] && d.hi[1] > d.lo[1]) || d.nx == 0 || d.ny == 0 {
            return bad("domain needs hi > lo and at least one cell each way".into());
        }
        positive("fluid.cfl", self.fluid.cfl)?;
        for (name, t) in [("phases.rigid", self.phases.rigid), ("phases.fixed", self.phases.fixed), ("phases.coupled", self.phases.coupled)] {
            if !(t >= 0.0 && t.is_finite()) {
                return bad(format!("{name} must be non-negative, got {t}"));
            }
        }
        positive("coupling.dt", self.coupling.dt)?;
        if !(self.coupling.safety > 0.0 && self.coupling.safety <= 1.0) {
            return bad(format!("coupling.safety must lie in (0, 1], got {}", self.coupling.safety));
        }
        if self.output.history_every == 0 {
            return bad("output.history_every must be at least 1".into());
        }
        positive("amr.hessian_fraction", self.amr.hessian_fraction)?;
        if !(self.amr.level_time >= 0.0) {
            return bad("amr.level_time must be non-negative".into());
        }
        match self.case {
            Case::Sod => {
                let s = &self.sod;
                if s.cells < 2 {
                    return bad("sod.cells must be at least 2".into());
                }
                positive("sod.t_end", s.t_end)?;
                for (name, st) in [("sod.left", s.left), ("sod.right", s.right)] {
                    positive(&format!("{name} density"), st[0])?;
                    positive(&format!("{name} pressure"), st[2])?;
                }
                if !(s.diaphragm > 0.0 && s.diaphragm < 1.0) {
                    return bad("sod.diaphragm must lie inside (0, 1)".into());
                }
            }
            Case::Bluffbody | Case::Parachute2d => {
                let b = &self.body;
                positive("body.diameter", b.diameter)?;
                positive("body.length", b.length)?;
                positive("body.element", b.element)?;
                if b.shape == BodyShape::Capsule {
                    positive("body.nose_radius", b.nose_radius)?;
                    positive("body.rear_diameter", b.rear_diameter)?;
                    if !(b.cone_half_angle_deg > 0.0 && b.cone_half_angle_deg < 90.0) {
                        return bad("body.cone_half_angle_deg must lie in (0, 90)".into());
                    }
                    if b.nose_radius * b.cone_half_angle_deg.to_radians().cos() >= 0.5 * b.diameter {
                        return bad("body.nose_radius too large for the diameter".into());
                    }
                }
                if self.case == Case::Parachute2d {
                    let c = &self.canopy;
                    for (name, v) in [
                        ("canopy.fabric.e", c.fabric.e),
                        ("canopy.fabric.rho", c.fabric.rho),
                        ("canopy.fabric.thickness", c.fabric.thickness),
                        ("canopy.line.e", c.line.e),
                        ("canopy.line.rho", c.line.rho),
                        ("canopy.line.diameter", c.line.diameter),
                        ("canopy.cable_spacing", c.cable_spacing),
                        ("canopy.geometry.element_length", c.geometry.element_length),
                    ] {
                        positive(name, v)?;
                    }
                    fraction("canopy.porosity.disk", c.porosity.disk)?;
                    fraction("canopy.porosity.band", c.porosity.band)?;
                    if !(c.riser >= 0.0 && c.contact_stiffness >= 0.0 && c.damping >= 0.0 && c.perturbation >= 0.0) {
                        return bad("canopy riser, contact, damping and perturbation must be non-negative".into());
                    }
                }
            }
            Case::PorousMembrane => {
                let m = &self.membrane;
                if m.alphas.is_empty() {
                    return bad("membrane.alphas is empty".into());
                }
                for &a in &m.alphas {
                    fraction("membrane alpha", a)?;
                }
                positive("membrane.t_end", m.t_end)?;
                if !(m.average > 0.0 && m.average <= 1.0) {
                    return bad("membrane.average must lie in (0, 1]".into());
                }
                if !(m.x > d.lo[0] && m.x < d.hi[0]) {
                    return bad("membrane.x lies outside the domain".into());
                }
            }
            Case::Coupon => {
                let c = &self.coupon;
                positive("coupon.width", c.width.0)?;
                positive("coupon.height", c.height.0)?;
                positive("coupon.rate", c.rate.0)?;
                positive("coupon.strain", c.strain)?;
                positive("coupon.fabric.e", c.fabric.e)?;
                positive("coupon.fabric.rho", c.fabric.rho)?;
                positive("coupon.fabric.thickness", c.fabric.thickness)?;
                if c.nx < 2 || c.ny < 2 {
                    return bad("coupon needs at least 2 by 2 cells".into());
                }
                if !(c.damping >= 0.0) || !(c.safety > 0.0 && c.safety <= 1.0) || !(c.probe > 0.0 && c.probe <= 1.0) {
                    return bad("coupon damping must be non-negative; safety and probe in (0, 1]".into());
                }
            }
        }
        Ok(())
    }
}
