//! Point-mass UAV model driven by overload and bank-angle controls.
//!
//! The kinematics use the convention where `gamma` is the elevation of the
//! velocity vector above the x-o-y plane and `psi` is the heading of its
//! horizontal projection measured from the +y axis toward +x.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{config_err, domain, Result};

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UavState {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    /// Airspeed, m/s.
    pub v: f64,
    /// Flight-path pitch, rad.
    pub gamma: f64,
    /// Flight-path yaw from +y, rad.
    pub psi: f64,
}

impl UavState {
    pub fn level(x: f64, y: f64, z: f64, v: f64, psi: f64) -> Self {
        Self {
            x,
            y,
            z,
            v,
            gamma: 0.0,
            psi: wrap_angle(psi),
        }
    }

    pub fn position(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    /// Velocity vector in the inertial frame.
    pub fn velocity(&self) -> [f64; 3] {
        let (sg, cg) = self.gamma.sin_cos();
        let (sp, cp) = self.psi.sin_cos();
        [self.v * cg * sp, self.v * cg * cp, self.v * sg]
    }

    pub fn is_finite(&self) -> bool {
        [self.x, self.y, self.z, self.v, self.gamma, self.psi]
            .iter()
            .all(|c| c.is_finite())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlInput {
    /// Longitudinal overload (g).
    pub nx: f64,
    /// Normal overload along the body vertical axis (g).
    pub nz: f64,
    /// Velocity-vector roll, rad.
    pub phi: f64,
}

impl ControlInput {
    pub fn new(nx: f64, nz: f64, phi: f64) -> Self {
        Self { nx, nz, phi }
    }

    /// Controls that leave speed and flight-path angles unchanged at `state`.
    pub fn trim(state: &UavState) -> Self {
        Self {
            nx: state.gamma.sin(),
            nz: state.gamma.cos(),
            phi: 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StateDerivative {
    pub dx: f64,
    pub dy: f64,
    pub dz: f64,
    pub dv: f64,
    pub dgamma: f64,
    pub dpsi: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhysicsConfig {
    pub g: f64,
    /// Decision interval advanced by one call to [`step`], s.
    pub dt: f64,
    /// RK4 sub-intervals per decision interval.
    pub substeps: u32,
    pub v_min: f64,
    pub v_max: f64,
    pub gamma_max: f64,
    pub nx_min: f64,
    pub nx_max: f64,
    pub nz_min: f64,
    pub nz_max: f64,
}

impl Default for PhysicsConfig {
    fn default() -> Self {
        Self {
            g: 9.81,
            dt: 0.1,
            substeps: 2,
            v_min: 50.0,
            v_max: 400.0,
            gamma_max: 80f64.to_radians(),
            nx_min: -2.0,
            nx_max: 2.0,
            nz_min: -1.0,
            nz_max: 6.0,
        }
    }
}

impl PhysicsConfig {
    pub fn validate(&self) -> Result<()> {
        let p = |k: &str| format!("physics.{k}");
        if !(self.g.is_finite() && self.g > 0.0) {
            return Err(config_err(p("g"), "must be positive"));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(config_err(p("dt"), "must be positive"));
        }
        if self.substeps < 1 {
            return Err(config_err(p("substeps"), "must be at least 1"));
        }
        if !(self.v_min > 0.0 && self.v_min < self.v_max && self.v_max.is_finite()) {
            return Err(config_err(p("v_max"), "need 0 < v_min < v_max"));
        }
        if !(self.gamma_max > 0.0 && self.gamma_max < PI / 2.0) {
            return Err(config_err(p("gamma_max"), "need 0 < gamma_max < pi/2"));
        }
        if !(self.nx_min < self.nx_max) {
            return Err(config_err(p("nx_max"), "need nx_min < nx_max"));
        }
        if !(self.nz_min < self.nz_max) {
            return Err(config_err(p("nz_max"), "need nz_min < nz_max"));
        }
        Ok(())
    }

    fn check_control(&self, ctrl: &ControlInput) -> Result<()> {
        const SLACK: f64 = 1e-9;
        if !(ctrl.nx.is_finite() && ctrl.nz.is_finite() && ctrl.phi.is_finite()) {
            return Err(domain("non-finite control input"));
        }
        if ctrl.nx < self.nx_min - SLACK || ctrl.nx > self.nx_max + SLACK {
            return Err(domain(format!("nx = {} outside envelope", ctrl.nx)));
        }
        if ctrl.nz < self.nz_min - SLACK || ctrl.nz > self.nz_max + SLACK {
            return Err(domain(format!("nz = {} outside envelope", ctrl.nz)));
        }
        if ctrl.phi.abs() > PI + SLACK {
            return Err(domain(format!("phi = {} outside [-pi, pi]", ctrl.phi)));
        }
        Ok(())
    }

    fn clamp(&self, s: &mut UavState) {
        s.v = s.v.clamp(self.v_min, self.v_max);
        s.gamma = s.gamma.clamp(-self.gamma_max, self.gamma_max);
        s.psi = wrap_angle(s.psi);
    }
}

/// Rates of the six state variables under constant controls.
pub fn derivatives(state: &UavState, ctrl: &ControlInput, g: f64) -> Result<StateDerivative> {
    if !state.is_finite() {
        return Err(domain("non-finite state"));
    }
    if !(ctrl.nx.is_finite() && ctrl.nz.is_finite() && ctrl.phi.is_finite()) {
        return Err(domain("non-finite control input"));
    }
    if state.v <= 0.0 {
        return Err(domain("airspeed must be positive"));
    }
    let cg = state.gamma.cos();
    if cg.abs() < 1e-6 {
        return Err(domain("flight-path pitch at the vertical singularity"));
    }
    Ok(rates(state, ctrl, g))
}

#[inline]
fn rates(s: &UavState, c: &ControlInput, g: f64) -> StateDerivative {
    let (sg, cg) = s.gamma.sin_cos();
    let (sp, cp) = s.psi.sin_cos();
    let (sphi, cphi) = c.phi.sin_cos();
    StateDerivative {
        dx: s.v * cg * sp,
        dy: s.v * cg * cp,
        dz: s.v * sg,
        dv: g * (c.nx - sg),
        dgamma: g / s.v * (c.nz * cphi - cg),
        dpsi: g * c.nz * sphi / (s.v * cg),
    }
}

fn advance(s: &UavState, d: &StateDerivative, h: f64) -> UavState {
    UavState {
        x: s.x + h * d.dx,
        y: s.y + h * d.dy,
        z: s.z + h * d.dz,
        v: s.v + h * d.dv,
        gamma: s.gamma + h * d.dgamma,
        psi: s.psi + h * d.dpsi,
    }
}

fn rk4(s: &UavState, c: &ControlInput, g: f64, h: f64) -> UavState {
    let k1 = rates(s, c, g);
    let k2 = rates(&advance(s, &k1, h / 2.0), c, g);
    let k3 = rates(&advance(s, &k2, h / 2.0), c, g);
    let k4 = rates(&advance(s, &k3, h), c, g);
    let w = h / 6.0;
    UavState {
        x: s.x + w * (k1.dx + 2.0 * k2.dx + 2.0 * k3.dx + k4.dx),
        y: s.y + w * (k1.dy + 2.0 * k2.dy + 2.0 * k3.dy + k4.dy),
        z: s.z + w * (k1.dz + 2.0 * k2.dz + 2.0 * k3.dz + k4.dz),
        v: s.v + w * (k1.dv + 2.0 * k2.dv + 2.0 * k3.dv + k4.dv),
        gamma: s.gamma + w * (k1.dgamma + 2.0 * k2.dgamma + 2.0 * k3.dgamma + k4.dgamma),
        psi: s.psi + w * (k1.dpsi + 2.0 * k2.dpsi + 2.0 * k3.dpsi + k4.dpsi),
    }
}

/// Advances `state` by `cfg.dt` holding `ctrl` constant, using `cfg.substeps`
/// RK4 sub-intervals. The envelope is re-imposed after every sub-interval.
pub fn step(state: &UavState, ctrl: &ControlInput, cfg: &PhysicsConfig) -> Result<UavState> {
    if !state.is_finite() {
        return Err(domain("non-finite state"));
    }
    if state.v <= 0.0 {
        return Err(domain("airspeed must be positive"));
    }
    cfg.check_control(ctrl)?;
    let h = cfg.dt / cfg.substeps as f64;
    let mut s = *state;
    cfg.clamp(&mut s);
    for _ in 0..cfg.substeps {
        s = rk4(&s, ctrl, cfg.g, h);
        cfg.clamp(&mut s);
    }
    Ok(s)
}

/// Throttle settings of the action catalog.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Throttle {
    /// `nx = sin(gamma)`, holds speed.
    Trim,
    Accelerate,
    Decelerate,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Primitive {
    Straight,
    TurnLeft,
    TurnRight,
    Climb,
    Dive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CatalogConfig {
    pub accel_nx: f64,
    pub decel_nx: f64,
    /// Load factor held in turns; the bank angle is chosen so that the
    /// vertical lift component balances gravity.
    pub turn_nz: f64,
    /// Extra load factor added (climb) or removed (dive) from level trim.
    pub pitch_nz: f64,
    /// Lower bound on the dive load factor; keeps steep dives inside the
    /// nz envelope.
    pub dive_nz_floor: f64,
}

impl Default for CatalogConfig {
    fn default() -> Self {
        Self {
            accel_nx: 2.0,
            decel_nx: -2.0,
            turn_nz: 5.0,
            pitch_nz: 2.0,
            dive_nz_floor: -1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ManeuverEntry {
    pub index: usize,
    pub throttle: Throttle,
    pub primitive: Primitive,
}

impl ManeuverEntry {
    pub fn name(&self) -> String {
        let t = match self.throttle {
            Throttle::Trim => "hold",
            Throttle::Accelerate => "accel",
            Throttle::Decelerate => "decel",
        };
        let p = match self.primitive {
            Primitive::Straight => "straight",
            Primitive::TurnLeft => "left",
            Primitive::TurnRight => "right",
            Primitive::Climb => "climb",
            Primitive::Dive => "dive",
        };
        format!("{t}-{p}")
    }
}

pub const ACTION_COUNT: usize = 15;

const THROTTLES: [Throttle; 3] = [Throttle::Trim, Throttle::Accelerate, Throttle::Decelerate];
const PRIMITIVES: [Primitive; 5] = [
    Primitive::Straight,
    Primitive::TurnLeft,
    Primitive::TurnRight,
    Primitive::Climb,
    Primitive::Dive,
];

/// The 15 discrete maneuvers: index = throttle * 5 + primitive.
#[derive(Clone, Debug, PartialEq)]
pub struct ManeuverCatalog {
    entries: Vec<ManeuverEntry>,
    params: CatalogConfig,
}

impl Default for ManeuverCatalog {
    fn default() -> Self {
        Self::new(CatalogConfig::default())
    }
}

impl ManeuverCatalog {
    pub const HOLD: usize = 0;
    pub const HOLD_LEFT: usize = 1;
    pub const HOLD_RIGHT: usize = 2;

    pub fn new(params: CatalogConfig) -> Self {
        let entries = THROTTLES
            .iter()
            .flat_map(|&t| PRIMITIVES.iter().map(move |&p| (t, p)))
            .enumerate()
            .map(|(index, (throttle, primitive))| ManeuverEntry {
                index,
                throttle,
                primitive,
            })
            .collect();
        Self { entries, params }
    }

    pub fn validate(&self, phys: &PhysicsConfig) -> Result<()> {
        let p = &self.params;
        let in_nx = |v: f64| v >= phys.nx_min && v <= phys.nx_max;
        if !in_nx(p.accel_nx) || p.accel_nx <= 0.0 {
            return Err(config_err("catalog.accel_nx", "must be positive and inside the nx envelope"));
        }
        if !in_nx(p.decel_nx) || p.decel_nx >= 0.0 {
            return Err(config_err("catalog.decel_nx", "must be negative and inside the nx envelope"));
        }
        if !(p.turn_nz > 1.0 && p.turn_nz <= phys.nz_max) {
            return Err(config_err("catalog.turn_nz", "need 1 < turn_nz <= nz_max"));
        }
        if !(p.pitch_nz > 0.0 && 1.0 + p.pitch_nz <= phys.nz_max) {
            return Err(config_err("catalog.pitch_nz", "climb load factor leaves the nz envelope"));
        }
        if !(p.dive_nz_floor >= phys.nz_min && p.dive_nz_floor < 1.0) {
            return Err(config_err("catalog.dive_nz_floor", "need nz_min <= dive_nz_floor < 1"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[ManeuverEntry] {
        &self.entries
    }

    pub fn params(&self) -> &CatalogConfig {
        &self.params
    }

    pub fn entry(&self, index: usize) -> Result<&ManeuverEntry> {
        self.entries
            .get(index)
            .ok_or_else(|| domain(format!("action index {index} outside 0..{}", self.entries.len())))
    }

    /// Control recipe of action `index` evaluated at `state`.
    pub fn resolve(&self, index: usize, state: &UavState) -> Result<ControlInput> {
        let e = self.entry(index)?;
        let (sg, cg) = state.gamma.sin_cos();
        let nx = match e.throttle {
            Throttle::Trim => sg,
            Throttle::Accelerate => self.params.accel_nx,
            Throttle::Decelerate => self.params.decel_nx,
        };
        let bank = (cg / self.params.turn_nz).acos();
        let (nz, phi) = match e.primitive {
            Primitive::Straight => (cg, 0.0),
            Primitive::TurnLeft => (self.params.turn_nz, -bank),
            Primitive::TurnRight => (self.params.turn_nz, bank),
            Primitive::Climb => (cg + self.params.pitch_nz, 0.0),
            Primitive::Dive => ((cg - self.params.pitch_nz).max(self.params.dive_nz_floor), 0.0),
        };
        Ok(ControlInput { nx, nz, phi })
    }

    /// Markdown table of the catalog evaluated in level flight.
    pub fn table(&self) -> String {
        let level = UavState::level(0.0, 0.0, 0.0, 200.0, 0.0);
        let mut out = String::from("| index | name | n_x | n_z | phi (deg) |\n|---|---|---|---|---|\n");
        for e in &self.entries {
            let c = self.resolve(e.index, &level).expect("catalog index");
            out.push_str(&format!(
                "| {} | {} | {:.3} | {:.3} | {:.2} |\n",
                e.index,
                e.name(),
                c.nx,
                c.nz,
                c.phi.to_degrees()
            ));
        }
        out
    }
}

/// Resolves an action and advances one decision interval.
pub fn apply_action(
    state: &UavState,
    action: usize,
    catalog: &ManeuverCatalog,
    cfg: &PhysicsConfig,
) -> Result<UavState> {
    let ctrl = catalog.resolve(action, state)?;
    step(state, &ctrl, cfg)
}
