//! Pairwise geometry, the 13-component observation, interception and
//! termination tests.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::dynamics::{wrap_angle, PhysicsConfig, UavState};
use crate::error::{config_err, Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngagementConfig {
    /// Antenna train angle bound, rad.
    pub intercept_atu_max: f64,
    /// Aspect angle bound, rad.
    pub intercept_att_max: f64,
    pub intercept_d_max: f64,
    pub z_floor: f64,
    pub z_ceiling: f64,
    pub collision_radius: f64,
    /// Whether same-side pairs are checked for collision.
    pub teammate_collisions: bool,
    /// Range at which the normalized distance saturates.
    pub d_norm: f64,
}

impl Default for EngagementConfig {
    fn default() -> Self {
        Self {
            intercept_atu_max: 5f64.to_radians(),
            intercept_att_max: 90f64.to_radians(),
            intercept_d_max: 800.0,
            z_floor: 1000.0,
            z_ceiling: 13000.0,
            collision_radius: 50.0,
            teammate_collisions: false,
            d_norm: 20000.0,
        }
    }
}

impl EngagementConfig {
    pub fn validate(&self) -> Result<()> {
        let checks = [
            ("intercept_atu_max", self.intercept_atu_max),
            ("intercept_att_max", self.intercept_att_max),
            ("intercept_d_max", self.intercept_d_max),
            ("z_floor", self.z_floor),
            ("collision_radius", self.collision_radius),
            ("d_norm", self.d_norm),
        ];
        for (k, v) in checks {
            if !(v.is_finite() && v > 0.0) {
                return Err(config_err(format!("engagement.{k}"), "must be positive"));
            }
        }
        if !(self.z_floor < self.z_ceiling) {
            return Err(config_err("engagement.z_ceiling", "need z_floor < z_ceiling"));
        }
        Ok(())
    }
}

/// Geometry of `own` relative to `target`. `P` points from own toward target.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelativeSituation {
    /// Antenna train angle: angle between own velocity and `P`.
    pub alpha_u: f64,
    /// Aspect angle: angle between target velocity and `P`.
    pub alpha_t: f64,
    pub d: f64,
    pub gamma_p: f64,
    pub psi_p: f64,
}

pub(crate) fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn norm(a: [f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// Unsigned angle in `[0, pi]`; atan2 keeps precision near 0 and pi.
fn angle_between(a: [f64; 3], b: [f64; 3]) -> f64 {
    norm(cross(a, b)).atan2(dot(a, b))
}

pub fn distance(a: &UavState, b: &UavState) -> f64 {
    norm(sub(b.position(), a.position()))
}

pub fn relative_situation(own: &UavState, target: &UavState) -> Result<RelativeSituation> {
    let p = sub(target.position(), own.position());
    let d = norm(p);
    if d == 0.0 || !d.is_finite() {
        return Err(Error::DegenerateGeometry("coincident positions"));
    }
    let horiz = p[0].hypot(p[1]);
    Ok(RelativeSituation {
        alpha_u: angle_between(own.velocity(), p),
        alpha_t: angle_between(target.velocity(), p),
        d,
        gamma_p: p[2].atan2(horiz),
        psi_p: wrap_angle(p[0].atan2(p[1])),
    })
}

/// Tail-chase interception: all three bounds strict.
pub fn is_intercepted(rel: &RelativeSituation, cfg: &EngagementConfig) -> bool {
    rel.alpha_u < cfg.intercept_atu_max
        && rel.alpha_t < cfg.intercept_att_max
        && rel.d < cfg.intercept_d_max
}

pub fn out_of_bounds(state: &UavState, cfg: &EngagementConfig) -> bool {
    state.z <= cfg.z_floor || state.z >= cfg.z_ceiling
}

pub fn collided(a: &UavState, b: &UavState, cfg: &EngagementConfig) -> bool {
    distance(a, b) < cfg.collision_radius
}

pub const OBS_DIM: usize = 13;

/// Normalized observation, in the order
/// `(z_U, v_U, gamma_U, psi_U, z_T, v_T, gamma_T, psi_T, alpha_U, alpha_T, d, gamma_P, psi_P)`.
pub type Observation = [f64; OBS_DIM];

/// Per-component affine scaling into roughly `[-1, 1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObservationScale {
    z_mid: f64,
    z_half: f64,
    v_mid: f64,
    v_half: f64,
    d_max: f64,
}

impl ObservationScale {
    pub fn new(phys: &PhysicsConfig, eng: &EngagementConfig) -> Self {
        Self {
            z_mid: 0.5 * (eng.z_floor + eng.z_ceiling),
            z_half: 0.5 * (eng.z_ceiling - eng.z_floor),
            v_mid: 0.5 * (phys.v_min + phys.v_max),
            v_half: 0.5 * (phys.v_max - phys.v_min),
            d_max: eng.d_norm,
        }
    }

    /// `(offset, scale)` per component: `normalized = (raw - offset) / scale`.
    fn affine(&self) -> [(f64, f64); OBS_DIM] {
        let z = (self.z_mid, self.z_half);
        let v = (self.v_mid, self.v_half);
        let a = (0.0, PI);
        [z, v, a, a, z, v, a, a, a, a, (0.0, self.d_max), a, a]
    }

    pub fn raw(own: &UavState, target: &UavState, rel: &RelativeSituation) -> [f64; OBS_DIM] {
        [
            own.z,
            own.v,
            own.gamma,
            own.psi,
            target.z,
            target.v,
            target.gamma,
            target.psi,
            rel.alpha_u,
            rel.alpha_t,
            rel.d,
            rel.gamma_p,
            rel.psi_p,
        ]
    }

    /// Range saturates at `d_norm`; every other component is a pure affine map.
    pub fn normalize(&self, raw: &[f64; OBS_DIM]) -> Observation {
        let mut out = [0.0; OBS_DIM];
        for (i, (o, s)) in self.affine().into_iter().enumerate() {
            let r = if i == 10 { raw[i].min(self.d_max) } else { raw[i] };
            out[i] = (r - o) / s;
        }
        out
    }

    pub fn denormalize(&self, obs: &Observation) -> [f64; OBS_DIM] {
        let mut out = [0.0; OBS_DIM];
        for (i, (o, s)) in self.affine().into_iter().enumerate() {
            out[i] = obs[i] * s + o;
        }
        out
    }

    pub fn observe(&self, own: &UavState, target: &UavState) -> Result<Observation> {
        let rel = relative_situation(own, target)?;
        Ok(self.normalize(&Self::raw(own, target, &rel)))
    }
}
