//! Shaped rewards for the pursuit and bait roles.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::dynamics::UavState;
use crate::engagement::RelativeSituation;
use crate::error::{config_err, Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig {
    /// Angle, distance and closure weights for the pursuit role.
    pub pursuit_weights: [f64; 3],
    /// Angle and distance weights for the bait role.
    pub bait_weights: [f64; 2],
    pub d_opt_pursuit: f64,
    pub d_opt_bait: f64,
    pub d0: f64,
    pub alpha_opt: f64,
    pub alpha0: f64,
    pub r_final: f64,
    pub r_punish: f64,
    pub v_max: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            pursuit_weights: [0.4, 0.3, 0.3],
            bait_weights: [0.5, 0.5],
            d_opt_pursuit: 800.0,
            d_opt_bait: 1500.0,
            d0: 500.0,
            alpha_opt: PI,
            alpha0: PI / 3.0,
            r_final: 2.0,
            r_punish: -2.0,
            v_max: 400.0,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<()> {
        let sum3: f64 = self.pursuit_weights.iter().sum();
        if (sum3 - 1.0).abs() > 1e-9 || self.pursuit_weights.iter().any(|w| *w < 0.0) {
            return Err(config_err("rewards.pursuit_weights", "must be non-negative and sum to 1"));
        }
        let sum2: f64 = self.bait_weights.iter().sum();
        if (sum2 - 1.0).abs() > 1e-9 || self.bait_weights.iter().any(|w| *w < 0.0) {
            return Err(config_err("rewards.bait_weights", "must be non-negative and sum to 1"));
        }
        if !(self.d0 > 0.0) {
            return Err(config_err("rewards.d0", "must be positive"));
        }
        if !(self.alpha0 > 0.0) {
            return Err(config_err("rewards.alpha0", "must be positive"));
        }
        if !(self.r_final > 0.0) {
            return Err(config_err("rewards.r_final", "must be positive"));
        }
        if !(self.r_punish < 0.0) {
            return Err(config_err("rewards.r_punish", "must be negative"));
        }
        if !(self.v_max > 0.0) {
            return Err(config_err("rewards.v_max", "must be positive"));
        }
        if !(0.0..=PI).contains(&self.alpha_opt) {
            return Err(config_err("rewards.alpha_opt", "must lie in [0, pi]"));
        }
        Ok(())
    }
}

/// Step events seen by one UAV. The arena resolves precedence, so at most
/// one branch is expected to be flagged.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct OutcomeFlags {
    pub intercepted_target: bool,
    pub was_intercepted: bool,
    pub collision: bool,
    pub out_of_bounds: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Branch {
    Win,
    Loss,
    Punish,
    Dense,
}

impl OutcomeFlags {
    fn branch(&self) -> Result<Branch> {
        let penalty = self.collision || self.out_of_bounds;
        let terminal = self.intercepted_target || self.was_intercepted;
        if self.intercepted_target && self.was_intercepted {
            return Err(Error::Flags("intercept and be intercepted in one step"));
        }
        if terminal && penalty {
            return Err(Error::Flags("terminal outcome combined with a penalty event"));
        }
        Ok(if self.intercepted_target {
            Branch::Win
        } else if self.was_intercepted {
            Branch::Loss
        } else if penalty {
            Branch::Punish
        } else {
            Branch::Dense
        })
    }

    pub fn is_terminal(&self) -> bool {
        self.intercepted_target || self.was_intercepted || self.collision || self.out_of_bounds
    }
}

pub fn pursuit_angle_reward(rel: &RelativeSituation) -> f64 {
    1.0 - (rel.alpha_u + rel.alpha_t) / (2.0 * PI)
}

pub fn distance_reward(d: f64, d_opt: f64, d0: f64) -> f64 {
    (-(d - d_opt).abs() / d0).exp()
}

/// Closure rate toward the target normalized by `v_max`.
pub fn velocity_reward(own: &UavState, rel: &RelativeSituation, v_max: f64) -> Result<f64> {
    if !(rel.d > 0.0) {
        return Err(Error::DegenerateGeometry("zero range in closure reward"));
    }
    Ok(own.v * rel.alpha_u.cos() / v_max)
}

pub fn bait_angle_reward(rel: &RelativeSituation, cfg: &RewardConfig) -> f64 {
    2.0 * (-(rel.alpha_t - cfg.alpha_opt).abs() / cfg.alpha0).exp() - 1.0
}

/// Dense part of the pursuit reward (no terminal events).
pub fn pursuit_dense(rel: &RelativeSituation, own: &UavState, cfg: &RewardConfig) -> Result<f64> {
    let [w1, w2, w3] = cfg.pursuit_weights;
    Ok(w1 * pursuit_angle_reward(rel)
        + w2 * distance_reward(rel.d, cfg.d_opt_pursuit, cfg.d0)
        + w3 * velocity_reward(own, rel, cfg.v_max)?)
}

pub fn bait_dense(rel: &RelativeSituation, cfg: &RewardConfig) -> f64 {
    let [w1, w2] = cfg.bait_weights;
    w1 * bait_angle_reward(rel, cfg) + w2 * distance_reward(rel.d, cfg.d_opt_bait, cfg.d0)
}

pub fn pursuit_step_reward(
    rel: &RelativeSituation,
    own: &UavState,
    flags: OutcomeFlags,
    cfg: &RewardConfig,
) -> Result<f64> {
    match flags.branch()? {
        Branch::Win => Ok(cfg.r_final),
        Branch::Loss => Ok(-cfg.r_final),
        Branch::Punish => Ok(cfg.r_punish),
        Branch::Dense => pursuit_dense(rel, own, cfg),
    }
}

/// The bait never earns the interception reward.
pub fn bait_step_reward(rel: &RelativeSituation, flags: OutcomeFlags, cfg: &RewardConfig) -> Result<f64> {
    match flags.branch()? {
        Branch::Win => Err(Error::Flags("bait role cannot score an interception")),
        Branch::Loss => Ok(-cfg.r_final),
        Branch::Punish => Ok(cfg.r_punish),
        Branch::Dense => Ok(bait_dense(rel, cfg)),
    }
}
