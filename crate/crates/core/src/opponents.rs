//! Non-learning blue-side deciders: the one-step maximin matrix game and the
//! scripted basic-training maneuvers.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{apply_action, ManeuverCatalog, PhysicsConfig, UavState, ACTION_COUNT};
use crate::engagement::relative_situation;
use crate::error::{domain, Error, Result};
use crate::rewards::{pursuit_dense, RewardConfig};

/// `rows x cols` payoff grid for the blue side: entry `(i, j)` scores blue
/// action `i` against red action `j`.
#[derive(Clone, Debug, PartialEq)]
pub struct PayoffMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl PayoffMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 || data.len() != rows * cols {
            return Err(Error::Shape {
                expected: rows * cols,
                got: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(domain("payoff entries must be finite"));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map(|r| r.len()).unwrap_or(0);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(domain("ragged payoff rows"));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_min(&self, i: usize) -> f64 {
        self.row(i).iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

/// Blue's dense pursuit score at the end of the lookahead.
/// Coincident end states score as a collision.
fn lookahead_score(blue: &UavState, red: &UavState, rewards: &RewardConfig) -> f64 {
    match relative_situation(blue, red) {
        Ok(rel) => pursuit_dense(&rel, blue, rewards).unwrap_or(rewards.r_punish),
        Err(_) => rewards.r_punish,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatrixGameConfig {
    /// Decision steps both sides hold their candidate actions before the
    /// outcome is scored.
    pub lookahead_steps: u32,
}

impl Default for MatrixGameConfig {
    fn default() -> Self {
        Self { lookahead_steps: 10 }
    }
}

impl MatrixGameConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lookahead_steps < 1 {
            return Err(crate::error::config_err(
                "scenario.matrix_game.lookahead_steps",
                "must be at least 1",
            ));
        }
        Ok(())
    }
}

fn hold(
    state: &UavState,
    action: usize,
    steps: u32,
    catalog: &ManeuverCatalog,
    phys: &PhysicsConfig,
) -> Result<UavState> {
    let mut s = *state;
    for _ in 0..steps {
        s = apply_action(&s, action, catalog, phys)?;
    }
    Ok(s)
}

/// Payoff of every (blue, red) action pair: each side holds its action for
/// the lookahead and blue's dense pursuit reward scores the end states.
pub fn build_payoff(
    blue: &UavState,
    red: &UavState,
    catalog: &ManeuverCatalog,
    phys: &PhysicsConfig,
    rewards: &RewardConfig,
    game: &MatrixGameConfig,
) -> Result<PayoffMatrix> {
    let n = game.lookahead_steps;
    let blue_next = (0..catalog.len())
        .map(|i| hold(blue, i, n, catalog, phys))
        .collect::<Result<Vec<_>>>()?;
    let red_next = (0..catalog.len())
        .map(|j| hold(red, j, n, catalog, phys))
        .collect::<Result<Vec<_>>>()?;
    let data = blue_next
        .iter()
        .flat_map(|b| red_next.iter().map(move |r| (b, r)))
        .map(|(b, r)| lookahead_score(b, r, rewards))
        .collect();
    PayoffMatrix::new(blue_next.len(), red_next.len(), data)
}

/// Row index maximizing the sum over matrices of each row's minimum; the
/// lowest index wins ties.
pub fn maximin_action(matrices: &[PayoffMatrix]) -> Result<usize> {
    let first = matrices.first().ok_or_else(|| domain("no payoff matrices"))?;
    let rows = first.rows();
    if matrices.iter().any(|m| m.rows() != rows) {
        return Err(domain("payoff matrices disagree on the blue action count"));
    }
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for i in 0..rows {
        let score: f64 = matrices.iter().map(|m| m.row_min(i)).sum();
        if score > best_score {
            best = i;
            best_score = score;
        }
    }
    Ok(best)
}

/// Maximin blue decision against every live red UAV.
pub fn matrix_game_action(
    blue: &UavState,
    reds: &[UavState],
    catalog: &ManeuverCatalog,
    phys: &PhysicsConfig,
    rewards: &RewardConfig,
    game: &MatrixGameConfig,
) -> Result<usize> {
    let matrices = reds
        .iter()
        .map(|r| build_payoff(blue, r, catalog, phys, rewards, game))
        .collect::<Result<Vec<_>>>()?;
    maximin_action(&matrices)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScriptedKind {
    StraightLine,
    Circling,
    Random,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScriptedConfig {
    pub circling_action: usize,
    /// Decision steps a random draw is held for.
    pub random_hold_steps: u64,
    /// Relative weight of each action in random draws; empty means uniform.
    pub random_weights: Vec<f64>,
}

impl Default for ScriptedConfig {
    fn default() -> Self {
        Self {
            circling_action: ManeuverCatalog::HOLD_LEFT,
            random_hold_steps: 10,
            random_weights: Vec::new(),
        }
    }
}

impl ScriptedConfig {
    pub fn validate(&self) -> Result<()> {
        use crate::error::config_err;
        if self.circling_action >= ACTION_COUNT {
            return Err(config_err("scripted.circling_action", "not a catalog index"));
        }
        if self.random_hold_steps == 0 {
            return Err(config_err("scripted.random_hold_steps", "must be at least 1"));
        }
        if !self.random_weights.is_empty()
            && (self.random_weights.len() != ACTION_COUNT
                || self.random_weights.iter().any(|w| !(*w >= 0.0))
                || self.random_weights.iter().sum::<f64>() <= 0.0)
        {
            return Err(config_err(
                "scripted.random_weights",
                "need one non-negative weight per action with a positive sum",
            ));
        }
        Ok(())
    }
}

/// A scripted maneuver generator. The random variant remembers its current
/// draw between calls.
#[derive(Clone, Debug, PartialEq)]
pub struct ScriptedPolicy {
    pub kind: ScriptedKind,
    pub cfg: ScriptedConfig,
    current: Option<usize>,
}

impl ScriptedPolicy {
    pub fn new(kind: ScriptedKind, cfg: ScriptedConfig) -> Self {
        Self {
            kind,
            cfg,
            current: None,
        }
    }

    pub fn reset(&mut self) {
        self.current = None;
    }
}

fn draw<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    if weights.is_empty() {
        return rng.gen_range(0..ACTION_COUNT);
    }
    let total: f64 = weights.iter().sum();
    let mut c = rng.gen::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if c < *w {
            return i;
        }
        c -= w;
    }
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
}

pub fn scripted_action<R: Rng + ?Sized>(policy: &mut ScriptedPolicy, step: u64, rng: &mut R) -> usize {
    match policy.kind {
        ScriptedKind::StraightLine => ManeuverCatalog::HOLD,
        ScriptedKind::Circling => policy.cfg.circling_action,
        ScriptedKind::Random => {
            let redraw = step % policy.cfg.random_hold_steps == 0 || policy.current.is_none();
            if redraw {
                policy.current = Some(draw(&policy.cfg.random_weights, rng));
            }
            policy.current.expect("drawn above")
        }
    }
}
