//! The multi-UAV engagement environment, role/target allocation and episode
//! records.

use std::fmt;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{apply_action, CatalogConfig, ManeuverCatalog, PhysicsConfig, UavState};
use crate::engagement::{
    collided, distance, is_intercepted, out_of_bounds, relative_situation, EngagementConfig, Observation,
    ObservationScale, OBS_DIM,
};
use crate::error::{config_err, domain, Error, Result};
use crate::opponents::{
    matrix_game_action, scripted_action, MatrixGameConfig, ScriptedConfig, ScriptedKind, ScriptedPolicy,
};
use crate::qnet::QNetwork;
use crate::rewards::{bait_step_reward, pursuit_dense, pursuit_step_reward, OutcomeFlags, RewardConfig};
use crate::seeding::substream;

/// Validated physics, catalog, engagement and reward settings shared by
/// every world.
#[derive(Clone, Debug)]
pub struct SimContext {
    pub physics: PhysicsConfig,
    pub catalog: ManeuverCatalog,
    pub engagement: EngagementConfig,
    pub rewards: RewardConfig,
    pub scale: ObservationScale,
}

impl SimContext {
    pub fn new(
        physics: PhysicsConfig,
        catalog: CatalogConfig,
        engagement: EngagementConfig,
        rewards: RewardConfig,
    ) -> Result<Self> {
        physics.validate()?;
        engagement.validate()?;
        rewards.validate()?;
        let catalog = ManeuverCatalog::new(catalog);
        catalog.validate(&physics)?;
        let scale = ObservationScale::new(&physics, &engagement);
        Ok(Self {
            physics,
            catalog,
            engagement,
            rewards,
            scale,
        })
    }
}

impl Default for SimContext {
    fn default() -> Self {
        Self::new(
            PhysicsConfig::default(),
            CatalogConfig::default(),
            EngagementConfig::default(),
            RewardConfig::default(),
        )
        .expect("defaults are valid")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    Pursuit,
    Bait,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Pursuit => "pursuit",
            Role::Bait => "bait",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Side {
    Red,
    Blue,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct UavId {
    pub side: Side,
    pub index: usize,
}

impl UavId {
    pub fn red(index: usize) -> Self {
        Self { side: Side::Red, index }
    }

    pub fn blue(index: usize) -> Self {
        Self {
            side: Side::Blue,
            index,
        }
    }
}

impl fmt::Display for UavId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self.side {
            Side::Red => "red",
            Side::Blue => "blue",
        };
        write!(f, "{s}{}", self.index)
    }
}

impl Serialize for Outcome {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Outcome {
    Win,
    Lose,
    Standoff,
}

impl Outcome {
    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Win => "win",
            Outcome::Lose => "lose",
            Outcome::Standoff => "standoff",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BluePolicy {
    MatrixGame,
    StraightLine,
    Circling,
    Random,
    /// One of the three scripted variants, drawn per blue UAV per episode.
    Mixed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub red_count: usize,
    pub blue_count: usize,
    /// Initial red roles; empty means all pursuit.
    pub red_roles: Vec<Role>,
    pub blue_policy: BluePolicy,
    pub time_limit_s: f64,
    /// Decision steps between reallocations.
    pub realloc_period: u64,
    /// Whether roles follow the allocation table; when false only targets
    /// are reassigned.
    pub dynamic_roles: bool,
    /// Spawn box extents (x, y, z), centered on the red formation.
    pub init_box: [f64; 3],
    /// Central no-spawn zone extents (x, y, z).
    pub vacuum_zone: [f64; 3],
    pub formation_z: f64,
    pub formation_spacing: f64,
    pub speed_range: [f64; 2],
    pub scripted: ScriptedConfig,
    pub matrix_game: MatrixGameConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            red_count: 1,
            blue_count: 1,
            red_roles: Vec::new(),
            blue_policy: BluePolicy::MatrixGame,
            time_limit_s: 180.0,
            realloc_period: 10,
            dynamic_roles: true,
            init_box: [20000.0, 20000.0, 6000.0],
            vacuum_zone: [4000.0, 4000.0, 6000.0],
            formation_z: 7000.0,
            formation_spacing: 1000.0,
            speed_range: [150.0, 250.0],
            scripted: ScriptedConfig::default(),
            matrix_game: MatrixGameConfig::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn one_on_one(role: Role, blue_policy: BluePolicy) -> Self {
        Self {
            red_roles: vec![role],
            blue_policy,
            dynamic_roles: false,
            ..Self::default()
        }
    }

    pub fn versus(red_count: usize, blue_count: usize) -> Self {
        Self {
            red_count,
            blue_count,
            ..Self::default()
        }
    }

    pub fn validate(&self, eng: &EngagementConfig) -> Result<()> {
        let p = |k: &str| format!("scenario.{k}");
        if self.red_count < 1 || self.blue_count < 1 {
            return Err(config_err(p("red_count"), "both sides need at least one UAV"));
        }
        if !self.red_roles.is_empty() && self.red_roles.len() != self.red_count {
            return Err(config_err(p("red_roles"), "one role per red UAV, or none"));
        }
        if !(self.time_limit_s >= 0.0 && self.time_limit_s.is_finite()) {
            return Err(config_err(p("time_limit_s"), "must be finite and non-negative"));
        }
        if self.realloc_period < 1 {
            return Err(config_err(p("realloc_period"), "must be at least 1"));
        }
        if self.init_box.iter().any(|v| !(*v > 0.0)) {
            return Err(config_err(p("init_box"), "extents must be positive"));
        }
        if self
            .vacuum_zone
            .iter()
            .zip(&self.init_box)
            .any(|(v, b)| !(*v >= 0.0 && v <= b))
        {
            return Err(config_err(p("vacuum_zone"), "must fit inside init_box"));
        }
        if self.vacuum_zone[0] >= self.init_box[0] && self.vacuum_zone[1] >= self.init_box[1] {
            return Err(config_err(p("vacuum_zone"), "leaves no room to spawn blue UAVs"));
        }
        let half_z = 0.5 * self.init_box[2];
        if self.formation_z - half_z <= eng.z_floor || self.formation_z + half_z >= eng.z_ceiling {
            return Err(config_err(p("init_box"), "spawn altitudes must lie inside the z bounds"));
        }
        let [lo, hi] = self.speed_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(config_err(p("speed_range"), "need 0 < low <= high"));
        }
        self.scripted.validate()?;
        self.matrix_game.validate()
    }

    pub fn limit_steps(&self, dt: f64) -> u64 {
        (self.time_limit_s / dt).round() as u64
    }

    pub fn initial_role(&self, red: usize) -> Role {
        self.red_roles.get(red).copied().unwrap_or(Role::Pursuit)
    }
}

/// Role and target of one red UAV.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Assignment {
    pub red: usize,
    pub role: Role,
    pub target: usize,
}

fn pair_score(red: &UavState, blue: &UavState, rw: &RewardConfig) -> f64 {
    relative_situation(red, blue)
        .and_then(|rel| pursuit_dense(&rel, red, rw))
        .unwrap_or(rw.r_punish)
}

fn nearest(red: &UavState, blues: &[(usize, UavState)]) -> usize {
    let mut best = blues[0];
    for b in &blues[1..] {
        if distance(red, &b.1) < distance(red, &best.1) {
            best = *b;
        }
    }
    best.0
}

/// Role and target for every live red UAV from the live rosters.
///
/// * one blue: every red pursues it;
/// * 2v2: the best-scoring (red, blue) pair pursues, the other red baits
///   the other blue;
/// * 3v2: the best-scoring pair of reds on one blue pursues, the third red
///   baits the other blue;
/// * anything else: every red pursues its nearest blue.
pub fn allocate(
    reds: &[(usize, UavState)],
    blues: &[(usize, UavState)],
    rw: &RewardConfig,
) -> Result<Vec<Assignment>> {
    if blues.is_empty() {
        return Err(domain("allocation needs a live blue UAV"));
    }
    let pursue = |r: usize, t: usize| Assignment {
        red: r,
        role: Role::Pursuit,
        target: t,
    };
    let bait = |r: usize, t: usize| Assignment {
        red: r,
        role: Role::Bait,
        target: t,
    };
    let score = |ri: usize, bi: usize| pair_score(&reds[ri].1, &blues[bi].1, rw);
    match (reds.len(), blues.len()) {
        (_, 1) => Ok(reds.iter().map(|r| pursue(r.0, blues[0].0)).collect()),
        (2, 2) => {
            let mut best = (0, 0, f64::NEG_INFINITY);
            for ri in 0..2 {
                for bi in 0..2 {
                    let s = score(ri, bi);
                    if s > best.2 {
                        best = (ri, bi, s);
                    }
                }
            }
            let (ri, bi, _) = best;
            Ok(sorted(vec![
                pursue(reds[ri].0, blues[bi].0),
                bait(reds[1 - ri].0, blues[1 - bi].0),
            ]))
        }
        (3, 2) => {
            let mut best = (0, 0, f64::NEG_INFINITY);
            for left_out in 0..3 {
                for bi in 0..2 {
                    let s: f64 = (0..3).filter(|r| *r != left_out).map(|r| score(r, bi)).sum();
                    if s > best.2 {
                        best = (left_out, bi, s);
                    }
                }
            }
            let (left_out, bi, _) = best;
            Ok(sorted(
                (0..3)
                    .map(|r| {
                        if r == left_out {
                            bait(reds[r].0, blues[1 - bi].0)
                        } else {
                            pursue(reds[r].0, blues[bi].0)
                        }
                    })
                    .collect(),
            ))
        }
        _ => Ok(reds.iter().map(|r| pursue(r.0, nearest(&r.1, blues))).collect()),
    }
}

/// Target-only reassignment for fixed roles: the pursuers concentrate on the
/// blue they jointly score best against; baits take the best remaining blue.
pub fn retarget(
    reds: &[(usize, UavState, Role)],
    blues: &[(usize, UavState)],
    rw: &RewardConfig,
) -> Result<Vec<Assignment>> {
    if blues.is_empty() {
        return Err(domain("allocation needs a live blue UAV"));
    }
    let group = |role: Role| reds.iter().filter(move |r| r.2 == role);
    let best_blue = |role: Role, exclude: Option<usize>| {
        let mut best = None;
        for (id, b) in blues {
            if Some(*id) == exclude {
                continue;
            }
            let s: f64 = group(role).map(|r| pair_score(&r.1, b, rw)).sum();
            if best.map_or(true, |(_, bs)| s > bs) {
                best = Some((*id, s));
            }
        }
        best.map(|(id, _)| id)
    };
    let pursuit_target = best_blue(Role::Pursuit, None).expect("blues non-empty");
    let has_pursuers = group(Role::Pursuit).next().is_some();
    let bait_target = if has_pursuers && blues.len() > 1 {
        best_blue(Role::Bait, Some(pursuit_target)).expect("a second blue exists")
    } else {
        best_blue(Role::Bait, None).expect("blues non-empty")
    };
    Ok(reds
        .iter()
        .map(|r| Assignment {
            red: r.0,
            role: r.2,
            target: if r.2 == Role::Pursuit { pursuit_target } else { bait_target },
        })
        .collect())
}

fn sorted(mut v: Vec<Assignment>) -> Vec<Assignment> {
    v.sort_by_key(|a| a.red);
    v
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Interception,
    Collision,
    OutOfBound,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Interception => "interception",
            EventKind::Collision => "collision",
            EventKind::OutOfBound => "out_of_bound",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Event {
    pub t: f64,
    pub kind: EventKind,
    pub subject: UavId,
    pub object: Option<UavId>,
}

#[derive(Clone, Debug)]
pub struct RedUav {
    pub state: UavState,
    pub alive: bool,
    pub role: Role,
    pub target: usize,
}

#[derive(Clone, Debug)]
pub struct BlueUav {
    pub state: UavState,
    pub alive: bool,
    controller: BlueController,
}

#[derive(Clone, Debug)]
enum BlueController {
    MatrixGame,
    Scripted(ScriptedPolicy),
}

/// Observation handed to one live red UAV.
#[derive(Clone, Debug)]
pub struct RedView {
    pub red: usize,
    pub role: Role,
    pub target: usize,
    pub obs: Observation,
}

/// Per-red result of one decision step, for every red alive when it began.
#[derive(Clone, Debug)]
pub struct RedStep {
    pub red: usize,
    pub role: Role,
    pub reward: f64,
    pub next_obs: Observation,
    /// The UAV's trajectory ended by a terminal event. Time-limit truncation
    /// is not terminal.
    pub done: bool,
}

#[derive(Clone, Debug)]
pub struct StepReport {
    pub reds: Vec<RedStep>,
    pub events: Vec<Event>,
    pub outcome: Option<Outcome>,
}

/// Single-owner simulation state of one episode.
#[derive(Clone, Debug)]
pub struct EngagementWorld {
    ctx: SimContext,
    scenario: ScenarioConfig,
    reds: Vec<RedUav>,
    blues: Vec<BlueUav>,
    steps: u64,
    limit: u64,
    events: Vec<Event>,
    outcome: Option<Outcome>,
    scripted_rng: ChaCha8Rng,
}

fn spawn_blue<R: Rng + ?Sized>(sc: &ScenarioConfig, rng: &mut R) -> UavState {
    let [bx, by, bz] = sc.init_box.map(|e| 0.5 * e);
    let [vx, vy, vz] = sc.vacuum_zone.map(|e| 0.5 * e);
    loop {
        let x = rng.gen_range(-bx..=bx);
        let y = rng.gen_range(-by..=by);
        let dz = rng.gen_range(-bz..=bz);
        if x.abs() <= vx && y.abs() <= vy && dz.abs() <= vz {
            continue;
        }
        let v = rng.gen_range(sc.speed_range[0]..=sc.speed_range[1]);
        let psi = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
        return UavState::level(x, y, sc.formation_z + dz, v, psi);
    }
}

impl EngagementWorld {
    /// Red formation along +x from the origin heading +y; blues scattered in
    /// the spawn box outside the vacuum zone.
    pub fn new(ctx: &SimContext, scenario: &ScenarioConfig, seed: u64) -> Result<Self> {
        scenario.validate(&ctx.engagement)?;
        let mut init = substream(seed, "init");
        let mut scripted_rng = substream(seed, "scripted");
        let mut reds = Vec::with_capacity(scenario.red_count);
        for i in 0..scenario.red_count {
            let v = init.gen_range(scenario.speed_range[0]..=scenario.speed_range[1]);
            reds.push(RedUav {
                state: UavState::level(i as f64 * scenario.formation_spacing, 0.0, scenario.formation_z, v, 0.0),
                alive: true,
                role: scenario.initial_role(i),
                target: 0,
            });
        }
        let blues = (0..scenario.blue_count)
            .map(|_| {
                let state = spawn_blue(scenario, &mut init);
                let kind = match scenario.blue_policy {
                    BluePolicy::MatrixGame => None,
                    BluePolicy::StraightLine => Some(ScriptedKind::StraightLine),
                    BluePolicy::Circling => Some(ScriptedKind::Circling),
                    BluePolicy::Random => Some(ScriptedKind::Random),
                    BluePolicy::Mixed => Some(
                        [ScriptedKind::StraightLine, ScriptedKind::Circling, ScriptedKind::Random]
                            [scripted_rng.gen_range(0..3)],
                    ),
                };
                let controller = match kind {
                    None => BlueController::MatrixGame,
                    Some(k) => BlueController::Scripted(ScriptedPolicy::new(k, scenario.scripted.clone())),
                };
                BlueUav {
                    state,
                    alive: true,
                    controller,
                }
            })
            .collect();
        let mut world = Self {
            ctx: ctx.clone(),
            limit: scenario.limit_steps(ctx.physics.dt),
            scenario: scenario.clone(),
            reds,
            blues,
            steps: 0,
            events: Vec::new(),
            outcome: None,
            scripted_rng,
        };
        world.reallocate()?;
        if world.limit == 0 {
            world.outcome = Some(Outcome::Standoff);
        }
        Ok(world)
    }

    pub fn context(&self) -> &SimContext {
        &self.ctx
    }

    pub fn scenario(&self) -> &ScenarioConfig {
        &self.scenario
    }

    pub fn reds(&self) -> &[RedUav] {
        &self.reds
    }

    pub fn blues(&self) -> &[BlueUav] {
        &self.blues
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn time(&self) -> f64 {
        self.steps as f64 * self.ctx.physics.dt
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn outcome(&self) -> Option<Outcome> {
        self.outcome
    }

    pub fn is_over(&self) -> bool {
        self.outcome.is_some()
    }

    pub fn live_reds(&self) -> Vec<usize> {
        (0..self.reds.len()).filter(|i| self.reds[*i].alive).collect()
    }

    pub fn live_blues(&self) -> Vec<usize> {
        (0..self.blues.len()).filter(|i| self.blues[*i].alive).collect()
    }

    pub fn assignments(&self) -> Vec<Assignment> {
        self.live_reds()
            .into_iter()
            .map(|i| Assignment {
                red: i,
                role: self.reds[i].role,
                target: self.reds[i].target,
            })
            .collect()
    }

    /// Reassigns targets, and roles when they are dynamic. A no-op once
    /// either side is eliminated.
    pub fn reallocate(&mut self) -> Result<()> {
        let blues: Vec<_> = self.live_blues().into_iter().map(|i| (i, self.blues[i].state)).collect();
        let live = self.live_reds();
        if blues.is_empty() || live.is_empty() {
            return Ok(());
        }
        let plan = if self.scenario.dynamic_roles {
            let reds: Vec<_> = live.iter().map(|&i| (i, self.reds[i].state)).collect();
            allocate(&reds, &blues, &self.ctx.rewards)?
        } else {
            let reds: Vec<_> = live.iter().map(|&i| (i, self.reds[i].state, self.reds[i].role)).collect();
            retarget(&reds, &blues, &self.ctx.rewards)?
        };
        for a in plan {
            self.reds[a.red].role = a.role;
            self.reds[a.red].target = a.target;
        }
        Ok(())
    }

    fn observe_pair(&self, red: &UavState, blue: &UavState) -> Observation {
        self.ctx.scale.observe(red, blue).unwrap_or([0.0; OBS_DIM])
    }

    /// Observations of every live red UAV against its assigned target.
    pub fn observations(&self) -> Vec<RedView> {
        self.live_reds()
            .into_iter()
            .map(|i| {
                let r = &self.reds[i];
                RedView {
                    red: i,
                    role: r.role,
                    target: r.target,
                    obs: self.observe_pair(&r.state, &self.blues[r.target].state),
                }
            })
            .collect()
    }

    fn blue_actions(&mut self) -> Result<Vec<(usize, usize)>> {
        let reds: Vec<UavState> = self.live_reds().into_iter().map(|i| self.reds[i].state).collect();
        let mut out = Vec::new();
        for i in self.live_blues() {
            let action = match &mut self.blues[i].controller {
                BlueController::MatrixGame => matrix_game_action(
                    &self.blues[i].state,
                    &reds,
                    &self.ctx.catalog,
                    &self.ctx.physics,
                    &self.ctx.rewards,
                    &self.scenario.matrix_game,
                )?,
                BlueController::Scripted(p) => scripted_action(p, self.steps, &mut self.scripted_rng),
            };
            out.push((i, action));
        }
        Ok(out)
    }

    /// Advances one decision interval. `red_actions` holds one action per
    /// live red UAV in index order.
    pub fn step(&mut self, red_actions: &[usize]) -> Result<StepReport> {
        if self.is_over() {
            return Err(domain("episode already finished"));
        }
        let live_r = self.live_reds();
        if red_actions.len() != live_r.len() {
            return Err(Error::Shape {
                expected: live_r.len(),
                got: red_actions.len(),
            });
        }
        let blue_moves = self.blue_actions()?;
        let (phys, cat, eng) = (&self.ctx.physics, &self.ctx.catalog, &self.ctx.engagement);
        for (&i, &a) in live_r.iter().zip(red_actions) {
            self.reds[i].state = apply_action(&self.reds[i].state, a, cat, phys)?;
        }
        for (i, a) in blue_moves {
            self.blues[i].state = apply_action(&self.blues[i].state, a, cat, phys)?;
        }
        self.steps += 1;
        let t = self.time();
        let live_b = self.live_blues();

        let mut red_flags = vec![OutcomeFlags::default(); self.reds.len()];
        let mut red_dead = vec![false; self.reds.len()];
        let mut blue_dead = vec![false; self.blues.len()];
        let mut events = Vec::new();
        let geo = |a: &UavState, b: &UavState| relative_situation(a, b).ok();

        for &r in &live_r {
            for &b in &live_b {
                let (rs, bs) = (self.reds[r].state, self.blues[b].state);
                if geo(&rs, &bs).is_some_and(|g| is_intercepted(&g, eng)) {
                    red_flags[r].intercepted_target = true;
                    blue_dead[b] = true;
                    events.push(Event {
                        t,
                        kind: EventKind::Interception,
                        subject: UavId::red(r),
                        object: Some(UavId::blue(b)),
                    });
                }
                if geo(&bs, &rs).is_some_and(|g| is_intercepted(&g, eng)) {
                    red_flags[r].was_intercepted = true;
                    red_dead[r] = true;
                    events.push(Event {
                        t,
                        kind: EventKind::Interception,
                        subject: UavId::blue(b),
                        object: Some(UavId::red(r)),
                    });
                }
                if collided(&rs, &bs, eng) {
                    red_flags[r].collision = true;
                    red_dead[r] = true;
                    blue_dead[b] = true;
                    events.push(Event {
                        t,
                        kind: EventKind::Collision,
                        subject: UavId::red(r),
                        object: Some(UavId::blue(b)),
                    });
                }
            }
        }
        if eng.teammate_collisions {
            for (k, &a) in live_r.iter().enumerate() {
                for &b in &live_r[k + 1..] {
                    if collided(&self.reds[a].state, &self.reds[b].state, eng) {
                        for i in [a, b] {
                            red_flags[i].collision = true;
                            red_dead[i] = true;
                        }
                        events.push(Event {
                            t,
                            kind: EventKind::Collision,
                            subject: UavId::red(a),
                            object: Some(UavId::red(b)),
                        });
                    }
                }
            }
            for (k, &a) in live_b.iter().enumerate() {
                for &b in &live_b[k + 1..] {
                    if collided(&self.blues[a].state, &self.blues[b].state, eng) {
                        blue_dead[a] = true;
                        blue_dead[b] = true;
                        events.push(Event {
                            t,
                            kind: EventKind::Collision,
                            subject: UavId::blue(a),
                            object: Some(UavId::blue(b)),
                        });
                    }
                }
            }
        }
        for &r in &live_r {
            if out_of_bounds(&self.reds[r].state, eng) {
                red_flags[r].out_of_bounds = true;
                red_dead[r] = true;
                events.push(Event {
                    t,
                    kind: EventKind::OutOfBound,
                    subject: UavId::red(r),
                    object: None,
                });
            }
        }
        for &b in &live_b {
            if out_of_bounds(&self.blues[b].state, eng) {
                blue_dead[b] = true;
                events.push(Event {
                    t,
                    kind: EventKind::OutOfBound,
                    subject: UavId::blue(b),
                    object: None,
                });
            }
        }

        // rewards use the pre-removal states and the assignments of this step
        let mut reports = Vec::with_capacity(live_r.len());
        for &r in &live_r {
            let red = &self.reds[r];
            let mut f = red_flags[r];
            if f.was_intercepted {
                f = OutcomeFlags {
                    was_intercepted: true,
                    ..OutcomeFlags::default()
                };
            } else if f.collision || f.out_of_bounds {
                f.intercepted_target = false;
            }
            let target = self.blues[red.target].state;
            let reward = match (red.role, relative_situation(&red.state, &target)) {
                (Role::Pursuit, Ok(rel)) => pursuit_step_reward(&rel, &red.state, f, &self.ctx.rewards)?,
                (Role::Bait, Ok(rel)) => {
                    f.intercepted_target = false;
                    bait_step_reward(&rel, f, &self.ctx.rewards)?
                }
                (_, Err(_)) => self.ctx.rewards.r_punish,
            };
            reports.push((r, red.role, reward, f.was_intercepted || f.collision || f.out_of_bounds));
        }

        for (r, dead) in red_dead.iter().enumerate() {
            if *dead {
                self.reds[r].alive = false;
            }
        }
        let mut removed_blue = false;
        for (b, dead) in blue_dead.iter().enumerate() {
            if *dead {
                self.blues[b].alive = false;
                removed_blue = true;
            }
        }
        let reds_left = self.reds.iter().any(|r| r.alive);
        let blues_left = self.blues.iter().any(|b| b.alive);
        self.outcome = match (reds_left, blues_left) {
            (true, false) => Some(Outcome::Win),
            (false, true) => Some(Outcome::Lose),
            (false, false) => Some(Outcome::Standoff),
            (true, true) if self.steps >= self.limit => Some(Outcome::Standoff),
            _ => None,
        };
        let eliminated = !(reds_left && blues_left);
        let removal = removed_blue || red_dead.iter().any(|d| *d);
        if !eliminated && (removal || self.steps % self.scenario.realloc_period == 0) {
            self.reallocate()?;
        }

        let reds = reports
            .into_iter()
            .map(|(r, role, reward, terminal)| {
                let red = &self.reds[r];
                RedStep {
                    red: r,
                    role,
                    reward,
                    next_obs: self.observe_pair(&red.state, &self.blues[red.target].state),
                    done: terminal || eliminated,
                }
            })
            .collect();
        self.events.extend(events.iter().copied());
        Ok(StepReport {
            reds,
            events,
            outcome: self.outcome,
        })
    }
}

/// Chooses red actions from per-UAV observations.
pub trait RedController {
    fn act(&mut self, view: &RedView) -> Result<usize>;
}

/// Greedy networks per role.
#[derive(Clone, Debug, Default)]
pub struct GreedyRed {
    pub pursuit: Option<QNetwork>,
    pub bait: Option<QNetwork>,
}

impl GreedyRed {
    pub fn pursuit_only(net: QNetwork) -> Self {
        Self {
            pursuit: Some(net),
            bait: None,
        }
    }
}

impl RedController for GreedyRed {
    fn act(&mut self, view: &RedView) -> Result<usize> {
        let net = match view.role {
            Role::Pursuit => self.pursuit.as_ref(),
            Role::Bait => self.bait.as_ref().or(self.pursuit.as_ref()),
        };
        net.ok_or_else(|| domain(format!("no policy for the {} role", view.role.as_str())))?
            .greedy(&view.obs)
    }
}

/// Every red UAV flies one scripted maneuver.
#[derive(Clone, Debug)]
pub struct ScriptedRed {
    policy: ScriptedPolicy,
    rng: ChaCha8Rng,
    step: u64,
}

impl ScriptedRed {
    pub fn new(kind: ScriptedKind, cfg: ScriptedConfig, seed: u64) -> Self {
        Self {
            policy: ScriptedPolicy::new(kind, cfg),
            rng: substream(seed, "red-scripted"),
            step: 0,
        }
    }
}

impl RedController for ScriptedRed {
    fn act(&mut self, _view: &RedView) -> Result<usize> {
        let a = scripted_action(&mut self.policy, self.step, &mut self.rng);
        self.step += 1;
        Ok(a)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrajectoryRow {
    pub t: f64,
    pub side: Side,
    pub id: usize,
    pub role: String,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub v: f64,
    pub gamma: f64,
    pub psi: f64,
    pub alive: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RewardTraceRow {
    pub t: f64,
    pub uav_id: String,
    pub pursuit_score: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct EpisodeRecord {
    pub outcome: Outcome,
    pub steps: u64,
    pub duration_s: f64,
    pub seed: u64,
    pub config_hash: String,
    pub interceptions: Vec<Event>,
    #[serde(skip)]
    pub events: Vec<Event>,
    /// Undiscounted reward sum per red UAV.
    pub red_returns: Vec<f64>,
    #[serde(skip)]
    pub trajectory: Vec<TrajectoryRow>,
    #[serde(skip)]
    pub reward_trace: Vec<RewardTraceRow>,
}

#[derive(Serialize)]
struct Summary<'a> {
    outcome: Outcome,
    duration_s: f64,
    interceptions: &'a [Event],
    seed: u64,
    config_hash: &'a str,
}

impl EpisodeRecord {
    pub fn summary_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&Summary {
            outcome: self.outcome,
            duration_s: self.duration_s,
            interceptions: &self.interceptions,
            seed: self.seed,
            config_hash: &self.config_hash,
        })?)
    }

    pub fn write_summary(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.summary_json()? + "\n")?;
        Ok(())
    }

    pub fn write_trajectory(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for row in &self.trajectory {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_events(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["t", "kind", "subject", "object"])?;
        for e in &self.events {
            let object = e.object.map(|o| o.to_string()).unwrap_or_default();
            w.write_record([format!("{}", e.t), e.kind.as_str().into(), e.subject.to_string(), object])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_reward_trace(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for row in &self.reward_trace {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn record_tracks(world: &EngagementWorld, trajectory: &mut Vec<TrajectoryRow>, trace: &mut Vec<RewardTraceRow>) {
    let t = world.time();
    let rw = &world.context().rewards;
    for (i, r) in world.reds().iter().enumerate() {
        trajectory.push(row(t, Side::Red, i, r.role.as_str(), &r.state, r.alive));
    }
    for (i, b) in world.blues().iter().enumerate() {
        trajectory.push(row(t, Side::Blue, i, "-", &b.state, b.alive));
    }
    let live_r = world.live_reds();
    let live_b = world.live_blues();
    for &i in &live_r {
        let r = &world.reds()[i];
        let score = pair_score(&r.state, &world.blues()[r.target].state, rw);
        trace.push(RewardTraceRow {
            t,
            uav_id: UavId::red(i).to_string(),
            pursuit_score: score,
        });
    }
    for &j in &live_b {
        let b = &world.blues()[j].state;
        let reds: Vec<_> = live_r.iter().map(|&i| (i, world.reds()[i].state)).collect();
        if reds.is_empty() {
            continue;
        }
        let k = nearest(b, &reds);
        trace.push(RewardTraceRow {
            t,
            uav_id: UavId::blue(j).to_string(),
            pursuit_score: pair_score(b, &world.reds()[k].state, rw),
        });
    }
}

fn row(t: f64, side: Side, id: usize, role: &str, s: &UavState, alive: bool) -> TrajectoryRow {
    TrajectoryRow {
        t,
        side,
        id,
        role: role.to_string(),
        x: s.x,
        y: s.y,
        z: s.z,
        v: s.v,
        gamma: s.gamma,
        psi: s.psi,
        alive,
    }
}

/// Plays one episode to completion. Reallocation happens inside
/// [`EngagementWorld::step`]; tracks are recorded after every step when
/// `record` is set.
pub fn run_episode(
    ctx: &SimContext,
    scenario: &ScenarioConfig,
    seed: u64,
    config_hash: &str,
    red: &mut dyn RedController,
    record: bool,
) -> Result<EpisodeRecord> {
    let mut world = EngagementWorld::new(ctx, scenario, seed)?;
    let mut returns = vec![0.0; scenario.red_count];
    let mut trajectory = Vec::new();
    let mut trace = Vec::new();
    while !world.is_over() {
        let actions = world
            .observations()
            .iter()
            .map(|v| red.act(v))
            .collect::<Result<Vec<_>>>()?;
        let rep = world.step(&actions)?;
        for s in &rep.reds {
            returns[s.red] += s.reward;
        }
        if record {
            record_tracks(&world, &mut trajectory, &mut trace);
        }
    }
    let events = world.events().to_vec();
    Ok(EpisodeRecord {
        outcome: world.outcome().expect("loop ends on an outcome"),
        steps: world.steps(),
        duration_s: world.time(),
        seed,
        config_hash: config_hash.to_string(),
        interceptions: events
            .iter()
            .filter(|e| e.kind == EventKind::Interception)
            .copied()
            .collect(),
        events,
        red_returns: returns,
        trajectory,
        reward_trace: trace,
    })
}
