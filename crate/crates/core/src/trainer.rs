//! Multi-environment double-DQN training: rollout workers with an
//! exploration ladder feed one prioritized buffer per role, a single learner
//! samples it, and training plans chain phases into curricula.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{mpsc, Arc, Mutex, RwLock};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::arena::{BluePolicy, EngagementWorld, GreedyRed, RedController, Role, ScenarioConfig, SimContext};
use crate::error::{config_err, domain, Error, Result};
use crate::qnet::{train_step, Adam, AdamConfig, NetworkConfig, QNetwork, TargetNetwork, TrainStats};
use crate::replay::{PerConfig, PrioritizedReplay, Transition};
use crate::seeding::{derive_seed, substream};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainerConfig {
    pub discount: f64,
    pub batch_size: usize,
    pub workers: usize,
    /// Worker `w` explores with `epsilon_ladder[w % len]`.
    pub epsilon_ladder: Vec<f64>,
    /// Worker decision steps between policy snapshot refreshes.
    pub snapshot_period: u64,
    /// The learner waits for `max(batch_size, warmup_min)` transitions.
    pub warmup_min: usize,
    /// Collected transitions per learner step.
    pub collect_per_train: u64,
    /// Learner steps between target-network syncs.
    pub target_sync_period: u64,
    /// Episode limit during training; when absent the scenario's own limit
    /// applies.
    pub episode_time_limit_s: Option<f64>,
    pub reset_buffer_between_phases: bool,
    /// Runs every worker round-robin on the calling thread.
    pub deterministic: bool,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            discount: 0.95,
            batch_size: 1024,
            workers: 4,
            epsilon_ladder: vec![0.05, 0.1, 0.2, 0.4],
            snapshot_period: 200,
            warmup_min: 5000,
            collect_per_train: 4,
            target_sync_period: 1000,
            episode_time_limit_s: None,
            reset_buffer_between_phases: false,
            deterministic: false,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        let p = |k: &str| format!("trainer.{k}");
        if !(0.0..=1.0).contains(&self.discount) {
            return Err(config_err(p("discount"), "must lie in [0, 1]"));
        }
        if self.batch_size == 0 {
            return Err(config_err(p("batch_size"), "must be at least 1"));
        }
        if self.workers == 0 {
            return Err(config_err(p("workers"), "must be at least 1"));
        }
        if self.epsilon_ladder.is_empty() || self.epsilon_ladder.iter().any(|e| !(0.0..=1.0).contains(e)) {
            return Err(config_err(p("epsilon_ladder"), "need at least one epsilon in [0, 1]"));
        }
        if self.snapshot_period == 0 || self.collect_per_train == 0 || self.target_sync_period == 0 {
            return Err(config_err(
                p("snapshot_period"),
                "snapshot, pacing and sync periods must be at least 1",
            ));
        }
        if let Some(t) = self.episode_time_limit_s {
            if !(t > 0.0 && t.is_finite()) {
                return Err(config_err(p("episode_time_limit_s"), "must be positive"));
            }
        }
        Ok(())
    }

    pub fn warmup(&self) -> usize {
        self.batch_size.max(self.warmup_min)
    }

    pub fn epsilon(&self, worker: usize) -> f64 {
        self.epsilon_ladder[worker % self.epsilon_ladder.len()]
    }
}

/// `ddqn` for a single worker, `meaddqn` otherwise; `uniform` when the
/// priority exponent is zero.
pub fn algorithm_label(trainer: &TrainerConfig, per: &PerConfig) -> String {
    let base = if trainer.workers == 1 { "ddqn" } else { "meaddqn" };
    let sampling = if per.alpha == 0.0 { "uniform" } else { "per" };
    format!("{base}-{sampling}")
}

/// Uniform random action with probability `epsilon`, else greedy.
pub fn epsilon_greedy<R: Rng + ?Sized>(net: &QNetwork, obs: &[f64], epsilon: f64, rng: &mut R) -> Result<usize> {
    if rng.gen::<f64>() < epsilon {
        Ok(rng.gen_range(0..net.output_dim()))
    } else {
        net.greedy(obs)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Phase {
    pub name: String,
    pub scenario: ScenarioConfig,
    /// The role whose policy is updated; every other role runs frozen.
    pub role: Role,
    /// Decision steps per worker.
    pub steps: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainPlan {
    pub name: String,
    pub phases: Vec<Phase>,
}

pub const BASIC_SESSION_STEPS: u64 = 200_000;
pub const MIXED_SESSION_STEPS: u64 = 600_000;
pub const COOP_PHASE_STEPS: u64 = 100_000;
pub const COOP_ITERATIONS: usize = 2;

pub const PLAN_NAMES: &[&str] = &[
    "pursuit-straight",
    "pursuit-circling",
    "pursuit-random",
    "bait-straight",
    "bait-circling",
    "bait-random",
    "basic-pursuit",
    "basic-bait",
    "vs-matrix-pursuit",
    "vs-matrix-bait",
    "coop-2v1",
    "coop-2v2",
    "coop-3v2",
];

fn one_on_one(base: &ScenarioConfig, role: Role, blue: BluePolicy) -> ScenarioConfig {
    ScenarioConfig {
        red_count: 1,
        blue_count: 1,
        red_roles: vec![role],
        blue_policy: blue,
        dynamic_roles: false,
        ..base.clone()
    }
}

/// Named plan built on `base`'s geometry and limits. `steps` replaces every
/// phase's budget when given.
pub fn plan_by_name(name: &str, base: &ScenarioConfig, steps: Option<u64>) -> Result<TrainPlan> {
    let session = |label: &str, role: Role, blue: BluePolicy, n: u64| Phase {
        name: label.to_string(),
        scenario: one_on_one(base, role, blue),
        role,
        steps: steps.unwrap_or(n),
    };
    let basic = |role: Role| {
        let r = role.as_str();
        vec![
            session(&format!("{r}-straight"), role, BluePolicy::StraightLine, BASIC_SESSION_STEPS),
            session(&format!("{r}-circling"), role, BluePolicy::Circling, BASIC_SESSION_STEPS),
            session(&format!("{r}-random"), role, BluePolicy::Random, BASIC_SESSION_STEPS),
            session(&format!("{r}-mixed"), role, BluePolicy::Mixed, MIXED_SESSION_STEPS),
        ]
    };
    let coop = |reds: Vec<Role>, blues: usize, roles: &[Role]| {
        let scenario = ScenarioConfig {
            red_count: reds.len(),
            blue_count: blues,
            red_roles: reds,
            blue_policy: BluePolicy::MatrixGame,
            dynamic_roles: false,
            ..base.clone()
        };
        (0..COOP_ITERATIONS)
            .flat_map(|it| {
                let scenario = scenario.clone();
                roles.iter().map(move |&role| Phase {
                    name: format!("{name}-{}-{it}", role.as_str()),
                    scenario: scenario.clone(),
                    role,
                    steps: steps.unwrap_or(COOP_PHASE_STEPS),
                })
            })
            .collect::<Vec<_>>()
    };
    use Role::{Bait, Pursuit};
    let phases = match name {
        "pursuit-straight" => vec![session(name, Pursuit, BluePolicy::StraightLine, BASIC_SESSION_STEPS)],
        "pursuit-circling" => vec![session(name, Pursuit, BluePolicy::Circling, BASIC_SESSION_STEPS)],
        "pursuit-random" => vec![session(name, Pursuit, BluePolicy::Random, BASIC_SESSION_STEPS)],
        "bait-straight" => vec![session(name, Bait, BluePolicy::StraightLine, BASIC_SESSION_STEPS)],
        "bait-circling" => vec![session(name, Bait, BluePolicy::Circling, BASIC_SESSION_STEPS)],
        "bait-random" => vec![session(name, Bait, BluePolicy::Random, BASIC_SESSION_STEPS)],
        "basic-pursuit" => basic(Pursuit),
        "basic-bait" => basic(Bait),
        "vs-matrix-pursuit" => vec![session(name, Pursuit, BluePolicy::MatrixGame, BASIC_SESSION_STEPS)],
        "vs-matrix-bait" => vec![session(name, Bait, BluePolicy::MatrixGame, BASIC_SESSION_STEPS)],
        "coop-2v1" => coop(vec![Pursuit, Pursuit], 1, &[Pursuit]),
        "coop-2v2" => coop(vec![Pursuit, Bait], 2, &[Pursuit, Bait]),
        "coop-3v2" => coop(vec![Pursuit, Pursuit, Bait], 2, &[Pursuit, Bait]),
        other => {
            return Err(domain(format!(
                "unknown plan `{other}`; expected one of {}",
                PLAN_NAMES.join(", ")
            )))
        }
    };
    if phases.iter().any(|p| p.steps == 0) {
        return Err(config_err("steps", "phase budgets must be positive"));
    }
    Ok(TrainPlan {
        name: name.to_string(),
        phases,
    })
}

/// Latest network per role.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Policies {
    pub pursuit: Option<QNetwork>,
    pub bait: Option<QNetwork>,
}

impl Policies {
    pub fn get(&self, role: Role) -> Option<&QNetwork> {
        match role {
            Role::Pursuit => self.pursuit.as_ref(),
            Role::Bait => self.bait.as_ref(),
        }
    }

    pub fn set(&mut self, role: Role, net: QNetwork) {
        match role {
            Role::Pursuit => self.pursuit = Some(net),
            Role::Bait => self.bait = Some(net),
        }
    }

    fn frozen(&self) -> GreedyRed {
        GreedyRed {
            pursuit: self.pursuit.clone(),
            bait: self.bait.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricsRow {
    pub global_step: u64,
    pub phase: String,
    pub episode: u64,
    pub episode_reward: f64,
    pub mean_loss: Option<f64>,
    pub mean_abs_td: Option<f64>,
    pub epsilon: f64,
    pub buffer_size: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckpointSidecar {
    pub plan: String,
    pub phase: String,
    pub step: u64,
    pub config_hash: String,
    pub role: Role,
    pub sizes: Vec<usize>,
}

/// Everything a finished run produced.
#[derive(Clone, Debug)]
pub struct TrainReport {
    pub policies: Policies,
    pub rows: Vec<MetricsRow>,
    pub checkpoints: Vec<PathBuf>,
    pub global_step: u64,
    /// Transitions inserted per worker, summed over phases.
    pub inserted_per_worker: Vec<u64>,
    pub train_steps: u64,
}

/// Where a run writes. `None` keeps everything in memory.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub dir: PathBuf,
    pub config_hash: String,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WorkerSpec {
    pub id: usize,
    pub epsilon: f64,
    pub snapshot_period: u64,
}

/// Learner-owned state of one role.
struct Learner {
    net: QNetwork,
    target: TargetNetwork,
    opt: Adam,
    buffer: PrioritizedReplay,
    train_steps: u64,
    /// Learner steps taken in the current phase; pacing counts from here.
    phase_train_steps: u64,
    rng: ChaCha8Rng,
}

impl Learner {
    fn new(net: QNetwork, adam: &AdamConfig, per: &PerConfig, rng: ChaCha8Rng) -> Self {
        Self {
            target: TargetNetwork::from_policy(&net),
            opt: Adam::new(adam.clone(), &net),
            buffer: PrioritizedReplay::new(per.clone()),
            net,
            train_steps: 0,
            phase_train_steps: 0,
            rng,
        }
    }
}

fn learn_on(
    net: &mut QNetwork,
    target: &mut TargetNetwork,
    opt: &mut Adam,
    train_steps: &mut u64,
    batch: &crate::replay::SampledBatch,
    cfg: &TrainerConfig,
) -> Result<TrainStats> {
    let stats = train_step(net, target, opt, &batch.transitions, &batch.weights, cfg.discount)?;
    *train_steps += 1;
    if *train_steps % cfg.target_sync_period == 0 {
        target.sync(net)?;
    }
    Ok(stats)
}

/// Finished-episode summary from a worker.
#[derive(Clone, Debug)]
struct EpisodeDone {
    worker: usize,
    reward: f64,
    epsilon: f64,
}

/// One worker's environment and exploration state.
struct Collector {
    spec: WorkerSpec,
    ctx: SimContext,
    scenario: ScenarioConfig,
    role: Role,
    frozen: GreedyRed,
    snapshot: Arc<QNetwork>,
    since_refresh: u64,
    rng: ChaCha8Rng,
    seed: u64,
    phase_tag: String,
    episode: u64,
    world: EngagementWorld,
    returns: BTreeMap<usize, f64>,
    inserted: u64,
}

impl Collector {
    #[allow(clippy::too_many_arguments)]
    fn new(
        spec: WorkerSpec,
        ctx: &SimContext,
        scenario: &ScenarioConfig,
        role: Role,
        frozen: GreedyRed,
        snapshot: Arc<QNetwork>,
        seed: u64,
        phase_tag: &str,
    ) -> Result<Self> {
        let phase_tag = format!("{phase_tag}/worker{}", spec.id);
        let world = EngagementWorld::new(ctx, scenario, derive_seed(seed, &format!("{phase_tag}/episode0")))?;
        Ok(Self {
            spec,
            ctx: ctx.clone(),
            scenario: scenario.clone(),
            role,
            frozen,
            snapshot,
            since_refresh: 0,
            rng: substream(seed, &format!("{phase_tag}/explore")),
            seed,
            phase_tag,
            episode: 0,
            world,
            returns: BTreeMap::new(),
            inserted: 0,
        })
    }

    fn needs_refresh(&self) -> bool {
        self.since_refresh >= self.spec.snapshot_period
    }

    fn refresh(&mut self, snapshot: Arc<QNetwork>) {
        self.snapshot = snapshot;
        self.since_refresh = 0;
    }

    /// One world step. Returns the training-role transitions and, when the
    /// episode ended, its summary.
    fn step(&mut self) -> Result<(Vec<Transition>, Option<EpisodeDone>)> {
        let views = self.world.observations();
        let mut actions = Vec::with_capacity(views.len());
        for v in &views {
            let a = if v.role == self.role {
                epsilon_greedy(&self.snapshot, &v.obs, self.spec.epsilon, &mut self.rng)?
            } else {
                self.frozen.act(v)?
            };
            actions.push(a);
        }
        let report = self.world.step(&actions)?;
        self.since_refresh += 1;
        let mut out = Vec::new();
        for (v, (a, s)) in views.iter().zip(actions.iter().zip(&report.reds)) {
            debug_assert_eq!(v.red, s.red);
            if v.role != self.role {
                continue;
            }
            *self.returns.entry(s.red).or_insert(0.0) += s.reward;
            out.push(Transition {
                state: v.obs.to_vec(),
                action: *a,
                reward: s.reward,
                next: s.next_obs.to_vec(),
                done: s.done,
            });
        }
        self.inserted += out.len() as u64;
        let mut done = None;
        if self.world.is_over() {
            let n = self.returns.len().max(1) as f64;
            done = Some(EpisodeDone {
                worker: self.spec.id,
                reward: self.returns.values().sum::<f64>() / n,
                epsilon: self.spec.epsilon,
            });
            self.returns.clear();
            self.episode += 1;
            let seed = derive_seed(self.seed, &format!("{}/episode{}", self.phase_tag, self.episode));
            self.world = EngagementWorld::new(&self.ctx, &self.scenario, seed)?;
        }
        Ok((out, done))
    }
}

/// Running means of learner statistics between metrics rows.
#[derive(Default)]
struct StatWindow {
    loss: f64,
    td: f64,
    n: u64,
}

impl StatWindow {
    fn add(&mut self, s: &TrainStats) {
        self.loss += s.loss;
        self.td += s.mean_abs_td();
        self.n += 1;
    }

    fn take(&mut self) -> (Option<f64>, Option<f64>) {
        let out = if self.n == 0 {
            (None, None)
        } else {
            (Some(self.loss / self.n as f64), Some(self.td / self.n as f64))
        };
        *self = Self::default();
        out
    }
}

struct MetricsSink {
    writer: Option<csv::Writer<File>>,
    rows: Vec<MetricsRow>,
    episode: u64,
}

impl MetricsSink {
    fn new(out: Option<&RunOutput>, label: &str) -> Result<Self> {
        let writer = match out {
            Some(o) => {
                let mut f = File::create(o.dir.join("metrics.csv"))?;
                writeln!(f, "# algorithm={label} config_hash={}", o.config_hash)?;
                Some(csv::Writer::from_writer(f))
            }
            None => None,
        };
        Ok(Self {
            writer,
            rows: Vec::new(),
            episode: 0,
        })
    }

    fn push(&mut self, row: MetricsRow) -> Result<()> {
        if let Some(w) = &mut self.writer {
            w.serialize(&row)?;
        }
        self.rows.push(row);
        self.episode += 1;
        Ok(())
    }

    fn flush(&mut self) -> Result<()> {
        if let Some(w) = &mut self.writer {
            w.flush()?;
        }
        Ok(())
    }
}

/// Runs every phase of `plan`. `init` seeds the networks; roles that are
/// frozen in some phase must already have one.
pub fn train(
    ctx: &SimContext,
    network: &NetworkConfig,
    cfg: &TrainerConfig,
    per: &PerConfig,
    plan: &TrainPlan,
    init: Policies,
    seed: u64,
    out: Option<&RunOutput>,
) -> Result<TrainReport> {
    network.validate()?;
    cfg.validate()?;
    per.validate()?;
    if let Some(o) = out {
        std::fs::create_dir_all(o.dir.join("checkpoints"))?;
    }
    let sizes = network.layer_sizes();
    for role in [Role::Pursuit, Role::Bait] {
        if let Some(n) = init.get(role) {
            if n.sizes() != sizes {
                return Err(Error::Checkpoint(format!(
                    "{} network has layers {:?}, the trainer expects {:?}",
                    role.as_str(),
                    n.sizes(),
                    sizes
                )));
            }
        }
    }
    let mut policies = init;
    let mut learners: BTreeMap<&'static str, Learner> = BTreeMap::new();
    let mut sink = MetricsSink::new(out, &algorithm_label(cfg, per))?;
    let mut checkpoints = Vec::new();
    let mut global_step = 0u64;
    let mut inserted_per_worker = vec![0u64; cfg.workers];

    for (idx, phase) in plan.phases.iter().enumerate() {
        let mut scenario = phase.scenario.clone();
        if let Some(t) = cfg.episode_time_limit_s {
            scenario.time_limit_s = t;
        }
        scenario.validate(&ctx.engagement)?;
        for r in 0..scenario.red_count {
            let role = scenario.initial_role(r);
            if role != phase.role && policies.get(role).is_none() {
                return Err(Error::Checkpoint(format!(
                    "phase `{}` needs a frozen {} policy",
                    phase.name,
                    role.as_str()
                )));
            }
        }
        let key = phase.role.as_str();
        if !learners.contains_key(key) {
            let net = match policies.get(phase.role) {
                Some(n) => n.clone(),
                None => QNetwork::new(&sizes, &mut substream(seed, &format!("init-net/{key}")))?,
            };
            learners.insert(key, Learner::new(net, &network.adam, per, substream(seed, &format!("learner/{key}"))));
        }
        let learner = learners.get_mut(key).expect("inserted above");
        if cfg.reset_buffer_between_phases {
            learner.buffer = PrioritizedReplay::new(per.clone());
        }
        let specs: Vec<WorkerSpec> = (0..cfg.workers)
            .map(|id| WorkerSpec {
                id,
                epsilon: cfg.epsilon(id),
                snapshot_period: cfg.snapshot_period,
            })
            .collect();
        let tag = format!("phase{idx}");
        let frozen = policies.frozen();
        let inserted = if cfg.deterministic {
            run_phase_sequential(
                ctx, cfg, &scenario, phase, &specs, learner, frozen, seed, &tag, &mut global_step, &mut sink,
            )?
        } else {
            run_phase_threaded(
                ctx, cfg, &scenario, phase, &specs, learner, frozen, seed, &tag, &mut global_step, &mut sink,
            )?
        };
        for (w, n) in inserted.iter().enumerate() {
            inserted_per_worker[w] += n;
        }
        policies.set(phase.role, learner.net.clone());
        if let Some(o) = out {
            let stem = format!("phase{idx:02}-{}", phase.name);
            let path = o.dir.join("checkpoints").join(format!("{stem}.qnet"));
            write_checkpoint(&learner.net, &path, &plan.name, phase, global_step, o)?;
            checkpoints.push(path);
        }
    }
    sink.flush()?;
    if let Some(o) = out {
        for role in [Role::Pursuit, Role::Bait] {
            if let (Some(net), Some(last)) = (policies.get(role), plan.phases.iter().rev().find(|p| p.role == role)) {
                let path = o.dir.join(format!("{}.qnet", role.as_str()));
                write_checkpoint(net, &path, &plan.name, last, global_step, o)?;
                checkpoints.push(path);
            }
        }
    }
    Ok(TrainReport {
        policies,
        rows: sink.rows,
        checkpoints,
        global_step,
        inserted_per_worker,
        train_steps: learners.values().map(|l| l.train_steps).sum(),
    })
}

fn write_checkpoint(
    net: &QNetwork,
    path: &Path,
    plan: &str,
    phase: &Phase,
    step: u64,
    out: &RunOutput,
) -> Result<()> {
    net.save(path)?;
    let sidecar = CheckpointSidecar {
        plan: plan.to_string(),
        phase: phase.name.clone(),
        step,
        config_hash: out.config_hash.clone(),
        role: phase.role,
        sizes: net.sizes(),
    };
    std::fs::write(path.with_extension("json"), serde_json::to_string_pretty(&sidecar)? + "\n")?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn run_phase_sequential(
    ctx: &SimContext,
    cfg: &TrainerConfig,
    scenario: &ScenarioConfig,
    phase: &Phase,
    specs: &[WorkerSpec],
    learner: &mut Learner,
    frozen: GreedyRed,
    seed: u64,
    tag: &str,
    global_step: &mut u64,
    sink: &mut MetricsSink,
) -> Result<Vec<u64>> {
    let snapshot = Arc::new(learner.net.clone());
    let mut workers = specs
        .iter()
        .map(|s| Collector::new(*s, ctx, scenario, phase.role, frozen.clone(), snapshot.clone(), seed, tag))
        .collect::<Result<Vec<_>>>()?;
    let warmup = cfg.warmup();
    let mut collected_after_warmup = 0u64;
    let mut window = StatWindow::default();
    let budget = phase.steps * specs.len() as u64;
    let mut done_steps = 0u64;
    'outer: loop {
        for w in workers.iter_mut() {
            if done_steps >= budget {
                break 'outer;
            }
            if w.needs_refresh() {
                w.refresh(Arc::new(learner.net.clone()));
            }
            let (ts, finished) = w.step()?;
            done_steps += 1;
            *global_step += 1;
            for t in ts {
                learner.buffer.push(t)?;
                if learner.buffer.len() >= warmup {
                    collected_after_warmup += 1;
                }
            }
            while learner.buffer.len() >= warmup && learner.train_steps_phase_due(collected_after_warmup, cfg) {
                let progress = done_steps as f64 / budget as f64;
                let beta = learner.buffer.config().beta_at(progress);
                let batch = learner.buffer.sample(cfg.batch_size, beta, &mut learner.rng)?;
                let stats = learn_on(
                    &mut learner.net,
                    &mut learner.target,
                    &mut learner.opt,
                    &mut learner.train_steps,
                    &batch,
                    cfg,
                )?;
                learner.buffer.update_priorities(&batch.ids, &stats.abs_td)?;
                learner.phase_train_steps += 1;
                window.add(&stats);
            }
            if let Some(ep) = finished {
                let (mean_loss, mean_abs_td) = window.take();
                sink.push(MetricsRow {
                    global_step: *global_step,
                    phase: phase.name.clone(),
                    episode: sink.episode,
                    episode_reward: ep.reward,
                    mean_loss,
                    mean_abs_td,
                    epsilon: ep.epsilon,
                    buffer_size: learner.buffer.len(),
                })?;
                let _ = ep.worker;
            }
        }
    }
    learner.phase_train_steps = 0;
    Ok(workers.iter().map(|w| w.inserted).collect())
}

impl Learner {
    /// Whether pacing calls for another learner step.
    fn train_steps_phase_due(&self, collected_after_warmup: u64, cfg: &TrainerConfig) -> bool {
        self.phase_train_steps * cfg.collect_per_train < collected_after_warmup
    }
}

/// Counters shared between the learner and the rollout threads.
struct Shared {
    buffer: Mutex<PrioritizedReplay>,
    snapshot: RwLock<Arc<QNetwork>>,
    steps_taken: AtomicU64,
    collected_after_warmup: AtomicU64,
    train_steps: AtomicU64,
    abort: AtomicBool,
    live_workers: AtomicU64,
}

#[allow(clippy::too_many_arguments)]
fn run_phase_threaded(
    ctx: &SimContext,
    cfg: &TrainerConfig,
    scenario: &ScenarioConfig,
    phase: &Phase,
    specs: &[WorkerSpec],
    learner: &mut Learner,
    frozen: GreedyRed,
    seed: u64,
    tag: &str,
    global_step: &mut u64,
    sink: &mut MetricsSink,
) -> Result<Vec<u64>> {
    let warmup = cfg.warmup();
    let budget = phase.steps * specs.len() as u64;
    let per = learner.buffer.config().clone();
    let buffer = std::mem::replace(&mut learner.buffer, PrioritizedReplay::new(per));
    let shared = Shared {
        buffer: Mutex::new(buffer),
        snapshot: RwLock::new(Arc::new(learner.net.clone())),
        steps_taken: AtomicU64::new(0),
        collected_after_warmup: AtomicU64::new(0),
        train_steps: AtomicU64::new(0),
        abort: AtomicBool::new(false),
        live_workers: AtomicU64::new(specs.len() as u64),
    };
    // slack lets collection run a little ahead of the learner
    let slack = (cfg.collect_per_train * specs.len() as u64).max(1) * 2;
    let base_step = *global_step;
    let (tx, rx) = mpsc::channel::<(u64, EpisodeDone)>();
    let collectors = specs
        .iter()
        .map(|s| Collector::new(*s, ctx, scenario, phase.role, frozen.clone(), Arc::new(learner.net.clone()), seed, tag))
        .collect::<Result<Vec<_>>>()?;

    let result = std::thread::scope(|scope| -> Result<Vec<u64>> {
        let handles: Vec<_> = collectors
            .into_iter()
            .map(|mut c| {
                let tx = tx.clone();
                let shared = &shared;
                scope.spawn(move || -> Result<u64> {
                    let mut taken = 0u64;
                    let r = (|| -> Result<()> {
                        while taken < phase.steps {
                            if shared.abort.load(Ordering::Relaxed) {
                                return Ok(());
                            }
                            let trained = shared.train_steps.load(Ordering::Acquire);
                            let ahead = shared.collected_after_warmup.load(Ordering::Acquire);
                            if ahead > trained * cfg.collect_per_train + slack {
                                std::thread::yield_now();
                                continue;
                            }
                            let k = shared.steps_taken.fetch_add(1, Ordering::AcqRel);
                            taken += 1;
                            if c.needs_refresh() {
                                let snap = shared.snapshot.read().expect("snapshot lock").clone();
                                c.refresh(snap);
                            }
                            let (ts, finished) = c.step()?;
                            {
                                let mut buf = shared.buffer.lock().expect("buffer lock");
                                for t in ts {
                                    buf.push(t)?;
                                    if buf.len() >= warmup {
                                        shared.collected_after_warmup.fetch_add(1, Ordering::AcqRel);
                                    }
                                }
                            }
                            if let Some(ep) = finished {
                                let _ = tx.send((base_step + k + 1, ep));
                            }
                        }
                        Ok(())
                    })();
                    shared.live_workers.fetch_sub(1, Ordering::AcqRel);
                    if r.is_err() {
                        shared.abort.store(true, Ordering::Relaxed);
                    }
                    r.map(|_| c.inserted)
                })
            })
            .collect();
        drop(tx);

        let mut window = StatWindow::default();
        let mut learner_err = None;
        loop {
            while let Ok((step, ep)) = rx.try_recv() {
                let (mean_loss, mean_abs_td) = window.take();
                let size = shared.buffer.lock().expect("buffer lock").len();
                sink.push(MetricsRow {
                    global_step: step,
                    phase: phase.name.clone(),
                    episode: sink.episode,
                    episode_reward: ep.reward,
                    mean_loss,
                    mean_abs_td,
                    epsilon: ep.epsilon,
                    buffer_size: size,
                })?;
                let _ = ep.worker;
            }
            let trained = shared.train_steps.load(Ordering::Acquire);
            let ahead = shared.collected_after_warmup.load(Ordering::Acquire);
            let due = trained * cfg.collect_per_train < ahead;
            if due && !shared.abort.load(Ordering::Relaxed) {
                let progress = (shared.steps_taken.load(Ordering::Relaxed) as f64 / budget as f64).min(1.0);
                let batch = {
                    let buf = shared.buffer.lock().expect("buffer lock");
                    let beta = buf.config().beta_at(progress);
                    buf.sample(cfg.batch_size, beta, &mut learner.rng)
                };
                let step = batch.and_then(|batch| {
                    let stats = learn_on(
                        &mut learner.net,
                        &mut learner.target,
                        &mut learner.opt,
                        &mut learner.train_steps,
                        &batch,
                        cfg,
                    )?;
                    shared
                        .buffer
                        .lock()
                        .expect("buffer lock")
                        .update_priorities(&batch.ids, &stats.abs_td)?;
                    Ok(stats)
                });
                match step {
                    Ok(stats) => {
                        window.add(&stats);
                        shared.train_steps.fetch_add(1, Ordering::AcqRel);
                        *shared.snapshot.write().expect("snapshot lock") = Arc::new(learner.net.clone());
                    }
                    Err(e) => {
                        shared.abort.store(true, Ordering::Relaxed);
                        learner_err = Some(e);
                    }
                }
                continue;
            }
            if shared.live_workers.load(Ordering::Acquire) == 0 {
                break;
            }
            std::thread::yield_now();
        }
        let mut inserted = Vec::with_capacity(handles.len());
        let mut worker_err = None;
        for h in handles {
            match h.join() {
                Ok(Ok(n)) => inserted.push(n),
                Ok(Err(e)) => {
                    worker_err.get_or_insert(e);
                    inserted.push(0);
                }
                Err(_) => {
                    worker_err.get_or_insert(Error::Worker("rollout thread panicked".into()));
                    inserted.push(0);
                }
            }
        }
        while let Ok((step, ep)) = rx.try_recv() {
            let (mean_loss, mean_abs_td) = window.take();
            let size = shared.buffer.lock().expect("buffer lock").len();
            sink.push(MetricsRow {
                global_step: step,
                phase: phase.name.clone(),
                episode: sink.episode,
                episode_reward: ep.reward,
                mean_loss,
                mean_abs_td,
                epsilon: ep.epsilon,
                buffer_size: size,
            })?;
        }
        if let Some(e) = learner_err.or(worker_err) {
            return Err(e);
        }
        Ok(inserted)
    })?;
    *global_step = base_step + budget;
    learner.buffer = shared.buffer.into_inner().map_err(|_| Error::Worker("buffer lock poisoned".into()))?;
    Ok(result)
}

/// Mean of each window of `width` consecutive values.
pub fn moving_average(values: &[f64], width: usize) -> Vec<f64> {
    if width == 0 || values.len() < width {
        return Vec::new();
    }
    let mut out = Vec::with_capacity(values.len() - width + 1);
    let mut sum: f64 = values[..width].iter().sum();
    out.push(sum / width as f64);
    for i in width..values.len() {
        sum += values[i] - values[i - width];
        out.push(sum / width as f64);
    }
    out
}

/// Means of the first and last tenth of `values`.
pub fn decile_means(values: &[f64]) -> Option<(f64, f64)> {
    let k = values.len() / 10;
    if k == 0 {
        return None;
    }
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    Some((mean(&values[..k]), mean(&values[values.len() - k..])))
}
