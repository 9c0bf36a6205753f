//! Command-line front end. Every command validates its whole configuration
//! before it touches the filesystem.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::arena::{run_episode, BluePolicy, EpisodeRecord, GreedyRed, Outcome, Role, ScenarioConfig};
use crate::config::RunConfig;
use crate::dynamics::ManeuverCatalog;
use crate::error::{domain, Error, Result};
use crate::qnet::QNetwork;
use crate::seeding::derive_seed;
use crate::trainer::{plan_by_name, train, Policies, RunOutput};

#[derive(Debug, Parser)]
#[command(name = "pursuit", version, about = "Multi-UAV pursuit-evasion training and evaluation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a named training plan.
    Train(TrainArgs),
    /// Play seeded episodes and print a win/standoff/lose table.
    Evaluate(EvaluateArgs),
    /// Replay one seeded episode and write its tracks.
    Export(ExportArgs),
    /// Print the maneuver library as a table.
    PrintActionCatalog(ConfigArgs),
    /// Load, override and validate a configuration, then print it resolved.
    ValidateConfig(ConfigArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ConfigArgs {
    /// TOML configuration; defaults apply when absent.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dotted override such as `trainer.workers=1`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub cfg: ConfigArgs,
    #[arg(long)]
    pub plan: String,
    /// Decision steps per worker for every phase, replacing the plan's budgets.
    #[arg(long)]
    pub steps: Option<u64>,
    /// Hidden layer widths, e.g. `64,64`.
    #[arg(long, value_delimiter = ',')]
    pub net: Option<Vec<usize>>,
    #[arg(long)]
    pub workers: Option<usize>,
    /// Single-threaded round-robin collection.
    #[arg(long)]
    pub deterministic: bool,
    /// Starting or frozen checkpoints: `pursuit.qnet,bait.qnet` by position or
    /// `role=path` items.
    #[arg(long, value_delimiter = ',')]
    pub frozen: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ScenarioKind {
    #[value(name = "1v1")]
    OneOnOne,
    #[value(name = "2v1")]
    TwoOnOne,
    #[value(name = "2v2")]
    TwoOnTwo,
    #[value(name = "3v2")]
    ThreeOnTwo,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum BlueArg {
    MatrixGame,
    StraightLine,
    Circling,
    Random,
    Mixed,
}

impl From<BlueArg> for BluePolicy {
    fn from(b: BlueArg) -> Self {
        match b {
            BlueArg::MatrixGame => BluePolicy::MatrixGame,
            BlueArg::StraightLine => BluePolicy::StraightLine,
            BlueArg::Circling => BluePolicy::Circling,
            BlueArg::Random => BluePolicy::Random,
            BlueArg::Mixed => BluePolicy::Mixed,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum RoleArg {
    Pursuit,
    Bait,
}

impl From<RoleArg> for Role {
    fn from(r: RoleArg) -> Self {
        match r {
            RoleArg::Pursuit => Role::Pursuit,
            RoleArg::Bait => Role::Bait,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct MatchArgs {
    #[arg(long)]
    pub pursuit: PathBuf,
    /// Bait checkpoint; the pursuit network flies bait roles when absent.
    #[arg(long)]
    pub bait: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "2v1")]
    pub scenario: ScenarioKind,
    /// Blue controller; the configured scenario's policy when absent.
    #[arg(long, value_enum)]
    pub blue: Option<BlueArg>,
    /// Red role in 1v1 episodes.
    #[arg(long, value_enum, default_value = "pursuit")]
    pub role: RoleArg,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub cfg: ConfigArgs,
    #[command(flatten)]
    pub game: MatchArgs,
    #[arg(long, default_value_t = 100)]
    pub episodes: usize,
    /// Episode limits in minutes, one table row each.
    #[arg(long, value_delimiter = ',', default_values_t = vec![1.0, 3.0, 5.0])]
    pub time_limits: Vec<f64>,
    /// Also write trajectory, event and reward-trace CSVs per episode.
    #[arg(long)]
    pub trajectories: bool,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[command(flatten)]
    pub cfg: ConfigArgs,
    #[command(flatten)]
    pub game: MatchArgs,
    /// Index of the evaluation episode to replay.
    #[arg(long, default_value_t = 0)]
    pub episode: usize,
    /// Episode limit in minutes.
    #[arg(long, default_value_t = 3.0)]
    pub time_limit: f64,
    #[arg(long, default_value = "csv")]
    pub format: String,
}

/// Exit status for an error: 2 for configuration, 3 for checkpoints, 1
/// otherwise.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config { .. } => 2,
        Error::Checkpoint(_) => 3,
        _ => 1,
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(a) => cmd_train(&a),
        Command::Evaluate(a) => {
            print!("{}", cmd_evaluate(&a)?.render());
            Ok(())
        }
        Command::Export(a) => cmd_export(&a).map(|files| {
            for f in files {
                println!("{}", f.display());
            }
        }),
        Command::PrintActionCatalog(a) => {
            let cfg = resolve(&a, &[])?;
            print!("{}", ManeuverCatalog::new(cfg.catalog.clone()).table());
            Ok(())
        }
        Command::ValidateConfig(a) => {
            let cfg = resolve(&a, &[])?;
            println!("# config_hash = {}", cfg.hash());
            print!("{}", cfg.to_toml()?);
            Ok(())
        }
    }
}

/// File, then `--set` overrides, then `extra` flag overrides, then the
/// dedicated seed and output flags.
pub fn resolve(a: &ConfigArgs, extra: &[String]) -> Result<RunConfig> {
    let mut overrides = a.set.clone();
    overrides.extend_from_slice(extra);
    if let Some(s) = a.seed {
        overrides.push(format!("seed={s}"));
    }
    if let Some(o) = &a.out {
        overrides.push(format!("out={}", toml_string(&o.to_string_lossy())));
    }
    match &a.config {
        Some(p) => RunConfig::load(p, &overrides),
        None => RunConfig::with_overrides(&overrides),
    }
}

fn toml_string(s: &str) -> String {
    toml::Value::String(s.to_string()).to_string()
}

fn load_net(path: &Path, sizes: &[usize]) -> Result<QNetwork> {
    let net = QNetwork::load(path).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
    let got = net.sizes();
    if got.first() != sizes.first() || got.last() != sizes.last() {
        return Err(Error::Checkpoint(format!(
            "{} maps {:?} -> {:?}, expected {:?} -> {:?}",
            path.display(),
            got.first(),
            got.last(),
            sizes.first(),
            sizes.last()
        )));
    }
    Ok(net)
}

fn parse_frozen(items: &[String], sizes: &[usize]) -> Result<Policies> {
    let mut p = Policies::default();
    for (i, item) in items.iter().enumerate() {
        let (role, path) = match item.split_once('=') {
            Some(("pursuit", path)) => (Role::Pursuit, path),
            Some(("bait", path)) => (Role::Bait, path),
            Some((other, _)) => return Err(domain(format!("unknown role `{other}` in --frozen"))),
            None if i == 0 => (Role::Pursuit, item.as_str()),
            None if i == 1 => (Role::Bait, item.as_str()),
            None => return Err(domain("--frozen takes at most a pursuit and a bait checkpoint")),
        };
        p.set(role, load_net(Path::new(path), sizes)?);
    }
    Ok(p)
}

pub fn cmd_train(a: &TrainArgs) -> Result<()> {
    let mut extra = Vec::new();
    if let Some(net) = &a.net {
        let list: Vec<String> = net.iter().map(|n| n.to_string()).collect();
        extra.push(format!("network.hidden=[{}]", list.join(",")));
    }
    if let Some(w) = a.workers {
        extra.push(format!("trainer.workers={w}"));
    }
    if a.deterministic {
        extra.push("trainer.deterministic=true".into());
    }
    let cfg = resolve(&a.cfg, &extra)?;
    let ctx = cfg.sim_context()?;
    let plan = plan_by_name(&a.plan, &cfg.scenario, a.steps).map_err(|e| match e {
        Error::Domain(m) => Error::Config {
            path: "plan".into(),
            reason: m,
        },
        other => other,
    })?;
    let init = parse_frozen(&a.frozen, &cfg.network.layer_sizes())?;
    std::fs::create_dir_all(&cfg.out)?;
    std::fs::write(cfg.out.join("config.toml"), cfg.to_toml()?)?;
    let out = RunOutput {
        dir: cfg.out.clone(),
        config_hash: cfg.hash(),
    };
    let report = train(&ctx, &cfg.network, &cfg.trainer, &cfg.replay, &plan, init, cfg.seed, Some(&out))?;
    println!(
        "plan {} finished: {} steps, {} learner updates, {} episodes",
        plan.name,
        report.global_step,
        report.train_steps,
        report.rows.len()
    );
    for c in &report.checkpoints {
        println!("{}", c.display());
    }
    Ok(())
}

/// Scenario for an evaluation or export run, built on the configured
/// geometry.
pub fn match_scenario(base: &ScenarioConfig, m: &MatchArgs) -> ScenarioConfig {
    let (reds, blues, roles): (usize, usize, Vec<Role>) = match m.scenario {
        ScenarioKind::OneOnOne => (1, 1, vec![m.role.into()]),
        ScenarioKind::TwoOnOne => (2, 1, vec![Role::Pursuit, Role::Pursuit]),
        ScenarioKind::TwoOnTwo => (2, 2, vec![Role::Pursuit, Role::Bait]),
        ScenarioKind::ThreeOnTwo => (3, 2, vec![Role::Pursuit, Role::Pursuit, Role::Bait]),
    };
    ScenarioConfig {
        red_count: reds,
        blue_count: blues,
        red_roles: roles,
        blue_policy: m.blue.map(Into::into).unwrap_or(base.blue_policy),
        dynamic_roles: m.scenario != ScenarioKind::OneOnOne,
        ..base.clone()
    }
}

fn red_team(m: &MatchArgs, cfg: &RunConfig) -> Result<GreedyRed> {
    let sizes = cfg.network.layer_sizes();
    Ok(GreedyRed {
        pursuit: Some(load_net(&m.pursuit, &sizes)?),
        bait: m.bait.as_deref().map(|p| load_net(p, &sizes)).transpose()?,
    })
}

/// Seed of evaluation episode `i`; shared by every time limit so longer
/// limits extend the same engagements.
pub fn episode_seed(seed: u64, i: usize) -> u64 {
    derive_seed(seed, &format!("eval/episode{i}"))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TableRow {
    pub minutes: f64,
    pub win: usize,
    pub standoff: usize,
    pub lose: usize,
}

impl TableRow {
    pub fn total(&self) -> usize {
        self.win + self.standoff + self.lose
    }

    pub fn pct(&self, n: usize) -> f64 {
        100.0 * n as f64 / self.total().max(1) as f64
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WinTable {
    pub title: String,
    pub rows: Vec<TableRow>,
}

impl WinTable {
    pub fn render(&self) -> String {
        let mut s = format!("{}\n| time limit | win | standoff | lose |\n|---|---|---|---|\n", self.title);
        for r in &self.rows {
            let _ = writeln!(
                s,
                "| {} min | {:.0}% | {:.0}% | {:.0}% |",
                r.minutes,
                r.pct(r.win),
                r.pct(r.standoff),
                r.pct(r.lose)
            );
        }
        s
    }
}

/// Plays `episodes` seeded episodes per time limit and tallies outcomes
/// from the red side.
pub fn evaluate(
    cfg: &RunConfig,
    scenario: &ScenarioConfig,
    red: &GreedyRed,
    episodes: usize,
    minutes: &[f64],
    mut sink: impl FnMut(f64, usize, &EpisodeRecord) -> Result<()>,
) -> Result<Vec<TableRow>> {
    if episodes == 0 {
        return Err(domain("need at least one episode"));
    }
    if minutes.is_empty() || minutes.iter().any(|m| !(*m > 0.0 && m.is_finite())) {
        return Err(domain("time limits must be positive minutes"));
    }
    let ctx = cfg.sim_context()?;
    let hash = cfg.hash();
    let mut rows = Vec::with_capacity(minutes.len());
    for &m in minutes {
        let sc = ScenarioConfig {
            time_limit_s: 60.0 * m,
            ..scenario.clone()
        };
        sc.validate(&ctx.engagement)?;
        let mut row = TableRow {
            minutes: m,
            win: 0,
            standoff: 0,
            lose: 0,
        };
        for i in 0..episodes {
            let mut team = red.clone();
            let rec = run_episode(&ctx, &sc, episode_seed(cfg.seed, i), &hash, &mut team, false)?;
            match rec.outcome {
                Outcome::Win => row.win += 1,
                Outcome::Standoff => row.standoff += 1,
                Outcome::Lose => row.lose += 1,
            }
            sink(m, i, &rec)?;
        }
        rows.push(row);
    }
    Ok(rows)
}

pub fn cmd_evaluate(a: &EvaluateArgs) -> Result<WinTable> {
    let cfg = resolve(&a.cfg, &[])?;
    let scenario = match_scenario(&cfg.scenario, &a.game);
    scenario.validate(&cfg.engagement)?;
    let red = red_team(&a.game, &cfg)?;
    if a.episodes == 0 {
        return Err(domain("need at least one episode"));
    }
    std::fs::create_dir_all(&cfg.out)?;
    let mut records = csv::Writer::from_path(cfg.out.join("episodes.csv"))?;
    records.write_record(["minutes", "episode", "seed", "outcome", "steps", "duration_s", "interceptions"])?;
    let mut jsonl = String::new();
    let ctx = cfg.sim_context()?;
    let hash = cfg.hash();
    let rows = evaluate(&cfg, &scenario, &red, a.episodes, &a.time_limits, |m, i, rec| {
        records.write_record([
            m.to_string(),
            i.to_string(),
            rec.seed.to_string(),
            rec.outcome.as_str().to_string(),
            rec.steps.to_string(),
            rec.duration_s.to_string(),
            rec.interceptions.len().to_string(),
        ])?;
        jsonl.push_str(&serde_json::to_string(&serde_json::from_str::<serde_json::Value>(
            &rec.summary_json()?,
        )?)?);
        jsonl.push('\n');
        if a.trajectories {
            let sc = ScenarioConfig {
                time_limit_s: 60.0 * m,
                ..scenario.clone()
            };
            let full = run_episode(&ctx, &sc, rec.seed, &hash, &mut red.clone(), true)?;
            write_tracks(&full, &cfg.out.join(format!("tracks/{m}min/episode{i:03}")), "csv")?;
        }
        Ok(())
    })?;
    records.flush()?;
    std::fs::write(cfg.out.join("episodes.jsonl"), jsonl)?;
    let title = format!(
        "{} vs {}, {} episodes",
        label(a.game.scenario),
        serde_json::to_value(scenario.blue_policy)?.as_str().unwrap_or("blue"),
        a.episodes
    );
    let table = WinTable { title, rows };
    std::fs::write(cfg.out.join("table.md"), table.render())?;
    Ok(table)
}

fn label(k: ScenarioKind) -> &'static str {
    match k {
        ScenarioKind::OneOnOne => "1v1",
        ScenarioKind::TwoOnOne => "2v1",
        ScenarioKind::TwoOnTwo => "2v2",
        ScenarioKind::ThreeOnTwo => "3v2",
    }
}

/// Writes `<stem>.trajectory.csv`, `.events.csv`, `.reward_trace.csv` and
/// `.json` next to each other.
pub fn write_tracks(rec: &EpisodeRecord, stem: &Path, format: &str) -> Result<Vec<PathBuf>> {
    if format != "csv" {
        return Err(domain(format!("unknown export format `{format}`; only csv is supported")));
    }
    if let Some(dir) = stem.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let with = |ext: &str| {
        let mut s = stem.as_os_str().to_owned();
        s.push(ext);
        PathBuf::from(s)
    };
    let files = vec![
        with(".trajectory.csv"),
        with(".events.csv"),
        with(".reward_trace.csv"),
        with(".json"),
    ];
    rec.write_trajectory(&files[0])?;
    rec.write_events(&files[1])?;
    rec.write_reward_trace(&files[2])?;
    rec.write_summary(&files[3])?;
    Ok(files)
}

pub fn cmd_export(a: &ExportArgs) -> Result<Vec<PathBuf>> {
    if a.format != "csv" {
        return Err(domain(format!("unknown export format `{}`; only csv is supported", a.format)));
    }
    let cfg = resolve(&a.cfg, &[])?;
    let scenario = ScenarioConfig {
        time_limit_s: 60.0 * a.time_limit,
        ..match_scenario(&cfg.scenario, &a.game)
    };
    scenario.validate(&cfg.engagement)?;
    let mut red = red_team(&a.game, &cfg)?;
    let ctx = cfg.sim_context()?;
    let rec = run_episode(&ctx, &scenario, episode_seed(cfg.seed, a.episode), &cfg.hash(), &mut red, true)?;
    write_tracks(&rec, &cfg.out.join(format!("episode{:03}", a.episode)), &a.format)
}
