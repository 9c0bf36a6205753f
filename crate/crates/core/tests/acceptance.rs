//! Acceptance gate. Criteria run one after another so that wall-clock
//! limits are measured without competing tests; each prints one PASS/FAIL
//! line and the process fails if any criterion does.
//!
//! An optional argument filters criteria by substring of their label.

use std::f64::consts::PI;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use pursuit_core::arena::*;
use pursuit_core::cli::{evaluate, match_scenario, MatchArgs, RoleArg, ScenarioKind, TableRow};
use pursuit_core::config::RunConfig;
use pursuit_core::dynamics::*;
use pursuit_core::engagement::*;
use pursuit_core::opponents::*;
use pursuit_core::qnet::*;
use pursuit_core::replay::*;
use pursuit_core::rewards::*;
use pursuit_core::seeding::derive_seed;
use pursuit_core::trainer::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const DESK: &str = include_str!("../../../configs/desk.toml");

/// Overrides for the bait desk run: blue spawns within reach of the
/// 1500 m stand-off ring and episodes are cut at one minute.
const DESK_BAIT: &[&str] = &[
    "scenario.init_box=[8000.0, 8000.0, 6000.0]",
    "scenario.vacuum_zone=[2000.0, 2000.0, 6000.0]",
    "trainer.episode_time_limit_s=60.0",
];

const DESK_STEPS: u64 = 50_000;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

// ---------------------------------------------------------------- desk runs

struct DeskRun {
    cfg: RunConfig,
    report: TrainReport,
    elapsed: Duration,
}

#[derive(Default)]
struct Desk {
    pursuit: Option<DeskRun>,
    bait: Option<DeskRun>,
}

fn desk_config(extra: &[&str]) -> RunConfig {
    let o: Vec<String> = extra.iter().map(|s| s.to_string()).collect();
    RunConfig::from_toml_str(DESK, &o).expect("desk profile")
}

fn desk_train(plan: &str, extra: &[&str]) -> DeskRun {
    let cfg = desk_config(extra);
    let ctx = cfg.sim_context().unwrap();
    let plan = plan_by_name(plan, &cfg.scenario, Some(DESK_STEPS)).unwrap();
    let t0 = Instant::now();
    let report = train(
        &ctx,
        &cfg.network,
        &cfg.trainer,
        &cfg.replay,
        &plan,
        Policies::default(),
        cfg.seed,
        None,
    )
    .expect("desk training");
    DeskRun {
        cfg,
        report,
        elapsed: t0.elapsed(),
    }
}

impl Desk {
    fn pursuit(&mut self) -> &DeskRun {
        self.pursuit.get_or_insert_with(|| desk_train("pursuit-straight", &[]))
    }

    fn bait(&mut self) -> &DeskRun {
        self.bait.get_or_insert_with(|| desk_train("bait-circling", DESK_BAIT))
    }
}

fn episode_rewards(r: &TrainReport) -> Vec<f64> {
    r.rows.iter().map(|row| row.episode_reward).collect()
}

fn min_max(v: &[f64]) -> (f64, f64) {
    v.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(*x), hi.max(*x)))
}

// ------------------------------------------------------------ criteria

fn trim_invariance(_: &mut Desk) -> Verdict {
    const TOL: f64 = 1e-9;
    let cfg = PhysicsConfig::default();
    let t0 = Instant::now();
    let mut worst: f64 = 0.0;
    for (v, psi, gamma) in [(50.0, 0.0, 0.0), (200.0, 2.0, 0.0), (400.0, -3.0, 0.0), (250.0, 1.0, 0.3), (150.0, -0.5, -0.6)] {
        let s0 = UavState {
            gamma,
            ..UavState::level(0.0, 0.0, 7000.0, v, psi)
        };
        let c = ControlInput::trim(&s0);
        let mut s = s0;
        for _ in 0..1000 {
            s = step(&s, &c, &cfg).unwrap();
            worst = worst
                .max((s.v - s0.v).abs())
                .max((s.gamma - s0.gamma).abs())
                .max(wrap_angle(s.psi - s0.psi).abs());
        }
    }
    let dt = t0.elapsed();
    verdict(
        worst < TOL && secs(dt) < 1.0,
        format!("max |dv|,|dgamma|,|dpsi| = {worst:.1e} (tol {TOL:.0e}); {:.3} s (limit 1 s)", secs(dt)),
    )
}

fn turn_fidelity(_: &mut Desk) -> Verdict {
    const TOL: f64 = 0.01;
    let cat = ManeuverCatalog::default();
    let t0 = Instant::now();
    let heading_change = |cfg: &PhysicsConfig, s0: UavState, seconds: f64| {
        let n = (seconds / cfg.dt).round() as usize;
        let mut s = s0;
        let mut total = 0.0;
        for _ in 0..n {
            let next = apply_action(&s, ManeuverCatalog::HOLD_LEFT, &cat, cfg).unwrap();
            total += wrap_angle(next.psi - s.psi);
            s = next;
        }
        total
    };
    let fine = PhysicsConfig {
        dt: 1e-4,
        substeps: 1,
        ..PhysicsConfig::default()
    };
    let desk = desk_config(&[]).physics;
    let mut worst: f64 = 0.0;
    for v in [120.0, 200.0, 330.0] {
        let s0 = UavState::level(0.0, 0.0, 7000.0, v, 0.2);
        let reference = heading_change(&fine, s0, 10.0);
        for cfg in [PhysicsConfig::default(), desk.clone()] {
            let coarse = heading_change(&cfg, s0, 10.0);
            worst = worst.max(((coarse - reference) / reference).abs());
        }
    }
    let dt = t0.elapsed();
    verdict(
        worst < TOL && secs(dt) < 10.0,
        format!(
            "10 s left turn at dt 0.1 and 0.5 vs dt 1e-4: max relative error {worst:.2e} (tol {TOL}); {:.2} s (limit 10 s)",
            secs(dt)
        ),
    )
}

/// Interception recomputed from raw vectors with arccosines.
fn oracle_intercept(own: &UavState, tgt: &UavState, cfg: &EngagementConfig) -> bool {
    let vel = |s: &UavState| [s.v * s.gamma.cos() * s.psi.sin(), s.v * s.gamma.cos() * s.psi.cos(), s.v * s.gamma.sin()];
    let p = [tgt.x - own.x, tgt.y - own.y, tgt.z - own.z];
    let angle = |a: [f64; 3], b: [f64; 3]| {
        let dot = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
        let na = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
        let nb = (b[0] * b[0] + b[1] * b[1] + b[2] * b[2]).sqrt();
        (dot / (na * nb)).clamp(-1.0, 1.0).acos()
    };
    let d = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
    angle(vel(own), p) < cfg.intercept_atu_max && angle(vel(tgt), p) < cfg.intercept_att_max && d < cfg.intercept_d_max
}

fn interception_oracle(_: &mut Desk) -> Verdict {
    let cfg = EngagementConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let t0 = Instant::now();
    let (mut mismatches, mut positives) = (0usize, 0usize);
    for i in 0..100_000 {
        let own = UavState {
            x: rng.gen_range(-1000.0..1000.0),
            y: rng.gen_range(-1000.0..1000.0),
            z: rng.gen_range(3000.0..11000.0),
            v: rng.gen_range(50.0..400.0),
            gamma: rng.gen_range(-1.2..1.2),
            psi: rng.gen_range(-PI..PI),
        };
        let tgt = if i % 2 == 0 {
            // ahead of own along its velocity, perturbed around the cone edge
            let [vx, vy, vz] = own.velocity();
            let k = rng.gen_range(100.0..1000.0) / own.v;
            UavState {
                x: own.x + vx * k + rng.gen_range(-60.0..60.0),
                y: own.y + vy * k + rng.gen_range(-60.0..60.0),
                z: own.z + vz * k + rng.gen_range(-60.0..60.0),
                psi: own.psi + rng.gen_range(-2.0..2.0),
                gamma: own.gamma * rng.gen_range(-1.0..1.0),
                ..own
            }
        } else {
            UavState {
                x: rng.gen_range(-1500.0..1500.0),
                y: rng.gen_range(-1500.0..1500.0),
                z: rng.gen_range(3000.0..11000.0),
                v: rng.gen_range(50.0..400.0),
                gamma: rng.gen_range(-1.2..1.2),
                psi: rng.gen_range(-PI..PI),
            }
        };
        let got = is_intercepted(&relative_situation(&own, &tgt).unwrap(), &cfg);
        positives += got as usize;
        mismatches += (got != oracle_intercept(&own, &tgt, &cfg)) as usize;
    }
    // exact threshold values must fail, the next float inside must pass
    let rel = |au: f64, at: f64, d: f64| RelativeSituation {
        alpha_u: au,
        alpha_t: at,
        d,
        gamma_p: 0.0,
        psi_p: 0.0,
    };
    let below = |x: f64| f64::from_bits(x.to_bits() - 1);
    let (au, at, dm) = (5f64.to_radians(), 90f64.to_radians(), 800.0);
    let boundary = [
        (rel(au, 0.1, 100.0), false),
        (rel(below(au), 0.1, 100.0), true),
        (rel(0.0, at, 100.0), false),
        (rel(0.0, below(at), 100.0), true),
        (rel(0.0, 0.1, dm), false),
        (rel(0.0, 0.1, below(dm)), true),
    ];
    let mut boundary_ok = boundary.iter().all(|(r, want)| is_intercepted(r, &cfg) == *want);
    // the same edges reached through positions: tail chase at exactly 800 m
    let own = UavState::level(0.0, 0.0, 7000.0, 200.0, 0.0);
    for (y, want) in [(800.0, false), (below(800.0), true)] {
        let tgt = UavState::level(0.0, y, 7000.0, 200.0, 0.0);
        let got = is_intercepted(&relative_situation(&own, &tgt).unwrap(), &cfg);
        boundary_ok &= got == want && oracle_intercept(&own, &tgt, &cfg) == want;
    }
    let dt = t0.elapsed();
    verdict(
        mismatches == 0 && boundary_ok && secs(dt) < 5.0,
        format!(
            "1e5 geometries ({positives} intercepts): {mismatches} disagreements; strict edges at 5 deg, 90 deg, 800 m {}; {:.2} s (limit 5 s)",
            if boundary_ok { "hold" } else { "BROKEN" },
            secs(dt)
        ),
    )
}

fn reward_fidelity(_: &mut Desk) -> Verdict {
    const TOL: f64 = 1e-12;
    let cfg = RewardConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let (au, at, d, v) = (rng.gen_range(0.0..PI), rng.gen_range(0.0..PI), rng.gen_range(1.0..20000.0), rng.gen_range(50.0..400.0));
        let rel = RelativeSituation {
            alpha_u: au,
            alpha_t: at,
            d,
            gamma_p: 0.0,
            psi_p: 0.0,
        };
        let own = UavState::level(0.0, 0.0, 7000.0, v, 0.0);
        let angle = 1.0 - (au + at) / (2.0 * PI);
        let dist_p = (-(d - 800.0).abs() / 500.0).exp();
        let vel = v * au.cos() / 400.0;
        let bait_angle = 2.0 * (-(at - PI).abs() / (PI / 3.0)).exp() - 1.0;
        let dist_b = (-(d - 1500.0).abs() / 500.0).exp();
        let pursuit = 0.4 * angle + 0.3 * dist_p + 0.3 * vel;
        let bait = 0.5 * bait_angle + 0.5 * dist_b;
        let none = OutcomeFlags::default();
        let errs = [
            pursuit_angle_reward(&rel) - angle,
            distance_reward(d, cfg.d_opt_pursuit, cfg.d0) - dist_p,
            velocity_reward(&own, &rel, cfg.v_max).unwrap() - vel,
            bait_angle_reward(&rel, &cfg) - bait_angle,
            distance_reward(d, cfg.d_opt_bait, cfg.d0) - dist_b,
            pursuit_step_reward(&rel, &own, none, &cfg).unwrap() - pursuit,
            bait_step_reward(&rel, none, &cfg).unwrap() - bait,
        ];
        worst = errs.iter().fold(worst, |w, e| w.max(e.abs()));
    }
    // peaks on fine grids that contain the optimum exactly
    let argmax = |f: &dyn Fn(f64) -> f64, grid: &[f64]| {
        grid.iter().cloned().fold((f64::NAN, f64::NEG_INFINITY), |(bx, by), x| {
            let y = f(x);
            if y > by {
                (x, y)
            } else {
                (bx, by)
            }
        })
    };
    let d_grid: Vec<f64> = (0..=10_000).map(|i| i as f64 * 0.5).collect();
    let a_grid: Vec<f64> = (0..=3600).map(|i| PI * i as f64 / 3600.0).collect();
    let (dp, yp) = argmax(&|d| distance_reward(d, cfg.d_opt_pursuit, cfg.d0), &d_grid);
    let (db, yb) = argmax(&|d| distance_reward(d, cfg.d_opt_bait, cfg.d0), &d_grid);
    let at_rel = |at: f64| RelativeSituation {
        alpha_u: 0.0,
        alpha_t: at,
        d: 1000.0,
        gamma_p: 0.0,
        psi_p: 0.0,
    };
    let (ab, ya) = argmax(&|a| bait_angle_reward(&at_rel(a), &cfg), &a_grid);
    let (ap, _) = argmax(&|a| pursuit_angle_reward(&at_rel(a)), &a_grid);
    let peaks = dp == 800.0 && db == 1500.0 && yp == 1.0 && yb == 1.0 && ab == PI && ya == 1.0 && ap == 0.0;
    verdict(
        worst <= TOL && peaks,
        format!(
            "1e4 situations: max |formula - oracle| = {worst:.1e} (tol {TOL:.0e}); distance peaks at {dp} m and {db} m, bait angle peak at {:.4} rad",
            ab
        ),
    )
}

fn gradient_check(_: &mut Desk) -> Verdict {
    const EPS: f64 = 1e-5;
    const TOL: f64 = 1e-4;
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for sizes in [vec![13, 6, 15], vec![5, 10, 5, 3], vec![4, 7, 7, 7, 2]] {
        let net = QNetwork::new(&sizes, &mut rng).unwrap();
        assert!(net.param_count() <= 200);
        let n = 8;
        let states: Vec<Vec<f64>> = (0..n).map(|_| (0..sizes[0]).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let inputs: Vec<&[f64]> = states.iter().map(|s| &s[..]).collect();
        let actions: Vec<usize> = (0..n).map(|_| rng.gen_range(0..*sizes.last().unwrap())).collect();
        let targets: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let weights: Vec<f64> = (0..n).map(|_| rng.gen_range(0.2..1.0)).collect();
        let (_, grad) = net.loss_and_grad(&inputs, &actions, &targets, &weights).unwrap();
        let p0 = net.params();
        let mut probe = net.clone();
        for k in 0..p0.len() {
            let mut p = p0.clone();
            p[k] = p0[k] + EPS;
            probe.set_params(&p).unwrap();
            let up = probe.loss_and_grad(&inputs, &actions, &targets, &weights).unwrap().0;
            p[k] = p0[k] - EPS;
            probe.set_params(&p).unwrap();
            let down = probe.loss_and_grad(&inputs, &actions, &targets, &weights).unwrap().0;
            let fd = (up - down) / (2.0 * EPS);
            let scale = fd.abs().max(grad[k].abs());
            // parameters with no influence on this batch have exactly zero gradient
            let rel = if scale < 1e-10 { 0.0 } else { (fd - grad[k]).abs() / scale };
            worst = worst.max(rel);
            checked += 1;
        }
    }
    let dt = t0.elapsed();
    verdict(
        worst < TOL && secs(dt) < 30.0,
        format!("{checked} parameters: max relative error {worst:.2e} (tol {TOL:.0e}); {:.2} s (limit 30 s)", secs(dt)),
    )
}

fn per_statistics(_: &mut Desk) -> Verdict {
    const FREQ_TOL: f64 = 0.01;
    const SUM_TOL: f64 = 1e-9;
    let tr = |i: usize| Transition {
        state: vec![i as f64],
        action: 0,
        reward: 0.0,
        next: vec![0.0],
        done: true,
    };
    let cfg = PerConfig {
        capacity: 4,
        alpha: 1.0,
        ..PerConfig::default()
    };
    let mut buf = PrioritizedReplay::new(cfg.clone());
    for p in 1..=4 {
        buf.insert(tr(p - 1), p as f64 - cfg.eps).unwrap();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut counts = [0usize; 4];
    let batch = 4;
    for _ in 0..100_000 / batch {
        for t in buf.sample(batch, 1.0, &mut rng).unwrap().transitions {
            counts[t.state[0] as usize] += 1;
        }
    }
    let freq: Vec<f64> = counts.iter().map(|c| *c as f64 / 100_000.0).collect();
    let freq_err = freq
        .iter()
        .zip([0.1, 0.2, 0.3, 0.4])
        .map(|(f, e)| (f - e).abs())
        .fold(0.0, f64::max);

    // random inserts and priority updates against a linear shadow
    let cfg = PerConfig {
        capacity: 500,
        ..PerConfig::default()
    };
    let mut buf = PrioritizedReplay::new(cfg.clone());
    let mut shadow = vec![0.0; cfg.capacity];
    let mut ids: Vec<LeafId> = Vec::new();
    let mut sum_err: f64 = 0.0;
    for op in 0..10_000 {
        if op % 3 != 2 || ids.is_empty() {
            let td = rng.gen_range(0.0..5.0);
            let id = buf.insert(tr(op), td).unwrap();
            shadow[id.slot] = (td + cfg.eps).powf(cfg.alpha);
            ids.retain(|x| x.slot != id.slot);
            ids.push(id);
        } else {
            let k = rng.gen_range(0..ids.len());
            let td = rng.gen_range(0.0..5.0);
            buf.update_priorities(&[ids[k]], &[td]).unwrap();
            shadow[ids[k].slot] = (td + cfg.eps).powf(cfg.alpha);
        }
        let linear: f64 = shadow.iter().sum();
        sum_err = sum_err.max((buf.tree().total() - linear).abs());
    }
    verdict(
        freq_err <= FREQ_TOL && sum_err <= SUM_TOL,
        format!(
            "frequencies {:.4?} vs [0.1, 0.2, 0.3, 0.4], max error {freq_err:.4} (tol {FREQ_TOL}); root vs linear sum {sum_err:.1e} over 1e4 operations (tol {SUM_TOL:.0e})",
            freq
        ),
    )
}

fn maximin_oracle(_: &mut Desk) -> Verdict {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut wrong, mut tied) = (0, 0);
    for case in 0..1000 {
        let k = rng.gen_range(1..4);
        let rows = rng.gen_range(1..16);
        let cols = rng.gen_range(1..16);
        let mut ms: Vec<Vec<Vec<f64>>> = (0..k)
            .map(|_| {
                (0..rows)
                    .map(|_| {
                        (0..cols)
                            .map(|_| if case % 2 == 0 { rng.gen_range(-2i32..3) as f64 } else { rng.gen_range(-1.0..1.0) })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        if case % 5 == 0 && rows > 1 {
            // duplicate a row so two actions tie exactly
            let (a, b) = (rng.gen_range(0..rows), rng.gen_range(0..rows));
            for m in &mut ms {
                m[b] = m[a].clone();
            }
        }
        let scores: Vec<f64> = (0..rows)
            .map(|i| ms.iter().map(|m| m[i].iter().cloned().fold(f64::INFINITY, f64::min)).sum())
            .collect();
        let best = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let expect = scores.iter().position(|s| *s == best).unwrap();
        tied += (scores.iter().filter(|s| **s == best).count() > 1) as usize;
        let mats: Vec<PayoffMatrix> = ms.iter().map(|m| PayoffMatrix::from_rows(m).unwrap()).collect();
        wrong += (maximin_action(&mats).unwrap() != expect) as usize;
    }
    let dt = t0.elapsed();
    verdict(
        wrong == 0 && secs(dt) < 5.0,
        format!("1000 matrix sets ({tied} with tied maxima): {wrong} disagreements; {:.3} s (limit 5 s)", secs(dt)),
    )
}

fn learner_sanity(_: &mut Desk) -> Verdict {
    const RATIO: f64 = 0.1;
    let cfg = desk_config(&[]);
    let ctx = cfg.sim_context().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    // one batch of genuine transitions from random flight
    let sc = ScenarioConfig::one_on_one(Role::Pursuit, BluePolicy::Circling);
    let mut batch = Vec::new();
    let mut w = EngagementWorld::new(&ctx, &sc, 1).unwrap();
    while batch.len() < cfg.trainer.batch_size {
        if w.is_over() {
            w = EngagementWorld::new(&ctx, &sc, batch.len() as u64).unwrap();
        }
        let v = w.observations().remove(0);
        let a = rng.gen_range(0..ACTION_COUNT);
        let s = w.step(&[a]).unwrap().reds.remove(0);
        batch.push(Transition {
            state: v.obs.to_vec(),
            action: a,
            reward: s.reward,
            next: s.next_obs.to_vec(),
            done: s.done,
        });
    }
    let mut net = QNetwork::new(&cfg.network.layer_sizes(), &mut rng).unwrap();
    let target = TargetNetwork::from_policy(&net);
    let mut opt = Adam::new(cfg.network.adam.clone(), &net);
    let weights = vec![1.0; batch.len()];
    let mut losses = Vec::new();
    for _ in 0..200 {
        losses.push(train_step(&mut net, &target, &mut opt, &batch, &weights, cfg.trainer.discount).unwrap().loss);
    }
    let (first, last) = (losses[0], *losses.last().unwrap());
    verdict(
        last < RATIO * first,
        format!("loss {first:.4} -> {last:.6} after 200 steps on one batch of {} (ratio {:.4}, need < {RATIO})", batch.len(), last / first),
    )
}

fn matrix_game_competence(_: &mut Desk) -> Verdict {
    const NEED: f64 = 0.9;
    let cfg = RunConfig::default();
    let ctx = cfg.sim_context().unwrap();
    let sc = ScenarioConfig {
        time_limit_s: 180.0,
        ..ScenarioConfig::one_on_one(Role::Pursuit, BluePolicy::MatrixGame)
    };
    let t0 = Instant::now();
    let mut caught = 0;
    for i in 0..100 {
        let seed = derive_seed(cfg.seed, &format!("eval/episode{i}"));
        let mut red = ScriptedRed::new(ScriptedKind::StraightLine, sc.scripted.clone(), seed);
        let rec = run_episode(&ctx, &sc, seed, "", &mut red, false).unwrap();
        caught += rec.interceptions.iter().any(|e| e.subject.side == Side::Blue) as usize;
    }
    let dt = t0.elapsed();
    let rate = caught as f64 / 100.0;
    verdict(
        rate >= NEED && secs(dt) < 600.0,
        format!(
            "maximin blue (lookahead {} steps) intercepted a straight-line red in {caught}/100 episodes (need >= {:.0}%); {:.1} s (limit 600 s)",
            sc.matrix_game.lookahead_steps,
            NEED * 100.0,
            secs(dt)
        ),
    )
}

fn desk_pursuit(desk: &mut Desk) -> Verdict {
    const NEED: f64 = 0.7;
    let t0 = Instant::now();
    let run = desk.pursuit();
    let net = run.report.policies.pursuit.clone().unwrap();
    let ctx = run.cfg.sim_context().unwrap();
    let sc = ScenarioConfig {
        time_limit_s: 180.0,
        ..ScenarioConfig::one_on_one(Role::Pursuit, BluePolicy::StraightLine)
    };
    let mut wins = 0;
    for i in 0..100 {
        let mut red = GreedyRed::pursuit_only(net.clone());
        let rec = run_episode(&ctx, &sc, derive_seed(run.cfg.seed, &format!("eval/episode{i}")), "", &mut red, false).unwrap();
        wins += rec.interceptions.iter().any(|e| e.subject.side == Side::Red) as usize;
    }
    let ma = moving_average(&episode_rewards(&run.report), 100);
    let (first, last) = decile_means(&ma).unwrap();
    let dt = t0.elapsed();
    let rate = wins as f64 / 100.0;
    verdict(
        rate >= NEED && last > first && secs(dt) < 1800.0,
        format!(
            "13-64-64-15 net, {DESK_STEPS} steps x {} workers: {wins}/100 interceptions at 3 min (need >= {:.0}%); reward MA deciles {first:.2} -> {last:.2}; {:.0} s incl. {:.0} s training (limit 1800 s)",
            run.cfg.trainer.workers,
            NEED * 100.0,
            secs(dt),
            secs(run.elapsed)
        ),
    )
}

fn desk_bait(desk: &mut Desk) -> Verdict {
    const NEED: f64 = 0.5;
    let run = desk.bait();
    let rewards = episode_rewards(&run.report);
    let ma = moving_average(&rewards, 100);
    let (first, last) = decile_means(&ma).unwrap();
    let (lo, hi) = min_max(&ma);
    let (rlo, rhi) = min_max(&rewards);
    let frac = (last - first) / (hi - lo);
    verdict(
        frac >= NEED,
        format!(
            "{} episodes; reward MA deciles {first:.2} -> {last:.2} over MA range [{lo:.2}, {hi:.2}]: gain {frac:.3} of range (need >= {NEED}); single-episode range [{rlo:.1}, {rhi:.1}] gives {:.3}; {:.0} s training",
            rewards.len(),
            (last - first) / (rhi - rlo),
            secs(run.elapsed)
        ),
    )
}

fn cooperative_trend(desk: &mut Desk) -> Verdict {
    const MAX_LOSE: f64 = 0.05;
    let pursuit = desk.pursuit().report.policies.pursuit.clone().unwrap();
    let bait = desk.bait().report.policies.bait.clone().unwrap();
    let cfg = desk_config(&[]);
    let args = MatchArgs {
        pursuit: PathBuf::new(),
        bait: None,
        scenario: ScenarioKind::TwoOnOne,
        blue: None,
        role: RoleArg::Pursuit,
    };
    let sc = match_scenario(&cfg.scenario, &args);
    let team = GreedyRed {
        pursuit: Some(pursuit),
        bait: Some(bait),
    };
    let t0 = Instant::now();
    let rows: Vec<TableRow> = evaluate(&cfg, &sc, &team, 100, &[1.0, 3.0, 5.0], |_, _, _| Ok(())).unwrap();
    let dt = t0.elapsed();
    let worst_lose = rows.iter().map(|r| r.lose).max().unwrap() as f64 / 100.0;
    let monotone = rows.windows(2).all(|w| w[0].win <= w[1].win);
    let cells: Vec<String> = rows
        .iter()
        .map(|r| format!("{} min {}/{}/{}", r.minutes, r.win, r.standoff, r.lose))
        .collect();
    verdict(
        worst_lose <= MAX_LOSE && monotone && secs(dt) < 1800.0,
        format!(
            "2v1 vs maximin blue, win/standoff/lose [{}]; max lose {:.0}% (limit {:.0}%); win {} across limits; {:.0} s (limit 1800 s)",
            cells.join(", "),
            worst_lose * 100.0,
            MAX_LOSE * 100.0,
            if monotone { "non-decreasing" } else { "NOT monotone" },
            secs(dt)
        ),
    )
}

fn cli(args: &[&str]) -> Result<(), String> {
    let o = Command::new(env!("CARGO_BIN_EXE_pursuit")).args(args).output().map_err(|e| e.to_string())?;
    if o.status.success() {
        Ok(())
    } else {
        Err(String::from_utf8_lossy(&o.stderr).into_owned())
    }
}

fn files_under(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.push((rel, std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn determinism(_: &mut Desk) -> Verdict {
    let tmp = tempfile::tempdir().unwrap();
    let desk = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/desk.toml");
    let mut trees = Vec::new();
    for run in ["a", "b"] {
        let dir = tmp.path().join(run);
        let train_out = dir.join("train");
        let d = train_out.to_str().unwrap();
        let r = cli(&[
            "train", "--config", desk, "--plan", "pursuit-straight", "--steps", "3000", "--workers", "1", "--deterministic",
            "--seed", "21", "--out", d,
        ]);
        if let Err(e) = r {
            return verdict(false, format!("train failed: {e}"));
        }
        let ckpt = train_out.join("pursuit.qnet");
        let export = dir.join("export");
        let r = cli(&[
            "export", "--config", desk, "--pursuit", ckpt.to_str().unwrap(), "--scenario", "1v1", "--blue", "circling",
            "--seed", "21", "--out", export.to_str().unwrap(),
        ]);
        if let Err(e) = r {
            return verdict(false, format!("export failed: {e}"));
        }
        // the resolved config records its own output directory, which differs by design
        let files: Vec<_> = files_under(&dir).into_iter().filter(|(n, _)| !n.ends_with("config.toml")).collect();
        trees.push(files);
    }
    let (a, b) = (&trees[0], &trees[1]);
    let names: Vec<&str> = a.iter().map(|(n, _)| n.as_str()).collect();
    let same = a == b;
    let has = |suffix: &str| names.iter().any(|n| n.ends_with(suffix));
    let complete = has("metrics.csv") && has(".qnet") && has(".trajectory.csv");
    let differing: Vec<&str> = a
        .iter()
        .zip(b)
        .filter(|(x, y)| x != y)
        .map(|(x, _)| x.0.as_str())
        .collect();
    verdict(
        same && complete,
        format!(
            "two `--workers 1 --deterministic` runs: {} files compared (metrics, {} checkpoints, trajectory exports), {}",
            a.len(),
            names.iter().filter(|n| n.ends_with(".qnet")).count(),
            if same { "byte-identical".to_string() } else { format!("differ in {differing:?}") }
        ),
    )
}

fn ablation(_: &mut Desk) -> Verdict {
    let tmp = tempfile::tempdir().unwrap();
    let desk = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/desk.toml");
    let header = |dir: &Path| -> Result<(String, String), String> {
        let text = std::fs::read_to_string(dir.join("metrics.csv")).map_err(|e| e.to_string())?;
        let cfg = RunConfig::load(&dir.join("config.toml"), &[]).map_err(|e| e.to_string())?;
        Ok((text.lines().next().unwrap_or("").to_string(), cfg.hash()))
    };
    let base = tmp.path().join("baseline");
    let full = tmp.path().join("full");
    let runs = [
        (
            &base,
            vec!["--set", "trainer.workers=1", "--set", "replay.alpha=0.0", "--set", "trainer.epsilon_ladder=[0.1]"],
        ),
        (&full, vec![]),
    ];
    for (dir, extra) in &runs {
        let mut args = vec!["train", "--config", desk, "--plan", "pursuit-straight", "--steps", "400", "--out", dir.to_str().unwrap()];
        args.extend(extra.iter().copied());
        if let Err(e) = cli(&args) {
            return verdict(false, format!("train failed: {e}"));
        }
    }
    let (Ok((hb, kb)), Ok((hf, kf))) = (header(&base), header(&full)) else {
        return verdict(false, "missing metrics or config");
    };
    let want_b = format!("# algorithm=ddqn-uniform config_hash={kb}");
    let want_f = format!("# algorithm=meaddqn-per config_hash={kf}");
    verdict(
        hb == want_b && hf == want_f && kb != kf,
        format!("baseline header `{hb}`; full-method header `{hf}`; hashes match the written configs: {}", hb == want_b && hf == want_f),
    )
}

type Criterion = (&'static str, fn(&mut Desk) -> Verdict);

const CRITERIA: &[Criterion] = &[
    ("01 dynamics trim invariance", trim_invariance),
    ("02 turn-rate fidelity", turn_fidelity),
    ("03 interception oracle", interception_oracle),
    ("04 reward formula fidelity", reward_fidelity),
    ("05 gradient check", gradient_check),
    ("06 prioritized replay statistics", per_statistics),
    ("07 maximin oracle", maximin_oracle),
    ("08 learner sanity", learner_sanity),
    ("09 matrix-game competence", matrix_game_competence),
    ("10 desk-scale pursuit learning", desk_pursuit),
    ("11 desk-scale bait learning", desk_bait),
    ("12 cooperative trend", cooperative_trend),
    ("13 determinism", determinism),
    ("14 ablation reduction", ablation),
];

fn main() {
    let filter: Option<String> = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let mut desk = Desk::default();
    let mut failed = Vec::new();
    let mut ran = 0;
    let mut stdout = std::io::stdout();
    for (label, check) in CRITERIA {
        if filter.as_deref().is_some_and(|f| !label.contains(f)) {
            continue;
        }
        ran += 1;
        let v = check(&mut desk);
        let tag = if v.pass { "PASS" } else { "FAIL" };
        writeln!(stdout, "[{tag}] criterion {label}: {}", v.detail).unwrap();
        stdout.flush().unwrap();
        if !v.pass {
            failed.push(*label);
        }
    }
    writeln!(stdout, "acceptance: {} of {ran} criteria passed", ran - failed.len()).unwrap();
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
