//! C ABI over the pursuit-evasion core.
//!
//! Every function returns a [`PursuitStatus`]; on failure the message is
//! kept per thread and read back with [`pursuit_last_error`]. Handles are
//! opaque, created by `*_new`/`*_load` and released by the matching
//! `*_free`. No call panics across the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use pursuit_core::arena::{EngagementWorld, Outcome, SimContext};
use pursuit_core::config::RunConfig;
use pursuit_core::dynamics::{apply_action, UavState, ACTION_COUNT};
use pursuit_core::engagement::{is_intercepted, relative_situation, OBS_DIM};
use pursuit_core::opponents::{maximin_action, PayoffMatrix};
use pursuit_core::qnet::QNetwork;
use pursuit_core::Error;

pub const PURSUIT_OBS_DIM: usize = 13;
pub const PURSUIT_ACTION_COUNT: usize = 15;
const _: () = assert!(PURSUIT_OBS_DIM == OBS_DIM && PURSUIT_ACTION_COUNT == ACTION_COUNT);

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PursuitStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ShapeMismatch = 3,
    DegenerateGeometry = 4,
    Config = 5,
    Checkpoint = 6,
    Io = 7,
    Internal = 8,
}

/// Episode state reported by [`pursuit_world_step`].
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PursuitOutcome {
    Running = 0,
    Win = 1,
    Standoff = 2,
    Lose = 3,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PursuitUavState {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub v: f64,
    pub gamma: f64,
    pub psi: f64,
}

impl From<PursuitUavState> for UavState {
    fn from(s: PursuitUavState) -> Self {
        UavState {
            x: s.x,
            y: s.y,
            z: s.z,
            v: s.v,
            gamma: s.gamma,
            psi: s.psi,
        }
    }
}

impl From<UavState> for PursuitUavState {
    fn from(s: UavState) -> Self {
        Self {
            x: s.x,
            y: s.y,
            z: s.z,
            v: s.v,
            gamma: s.gamma,
            psi: s.psi,
        }
    }
}

/// Opaque Q-network.
pub struct PursuitQNetwork {
    net: QNetwork,
}

/// Opaque engagement with its simulation context.
pub struct PursuitWorld {
    world: EngagementWorld,
}

/// Opaque simulation context: physics, maneuver catalog, thresholds and
/// rewards.
pub struct PursuitContext {
    ctx: SimContext,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> PursuitStatus {
    match e {
        Error::Shape { .. } => PursuitStatus::ShapeMismatch,
        Error::DegenerateGeometry(_) => PursuitStatus::DegenerateGeometry,
        Error::Config { .. } => PursuitStatus::Config,
        Error::Checkpoint(_) => PursuitStatus::Checkpoint,
        Error::Io(_) => PursuitStatus::Io,
        Error::Domain(_) | Error::Underfilled { .. } | Error::Flags(_) => PursuitStatus::InvalidArgument,
        _ => PursuitStatus::Internal,
    }
}

enum Fail {
    Null(&'static str),
    Arg(String),
    Core(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Core(e)
    }
}

/// Runs `f`, converting errors and panics into a status.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> PursuitStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            PursuitStatus::Ok
        }
        Ok(Err(Fail::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            PursuitStatus::NullPointer
        }
        Ok(Err(Fail::Arg(m))) => {
            set_error(m);
            PursuitStatus::InvalidArgument
        }
        Ok(Err(Fail::Core(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic".into());
            PursuitStatus::Internal
        }
    }
}

unsafe fn non_null<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Null(what))
}

unsafe fn non_null_mut<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or(Fail::Null(what))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &'static str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, what: &'static str) -> Result<&'a mut [T], Fail> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn c_str<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Fail> {
    let s = CStr::from_ptr(non_null(p, what)? as *const c_char);
    s.to_str().map_err(|_| Fail::Arg(format!("{what} is not valid UTF-8")))
}

unsafe fn config_from(toml_text: *const c_char) -> Result<RunConfig, Fail> {
    if toml_text.is_null() {
        return Ok(RunConfig::default());
    }
    Ok(RunConfig::from_toml_str(c_str(toml_text, "config")?, &[])?)
}

/// Copies the calling thread's last error message, NUL-terminated and
/// truncated to `cap` bytes. Returns the full message length without the
/// terminator.
///
/// # Safety
/// `buf` must be null or point to `cap` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn pursuit_last_error(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && cap > 0 {
            let n = msg.len().min(cap - 1);
            ptr::copy_nonoverlapping(msg.as_ptr() as *const c_char, buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Builds a context from TOML configuration text; null selects defaults.
///
/// # Safety
/// `config_toml` must be null or a NUL-terminated string; `out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn pursuit_context_new(config_toml: *const c_char, out: *mut *mut PursuitContext) -> PursuitStatus {
    guard(|| {
        let out = non_null_mut(out, "out")?;
        let cfg = config_from(config_toml)?;
        *out = Box::into_raw(Box::new(PursuitContext {
            ctx: cfg.sim_context()?,
        }));
        Ok(())
    })
}

/// # Safety
/// `ctx` must be null or come from [`pursuit_context_new`], freed once.
#[no_mangle]
pub unsafe extern "C" fn pursuit_context_free(ctx: *mut PursuitContext) {
    if !ctx.is_null() {
        drop(Box::from_raw(ctx));
    }
}

/// Advances `state` by one decision interval under catalog action `action`.
///
/// # Safety
/// Pointers must be valid; `out` may alias nothing else.
#[no_mangle]
pub unsafe extern "C" fn pursuit_apply_action(
    ctx: *const PursuitContext,
    state: *const PursuitUavState,
    action: u32,
    out: *mut PursuitUavState,
) -> PursuitStatus {
    guard(|| {
        let c = &non_null(ctx, "ctx")?.ctx;
        let s: UavState = (*non_null(state, "state")?).into();
        let next = apply_action(&s, action as usize, &c.catalog, &c.physics)?;
        *non_null_mut(out, "out")? = next.into();
        Ok(())
    })
}

/// Writes the normalized observation of `own` against `target` into
/// `out[0..len]`; `len` must equal [`PURSUIT_OBS_DIM`].
///
/// # Safety
/// Pointers must be valid and `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn pursuit_observe(
    ctx: *const PursuitContext,
    own: *const PursuitUavState,
    target: *const PursuitUavState,
    out: *mut f64,
    len: usize,
) -> PursuitStatus {
    guard(|| {
        let c = &non_null(ctx, "ctx")?.ctx;
        if len != OBS_DIM {
            return Err(Error::Shape { expected: OBS_DIM, got: len }.into());
        }
        let obs = c
            .scale
            .observe(&(*non_null(own, "own")?).into(), &(*non_null(target, "target")?).into())?;
        slice_mut(out, len, "out")?.copy_from_slice(&obs);
        Ok(())
    })
}

/// Whether `own` holds the interception geometry on `target`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn pursuit_is_intercepted(
    ctx: *const PursuitContext,
    own: *const PursuitUavState,
    target: *const PursuitUavState,
    out: *mut bool,
) -> PursuitStatus {
    guard(|| {
        let c = &non_null(ctx, "ctx")?.ctx;
        let rel = relative_situation(&(*non_null(own, "own")?).into(), &(*non_null(target, "target")?).into())?;
        *non_null_mut(out, "out")? = is_intercepted(&rel, &c.engagement);
        Ok(())
    })
}

/// Maximin row over `count` payoff matrices of `rows x cols`, stored
/// back to back in row-major order.
///
/// # Safety
/// `data` must hold `count * rows * cols` doubles.
#[no_mangle]
pub unsafe extern "C" fn pursuit_maximin_action(
    data: *const f64,
    count: usize,
    rows: usize,
    cols: usize,
    out: *mut u32,
) -> PursuitStatus {
    guard(|| {
        let n = count
            .checked_mul(rows)
            .and_then(|x| x.checked_mul(cols))
            .ok_or_else(|| Fail::Arg("matrix dimensions overflow".into()))?;
        let all = slice(data, n, "data")?;
        let mats = (0..count)
            .map(|k| PayoffMatrix::new(rows, cols, all[k * rows * cols..(k + 1) * rows * cols].to_vec()))
            .collect::<Result<Vec<_>, _>>()?;
        *non_null_mut(out, "out")? = maximin_action(&mats)? as u32;
        Ok(())
    })
}

/// Loads a checkpoint file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pursuit_qnet_load(path: *const c_char, out: *mut *mut PursuitQNetwork) -> PursuitStatus {
    guard(|| {
        let out = non_null_mut(out, "out")?;
        let p = c_str(path, "path")?;
        let net = QNetwork::load(Path::new(p)).map_err(|e| Error::Checkpoint(format!("{p}: {e}")))?;
        *out = Box::into_raw(Box::new(PursuitQNetwork { net }));
        Ok(())
    })
}

/// Deserializes a checkpoint held in memory.
///
/// # Safety
/// `bytes` must hold `len` bytes and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pursuit_qnet_from_bytes(
    bytes: *const u8,
    len: usize,
    out: *mut *mut PursuitQNetwork,
) -> PursuitStatus {
    guard(|| {
        let out = non_null_mut(out, "out")?;
        let net = QNetwork::from_bytes(slice(bytes, len, "bytes")?).map_err(|e| Error::Checkpoint(e.to_string()))?;
        *out = Box::into_raw(Box::new(PursuitQNetwork { net }));
        Ok(())
    })
}

/// # Safety
/// `net` must be null or come from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn pursuit_qnet_free(net: *mut PursuitQNetwork) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}

/// Input and output widths.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn pursuit_qnet_dims(
    net: *const PursuitQNetwork,
    input: *mut usize,
    output: *mut usize,
) -> PursuitStatus {
    guard(|| {
        let n = &non_null(net, "net")?.net;
        *non_null_mut(input, "input")? = n.input_dim();
        *non_null_mut(output, "output")? = n.output_dim();
        Ok(())
    })
}

/// Q-values for one input.
///
/// # Safety
/// `obs` must hold `obs_len` doubles and `out` `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn pursuit_qnet_forward(
    net: *const PursuitQNetwork,
    obs: *const f64,
    obs_len: usize,
    out: *mut f64,
    out_len: usize,
) -> PursuitStatus {
    guard(|| {
        let n = &non_null(net, "net")?.net;
        let q = n.forward(slice(obs, obs_len, "obs")?)?;
        if out_len != q.len() {
            return Err(Error::Shape {
                expected: q.len(),
                got: out_len,
            }
            .into());
        }
        slice_mut(out, out_len, "out")?.copy_from_slice(&q);
        Ok(())
    })
}

/// Greedy action, lowest index on ties.
///
/// # Safety
/// `obs` must hold `obs_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn pursuit_qnet_greedy(
    net: *const PursuitQNetwork,
    obs: *const f64,
    obs_len: usize,
    out: *mut u32,
) -> PursuitStatus {
    guard(|| {
        let n = &non_null(net, "net")?.net;
        *non_null_mut(out, "out")? = n.greedy(slice(obs, obs_len, "obs")?)? as u32;
        Ok(())
    })
}

/// Starts an engagement from TOML configuration text (null selects
/// defaults) and a seed.
///
/// # Safety
/// `config_toml` must be null or NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pursuit_world_new(
    config_toml: *const c_char,
    seed: u64,
    out: *mut *mut PursuitWorld,
) -> PursuitStatus {
    guard(|| {
        let out = non_null_mut(out, "out")?;
        let cfg = config_from(config_toml)?;
        let world = EngagementWorld::new(&cfg.sim_context()?, &cfg.scenario, seed)?;
        *out = Box::into_raw(Box::new(PursuitWorld { world }));
        Ok(())
    })
}

/// # Safety
/// `world` must be null or come from [`pursuit_world_new`], freed once.
#[no_mangle]
pub unsafe extern "C" fn pursuit_world_free(world: *mut PursuitWorld) {
    if !world.is_null() {
        drop(Box::from_raw(world));
    }
}

/// Number of live red UAVs, the count expected by
/// [`pursuit_world_step`] and produced by [`pursuit_world_observations`].
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn pursuit_world_live_reds(world: *const PursuitWorld, out: *mut usize) -> PursuitStatus {
    guard(|| {
        *non_null_mut(out, "out")? = non_null(world, "world")?.world.live_reds().len();
        Ok(())
    })
}

/// Observations of the live reds, each [`PURSUIT_OBS_DIM`] wide, in red
/// index order.
///
/// # Safety
/// `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn pursuit_world_observations(
    world: *const PursuitWorld,
    out: *mut f64,
    len: usize,
) -> PursuitStatus {
    guard(|| {
        let views = non_null(world, "world")?.world.observations();
        let need = views.len() * OBS_DIM;
        if len != need {
            return Err(Error::Shape { expected: need, got: len }.into());
        }
        let dst = slice_mut(out, len, "out")?;
        for (chunk, v) in dst.chunks_mut(OBS_DIM).zip(&views) {
            chunk.copy_from_slice(&v.obs);
        }
        Ok(())
    })
}

/// Steps the engagement with one action per live red and reports the
/// episode state.
///
/// # Safety
/// `actions` must hold `len` values and `outcome` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pursuit_world_step(
    world: *mut PursuitWorld,
    actions: *const u32,
    len: usize,
    outcome: *mut PursuitOutcome,
) -> PursuitStatus {
    guard(|| {
        let w = &mut non_null_mut(world, "world")?.world;
        let out = non_null_mut(outcome, "outcome")?;
        if w.is_over() {
            return Err(Fail::Arg("episode already finished".into()));
        }
        let acts: Vec<usize> = slice(actions, len, "actions")?.iter().map(|a| *a as usize).collect();
        let report = w.step(&acts)?;
        *out = match report.outcome {
            None => PursuitOutcome::Running,
            Some(Outcome::Win) => PursuitOutcome::Win,
            Some(Outcome::Standoff) => PursuitOutcome::Standoff,
            Some(Outcome::Lose) => PursuitOutcome::Lose,
        };
        Ok(())
    })
}

/// Copies the state of red UAV `index`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn pursuit_world_red_state(
    world: *const PursuitWorld,
    index: usize,
    out: *mut PursuitUavState,
) -> PursuitStatus {
    guard(|| {
        let reds = non_null(world, "world")?.world.reds();
        let r = reds
            .get(index)
            .ok_or_else(|| Fail::Arg(format!("red index {index} out of range {}", reds.len())))?;
        *non_null_mut(out, "out")? = r.state.into();
        Ok(())
    })
}
