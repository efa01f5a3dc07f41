//! C interface to the smfe solver.
//!
//! Objects cross the boundary as opaque handles created by `smfe_*_new` or
//! `smfe_*_from_*` functions and released with the matching `smfe_*_free`.
//! Every fallible call returns an [`SmfeStatus`]; on failure the message is
//! kept per thread and can be read with [`smfe_last_error`].
//!
//! Buffers are caller-owned. Functions that fill a buffer take its length
//! and write the required length to `needed`, so a call with a null buffer
//! and zero length is a size query.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use smfe::config::GameConfig;
use smfe::games::{InfectionParams, TechAdoptionParams};
use smfe::solver::{forward_pass, solve, ForwardMode, ForwardOptions, Solution, Trajectory};
use smfe::spec::{validate, GameSpec, Horizon};
use smfe::stage::SolverConfig;
use smfe::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SmfeStatus {
    Ok = 0,
    NullPointer = 1,
    /// Bad argument, unreadable config or unknown name.
    InvalidArgument = 2,
    /// The game failed validation.
    InvalidGame = 3,
    NoEquilibrium = 4,
    NonConvergence = 5,
    Io = 6,
    /// The output buffer is too short; `needed` holds the required length.
    BufferTooSmall = 7,
    /// A panic was caught at the boundary.
    Internal = 8,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(e: &Error) -> SmfeStatus {
    match e {
        Error::Validation(_) | Error::OffSimplex { .. } => SmfeStatus::InvalidGame,
        Error::NoEquilibrium(_) => SmfeStatus::NoEquilibrium,
        Error::NonConvergence { .. } => SmfeStatus::NonConvergence,
        Error::Io(_) => SmfeStatus::Io,
        _ => SmfeStatus::InvalidArgument,
    }
}

fn guard(f: impl FnOnce() -> Result<(), SmfeStatus>) -> SmfeStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SmfeStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("panic inside smfe");
            SmfeStatus::Internal
        }
    }
}

fn fail(e: Error) -> SmfeStatus {
    set_error(e.to_string());
    status_of(&e)
}

fn null(what: &str) -> SmfeStatus {
    set_error(format!("{what} is null"));
    SmfeStatus::NullPointer
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, SmfeStatus> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        set_error(format!("{what} is not UTF-8"));
        SmfeStatus::InvalidArgument
    })
}

unsafe fn fill(values: &[f64], out: *mut f64, len: usize, needed: *mut usize) -> Result<(), SmfeStatus> {
    if !needed.is_null() {
        *needed = values.len();
    }
    if len < values.len() || (out.is_null() && !values.is_empty()) {
        set_error(format!("buffer holds {len} values, {} needed", values.len()));
        return Err(SmfeStatus::BufferTooSmall);
    }
    ptr::copy_nonoverlapping(values.as_ptr(), out, values.len());
    Ok(())
}

/// Copies the last error message of this thread into `buf` (NUL
/// terminated, truncated to `len`). Returns the full message length without
/// the terminator, 0 when there is no error.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn smfe_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else { return 0 };
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// A game specification.
pub struct SmfeGame {
    spec: GameSpec,
}

/// A solved game: equilibrium generator and value tables.
pub struct SmfeSolution {
    spec: GameSpec,
    config: SolverConfig,
    solution: Solution,
}

/// A forward pass over a solution.
pub struct SmfeTrajectory {
    inner: Trajectory,
}

/// Sizes of a game's spaces.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SmfeDims {
    pub follower_states: usize,
    pub leader_states: usize,
    pub follower_actions: usize,
    pub leader_actions: usize,
}

/// Solver settings. Zero `z_resolution` picks the default for the game.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmfeSolveOptions {
    pub z_resolution: usize,
    pub belief_resolution: usize,
    pub value_tol: f64,
    pub fixed_point_tol: f64,
    pub max_iter: usize,
    pub damped_fallback: bool,
}

impl Default for SmfeSolveOptions {
    fn default() -> Self {
        let c = SolverConfig::default();
        Self {
            z_resolution: 0,
            belief_resolution: c.belief_resolution,
            value_tol: c.value_tol,
            fixed_point_tol: c.fixed_point_tol,
            max_iter: c.max_iter,
            damped_fallback: c.damped_fallback,
        }
    }
}

fn horizon_of(t: usize) -> Horizon {
    if t == 0 {
        Horizon::Infinite
    } else {
        Horizon::Finite(t)
    }
}

unsafe fn emit<T>(value: T, out: *mut *mut T) {
    *out = Box::into_raw(Box::new(value));
}

/// Parses a TOML game config.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn smfe_game_from_toml(text: *const c_char, out: *mut *mut SmfeGame) -> SmfeStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let text = str_arg(text, "text")?;
        let spec = GameConfig::from_toml_str(text).and_then(|c| c.build()).map_err(fail)?;
        emit(SmfeGame { spec }, out);
        Ok(())
    })
}

/// Built-in game by name: `infection`, `infection-l021` or `tech`.
/// `horizon` 0 means infinite.
///
/// # Safety
/// `name` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn smfe_game_builtin(name: *const c_char, horizon: usize, out: *mut *mut SmfeGame) -> SmfeStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let h = horizon_of(horizon);
        let spec = match str_arg(name, "name")? {
            "infection" => InfectionParams::default().build(h),
            "infection-l021" => InfectionParams {
                lambda: 0.21,
                ..Default::default()
            }
            .build(h),
            "tech" => TechAdoptionParams::default().build(h),
            other => Err(Error::Config(format!("unknown game `{other}`"))),
        }
        .map_err(fail)?;
        emit(SmfeGame { spec }, out);
        Ok(())
    })
}

/// # Safety
/// `game` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn smfe_game_free(game: *mut SmfeGame) {
    if !game.is_null() {
        drop(Box::from_raw(game));
    }
}

/// Runs validation; `InvalidGame` with the report as the error message on failure.
///
/// # Safety
/// `game` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn smfe_game_validate(game: *const SmfeGame) -> SmfeStatus {
    guard(|| {
        let g = game.as_ref().ok_or_else(|| null("game"))?;
        validate(&g.spec).into_result().map_err(fail)
    })
}

/// # Safety
/// `game` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn smfe_game_dims(game: *const SmfeGame, out: *mut SmfeDims) -> SmfeStatus {
    guard(|| {
        let g = game.as_ref().ok_or_else(|| null("game"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = SmfeDims {
            follower_states: g.spec.n_follower_states(),
            leader_states: g.spec.n_leader_states(),
            follower_actions: g.spec.n_follower_actions(),
            leader_actions: g.spec.n_leader_actions(),
        };
        Ok(())
    })
}

/// Writes the hex spec hash (64 chars plus NUL) into `buf`.
///
/// # Safety
/// `game` must be a live handle, `buf` must point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn smfe_game_spec_hash(game: *const SmfeGame, buf: *mut c_char, len: usize) -> SmfeStatus {
    guard(|| {
        let g = game.as_ref().ok_or_else(|| null("game"))?;
        let h = g.spec.spec_hash();
        if buf.is_null() || len <= h.len() {
            set_error(format!("hash needs {} bytes", h.len() + 1));
            return Err(SmfeStatus::BufferTooSmall);
        }
        ptr::copy_nonoverlapping(h.as_ptr().cast::<c_char>(), buf, h.len());
        *buf.add(h.len()) = 0;
        Ok(())
    })
}

/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn smfe_solve_options_default(out: *mut SmfeSolveOptions) -> SmfeStatus {
    guard(|| {
        *out.as_mut().ok_or_else(|| null("out"))? = SmfeSolveOptions::default();
        Ok(())
    })
}

/// Solves a game: backward pass for finite horizons, value iteration otherwise.
/// `options` may be null for defaults.
///
/// # Safety
/// `game` must be a live handle, `options` null or valid, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn smfe_solve(
    game: *const SmfeGame,
    options: *const SmfeSolveOptions,
    out: *mut *mut SmfeSolution,
) -> SmfeStatus {
    guard(|| {
        let g = game.as_ref().ok_or_else(|| null("game"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let o = options.as_ref().copied().unwrap_or_default();
        let config = SolverConfig {
            z_resolution: (o.z_resolution > 0).then_some(o.z_resolution),
            belief_resolution: o.belief_resolution,
            value_tol: o.value_tol,
            fixed_point_tol: o.fixed_point_tol,
            max_iter: o.max_iter,
            damped_fallback: o.damped_fallback,
            ..Default::default()
        };
        validate(&g.spec).into_result().map_err(fail)?;
        let solution = solve(&g.spec, &config).map_err(fail)?;
        emit(
            SmfeSolution {
                spec: g.spec.clone(),
                config,
                solution,
            },
            out,
        );
        Ok(())
    })
}

/// # Safety
/// `solution` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn smfe_solution_free(solution: *mut SmfeSolution) {
    if !solution.is_null() {
        drop(Box::from_raw(solution));
    }
}

/// Number of stage policies (1 for a stationary solution), 0 for null.
///
/// # Safety
/// `solution` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn smfe_solution_stages(solution: *const SmfeSolution) -> usize {
    solution.as_ref().map_or(0, |s| s.solution.generator().len())
}

/// Number of joint grid points, 0 for null.
///
/// # Safety
/// `solution` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn smfe_solution_grid_points(solution: *const SmfeSolution) -> usize {
    solution.as_ref().map_or(0, |s| s.solution.generator().grid().len())
}

/// First-stage (or stationary) value table, point-major:
/// `leader = false` gives `[point][follower state]`, `true` `[point][leader type]`.
///
/// # Safety
/// `solution` must be a live handle; `out` must hold `len` doubles; `needed` null or valid.
#[no_mangle]
pub unsafe extern "C" fn smfe_solution_values(
    solution: *const SmfeSolution,
    leader: bool,
    out: *mut f64,
    len: usize,
    needed: *mut usize,
) -> SmfeStatus {
    guard(|| {
        let s = solution.as_ref().ok_or_else(|| null("solution"))?;
        let (f, l) = s.solution.initial_tables();
        fill(if leader { l.values() } else { f.values() }, out, len, needed)
    })
}

/// Prescriptions at stage `t` (1-based; ignored when stationary) for the
/// public state nearest to `(belief, mean_field)`. `leader_out` receives
/// `[type][action]`, `follower_out` `[state][action]`.
///
/// # Safety
/// All pointers must be valid for the given lengths.
#[no_mangle]
pub unsafe extern "C" fn smfe_solution_prescription(
    solution: *const SmfeSolution,
    t: usize,
    belief: *const f64,
    belief_len: usize,
    mean_field: *const f64,
    mean_field_len: usize,
    leader_out: *mut f64,
    leader_len: usize,
    follower_out: *mut f64,
    follower_len: usize,
) -> SmfeStatus {
    guard(|| {
        let s = solution.as_ref().ok_or_else(|| null("solution"))?;
        if belief.is_null() || mean_field.is_null() {
            return Err(null("state"));
        }
        let generator = s.solution.generator();
        if !generator.is_stationary() && (t == 0 || t > generator.len()) {
            set_error(format!("stage {t} out of range 1..={}", generator.len()));
            return Err(SmfeStatus::InvalidArgument);
        }
        let pi = std::slice::from_raw_parts(belief, belief_len);
        let z = std::slice::from_raw_parts(mean_field, mean_field_len);
        let found = generator.lookup(t.max(1), pi, z).map_err(fail)?;
        let p = &found.solution.prescription;
        fill(p.leader.as_slice(), leader_out, leader_len, ptr::null_mut())?;
        fill(p.follower.as_slice(), follower_out, follower_len, ptr::null_mut())
    })
}

/// Forward pass from the game's initial state. `sampled` draws one path
/// with `seed`; otherwise leader actions are branched over. `steps` 0
/// means the horizon (required for stationary solutions).
///
/// # Safety
/// `solution` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn smfe_forward(
    solution: *const SmfeSolution,
    sampled: bool,
    seed: u64,
    steps: usize,
    out: *mut *mut SmfeTrajectory,
) -> SmfeStatus {
    guard(|| {
        let s = solution.as_ref().ok_or_else(|| null("solution"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let options = ForwardOptions {
            mode: if sampled {
                ForwardMode::Sampled { seed }
            } else {
                ForwardMode::Expected
            },
            steps: (steps > 0).then_some(steps),
            ..Default::default()
        };
        let inner = forward_pass(
            &s.spec,
            s.solution.generator(),
            s.spec.initial_leader_belief(),
            s.spec.initial_mean_field(),
            &options,
        )
        .map_err(fail)?;
        emit(SmfeTrajectory { inner }, out);
        Ok(())
    })
}

/// # Safety
/// `trajectory` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn smfe_trajectory_free(trajectory: *mut SmfeTrajectory) {
    if !trajectory.is_null() {
        drop(Box::from_raw(trajectory));
    }
}

/// Number of steps, 0 for null.
///
/// # Safety
/// `trajectory` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn smfe_trajectory_len(trajectory: *const SmfeTrajectory) -> usize {
    trajectory.as_ref().map_or(0, |t| t.inner.steps.len())
}

/// Mean field at step `t` (0-based) of the highest-weight path.
///
/// # Safety
/// `trajectory` must be a live handle; `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn smfe_trajectory_mean_field(
    trajectory: *const SmfeTrajectory,
    t: usize,
    out: *mut f64,
    len: usize,
    needed: *mut usize,
) -> SmfeStatus {
    guard(|| {
        let tr = trajectory.as_ref().ok_or_else(|| null("trajectory"))?;
        let path = tr.inner.main_path();
        let node = path.get(t).ok_or_else(|| {
            set_error(format!("step {t} out of range, trajectory has {}", path.len()));
            SmfeStatus::InvalidArgument
        })?;
        fill(&node.mean_field, out, len, needed)
    })
}

/// Writes the artifact set of `solution` (and `trajectory`, may be null) into `dir`.
///
/// # Safety
/// `solution` must be a live handle, `trajectory` null or live, `dir` a NUL-terminated path.
#[no_mangle]
pub unsafe extern "C" fn smfe_write_artifacts(
    solution: *const SmfeSolution,
    trajectory: *const SmfeTrajectory,
    dir: *const c_char,
) -> SmfeStatus {
    guard(|| {
        let s = solution.as_ref().ok_or_else(|| null("solution"))?;
        let dir = str_arg(dir, "dir")?;
        let traj = trajectory.as_ref().map(|t| &t.inner);
        smfe::export::write_run(Path::new(dir), &s.spec, &s.config, &s.solution, traj).map_err(fail)?;
        Ok(())
    })
}
