//! C interface to the planner and the perturbation feedback policy.
//!
//! Scenarios and plans are opaque handles created and destroyed through
//! this API. Every fallible call returns a [`TpfcStatus`]; on failure the
//! message is available from [`tpfc_last_error`] on the same thread.
//! Panics are caught at the boundary and reported as `TPFC_STATUS_INTERNAL`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use tpfc::scenario::{load_scenario, Scenario};
use tpfc::simulation::{run, tpfc_policy, Controller, NoiseConfig, OfflinePlan, Problem};
use tpfc::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TpfcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Dimension = 4,
    Scenario = 5,
    Solver = 6,
    NotPositiveDefinite = 7,
    Io = 8,
    Internal = 9,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TpfcController {
    Tpfc = 0,
    Nmpc = 1,
    Tlqr = 2,
    Ilqg = 3,
}

impl From<TpfcController> for Controller {
    fn from(c: TpfcController) -> Self {
        match c {
            TpfcController::Tpfc => Controller::Tpfc,
            TpfcController::Nmpc => Controller::Nmpc,
            TpfcController::Tlqr => Controller::Tlqr,
            TpfcController::Ilqg => Controller::Ilqg,
        }
    }
}

/// A validated scenario and the problem built from it.
pub struct TpfcScenario {
    scenario: Scenario,
    problem: Problem,
}

/// An offline plan: nominal trajectory plus all gain schedules.
pub struct TpfcPlan {
    problem: Problem,
    plan: OfflinePlan,
}

/// Outcome of one closed-loop run.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct TpfcRolloutSummary {
    pub cost: f64,
    pub replans: usize,
    pub solver_nonconverged: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> TpfcStatus {
    match e {
        Error::Dimension { .. } => TpfcStatus::Dimension,
        Error::InvalidParameter(_) | Error::StepTooSmall { .. } => TpfcStatus::InvalidArgument,
        Error::Scenario(_) | Error::Json(_) | Error::Degenerate(_) => TpfcStatus::Scenario,
        Error::NotPositiveDefinite { .. } => TpfcStatus::NotPositiveDefinite,
        Error::Io(_) | Error::Csv(_) => TpfcStatus::Io,
        Error::Rollout { source, .. } | Error::Seeded { source, .. } => status_of(source),
        _ => TpfcStatus::Solver,
    }
}

struct Fail(TpfcStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> TpfcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => TpfcStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside tpfc".into());
            TpfcStatus::Internal
        }
    }
}

fn non_null<T>(p: *const T, what: &str) -> Result<(), Fail> {
    if p.is_null() {
        Err(Fail(TpfcStatus::NullPointer, format!("{what} is null")))
    } else {
        Ok(())
    }
}

unsafe fn text<'a>(s: *const c_char, what: &str) -> Result<&'a str, Fail> {
    non_null(s, what)?;
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| Fail(TpfcStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

fn check_len(what: &str, expected: usize, got: usize) -> Result<(), Fail> {
    if expected == got {
        Ok(())
    } else {
        Err(Fail(
            TpfcStatus::Dimension,
            format!("{what}: expected {expected} entries, got {got}"),
        ))
    }
}

fn new_scenario(scenario: Scenario, out: *mut *mut TpfcScenario) -> Result<(), Fail> {
    let problem = scenario.to_problem()?;
    unsafe { *out = Box::into_raw(Box::new(TpfcScenario { scenario, problem })) };
    Ok(())
}

/// Message of the last failed call on this thread, or null if none. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn tpfc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Loads a preset by name or a scenario JSON file by path.
///
/// # Safety
/// `name` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tpfc_scenario_load(name: *const c_char, out: *mut *mut TpfcScenario) -> TpfcStatus {
    guard(|| {
        non_null(out, "out")?;
        new_scenario(load_scenario(text(name, "name")?)?, out)
    })
}

/// Parses a scenario from JSON text.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tpfc_scenario_from_json(json: *const c_char, out: *mut *mut TpfcScenario) -> TpfcStatus {
    guard(|| {
        non_null(out, "out")?;
        new_scenario(Scenario::from_json(text(json, "json")?)?, out)
    })
}

/// Loads a scenario file, never a preset.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tpfc_scenario_from_file(path: *const c_char, out: *mut *mut TpfcScenario) -> TpfcStatus {
    guard(|| {
        non_null(out, "out")?;
        new_scenario(Scenario::from_path(Path::new(text(path, "path")?))?, out)
    })
}

/// # Safety
/// `scenario` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tpfc_scenario_free(scenario: *mut TpfcScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// State dimension, control dimension and horizon of a scenario. Any of
/// the output pointers may be null.
///
/// # Safety
/// `scenario` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn tpfc_scenario_dims(
    scenario: *const TpfcScenario,
    n_x: *mut usize,
    n_u: *mut usize,
    horizon: *mut usize,
) -> TpfcStatus {
    guard(|| {
        non_null(scenario, "scenario")?;
        let p = &(*scenario).problem;
        for (dst, v) in [(n_x, p.model.n_x()), (n_u, p.model.n_u()), (horizon, p.horizon)] {
            if !dst.is_null() {
                *dst = v;
            }
        }
        Ok(())
    })
}

/// Copies the scenario name into `buf` as a NUL-terminated string,
/// truncating to `len - 1` bytes, and returns the full name length.
///
/// # Safety
/// `scenario` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn tpfc_scenario_name(scenario: *const TpfcScenario, buf: *mut c_char, len: usize) -> usize {
    if scenario.is_null() {
        return 0;
    }
    let name = (*scenario).scenario.name.as_bytes();
    if !buf.is_null() && len > 0 {
        let n = name.len().min(len - 1);
        ptr::copy_nonoverlapping(name.as_ptr().cast::<c_char>(), buf, n);
        *buf.add(n) = 0;
    }
    name.len()
}

/// Solves the nominal and synthesizes every gain schedule.
///
/// # Safety
/// `scenario` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tpfc_plan_compute(scenario: *const TpfcScenario, out: *mut *mut TpfcPlan) -> TpfcStatus {
    guard(|| {
        non_null(scenario, "scenario")?;
        non_null(out, "out")?;
        let problem = (*scenario).problem.clone();
        let plan = OfflinePlan::compute(&problem)?;
        *out = Box::into_raw(Box::new(TpfcPlan { problem, plan }));
        Ok(())
    })
}

/// # Safety
/// `plan` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tpfc_plan_free(plan: *mut TpfcPlan) {
    if !plan.is_null() {
        drop(Box::from_raw(plan));
    }
}

/// # Safety
/// `plan` must be a live handle and `cost` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tpfc_plan_nominal_cost(plan: *const TpfcPlan, cost: *mut f64) -> TpfcStatus {
    guard(|| {
        non_null(plan, "plan")?;
        non_null(cost, "cost")?;
        *cost = (*plan).plan.nominal.total_cost();
        Ok(())
    })
}

/// Copies nominal state `t` (0..=N) into `x`, which holds `n_x` values.
///
/// # Safety
/// `plan` must be a live handle and `x` must point to `n_x` doubles.
#[no_mangle]
pub unsafe extern "C" fn tpfc_plan_nominal_state(
    plan: *const TpfcPlan,
    t: usize,
    x: *mut f64,
    n_x: usize,
) -> TpfcStatus {
    guard(|| {
        non_null(plan, "plan")?;
        non_null(x, "x")?;
        let states = &(*plan).plan.nominal.states;
        let s = states
            .get(t)
            .ok_or_else(|| Fail(TpfcStatus::InvalidArgument, format!("t = {t} is past the horizon")))?;
        check_len("x", s.len(), n_x)?;
        ptr::copy_nonoverlapping(s.as_ptr(), x, n_x);
        Ok(())
    })
}

/// Copies nominal control `t` (0..N) into `u`, which holds `n_u` values.
///
/// # Safety
/// `plan` must be a live handle and `u` must point to `n_u` doubles.
#[no_mangle]
pub unsafe extern "C" fn tpfc_plan_nominal_control(
    plan: *const TpfcPlan,
    t: usize,
    u: *mut f64,
    n_u: usize,
) -> TpfcStatus {
    guard(|| {
        non_null(plan, "plan")?;
        non_null(u, "u")?;
        let controls = &(*plan).plan.nominal.controls;
        let c = controls
            .get(t)
            .ok_or_else(|| Fail(TpfcStatus::InvalidArgument, format!("t = {t} is past the horizon")))?;
        check_len("u", c.len(), n_u)?;
        ptr::copy_nonoverlapping(c.as_ptr(), u, n_u);
        Ok(())
    })
}

/// Evaluates `ū_t + K_t (x - x̄_t)`, clamped to the control bounds, with
/// the gains of a feedback controller. NMPC has no gains and is rejected.
///
/// # Safety
/// `plan` must be a live handle, `x` must point to `n_x` doubles and `u`
/// to `n_u` doubles.
#[no_mangle]
pub unsafe extern "C" fn tpfc_policy_eval(
    plan: *const TpfcPlan,
    controller: TpfcController,
    t: usize,
    x: *const f64,
    n_x: usize,
    u: *mut f64,
    n_u: usize,
) -> TpfcStatus {
    guard(|| {
        non_null(plan, "plan")?;
        non_null(x, "x")?;
        non_null(u, "u")?;
        let p = &(*plan).plan;
        let gains = p
            .gains(controller.into())
            .ok_or_else(|| Fail(TpfcStatus::InvalidArgument, "NMPC has no gain schedule".into()))?;
        if t >= p.nominal.horizon() {
            return Err(Fail(
                TpfcStatus::InvalidArgument,
                format!("t = {t} is past the horizon"),
            ));
        }
        check_len("x", p.nominal.states[0].len(), n_x)?;
        check_len("u", p.nominal.controls[0].len(), n_u)?;
        let state = nalgebra::DVector::from_column_slice(std::slice::from_raw_parts(x, n_x));
        let v = tpfc_policy(&p.nominal, gains, &state, t);
        ptr::copy_nonoverlapping(v.as_ptr(), u, n_u);
        Ok(())
    })
}

/// One closed-loop run under process noise of scale `eps`.
///
/// # Safety
/// `plan` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tpfc_rollout(
    plan: *const TpfcPlan,
    controller: TpfcController,
    eps: f64,
    seed: u64,
    out: *mut TpfcRolloutSummary,
) -> TpfcStatus {
    guard(|| {
        non_null(plan, "plan")?;
        non_null(out, "out")?;
        let p = &*plan;
        let noise = NoiseConfig::new(eps, p.problem.model.dt(), seed)?;
        let r = run(&p.problem, &p.plan, controller.into(), &noise)?;
        *out = TpfcRolloutSummary {
            cost: r.cost,
            replans: r.replans(),
            solver_nonconverged: r.solver_nonconverged,
        };
        Ok(())
    })
}
