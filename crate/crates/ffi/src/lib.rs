//! C ABI for `rss-odd`.
//!
//! Every function returns an [`RssStatus`]; results go through out-pointers.
//! On failure a message is kept per thread and can be read with
//! [`rss_last_error`]. Handles are opaque and must be released with their
//! `_free` function. Absent optional values are reported as NaN.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::Arc;

use rss_odd::kinematics::{self, BrakeCap, KinematicsError, ScenarioParams};
use rss_odd::odd::{self, OddMachine};
use rss_odd::oracle::{self, OracleError, SimTrace};
use rss_odd::physics::{self, CurveRadius, PhysicsError, RoadEnvironment};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RssStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    NotApplicable = 3,
    NoSafeDistance = 4,
    InvalidConfiguration = 5,
    InvalidUtf8 = 6,
    OutOfRange = 7,
    Panic = 8,
}

/// Scenario inputs in SI units. When `a_max_brake_unbounded` is set the
/// front vehicle stops instantly and `a_max_brake` is ignored.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct RssScenario {
    pub v_r: f64,
    pub v_f: f64,
    pub rho: f64,
    pub a_max_accel: f64,
    pub a_min_brake: f64,
    pub a_max_brake: f64,
    pub a_max_brake_unbounded: bool,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct RssDmin {
    pub d_min: f64,
    pub d_prime: f64,
    pub d_double_prime: f64,
    pub d_triple_prime: f64,
    pub t_equal: f64,
    pub special_case_applied: bool,
    pub special_case_prevails: bool,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct RssStoppingTimes {
    pub front: f64,
    pub rear: f64,
}

/// Road seen by one vehicle. A `curve_radius` of zero or infinity means a
/// straight road.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct RssRoad {
    pub mu: f64,
    pub slope: f64,
    pub curve_radius: f64,
    pub speed_for_curve: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct RssBrakingBudget {
    pub decel: f64,
    pub cannot_hold: bool,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct RssSample {
    pub t: f64,
    pub x_f: f64,
    pub v_f: f64,
    pub x_r: f64,
    pub v_r: f64,
    pub gap: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct RssTraceSummary {
    pub dt: f64,
    pub len: usize,
    pub min_gap: f64,
    pub min_gap_time: f64,
    pub collided: bool,
}

/// Simulated trace.
pub struct RssTrace {
    trace: SimTrace,
}

/// Micro-ODD state machine with its configuration.
pub struct RssMachine {
    machine: OddMachine,
    current: CString,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(RssStatus, String);

impl From<KinematicsError> for Failure {
    fn from(e: KinematicsError) -> Self {
        let status = match e {
            KinematicsError::NotApplicable(_) => RssStatus::NotApplicable,
            _ => RssStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

impl From<OracleError> for Failure {
    fn from(e: OracleError) -> Self {
        Failure(RssStatus::InvalidArgument, e.to_string())
    }
}

impl From<PhysicsError> for Failure {
    fn from(e: PhysicsError) -> Self {
        let status = match e {
            PhysicsError::InvalidParameter { .. } => RssStatus::InvalidArgument,
            _ => RssStatus::NoSafeDistance,
        };
        Failure(status, e.to_string())
    }
}

fn set_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

/// Run `f`, turning errors and panics into a status and a stored message.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> RssStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            RssStatus::Ok
        }
        Ok(Err(Failure(status, message))) => {
            set_error(&message);
            status
        }
        Err(_) => {
            set_error("internal panic");
            RssStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(RssStatus::NullPointer, format!("{what} is null"))
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| Failure(RssStatus::InvalidUtf8, format!("{what}: {e}")))
}

fn params(s: &RssScenario) -> ScenarioParams {
    ScenarioParams {
        v_r: s.v_r,
        v_f: s.v_f,
        rho: s.rho,
        a_max_accel: s.a_max_accel,
        a_min_brake: s.a_min_brake,
        a_max_brake: if s.a_max_brake_unbounded {
            BrakeCap::Unbounded
        } else {
            BrakeCap::Finite(s.a_max_brake)
        },
    }
}

/// Message of the last failed call on this thread, or NULL. Valid until the
/// next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn rss_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Static description of a status code.
#[no_mangle]
pub extern "C" fn rss_status_str(status: RssStatus) -> *const c_char {
    let s: &'static CStr = match status {
        RssStatus::Ok => c"ok",
        RssStatus::NullPointer => c"null pointer",
        RssStatus::InvalidArgument => c"invalid argument",
        RssStatus::NotApplicable => c"not applicable",
        RssStatus::NoSafeDistance => c"no safe distance",
        RssStatus::InvalidConfiguration => c"invalid configuration",
        RssStatus::InvalidUtf8 => c"invalid UTF-8",
        RssStatus::OutOfRange => c"index out of range",
        RssStatus::Panic => c"internal panic",
    };
    s.as_ptr()
}

/// Minimum safe following distance with its breakdown.
///
/// # Safety
/// `scenario` must be valid for reads and `result` for writes.
#[no_mangle]
pub unsafe extern "C" fn rss_dmin(scenario: *const RssScenario, result: *mut RssDmin) -> RssStatus {
    guard(|| {
        let p = params(deref(scenario, "scenario")?);
        let r = kinematics::d_min(&p)?;
        *out(result, "result")? = RssDmin {
            d_min: r.d_min,
            d_prime: r.d_prime,
            d_double_prime: r.d_double_prime.unwrap_or(f64::NAN),
            d_triple_prime: r.d_triple_prime.unwrap_or(f64::NAN),
            t_equal: r.t_equal.unwrap_or(f64::NAN),
            special_case_applied: r.special_case_applied,
            special_case_prevails: r.special_case_prevails(),
        };
        Ok(())
    })
}

/// Rest-position distance, clamped at zero.
///
/// # Safety
/// `scenario` must be valid for reads and `d_prime` for writes.
#[no_mangle]
pub unsafe extern "C" fn rss_d_prime_min(scenario: *const RssScenario, d_prime: *mut f64) -> RssStatus {
    guard(|| {
        let p = params(deref(scenario, "scenario")?);
        *out(d_prime, "d_prime")? = kinematics::d_prime_min(&p)?;
        Ok(())
    })
}

/// # Safety
/// `scenario` must be valid for reads and `times` for writes.
#[no_mangle]
pub unsafe extern "C" fn rss_stopping_times(
    scenario: *const RssScenario,
    times: *mut RssStoppingTimes,
) -> RssStatus {
    guard(|| {
        let p = params(deref(scenario, "scenario")?);
        let t = kinematics::stopping_times(&p)?;
        *out(times, "times")? = RssStoppingTimes {
            front: t.front,
            rear: t.rear,
        };
        Ok(())
    })
}

/// Braking available on a road after slope and cornering demand.
///
/// # Safety
/// `road` must be valid for reads and `budget` for writes.
#[no_mangle]
pub unsafe extern "C" fn rss_effective_braking_decel(
    road: *const RssRoad,
    budget: *mut RssBrakingBudget,
) -> RssStatus {
    guard(|| {
        let r = deref(road, "road")?;
        let curve_radius = if r.curve_radius == 0.0 || r.curve_radius == f64::INFINITY {
            CurveRadius::Straight
        } else {
            CurveRadius::Radius(r.curve_radius)
        };
        let env = RoadEnvironment {
            mu: r.mu,
            slope: r.slope,
            curve_radius,
            speed_for_curve: r.speed_for_curve,
        };
        let b = physics::effective_braking_decel(&env)?;
        *out(budget, "budget")? = RssBrakingBudget {
            decel: b.decel,
            cannot_hold: b.cannot_hold,
        };
        Ok(())
    })
}

/// Smallest collision-free initial gap found by simulation, within `tol`.
///
/// # Safety
/// `scenario` must be valid for reads and `gap` for writes.
#[no_mangle]
pub unsafe extern "C" fn rss_min_safe_gap(
    scenario: *const RssScenario,
    tol: f64,
    gap: *mut f64,
) -> RssStatus {
    guard(|| {
        let p = params(deref(scenario, "scenario")?);
        *out(gap, "gap")? = oracle::min_safe_gap(&p, tol)?;
        Ok(())
    })
}

/// Simulate both vehicles from `initial_gap` with step `dt`.
///
/// # Safety
/// `scenario` must be valid for reads and `trace` for writes. The handle
/// stored in `*trace` must be released with [`rss_trace_free`].
#[no_mangle]
pub unsafe extern "C" fn rss_simulate(
    scenario: *const RssScenario,
    initial_gap: f64,
    dt: f64,
    trace: *mut *mut RssTrace,
) -> RssStatus {
    guard(|| {
        let p = params(deref(scenario, "scenario")?);
        let slot = out(trace, "trace")?;
        let t = oracle::simulate(&p, initial_gap, dt)?;
        *slot = Box::into_raw(Box::new(RssTrace { trace: t }));
        Ok(())
    })
}

/// Number of samples, or 0 for a null handle.
///
/// # Safety
/// `trace` must be null or a live handle from [`rss_simulate`].
#[no_mangle]
pub unsafe extern "C" fn rss_trace_len(trace: *const RssTrace) -> usize {
    trace.as_ref().map_or(0, |t| t.trace.samples.len())
}

/// # Safety
/// `trace` must be a live handle and `sample` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rss_trace_sample(
    trace: *const RssTrace,
    index: usize,
    sample: *mut RssSample,
) -> RssStatus {
    guard(|| {
        let t = deref(trace, "trace")?;
        let s = t.trace.samples.get(index).ok_or_else(|| {
            Failure(
                RssStatus::OutOfRange,
                format!("sample {index} of {}", t.trace.samples.len()),
            )
        })?;
        *out(sample, "sample")? = RssSample {
            t: s.t,
            x_f: s.x_f,
            v_f: s.v_f,
            x_r: s.x_r,
            v_r: s.v_r,
            gap: s.gap,
        };
        Ok(())
    })
}

/// # Safety
/// `trace` must be a live handle and `summary` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rss_trace_summary(
    trace: *const RssTrace,
    summary: *mut RssTraceSummary,
) -> RssStatus {
    guard(|| {
        let t = &deref(trace, "trace")?.trace;
        *out(summary, "summary")? = RssTraceSummary {
            dt: t.dt,
            len: t.samples.len(),
            min_gap: t.min_gap,
            min_gap_time: t.min_gap_time,
            collided: t.collided,
        };
        Ok(())
    })
}

/// # Safety
/// `trace` must be null or a handle from [`rss_simulate`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rss_trace_free(trace: *mut RssTrace) {
    if !trace.is_null() {
        drop(Box::from_raw(trace));
    }
}

/// Build a state machine from micro-ODD configuration text (TOML).
///
/// # Safety
/// `config_toml` must be a NUL-terminated string and `machine` valid for
/// writes. Release the handle with [`rss_machine_free`].
#[no_mangle]
pub unsafe extern "C" fn rss_machine_new(
    config_toml: *const c_char,
    machine: *mut *mut RssMachine,
) -> RssStatus {
    guard(|| {
        let text = text(config_toml, "config_toml")?;
        let slot = out(machine, "machine")?;
        let config = odd::parse_odd_config(text)
            .map_err(|e| Failure(RssStatus::InvalidConfiguration, e.to_string()))?;
        let machine = OddMachine::new(Arc::new(config));
        let current = CString::new(machine.current()).unwrap_or_default();
        *slot = Box::into_raw(Box::new(RssMachine { machine, current }));
        Ok(())
    })
}

/// Apply the evidence observed at time `t`, given as a JSON object of
/// key/value pairs (`{"ball_detected": "true"}`).
///
/// # Safety
/// `machine` must be a live handle and `evidence_json` a NUL-terminated
/// string.
#[no_mangle]
pub unsafe extern "C" fn rss_machine_step(
    machine: *mut RssMachine,
    t: f64,
    evidence_json: *const c_char,
) -> RssStatus {
    guard(|| {
        let m = out(machine, "machine")?;
        let raw: BTreeMap<String, serde_json::Value> =
            serde_json::from_str(text(evidence_json, "evidence_json")?)
                .map_err(|e| Failure(RssStatus::InvalidArgument, format!("evidence: {e}")))?;
        let evidence = raw
            .into_iter()
            .map(|(k, v)| match v {
                serde_json::Value::String(s) => (k, s),
                other => (k, other.to_string()),
            })
            .collect();
        m.machine.apply(t, evidence);
        m.current = CString::new(m.machine.current()).unwrap_or_default();
        Ok(())
    })
}

/// Id of the active micro-ODD, owned by the handle and valid until the next
/// step or free. NULL for a null handle.
///
/// # Safety
/// `machine` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rss_machine_current(machine: *const RssMachine) -> *const c_char {
    machine.as_ref().map_or(ptr::null(), |m| m.current.as_ptr())
}

/// Worst-case following distance of the active micro-ODD; NaN when it is
/// defensive.
///
/// # Safety
/// `machine` must be a live handle and `d_min` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rss_machine_current_d_min(
    machine: *const RssMachine,
    d_min: *mut f64,
) -> RssStatus {
    guard(|| {
        let m = &deref(machine, "machine")?.machine;
        let value = m
            .config()
            .odd(m.current())
            .and_then(|o| o.d_min_worst)
            .unwrap_or(f64::NAN);
        *out(d_min, "d_min")? = value;
        Ok(())
    })
}

/// # Safety
/// `machine` must be null or a handle from [`rss_machine_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rss_machine_free(machine: *mut RssMachine) {
    if !machine.is_null() {
        drop(Box::from_raw(machine));
    }
}
