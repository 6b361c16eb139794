//! C interface to the `riskmppi` planner.
//!
//! Objects cross the boundary as opaque pointers created by `*_new` / `*_load`
//! functions and released with the matching `*_free`. Every fallible call
//! returns a [`RiskmppiStatus`]; on failure a message is available from
//! [`riskmppi_last_error`] on the same thread until the next failing call.
//! Panics never unwind into the caller, they are reported as
//! `RISKMPPI_STATUS_PANIC`.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use riskmppi::environment::{load_course, Course};
use riskmppi::minjerk::{BoundaryState, TwoSegmentTrajectory, WaypointPair};
use riskmppi::mppi::{warm_start, CostWeights, MppiConfig, Planner, WARM_START_REACH};
use riskmppi::risk::{fit_risk_model, hausdorff_points, risk_measure, RiskModel, TrackingSample};
use riskmppi::{Error, Vec3};

/// Result of a call. Values other than `RISKMPPI_STATUS_OK` mirror the
/// library's error kinds plus two boundary-specific cases.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RiskmppiStatus {
    Ok = 0,
    InvalidArgument = 1,
    Domain = 2,
    Internal = 3,
    InsufficientData = 4,
    Parse = 5,
    Validation = 6,
    Config = 7,
    Io = 8,
    Csv = 9,
    /// A required pointer argument was null or a string was not UTF-8.
    NullPointer = 10,
    Panic = 11,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RiskmppiVec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl From<Vec3> for RiskmppiVec3 {
    fn from(v: Vec3) -> Self {
        Self { x: v.x, y: v.y, z: v.z }
    }
}

impl From<RiskmppiVec3> for Vec3 {
    fn from(v: RiskmppiVec3) -> Self {
        Vec3::new(v.x, v.y, v.z)
    }
}

/// Position, velocity and acceleration at the start of a plan.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RiskmppiBoundaryState {
    pub position: RiskmppiVec3,
    pub velocity: RiskmppiVec3,
    pub acceleration: RiskmppiVec3,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RiskmppiKinematicState {
    pub position: RiskmppiVec3,
    pub velocity: RiskmppiVec3,
    pub acceleration: RiskmppiVec3,
    pub jerk: RiskmppiVec3,
}

/// Optimiser settings and cost weights.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RiskmppiPlannerConfig {
    pub n_samples: usize,
    pub n_iter: usize,
    /// Perturbation standard deviation in x and y (m).
    pub sigma: f64,
    pub beta: f64,
    pub seed: u64,
    /// Duration of each trajectory segment (s).
    pub segment_duration: f64,
    pub w_g: f64,
    pub w_obs: f64,
    pub w_rho: f64,
    pub w_ct: f64,
}

/// Output of a solve.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RiskmppiSolution {
    pub r1: RiskmppiVec3,
    pub r2: RiskmppiVec3,
    pub cost: f64,
    /// Wall-clock solve time (s).
    pub elapsed: f64,
}

pub struct RiskmppiCourse(Course);
pub struct RiskmppiRiskModel(RiskModel);
pub struct RiskmppiPlanner(Planner);
pub struct RiskmppiTrajectory(TwoSegmentTrajectory);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nul removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> RiskmppiStatus {
    match e {
        Error::InvalidArgument(_) => RiskmppiStatus::InvalidArgument,
        Error::Domain(_) => RiskmppiStatus::Domain,
        Error::Internal(_) => RiskmppiStatus::Internal,
        Error::InsufficientData(_) => RiskmppiStatus::InsufficientData,
        Error::Parse { .. } => RiskmppiStatus::Parse,
        Error::Validation(_) => RiskmppiStatus::Validation,
        Error::Config(_) => RiskmppiStatus::Config,
        Error::Io(_) => RiskmppiStatus::Io,
        Error::Csv(_) => RiskmppiStatus::Csv,
    }
}

enum Failure {
    Lib(Error),
    Null(&'static str),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

/// Runs `f`, converting errors and panics into a status plus message.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> RiskmppiStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RiskmppiStatus::Ok,
        Ok(Err(Failure::Lib(e))) => {
            set_error(format!("{}: {e}", e.code()));
            status_of(&e)
        }
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("null_pointer: {what}"));
            RiskmppiStatus::NullPointer
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            RiskmppiStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(what))
}

unsafe fn out<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or(Failure::Null(what))
}

unsafe fn string<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Failure::Null(what))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &'static str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

fn boxed<T>(value: T) -> *mut T {
    Box::into_raw(Box::new(value))
}

unsafe fn free<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Message of the last failed call on this thread, or null if none.
///
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn riskmppi_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn riskmppi_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parses a course from the text of a course file.
#[no_mangle]
pub unsafe extern "C" fn riskmppi_course_load(text: *const c_char, course: *mut *mut RiskmppiCourse) -> RiskmppiStatus {
    guard(|| {
        let slot = out(course, "course")?;
        let parsed = load_course(string(text, "text")?)?;
        *slot = boxed(RiskmppiCourse(parsed));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn riskmppi_course_free(course: *mut RiskmppiCourse) {
    free(course);
}

/// Number of goals of a course, 0 for a null course.
#[no_mangle]
pub unsafe extern "C" fn riskmppi_course_goal_count(course: *const RiskmppiCourse) -> usize {
    course.as_ref().map_or(0, |c| c.0.goals.len())
}

#[no_mangle]
pub unsafe extern "C" fn riskmppi_course_goal(
    course: *const RiskmppiCourse,
    index: usize,
    goal: *mut RiskmppiVec3,
) -> RiskmppiStatus {
    guard(|| {
        let c = &deref(course, "course")?.0;
        let slot = out(goal, "goal")?;
        let g = c.goals.get(index).ok_or_else(|| {
            Error::InvalidArgument(format!("goal index {index} out of range ({} goals)", c.goals.len()))
        })?;
        *slot = (*g).into();
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn riskmppi_course_start(
    course: *const RiskmppiCourse,
    start: *mut RiskmppiBoundaryState,
) -> RiskmppiStatus {
    guard(|| {
        let s = deref(course, "course")?.0.start;
        *out(start, "start")? = RiskmppiBoundaryState {
            position: s.position.into(),
            velocity: s.velocity.into(),
            acceleration: s.acceleration.into(),
        };
        Ok(())
    })
}

/// Distance to the nearest obstacle surface, negative inside an obstacle and
/// infinite on a course without obstacles.
#[no_mangle]
pub unsafe extern "C" fn riskmppi_course_clearance(
    course: *const RiskmppiCourse,
    point: RiskmppiVec3,
    clearance: *mut f64,
) -> RiskmppiStatus {
    guard(|| {
        let c = &deref(course, "course")?.0;
        *out(clearance, "clearance")? = c.clearance(&point.into());
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn riskmppi_risk_model_new(
    a: f64,
    b: f64,
    q: f64,
    model: *mut *mut RiskmppiRiskModel,
) -> RiskmppiStatus {
    guard(|| {
        let slot = out(model, "model")?;
        *slot = boxed(RiskmppiRiskModel(RiskModel::new(a, b, q)?));
        Ok(())
    })
}

/// Fits the quantile line `d_h = a + b v_max` to `n` samples.
#[no_mangle]
pub unsafe extern "C" fn riskmppi_risk_model_fit(
    v_max: *const f64,
    d_h: *const f64,
    n: usize,
    q: f64,
    model: *mut *mut RiskmppiRiskModel,
) -> RiskmppiStatus {
    guard(|| {
        let slot = out(model, "model")?;
        let v = slice(v_max, n, "v_max")?;
        let d = slice(d_h, n, "d_h")?;
        let samples: Vec<TrackingSample> = v.iter().zip(d).map(|(&v_max, &d_h)| TrackingSample { v_max, d_h }).collect();
        *slot = boxed(RiskmppiRiskModel(fit_risk_model(&samples, q)?));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn riskmppi_risk_model_params(
    model: *const RiskmppiRiskModel,
    a: *mut f64,
    b: *mut f64,
    q: *mut f64,
) -> RiskmppiStatus {
    guard(|| {
        let m = deref(model, "model")?.0;
        *out(a, "a")? = m.a;
        *out(b, "b")? = m.b;
        *out(q, "q")? = m.q;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn riskmppi_risk_model_free(model: *mut RiskmppiRiskModel) {
    free(model);
}

/// Risk of a plan with predicted deviation `d_hat` and clearance `d_obs`.
#[no_mangle]
pub extern "C" fn riskmppi_risk_measure(d_hat: f64, d_obs: f64) -> f64 {
    risk_measure(d_hat, d_obs)
}

/// Hausdorff distance between two point sets of `na` and `nb` points.
#[no_mangle]
pub unsafe extern "C" fn riskmppi_hausdorff(
    a: *const RiskmppiVec3,
    na: usize,
    b: *const RiskmppiVec3,
    nb: usize,
    distance: *mut f64,
) -> RiskmppiStatus {
    guard(|| {
        let slot = out(distance, "distance")?;
        let pa: Vec<Vec3> = slice(a, na, "a")?.iter().map(|&p| p.into()).collect();
        let pb: Vec<Vec3> = slice(b, nb, "b")?.iter().map(|&p| p.into()).collect();
        *slot = hausdorff_points(&pa, &pb)?;
        Ok(())
    })
}

/// Default optimiser settings and weights.
#[no_mangle]
pub extern "C" fn riskmppi_planner_config_default() -> RiskmppiPlannerConfig {
    let m = MppiConfig::default();
    let w = CostWeights::default();
    RiskmppiPlannerConfig {
        n_samples: m.n_samples,
        n_iter: m.n_iter,
        sigma: m.sigma[0],
        beta: m.beta,
        seed: m.seed,
        segment_duration: m.segment_duration,
        w_g: w.w_g,
        w_obs: w.w_obs,
        w_rho: w.w_rho,
        w_ct: w.w_ct,
    }
}

/// Creates a planner. `model` may be null to plan without the risk term; it
/// is copied, so the caller keeps ownership.
#[no_mangle]
pub unsafe extern "C" fn riskmppi_planner_new(
    config: *const RiskmppiPlannerConfig,
    model: *const RiskmppiRiskModel,
    planner: *mut *mut RiskmppiPlanner,
) -> RiskmppiStatus {
    guard(|| {
        let slot = out(planner, "planner")?;
        let c = deref(config, "config")?;
        let mppi = MppiConfig {
            n_samples: c.n_samples,
            n_iter: c.n_iter,
            sigma: [c.sigma, c.sigma],
            beta: c.beta,
            seed: c.seed,
            segment_duration: c.segment_duration,
            ..MppiConfig::default()
        };
        let weights = CostWeights {
            w_g: c.w_g,
            w_obs: c.w_obs,
            w_rho: c.w_rho,
            w_ct: c.w_ct,
            ..CostWeights::default()
        };
        let risk = model.as_ref().map(|m| m.0);
        *slot = boxed(RiskmppiPlanner(Planner::new(mppi, weights, risk)?));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn riskmppi_planner_free(planner: *mut RiskmppiPlanner) {
    free(planner);
}

/// Optimises the two waypoints from `start` towards `goal`.
///
/// `warm_r1` and `warm_r2` give the initial waypoints; pass null for both to
/// start from the straight line towards the goal. If `trajectory` is not
/// null it receives a new trajectory handle for the solution.
#[no_mangle]
pub unsafe extern "C" fn riskmppi_planner_solve(
    planner: *const RiskmppiPlanner,
    course: *const RiskmppiCourse,
    start: *const RiskmppiBoundaryState,
    goal: RiskmppiVec3,
    warm_r1: *const RiskmppiVec3,
    warm_r2: *const RiskmppiVec3,
    solution: *mut RiskmppiSolution,
    trajectory: *mut *mut RiskmppiTrajectory,
) -> RiskmppiStatus {
    guard(|| {
        let p = &deref(planner, "planner")?.0;
        let c = &deref(course, "course")?.0;
        let s = deref(start, "start")?;
        let slot = out(solution, "solution")?;
        let start = BoundaryState::new(s.position.into(), s.velocity.into(), s.acceleration.into());
        let goal: Vec3 = goal.into();
        let warm = match (warm_r1.as_ref(), warm_r2.as_ref()) {
            (Some(a), Some(b)) => WaypointPair::new((*a).into(), (*b).into()),
            (None, None) => warm_start(&start.position, &goal, WARM_START_REACH),
            _ => return Err(Error::InvalidArgument("give both warm-start waypoints or neither".into()).into()),
        };
        let sol = p.solve(&start, c, &goal, &warm)?;
        *slot = RiskmppiSolution {
            r1: sol.waypoints.r1.into(),
            r2: sol.waypoints.r2.into(),
            cost: sol.cost,
            elapsed: sol.elapsed,
        };
        if let Some(t) = trajectory.as_mut() {
            *t = boxed(RiskmppiTrajectory(sol.trajectory));
        }
        Ok(())
    })
}

/// Builds the trajectory through two waypoints without optimising.
#[no_mangle]
pub unsafe extern "C" fn riskmppi_planner_trajectory(
    planner: *const RiskmppiPlanner,
    start: *const RiskmppiBoundaryState,
    r1: RiskmppiVec3,
    r2: RiskmppiVec3,
    trajectory: *mut *mut RiskmppiTrajectory,
) -> RiskmppiStatus {
    guard(|| {
        let p = &deref(planner, "planner")?.0;
        let s = deref(start, "start")?;
        let slot = out(trajectory, "trajectory")?;
        let start = BoundaryState::new(s.position.into(), s.velocity.into(), s.acceleration.into());
        let traj = p.trajectory(&start, &WaypointPair::new(r1.into(), r2.into()))?;
        *slot = boxed(RiskmppiTrajectory(traj));
        Ok(())
    })
}

/// Total duration of both segments (s), NaN for a null trajectory.
#[no_mangle]
pub unsafe extern "C" fn riskmppi_trajectory_horizon(trajectory: *const RiskmppiTrajectory) -> f64 {
    trajectory.as_ref().map_or(f64::NAN, |t| t.0.horizon())
}

/// State at time `t`, which must lie in `[0, horizon]`.
#[no_mangle]
pub unsafe extern "C" fn riskmppi_trajectory_eval(
    trajectory: *const RiskmppiTrajectory,
    t: f64,
    state: *mut RiskmppiKinematicState,
) -> RiskmppiStatus {
    guard(|| {
        let traj = &deref(trajectory, "trajectory")?.0;
        let slot = out(state, "state")?;
        let k = traj.eval(t)?;
        *slot = RiskmppiKinematicState {
            position: k.position.into(),
            velocity: k.velocity.into(),
            acceleration: k.acceleration.into(),
            jerk: k.jerk.into(),
        };
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn riskmppi_trajectory_free(trajectory: *mut RiskmppiTrajectory) {
    free(trajectory);
}
