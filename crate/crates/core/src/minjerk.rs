//! Two-segment minimum-jerk trajectories.
//!
//! A trajectory starts from a known boundary state, passes through waypoint
//! `r1` after `T` seconds and ends at waypoint `r2` after `2T` seconds with a
//! prescribed terminal velocity and acceleration. Each segment is a quintic
//! per Cartesian axis,
//!
//! ```text
//! x(s) = sum_{j=0..5} c_j s^j / j!      (s = local segment time)
//! ```
//!
//! so `c_j` is the j-th derivative at the segment start. Velocity and
//! acceleration at `r1` are left free; the optimality conditions then require
//! the velocity and acceleration costates (`c4 + c5 s` and
//! `c3 + c4 s + c5 s^2 / 2`) to be continuous there. Together with the
//! boundary conditions this gives 12 linear equations in the 12 coefficients
//! of one axis. The matrix depends only on `T`, so [`MinJerkSolver`] factors
//! it once and reuses the factorisation for every axis and every candidate.

use nalgebra::Vector3;

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Default discretisation step for sampling trajectories (s).
pub const DEFAULT_DT: f64 = 0.02;

/// Residual above which a solve is reported as an internal failure.
const RESIDUAL_LIMIT: f64 = 1e-6;

const INV_FACTORIAL: [f64; 6] = [1.0, 1.0, 0.5, 1.0 / 6.0, 1.0 / 24.0, 1.0 / 120.0];

/// Position, velocity and acceleration at a trajectory boundary.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundaryState {
    pub position: Vec3,
    pub velocity: Vec3,
    pub acceleration: Vec3,
}

impl BoundaryState {
    pub fn new(position: Vec3, velocity: Vec3, acceleration: Vec3) -> Self {
        Self {
            position,
            velocity,
            acceleration,
        }
    }

    pub fn at_rest(position: Vec3) -> Self {
        Self::new(position, Vec3::zeros(), Vec3::zeros())
    }

    pub fn is_finite(&self) -> bool {
        finite(&self.position) && finite(&self.velocity) && finite(&self.acceleration)
    }
}

/// The two waypoints that parameterise a trajectory.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WaypointPair {
    pub r1: Vec3,
    pub r2: Vec3,
}

impl WaypointPair {
    pub fn new(r1: Vec3, r2: Vec3) -> Self {
        Self { r1, r2 }
    }

    pub fn is_finite(&self) -> bool {
        finite(&self.r1) && finite(&self.r2)
    }
}

/// Velocity and acceleration required at the second waypoint.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TerminalCondition {
    pub velocity: Vec3,
    pub acceleration: Vec3,
}

/// Terminal condition that brings the vehicle to rest at `r2`.
///
/// Every planned trajectory uses it, so a vehicle whose planner stops
/// replanning still comes to a stop at the second waypoint.
pub fn safety_terminal() -> TerminalCondition {
    TerminalCondition {
        velocity: Vec3::zeros(),
        acceleration: Vec3::zeros(),
    }
}

/// Kinematic state of a trajectory at one instant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KinematicState {
    pub position: Vec3,
    pub velocity: Vec3,
    pub acceleration: Vec3,
    pub jerk: Vec3,
}

/// A trajectory discretised on the grid returned by [`sample_times`].
#[derive(Clone, Debug, Default)]
pub struct TrajectorySamples {
    pub times: Vec<f64>,
    pub positions: Vec<Vec3>,
    pub velocities: Vec<Vec3>,
    pub accelerations: Vec<Vec3>,
}

/// Piecewise quintic trajectory over `[0, 2T]`.
#[derive(Clone, Debug, PartialEq)]
pub struct TwoSegmentTrajectory {
    /// `coefficients[axis][segment][j]`, axis in x/y/z, segment in 0/1.
    coefficients: [[[f64; 6]; 2]; 3],
    segment_duration: f64,
}

impl TwoSegmentTrajectory {
    pub fn from_coefficients(coefficients: [[[f64; 6]; 2]; 3], segment_duration: f64) -> Self {
        Self {
            coefficients,
            segment_duration,
        }
    }

    pub fn coefficients(&self) -> &[[[f64; 6]; 2]; 3] {
        &self.coefficients
    }

    pub fn segment_duration(&self) -> f64 {
        self.segment_duration
    }

    pub fn horizon(&self) -> f64 {
        2.0 * self.segment_duration
    }

    /// Evaluates the trajectory at `t` in `[0, 2T]`.
    pub fn eval(&self, t: f64) -> Result<KinematicState> {
        // written so that NaN is rejected too
        if !(t >= 0.0 && t <= self.horizon()) {
            return Err(Error::Domain(format!(
                "t = {t} outside [0, {}]",
                self.horizon()
            )));
        }
        Ok(self.eval_unchecked(t))
    }

    /// Same as [`eval`](Self::eval) with `t` clamped into the horizon.
    pub fn eval_clamped(&self, t: f64) -> KinematicState {
        self.eval_unchecked(t.clamp(0.0, self.horizon()))
    }

    fn eval_unchecked(&self, t: f64) -> KinematicState {
        // t == T belongs to the second segment
        let (segment, s) = if t < self.segment_duration {
            (0, t)
        } else {
            (1, t - self.segment_duration)
        };
        let mut out = [[0.0; 3]; 4];
        for (axis, coeffs) in self.coefficients.iter().enumerate() {
            let d = derivatives(&coeffs[segment], s);
            for (order, value) in d.iter().enumerate() {
                out[order][axis] = *value;
            }
        }
        KinematicState {
            position: Vec3::from(out[0]),
            velocity: Vec3::from(out[1]),
            acceleration: Vec3::from(out[2]),
            jerk: Vec3::from(out[3]),
        }
    }

    /// Samples position, velocity and acceleration every `dt` seconds.
    pub fn sample(&self, dt: f64) -> TrajectorySamples {
        let times = sample_times(self.horizon(), dt);
        let mut samples = TrajectorySamples {
            positions: Vec::with_capacity(times.len()),
            velocities: Vec::with_capacity(times.len()),
            accelerations: Vec::with_capacity(times.len()),
            times: Vec::new(),
        };
        for &t in &times {
            let state = self.eval_unchecked(t);
            samples.positions.push(state.position);
            samples.velocities.push(state.velocity);
            samples.accelerations.push(state.acceleration);
        }
        samples.times = times;
        samples
    }

    /// Waypoint positions read back from the coefficients.
    pub fn waypoints(&self) -> WaypointPair {
        WaypointPair::new(
            self.eval_unchecked(self.segment_duration).position,
            self.eval_unchecked(self.horizon()).position,
        )
    }
}

/// Position and its first three derivatives of one quintic at local time `s`.
fn derivatives(c: &[f64; 6], s: f64) -> [f64; 4] {
    let mut out = [0.0; 4];
    for (order, value) in out.iter_mut().enumerate() {
        // sum_{j>=order} c_j s^(j-order) / (j-order)!
        let mut sum = 0.0;
        let mut power = 1.0;
        for (k, j) in (order..6).enumerate() {
            sum += c[j] * power * INV_FACTORIAL[k];
            power *= s;
        }
        *value = sum;
    }
    out
}

/// Sample instants `0, dt, 2dt, ...` up to and including `horizon`.
pub fn sample_times(horizon: f64, dt: f64) -> Vec<f64> {
    let intervals = (horizon / dt - 1e-9).ceil().max(0.0) as usize;
    let mut times: Vec<f64> = (0..intervals).map(|k| k as f64 * dt).collect();
    times.push(horizon);
    times
}

/// Maximum commanded speed over the samples `0, dt, ..., 2T`.
pub fn max_speed(traj: &TwoSegmentTrajectory, dt: f64) -> f64 {
    sample_times(traj.horizon(), dt)
        .into_iter()
        .map(|t| traj.eval_unchecked(t).velocity.norm())
        .fold(0.0, f64::max)
}

/// Row-reduced form of the 12x12 boundary-value system for a fixed `T`.
#[derive(Clone, Debug)]
pub struct MinJerkSolver {
    segment_duration: f64,
    matrix: [[f64; 12]; 12],
    lu: [[f64; 12]; 12],
    pivots: [usize; 12],
}

impl MinJerkSolver {
    pub fn new(segment_duration: f64) -> Result<Self> {
        if !(segment_duration > 0.0) || !segment_duration.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "segment duration must be positive and finite, got {segment_duration}"
            )));
        }
        let matrix = system_matrix(segment_duration);
        let (lu, pivots) = lu_factor(matrix)?;
        Ok(Self {
            segment_duration,
            matrix,
            lu,
            pivots,
        })
    }

    pub fn segment_duration(&self) -> f64 {
        self.segment_duration
    }

    pub fn solve(
        &self,
        start: &BoundaryState,
        waypoints: &WaypointPair,
        terminal: &TerminalCondition,
    ) -> Result<TwoSegmentTrajectory> {
        if !start.is_finite()
            || !waypoints.is_finite()
            || !finite(&terminal.velocity)
            || !finite(&terminal.acceleration)
        {
            return Err(Error::InvalidArgument("non-finite boundary data".into()));
        }
        let mut coefficients = [[[0.0; 6]; 2]; 3];
        for (axis, axis_coeffs) in coefficients.iter_mut().enumerate() {
            let rhs = [
                start.position[axis],
                start.velocity[axis],
                start.acceleration[axis],
                waypoints.r1[axis],
                waypoints.r1[axis],
                waypoints.r2[axis],
                terminal.velocity[axis],
                terminal.acceleration[axis],
                0.0,
                0.0,
                0.0,
                0.0,
            ];
            let x = lu_solve(&self.lu, &self.pivots, rhs);
            let residual = self
                .matrix
                .iter()
                .zip(rhs.iter())
                .map(|(row, b)| (row.iter().zip(x.iter()).map(|(a, x)| a * x).sum::<f64>() - b).abs())
                .fold(0.0, f64::max);
            if !(residual <= RESIDUAL_LIMIT) {
                return Err(Error::Internal(format!(
                    "min-jerk residual {residual:e} on axis {axis}"
                )));
            }
            axis_coeffs[0].copy_from_slice(&x[..6]);
            axis_coeffs[1].copy_from_slice(&x[6..]);
        }
        Ok(TwoSegmentTrajectory {
            coefficients,
            segment_duration: self.segment_duration,
        })
    }
}

/// One-off solve; builds a [`MinJerkSolver`] for `segment_duration`.
pub fn solve_two_segment(
    start: &BoundaryState,
    waypoints: &WaypointPair,
    terminal_velocity: Vec3,
    terminal_acceleration: Vec3,
    segment_duration: f64,
) -> Result<TwoSegmentTrajectory> {
    MinJerkSolver::new(segment_duration)?.solve(
        start,
        waypoints,
        &TerminalCondition {
            velocity: terminal_velocity,
            acceleration: terminal_acceleration,
        },
    )
}

/// Residuals of the 12 defining equations for every axis.
///
/// Order per axis: start position/velocity/acceleration, `r1` reached by
/// segment 1, segment 2 starting at `r1`, `r2` reached, terminal velocity,
/// terminal acceleration, the two costate continuity conditions, velocity
/// continuity and acceleration continuity at `r1`.
pub fn constraint_residuals(
    traj: &TwoSegmentTrajectory,
    start: &BoundaryState,
    waypoints: &WaypointPair,
    terminal: &TerminalCondition,
) -> [[f64; 12]; 3] {
    let t = traj.segment_duration;
    let mut out = [[0.0; 12]; 3];
    for (axis, res) in out.iter_mut().enumerate() {
        let [c1, c2] = traj.coefficients[axis];
        let end1 = derivatives(&c1, t);
        let end2 = derivatives(&c2, t);
        *res = [
            c1[0] - start.position[axis],
            c1[1] - start.velocity[axis],
            c1[2] - start.acceleration[axis],
            end1[0] - waypoints.r1[axis],
            c2[0] - waypoints.r1[axis],
            end2[0] - waypoints.r2[axis],
            end2[1] - terminal.velocity[axis],
            end2[2] - terminal.acceleration[axis],
            c1[4] + c1[5] * t - c2[4],
            c1[3] + c1[4] * t + 0.5 * c1[5] * t * t - c2[3],
            end1[1] - c2[1],
            end1[2] - c2[2],
        ];
    }
    out
}

fn system_matrix(t: f64) -> [[f64; 12]; 12] {
    // powers[k] = t^k / k!
    let mut powers = [0.0; 6];
    let mut p = 1.0;
    for (k, slot) in powers.iter_mut().enumerate() {
        *slot = p * INV_FACTORIAL[k];
        p *= t;
    }
    let mut m = [[0.0; 12]; 12];
    // segment 1 starts at the initial state
    m[0][0] = 1.0;
    m[1][1] = 1.0;
    m[2][2] = 1.0;
    // segment 1 ends at r1, segment 2 starts there
    for j in 0..6 {
        m[3][j] = powers[j];
    }
    m[4][6] = 1.0;
    // segment 2 ends at r2 with the terminal velocity/acceleration
    for j in 0..6 {
        m[5][6 + j] = powers[j];
    }
    for j in 1..6 {
        m[6][6 + j] = powers[j - 1];
    }
    for j in 2..6 {
        m[7][6 + j] = powers[j - 2];
    }
    // costate continuity
    m[8][4] = 1.0;
    m[8][5] = t;
    m[8][10] = -1.0;
    m[9][3] = 1.0;
    m[9][4] = t;
    m[9][5] = 0.5 * t * t;
    m[9][9] = -1.0;
    // velocity and acceleration continuity
    for j in 1..6 {
        m[10][j] = powers[j - 1];
    }
    m[10][7] = -1.0;
    for j in 2..6 {
        m[11][j] = powers[j - 2];
    }
    m[11][8] = -1.0;
    m
}

/// In-place LU factorisation with partial pivoting.
fn lu_factor(mut a: [[f64; 12]; 12]) -> Result<([[f64; 12]; 12], [usize; 12])> {
    let mut pivots = [0usize; 12];
    for k in 0..12 {
        let (p, max) = (k..12)
            .map(|i| (i, a[i][k].abs()))
            .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if max < 1e-14 {
            return Err(Error::Internal(format!("singular min-jerk system at column {k}")));
        }
        pivots[k] = p;
        a.swap(k, p);
        for i in k + 1..12 {
            let factor = a[i][k] / a[k][k];
            a[i][k] = factor;
            for j in k + 1..12 {
                a[i][j] -= factor * a[k][j];
            }
        }
    }
    Ok((a, pivots))
}

fn lu_solve(lu: &[[f64; 12]; 12], pivots: &[usize; 12], mut b: [f64; 12]) -> [f64; 12] {
    for k in 0..12 {
        b.swap(k, pivots[k]);
    }
    for i in 0..12 {
        for j in 0..i {
            b[i] -= lu[i][j] * b[j];
        }
    }
    for i in (0..12).rev() {
        for j in i + 1..12 {
            b[i] -= lu[i][j] * b[j];
        }
        b[i] /= lu[i][i];
    }
    b
}

fn finite(v: &Vec3) -> bool {
    v.iter().all(|x| x.is_finite())
}

#[cfg(test)]
mod tests {
    use super::*;

    const T: f64 = 2.5;

    fn x_only(p: f64, v: f64, a: f64) -> BoundaryState {
        BoundaryState::new(Vec3::new(p, 0.0, 0.0), Vec3::new(v, 0.0, 0.0), Vec3::new(a, 0.0, 0.0))
    }

    fn x_pair(r1: f64, r2: f64) -> WaypointPair {
        WaypointPair::new(Vec3::new(r1, 0.0, 0.0), Vec3::new(r2, 0.0, 0.0))
    }

    #[test]
    fn zero_boundary_data_gives_zero_trajectory() {
        let traj = solve_two_segment(
            &BoundaryState::at_rest(Vec3::zeros()),
            &WaypointPair::new(Vec3::zeros(), Vec3::zeros()),
            Vec3::zeros(),
            Vec3::zeros(),
            T,
        )
        .unwrap();
        assert!(traj.coefficients().iter().flatten().flatten().all(|c| *c == 0.0));
        for k in 0..=50 {
            assert_eq!(traj.eval(k as f64 * 0.1).unwrap().position, Vec3::zeros());
        }
    }

    #[test]
    fn rest_to_rest_interpolates_waypoints() {
        let traj =
            solve_two_segment(&x_only(0.0, 0.0, 0.0), &x_pair(1.0, 2.0), Vec3::zeros(), Vec3::zeros(), T)
                .unwrap();
        assert!((traj.eval(T).unwrap().position.x - 1.0).abs() < 1e-12);
        assert!((traj.eval(2.0 * T).unwrap().position.x - 2.0).abs() < 1e-12);
        assert!(traj.eval(0.0).unwrap().velocity.norm() < 1e-12);
        assert!(traj.eval(2.0 * T).unwrap().velocity.norm() < 1e-12);
    }

    #[test]
    fn eval_at_zero_returns_start_state() {
        let start = BoundaryState::new(
            Vec3::new(1.0, -2.0, 0.5),
            Vec3::new(0.3, 0.1, -0.2),
            Vec3::new(-1.0, 0.4, 0.0),
        );
        let wp = WaypointPair::new(Vec3::new(2.0, 1.0, 0.0), Vec3::new(4.0, 3.0, 1.0));
        let traj = MinJerkSolver::new(T).unwrap().solve(&start, &wp, &safety_terminal()).unwrap();
        let s0 = traj.eval(0.0).unwrap();
        assert!((s0.position - start.position).norm() < 1e-12);
        assert!((s0.velocity - start.velocity).norm() < 1e-12);
        assert!((s0.acceleration - start.acceleration).norm() < 1e-12);
        assert!((traj.eval(T).unwrap().position - wp.r1).norm() < 1e-9);
    }

    #[test]
    fn eval_rejects_times_outside_horizon() {
        let traj = solve_two_segment(
            &BoundaryState::at_rest(Vec3::zeros()),
            &x_pair(1.0, 2.0),
            Vec3::zeros(),
            Vec3::zeros(),
            T,
        )
        .unwrap();
        assert!(matches!(traj.eval(-1e-9), Err(Error::Domain(_))));
        assert!(matches!(traj.eval(2.0 * T + 1e-9), Err(Error::Domain(_))));
        assert!(matches!(traj.eval(f64::NAN), Err(Error::Domain(_))));
        assert!(traj.eval(2.0 * T).is_ok());
    }

    #[test]
    fn constant_velocity_line_has_unit_max_speed() {
        let traj =
            solve_two_segment(&x_only(0.0, 1.0, 0.0), &x_pair(2.5, 5.0), Vec3::new(1.0, 0.0, 0.0), Vec3::zeros(), T)
                .unwrap();
        assert!((max_speed(&traj, DEFAULT_DT) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn zero_trajectory_has_zero_max_speed() {
        let traj = solve_two_segment(
            &BoundaryState::at_rest(Vec3::zeros()),
            &WaypointPair::new(Vec3::zeros(), Vec3::zeros()),
            Vec3::zeros(),
            Vec3::zeros(),
            T,
        )
        .unwrap();
        assert_eq!(max_speed(&traj, DEFAULT_DT), 0.0);
    }

    #[test]
    fn safety_terminal_is_rest() {
        let term = safety_terminal();
        assert_eq!(term.velocity, Vec3::zeros());
        assert_eq!(term.acceleration, Vec3::zeros());
        let start = BoundaryState::new(Vec3::zeros(), Vec3::new(2.0, -1.0, 0.0), Vec3::new(0.0, 3.0, 0.0));
        let wp = WaypointPair::new(Vec3::new(3.0, 1.0, 0.0), Vec3::new(1.0, 4.0, 0.0));
        let traj = MinJerkSolver::new(T).unwrap().solve(&start, &wp, &term).unwrap();
        let end = traj.eval(2.0 * T).unwrap();
        assert!(end.velocity.norm() < 1e-9);
        assert!(end.acceleration.norm() < 1e-9);
    }

    #[test]
    fn sample_grid_ends_on_horizon() {
        let times = sample_times(5.0, 0.02);
        assert_eq!(times.len(), 251);
        assert_eq!(*times.last().unwrap(), 5.0);
        assert!(times.windows(2).all(|w| w[1] > w[0]));
        let odd = sample_times(1.0, 0.3);
        assert_eq!(odd.len(), 5);
        assert_eq!(*odd.last().unwrap(), 1.0);
    }

    #[test]
    fn rejects_nonpositive_duration() {
        assert!(MinJerkSolver::new(0.0).is_err());
        assert!(MinJerkSolver::new(-1.0).is_err());
        assert!(MinJerkSolver::new(f64::NAN).is_err());
    }

    #[test]
    fn continuity_at_first_waypoint() {
        let start = BoundaryState::new(Vec3::new(0.5, 0.0, 1.0), Vec3::new(1.0, 2.0, 0.0), Vec3::zeros());
        let wp = WaypointPair::new(Vec3::new(3.0, -1.0, 1.0), Vec3::new(4.0, 2.0, 1.5));
        let traj = MinJerkSolver::new(T).unwrap().solve(&start, &wp, &safety_terminal()).unwrap();
        let before = traj.eval(T - 1e-12).unwrap();
        let at = traj.eval(T).unwrap();
        assert!((before.position - at.position).norm() < 1e-9);
        assert!((before.velocity - at.velocity).norm() < 1e-9);
        assert!((before.acceleration - at.acceleration).norm() < 1e-9);
    }
}
