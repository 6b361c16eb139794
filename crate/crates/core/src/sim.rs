//! Closed-loop simulation.
//!
//! The vehicle is a point mass driven by a PD tracking law with acceleration
//! feedforward, a magnitude limit on the applied acceleration and additive
//! Gaussian acceleration noise. Trajectories that ask for more acceleration
//! than the limit are tracked with a lag, which is what makes the tracking
//! error grow with commanded speed.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::environment::{Course, GoalTracker};
use crate::error::{Error, Result};
use crate::minjerk::{
    max_speed, safety_terminal, BoundaryState, KinematicState, MinJerkSolver, TwoSegmentTrajectory, Vec3,
    WaypointPair,
};
use crate::mppi::{warm_start, Planner, WARM_START_REACH};
use crate::risk::{SampledPath, TrackingLog};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlantState {
    pub position: Vec3,
    pub velocity: Vec3,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlantConfig {
    /// Position gain (1/s^2).
    pub kp: f64,
    /// Velocity gain (1/s).
    pub kd: f64,
    /// Limit on the applied acceleration magnitude (m/s^2).
    pub a_sat: f64,
    /// Per-axis standard deviation of the acceleration noise (m/s^2).
    pub accel_noise_std: f64,
    pub dt_sim: f64,
    pub seed: u64,
}

impl Default for PlantConfig {
    fn default() -> Self {
        Self {
            kp: 6.0,
            kd: 4.0,
            a_sat: 2.0,
            accel_noise_std: 0.3,
            dt_sim: 0.005,
            seed: 0,
        }
    }
}

impl PlantConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.kp > 0.0 && self.kd > 0.0 && self.dt_sim > 0.0) {
            return Err(Error::InvalidArgument("kp, kd and dt_sim must be positive".into()));
        }
        if !(self.a_sat > 0.0) || !(self.accel_noise_std >= 0.0) {
            return Err(Error::InvalidArgument("a_sat must be positive and noise nonnegative".into()));
        }
        Ok(())
    }
}

/// Advances the plant by one `dt_sim` step.
pub fn plant_step<R: Rng>(state: &PlantState, command: &KinematicState, config: &PlantConfig, rng: &mut R) -> PlantState {
    plant_step_dt(state, command, config, config.dt_sim, rng)
}

fn plant_step_dt<R: Rng>(
    state: &PlantState,
    command: &KinematicState,
    config: &PlantConfig,
    dt: f64,
    rng: &mut R,
) -> PlantState {
    let mut accel = command.acceleration
        + (command.position - state.position) * config.kp
        + (command.velocity - state.velocity) * config.kd;
    if config.accel_noise_std > 0.0 {
        for axis in 0..3 {
            let z: f64 = StandardNormal.sample(rng);
            accel[axis] += config.accel_noise_std * z;
        }
    }
    let magnitude = accel.norm();
    if magnitude > config.a_sat {
        accel *= config.a_sat / magnitude;
    }
    // semi-implicit Euler
    let velocity = state.velocity + accel * dt;
    PlantState {
        position: state.position + velocity * dt,
        velocity,
    }
}

/// Boundary data of one trajectory used for tracking-data collection.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrajectorySpec {
    pub start: BoundaryState,
    pub waypoints: WaypointPair,
}

/// Random planar trajectories resembling replanned plans.
///
/// Each spec starts moving in a random direction and turns by up to
/// `max_turn` radians at each waypoint. The whole spec is then scaled about its
/// start so that the trajectory's peak speed equals a target drawn uniformly
/// from `speed_range`. Scaling is exact because the trajectory is linear in
/// its boundary data, and it makes demanded acceleration grow with speed.
pub fn random_tracking_specs(
    n: usize,
    seed: u64,
    segment_duration: f64,
    speed_range: (f64, f64),
    max_turn: f64,
) -> Result<Vec<TrajectorySpec>> {
    let (lo, hi) = speed_range;
    if !(lo > 0.0 && lo <= hi && hi.is_finite()) || !(max_turn >= 0.0) {
        return Err(Error::InvalidArgument("speed range must satisfy 0 < min <= max".into()));
    }
    let solver = MinJerkSolver::new(segment_duration)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dir = |h: f64| Vec3::new(h.cos(), h.sin(), 0.0);
    let p0 = Vec3::new(0.0, 0.0, 1.0);
    let mut specs = Vec::with_capacity(n);
    while specs.len() < n {
        let target = rng.random_range(lo..=hi);
        let heading0 = rng.random_range(0.0..std::f64::consts::TAU);
        let heading1 = heading0 + rng.random_range(-max_turn..=max_turn);
        let heading2 = heading1 + rng.random_range(-max_turn..=max_turn);
        let v0 = dir(heading0) * rng.random_range(0.0..=1.0);
        let d1 = dir(heading1) * segment_duration * rng.random_range(0.3..=1.0);
        let d2 = dir(heading2) * segment_duration * rng.random_range(0.3..=1.0);
        let unit = solver.solve(
            &BoundaryState::new(p0, v0, Vec3::zeros()),
            &WaypointPair::new(p0 + d1, p0 + d1 + d2),
            &safety_terminal(),
        )?;
        let peak = max_speed(&unit, crate::minjerk::DEFAULT_DT);
        if !(peak > 1e-9) {
            continue;
        }
        let k = target / peak;
        specs.push(TrajectorySpec {
            start: BoundaryState::new(p0, v0 * k, Vec3::zeros()),
            waypoints: WaypointPair::new(p0 + d1 * k, p0 + (d1 + d2) * k),
        });
    }
    Ok(specs)
}

/// Runs the plant along `traj`, logging commanded and actual positions every `dt`.
pub fn track_trajectory<R: Rng>(
    traj: &TwoSegmentTrajectory,
    initial: PlantState,
    config: &PlantConfig,
    dt: f64,
    rng: &mut R,
) -> Result<(SampledPath, SampledPath)> {
    let times = crate::minjerk::sample_times(traj.horizon(), dt);
    let mut state = initial;
    let mut commanded = Vec::with_capacity(times.len());
    let mut actual = Vec::with_capacity(times.len());
    for (k, &t) in times.iter().enumerate() {
        commanded.push(traj.eval_clamped(t).position);
        actual.push(state.position);
        if let Some(&next) = times.get(k + 1) {
            let interval = next - t;
            let substeps = ((interval / config.dt_sim) - 1e-9).ceil().max(1.0) as usize;
            let h = interval / substeps as f64;
            for j in 0..substeps {
                let command = traj.eval_clamped(t + j as f64 * h);
                state = plant_step_dt(&state, &command, config, h, rng);
            }
        }
    }
    Ok((SampledPath::new(commanded, times.clone())?, SampledPath::new(actual, times)?))
}

/// Tracks every spec from a matching initial plant state and logs the result.
pub fn collect_tracking_data(
    config: &PlantConfig,
    specs: &[TrajectorySpec],
    segment_duration: f64,
    dt: f64,
) -> Result<Vec<TrackingLog>> {
    config.validate()?;
    if specs.is_empty() {
        return Err(Error::InvalidArgument("at least one trajectory spec is required".into()));
    }
    let solver = MinJerkSolver::new(segment_duration)?;
    specs
        .iter()
        .enumerate()
        .map(|(id, spec)| {
            let traj = solver.solve(&spec.start, &spec.waypoints, &safety_terminal())?;
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(id as u64);
            let initial = PlantState {
                position: spec.start.position,
                velocity: spec.start.velocity,
            };
            let (commanded, actual) = track_trajectory(&traj, initial, config, dt, &mut rng)?;
            Ok(TrackingLog {
                traj_id: id,
                commanded,
                actual,
            })
        })
        .collect()
}

/// Where a replanned trajectory takes its initial position from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ReplanOrigin {
    /// Measured plant position; velocity and acceleration from the current plan.
    #[default]
    Plant,
    /// Position, velocity and acceleration all from the current plan.
    Commanded,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunOptions {
    /// Simulated time between replans (s).
    pub replan_period: f64,
    /// Hard stop on simulated time (s).
    pub max_time: f64,
    /// Stop once this many laps are complete.
    pub n_laps: Option<usize>,
    /// No plan is produced at or after this simulated time.
    pub fail_planner_at: Option<f64>,
    pub replan_origin: ReplanOrigin,
    /// How far the previous second waypoint is pushed towards the goal when
    /// warm-starting a replan (m).
    pub warm_shift: f64,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            replan_period: 1.0,
            max_time: 60.0,
            n_laps: None,
            fail_planner_at: None,
            replan_origin: ReplanOrigin::Plant,
            warm_shift: 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunSample {
    pub t: f64,
    pub cmd_position: Vec3,
    pub act_position: Vec3,
    pub cmd_speed: f64,
    /// Signed clearance of the actual position.
    pub dist_obs: f64,
    pub progress: f64,
    pub collision: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CollisionEvent {
    pub t: f64,
    pub position: Vec3,
    pub obstacle: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReplanEvent {
    pub t: f64,
    pub goal: Vec3,
    pub start: BoundaryState,
    /// Commanded position of the superseded plan at the replan instant.
    pub previous_command: Vec3,
    pub waypoints: WaypointPair,
    pub v_max: f64,
    pub cost: f64,
    /// Wall-clock duration of the solve (s).
    pub wall_s: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunRecord {
    pub samples: Vec<RunSample>,
    pub collisions: Vec<CollisionEvent>,
    pub laps_completed: usize,
    pub lap_times: Vec<f64>,
    pub replans: Vec<ReplanEvent>,
    pub final_state: Option<PlantState>,
}

impl RunRecord {
    pub fn replan_durations(&self) -> Vec<f64> {
        self.replans.iter().map(|r| r.wall_s).collect()
    }

    /// Number of distinct collision episodes (entries into an obstacle).
    pub fn collision_episodes(&self) -> usize {
        self.samples
            .windows(2)
            .filter(|w| w[1].collision && !w[0].collision)
            .count()
            + usize::from(self.samples.first().is_some_and(|s| s.collision))
    }

    /// Writes `t,cmd_x,cmd_y,cmd_z,act_x,act_y,act_z,cmd_speed,dist_obs,progress,collision`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record([
            "t", "cmd_x", "cmd_y", "cmd_z", "act_x", "act_y", "act_z", "cmd_speed", "dist_obs", "progress",
            "collision",
        ])?;
        for s in &self.samples {
            out.write_record([
                s.t.to_string(),
                s.cmd_position.x.to_string(),
                s.cmd_position.y.to_string(),
                s.cmd_position.z.to_string(),
                s.act_position.x.to_string(),
                s.act_position.y.to_string(),
                s.act_position.z.to_string(),
                s.cmd_speed.to_string(),
                s.dist_obs.to_string(),
                s.progress.to_string(),
                u8::from(s.collision).to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Normalised arc length along the closed goal polyline.
///
/// A lap starts at the last goal, so the segment into goal `i` begins at goal
/// `i - 1` (wrapping). Within a segment the value never decreases.
#[derive(Clone, Debug)]
struct ProgressTracker {
    starts: Vec<f64>,
    total: f64,
    segment: usize,
    best: f64,
}

impl ProgressTracker {
    fn new(course: &Course) -> Self {
        let n = course.goals.len();
        let mut starts = Vec::with_capacity(n);
        let mut acc = 0.0;
        for i in 0..n {
            starts.push(acc);
            acc += (course.goals[i] - course.goals[(i + n - 1) % n]).xy().norm();
        }
        Self {
            starts,
            total: acc,
            segment: 0,
            best: 0.0,
        }
    }

    fn update(&mut self, course: &Course, active: usize, p: &Vec3) -> f64 {
        if self.total == 0.0 {
            return 0.0;
        }
        if active != self.segment {
            self.segment = active;
            self.best = 0.0;
        }
        let n = course.goals.len();
        let a = course.goals[(active + n - 1) % n].xy();
        let b = course.goals[active].xy();
        let ab = b - a;
        let len = ab.norm();
        let along = if len > 0.0 {
            ((p.xy() - a).dot(&ab) / len).clamp(0.0, len)
        } else {
            0.0
        };
        self.best = self.best.max(along);
        ((self.starts[active] + self.best) / self.total).clamp(0.0, 1.0)
    }
}

fn replan_seed(base: u64, index: usize) -> u64 {
    base.wrapping_add((index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Receding-horizon loop: replan every `replan_period`, track the newest plan.
///
/// Without a plan update (planner failure) the plant keeps following the last
/// trajectory and holds its final, resting state afterwards.
pub fn run_receding_horizon(
    course: &Course,
    planner: &Planner,
    plant_config: &PlantConfig,
    options: &RunOptions,
) -> Result<RunRecord> {
    plant_config.validate()?;
    if !(options.replan_period > 0.0) || !(options.max_time > 0.0) {
        return Err(Error::InvalidArgument("replan period and max time must be positive".into()));
    }
    let dt = plant_config.dt_sim;
    let steps_per_replan = ((options.replan_period / dt).round() as usize).max(1);
    let max_steps = (options.max_time / dt).round() as usize;

    let mut rng = ChaCha8Rng::seed_from_u64(plant_config.seed);
    let mut state = PlantState {
        position: course.start.position,
        velocity: course.start.velocity,
    };
    let mut tracker = GoalTracker::new();
    let mut progress = ProgressTracker::new(course);
    let mut record = RunRecord::default();
    let mut plan: Option<(f64, TwoSegmentTrajectory)> = None;
    let mut last_lap_time = 0.0;

    for step in 0..=max_steps {
        let t = step as f64 * dt;

        let update = tracker.advance_goal(course, &state.position);
        if update.lap_event {
            record.lap_times.push(t - last_lap_time);
            last_lap_time = t;
            record.laps_completed = tracker.laps_completed;
        }
        if options.n_laps.is_some_and(|n| tracker.laps_completed >= n) {
            break;
        }

        let planner_alive = options.fail_planner_at.map_or(true, |f| t < f);
        if step % steps_per_replan == 0 && planner_alive {
            let goal = tracker.active_goal(course);
            let (start, previous_command, warm) = match &plan {
                None => {
                    let start = BoundaryState::new(state.position, course.start.velocity, course.start.acceleration);
                    (start, state.position, warm_start(&state.position, &goal, WARM_START_REACH))
                }
                Some((t0, traj)) => {
                    let cmd = traj.eval_clamped(t - t0);
                    let position = match options.replan_origin {
                        ReplanOrigin::Plant => state.position,
                        ReplanOrigin::Commanded => cmd.position,
                    };
                    let start = BoundaryState::new(position, cmd.velocity, cmd.acceleration);
                    let warm = shifted_warm_start(traj, t - t0, &goal, options.warm_shift);
                    (start, cmd.position, warm)
                }
            };
            let solver = planner.with_seed(replan_seed(planner.config().seed, record.replans.len()));
            let solution = solver.solve(&start, course, &goal, &warm)?;
            record.replans.push(ReplanEvent {
                t,
                goal,
                start,
                previous_command,
                waypoints: solution.waypoints,
                v_max: max_speed(&solution.trajectory, planner.config().dt),
                cost: solution.cost,
                wall_s: solution.elapsed,
            });
            plan = Some((t, solution.trajectory));
        }

        let command = match &plan {
            Some((t0, traj)) => traj.eval_clamped(t - t0),
            None => KinematicState {
                position: state.position,
                velocity: Vec3::zeros(),
                acceleration: Vec3::zeros(),
                jerk: Vec3::zeros(),
            },
        };

        let hit = course.colliding_obstacle(&state.position);
        if let Some(obstacle) = hit {
            record.collisions.push(CollisionEvent {
                t,
                position: state.position,
                obstacle,
            });
        }
        record.samples.push(RunSample {
            t,
            cmd_position: command.position,
            act_position: state.position,
            cmd_speed: command.velocity.norm(),
            dist_obs: course.clearance(&state.position),
            progress: progress.update(course, tracker.active_index, &state.position),
            collision: hit.is_some(),
        });

        if step == max_steps {
            break;
        }
        state = plant_step(&state, &command, plant_config, &mut rng);
    }
    record.final_state = Some(state);
    Ok(record)
}

/// Warm start for a replan `elapsed` seconds into the previous trajectory.
///
/// The first waypoint is the old trajectory's position one segment ahead;
/// the second is the old second waypoint moved up to `shift` towards `goal`.
pub fn shifted_warm_start(prev: &TwoSegmentTrajectory, elapsed: f64, goal: &Vec3, shift: f64) -> WaypointPair {
    let r1 = prev.eval_clamped(elapsed + prev.segment_duration()).position;
    let old_r2 = prev.eval_clamped(prev.horizon()).position;
    let to_goal = goal - old_r2;
    let dist = to_goal.norm();
    let r2 = if dist > 0.0 {
        old_r2 + to_goal * (dist.min(shift) / dist)
    } else {
        old_r2
    };
    WaypointPair::new(r1, r2)
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegionStats {
    pub name: String,
    pub mean_speed: f64,
    pub max_speed: f64,
    pub samples: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LapSummary {
    pub collision_count: usize,
    pub collision_steps: usize,
    pub laps: usize,
    pub lap_times: Vec<f64>,
    pub regions: Vec<RegionStats>,
    pub mean_replan_s: f64,
    pub min_clearance: f64,
    /// `(progress, clearance)` for every simulation step.
    pub profile: Vec<(f64, f64)>,
}

impl LapSummary {
    pub fn from_record(course: &Course, record: &RunRecord) -> Self {
        let regions = course
            .regions
            .iter()
            .map(|region| {
                let speeds: Vec<f64> = record
                    .samples
                    .iter()
                    .filter(|s| region.bounds.contains(&s.cmd_position))
                    .map(|s| s.cmd_speed)
                    .collect();
                let mean_speed = if speeds.is_empty() {
                    f64::NAN
                } else {
                    speeds.iter().sum::<f64>() / speeds.len() as f64
                };
                RegionStats {
                    name: region.name.clone(),
                    mean_speed,
                    max_speed: speeds.iter().copied().fold(0.0, f64::max),
                    samples: speeds.len(),
                }
            })
            .collect();
        let durations = record.replan_durations();
        Self {
            collision_count: record.collision_episodes(),
            collision_steps: record.collisions.len(),
            laps: record.laps_completed,
            lap_times: record.lap_times.clone(),
            regions,
            mean_replan_s: if durations.is_empty() {
                0.0
            } else {
                durations.iter().sum::<f64>() / durations.len() as f64
            },
            min_clearance: record.samples.iter().map(|s| s.dist_obs).fold(f64::INFINITY, f64::min),
            profile: record.samples.iter().map(|s| (s.progress, s.dist_obs)).collect(),
        }
    }

    pub fn region(&self, name: &str) -> Option<&RegionStats> {
        self.regions.iter().find(|r| r.name == name)
    }

    /// Key-value text: `collisions=`, `laps=`, `mean_replan_s=`, lap times, region speeds.
    pub fn write_text<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "collisions={}", self.collision_count)?;
        writeln!(out, "collision_steps={}", self.collision_steps)?;
        writeln!(out, "laps={}", self.laps)?;
        writeln!(out, "mean_replan_s={}", self.mean_replan_s)?;
        writeln!(out, "min_clearance={}", self.min_clearance)?;
        for (i, t) in self.lap_times.iter().enumerate() {
            writeln!(out, "lap_time_{}={}", i + 1, t)?;
        }
        for r in &self.regions {
            writeln!(out, "region_{}_mean_speed={}", r.name, r.mean_speed)?;
            writeln!(out, "region_{}_max_speed={}", r.name, r.max_speed)?;
            writeln!(out, "region_{}_samples={}", r.name, r.samples)?;
        }
        Ok(())
    }
}

/// Runs `n_laps` laps with or without the risk term.
///
/// Collisions are recorded and the vehicle keeps flying. The run also stops
/// after `options.max_time` if the laps are not completed by then.
pub fn run_laps(
    course: &Course,
    n_laps: usize,
    risk_enabled: bool,
    planner: &Planner,
    plant_config: &PlantConfig,
    options: &RunOptions,
) -> Result<(RunRecord, LapSummary)> {
    let planner = if risk_enabled {
        if planner.risk_model().is_none() {
            return Err(Error::Config("risk enabled but no risk model supplied".into()));
        }
        planner.clone()
    } else {
        Planner::new(planner.config().clone(), *planner.weights(), None)?
    };
    let options = RunOptions {
        n_laps: Some(n_laps),
        ..options.clone()
    };
    let record = run_receding_horizon(course, &planner, plant_config, &options)?;
    let summary = LapSummary::from_record(course, &record);
    Ok((record, summary))
}
