//! Sampling-based waypoint optimisation.
//!
//! The decision variables are the two waypoints of a minimum-jerk trajectory.
//! Each iteration perturbs their `xy` coordinates with `N` Gaussian samples,
//! scores every perturbed trajectory, and moves the waypoints by the
//! exponentially weighted mean of the perturbations:
//!
//! ```text
//! R_{k+1} = R_k + sum_i w_i E_i,   w_i ∝ exp(-beta (S_i - min_j S_j))
//! ```
//!
//! Candidate scoring is independent per sample and runs on the rayon pool;
//! the random stream of sample `i` in iteration `k` depends only on
//! `(seed, k, i)`, so results do not depend on the number of workers.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::environment::{min_distance_points, obstacle_cost_points, Course, Vec2};
use crate::error::{Error, Result};
use crate::minjerk::{
    safety_terminal, BoundaryState, MinJerkSolver, TwoSegmentTrajectory, Vec3, WaypointPair, DEFAULT_DT,
};
use crate::risk::{predict_dhat, risk_measure, RiskModel};

/// Distance cap for the straight-line warm start (m).
pub const WARM_START_REACH: f64 = 2.0;

/// `xy` offsets applied to the two waypoints.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PerturbationSet {
    pub eps1: Vec2,
    pub eps2: Vec2,
}

impl PerturbationSet {
    /// The offsets as 3-D vectors; `z` is never perturbed.
    pub fn offsets(&self) -> (Vec3, Vec3) {
        (
            Vec3::new(self.eps1.x, self.eps1.y, 0.0),
            Vec3::new(self.eps2.x, self.eps2.y, 0.0),
        )
    }

    pub fn apply(&self, waypoints: &WaypointPair) -> WaypointPair {
        let (e1, e2) = self.offsets();
        WaypointPair::new(waypoints.r1 + e1, waypoints.r2 + e2)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MppiConfig {
    pub n_samples: usize,
    pub n_iter: usize,
    /// Standard deviation of the `x` and `y` offsets (m).
    pub sigma: [f64; 2],
    /// Inverse temperature applied to min-shifted costs.
    pub beta: f64,
    pub seed: u64,
    /// Trajectory discretisation step (s).
    pub dt: f64,
    /// Duration of each of the two segments (s).
    pub segment_duration: f64,
}

impl Default for MppiConfig {
    fn default() -> Self {
        Self {
            n_samples: 50,
            n_iter: 200,
            sigma: [0.15, 0.15],
            beta: 1.0,
            seed: 0,
            dt: DEFAULT_DT,
            segment_duration: 2.5,
        }
    }
}

impl MppiConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples < 1 || self.n_iter < 1 {
            return Err(Error::InvalidArgument("n_samples and n_iter must be at least 1".into()));
        }
        if self.sigma.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
            return Err(Error::InvalidArgument(format!("sigma must be nonnegative, got {:?}", self.sigma)));
        }
        if !(self.beta > 0.0) || !self.beta.is_finite() {
            return Err(Error::InvalidArgument(format!("beta must be positive, got {}", self.beta)));
        }
        if !(self.dt > 0.0) || !(self.segment_duration > 0.0) {
            return Err(Error::InvalidArgument("dt and segment duration must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CostWeights {
    /// Terminal goal-distance weight (cost per m).
    pub w_g: f64,
    /// Time-in-obstacle weight (cost per s).
    pub w_obs: f64,
    /// Risk weight (cost per s).
    pub w_rho: f64,
    /// Cost per sample violating a limit.
    pub w_ct: f64,
    pub v_limit: f64,
    pub a_limit: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        Self {
            w_g: 10.0,
            w_obs: 1e4,
            w_rho: 100.0,
            w_ct: 1e3,
            v_limit: 4.0,
            a_limit: 8.0,
        }
    }
}

impl CostWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.w_g, self.w_obs, self.w_rho, self.w_ct, self.v_limit, self.a_limit];
        if all.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::InvalidArgument("cost weights and limits must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Draws the perturbation of sample `index` in iteration `iteration`.
pub fn perturbation(config: &MppiConfig, iteration: usize, index: usize) -> PerturbationSet {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(((iteration as u64) << 32) | (index as u64 & 0xffff_ffff));
    let mut draw = |sigma: f64| {
        let z: f64 = StandardNormal.sample(&mut rng);
        sigma * z
    };
    let eps1 = Vec2::new(draw(config.sigma[0]), draw(config.sigma[1]));
    let eps2 = Vec2::new(draw(config.sigma[0]), draw(config.sigma[1]));
    PerturbationSet { eps1, eps2 }
}

pub fn sample_perturbations(config: &MppiConfig, iteration: usize) -> Vec<PerturbationSet> {
    (0..config.n_samples)
        .map(|i| perturbation(config, iteration, i))
        .collect()
}

pub fn terminal_cost(final_position: &Vec3, goal: &Vec3, w_g: f64) -> f64 {
    w_g * (final_position - goal).norm()
}

/// `w_ct` times the number of samples over the speed or acceleration limit.
pub fn constraint_cost(velocities: &[Vec3], accelerations: &[Vec3], v_limit: f64, a_limit: f64, w_ct: f64) -> f64 {
    let violations = velocities
        .iter()
        .zip(accelerations)
        .filter(|(v, a)| v.norm() > v_limit || a.norm() > a_limit)
        .count();
    w_ct * violations as f64
}

/// The four components of the trajectory cost.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CostBreakdown {
    pub terminal: f64,
    pub obstacle: f64,
    pub risk: f64,
    pub constraint: f64,
}

impl CostBreakdown {
    pub fn total(&self) -> f64 {
        self.terminal + self.obstacle + self.risk + self.constraint
    }
}

/// Scores a trajectory.
///
/// The risk measure depends on whole-trajectory quantities (peak speed and
/// clearance), so its running-cost integral is `w_rho * rho * 2T`. Without a
/// risk model the risk term is zero.
pub fn cost_breakdown(
    traj: &TwoSegmentTrajectory,
    course: &Course,
    goal: &Vec3,
    weights: &CostWeights,
    risk_model: Option<&RiskModel>,
    dt: f64,
) -> CostBreakdown {
    let samples = traj.sample(dt);
    let end = samples.positions.last().expect("trajectory samples are never empty");
    let risk = match risk_model {
        Some(model) if weights.w_rho > 0.0 => {
            let v_max = samples.velocities.iter().map(|v| v.norm()).fold(0.0, f64::max);
            let d_obs = min_distance_points(course, &samples.positions);
            weights.w_rho * risk_measure(predict_dhat(model, v_max), d_obs) * traj.horizon()
        }
        _ => 0.0,
    };
    CostBreakdown {
        terminal: terminal_cost(end, goal, weights.w_g),
        obstacle: obstacle_cost_points(course, &samples.positions, &samples.times, weights.w_obs),
        risk,
        constraint: constraint_cost(
            &samples.velocities,
            &samples.accelerations,
            weights.v_limit,
            weights.a_limit,
            weights.w_ct,
        ),
    }
}

pub fn total_cost(
    traj: &TwoSegmentTrajectory,
    course: &Course,
    goal: &Vec3,
    weights: &CostWeights,
    risk_model: Option<&RiskModel>,
    dt: f64,
) -> f64 {
    cost_breakdown(traj, course, goal, weights, risk_model, dt).total()
}

/// Normalised exponential weights of the sample costs.
///
/// Non-finite costs get weight zero; it is an error if no cost is finite.
pub fn compute_weights(costs: &[f64], beta: f64) -> Result<Vec<f64>> {
    let min = costs
        .iter()
        .copied()
        .filter(|c| c.is_finite())
        .fold(f64::INFINITY, f64::min);
    if !min.is_finite() {
        return Err(Error::Domain("no finite sample cost".into()));
    }
    let mut weights: Vec<f64> = costs
        .iter()
        .map(|&c| if c.is_finite() { (-beta * (c - min)).exp() } else { 0.0 })
        .collect();
    // the minimum contributes exp(0) = 1, so the sum is at least 1
    let eta: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= eta);
    Ok(weights)
}

/// Moves both waypoints by the weighted mean perturbation.
pub fn update_waypoints(waypoints: &WaypointPair, perturbations: &[PerturbationSet], weights: &[f64]) -> WaypointPair {
    assert_eq!(perturbations.len(), weights.len(), "one weight per perturbation");
    let mut d1 = Vec2::zeros();
    let mut d2 = Vec2::zeros();
    for (p, w) in perturbations.iter().zip(weights) {
        d1 += p.eps1 * *w;
        d2 += p.eps2 * *w;
    }
    PerturbationSet { eps1: d1, eps2: d2 }.apply(waypoints)
}

/// Waypoints on the segment towards `goal`, at half and full reach.
pub fn warm_start(start: &Vec3, goal: &Vec3, reach: f64) -> WaypointPair {
    let delta = goal - start;
    let dist = delta.norm();
    if dist == 0.0 {
        return WaypointPair::new(*start, *start);
    }
    let step = delta * (dist.min(reach) / dist);
    WaypointPair::new(start + step * 0.5, start + step)
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub waypoints: WaypointPair,
    pub trajectory: TwoSegmentTrajectory,
    pub cost: f64,
    /// Cost of the running estimate, before the first and after every iteration.
    pub cost_trace: Vec<f64>,
    /// Wall-clock duration of the whole solve (s).
    pub elapsed: f64,
    /// Wall-clock duration of each iteration (s).
    pub iteration_elapsed: Vec<f64>,
}

/// A configured optimiser; reusable across solves.
#[derive(Clone, Debug)]
pub struct Planner {
    solver: MinJerkSolver,
    config: MppiConfig,
    weights: CostWeights,
    risk_model: Option<RiskModel>,
}

impl Planner {
    pub fn new(config: MppiConfig, weights: CostWeights, risk_model: Option<RiskModel>) -> Result<Self> {
        config.validate()?;
        weights.validate()?;
        Ok(Self {
            solver: MinJerkSolver::new(config.segment_duration)?,
            config,
            weights,
            risk_model,
        })
    }

    pub fn config(&self) -> &MppiConfig {
        &self.config
    }

    pub fn weights(&self) -> &CostWeights {
        &self.weights
    }

    pub fn risk_model(&self) -> Option<&RiskModel> {
        self.risk_model.as_ref()
    }

    /// Copy of this planner with a different seed.
    pub fn with_seed(&self, seed: u64) -> Self {
        let mut p = self.clone();
        p.config.seed = seed;
        p
    }

    pub fn trajectory(&self, start: &BoundaryState, waypoints: &WaypointPair) -> Result<TwoSegmentTrajectory> {
        self.solver.solve(start, waypoints, &safety_terminal())
    }

    pub fn breakdown(&self, traj: &TwoSegmentTrajectory, course: &Course, goal: &Vec3) -> CostBreakdown {
        cost_breakdown(traj, course, goal, &self.weights, self.risk_model.as_ref(), self.config.dt)
    }

    /// Cost of the trajectory through `waypoints`; infinite if it cannot be built.
    pub fn evaluate(&self, start: &BoundaryState, waypoints: &WaypointPair, course: &Course, goal: &Vec3) -> f64 {
        match self.trajectory(start, waypoints) {
            Ok(traj) => self.breakdown(&traj, course, goal).total(),
            Err(_) => f64::INFINITY,
        }
    }

    pub fn solve(
        &self,
        start: &BoundaryState,
        course: &Course,
        goal: &Vec3,
        warm: &WaypointPair,
    ) -> Result<Solution> {
        let started = Instant::now();
        let mut waypoints = *warm;
        let mut cost_trace = Vec::with_capacity(self.config.n_iter + 1);
        let mut iteration_elapsed = Vec::with_capacity(self.config.n_iter);
        cost_trace.push(self.evaluate(start, &waypoints, course, goal));

        for k in 0..self.config.n_iter {
            let iter_start = Instant::now();
            let perturbations = sample_perturbations(&self.config, k);
            let costs: Vec<f64> = perturbations
                .par_iter()
                .map(|p| self.evaluate(start, &p.apply(&waypoints), course, goal))
                .collect();
            let weights = compute_weights(&costs, self.config.beta)?;
            waypoints = update_waypoints(&waypoints, &perturbations, &weights);
            cost_trace.push(self.evaluate(start, &waypoints, course, goal));
            iteration_elapsed.push(iter_start.elapsed().as_secs_f64());
        }

        let trajectory = self.trajectory(start, &waypoints)?;
        Ok(Solution {
            waypoints,
            trajectory,
            cost: *cost_trace.last().expect("trace holds the initial cost"),
            cost_trace,
            elapsed: started.elapsed().as_secs_f64(),
            iteration_elapsed,
        })
    }
}

/// One-shot solve with a freshly built [`Planner`].
pub fn solve(
    start: &BoundaryState,
    course: &Course,
    goal: &Vec3,
    warm: &WaypointPair,
    config: &MppiConfig,
    weights: &CostWeights,
    risk_model: Option<&RiskModel>,
) -> Result<Solution> {
    Planner::new(config.clone(), *weights, risk_model.copied())?.solve(start, course, goal, warm)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn empty_course(start: Vec3, goal: Vec3) -> Course {
        Course::new(vec![], BoundaryState::at_rest(start), vec![goal]).unwrap()
    }

    #[test]
    fn zero_sigma_gives_zero_offsets() {
        let cfg = MppiConfig { sigma: [0.0, 0.0], ..Default::default() };
        for p in sample_perturbations(&cfg, 3) {
            assert_eq!(p.eps1.norm(), 0.0);
            assert_eq!(p.eps2.norm(), 0.0);
            let (a, b) = p.offsets();
            assert_eq!((a.z, b.z), (0.0, 0.0));
        }
    }

    #[test]
    fn perturbations_depend_on_iteration_and_index() {
        let cfg = MppiConfig::default();
        assert_eq!(perturbation(&cfg, 2, 7), perturbation(&cfg, 2, 7));
        assert_ne!(perturbation(&cfg, 2, 7), perturbation(&cfg, 2, 8));
        assert_ne!(perturbation(&cfg, 2, 7), perturbation(&cfg, 3, 7));
        let other_seed = MppiConfig { seed: 1, ..cfg.clone() };
        assert_ne!(perturbation(&cfg, 2, 7), perturbation(&other_seed, 2, 7));
    }

    #[test]
    fn terminal_cost_examples() {
        let g = Vec3::new(1.0, 2.0, 3.0);
        assert_eq!(terminal_cost(&g, &g, 10.0), 0.0);
        assert_eq!(terminal_cost(&Vec3::new(1.0, 4.0, 3.0), &g, 10.0), 20.0);
        assert_eq!(terminal_cost(&Vec3::new(1.0, 4.0, 3.0), &g, 5.0), 10.0);
    }

    #[test]
    fn constraint_cost_counts_violations() {
        let v: Vec<Vec3> = [1.0, 5.0, 2.0, 4.5, 0.0].iter().map(|s| Vec3::new(*s, 0.0, 0.0)).collect();
        let mut a = vec![Vec3::zeros(); 5];
        a[4] = Vec3::new(0.0, 9.0, 0.0);
        assert_eq!(constraint_cost(&v, &a, 4.0, 8.0, 1e3), 3e3);
        assert_eq!(constraint_cost(&v, &a, 10.0, 10.0, 1e3), 0.0);
        let looser = constraint_cost(&v, &a, 4.8, 8.0, 1.0);
        let tighter = constraint_cost(&v, &a, 1.5, 8.0, 1.0);
        assert!(tighter >= looser);
    }

    #[test]
    fn weights_examples() {
        let w = compute_weights(&[3.0; 4], 1.0).unwrap();
        assert!(w.iter().all(|x| (*x - 0.25).abs() < 1e-15));

        let w = compute_weights(&[0.0, 2f64.ln()], 1.0).unwrap();
        assert!((w[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((w[1] - 1.0 / 3.0).abs() < 1e-15);

        let base = [0.5, 1.25, 3.0, 0.75];
        let shifted: Vec<f64> = base.iter().map(|c| c + 1e6).collect();
        let w1 = compute_weights(&base, 1.0).unwrap();
        let w2 = compute_weights(&shifted, 1.0).unwrap();
        assert!(w1.iter().zip(&w2).all(|(a, b)| (a - b).abs() <= 1e-12));
    }

    #[test]
    fn weights_handle_non_finite_costs() {
        let w = compute_weights(&[1.0, f64::INFINITY, f64::NAN, 1.0], 1.0).unwrap();
        assert_eq!(w, vec![0.5, 0.0, 0.0, 0.5]);
        assert!(compute_weights(&[f64::NAN, f64::INFINITY], 1.0).is_err());
    }

    #[test]
    fn update_examples() {
        let r = WaypointPair::new(Vec3::new(1.0, 2.0, 3.0), Vec3::new(4.0, 5.0, 6.0));
        let zero = vec![PerturbationSet::default(); 3];
        assert_eq!(update_waypoints(&r, &zero, &[0.2, 0.3, 0.5]), r);

        let p = PerturbationSet { eps1: Vec2::new(0.1, -0.2), eps2: Vec2::new(0.3, 0.4) };
        let one = update_waypoints(&r, &[p], &[1.0]);
        assert_eq!(one, p.apply(&r));
        assert_eq!(one.r1.z, 3.0);
        assert_eq!(one.r2.z, 6.0);

        let neg = PerturbationSet { eps1: -p.eps1, eps2: -p.eps2 };
        assert_eq!(update_waypoints(&r, &[p, neg], &[0.5, 0.5]), r);
    }

    #[test]
    fn stationary_at_goal_costs_nothing() {
        let goal = Vec3::new(1.0, 1.0, 1.0);
        let course = empty_course(goal, goal);
        let planner = Planner::new(MppiConfig::default(), CostWeights::default(), None).unwrap();
        let start = BoundaryState::at_rest(goal);
        let traj = planner.trajectory(&start, &WaypointPair::new(goal, goal)).unwrap();
        assert_eq!(planner.breakdown(&traj, &course, &goal).total(), 0.0);
    }

    #[test]
    fn zero_sigma_is_a_fixed_point() {
        let course = empty_course(Vec3::zeros(), Vec3::new(3.0, 0.0, 0.0));
        let cfg = MppiConfig { sigma: [0.0, 0.0], n_iter: 7, ..Default::default() };
        let warm = WaypointPair::new(Vec3::new(0.4, 0.3, 0.0), Vec3::new(1.1, -0.2, 0.0));
        let sol = solve(
            &course.start,
            &course,
            &course.goals[0],
            &warm,
            &cfg,
            &CostWeights::default(),
            None,
        )
        .unwrap();
        assert_eq!(sol.waypoints, warm);
        assert_eq!(sol.cost_trace.len(), 8);
        assert_eq!(sol.iteration_elapsed.len(), 7);
    }

    #[test]
    fn warm_start_caps_reach() {
        let w = warm_start(&Vec3::zeros(), &Vec3::new(10.0, 0.0, 0.0), 2.0);
        assert_eq!(w.r1, Vec3::new(1.0, 0.0, 0.0));
        assert_eq!(w.r2, Vec3::new(2.0, 0.0, 0.0));
        let near = warm_start(&Vec3::zeros(), &Vec3::new(0.0, 1.0, 0.0), 2.0);
        assert_eq!(near.r2, Vec3::new(0.0, 1.0, 0.0));
    }

    #[test]
    fn config_validation() {
        assert!(MppiConfig { n_samples: 0, ..Default::default() }.validate().is_err());
        assert!(MppiConfig { beta: 0.0, ..Default::default() }.validate().is_err());
        assert!(MppiConfig { sigma: [-0.1, 0.1], ..Default::default() }.validate().is_err());
        assert!(CostWeights { w_g: -1.0, ..Default::default() }.validate().is_err());
    }
}
