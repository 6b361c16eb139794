//! Obstacle course geometry.
//!
//! The world is 2.5-D: obstacles are planar shapes in `xy` extruded along
//! `z`, so every query uses only the `x` and `y` coordinates of a point.
//! Obstacles are closed sets; a point on the boundary is in collision.

use std::collections::HashSet;

use nalgebra::Vector2;

use crate::error::{Error, Result};
use crate::minjerk::{BoundaryState, Vec3};
use crate::risk::SampledPath;

pub type Vec2 = Vector2<f64>;

/// Default goal switching radius (m).
pub const DEFAULT_GOAL_RADIUS: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Obstacle {
    /// Axis-aligned rectangle.
    Box { center: Vec2, half_extent: Vec2 },
    /// Vertical cylinder.
    Cylinder { center: Vec2, radius: f64 },
}

impl Obstacle {
    pub fn new_box(center: Vec2, half_extent: Vec2) -> Result<Self> {
        if !(half_extent.x > 0.0 && half_extent.y > 0.0) || !finite2(&center) || !finite2(&half_extent) {
            return Err(Error::Validation(format!(
                "box half extents must be positive, got ({}, {})",
                half_extent.x, half_extent.y
            )));
        }
        Ok(Obstacle::Box { center, half_extent })
    }

    pub fn new_cylinder(center: Vec2, radius: f64) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() || !finite2(&center) {
            return Err(Error::Validation(format!("cylinder radius must be positive, got {radius}")));
        }
        Ok(Obstacle::Cylinder { center, radius })
    }

    /// True when `p` lies in the closed obstacle region.
    pub fn contains(&self, p: &Vec3) -> bool {
        contains(self, p)
    }

    /// Signed distance from `p` to the obstacle surface, negative inside.
    pub fn distance_to_surface(&self, p: &Vec3) -> f64 {
        distance_to_surface(self, p)
    }
}

pub fn contains(obstacle: &Obstacle, p: &Vec3) -> bool {
    match *obstacle {
        Obstacle::Box { center, half_extent } => {
            (p.x - center.x).abs() <= half_extent.x && (p.y - center.y).abs() <= half_extent.y
        }
        // hypot keeps this consistent with distance_to_surface
        Obstacle::Cylinder { center, radius } => (p.x - center.x).hypot(p.y - center.y) <= radius,
    }
}

pub fn distance_to_surface(obstacle: &Obstacle, p: &Vec3) -> f64 {
    match *obstacle {
        Obstacle::Box { center, half_extent } => {
            let qx = (p.x - center.x).abs() - half_extent.x;
            let qy = (p.y - center.y).abs() - half_extent.y;
            let outside = qx.max(0.0).hypot(qy.max(0.0));
            let inside = qx.max(qy).min(0.0);
            outside + inside
        }
        Obstacle::Cylinder { center, radius } => (p.x - center.x).hypot(p.y - center.y) - radius,
    }
}

/// Planar bounds of the world.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bounds {
    pub xmin: f64,
    pub xmax: f64,
    pub ymin: f64,
    pub ymax: f64,
}

impl Bounds {
    pub fn unbounded() -> Self {
        Self {
            xmin: f64::NEG_INFINITY,
            xmax: f64::INFINITY,
            ymin: f64::NEG_INFINITY,
            ymax: f64::INFINITY,
        }
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        p.x >= self.xmin && p.x <= self.xmax && p.y >= self.ymin && p.y <= self.ymax
    }
}

/// Named rectangle used to aggregate statistics (e.g. a gap or a corridor).
#[derive(Clone, Debug, PartialEq)]
pub struct Region {
    pub name: String,
    pub bounds: Bounds,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Course {
    pub obstacles: Vec<Obstacle>,
    pub start: BoundaryState,
    pub goals: Vec<Vec3>,
    pub goal_radius: f64,
    pub bounds: Bounds,
    pub regions: Vec<Region>,
}

impl Course {
    /// Builds a course and checks its invariants.
    pub fn new(obstacles: Vec<Obstacle>, start: BoundaryState, goals: Vec<Vec3>) -> Result<Self> {
        let course = Self {
            obstacles,
            start,
            goals,
            goal_radius: DEFAULT_GOAL_RADIUS,
            bounds: Bounds::unbounded(),
            regions: Vec::new(),
        };
        course.validate()?;
        Ok(course)
    }

    pub fn validate(&self) -> Result<()> {
        if self.goals.is_empty() {
            return Err(Error::Validation("course needs at least one goal".into()));
        }
        if !(self.goal_radius > 0.0) {
            return Err(Error::Validation(format!("goal radius must be positive, got {}", self.goal_radius)));
        }
        if !self.start.is_finite() {
            return Err(Error::Validation("start state must be finite".into()));
        }
        if let Some(idx) = self.obstacles.iter().position(|o| o.contains(&self.start.position)) {
            return Err(Error::Validation(format!("start lies inside obstacle {idx}")));
        }
        if !self.bounds.contains(&self.start.position) {
            return Err(Error::Validation("start lies outside the world bounds".into()));
        }
        Ok(())
    }

    /// Signed distance from a point to the nearest obstacle; `+inf` if none.
    pub fn clearance(&self, p: &Vec3) -> f64 {
        self.obstacles
            .iter()
            .map(|o| o.distance_to_surface(p))
            .fold(f64::INFINITY, f64::min)
    }

    /// Index of the first obstacle containing `p`.
    pub fn colliding_obstacle(&self, p: &Vec3) -> Option<usize> {
        self.obstacles.iter().position(|o| o.contains(p))
    }

    pub fn region(&self, name: &str) -> Option<&Region> {
        self.regions.iter().find(|r| r.name == name)
    }
}

/// Clearance of a point sequence, floored at zero; `+inf` without obstacles.
pub fn min_distance_points(course: &Course, points: &[Vec3]) -> f64 {
    if course.obstacles.is_empty() {
        return f64::INFINITY;
    }
    let mut best = f64::INFINITY;
    for p in points {
        for o in &course.obstacles {
            best = best.min(o.distance_to_surface(p));
        }
    }
    best.max(0.0)
}

/// Distance from a path to the nearest obstacle surface (`d_obs`).
pub fn min_distance(course: &Course, path: &SampledPath) -> f64 {
    min_distance_points(course, path.points())
}

/// Left-rectangle quadrature of the summed obstacle indicators.
///
/// Each sample contributes the interval to the next timestamp, so a path
/// spending its whole horizon inside one obstacle integrates to the horizon.
pub fn obstacle_cost_points(course: &Course, points: &[Vec3], times: &[f64], w_obs: f64) -> f64 {
    let mut inside_time = 0.0;
    for (p, t) in points.iter().zip(times.windows(2)) {
        let hits = course.obstacles.iter().filter(|o| o.contains(p)).count();
        if hits > 0 {
            inside_time += hits as f64 * (t[1] - t[0]);
        }
    }
    w_obs * inside_time
}

pub fn obstacle_cost(course: &Course, path: &SampledPath, w_obs: f64) -> f64 {
    obstacle_cost_points(course, path.points(), path.timestamps(), w_obs)
}

/// Sequential goal commanding.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct GoalTracker {
    pub active_index: usize,
    pub laps_completed: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GoalUpdate {
    pub goal: Vec3,
    /// The tracker wrapped from the last goal back to the first.
    pub lap_event: bool,
    /// The active goal changed.
    pub advanced: bool,
}

impl GoalTracker {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn active_goal(&self, course: &Course) -> Vec3 {
        course.goals[self.active_index]
    }

    /// Switches to the next goal once `p` is within the goal radius.
    pub fn advance_goal(&mut self, course: &Course, p: &Vec3) -> GoalUpdate {
        let goal = course.goals[self.active_index];
        let mut lap_event = false;
        let mut advanced = false;
        if (p - goal).norm() <= course.goal_radius {
            advanced = true;
            self.active_index += 1;
            if self.active_index == course.goals.len() {
                self.active_index = 0;
                self.laps_completed += 1;
                lap_event = true;
            }
        }
        GoalUpdate {
            goal: course.goals[self.active_index],
            lap_event,
            advanced,
        }
    }
}

/// Parses the line-oriented course format.
///
/// ```text
/// bounds <xmin> <xmax> <ymin> <ymax>
/// start <x> <y> <z> <vx> <vy> <vz>
/// box <cx> <cy> <hx> <hy>
/// cylinder <cx> <cy> <r>
/// goal <x> <y> <z>
/// goal_radius <r>
/// region <name> <xmin> <xmax> <ymin> <ymax>
/// ```
///
/// `#` starts a comment. `bounds`, `start` and `goal_radius` may appear once.
pub fn load_course(text: &str) -> Result<Course> {
    let mut obstacles = Vec::new();
    let mut goals = Vec::new();
    let mut regions: Vec<Region> = Vec::new();
    let mut start = None;
    let mut bounds = None;
    let mut goal_radius = None;
    let mut seen = HashSet::new();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut tokens = content.split_whitespace();
        let key = tokens.next().unwrap_or_default();
        let rest: Vec<&str> = tokens.collect();
        if matches!(key, "bounds" | "start" | "goal_radius") && !seen.insert(key) {
            return Err(Error::parse(line_no, format!("duplicate '{key}'")));
        }
        match key {
            "bounds" => {
                let v = numbers(&rest, 4, key, line_no)?;
                if !(v[0] < v[1] && v[2] < v[3]) {
                    return Err(Error::parse(line_no, "bounds need xmin < xmax and ymin < ymax"));
                }
                bounds = Some(Bounds { xmin: v[0], xmax: v[1], ymin: v[2], ymax: v[3] });
            }
            "start" => {
                let v = numbers(&rest, 6, key, line_no)?;
                start = Some(BoundaryState::new(
                    Vec3::new(v[0], v[1], v[2]),
                    Vec3::new(v[3], v[4], v[5]),
                    Vec3::zeros(),
                ));
            }
            "box" => {
                let v = numbers(&rest, 4, key, line_no)?;
                let o = Obstacle::new_box(Vec2::new(v[0], v[1]), Vec2::new(v[2], v[3]))
                    .map_err(|e| Error::parse(line_no, e.to_string()))?;
                obstacles.push(o);
            }
            "cylinder" => {
                let v = numbers(&rest, 3, key, line_no)?;
                let o = Obstacle::new_cylinder(Vec2::new(v[0], v[1]), v[2])
                    .map_err(|e| Error::parse(line_no, e.to_string()))?;
                obstacles.push(o);
            }
            "goal" => {
                let v = numbers(&rest, 3, key, line_no)?;
                goals.push(Vec3::new(v[0], v[1], v[2]));
            }
            "goal_radius" => {
                let v = numbers(&rest, 1, key, line_no)?;
                if !(v[0] > 0.0) {
                    return Err(Error::parse(line_no, "goal_radius must be positive"));
                }
                goal_radius = Some(v[0]);
            }
            "region" => {
                let (name, coords) = rest
                    .split_first()
                    .ok_or_else(|| Error::parse(line_no, "region needs a name and 4 numbers"))?;
                if regions.iter().any(|r| r.name == *name) {
                    return Err(Error::parse(line_no, format!("duplicate region '{name}'")));
                }
                let v = numbers(coords, 4, key, line_no)?;
                regions.push(Region {
                    name: (*name).to_string(),
                    bounds: Bounds { xmin: v[0], xmax: v[1], ymin: v[2], ymax: v[3] },
                });
            }
            other => return Err(Error::parse(line_no, format!("unknown key '{other}'"))),
        }
    }

    let start = start.ok_or_else(|| Error::parse(0, "missing 'start' line"))?;
    if goals.is_empty() {
        return Err(Error::parse(0, "missing 'goal' line"));
    }
    let course = Course {
        obstacles,
        start,
        goals,
        goal_radius: goal_radius.unwrap_or(DEFAULT_GOAL_RADIUS),
        bounds: bounds.unwrap_or_else(Bounds::unbounded),
        regions,
    };
    course.validate()?;
    Ok(course)
}

fn numbers(tokens: &[&str], count: usize, key: &str, line: usize) -> Result<Vec<f64>> {
    if tokens.len() != count {
        return Err(Error::parse(
            line,
            format!("'{key}' expects {count} numbers, got {}", tokens.len()),
        ));
    }
    tokens
        .iter()
        .map(|t| {
            t.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::parse(line, format!("bad number '{t}'")))
        })
        .collect()
}

fn finite2(v: &Vec2) -> bool {
    v.x.is_finite() && v.y.is_finite()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_box() -> Obstacle {
        Obstacle::new_box(Vec2::new(0.0, 0.0), Vec2::new(1.0, 1.0)).unwrap()
    }

    fn path(points: Vec<Vec3>, dt: f64) -> SampledPath {
        let ts = (0..points.len()).map(|k| k as f64 * dt).collect();
        SampledPath::new(points, ts).unwrap()
    }

    #[test]
    fn containment_examples() {
        let b = Obstacle::new_box(Vec2::new(2.0, -1.0), Vec2::new(0.5, 0.25)).unwrap();
        assert!(b.contains(&Vec3::new(2.0, -1.0, 7.0)));
        assert!(!b.contains(&Vec3::new(2.0 + 5.0, -1.0 + 2.5, 0.0)));
        assert!(b.contains(&Vec3::new(2.5, -1.0, 0.0)));
        assert!(b.contains(&Vec3::new(2.5, -0.75, 0.0)));
    }

    #[test]
    fn signed_distance_examples() {
        let b = unit_box();
        assert_eq!(b.distance_to_surface(&Vec3::new(2.0, 0.0, 0.0)), 1.0);
        assert_eq!(b.distance_to_surface(&Vec3::zeros()), -1.0);
        let c = Obstacle::new_cylinder(Vec2::new(0.0, 0.0), 0.5).unwrap();
        assert!((c.distance_to_surface(&Vec3::new(0.0, 2.0, 0.0)) - 1.5).abs() < 1e-15);
    }

    #[test]
    fn rejects_degenerate_obstacles() {
        assert!(Obstacle::new_box(Vec2::zeros(), Vec2::new(0.0, 1.0)).is_err());
        assert!(Obstacle::new_cylinder(Vec2::zeros(), -0.1).is_err());
    }

    #[test]
    fn min_distance_without_obstacles_is_infinite() {
        let course = Course::new(vec![], BoundaryState::at_rest(Vec3::zeros()), vec![Vec3::x()]).unwrap();
        let p = path(vec![Vec3::zeros(), Vec3::x()], 0.1);
        assert_eq!(min_distance(&course, &p), f64::INFINITY);
        assert_eq!(crate::risk::risk_measure(0.3, min_distance(&course, &p)), 0.0);
    }

    #[test]
    fn min_distance_past_cylinder() {
        let cyl = Obstacle::new_cylinder(Vec2::new(0.5, 0.5), 0.2).unwrap();
        let course = Course::new(vec![cyl], BoundaryState::at_rest(Vec3::zeros()), vec![Vec3::x()]).unwrap();
        let pts: Vec<Vec3> = (0..=100).map(|k| Vec3::new(k as f64 / 100.0, 0.0, 0.0)).collect();
        let d = min_distance(&course, &path(pts, 0.01));
        assert!((d - 0.3).abs() < 1e-12);
    }

    #[test]
    fn min_distance_floors_at_zero() {
        let course = Course::new(
            vec![Obstacle::new_box(Vec2::new(5.0, 0.0), Vec2::new(1.0, 1.0)).unwrap()],
            BoundaryState::at_rest(Vec3::zeros()),
            vec![Vec3::x()],
        )
        .unwrap();
        let p = path(vec![Vec3::zeros(), Vec3::new(5.0, 0.0, 0.0)], 0.1);
        assert_eq!(min_distance(&course, &p), 0.0);
    }

    #[test]
    fn obstacle_cost_examples() {
        let inside = Obstacle::new_box(Vec2::new(10.0, 0.0), Vec2::new(1.0, 1.0)).unwrap();
        let course = Course::new(vec![inside], BoundaryState::at_rest(Vec3::zeros()), vec![Vec3::x()]).unwrap();
        let free = path(vec![Vec3::zeros(); 251], 0.02);
        assert_eq!(obstacle_cost(&course, &free, 1e4), 0.0);

        let times = crate::minjerk::sample_times(5.0, 0.02);
        let stuck = SampledPath::new(vec![Vec3::new(10.0, 0.0, 0.0); times.len()], times).unwrap();
        assert!((obstacle_cost(&course, &stuck, 1e4) - 5e4).abs() < 1e-6);
    }

    #[test]
    fn goal_tracker_cycles() {
        let goals = vec![Vec3::new(0.0, 0.0, 0.0), Vec3::new(5.0, 0.0, 0.0), Vec3::new(5.0, 5.0, 0.0)];
        let course = Course::new(vec![], BoundaryState::at_rest(Vec3::new(-3.0, 0.0, 0.0)), goals.clone()).unwrap();
        let mut tracker = GoalTracker::new();

        let far = tracker.advance_goal(&course, &Vec3::new(-3.0, 0.0, 0.0));
        assert_eq!(far.goal, goals[0]);
        assert!(!far.lap_event && !far.advanced);

        for (i, g) in goals.iter().enumerate() {
            let u = tracker.advance_goal(&course, g);
            assert_eq!(u.lap_event, i == goals.len() - 1);
            assert_eq!(u.goal, goals[(i + 1) % goals.len()]);
        }
        assert_eq!(tracker.laps_completed, 1);
        assert_eq!(tracker.active_index, 0);
    }

    #[test]
    fn load_minimal_course() {
        let c = load_course("start 0 0 1 0 0 0\ngoal 1 0 1\n").unwrap();
        assert!(c.obstacles.is_empty());
        assert_eq!(c.goals.len(), 1);
        assert_eq!(c.goal_radius, DEFAULT_GOAL_RADIUS);
    }

    #[test]
    fn load_course_errors() {
        let dup = "start 0 0 1 0 0 0\nstart 0 0 1 0 0 0\ngoal 1 0 1\n";
        assert!(matches!(load_course(dup), Err(Error::Parse { line: 2, .. })));
        let bad = "start 0 0 1 0 0 0\ngoal 1 0\n";
        assert!(matches!(load_course(bad), Err(Error::Parse { line: 2, .. })));
        let unknown = "# c\nstart 0 0 1 0 0 0\nwall 1 2\n";
        assert!(matches!(load_course(unknown), Err(Error::Parse { line: 3, .. })));
        let inside = "start 0 0 1 0 0 0\nbox 0 0 1 1\ngoal 3 0 1\n";
        assert!(matches!(load_course(inside), Err(Error::Validation(_))));
        let no_goal = "start 0 0 1 0 0 0\n";
        assert!(load_course(no_goal).is_err());
    }

    #[test]
    fn load_course_with_comments_and_regions() {
        let text = "\
# a course
bounds -5 5 -5 5
start 0 0 1 0 0 0   # at rest
cylinder 2 2 0.5
box -2 2 0.5 1
goal 3 0 1
goal 3 3 1
goal_radius 0.4
region gap -1 1 -1 1
";
        let c = load_course(text).unwrap();
        assert_eq!(c.obstacles.len(), 2);
        assert_eq!(c.goals, vec![Vec3::new(3.0, 0.0, 1.0), Vec3::new(3.0, 3.0, 1.0)]);
        assert_eq!(c.goal_radius, 0.4);
        assert_eq!(c.region("gap").unwrap().bounds.xmax, 1.0);
        assert_eq!(c.bounds.ymin, -5.0);
    }
}
