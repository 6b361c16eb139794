//! Risk-aware receding-horizon MPPI waypoint planning over two-segment
//! minimum-jerk trajectories.
//!
//! * [`minjerk`] builds and evaluates the trajectories.
//! * [`risk`] measures tracking deviation and fits the speed-to-deviation model.
//! * [`environment`] holds obstacles, goals and course files.
//! * [`mppi`] is the sampling planner.
//! * [`sim`] runs the tracking plant and the closed loop.
//! * [`cli`] backs the `riskmppi` binary.

// argument checks are written `!(x > 0.0)` so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod environment;
pub mod error;
pub mod minjerk;
pub mod mppi;
pub mod risk;
pub mod sim;

pub use error::{Error, Result};
pub use minjerk::{BoundaryState, TerminalCondition, TwoSegmentTrajectory, Vec3, WaypointPair};
