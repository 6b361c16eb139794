//! Tracking-error risk.
//!
//! The geometric mismatch between a commanded and an executed path is the
//! Hausdorff distance between the two sampled point sets. Logged mismatches
//! are reduced to `(v_max, d_h)` pairs and an affine upper-quantile line
//! `d_hat(v_max) = a + b * v_max` is fitted to them. The risk of a candidate
//! trajectory is then `max(0, d_hat / d_obs - 1)`, where `d_obs` is its
//! clearance to the nearest obstacle.

use std::collections::BTreeMap;
use std::io::{BufRead, Read, Write};

use crate::error::{Error, Result};
use crate::minjerk::Vec3;

/// Lower clamp on the obstacle clearance used by [`risk_measure`] (m).
pub const CLEARANCE_FLOOR: f64 = 1e-3;

/// Default quantile for the conservative estimator.
pub const DEFAULT_QUANTILE: f64 = 0.95;

/// Minimum number of samples accepted by [`fit_risk_model`].
pub const MIN_FIT_SAMPLES: usize = 10;

const GRID_POINTS: usize = 41;
const GRID_LEVELS: usize = 3;
/// Half-width of a refined window, in steps of the previous grid.
const REFINE_HALF_WIDTH: f64 = 4.0;

/// Time-stamped sequence of 3-D points.
#[derive(Clone, Debug, PartialEq)]
pub struct SampledPath {
    points: Vec<Vec3>,
    timestamps: Vec<f64>,
}

impl SampledPath {
    /// Requires at least two points and strictly increasing timestamps.
    pub fn new(points: Vec<Vec3>, timestamps: Vec<f64>) -> Result<Self> {
        if points.len() != timestamps.len() {
            return Err(Error::InvalidArgument(format!(
                "{} points but {} timestamps",
                points.len(),
                timestamps.len()
            )));
        }
        if points.len() < 2 {
            return Err(Error::InvalidArgument("a sampled path needs at least two points".into()));
        }
        if timestamps.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument("timestamps must be strictly increasing".into()));
        }
        if points.iter().any(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(Error::InvalidArgument("non-finite path point".into()));
        }
        Ok(Self { points, timestamps })
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn timestamps(&self) -> &[f64] {
        &self.timestamps
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Largest finite-difference speed between consecutive samples.
    pub fn max_speed(&self) -> f64 {
        self.points
            .windows(2)
            .zip(self.timestamps.windows(2))
            .map(|(p, t)| (p[1] - p[0]).norm() / (t[1] - t[0]))
            .fold(0.0, f64::max)
    }
}

/// One `(v_max, d_h)` observation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrackingSample {
    pub v_max: f64,
    pub d_h: f64,
}

/// Affine conservative estimator of the tracking deviation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RiskModel {
    /// Intercept (m).
    pub a: f64,
    /// Slope (m per m/s), never negative.
    pub b: f64,
    /// Quantile the line was fitted to.
    pub q: f64,
}

impl RiskModel {
    pub fn new(a: f64, b: f64, q: f64) -> Result<Self> {
        if !a.is_finite() || !b.is_finite() || b < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "risk model needs finite a and b >= 0, got a={a} b={b}"
            )));
        }
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::InvalidArgument(format!("quantile {q} not in (0, 1)")));
        }
        Ok(Self { a, b, q })
    }

    /// Predicted deviation, clamped at zero.
    pub fn predict(&self, v_max: f64) -> f64 {
        predict_dhat(self, v_max)
    }

    /// Fraction of samples strictly below the fitted line.
    pub fn coverage(&self, samples: &[TrackingSample]) -> f64 {
        if samples.is_empty() {
            return 0.0;
        }
        let below = samples
            .iter()
            .filter(|s| s.d_h < self.a + self.b * s.v_max)
            .count();
        below as f64 / samples.len() as f64
    }
}

pub fn predict_dhat(model: &RiskModel, v_max: f64) -> f64 {
    (model.a + model.b * v_max).max(0.0)
}

/// `max(0, d_hat / max(d_obs, CLEARANCE_FLOOR) - 1)`.
///
/// An infinite clearance (no obstacles) gives zero risk.
pub fn risk_measure(d_hat: f64, d_obs: f64) -> f64 {
    let clearance = d_obs.max(CLEARANCE_FLOOR);
    (d_hat / clearance - 1.0).max(0.0)
}

/// Hausdorff distance between two sampled paths.
pub fn hausdorff_distance(a: &SampledPath, b: &SampledPath) -> f64 {
    // SampledPath is never empty
    hausdorff_points(a.points(), b.points()).expect("sampled paths are non-empty")
}

/// Hausdorff distance between two finite point sets.
pub fn hausdorff_points(a: &[Vec3], b: &[Vec3]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Domain("Hausdorff distance of an empty point set".into()));
    }
    let sq = directed_sq(a, b).max(directed_sq(b, a));
    Ok(sq.sqrt())
}

/// Squared directed distance `max_a min_b |a - b|^2`.
///
/// The inner scan stops as soon as a point is closer than the running
/// maximum, since that point can no longer raise it.
fn directed_sq(from: &[Vec3], to: &[Vec3]) -> f64 {
    let mut worst = 0.0_f64;
    for p in from {
        let mut nearest = f64::INFINITY;
        for q in to {
            let d = p - q;
            let dist = d.x * d.x + d.y * d.y + d.z * d.z;
            if dist < nearest {
                nearest = dist;
                if nearest < worst {
                    break;
                }
            }
        }
        if nearest > worst {
            worst = nearest;
        }
    }
    worst
}

/// Reduces one commanded/actual log pair to a `(v_max, d_h)` sample.
pub fn summarize_log(commanded: &SampledPath, actual: &SampledPath) -> TrackingSample {
    TrackingSample {
        v_max: commanded.max_speed(),
        d_h: hausdorff_distance(commanded, actual),
    }
}

/// Pinball loss of the line `(a, b)` over the samples.
pub fn pinball_loss(samples: &[TrackingSample], a: f64, b: f64, q: f64) -> f64 {
    samples
        .iter()
        .map(|s| {
            let e = s.d_h - (a + b * s.v_max);
            (q * e).max((q - 1.0) * e)
        })
        .sum()
}

/// Smallest value `y` with at least a fraction `q` of `values` at or below it.
pub fn empirical_quantile(values: &[f64], q: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = (q * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// Fits `d_hat(v) = a + b v` (with `b >= 0`) minimising the pinball loss.
///
/// The minimisation is a coarse-to-fine grid search: three levels of a 41x41
/// grid, the first spanning `a in [0, max d_h]`, `b in [0, max d_h / max v]`,
/// each later level centred on the previous best point.
pub fn fit_risk_model(samples: &[TrackingSample], q: f64) -> Result<RiskModel> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::InvalidArgument(format!("quantile {q} not in (0, 1)")));
    }
    if samples.len() < MIN_FIT_SAMPLES {
        return Err(Error::InsufficientData(format!(
            "need at least {MIN_FIT_SAMPLES} tracking samples, got {}",
            samples.len()
        )));
    }
    if samples
        .iter()
        .any(|s| !(s.v_max >= 0.0 && s.d_h >= 0.0) || !s.v_max.is_finite() || !s.d_h.is_finite())
    {
        return Err(Error::InvalidArgument("tracking samples must be finite and nonnegative".into()));
    }

    let first_v = samples[0].v_max;
    if samples.iter().all(|s| s.v_max == first_v) {
        let d: Vec<f64> = samples.iter().map(|s| s.d_h).collect();
        return RiskModel::new(empirical_quantile(&d, q), 0.0, q);
    }

    let max_d = samples.iter().map(|s| s.d_h).fold(0.0, f64::max);
    let max_v = samples.iter().map(|s| s.v_max).fold(0.0, f64::max);
    let mut a_range = (0.0, max_d);
    let mut b_range = (0.0, max_d / max_v);
    let mut best = (0.0, 0.0, f64::INFINITY);

    for _ in 0..GRID_LEVELS {
        let a_step = (a_range.1 - a_range.0) / (GRID_POINTS - 1) as f64;
        let b_step = (b_range.1 - b_range.0) / (GRID_POINTS - 1) as f64;
        for i in 0..GRID_POINTS {
            let a = a_range.0 + i as f64 * a_step;
            for j in 0..GRID_POINTS {
                let b = b_range.0 + j as f64 * b_step;
                let loss = pinball_loss(samples, a, b, q);
                if loss < best.2 {
                    best = (a, b, loss);
                }
            }
        }
        a_range = (best.0 - REFINE_HALF_WIDTH * a_step, best.0 + REFINE_HALF_WIDTH * a_step);
        b_range = (
            (best.1 - REFINE_HALF_WIDTH * b_step).max(0.0),
            best.1 + REFINE_HALF_WIDTH * b_step,
        );
    }
    RiskModel::new(best.0, best.1, q)
}

/// Commanded and executed path of one logged trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct TrackingLog {
    pub traj_id: usize,
    pub commanded: SampledPath,
    pub actual: SampledPath,
}

pub const TRACKING_LOG_HEADER: [&str; 8] =
    ["traj_id", "t", "cmd_x", "cmd_y", "cmd_z", "act_x", "act_y", "act_z"];
pub const SUMMARY_HEADER: [&str; 3] = ["traj_id", "v_max", "d_h"];

/// Writes logs as `traj_id,t,cmd_x,cmd_y,cmd_z,act_x,act_y,act_z` rows.
///
/// Commanded and actual paths must share their timestamps.
pub fn write_tracking_log<W: Write>(writer: W, logs: &[TrackingLog]) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(TRACKING_LOG_HEADER)?;
    for log in logs {
        if log.commanded.timestamps() != log.actual.timestamps() {
            return Err(Error::InvalidArgument(format!(
                "trajectory {}: commanded and actual timestamps differ",
                log.traj_id
            )));
        }
        for ((t, c), a) in log
            .commanded
            .timestamps()
            .iter()
            .zip(log.commanded.points())
            .zip(log.actual.points())
        {
            out.write_record([
                log.traj_id.to_string(),
                t.to_string(),
                c.x.to_string(),
                c.y.to_string(),
                c.z.to_string(),
                a.x.to_string(),
                a.y.to_string(),
                a.z.to_string(),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Reads a tracking log, grouping rows by `traj_id` in ascending id order.
pub fn read_tracking_log<R: Read>(reader: R) -> Result<Vec<TrackingLog>> {
    let mut input = csv::Reader::from_reader(reader);
    check_header(input.headers()?, &TRACKING_LOG_HEADER)?;
    let mut grouped: BTreeMap<usize, (Vec<f64>, Vec<Vec3>, Vec<Vec3>)> = BTreeMap::new();
    for (idx, record) in input.records().enumerate() {
        let line = idx + 2;
        let record = record?;
        if record.len() != TRACKING_LOG_HEADER.len() {
            return Err(Error::parse(line, format!("expected 8 fields, got {}", record.len())));
        }
        let id: usize = record[0]
            .trim()
            .parse()
            .map_err(|_| Error::parse(line, format!("bad traj_id '{}'", &record[0])))?;
        let mut values = [0.0; 7];
        for (k, v) in values.iter_mut().enumerate() {
            *v = parse_f64(&record[k + 1], line)?;
        }
        let entry = grouped.entry(id).or_default();
        entry.0.push(values[0]);
        entry.1.push(Vec3::new(values[1], values[2], values[3]));
        entry.2.push(Vec3::new(values[4], values[5], values[6]));
    }
    grouped
        .into_iter()
        .map(|(traj_id, (t, cmd, act))| {
            Ok(TrackingLog {
                traj_id,
                commanded: SampledPath::new(cmd, t.clone())?,
                actual: SampledPath::new(act, t)?,
            })
        })
        .collect()
}

pub fn write_summary<W: Write>(writer: W, rows: &[(usize, TrackingSample)]) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(SUMMARY_HEADER)?;
    for (id, s) in rows {
        out.write_record([id.to_string(), s.v_max.to_string(), s.d_h.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_summary<R: Read>(reader: R) -> Result<Vec<(usize, TrackingSample)>> {
    let mut input = csv::Reader::from_reader(reader);
    check_header(input.headers()?, &SUMMARY_HEADER)?;
    let mut rows = Vec::new();
    for (idx, record) in input.records().enumerate() {
        let line = idx + 2;
        let record = record?;
        if record.len() != 3 {
            return Err(Error::parse(line, format!("expected 3 fields, got {}", record.len())));
        }
        let id: usize = record[0]
            .trim()
            .parse()
            .map_err(|_| Error::parse(line, format!("bad traj_id '{}'", &record[0])))?;
        rows.push((
            id,
            TrackingSample {
                v_max: parse_f64(&record[1], line)?,
                d_h: parse_f64(&record[2], line)?,
            },
        ));
    }
    Ok(rows)
}

/// Writes the three-line `a=`, `b=`, `q=` model file.
pub fn write_risk_model<W: Write>(mut writer: W, model: &RiskModel) -> Result<()> {
    writeln!(writer, "a={}", model.a)?;
    writeln!(writer, "b={}", model.b)?;
    writeln!(writer, "q={}", model.q)?;
    Ok(())
}

pub fn read_risk_model<R: BufRead>(reader: R) -> Result<RiskModel> {
    let mut fields: [Option<f64>; 3] = [None; 3];
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::parse(line_no, format!("expected key=value, got '{line}'")))?;
        let slot = match key.trim() {
            "a" => 0,
            "b" => 1,
            "q" => 2,
            other => return Err(Error::parse(line_no, format!("unknown key '{other}'"))),
        };
        if fields[slot].is_some() {
            return Err(Error::parse(line_no, format!("duplicate key '{}'", key.trim())));
        }
        fields[slot] = Some(parse_f64(value, line_no)?);
    }
    match fields {
        [Some(a), Some(b), Some(q)] => RiskModel::new(a, b, q),
        _ => Err(Error::parse(0, "risk model file needs a=, b= and q= lines")),
    }
}

fn check_header(found: &csv::StringRecord, expected: &[&str]) -> Result<()> {
    if found.iter().map(str::trim).ne(expected.iter().copied()) {
        return Err(Error::parse(
            1,
            format!("expected header '{}'", expected.join(",")),
        ));
    }
    Ok(())
}

fn parse_f64(s: &str, line: usize) -> Result<f64> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| Error::parse(line, format!("bad number '{}'", s.trim())))?;
    if !v.is_finite() {
        return Err(Error::parse(line, format!("non-finite number '{}'", s.trim())));
    }
    Ok(v)
}
