//! Command-line front end: `collect`, `fit`, `laps` and `bench`.
//!
//! Every numeric option can also come from a config file given with
//! `--config`. The file uses the course-file syntax, one `key value` pair per
//! line with `#` comments, and keys are the long flag names without dashes
//! (`n-samples 50`, `risk off`). A flag on the command line wins over the
//! file, which wins over the built-in default. Relative paths in a config
//! file are taken relative to the file's directory.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use crate::environment::{load_course, Course};
use crate::error::{Error, Result};
use crate::minjerk::{BoundaryState, DEFAULT_DT};
use crate::mppi::{warm_start, CostWeights, MppiConfig, Planner, Solution, WARM_START_REACH};
use crate::risk::{
    fit_risk_model, read_risk_model, read_summary, summarize_log, write_risk_model, write_summary,
    write_tracking_log, TrackingSample, DEFAULT_QUANTILE,
};
use crate::sim::{collect_tracking_data, random_tracking_specs, run_laps, PlantConfig, RunOptions, RunRecord};

/// The bundled course, used when no `--course` is given.
pub const BUNDLED_COURSE: &str = include_str!("../courses/loop_gap.course");

pub const THREADS_ENV: &str = "RISKMPPI_THREADS";

/// Peak speeds of the collected trajectories (m/s).
pub const COLLECT_SPEED_RANGE: (f64, f64) = (0.2, 4.0);
/// Largest heading change at each waypoint of a collected trajectory (rad).
pub const COLLECT_MAX_TURN: f64 = 1.0;

const CONFIG_KEYS: &[&str] = &[
    "course", "risk", "laps", "seed", "n-samples", "n-iter", "sigma", "beta", "T", "w-g", "w-obs", "w-rho", "w-ct",
    "risk-model", "out", "fail-planner-at", "max-time", "n", "summary", "q", "repeats", "kp", "kd", "a-sat",
    "accel-noise", "dt-sim",
];

#[derive(Debug, Parser)]
#[command(name = "riskmppi", version, about = "Risk-aware MPPI waypoint planning and tracking simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Track random trajectories with the simulated plant and log the deviation.
    Collect(CollectArgs),
    /// Fit the speed-to-deviation quantile line to a tracking summary.
    Fit(FitArgs),
    /// Fly laps of a course with the receding-horizon planner.
    Laps(LapsArgs),
    /// Time repeated planner solves on a fixed scene.
    Bench(BenchArgs),
}

#[derive(Debug, Args, Default)]
struct CommonFlags {
    /// Config file with `key value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Default)]
struct PlannerFlags {
    #[arg(long = "n-samples")]
    n_samples: Option<usize>,
    #[arg(long = "n-iter")]
    n_iter: Option<usize>,
    /// Perturbation standard deviation (m).
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    /// Segment duration (s).
    #[arg(long = "T")]
    segment_duration: Option<f64>,
    #[arg(long = "w-g")]
    w_g: Option<f64>,
    #[arg(long = "w-obs")]
    w_obs: Option<f64>,
    #[arg(long = "w-rho")]
    w_rho: Option<f64>,
    #[arg(long = "w-ct")]
    w_ct: Option<f64>,
}

#[derive(Debug, Args, Default)]
struct PlantFlags {
    #[arg(long)]
    kp: Option<f64>,
    #[arg(long)]
    kd: Option<f64>,
    #[arg(long = "a-sat")]
    a_sat: Option<f64>,
    /// Acceleration noise standard deviation (m/s^2).
    #[arg(long = "accel-noise")]
    accel_noise: Option<f64>,
    #[arg(long = "dt-sim")]
    dt_sim: Option<f64>,
}

#[derive(Debug, Args)]
struct CollectArgs {
    #[command(flatten)]
    common: CommonFlags,
    #[command(flatten)]
    plant: PlantFlags,
    /// Number of trajectories.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    n: Option<u64>,
    #[arg(long = "T")]
    segment_duration: Option<f64>,
}

#[derive(Debug, Args)]
struct FitArgs {
    #[command(flatten)]
    common: CommonFlags,
    /// Tracking summary CSV (default: `<out>/tracking_summary.csv`).
    #[arg(long)]
    summary: Option<PathBuf>,
    /// Quantile level.
    #[arg(long)]
    q: Option<f64>,
}

#[derive(Debug, Args)]
struct LapsArgs {
    #[command(flatten)]
    common: CommonFlags,
    #[command(flatten)]
    planner: PlannerFlags,
    #[command(flatten)]
    plant: PlantFlags,
    #[command(flatten)]
    run: RunFlags,
}

#[derive(Debug, Args, Default)]
struct RunFlags {
    /// Course file (default: the bundled gap course).
    #[arg(long)]
    course: Option<PathBuf>,
    #[arg(long, overrides_with = "no_risk")]
    risk: bool,
    #[arg(long = "no-risk", overrides_with = "risk")]
    no_risk: bool,
    #[arg(long)]
    laps: Option<usize>,
    #[arg(long = "risk-model")]
    risk_model: Option<PathBuf>,
    /// Stop producing plans from this simulated time on (s).
    #[arg(long = "fail-planner-at")]
    fail_planner_at: Option<f64>,
    /// Simulated time limit (s); default 120 s per lap.
    #[arg(long = "max-time")]
    max_time: Option<f64>,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[command(flatten)]
    common: CommonFlags,
    #[command(flatten)]
    planner: PlannerFlags,
    #[arg(long)]
    course: Option<PathBuf>,
    #[arg(long = "risk-model")]
    risk_model: Option<PathBuf>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    repeats: Option<u64>,
}

/// Values read from a config file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
    base_dir: PathBuf,
}

impl ConfigFile {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let mut tokens = content.split_whitespace();
            let key = tokens.next().unwrap_or_default();
            let value: Vec<&str> = tokens.collect();
            if !CONFIG_KEYS.contains(&key) {
                return Err(Error::parse(line_no, format!("unknown config key '{key}'")));
            }
            if value.len() != 1 {
                return Err(Error::parse(line_no, format!("'{key}' expects exactly one value")));
            }
            if values.insert(key.to_string(), value[0].to_string()).is_some() {
                return Err(Error::parse(line_no, format!("duplicate '{key}'")));
            }
        }
        Ok(Self {
            values,
            base_dir: base_dir.to_path_buf(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = read_text(path)?;
        Self::parse(&text, path.parent().unwrap_or(Path::new("")))
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    fn value<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.get(key)
            .map(|v| {
                v.parse()
                    .map_err(|_| Error::Config(format!("invalid value '{v}' for '{key}'")))
            })
            .transpose()
    }

    fn path(&self, key: &str) -> Option<PathBuf> {
        self.get(key).map(|v| self.base_dir.join(v))
    }

    fn flag(&self, key: &str) -> Result<Option<bool>> {
        match self.get(key) {
            None => Ok(None),
            Some("on" | "true" | "yes" | "1") => Ok(Some(true)),
            Some("off" | "false" | "no" | "0") => Ok(Some(false)),
            Some(v) => Err(Error::Config(format!("invalid value '{v}' for '{key}'"))),
        }
    }
}

/// Command line, then config file, then default.
fn pick<T: FromStr>(flag: Option<T>, file: &ConfigFile, key: &str, default: T) -> Result<T> {
    match flag {
        Some(v) => Ok(v),
        None => Ok(file.value(key)?.unwrap_or(default)),
    }
}

fn pick_path(flag: Option<PathBuf>, file: &ConfigFile, key: &str) -> Option<PathBuf> {
    flag.or_else(|| file.path(key))
}

fn load_config(common: &CommonFlags) -> Result<ConfigFile> {
    match &common.config {
        Some(path) => ConfigFile::load(path),
        None => Ok(ConfigFile::default()),
    }
}

/// Fully resolved settings of a `laps` run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    /// `None` selects the bundled course.
    pub course: Option<PathBuf>,
    pub mppi: MppiConfig,
    pub weights: CostWeights,
    pub plant: PlantConfig,
    pub risk_model: Option<PathBuf>,
    pub laps: usize,
    pub risk: bool,
    pub out: PathBuf,
    pub fail_planner_at: Option<f64>,
    pub max_time: f64,
}

fn resolve_planner(flags: &PlannerFlags, file: &ConfigFile, seed: u64) -> Result<(MppiConfig, CostWeights)> {
    let d = MppiConfig::default();
    let sigma = pick(flags.sigma, file, "sigma", d.sigma[0])?;
    let mppi = MppiConfig {
        n_samples: pick(flags.n_samples, file, "n-samples", d.n_samples)?,
        n_iter: pick(flags.n_iter, file, "n-iter", d.n_iter)?,
        sigma: [sigma, sigma],
        beta: pick(flags.beta, file, "beta", d.beta)?,
        seed,
        dt: d.dt,
        segment_duration: pick(flags.segment_duration, file, "T", d.segment_duration)?,
    };
    mppi.validate()?;
    let w = CostWeights::default();
    let weights = CostWeights {
        w_g: pick(flags.w_g, file, "w-g", w.w_g)?,
        w_obs: pick(flags.w_obs, file, "w-obs", w.w_obs)?,
        w_rho: pick(flags.w_rho, file, "w-rho", w.w_rho)?,
        w_ct: pick(flags.w_ct, file, "w-ct", w.w_ct)?,
        ..w
    };
    weights.validate()?;
    Ok((mppi, weights))
}

fn resolve_plant(flags: &PlantFlags, file: &ConfigFile, seed: u64) -> Result<PlantConfig> {
    let d = PlantConfig::default();
    let plant = PlantConfig {
        kp: pick(flags.kp, file, "kp", d.kp)?,
        kd: pick(flags.kd, file, "kd", d.kd)?,
        a_sat: pick(flags.a_sat, file, "a-sat", d.a_sat)?,
        accel_noise_std: pick(flags.accel_noise, file, "accel-noise", d.accel_noise_std)?,
        dt_sim: pick(flags.dt_sim, file, "dt-sim", d.dt_sim)?,
        seed,
    };
    plant.validate()?;
    Ok(plant)
}

fn resolve_run(args: &LapsArgs) -> Result<RunConfig> {
    let file = load_config(&args.common)?;
    let seed = pick(args.common.seed, &file, "seed", 0)?;
    let (mppi, weights) = resolve_planner(&args.planner, &file, seed)?;
    let plant = resolve_plant(&args.plant, &file, seed)?;
    let risk_flag = if args.run.risk {
        Some(true)
    } else if args.run.no_risk {
        Some(false)
    } else {
        None
    };
    let risk = match risk_flag {
        Some(v) => v,
        None => file.flag("risk")?.unwrap_or(true),
    };
    let laps = pick(args.run.laps, &file, "laps", 20)?;
    if laps == 0 {
        return Err(Error::InvalidArgument("--laps must be at least 1".into()));
    }
    let max_time = pick(args.run.max_time, &file, "max-time", 120.0 * laps as f64)?;
    let fail_planner_at = match args.run.fail_planner_at {
        Some(v) => Some(v),
        None => file.value("fail-planner-at")?,
    };
    Ok(RunConfig {
        course: pick_path(args.run.course.clone(), &file, "course"),
        mppi,
        weights,
        plant,
        risk_model: pick_path(args.run.risk_model.clone(), &file, "risk-model"),
        laps,
        risk,
        out: pick_path(args.common.out.clone(), &file, "out").unwrap_or_else(|| PathBuf::from(".")),
        fail_planner_at,
        max_time,
    })
}

/// Resolves the settings of `riskmppi laps ...` without running anything.
///
/// `args` excludes the program name, e.g. `["laps", "--seed", "3"]`.
pub fn parse_run_config<I, S>(args: I) -> Result<RunConfig>
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let argv = std::iter::once(OsString::from("riskmppi")).chain(args.into_iter().map(Into::into));
    let cli = Cli::try_parse_from(argv).map_err(|e| Error::InvalidArgument(first_line(&e.to_string())))?;
    match cli.command {
        Command::Laps(args) => resolve_run(&args),
        _ => Err(Error::InvalidArgument("expected the 'laps' command".into())),
    }
}

fn first_line(s: &str) -> String {
    s.lines()
        .map(str::trim)
        .find(|l| !l.is_empty())
        .unwrap_or("")
        .trim_start_matches("error: ")
        .to_string()
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| with_path(e, path))
}

fn with_path(e: std::io::Error, path: &Path) -> Error {
    Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| with_path(e, path))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| with_path(e, dir))
}

fn load_course_file(path: Option<&Path>) -> Result<Course> {
    match path {
        Some(p) => load_course(&read_text(p)?).map_err(|e| match e {
            Error::Parse { line, msg } => Error::Parse {
                line,
                msg: format!("{}: {msg}", p.display()),
            },
            other => other,
        }),
        None => load_course(BUNDLED_COURSE),
    }
}

fn load_model_file(path: &Path) -> Result<crate::risk::RiskModel> {
    let file = File::open(path).map_err(|e| with_path(e, path))?;
    read_risk_model(BufReader::new(file))
}

fn cmd_collect(args: &CollectArgs, out: &mut dyn Write) -> Result<()> {
    let file = load_config(&args.common)?;
    let seed = pick(args.common.seed, &file, "seed", 0)?;
    let n = pick(args.n, &file, "n", 200)?;
    if n == 0 {
        return Err(Error::InvalidArgument("--n must be at least 1".into()));
    }
    let segment_duration = pick(args.segment_duration, &file, "T", MppiConfig::default().segment_duration)?;
    let plant = resolve_plant(&args.plant, &file, seed)?;
    let dir = pick_path(args.common.out.clone(), &file, "out").unwrap_or_else(|| PathBuf::from("."));

    let specs = random_tracking_specs(n as usize, seed, segment_duration, COLLECT_SPEED_RANGE, COLLECT_MAX_TURN)?;
    let logs = collect_tracking_data(&plant, &specs, segment_duration, DEFAULT_DT)?;
    let rows: Vec<(usize, TrackingSample)> = logs
        .iter()
        .map(|l| (l.traj_id, summarize_log(&l.commanded, &l.actual)))
        .collect();

    ensure_dir(&dir)?;
    let raw = dir.join("tracking_raw.csv");
    let summary = dir.join("tracking_summary.csv");
    let mut w = create(&raw)?;
    write_tracking_log(&mut w, &logs)?;
    w.flush().map_err(|e| with_path(e, &raw))?;
    let mut w = create(&summary)?;
    write_summary(&mut w, &rows)?;
    w.flush().map_err(|e| with_path(e, &summary))?;
    writeln!(out, "samples={}", rows.len())?;
    writeln!(out, "raw={}", raw.display())?;
    writeln!(out, "summary={}", summary.display())?;
    Ok(())
}

fn cmd_fit(args: &FitArgs, out: &mut dyn Write) -> Result<()> {
    let file = load_config(&args.common)?;
    let dir = pick_path(args.common.out.clone(), &file, "out").unwrap_or_else(|| PathBuf::from("."));
    let summary = pick_path(args.summary.clone(), &file, "summary").unwrap_or_else(|| dir.join("tracking_summary.csv"));
    let q = pick(args.q, &file, "q", DEFAULT_QUANTILE)?;

    let reader = File::open(&summary).map_err(|e| with_path(e, &summary))?;
    let samples: Vec<TrackingSample> = read_summary(BufReader::new(reader))?.into_iter().map(|(_, s)| s).collect();
    let model = fit_risk_model(&samples, q)?;

    ensure_dir(&dir)?;
    let path = dir.join("risk_model.txt");
    let mut w = create(&path)?;
    write_risk_model(&mut w, &model)?;
    w.flush().map_err(|e| with_path(e, &path))?;
    writeln!(out, "a={}", model.a)?;
    writeln!(out, "b={}", model.b)?;
    writeln!(out, "q={}", model.q)?;
    writeln!(out, "coverage={}", model.coverage(&samples))?;
    writeln!(out, "samples={}", samples.len())?;
    writeln!(out, "model={}", path.display())?;
    Ok(())
}

fn write_replans<W: Write>(writer: W, record: &RunRecord) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["t", "r1_x", "r1_y", "r1_z", "r2_x", "r2_y", "r2_z", "v_max", "cost"])?;
    for r in &record.replans {
        let (a, b) = (r.waypoints.r1, r.waypoints.r2);
        w.write_record(
            [r.t, a.x, a.y, a.z, b.x, b.y, b.z, r.v_max, r.cost]
                .iter()
                .map(f64::to_string),
        )?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_laps(args: &LapsArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = resolve_run(args)?;
    let course = load_course_file(cfg.course.as_deref())?;
    let model = if cfg.risk {
        let path = cfg
            .risk_model
            .as_ref()
            .ok_or_else(|| Error::Config("risk is enabled but no --risk-model was given".into()))?;
        Some(load_model_file(path)?)
    } else {
        None
    };
    let planner = Planner::new(cfg.mppi.clone(), cfg.weights, model)?;
    let options = RunOptions {
        max_time: cfg.max_time,
        fail_planner_at: cfg.fail_planner_at,
        ..RunOptions::default()
    };
    let (record, summary) = run_laps(&course, cfg.laps, cfg.risk, &planner, &cfg.plant, &options)?;

    ensure_dir(&cfg.out)?;
    let path = cfg.out.join("run.csv");
    let mut w = create(&path)?;
    record.write_csv(&mut w)?;
    w.flush().map_err(|e| with_path(e, &path))?;

    let path = cfg.out.join("replans.csv");
    write_replans(create(&path)?, &record)?;

    let path = cfg.out.join("dist_vs_progress.csv");
    let mut w = csv::Writer::from_writer(create(&path)?);
    w.write_record(["progress", "dist_obs"])?;
    for (p, d) in &summary.profile {
        w.write_record([p.to_string(), d.to_string()])?;
    }
    w.flush()?;

    let path = cfg.out.join("speed_profile.csv");
    let mut w = csv::Writer::from_writer(create(&path)?);
    w.write_record(["x", "y", "cmd_speed"])?;
    for s in &record.samples {
        w.write_record([s.cmd_position.x.to_string(), s.cmd_position.y.to_string(), s.cmd_speed.to_string()])?;
    }
    w.flush()?;

    let path = cfg.out.join("summary.txt");
    let mut w = create(&path)?;
    summary.write_text(&mut w)?;
    w.flush().map_err(|e| with_path(e, &path))?;
    summary.write_text(&mut *out)?;
    Ok(())
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

fn cmd_bench(args: &BenchArgs, out: &mut dyn Write) -> Result<()> {
    let file = load_config(&args.common)?;
    let seed = pick(args.common.seed, &file, "seed", 0)?;
    let repeats = pick(args.repeats, &file, "repeats", 20)? as usize;
    let (mppi, weights) = resolve_planner(&args.planner, &file, seed)?;
    let course = load_course_file(pick_path(args.course.clone(), &file, "course").as_deref())?;
    let model = pick_path(args.risk_model.clone(), &file, "risk-model")
        .map(|p| load_model_file(&p))
        .transpose()?;
    let planner = Planner::new(mppi, weights, model)?;

    let start = BoundaryState::new(course.start.position, course.start.velocity, course.start.acceleration);
    let goal = course.goals[0];
    let warm = warm_start(&start.position, &goal, WARM_START_REACH);
    let solutions: Vec<Solution> = (0..repeats)
        .map(|_| planner.solve(&start, &course, &goal, &warm))
        .collect::<Result<_>>()?;

    let totals: Vec<f64> = solutions.iter().map(|s| s.elapsed).collect();
    let iter_sums: Vec<f64> = solutions.iter().map(|s| s.iteration_elapsed.iter().sum()).collect();
    let (mean, std) = mean_std(&totals);
    let last = solutions.last().expect("repeats is at least 1");
    writeln!(out, "solves={repeats}")?;
    writeln!(out, "n_samples={}", planner.config().n_samples)?;
    writeln!(out, "n_iter={}", planner.config().n_iter)?;
    writeln!(out, "mean_s={mean}")?;
    writeln!(out, "std_s={std}")?;
    writeln!(out, "iteration_sum_mean_s={}", mean_std(&iter_sums).0)?;
    writeln!(out, "iteration_share={}", iter_sums.iter().sum::<f64>() / totals.iter().sum::<f64>())?;
    writeln!(out, "cost={}", last.cost)?;
    writeln!(out, "r1={} {} {}", last.waypoints.r1.x, last.waypoints.r1.y, last.waypoints.r1.z)?;
    writeln!(out, "r2={} {} {}", last.waypoints.r2.x, last.waypoints.r2.y, last.waypoints.r2.z)?;

    if let Some(dir) = pick_path(args.common.out.clone(), &file, "out") {
        ensure_dir(&dir)?;
        let path = dir.join("bench_iterations.csv");
        let mut w = csv::Writer::from_writer(create(&path)?);
        w.write_record(["iteration", "mean_s"])?;
        for k in 0..planner.config().n_iter {
            let per: Vec<f64> = solutions.iter().map(|s| s.iteration_elapsed[k]).collect();
            w.write_record([k.to_string(), mean_std(&per).0.to_string()])?;
        }
        w.flush()?;
    }
    Ok(())
}

fn thread_count() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(Error::Config(format!("{THREADS_ENV}: {e}"))),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Error::Config(format!("{THREADS_ENV} must be a positive integer, got '{v}'"))),
        },
    }
}

fn dispatch(command: &Command, out: &mut dyn Write) -> Result<()> {
    match command {
        Command::Collect(a) => cmd_collect(a, out),
        Command::Fit(a) => cmd_fit(a, out),
        Command::Laps(a) => cmd_laps(a, out),
        Command::Bench(a) => cmd_bench(a, out),
    }
}

/// Runs the CLI and returns the process exit code.
///
/// Failures print one `error: <code>: <message>` line to `err`. Usage errors
/// use code `usage` and exit with 2; other errors exit with 1.
pub fn run<I, S>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = write!(out, "{e}");
            return 0;
        }
        Err(e) => {
            let _ = writeln!(err, "error: usage: {}", first_line(&e.to_string()));
            return 2;
        }
    };
    let mut buffer = Vec::new();
    let result = thread_count()
        .and_then(|threads| match threads {
            None => dispatch(&cli.command, &mut buffer),
            Some(n) => rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Internal(format!("thread pool: {e}")))?
                .install(|| dispatch(&cli.command, &mut buffer)),
        })
        .and_then(|()| out.write_all(&buffer).map_err(Error::from));
    match result {
        Ok(()) => 0,
        Err(e) => {
            let message = e.to_string().replace('\n', " ");
            let _ = writeln!(err, "error: {}: {message}", e.code());
            1
        }
    }
}
