mod common;

use common::brute_hausdorff;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use riskmppi::risk::{
    empirical_quantile, fit_risk_model, hausdorff_distance, hausdorff_points, pinball_loss, predict_dhat,
    read_risk_model, read_summary, read_tracking_log, risk_measure, summarize_log, write_risk_model, write_summary,
    write_tracking_log, RiskModel, SampledPath, TrackingLog, TrackingSample, CLEARANCE_FLOOR,
};
use riskmppi::Vec3;

fn random_path(rng: &mut ChaCha8Rng, n: usize) -> SampledPath {
    let points = (0..n)
        .map(|_| Vec3::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)))
        .collect();
    SampledPath::new(points, (0..n).map(|k| k as f64 * 0.02).collect()).unwrap()
}

fn line(n: usize, offset: Vec3) -> SampledPath {
    let points = (0..n).map(|k| Vec3::new(k as f64 / (n - 1) as f64, 0.0, 0.0) + offset).collect();
    SampledPath::new(points, (0..n).map(|k| k as f64 * 0.02).collect()).unwrap()
}

#[test]
fn hausdorff_matches_brute_force_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let n = rng.random_range(2..80);
        let m = rng.random_range(2..80);
        let (a, b) = (random_path(&mut rng, n), random_path(&mut rng, m));
        let fast = hausdorff_distance(&a, &b);
        assert_eq!(fast, brute_hausdorff(a.points(), b.points()));
        assert_eq!(fast, hausdorff_distance(&b, &a));
        assert_eq!(hausdorff_distance(&a, &a), 0.0);
    }
}

#[test]
fn hausdorff_triangle_inequality() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..100 {
        let (a, b, c) = (random_path(&mut rng, 30), random_path(&mut rng, 40), random_path(&mut rng, 20));
        assert!(hausdorff_distance(&a, &c) <= hausdorff_distance(&a, &b) + hausdorff_distance(&b, &c) + 1e-12);
    }
}

#[test]
fn hausdorff_examples() {
    let a = line(51, Vec3::zeros());
    let b = line(51, Vec3::new(0.0, 0.5, 0.0));
    assert!((hausdorff_distance(&a, &b) - 0.5).abs() < 1e-15);
    assert!(hausdorff_points(&[], &[Vec3::zeros()]).is_err());
}

#[test]
fn summarize_log_examples() {
    let a = line(51, Vec3::zeros());
    let s = summarize_log(&a, &a);
    assert_eq!(s.d_h, 0.0);
    // 1 m covered in 1 s
    assert!((s.v_max - 1.0).abs() < 1e-9);

    let still = SampledPath::new(vec![Vec3::new(1.0, 2.0, 3.0); 10], (0..10).map(|k| k as f64 * 0.02).collect()).unwrap();
    assert_eq!(summarize_log(&still, &still).v_max, 0.0);

    let shifted = SampledPath::new(a.points().iter().map(|p| p + Vec3::new(0.0, 0.0, 0.1)).collect(), a.timestamps().to_vec())
        .unwrap();
    assert!((summarize_log(&a, &shifted).d_h - 0.1).abs() < 1e-12);
}

#[test]
fn fit_recovers_an_exact_line() {
    let samples: Vec<TrackingSample> = (0..40)
        .map(|k| {
            let v = 0.1 * k as f64;
            TrackingSample { v_max: v, d_h: 0.05 + 0.1 * v }
        })
        .collect();
    let m = fit_risk_model(&samples, 0.95).unwrap();
    // final grid spacing is well below these tolerances
    assert!((m.a - 0.05).abs() < 2e-3, "a = {}", m.a);
    assert!((m.b - 0.1).abs() < 1e-3, "b = {}", m.b);
    assert!(pinball_loss(&samples, m.a, m.b, 0.95) < 1e-3);
}

#[test]
fn fit_with_constant_speed_is_the_empirical_quantile() {
    let d: Vec<f64> = (0..=10).map(|k| 0.1 + 0.01 * k as f64).collect();
    let samples: Vec<TrackingSample> = d.iter().map(|&d_h| TrackingSample { v_max: 1.0, d_h }).collect();
    let m = fit_risk_model(&samples, 0.95).unwrap();
    // sorted[ceil(0.95 * 11) - 1] = sorted[10]
    let mut sorted = d.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    assert_eq!(m.b, 0.0);
    assert_eq!(m.a, sorted[10]);
    assert_eq!(m.a, empirical_quantile(&d, 0.95));
}

#[test]
fn fit_needs_ten_samples() {
    let few = vec![TrackingSample { v_max: 1.0, d_h: 0.1 }; 9];
    let err = fit_risk_model(&few, 0.95).unwrap_err();
    assert_eq!(err.code(), "insufficient_data");
    assert!(err.to_string().contains("10"));
}

fn synthetic(seed: u64, n: usize) -> Vec<TrackingSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.02).unwrap();
    (0..n)
        .map(|_| {
            let v = rng.random_range(0.0..4.0);
            let e: f64 = noise.sample(&mut rng);
            TrackingSample { v_max: v, d_h: 0.02 + 0.05 * v + e.abs() }
        })
        .collect()
}

#[test]
fn fit_coverage_on_synthetic_logs() {
    for seed in 0..10 {
        let samples = synthetic(seed, 500);
        let m = fit_risk_model(&samples, 0.95).unwrap();
        let cov = m.coverage(&samples);
        assert!((0.92..=0.98).contains(&cov), "seed {seed}: coverage {cov}");
        assert!(m.b >= 0.0);
    }
}

#[test]
fn fit_coverage_tracks_other_quantiles() {
    let samples = synthetic(99, 400);
    for q in [0.5, 0.8, 0.9] {
        let cov = fit_risk_model(&samples, q).unwrap().coverage(&samples);
        assert!((cov - q).abs() <= 0.03, "q {q}: coverage {cov}");
    }
}

#[test]
fn predict_examples() {
    let m = RiskModel::new(0.05, 0.1, 0.95).unwrap();
    assert!((predict_dhat(&m, 1.0) - 0.15).abs() < 1e-15);
    assert_eq!(predict_dhat(&m, 0.0), 0.05);
    assert_eq!(predict_dhat(&RiskModel::new(-0.1, 0.1, 0.95).unwrap(), 0.0), 0.0);
    assert!(RiskModel::new(0.0, -0.1, 0.95).is_err());
    assert!(RiskModel::new(0.0, 0.1, 1.0).is_err());
}

#[test]
fn risk_measure_examples() {
    assert_eq!(risk_measure(0.2, 0.4), 0.0);
    assert_eq!(risk_measure(0.4, 0.2), 1.0);
    assert!((risk_measure(0.4, 0.0) - 399.0).abs() < 1e-9);
    assert_eq!(risk_measure(0.4, f64::INFINITY), 0.0);
}

#[test]
fn risk_measure_property_suite() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..10_000 {
        let d_hat = rng.random_range(0.0..2.0);
        let d_obs = rng.random_range(-0.5..2.0);
        let rho = risk_measure(d_hat, d_obs);
        assert!(rho >= 0.0);
        assert_eq!(rho == 0.0, d_obs.max(CLEARANCE_FLOOR) >= d_hat);
        let bump = rng.random_range(0.0..1.0);
        assert!(risk_measure(d_hat + bump, d_obs) >= rho);
        assert!(risk_measure(d_hat, d_obs + bump) <= rho);
    }
}

#[test]
fn tracking_log_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let logs: Vec<TrackingLog> = (0..3)
        .map(|id| TrackingLog { traj_id: id, commanded: random_path(&mut rng, 20), actual: random_path(&mut rng, 20) })
        .collect();
    let mut buf = Vec::new();
    write_tracking_log(&mut buf, &logs).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    assert!(text.starts_with("traj_id,t,cmd_x,cmd_y,cmd_z,act_x,act_y,act_z\n"));
    assert_eq!(read_tracking_log(buf.as_slice()).unwrap(), logs);
}

#[test]
fn summary_and_model_round_trip() {
    let rows: Vec<(usize, TrackingSample)> = synthetic(1, 20).into_iter().enumerate().collect();
    let mut buf = Vec::new();
    write_summary(&mut buf, &rows).unwrap();
    assert!(buf.starts_with(b"traj_id,v_max,d_h\n"));
    assert_eq!(read_summary(buf.as_slice()).unwrap(), rows);

    let m = RiskModel::new(-0.0123, 0.456, 0.95).unwrap();
    let mut buf = Vec::new();
    write_risk_model(&mut buf, &m).unwrap();
    assert_eq!(read_risk_model(buf.as_slice()).unwrap(), m);
}

proptest! {
    #[test]
    fn hausdorff_is_symmetric_and_bounded_by_pairwise_max(
        a in prop::collection::vec(prop::array::uniform3(-10.0f64..10.0), 1..30),
        b in prop::collection::vec(prop::array::uniform3(-10.0f64..10.0), 1..30),
    ) {
        let a: Vec<Vec3> = a.into_iter().map(Vec3::from).collect();
        let b: Vec<Vec3> = b.into_iter().map(Vec3::from).collect();
        let d = hausdorff_points(&a, &b).unwrap();
        prop_assert_eq!(d, hausdorff_points(&b, &a).unwrap());
        prop_assert_eq!(d, brute_hausdorff(&a, &b));
        let widest = a.iter().flat_map(|x| b.iter().map(move |y| (x - y).norm())).fold(0.0, f64::max);
        prop_assert!(d <= widest);
    }

    #[test]
    fn predict_is_monotone(a in -1.0f64..1.0, b in 0.0f64..1.0, v in 0.0f64..5.0, dv in 0.0f64..5.0) {
        let m = RiskModel::new(a, b, 0.95).unwrap();
        prop_assert!(predict_dhat(&m, v + dv) >= predict_dhat(&m, v));
        prop_assert!(predict_dhat(&m, v) >= 0.0);
    }
}
