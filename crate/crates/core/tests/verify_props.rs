mod common;

use afn_core::base::ProjectionMatrix;
use afn_core::dataset::exact_diameter;
use afn_core::params::{derive_params, ParamOverrides};
use afn_core::rng::{standard_normal_vec, RngStream};
use afn_core::vector::{norm, Point};
use afn_core::verify::{goodness_transfer_check, k_half_concentration, transfer_with_diameter, GoodnessSetup};
use common::gaussian_data;
use rand::Rng;

#[test]
fn goodness_transfers_to_close_queries() {
    let mut evaluated = 0;
    for inst in 0..200u64 {
        let mut rng = RngStream::new(111, inst).rng();
        let n = rng.random_range(16..=128);
        let d = rng.random_range(2..=16);
        let p = gaussian_data(n, d, RngStream::new(112, inst));
        let ov = ParamOverrides { const_n: Some(8.0), ..Default::default() };
        let params = derive_params(n, d, 2.0, 0.0, &ov).unwrap();
        let a = ProjectionMatrix::gaussian(d, params.n_proj, n, &mut rng);
        let q = standard_normal_vec(d, &mut rng);
        let diameter = exact_diameter(&p);
        let dir = standard_normal_vec(d, &mut rng);
        let step = diameter / (n as f64).powi(3) / norm(&dir) * (1.0 - 1e-9);
        let q2: Vec<f64> = q.iter().zip(&dir).map(|(x, u)| x + step * u).collect();
        let r = transfer_with_diameter(&p, diameter, &q, &q2, &a, 2.0, params.delta, params.t).unwrap();
        assert!(r.hypotheses_met, "{r:?}");
        if let Some(holds) = r.holds {
            evaluated += 1;
            assert!(holds, "counterexample at instance {inst}: {r:#?}");
        }
    }
    assert!(evaluated >= 100, "{evaluated}");
}

#[test]
fn transfer_guard_reports_unmet_hypotheses() {
    let p = gaussian_data(32, 4, RngStream::new(113, 0));
    let mut rng = RngStream::new(113, 1).rng();
    let a = ProjectionMatrix::gaussian(4, 30, 32, &mut rng);
    let q = standard_normal_vec(4, &mut rng);
    let diameter = exact_diameter(&p);
    let q2: Vec<f64> = q.iter().enumerate().map(|(i, x)| if i == 0 { x + diameter } else { *x }).collect();
    let r = goodness_transfer_check(&p, &q, &q2, &a, 2.0, 1.0 / 32.0, 2.0).unwrap();
    assert!(!r.close_enough && !r.hypotheses_met);
    assert_eq!(r.holds, None);
    let r = goodness_transfer_check(&p, &q, &q, &a, 2.0, 0.0, 2.0).unwrap();
    assert!(!r.slack_ok);
    // identical queries: delta-good implies 0-good
    let r = goodness_transfer_check(&p, &q, &q, &a, 2.0, 1.0 / 32.0, 2.0).unwrap();
    if r.q_report.is_good {
        assert_eq!(r.holds, Some(true));
    }
}

fn setup(n: usize, d: usize) -> GoodnessSetup {
    let params = derive_params(n, d, 2.0, 0.0, &ParamOverrides::default()).unwrap();
    GoodnessSetup { n_proj: params.n_proj, norm_cap: n, c: 2.0, delta: params.delta, t: params.t }
}

fn sample_queries(count: usize, d: usize, stream: RngStream) -> Vec<Point> {
    let mut rng = stream.rng();
    (0..count).map(|_| Point::new(standard_normal_vec(d, &mut rng)).unwrap()).collect()
}

#[test]
fn more_matrices_fail_less() {
    let (n, d) = (256, 16);
    let p = gaussian_data(n, d, RngStream::new(114, 0));
    let qs = sample_queries(10, d, RngStream::new(114, 1));
    let s = setup(n, d);
    let small = k_half_concentration(&p, &qs, 8, 200, s, RngStream::new(115, 8)).unwrap();
    let large = k_half_concentration(&p, &qs, 64, 200, s, RngStream::new(115, 64)).unwrap();
    assert!(large.failure_fraction < small.failure_fraction, "{small:?} {large:?}");
}

#[test]
fn single_matrix_failure_is_the_complement_rate() {
    let (n, d) = (128, 8);
    let p = gaussian_data(n, d, RngStream::new(116, 0));
    let qs = sample_queries(20, d, RngStream::new(116, 1));
    let r = k_half_concentration(&p, &qs, 1, 100, setup(n, d), RngStream::new(117, 0)).unwrap();
    assert!((r.failure_fraction - (1.0 - r.per_matrix_rate)).abs() < 1e-12);
}

#[test]
fn failure_is_non_increasing_in_k_by_majority() {
    let (n, d) = (128, 8);
    let s = setup(n, d);
    let mut votes = 0;
    for seed in 0..3u64 {
        let p = gaussian_data(n, d, RngStream::new(118, seed));
        let qs = sample_queries(8, d, RngStream::new(119, seed));
        let f: Vec<f64> = [1usize, 4, 16]
            .iter()
            .map(|&k| {
                k_half_concentration(&p, &qs, k, 40, s, RngStream::new(120 + seed, k as u64)).unwrap().failure_fraction
            })
            .collect();
        if f.windows(2).all(|w| w[1] <= w[0]) {
            votes += 1;
        }
    }
    assert!(votes >= 2);
}
