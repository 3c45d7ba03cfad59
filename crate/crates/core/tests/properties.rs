use approx::assert_relative_eq;
use nalgebra::DMatrix;
use proptest::prelude::*;
use ybus_core::grid::{build_admittance, kron_reduce};
use ybus_core::signal::cartesian_moments_exact;
use ybus_core::simulator::generate_feeder;
use ybus_core::solvers::soft_threshold;
use ybus_core::{Complex64, PolarNoise, ReductionMap};

fn line_params(r: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![Just(0.0), 0.0..40.0f64], r).prop_flat_map(move |g| {
        prop::collection::vec(prop_oneof![Just(0.0), 0.0..40.0f64], r).prop_map(move |b| {
            let mut y = g.clone();
            y.extend(b.iter().map(|x| -x));
            y
        })
    })
}

fn sized_params() -> impl Strategy<Value = (usize, Vec<f64>)> {
    (2usize..10).prop_flat_map(|n| (Just(n), line_params(n * (n - 1) / 2)))
}

fn permutation(n: usize) -> impl Strategy<Value = Vec<usize>> {
    Just((0..n).collect::<Vec<_>>()).prop_shuffle()
}

fn row_sum_residual(y: &DMatrix<Complex64>) -> f64 {
    y.row_iter().map(|row| row.iter().sum::<Complex64>().norm()).fold(0.0, f64::max)
}

proptest! {
    #[test]
    fn expanded_l1_norm_is_four_times_reduced((n, y_r) in sized_params()) {
        let map = ReductionMap::full(n);
        let full = map.expand(&y_r).unwrap();
        let l1_full: f64 = full.iter().map(|x| x.abs()).sum();
        let l1_red: f64 = y_r.iter().map(|x| x.abs()).sum();
        prop_assert!((l1_full - 4.0 * l1_red).abs() <= 1e-12 * l1_red.max(1.0));
    }

    #[test]
    fn expanded_l1_norm_never_exceeds_four_times_reduced(
        (n, y_r) in (2usize..8).prop_flat_map(|n| (Just(n), prop::collection::vec(-10.0..10.0f64, n * (n - 1))))
    ) {
        let full = ReductionMap::full(n).expand(&y_r).unwrap();
        let l1_full: f64 = full.iter().map(|x| x.abs()).sum();
        let l1_red: f64 = y_r.iter().map(|x| x.abs()).sum();
        prop_assert!(l1_full <= 4.0 * l1_red * (1.0 + 1e-12));
    }

    #[test]
    fn reduction_round_trips((n, y_r) in sized_params()) {
        let map = ReductionMap::full(n);
        let back = map.reduce(&map.expand(&y_r).unwrap()).unwrap();
        for (a, b) in back.iter().zip(&y_r) {
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
        let y = map.expand_matrix(&y_r).unwrap();
        prop_assert!(row_sum_residual(&y) <= 1e-10);
    }

    #[test]
    fn kron_reduction_keeps_a_symmetric_laplacian(
        (n, seed, drop) in (4usize..14).prop_flat_map(|n| (Just(n), any::<u64>(), prop::collection::vec(any::<bool>(), n)))
    ) {
        let topology = generate_feeder(n, 0.3, 2.0, 10.0, seed).unwrap();
        let y = build_admittance(&topology).unwrap();
        // Keep the slack plus at least one other bus.
        let mut keep: Vec<usize> = (0..n).filter(|&h| h == 0 || !drop[h]).collect();
        if keep.len() < 2 {
            keep.push(n - 1);
        }
        let red = kron_reduce(&y, &keep).unwrap();
        let e = red.entries();
        let scale = y.max_abs();
        prop_assert!(row_sum_residual(e) <= 1e-9 * scale);
        prop_assert!((e - e.transpose()).iter().all(|z| z.norm() <= 1e-9 * scale));
        prop_assert!(red.structure().laplacian);
    }

    #[test]
    fn kron_reduction_in_stages_equals_one_shot(seed in any::<u64>()) {
        let y = build_admittance(&generate_feeder(10, 0.3, 2.0, 10.0, seed).unwrap()).unwrap();
        let one_shot = kron_reduce(&y, &[0, 2, 4, 6, 8]).unwrap();
        let stage = kron_reduce(&y, &[0, 2, 4, 5, 6, 8, 9]).unwrap();
        let two_step = kron_reduce(&stage, &[0, 1, 2, 4, 5]).unwrap();
        let diff = (one_shot.entries() - two_step.entries()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        prop_assert!(diff <= 1e-9 * y.max_abs());
    }

    #[test]
    fn admittance_assembly_commutes_with_relabeling(
        (n, seed, perm) in (3usize..12).prop_flat_map(|n| (Just(n), any::<u64>(), permutation(n)))
    ) {
        let topology = generate_feeder(n, 0.3, 2.0, 10.0, seed).unwrap();
        let y = build_admittance(&topology).unwrap();
        let yp = build_admittance(&topology.permuted(&perm)).unwrap();
        for h in 0..n {
            for k in 0..n {
                prop_assert!((yp.get(perm[h], perm[k]) - y.get(h, k)).norm() <= 1e-12 * y.max_abs());
            }
        }
    }

    #[test]
    fn soft_threshold_is_the_asymmetric_prox(x in -10.0..10.0f64, kp in 0.0..5.0f64, km in 0.0..5.0f64) {
        let z = soft_threshold(x, kp, km);
        let cost = |z: f64| 0.5 * (z - x).powi(2) + kp * z.max(0.0) + km * (-z).max(0.0);
        let best = cost(z);
        for k in -200..=200 {
            let probe = z + k as f64 * 0.01;
            prop_assert!(cost(probe) >= best - 1e-12);
        }
    }

    #[test]
    fn soft_threshold_is_nonexpansive(a in -10.0..10.0f64, b in -10.0..10.0f64, kp in 0.0..5.0f64, km in 0.0..5.0f64) {
        prop_assert!((soft_threshold(a, kp, km) - soft_threshold(b, kp, km)).abs() <= (a - b).abs() + 1e-15);
    }

    #[test]
    fn cartesian_noise_covariance_is_positive_semidefinite(
        v in 0.1..2.0f64,
        theta in -3.2..3.2f64,
        se in 0.0..0.05f64,
        sd in 0.0..0.05f64,
    ) {
        let m = cartesian_moments_exact(v, theta, PolarNoise::new(se, sd));
        prop_assert!(m.var_re() >= 0.0 && m.var_im() >= 0.0);
        prop_assert!(m.var_re() * m.var_im() - m.cov_reim().powi(2) >= -1e-30);
        // Total variance does not depend on the angle.
        let m0 = cartesian_moments_exact(v, 0.0, PolarNoise::new(se, sd));
        let total = m.var_re() + m.var_im();
        prop_assert!((total - (m0.var_re() + m0.var_im())).abs() <= 1e-12 * total.max(1e-300));
    }
}

#[test]
fn noise_free_moments_vanish() {
    let m = cartesian_moments_exact(1.2, 0.4, PolarNoise::new(0.0, 0.0));
    assert_eq!(m.mean, [0.0, 0.0]);
    assert_relative_eq!(m.var_re() + m.var_im(), 0.0);
}
