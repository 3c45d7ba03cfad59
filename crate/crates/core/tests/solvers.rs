use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ybus_core::estimators::{estimate_tls, prior_nondiag, prior_sparsity, PriorStack};
use ybus_core::signal::Preprocessing;
use ybus_core::simulator::run_scenario;
use ybus_core::solvers::{auto_lambda, initial_estimate, solve, Problem};
use ybus_core::{Algorithm, Error, Measurements, ReductionMap, Scenario, SolverConfig};

fn small_measurements() -> Measurements {
    let mut s = Scenario::default();
    s.grid.nodes = 6;
    s.loads.samples = 1500;
    s.loads.unloaded = vec![3];
    s.preprocess = Preprocessing { window: 10, ..Preprocessing::default() };
    run_scenario(&s).unwrap().measurements().unwrap()
}

fn l1_problem(meas: &Measurements) -> Problem {
    let map = ReductionMap::full(meas.n());
    let bare = Problem::new(meas, map.clone(), PriorStack::new()).unwrap();
    let lambda = auto_lambda(&bare, 3.0).unwrap();
    let term = prior_sparsity(&vec![1.0; map.real_dim()], lambda).unwrap();
    bare.with_priors(PriorStack::new().with(term)).unwrap()
}

#[test]
fn solvers_reach_the_same_l1_optimum() {
    let meas = small_measurements();
    let problem = l1_problem(&meas);
    let y0 = initial_estimate(&meas, &problem).unwrap();
    let values: Vec<f64> = [Algorithm::Bcd, Algorithm::Bar, Algorithm::Admm]
        .iter()
        .map(|&a| {
            let (r, _) = solve(&problem, &SolverConfig::new(a), &y0).unwrap();
            assert!(r.converged, "{a:?} did not converge");
            problem.profile_objective(&r.y_hat).unwrap()
        })
        .collect();
    for v in &values[1..] {
        assert!((v - values[0]).abs() <= 1e-6 * values[0].abs(), "{values:?}");
    }
}

#[test]
fn bcd_objective_never_increases() {
    let meas = small_measurements();
    let problem = l1_problem(&meas);
    let y0 = initial_estimate(&meas, &problem).unwrap();
    let (_, trace) = solve(&problem, &SolverConfig::new(Algorithm::Bcd), &y0).unwrap();
    let obj = trace.objectives();
    assert!(obj.len() > 1);
    for w in obj.windows(2) {
        assert!(w[1] <= w[0], "objective went from {} to {}", w[0], w[1]);
    }
}

#[test]
fn mle_is_a_local_minimum_of_the_profile_objective() {
    let meas = small_measurements();
    let problem = Problem::new(&meas, ReductionMap::full(meas.n()), PriorStack::new()).unwrap();
    let y0 = initial_estimate(&meas, &problem).unwrap();
    let (r, _) = solve(&problem, &SolverConfig::new(Algorithm::Bar), &y0).unwrap();
    let best = problem.profile_objective(&r.y_hat).unwrap();
    let scale = r.y_hat.iter().map(|x| x.abs()).fold(0.0, f64::max);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let probe: Vec<f64> = r.y_hat.iter().map(|x| x + 1e-4 * scale * rng.random_range(-1.0..1.0)).collect();
        assert!(problem.profile_objective(&probe).unwrap() >= best * (1.0 - 1e-12));
    }
}

#[test]
fn block_step_descends_toward_the_joint_optimum() {
    let meas = small_measurements();
    let problem = Problem::new(&meas, ReductionMap::full(meas.n()), PriorStack::new()).unwrap();
    let y0 = initial_estimate(&meas, &problem).unwrap();
    let joint = solve(&problem, &SolverConfig::new(Algorithm::Bcd), &y0).unwrap().0;
    // The pure block step crawls (about 1e5 iterations here), so only its
    // direction and bound are checked.
    let mut config = SolverConfig::new(Algorithm::Bcd);
    config.joint_step = false;
    config.max_iter = 300;
    let (block, trace) = solve(&problem, &config, &y0).unwrap();
    let obj = trace.objectives();
    assert!(obj.windows(2).all(|w| w[1] <= w[0]));
    let start = problem.profile_objective(&y0).unwrap();
    let (a, b) = (problem.profile_objective(&joint.y_hat).unwrap(), problem.profile_objective(&block.y_hat).unwrap());
    assert!(b < start && a <= b, "start {start}, joint {a}, block {b}");
}

#[test]
fn admm_rejects_non_diagonal_priors() {
    let meas = small_measurements();
    let map = ReductionMap::full(meas.n());
    let tls = estimate_tls(&meas.v, &meas.i).unwrap();
    let diag: Vec<_> = (0..meas.n()).map(|h| tls.matrix.get(h, h)).collect();
    let term = prior_nondiag(&map, &diag, 1.0).unwrap();
    let problem = Problem::new(&meas, map, PriorStack::new().with(term)).unwrap();
    let y0 = initial_estimate(&meas, &problem).unwrap();
    let err = solve(&problem, &SolverConfig::new(Algorithm::Admm), &y0).unwrap_err();
    assert!(matches!(err, Error::UnsupportedPrior(_)), "{err}");
    assert!(solve(&problem, &SolverConfig::new(Algorithm::Bar), &y0).is_ok());
}

#[test]
fn repeated_solves_are_bitwise_identical() {
    let meas = small_measurements();
    let problem = l1_problem(&meas);
    let y0 = initial_estimate(&meas, &problem).unwrap();
    for algorithm in [Algorithm::Bcd, Algorithm::Bar, Algorithm::Admm] {
        let config = SolverConfig::new(algorithm);
        let (a, ta) = solve(&problem, &config, &y0).unwrap();
        let (b, tb) = solve(&problem, &config, &y0).unwrap();
        assert!(a.y_hat.iter().zip(&b.y_hat).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert!(ta.same_path(&tb));
    }
}
