//! Shared inputs for the benchmarks.

use ybus_core::estimators::{prior_sparsity, PriorStack};
use ybus_core::signal::Preprocessing;
use ybus_core::simulator::run_scenario;
use ybus_core::solvers::{auto_lambda, initial_estimate, Problem};
use ybus_core::{Measurements, ReductionMap, Scenario};

/// Feeder with `nodes` buses, every third one after the slack unloaded,
/// sampled `samples` times after averaging windows of 10.
pub fn scenario(nodes: usize, samples: usize) -> Scenario {
    let mut s = Scenario::default();
    s.grid.nodes = nodes;
    s.loads.samples = samples * 10;
    s.loads.unloaded = (3..nodes).step_by(3).collect();
    s.preprocess = Preprocessing { window: 10, ..Preprocessing::default() };
    s
}

pub fn measurements(nodes: usize, samples: usize) -> Measurements {
    run_scenario(&scenario(nodes, samples)).expect("benchmark scenario runs").measurements().expect("noisy data")
}

/// l1-regularized problem with the automatic weight, and its TLS start.
pub fn l1_problem(meas: &Measurements) -> (Problem, Vec<f64>) {
    let map = ReductionMap::full(meas.n());
    let bare = Problem::new(meas, map.clone(), PriorStack::new()).expect("problem builds");
    let lambda = auto_lambda(&bare, 3.0).expect("lambda");
    let term = prior_sparsity(&vec![1.0; map.real_dim()], lambda).expect("prior");
    let problem = bare.with_priors(PriorStack::new().with(term)).expect("problem builds");
    let y0 = initial_estimate(meas, &problem).expect("TLS start");
    (problem, y0)
}
