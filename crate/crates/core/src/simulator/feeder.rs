use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::{GridTopology, LineSpec};

/// Random radial feeder rooted at node 0.
///
/// Node `k` attaches to node `k - 1` (extending the current branch) or,
/// with probability `branching`, to a uniformly chosen earlier node. Line
/// impedances have a common `R/X = rx_ratio` and magnitudes drawn uniformly
/// in `[0.5, 1.5] / admittance_scale`.
pub fn generate_feeder(n: usize, branching: f64, rx_ratio: f64, admittance_scale: f64, seed: u64) -> Result<GridTopology> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("a feeder needs at least 2 nodes, got {n}")));
    }
    if !(0.0..=1.0).contains(&branching) {
        return Err(Error::InvalidArgument(format!("branching probability {branching} outside [0, 1]")));
    }
    if !(rx_ratio > 0.0) || !(admittance_scale > 0.0) {
        return Err(Error::InvalidArgument("rx_ratio and admittance_scale must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lines = Vec::with_capacity(n - 1);
    for k in 1..n {
        let parent = if k > 1 && rng.random_bool(branching) { rng.random_range(0..k) } else { k - 1 };
        lines.push(LineSpec::new(parent, k, random_line(&mut rng, rx_ratio, admittance_scale)));
    }
    let topo = GridTopology::new(n, lines);
    topo.validate()?;
    Ok(topo)
}

fn random_line(rng: &mut ChaCha8Rng, rx_ratio: f64, admittance_scale: f64) -> Complex64 {
    let mag = rng.random_range(0.5..1.5) / admittance_scale;
    let x = mag / (1.0 + rx_ratio * rx_ratio).sqrt();
    let z = Complex64::new(rx_ratio * x, x);
    z.inv()
}

/// Adds `count` random extra lines between nodes that are not yet
/// connected, making the feeder meshed.
pub fn add_loops(topology: &mut GridTopology, count: usize, rx_ratio: f64, admittance_scale: f64, seed: u64) -> Result<()> {
    let n = topology.n;
    let free = n * (n - 1) / 2 - topology.merged_lines().len();
    if count > free {
        return Err(Error::InvalidArgument(format!("cannot add {count} loops, only {free} node pairs are free")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_100b);
    let mut added = 0;
    while added < count {
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        if a == b || topology.merged_lines().contains_key(&(a.min(b), a.max(b))) {
            continue;
        }
        topology.lines.push(LineSpec::new(a, b, random_line(&mut rng, rx_ratio, admittance_scale)));
        added += 1;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_nodes_give_one_line() {
        let t = generate_feeder(2, 0.5, 2.0, 10.0, 1).unwrap();
        assert_eq!(t.lines.len(), 1);
    }

    #[test]
    fn tree_is_connected_with_n_minus_one_lines() {
        for seed in 0..10 {
            let t = generate_feeder(9, 0.4, 1.5, 20.0, seed).unwrap();
            assert_eq!(t.lines.len(), 8);
            assert!(t.validate().is_ok());
        }
    }

    #[test]
    fn rx_ratio_is_honored() {
        let t = generate_feeder(15, 0.3, 2.5, 30.0, 3).unwrap();
        for l in &t.lines {
            assert!((l.g / -l.b - 2.5).abs() < 1e-12);
            assert!(l.g > 0.0 && l.b < 0.0);
        }
    }

    #[test]
    fn loops_add_lines() {
        let mut t = generate_feeder(6, 0.0, 1.0, 10.0, 0).unwrap();
        add_loops(&mut t, 2, 1.0, 10.0, 0).unwrap();
        assert_eq!(t.merged_lines().len(), 7);
    }
}
