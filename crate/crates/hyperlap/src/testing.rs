//! Deterministic instances and independent numerical oracles.
//!
//! Used by the test suites and by the `verify` subcommand; everything here
//! is seed-driven so that identical seeds give byte-identical runs.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dynamics::{ControlPath, TimeGrid};
use crate::hypergraph::Hypergraph;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform sample from [-1, 1]^n.
pub fn sample_unit_cube(r: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| 2.0 * r.random::<f64>() - 1.0).collect()
}

/// Single hyperedge {1,2,3} with weight 1, two free vertices and one
/// controlled.
pub fn triangle() -> Hypergraph {
    Hypergraph::new(2, 1, vec![(vec![0, 1, 2], 1.0)]).expect("valid")
}

/// Single edge {1,2} with weight 1, one free and one controlled vertex.
pub fn pair_graph() -> Hypergraph {
    Hypergraph::new(1, 1, vec![(vec![0, 1], 1.0)]).expect("valid")
}

/// Connected random hypergraph: a spanning path of 2-edges plus
/// `extra_edges` random hyperedges with 2..=max_edge_size vertices.
/// Weights are uniform in [0.5, 1.5].
pub fn random_connected_hypergraph(
    r: &mut ChaCha8Rng,
    n_free: usize,
    m_controlled: usize,
    extra_edges: usize,
    max_edge_size: usize,
) -> Hypergraph {
    let total = n_free + m_controlled;
    assert!(total >= 2);
    let mut edges = Vec::new();
    for v in 0..total - 1 {
        edges.push((vec![v, v + 1], 0.5 + r.random::<f64>()));
    }
    for _ in 0..extra_edges {
        let size = 2 + r.random_range(0..=max_edge_size.min(total) - 2);
        let mut picked = Vec::with_capacity(size);
        while picked.len() < size {
            let v = r.random_range(0..total);
            if !picked.contains(&v) {
                picked.push(v);
            }
        }
        edges.push((picked, 0.5 + r.random::<f64>()));
    }
    Hypergraph::new(n_free, m_controlled, edges).expect("valid random hypergraph")
}

/// Smooth random control path: each controlled component is a three-term
/// sine series with coefficients of the given amplitude.
pub fn smooth_control(
    r: &mut ChaCha8Rng,
    grid: TimeGrid,
    n_free: usize,
    m_controlled: usize,
    amplitude: f64,
) -> ControlPath {
    let horizon = grid.horizon();
    let coeffs: Vec<Vec<(f64, f64)>> = (0..m_controlled)
        .map(|_| {
            (1..=3)
                .map(|_| {
                    (
                        amplitude * (2.0 * r.random::<f64>() - 1.0),
                        std::f64::consts::TAU * r.random::<f64>(),
                    )
                })
                .collect()
        })
        .collect();
    let rows: Vec<Vec<f64>> = (0..grid.len())
        .map(|k| {
            let t = grid.node(k);
            coeffs
                .iter()
                .map(|c| {
                    c.iter()
                        .enumerate()
                        .map(|(h, (amp, phase))| {
                            amp * ((h + 1) as f64 * std::f64::consts::PI * t / horizon + phase).sin()
                        })
                        .sum()
                })
                .collect()
        })
        .collect();
    ControlPath::from_controlled(grid, n_free, &rows).expect("valid control path")
}

/// Central finite differences (f(x+he_i) - f(x-he_i)) / 2h, the standard
/// oracle against which analytic gradients are checked.
pub fn central_diff_gradient<F>(f: F, x: &[f64], step: f64) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64,
{
    let mut grad = Vec::with_capacity(x.len());
    let mut work = x.to_vec();
    for i in 0..x.len() {
        work[i] = x[i] + step;
        let fp = f(&work);
        work[i] = x[i] - step;
        let fm = f(&work);
        work[i] = x[i];
        grad.push((fp - fm) / (2.0 * step));
    }
    grad
}
