//! Spectral quantities of the clique-expansion energy: two-sided Poincare
//! constants, decay envelopes of the free flow, resolvents and Yosida maps
//! of both the nonsmooth and the smoothed energy, Rayleigh quotients and
//! the first positive eigenvalue.

use thiserror::Error;

use crate::dynamics::ProxOptions;
use crate::energy::{self, EnergyParams, QExponent};
use crate::hypergraph::{Hypergraph, HypergraphError};
use crate::linalg::{mean, norm};
use crate::prox;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("hypergraph is not connected")]
    Disconnected,
    #[error("Newton iteration for the resolvent did not converge (residual {residual:.3e})")]
    NewtonNoConverge { residual: f64 },
    #[error("q-continuation for the nonsmooth resolvent did not converge")]
    NoConverge,
    #[error("x must be nonzero")]
    ZeroVector,
    #[error("x must be mean-free: |x . 1| = {pairing:.3e} exceeds 1e-10 ||x||")]
    NotMeanFree { pairing: f64 },
    #[error(transparent)]
    Energy(#[from] energy::EnergyError),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

impl From<HypergraphError> for SpectralError {
    fn from(e: HypergraphError) -> Self {
        match e {
            HypergraphError::Disconnected => SpectralError::Disconnected,
            other => SpectralError::InvalidInput(other.to_string()),
        }
    }
}

/// Two-sided Poincare constants of a connected hypergraph:
///
/// ```text
/// gamma ||x - mean||^p <= p phi_pq(x) <= Gamma ||x - mean||^p
/// ```
///
/// with gamma = min_e w(e) / (N^p diam^(p-1)) and
/// Gamma = (sum_e w(e) #e^p) N^(p/2); both independent of q.
#[derive(Debug, Clone, PartialEq)]
pub struct PoincareConstants {
    pub gamma: f64,
    pub big_gamma: f64,
    pub nu_e: f64,
    pub diameter: usize,
}

pub fn poincare_constants(g: &Hypergraph, p: f64) -> Result<PoincareConstants, SpectralError> {
    if !(p > 1.0) {
        return Err(SpectralError::InvalidInput(format!("p = {p} must exceed 1")));
    }
    let diameter = g.diameter()?;
    let total = g.vertex_count() as f64;
    let min_weight =
        g.edges().iter().map(|e| e.weight).fold(f64::INFINITY, f64::min);
    if !min_weight.is_finite() {
        return Err(SpectralError::InvalidInput("hypergraph has no edges".into()));
    }
    let gamma = min_weight / (total.powf(p) * (diameter as f64).powf(p - 1.0));
    let big_gamma = g
        .edges()
        .iter()
        .map(|e| e.weight * (e.vertices.len() as f64).powf(p))
        .sum::<f64>()
        * total.powf(p / 2.0);
    Ok(PoincareConstants { gamma, big_gamma, nu_e: g.nu_e(), diameter })
}

/// Decay envelopes (lower, upper) for X(t) = ||x(t) - mean(x0)|| along the
/// free flow, by the three-case formulas: for p < 2 the flow reaches zero
/// in finite time through (s)_+ = max(s, 0).
pub fn decay_envelope(
    constants: &PoincareConstants,
    p: f64,
    x0_dist: f64,
    t: f64,
) -> (f64, f64) {
    if x0_dist == 0.0 {
        return (0.0, 0.0);
    }
    let branch = |rate: f64| -> f64 {
        if (p - 2.0).abs() <= 1e-12 {
            x0_dist * (-rate * t).exp()
        } else if p < 2.0 {
            let base = x0_dist.powf(2.0 - p) - (2.0 - p) * rate * t;
            if base <= 0.0 {
                0.0
            } else {
                base.powf(1.0 / (2.0 - p))
            }
        } else {
            (x0_dist.powf(2.0 - p) + (p - 2.0) * rate * t).powf(-1.0 / (p - 2.0))
        }
    };
    (branch(constants.big_gamma), branch(constants.gamma))
}

/// Resolvent of the smooth energy: the solution of
/// `xi + lambda grad phi_pq(xi) = x`, by damped Newton with the symmetric
/// positive definite Jacobian I + lambda Hess. Tolerance on the residual
/// is 1e-10 (1 + ||x||).
pub fn resolvent_pq(
    g: &Hypergraph,
    p: f64,
    q: f64,
    lambda: f64,
    x: &[f64],
) -> Result<Vec<f64>, SpectralError> {
    if !(p > 1.0 && q > 1.0) {
        return Err(SpectralError::InvalidInput(format!(
            "resolvent of the smooth energy needs p, q > 1; got p = {p}, q = {q}"
        )));
    }
    if !(lambda > 0.0) {
        return Err(SpectralError::InvalidInput(format!("lambda = {lambda} must be positive")));
    }
    prox::prox_newton(g, p, q, lambda, x, &[], x, 1e-10 * (1.0 + norm(x)), 200)
        .map_err(|f| SpectralError::NewtonNoConverge { residual: f.residual })
}

/// Resolvent (prox) of the nonsmooth energy phi_p, by q-continuation of
/// [`resolvent_pq`] with q doubling 4 -> 512, warm started, until
/// successive stage solutions differ by < 1e-9. The sandwich bound
/// certifies the remaining continuation error.
pub fn resolvent_p(
    g: &Hypergraph,
    p: f64,
    lambda: f64,
    x: &[f64],
) -> Result<Vec<f64>, SpectralError> {
    if !(p >= 1.0) {
        return Err(SpectralError::InvalidInput(format!("p = {p} must be at least 1")));
    }
    if !(lambda > 0.0) {
        return Err(SpectralError::InvalidInput(format!("lambda = {lambda} must be positive")));
    }
    let opts = ProxOptions { stage_tol: 1e-9, ..ProxOptions::default() };
    prox::prox_q_continuation(
        g,
        p,
        lambda,
        x,
        &[],
        x,
        1e-10 * (1.0 + norm(x)),
        opts.stage_tol,
        opts.q_max,
        opts.max_newton_iters,
    )
    .map_err(|_| SpectralError::NoConverge)
}

/// Yosida approximation (x - resolvent)/lambda; with finite q the smooth
/// variant, with q = infinity the nonsmooth one. Under the coupled
/// schedule `q >= p log nu_E / log(lambda^(1+delta) + 1)` the two differ by
/// at most lambda^delta kappa ||x||^p in squared norm.
pub fn yosida(
    g: &Hypergraph,
    p: f64,
    q: QExponent,
    lambda: f64,
    x: &[f64],
) -> Result<Vec<f64>, SpectralError> {
    let res = match q {
        QExponent::Finite(q) => resolvent_pq(g, p, q, lambda, x)?,
        QExponent::Infinite => resolvent_p(g, p, lambda, x)?,
    };
    Ok(x.iter().zip(&res).map(|(a, b)| (a - b) / lambda).collect())
}

/// Smallest q admitted by the coupled Yosida schedule for given
/// (p, lambda, delta).
pub fn yosida_schedule_q(g: &Hypergraph, p: f64, lambda: f64, delta: f64) -> f64 {
    (p * g.nu_e().ln() / (lambda.powf(1.0 + delta) + 1.0).ln()).ceil()
}

/// Rayleigh quotient p phi_pq(x) / ||x||^p on the mean-free subspace.
pub fn rayleigh(g: &Hypergraph, p: f64, q: f64, x: &[f64]) -> Result<f64, SpectralError> {
    let n = norm(x);
    if n == 0.0 {
        return Err(SpectralError::ZeroVector);
    }
    let pairing: f64 = x.iter().sum();
    if pairing.abs() > 1e-10 * n {
        return Err(SpectralError::NotMeanFree { pairing: pairing.abs() });
    }
    let params = EnergyParams::finite(p, q)?;
    Ok(p * energy::phi_pq(g, &params, x)? / n.powf(p))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenOptions {
    pub restarts: usize,
    pub iters: usize,
    /// Stationarity target ||lambda zeta - grad phi_pq(zeta)||.
    pub tol: f64,
    pub seed: u64,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self { restarts: 16, iters: 50_000, tol: 1e-9, seed: 0x5eed }
    }
}

/// First positive eigenvalue of the smoothed energy and its minimizer.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenResult {
    /// lambda_{1,q} = min of the Rayleigh quotient over the unit sphere of
    /// the mean-free subspace.
    pub lambda1q: f64,
    /// Minimizer, mean-free and unit-norm; first nonzero component
    /// positive.
    pub zeta1q: Vec<f64>,
    pub restarts_used: usize,
    /// ||lambda zeta - grad phi_pq(zeta)|| at the reported minimizer.
    pub residual: f64,
}

fn project_mean_free(x: &mut [f64]) {
    let m = mean(x);
    for v in x.iter_mut() {
        *v -= m;
    }
}

fn normalize(x: &mut [f64]) {
    let n = norm(x);
    for v in x.iter_mut() {
        *v /= n;
    }
}

/// Minimizes the Rayleigh quotient over the unit sphere of the mean-free
/// subspace by projected gradient with backtracking, best of `restarts`
/// deterministic random starts. Ties between restarts resolve by value,
/// then lexicographically by the minimizer, so reruns are reproducible.
pub fn eigen_first_positive(
    g: &Hypergraph,
    p: f64,
    q: f64,
    opts: &EigenOptions,
) -> Result<EigenResult, SpectralError> {
    if !g.is_connected() {
        return Err(SpectralError::Disconnected);
    }
    if !(p > 1.0 && q > 1.0) {
        return Err(SpectralError::InvalidInput(format!(
            "eigenvalue solve needs p, q > 1; got p = {p}, q = {q}"
        )));
    }
    let params = EnergyParams::finite(p, q)?;
    let total = g.vertex_count();
    let mut best: Option<(f64, Vec<f64>, f64)> = None;
    let mut rng = crate::testing::rng(opts.seed);

    for _ in 0..opts.restarts {
        let mut zeta = crate::testing::sample_unit_cube(&mut rng, total);
        project_mean_free(&mut zeta);
        if norm(&zeta) < 1e-12 {
            continue;
        }
        normalize(&mut zeta);
        let mut value = p * energy::phi_pq(g, &params, &zeta)?;
        let mut step = 1.0;
        let mut residual = f64::INFINITY;
        for _ in 0..opts.iters {
            let grad = energy::grad_phi_pq(g, &params, &zeta)?;
            // stationarity on the unit sphere: grad = lambda zeta
            let res_vec: Vec<f64> =
                grad.iter().zip(&zeta).map(|(gi, zi)| value * zi - gi).collect();
            residual = norm(&res_vec);
            if residual <= opts.tol {
                break;
            }
            // backtracking on the Rayleigh value along the projected path
            let mut accepted = false;
            for _ in 0..60 {
                let mut trial: Vec<f64> =
                    zeta.iter().zip(&res_vec).map(|(zi, ri)| zi + step * ri).collect();
                project_mean_free(&mut trial);
                if norm(&trial) < 1e-15 {
                    step *= 0.5;
                    continue;
                }
                normalize(&mut trial);
                let trial_value = p * energy::phi_pq(g, &params, &trial)?;
                if trial_value < value - 1e-18 {
                    zeta = trial;
                    value = trial_value;
                    step *= 1.5;
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        let candidate = (value, zeta, residual);
        best = Some(match best.take() {
            None => candidate,
            Some(cur) => {
                // total order: value, then lexicographic minimizer
                if candidate.0 < cur.0
                    || (candidate.0 == cur.0
                        && candidate.1.partial_cmp(&cur.1) == Some(std::cmp::Ordering::Less))
                {
                    candidate
                } else {
                    cur
                }
            }
        });
    }

    let (lambda1q, mut zeta1q, residual) =
        best.ok_or_else(|| SpectralError::InvalidInput("all restarts degenerated".into()))?;
    // sign convention: first component of modulus above the tie tolerance
    // is positive
    if let Some(first) = zeta1q.iter().find(|v| v.abs() > 1e-12) {
        if *first < 0.0 {
            for v in zeta1q.iter_mut() {
                *v = -*v;
            }
        }
    }
    Ok(EigenResult { lambda1q, zeta1q, restarts_used: opts.restarts, residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::{phi_pq, EnergyParams};
    use crate::linalg::dist_to_mean;
    use crate::testing::{
        pair_graph, random_connected_hypergraph, rng, sample_unit_cube, triangle,
    };

    #[test]
    fn poincare_single_edge_values() {
        let g = pair_graph();
        let c = poincare_constants(&g, 2.0).unwrap();
        assert!((c.gamma - 0.25).abs() < 1e-15);
        assert!((c.big_gamma - 8.0).abs() < 1e-15);
        assert_eq!(c.diameter, 1);
        assert_eq!(c.nu_e, 1.0);
    }

    #[test]
    fn poincare_requires_connectivity() {
        let g = Hypergraph::new(4, 0, vec![(vec![0, 1], 1.0), (vec![2, 3], 1.0)]).unwrap();
        assert_eq!(poincare_constants(&g, 2.0).unwrap_err(), SpectralError::Disconnected);
    }

    /// gamma ||x - mean||^p <= p phi_pq <= Gamma ||x - mean||^p on random
    /// inputs, and both constants scale linearly with the weights.
    #[test]
    fn poincare_sandwich_and_scaling() {
        let mut r = rng(71);
        for trial in 0..5 {
            let g = random_connected_hypergraph(&mut r, 4, 1, 2, 4);
            for p in [1.5, 2.0, 3.0] {
                let c = poincare_constants(&g, p).unwrap();
                for q in [2.0, 8.0] {
                    let params = EnergyParams::finite(p, q).unwrap();
                    for _ in 0..200 {
                        let x = sample_unit_cube(&mut r, 5);
                        let d = dist_to_mean(&x);
                        let val = p * phi_pq(&g, &params, &x).unwrap();
                        assert!(
                            c.gamma * d.powf(p) <= val + 1e-12,
                            "trial {trial}: lower Poincare violated"
                        );
                        assert!(
                            val <= c.big_gamma * d.powf(p) + 1e-12,
                            "trial {trial}: upper Poincare violated"
                        );
                    }
                }
            }
            // weight scaling
            let scaled = Hypergraph::new(
                g.n_free(),
                g.m_controlled(),
                g.edges().iter().map(|e| (e.vertices.clone(), 3.0 * e.weight)).collect(),
            )
            .unwrap();
            let c1 = poincare_constants(&g, 2.0).unwrap();
            let c3 = poincare_constants(&scaled, 2.0).unwrap();
            assert!((c3.gamma - 3.0 * c1.gamma).abs() <= 1e-12 * c3.gamma);
            assert!((c3.big_gamma - 3.0 * c1.big_gamma).abs() <= 1e-12 * c3.big_gamma);
        }
    }

    #[test]
    fn decay_envelope_cases() {
        let c = PoincareConstants { gamma: 0.25, big_gamma: 8.0, nu_e: 1.0, diameter: 1 };
        // p = 2: exponentials
        let (lo, hi) = decay_envelope(&c, 2.0, 1.0, 2.0);
        assert!((lo - (-16.0f64).exp()).abs() < 1e-15);
        assert!((hi - (-0.5f64).exp()).abs() < 1e-15);
        // t = 0 returns the initial distance
        let (lo, hi) = decay_envelope(&c, 1.5, 0.7, 0.0);
        assert!((lo - 0.7).abs() < 1e-15 && (hi - 0.7).abs() < 1e-15);
        // p < 2 extinction for large t
        let (lo, hi) = decay_envelope(&c, 1.5, 1.0, 100.0);
        assert_eq!((lo, hi), (0.0, 0.0));
        // zero initial distance
        assert_eq!(decay_envelope(&c, 3.0, 0.0, 1.0), (0.0, 0.0));
    }

    #[test]
    fn resolvent_pq_examples() {
        let g = pair_graph();
        // constant vectors are fixed points
        let x = [0.4, 0.4];
        let z = resolvent_pq(&g, 2.0, 2.0, 0.5, &x).unwrap();
        assert!((z[0] - 0.4).abs() < 1e-12 && (z[1] - 0.4).abs() < 1e-12);
        // closed form d = (x1 - x2)/(1 + 2 lambda)
        let z = resolvent_pq(&g, 2.0, 2.0, 0.5, &[1.0, 0.0]).unwrap();
        assert!((z[0] - 0.75).abs() < 1e-12);
        assert!((z[1] - 0.25).abs() < 1e-12);
    }

    /// Mean preservation, nonexpansiveness, and the Yosida-gradient
    /// identity for the smooth resolvent.
    #[test]
    fn resolvent_pq_identities() {
        let mut r = rng(13);
        let g = random_connected_hypergraph(&mut r, 3, 1, 2, 3);
        for (p, q) in [(2.0, 2.0), (2.0, 8.0), (3.0, 4.0), (1.5, 4.0)] {
            let params = EnergyParams::finite(p, q).unwrap();
            for _ in 0..30 {
                let x = sample_unit_cube(&mut r, 4);
                let y = sample_unit_cube(&mut r, 4);
                let lambda = 0.2;
                let rx = resolvent_pq(&g, p, q, lambda, &x).unwrap();
                let ry = resolvent_pq(&g, p, q, lambda, &y).unwrap();
                assert!((mean(&rx) - mean(&x)).abs() <= 1e-12);
                let lhs = norm(&crate::linalg::sub(&rx, &ry));
                let rhs = norm(&crate::linalg::sub(&x, &y));
                assert!(lhs <= rhs + 1e-10, "resolvent expanded: {lhs} > {rhs}");
                // A^lambda(x) = grad phi_pq(R^lambda x)
                let yos = yosida(&g, p, QExponent::Finite(q), lambda, &x).unwrap();
                let grad = energy::grad_phi_pq(&g, &params, &rx).unwrap();
                let diff = norm(&crate::linalg::sub(&yos, &grad));
                assert!(diff <= 1e-9 * (1.0 + norm(&grad)));
            }
        }
    }

    #[test]
    fn resolvent_p_examples() {
        let g = pair_graph();
        let x = [0.4, 0.4];
        assert_eq!(resolvent_p(&g, 2.0, 0.5, &x).unwrap(), vec![0.4, 0.4]);
        // 2-uniform coincidence with the smooth resolvent
        let mut r = rng(3);
        for _ in 0..20 {
            let x = sample_unit_cube(&mut r, 2);
            let a = resolvent_p(&g, 2.0, 0.3, &x).unwrap();
            let b = resolvent_pq(&g, 2.0, 8.0, 0.3, &x).unwrap();
            assert!(norm(&crate::linalg::sub(&a, &b)) <= 1e-9);
        }
    }

    /// Theorem-type resolvent gap bound
    /// ||R_p x - R_pq x||^2 <= lambda kappa (nu^(p/q) - 1) ||x||^p
    /// on random 3-uniform instances.
    #[test]
    fn resolvent_gap_bound_holds() {
        let mut r = rng(37);
        for _ in 0..3 {
            let g = random_connected_hypergraph(&mut r, 4, 0, 2, 3);
            let nu = g.nu_e();
            for p in [2.0, 3.0] {
                let params = EnergyParams::finite(p, 2.0).unwrap();
                let (kappa, _) = energy::kappa_bounds(&g, &params);
                let lambda = 0.5;
                for q in [4.0, 8.0, 16.0] {
                    for _ in 0..30 {
                        let x = sample_unit_cube(&mut r, 4);
                        let rp = resolvent_p(&g, p, lambda, &x).unwrap();
                        let rq = resolvent_pq(&g, p, q, lambda, &x).unwrap();
                        let gap = norm_sq(&crate::linalg::sub(&rp, &rq));
                        let bound = lambda * kappa * (nu.powf(p / q) - 1.0) * norm(&x).powf(p);
                        assert!(
                            gap <= bound + 1e-12,
                            "gap {gap:.3e} exceeds bound {bound:.3e} at q={q}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn yosida_examples() {
        let g = pair_graph();
        // constants map to zero
        let y = yosida(&g, 2.0, QExponent::Finite(2.0), 0.5, &[0.7, 0.7]).unwrap();
        assert!(norm(&y) < 1e-12);
        // single-edge hand value from the resolvent example
        let y = yosida(&g, 2.0, QExponent::Infinite, 0.5, &[1.0, 0.0]).unwrap();
        assert!((y[0] - 0.5).abs() < 1e-9);
        assert!((y[1] + 0.5).abs() < 1e-9);
    }

    /// Yosida gap bound under the coupled schedule q(lambda, delta).
    #[test]
    fn yosida_gap_bound_under_schedule() {
        let mut r = rng(41);
        let g = random_connected_hypergraph(&mut r, 4, 0, 1, 3);
        let p = 2.0;
        let params = EnergyParams::finite(p, 2.0).unwrap();
        let (kappa, _) = energy::kappa_bounds(&g, &params);
        let delta = 0.5;
        for lambda in [1e-1, 1e-2] {
            let q = yosida_schedule_q(&g, p, lambda, delta);
            for _ in 0..20 {
                let x = sample_unit_cube(&mut r, 4);
                let a_inf = yosida(&g, p, QExponent::Infinite, lambda, &x).unwrap();
                let a_q = yosida(&g, p, QExponent::Finite(q), lambda, &x).unwrap();
                let gap = norm_sq(&crate::linalg::sub(&a_inf, &a_q));
                let bound = lambda.powf(delta) * kappa * norm(&x).powf(p);
                assert!(
                    gap <= bound + 1e-12,
                    "Yosida gap {gap:.3e} exceeds {bound:.3e} at lambda={lambda}, q={q}"
                );
            }
        }
    }

    #[test]
    fn rayleigh_examples() {
        let g = pair_graph();
        let v = rayleigh(&g, 2.0, 2.0, &[1.0, -1.0]).unwrap();
        assert!((v - 2.0).abs() < 1e-14);
        // scale invariance
        let v2 = rayleigh(&g, 2.0, 2.0, &[-3.0, 3.0]).unwrap();
        assert!((v - v2).abs() < 1e-13);
        assert_eq!(rayleigh(&g, 2.0, 2.0, &[0.0, 0.0]).unwrap_err(), SpectralError::ZeroVector);
        assert!(matches!(
            rayleigh(&g, 2.0, 2.0, &[1.0, 0.0]),
            Err(SpectralError::NotMeanFree { .. })
        ));
        // bounded below by gamma on random mean-free vectors
        let mut r = rng(5);
        let g = random_connected_hypergraph(&mut r, 4, 0, 2, 3);
        let c = poincare_constants(&g, 2.0).unwrap();
        for _ in 0..100 {
            let mut x = sample_unit_cube(&mut r, 4);
            project_mean_free(&mut x);
            if norm(&x) < 1e-9 {
                continue;
            }
            let v = rayleigh(&g, 2.0, 4.0, &x).unwrap();
            assert!(v >= c.gamma - 1e-12);
        }
    }

    #[test]
    fn eigen_single_edge() {
        let g = pair_graph();
        let result = eigen_first_positive(&g, 2.0, 2.0, &EigenOptions::default()).unwrap();
        assert!((result.lambda1q - 2.0).abs() <= 1e-8, "lambda {:.12e}", result.lambda1q);
        let expected = 1.0 / 2f64.sqrt();
        assert!((result.zeta1q[0] - expected).abs() <= 1e-6);
        assert!((result.zeta1q[1] + expected).abs() <= 1e-6);
        assert!(result.residual <= 1e-8);
        // invariants: mean-free, unit norm, sign convention
        assert!(result.zeta1q.iter().sum::<f64>().abs() <= 1e-12);
        assert!((norm(&result.zeta1q) - 1.0).abs() <= 1e-12);
        assert!(result.zeta1q[0] > 0.0);
    }

    /// The eigenvalue sandwich lambda_1 <= lambda_{1,q} <= nu^(p/q) lambda_1
    /// with the q = 512 stage as the nonsmooth reference, plus the
    /// Poincare bounds.
    #[test]
    fn eigen_sandwich_on_three_uniform_instances() {
        let mut r = rng(97);
        for _ in 0..2 {
            let g = random_connected_hypergraph(&mut r, 3, 1, 2, 3);
            let p = 2.0;
            let c = poincare_constants(&g, p).unwrap();
            let nu = g.nu_e();
            let opts = EigenOptions { restarts: 8, ..EigenOptions::default() };
            let reference = eigen_first_positive(&g, p, 512.0, &opts).unwrap().lambda1q;
            for q in [4.0, 8.0, 16.0] {
                let got = eigen_first_positive(&g, p, q, &opts).unwrap();
                assert!(
                    got.lambda1q >= reference - 1e-7,
                    "lambda_1q {} below reference {reference}",
                    got.lambda1q
                );
                assert!(
                    got.lambda1q <= nu.powf(p / q) * reference + 1e-7,
                    "lambda_1q {} above sandwich at q={q}",
                    got.lambda1q
                );
                assert!(got.lambda1q >= c.gamma - 1e-9);
                assert!(got.lambda1q <= c.big_gamma + 1e-9);
                assert!(got.residual <= 1e-7, "residual {:.3e}", got.residual);
            }
        }
    }

    /// Decay envelopes bracket the free flow.
    #[test]
    fn envelopes_bracket_free_flow() {
        let mut r = rng(53);
        for p in [1.5, 2.0, 4.0] {
            let g = random_connected_hypergraph(&mut r, 3, 1, 1, 3);
            let c = poincare_constants(&g, p).unwrap();
            let params = EnergyParams::finite(p, 4.0).unwrap();
            let grid = crate::dynamics::TimeGrid::new(1.0, 2000).unwrap();
            let x0 = sample_unit_cube(&mut r, 4);
            let traj = crate::dynamics::solve_free(&g, &params, &x0, grid).unwrap();
            let x0_dist = dist_to_mean(&x0);
            for k in 0..grid.len() {
                let (lo, hi) = decay_envelope(&c, p, x0_dist, grid.node(k));
                let got = dist_to_mean(traj.state(k));
                assert!(
                    lo - 1e-6 <= got && got <= hi + 1e-6,
                    "p={p} k={k}: {got} outside [{lo}, {hi}]"
                );
            }
        }
    }
}
