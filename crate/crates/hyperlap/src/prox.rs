//! Damped-Newton solver for proximal problems of the smooth energy:
//!
//! ```text
//! minimize over z:   ||z - anchor||^2 / (2 tau) + phi_pq(z)
//! subject to:        z_i = value_i   for the fixed coordinates
//! ```
//!
//! The optimality system on the free coordinates is
//! `R(z) = z - anchor + tau grad phi_pq(z) = 0` with Jacobian
//! `I + tau Hess`, symmetric positive definite, so plain Newton with step
//! halving converges fast; after 30 failed halvings the step direction
//! falls back to the negative residual (a gradient step).

use crate::energy;
use crate::hypergraph::Hypergraph;
use crate::linalg::{norm, solve_spd};

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct ProxFailure {
    pub iterations: usize,
    pub residual: f64,
}

const MAX_HALVINGS: usize = 30;

/// Solves the fixed-coordinate proximal problem by damped Newton.
///
/// `fixed` pairs coordinate indices with pinned values; `start` is the warm
/// start (full length). Converges when the residual norm drops below `tol`.
pub(crate) fn prox_newton(
    g: &Hypergraph,
    p: f64,
    q: f64,
    tau: f64,
    anchor: &[f64],
    fixed: &[(usize, f64)],
    start: &[f64],
    tol: f64,
    max_iters: usize,
) -> Result<Vec<f64>, ProxFailure> {
    let total = g.vertex_count();
    let mut is_fixed = vec![false; total];
    let mut z = start.to_vec();
    for &(i, v) in fixed {
        is_fixed[i] = true;
        z[i] = v;
    }
    let free: Vec<usize> = (0..total).filter(|&i| !is_fixed[i]).collect();
    if free.is_empty() {
        return Ok(z);
    }

    let residual = |z: &[f64]| -> Vec<f64> {
        let grad = energy::grad_phi_pq_raw(g, p, q, z);
        free.iter().map(|&i| z[i] - anchor[i] + tau * grad[i]).collect()
    };

    let mut res = residual(&z);
    let mut res_norm = norm(&res);
    for iter in 0..max_iters {
        if res_norm <= tol {
            return Ok(z);
        }
        // Newton direction on the free block: (I + tau H_ff) d = -R
        let hess = energy::hess_phi_pq_raw(g, p, q, &z);
        let nf = free.len();
        let mut sys = vec![0.0; nf * nf];
        for (a, &i) in free.iter().enumerate() {
            for (b, &j) in free.iter().enumerate() {
                let mut v = tau * hess[i * total + j];
                if a == b {
                    v += 1.0;
                }
                sys[a * nf + b] = v;
            }
        }
        let neg_res: Vec<f64> = res.iter().map(|v| -v).collect();
        let finite = sys.iter().all(|v| v.is_finite());
        let direction = if finite { solve_spd(nf, &sys, &neg_res) } else { None };
        let direction = direction.unwrap_or_else(|| neg_res.clone());

        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..=MAX_HALVINGS {
            let mut trial = z.clone();
            for (a, &i) in free.iter().enumerate() {
                trial[i] += step * direction[a];
            }
            let trial_res = residual(&trial);
            let trial_norm = norm(&trial_res);
            if trial_norm < res_norm {
                z = trial;
                res = trial_res;
                res_norm = trial_norm;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // gradient fallback: direction = -R, same halving schedule
            let mut step = 1.0;
            let mut ok = false;
            for _ in 0..=MAX_HALVINGS {
                let mut trial = z.clone();
                for (a, &i) in free.iter().enumerate() {
                    trial[i] -= step * res[a];
                }
                let trial_res = residual(&trial);
                let trial_norm = norm(&trial_res);
                if trial_norm < res_norm {
                    z = trial;
                    res = trial_res;
                    res_norm = trial_norm;
                    ok = true;
                    break;
                }
                step *= 0.5;
            }
            if !ok {
                return Err(ProxFailure { iterations: iter, residual: res_norm });
            }
        }
    }
    if res_norm <= tol {
        Ok(z)
    } else {
        Err(ProxFailure { iterations: max_iters, residual: res_norm })
    }
}

/// q-continuation ladder 4, 8, ..., `q_max`: solve each smooth stage warm
/// started from the previous one, stop once successive stage solutions
/// differ by less than `stage_tol`. The last stage is accepted when the
/// ladder is exhausted (its distance to the nonsmooth limit is controlled
/// by the sandwich bound).
#[allow(clippy::too_many_arguments)]
pub(crate) fn prox_q_continuation(
    g: &Hypergraph,
    p: f64,
    tau: f64,
    anchor: &[f64],
    fixed: &[(usize, f64)],
    start: &[f64],
    tol: f64,
    stage_tol: f64,
    q_max: f64,
    max_iters: usize,
) -> Result<Vec<f64>, ProxFailure> {
    let mut q = 4.0;
    let mut current = prox_newton(g, p, q, tau, anchor, fixed, start, tol, max_iters)?;
    while q < q_max {
        q *= 2.0;
        let next = prox_newton(g, p, q, tau, anchor, fixed, &current, tol, max_iters)?;
        let diff = current
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        current = next;
        if diff < stage_tol {
            break;
        }
    }
    Ok(current)
}
