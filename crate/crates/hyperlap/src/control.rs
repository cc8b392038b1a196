//! Optimal control of the penalized dynamics.
//!
//! The cost to minimize over controls a (zero on free components, with
//! derivative budget int ||a'||^2 <= M) is
//!
//! ```text
//! J_ql(a) = 1/2 int ||x - x_target||^2 + 1/2 int ||a||^2
//!         + lambda/2 ||x(T) - z_target||^2 + lambda/2 ||a(0)||^2
//! ```
//!
//! where x solves the penalized problem with initial state
//! (x0_free, a(0)). The Gateaux derivative reduces through the adjoint
//! state gamma to
//!
//! ```text
//! dJ(a; b) = int (a - gamma) . b dt + lambda (a(0) - gamma(0)) . b(0)
//! ```
//!
//! so the L^2 representer restricted to controls is H(a - gamma); at an
//! interior optimum a = H gamma. The adjoint is discretized as the exact
//! mirror of the forward scheme (Hessian frozen at the forward state of
//! each step, penalty implicit backward), which keeps the discrete gradient
//! consistent with finite differences of the discrete cost.

use thiserror::Error;

use crate::dynamics::{
    self, ControlPath, DynamicsError, ProxOptions, TimeGrid, Trajectory,
};
use crate::energy::{self, EnergyParams, QExponent};
use crate::hypergraph::Hypergraph;
use crate::linalg::{dot, norm_sq, sub};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControlError {
    #[error("adjoint and linearized systems need p, q > 3; got p = {p}, q = {q}")]
    DegenerateExponent { p: f64, q: String },
    #[error("grids or sample shapes do not match")]
    GridMismatch,
    #[error("line search found no descent at iteration {iteration}")]
    NoDescent { iteration: usize },
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Energy(#[from] energy::EnergyError),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// One control experiment: graph, exponents, penalty, grid, forcing,
/// free initial components, targets and derivative budget.
///
/// The full initial state is assembled per candidate control as
/// x0 = (x0_free, a(0)), so x0 lies in K_a(0) for every a.
#[derive(Debug, Clone)]
pub struct ControlProblem {
    graph: Hypergraph,
    params: EnergyParams,
    lambda: f64,
    grid: TimeGrid,
    forcing: Vec<Vec<f64>>,
    x0_free: Vec<f64>,
    x_target: Vec<Vec<f64>>,
    z_target: Vec<f64>,
    budget: f64,
}

impl ControlProblem {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        graph: Hypergraph,
        params: EnergyParams,
        lambda: f64,
        grid: TimeGrid,
        forcing: Vec<Vec<f64>>,
        x0_free: Vec<f64>,
        x_target: Vec<Vec<f64>>,
        z_target: Vec<f64>,
        budget: f64,
    ) -> Result<Self, ControlError> {
        let total = graph.vertex_count();
        if x0_free.len() != graph.n_free() {
            return Err(ControlError::InvalidInput(format!(
                "x0 must provide the {} free components",
                graph.n_free()
            )));
        }
        if forcing.len() != grid.len() || forcing.iter().any(|r| r.len() != total) {
            return Err(ControlError::GridMismatch);
        }
        if x_target.len() != grid.len() || x_target.iter().any(|r| r.len() != total) {
            return Err(ControlError::GridMismatch);
        }
        if z_target.len() != total {
            return Err(ControlError::GridMismatch);
        }
        if !(lambda > 0.0) {
            return Err(ControlError::InvalidInput(format!("lambda = {lambda} must be positive")));
        }
        if !(budget > 0.0) {
            return Err(ControlError::InvalidInput(format!("budget M = {budget} must be positive")));
        }
        Ok(Self { graph, params, lambda, grid, forcing, x0_free, x_target, z_target, budget })
    }

    pub fn graph(&self) -> &Hypergraph {
        &self.graph
    }

    pub fn params(&self) -> &EnergyParams {
        &self.params
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn forcing(&self) -> &[Vec<f64>] {
        &self.forcing
    }

    pub fn x_target(&self) -> &[Vec<f64>] {
        &self.x_target
    }

    pub fn z_target(&self) -> &[f64] {
        &self.z_target
    }

    pub fn budget(&self) -> f64 {
        self.budget
    }

    /// Clone with different smoothing/penalty parameters (sweep stages).
    pub fn with_parameters(&self, q: f64, lambda: f64) -> Result<Self, ControlError> {
        let params = EnergyParams::finite(self.params.p(), q)?;
        let mut out = self.clone();
        out.params = params;
        out.lambda = lambda;
        Ok(out)
    }

    /// x0 = (x0_free, a(0)) in K_a(0).
    pub fn initial_state(&self, a: &ControlPath) -> Vec<f64> {
        let total = self.graph.vertex_count();
        let n = self.graph.n_free();
        let mut x0 = vec![0.0; total];
        x0[..n].copy_from_slice(&self.x0_free);
        x0[n..].copy_from_slice(&a.value(0)[n..]);
        x0
    }

    /// Forward solve of the penalized dynamics for this candidate control.
    pub fn solve_state(&self, a: &ControlPath) -> Result<Trajectory, ControlError> {
        let x0 = self.initial_state(a);
        Ok(dynamics::solve_penalized(
            &self.graph,
            &self.params,
            self.lambda,
            a,
            &self.forcing,
            &x0,
            self.grid,
        )?)
    }

    fn check_path(&self, a: &ControlPath) -> Result<(), ControlError> {
        if a.grid() != self.grid
            || a.dim() != self.graph.vertex_count()
            || a.n_free() != self.graph.n_free()
        {
            return Err(ControlError::GridMismatch);
        }
        Ok(())
    }

    fn check_traj(&self, traj: &Trajectory) -> Result<(), ControlError> {
        if traj.grid() != self.grid {
            return Err(ControlError::GridMismatch);
        }
        Ok(())
    }

    fn adjoint_exponents(&self) -> Result<(f64, f64), ControlError> {
        match self.params.q() {
            QExponent::Finite(q) if self.params.p() > 3.0 && q > 3.0 => {
                Ok((self.params.p(), q))
            }
            other => Err(ControlError::DegenerateExponent {
                p: self.params.p(),
                q: other.to_string(),
            }),
        }
    }
}

/// Grid-sampled adjoint state with gamma(T) = -(x(T) - z_target) exact at
/// the last node.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjointPath {
    grid: TimeGrid,
    samples: Vec<Vec<f64>>,
}

impl AdjointPath {
    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn value(&self, k: usize) -> &[f64] {
        &self.samples[k]
    }

    pub fn samples(&self) -> &[Vec<f64>] {
        &self.samples
    }
}

/// Trapezoid quadrature of 1/2 ||x - x_target||^2 + 1/2 ||a||^2, the cost
/// of the original problem.
pub fn cost_j(
    problem: &ControlProblem,
    a: &ControlPath,
    traj: &Trajectory,
) -> Result<f64, ControlError> {
    problem.check_path(a)?;
    problem.check_traj(traj)?;
    let grid = problem.grid;
    let mut acc = 0.0;
    for k in 0..grid.len() {
        let track = norm_sq(&sub(traj.state(k), &problem.x_target[k]));
        let ctrl = norm_sq(a.value(k));
        acc += grid.quad_weight(k) * 0.5 * (track + ctrl);
    }
    Ok(acc)
}

/// cost_j plus the penalized terms lambda/2 ||x(T) - z_target||^2 and
/// lambda/2 ||a(0)||^2.
pub fn cost_jql(
    problem: &ControlProblem,
    a: &ControlPath,
    traj: &Trajectory,
) -> Result<f64, ControlError> {
    let base = cost_j(problem, a, traj)?;
    let terminal = norm_sq(&sub(traj.final_state(), &problem.z_target));
    let initial = norm_sq(a.value(0));
    Ok(base + 0.5 * problem.lambda * (terminal + initial))
}

fn hessian_apply(hess: &[f64], total: usize, v: &[f64]) -> Vec<f64> {
    (0..total)
        .map(|l| {
            let row = &hess[l * total..(l + 1) * total];
            dot(row, v)
        })
        .collect()
}

/// Linearized state equation: the Gateaux derivative of the
/// control-to-state map in direction b solves
/// `Xi' + Hess phi_pq(x(t)) Xi + (H Xi - b)/lambda = 0`, `Xi(0) = b(0)`,
/// discretized like the forward scheme (Hessian at the step's left state,
/// penalty implicit). Requires p, q > 3.
pub fn solve_linearized(
    problem: &ControlProblem,
    a: &ControlPath,
    x_traj: &Trajectory,
    b: &ControlPath,
) -> Result<Vec<Vec<f64>>, ControlError> {
    let (_, _) = problem.adjoint_exponents()?;
    problem.check_path(a)?;
    problem.check_path(b)?;
    problem.check_traj(x_traj)?;
    let g = &problem.graph;
    let total = g.vertex_count();
    let n = g.n_free();
    let grid = problem.grid;
    let dt = grid.dt();
    let ratio = dt / problem.lambda;
    let mut xi = b.value(0).to_vec();
    let mut path = Vec::with_capacity(grid.len());
    path.push(xi.clone());
    for k in 0..grid.steps() {
        let hess = energy::hess_phi_pq(g, &problem.params, x_traj.state(k))?;
        let hxi = hessian_apply(&hess, total, &xi);
        let b_next = b.value(k + 1);
        let mut next = vec![0.0; total];
        for l in 0..total {
            let explicit = xi[l] - dt * hxi[l];
            if l < n {
                next[l] = explicit;
            } else {
                next[l] = (explicit + ratio * b_next[l]) / (1.0 + ratio);
            }
        }
        path.push(next.clone());
        xi = next;
    }
    Ok(path)
}

/// Backward adjoint solve:
/// `-gamma' + Hess phi_pq(x) gamma + H gamma / lambda = -(x - x_target)/lambda`
/// with `gamma(T) = -(x(T) - z_target)`, discretized as the time-reversed
/// mirror of the forward scheme (Hessian frozen at the forward state of
/// each step, penalty implicit backward). Requires p, q > 3.
///
/// The tracking source enters with the same trapezoid weights the cost
/// quadrature uses (half weight at both endpoints, folded into the seed of
/// the recursion at t_K and into the divisor at t_0), which makes the
/// pairing in [`gateaux_dj`] match difference quotients of the discrete
/// cost to roundoff rather than to O(dt).
pub fn solve_adjoint(
    problem: &ControlProblem,
    a: &ControlPath,
    x_traj: &Trajectory,
) -> Result<AdjointPath, ControlError> {
    let (_, _) = problem.adjoint_exponents()?;
    problem.check_path(a)?;
    problem.check_traj(x_traj)?;
    let g = &problem.graph;
    let total = g.vertex_count();
    let n = g.n_free();
    let grid = problem.grid;
    let steps = grid.steps();
    let dt = grid.dt();
    let lambda = problem.lambda;
    let ratio = dt / lambda;
    let mut samples = vec![vec![0.0; total]; grid.len()];
    // terminal condition, exact at t_K
    samples[steps] = sub(&problem.z_target, x_traj.final_state());

    let source = |k: usize| -> Vec<f64> {
        x_traj
            .state(k)
            .iter()
            .zip(&problem.x_target[k])
            .map(|(x, t)| x - t)
            .collect()
    };
    // recursion seed: terminal value plus the half-weight quadrature share
    // of the tracking term at t_K, attenuated like one implicit step
    let mut carried: Vec<f64> = {
        let src = source(steps);
        let w = grid.quad_weight(steps);
        (0..total)
            .map(|l| {
                let v = samples[steps][l] - (w / lambda) * src[l];
                if l < n {
                    v
                } else {
                    v / (1.0 + ratio)
                }
            })
            .collect()
    };
    for k in (0..steps).rev() {
        let hess = energy::hess_phi_pq(g, &problem.params, x_traj.state(k))?;
        let hg = hessian_apply(&hess, total, &carried);
        let src = source(k);
        let w = grid.quad_weight(k);
        let mut gamma = vec![0.0; total];
        for l in 0..total {
            let explicit = carried[l] - dt * hg[l] - (w / lambda) * src[l];
            if l < n {
                gamma[l] = explicit;
            } else if k > 0 {
                gamma[l] = explicit / (1.0 + ratio);
            } else {
                // t_0 divisor matches the (w_0 + lambda) pairing weight of
                // the endpoint term in dJ
                gamma[l] = lambda * explicit / (w + lambda);
            }
        }
        carried = gamma.clone();
        samples[k] = gamma;
    }
    Ok(AdjointPath { grid, samples })
}

/// dJ(a; b) = int (a - gamma) . b dt + lambda (a(0) - gamma(0)) . b(0)
/// by trapezoid quadrature.
pub fn gateaux_dj(
    problem: &ControlProblem,
    a: &ControlPath,
    b: &ControlPath,
    _x_traj: &Trajectory,
    gamma: &AdjointPath,
) -> Result<f64, ControlError> {
    problem.check_path(a)?;
    problem.check_path(b)?;
    if gamma.grid != problem.grid {
        return Err(ControlError::GridMismatch);
    }
    let grid = problem.grid;
    let mut acc = 0.0;
    for k in 0..grid.len() {
        let diff = sub(a.value(k), gamma.value(k));
        acc += grid.quad_weight(k) * dot(&diff, b.value(k));
    }
    let diff0 = sub(a.value(0), gamma.value(0));
    acc += problem.lambda * dot(&diff0, b.value(0));
    Ok(acc)
}

/// Forward + backward solve and the L^2 representer of dJ restricted to
/// controls: g(t_k) = H(a - gamma)(t_k), with the lambda (a(0) - gamma(0))
/// endpoint term folded into the t_0 node as the weight factor
/// (1 + lambda / w_0).
pub struct ControlGradient {
    pub gradient: ControlPath,
    pub state: Trajectory,
    pub adjoint: AdjointPath,
}

pub fn control_gradient(
    problem: &ControlProblem,
    a: &ControlPath,
) -> Result<ControlGradient, ControlError> {
    problem.check_path(a)?;
    let state = problem.solve_state(a)?;
    let adjoint = solve_adjoint(problem, a, &state)?;
    let n = problem.graph.n_free();
    let total = problem.graph.vertex_count();
    let grid = problem.grid;
    let mut rows = Vec::with_capacity(grid.len());
    for k in 0..grid.len() {
        let mut row = vec![0.0; total];
        let factor = if k == 0 { 1.0 + problem.lambda / grid.quad_weight(0) } else { 1.0 };
        for l in n..total {
            row[l] = factor * (a.value(k)[l] - adjoint.value(k)[l]);
        }
        rows.push(row);
    }
    let gradient = ControlPath::new(grid, n, rows)?;
    Ok(ControlGradient { gradient, state, adjoint })
}

/// Projection onto the admissible set U^M_ad: if the discrete derivative
/// budget exceeds M, scale the derivative samples by sqrt(M/B) keeping
/// a(0) fixed, and re-integrate. Idempotent.
pub fn project_admissible(a: &ControlPath, budget: f64) -> ControlPath {
    let b = a.budget();
    if b <= budget * (1.0 + 1e-12) {
        return a.clone();
    }
    let scale = (budget / b).sqrt();
    let grid = a.grid();
    let mut rows = Vec::with_capacity(grid.len());
    rows.push(a.value(0).to_vec());
    for k in 0..grid.steps() {
        let prev = rows[k].clone();
        let row: Vec<f64> = prev
            .iter()
            .zip(a.value(k + 1).iter().zip(a.value(k)))
            .map(|(acc, (hi, lo))| acc + scale * (hi - lo))
            .collect();
        rows.push(row);
    }
    ControlPath::new(grid, a.n_free(), rows).expect("projection preserves the control shape")
}

/// a + step * d, samplewise.
fn path_axpy(a: &ControlPath, step: f64, d: &ControlPath) -> ControlPath {
    let rows: Vec<Vec<f64>> = a
        .samples()
        .iter()
        .zip(d.samples())
        .map(|(x, y)| x.iter().zip(y).map(|(u, v)| u + step * v).collect())
        .collect();
    ControlPath::new(a.grid(), a.n_free(), rows).expect("shape preserved")
}

fn path_l2_diff(a: &ControlPath, b: &ControlPath) -> f64 {
    let grid = a.grid();
    (0..grid.len())
        .map(|k| grid.quad_weight(k) * norm_sq(&sub(a.value(k), b.value(k))))
        .sum::<f64>()
        .sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptOptions {
    pub max_iters: usize,
    /// Initial trial step, rescaled by 1/(1 + ||g||) each iteration.
    pub step0: f64,
    /// Multiplicative backtracking factor in (0, 1).
    pub backtrack: f64,
    /// Armijo constant.
    pub armijo_c: f64,
    /// Stop when ||g||_{L^2} <= tol (1 + ||a||_{L^2}).
    pub tol: f64,
}

impl Default for OptOptions {
    fn default() -> Self {
        Self { max_iters: 200, step0: 1.0, backtrack: 0.5, armijo_c: 1e-4, tol: 1e-4 }
    }
}

/// Result of a projected-gradient run.
#[derive(Debug, Clone)]
pub struct OptResult {
    pub control: ControlPath,
    pub state: Trajectory,
    pub adjoint: AdjointPath,
    /// J^{q,lambda} after every accepted iterate (non-increasing).
    pub cost_history: Vec<f64>,
    /// ||a - H gamma||_{L^2} / (1 + ||a||_{L^2}) at the final iterate.
    pub optimality_residual: f64,
    /// Discrete derivative budget of the final control.
    pub budget_used: f64,
    /// sup_k ||(id - H) gamma(t_k)|| (left open by the theory; logged only).
    pub free_adjoint_sup: f64,
    /// lambda * sup_k ||gamma(t_k)|| (the bounded quantity).
    pub lambda_gamma_sup: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn residual_norms(problem: &ControlProblem, a: &ControlPath, gamma: &AdjointPath) -> (f64, f64, f64) {
    let grid = problem.grid;
    let n = problem.graph.n_free();
    let mut res_sq = 0.0;
    let mut free_sup = 0.0f64;
    let mut gamma_sup = 0.0f64;
    for k in 0..grid.len() {
        let gk = gamma.value(k);
        let ak = a.value(k);
        let mut node = 0.0;
        let mut free = 0.0;
        for l in 0..ak.len() {
            if l < n {
                free += gk[l] * gk[l];
            } else {
                let d = ak[l] - gk[l];
                node += d * d;
            }
        }
        res_sq += grid.quad_weight(k) * node;
        free_sup = free_sup.max(free.sqrt());
        gamma_sup = gamma_sup.max(crate::linalg::norm(gk));
    }
    (res_sq.sqrt(), free_sup, problem.lambda * gamma_sup)
}

/// Projected gradient with backtracking line search on J^{q,lambda}.
///
/// Iterates `a <- project_admissible(a - s g)` until the H-projected
/// gradient norm satisfies `||g|| <= tol (1 + ||a||)` or `max_iters` is
/// reached; reports the optimality residual ||a - H gamma|| relative.
pub fn optimize(
    problem: &ControlProblem,
    a_init: &ControlPath,
    opts: &OptOptions,
) -> Result<OptResult, ControlError> {
    problem.check_path(a_init)?;
    let mut a = project_admissible(a_init, problem.budget);
    let mut grad_data = control_gradient(problem, &a)?;
    let mut cost = cost_jql(problem, &a, &grad_data.state)?;
    let mut history = vec![cost];
    let mut converged = false;
    let mut iterations = 0;
    let mut step_memory: Option<f64> = None;
    const MAX_HALVINGS: usize = 40;

    for iter in 0..opts.max_iters {
        let g_norm = grad_data.gradient.l2_norm();
        let a_norm = a.l2_norm();
        if g_norm <= opts.tol * (1.0 + a_norm) {
            converged = true;
            break;
        }
        // warm-start the search at twice the last accepted step
        let mut step = match step_memory {
            Some(s) => (2.0 * s).min(1e3),
            None => opts.step0 / (1.0 + g_norm),
        };
        let mut accepted = None;
        let mut stalled = false;
        let noise_floor = 1e-15 * (1.0 + cost.abs());
        for _ in 0..MAX_HALVINGS {
            let candidate =
                project_admissible(&path_axpy(&a, -step, &grad_data.gradient), problem.budget);
            let state = problem.solve_state(&candidate)?;
            let trial_cost = cost_jql(problem, &candidate, &state)?;
            let displacement = path_l2_diff(&candidate, &a);
            let required = (opts.armijo_c / step) * displacement * displacement;
            if displacement == 0.0 || required <= noise_floor {
                // any further decrease is below float resolution of the
                // cost: numerically stationary
                stalled = true;
                break;
            }
            if trial_cost <= cost - required {
                accepted = Some((candidate, trial_cost));
                break;
            }
            step *= opts.backtrack;
        }
        if stalled {
            break;
        }
        let Some((candidate, trial_cost)) = accepted else {
            return Err(ControlError::NoDescent { iteration: iter });
        };
        step_memory = Some(step);
        a = candidate;
        cost = trial_cost;
        history.push(cost);
        grad_data = control_gradient(problem, &a)?;
        iterations = iter + 1;
    }

    let (residual, free_sup, lambda_gamma_sup) = residual_norms(problem, &a, &grad_data.adjoint);
    let a_norm = a.l2_norm();
    Ok(OptResult {
        budget_used: a.budget(),
        optimality_residual: residual / (1.0 + a_norm),
        free_adjoint_sup: free_sup,
        lambda_gamma_sup,
        control: a,
        state: grad_data.state,
        adjoint: grad_data.adjoint,
        cost_history: history,
        iterations,
        converged,
    })
}

/// One stage of the (q, lambda) sweep.
#[derive(Debug, Clone)]
pub struct SweepStage {
    pub q: f64,
    pub lambda: f64,
    pub result: OptResult,
    /// Original cost J evaluated through the constrained dynamics at the
    /// stage optimizer.
    pub original_cost: f64,
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub stages: Vec<SweepStage>,
    /// sup-norm distances between successive stage optimizers.
    pub sup_distances: Vec<f64>,
}

/// Runs `optimize` for every (q_i, lambda_i) stage, warm starting each
/// stage from the previous optimizer, and evaluates the original cost J
/// (constrained dynamics) at every stage optimizer.
pub fn sweep_to_original(
    problem: &ControlProblem,
    stages: &[(f64, f64)],
    a_init: &ControlPath,
    opts: &OptOptions,
    prox_opts: &ProxOptions,
) -> Result<SweepReport, ControlError> {
    if stages.is_empty() {
        return Err(ControlError::InvalidInput("sweep needs at least one (q, lambda) stage".into()));
    }
    let mut out = Vec::with_capacity(stages.len());
    let mut warm = a_init.clone();
    for &(q, lambda) in stages {
        let stage_problem = problem.with_parameters(q, lambda)?;
        let result = optimize(&stage_problem, &warm, opts)?;
        warm = result.control.clone();
        let x0 = stage_problem.initial_state(&result.control);
        let constrained = dynamics::solve_constrained(
            &stage_problem.graph,
            stage_problem.params.p(),
            &result.control,
            &stage_problem.forcing,
            &x0,
            stage_problem.grid,
            prox_opts,
        )?;
        let original_cost = cost_j(&stage_problem, &result.control, &constrained)?;
        out.push(SweepStage { q, lambda, result, original_cost });
    }
    let mut sup_distances = Vec::new();
    for pair in out.windows(2) {
        sup_distances.push(pair[0].result.control.sup_distance(&pair[1].result.control)?);
    }
    Ok(SweepReport { stages: out, sup_distances })
}
