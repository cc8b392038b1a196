//! Time integrators on a uniform grid.
//!
//! Three evolution problems share the state layout (first n components
//! free, last m controlled):
//!
//! * penalized:    x' + grad phi_pq(x) + (Hx - a)/lambda = h
//! * constrained:  x' + d phi_p(x) + d I_{K_a(t)}(x) contains h
//! * free decay:   x' + grad phi_pq(x) = 0
//!
//! The penalized scheme is semi-implicit Euler: the stiff penalty is
//! implicit (a diagonal solve, since H is a coordinate projection) and the
//! smooth Laplacian explicit. Control and forcing samples are taken at the
//! right endpoint of each step. The constrained scheme performs one
//! proximal step of phi_p per node, restricted to the affine set, via
//! q-continuation of the smooth prox.

use thiserror::Error;

use crate::energy::{self, EnergyParams, QExponent};
use crate::hypergraph::Hypergraph;
use crate::linalg::norm;
use crate::prox;

/// State norms beyond this abort integration with `StepUnstable`.
pub const BLOWUP_GUARD: f64 = 1e12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("state norm {norm:.3e} exceeded {BLOWUP_GUARD:.0e} at step {step}; reduce the step size")]
    StepUnstable { step: usize, norm: f64 },
    #[error("inner proximal solve failed at step {step} (residual {residual:.3e})")]
    ProxNoConverge { step: usize, residual: f64 },
    #[error("initial state is not in K_a(0): controlled components must equal a(0)")]
    InfeasibleInit,
    #[error("time grids or sample shapes do not match")]
    GridMismatch,
    #[error(transparent)]
    Energy(#[from] energy::EnergyError),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// Uniform grid t_k = k T / K on [0, T].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self, DynamicsError> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(DynamicsError::InvalidInput(format!("horizon T = {horizon} must be positive")));
        }
        if steps == 0 {
            return Err(DynamicsError::InvalidInput("step count must be at least 1".into()));
        }
        Ok(Self { horizon, steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Number of nodes, K + 1.
    pub fn len(&self) -> usize {
        self.steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn node(&self, k: usize) -> f64 {
        k as f64 * self.dt()
    }

    /// Trapezoid weight dt * (1/2 at the endpoints, 1 inside).
    pub fn quad_weight(&self, k: usize) -> f64 {
        let w = if k == 0 || k == self.steps { 0.5 } else { 1.0 };
        w * self.dt()
    }
}

/// Grid-sampled control a(t_k) in R^N with the first n components
/// identically zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlPath {
    grid: TimeGrid,
    n_free: usize,
    samples: Vec<Vec<f64>>,
}

impl ControlPath {
    pub fn new(
        grid: TimeGrid,
        n_free: usize,
        samples: Vec<Vec<f64>>,
    ) -> Result<Self, DynamicsError> {
        if samples.len() != grid.len() {
            return Err(DynamicsError::GridMismatch);
        }
        let width = samples.first().map(Vec::len).unwrap_or(0);
        if width <= n_free {
            return Err(DynamicsError::InvalidInput(
                "control samples must cover at least one controlled component".into(),
            ));
        }
        for row in &samples {
            if row.len() != width {
                return Err(DynamicsError::GridMismatch);
            }
            if row[..n_free].iter().any(|&v| v != 0.0) {
                return Err(DynamicsError::InvalidInput(
                    "control samples must vanish on the free components".into(),
                ));
            }
        }
        Ok(Self { grid, n_free, samples })
    }

    pub fn zero(grid: TimeGrid, n_free: usize, total: usize) -> Self {
        Self { grid, n_free, samples: vec![vec![0.0; total]; grid.len()] }
    }

    /// Builds the embedded path (0, ..., 0, rows) from controlled-only rows.
    pub fn from_controlled(
        grid: TimeGrid,
        n_free: usize,
        rows: &[Vec<f64>],
    ) -> Result<Self, DynamicsError> {
        if rows.len() != grid.len() {
            return Err(DynamicsError::GridMismatch);
        }
        let m = rows.first().map(Vec::len).unwrap_or(0);
        let samples = rows
            .iter()
            .map(|row| {
                let mut full = vec![0.0; n_free + m];
                full[n_free..].copy_from_slice(row);
                full
            })
            .collect();
        Self::new(grid, n_free, samples)
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn n_free(&self) -> usize {
        self.n_free
    }

    pub fn dim(&self) -> usize {
        self.samples[0].len()
    }

    pub fn value(&self, k: usize) -> &[f64] {
        &self.samples[k]
    }

    pub fn samples(&self) -> &[Vec<f64>] {
        &self.samples
    }

    /// Forward-difference derivative samples a'(t_k), k = 0..K-1.
    pub fn derivative_samples(&self) -> Vec<Vec<f64>> {
        let dt = self.grid.dt();
        self.samples
            .windows(2)
            .map(|w| w[0].iter().zip(&w[1]).map(|(a, b)| (b - a) / dt).collect())
            .collect()
    }

    /// Discrete derivative budget dt sum_k ||a'(t_k)||^2.
    pub fn budget(&self) -> f64 {
        let dt = self.grid.dt();
        dt * self
            .derivative_samples()
            .iter()
            .map(|d| d.iter().map(|v| v * v).sum::<f64>())
            .sum::<f64>()
    }

    /// Trapezoid L^2(0,T) norm of the path.
    pub fn l2_norm(&self) -> f64 {
        (0..self.samples.len())
            .map(|k| self.grid.quad_weight(k) * crate::linalg::norm_sq(&self.samples[k]))
            .sum::<f64>()
            .sqrt()
    }

    /// sup_k ||a(t_k) - b(t_k)||.
    pub fn sup_distance(&self, other: &ControlPath) -> Result<f64, DynamicsError> {
        if self.grid != other.grid || self.dim() != other.dim() {
            return Err(DynamicsError::GridMismatch);
        }
        Ok(self
            .samples
            .iter()
            .zip(&other.samples)
            .map(|(a, b)| norm(&crate::linalg::sub(a, b)))
            .fold(0.0, f64::max))
    }
}

/// Per-step section diagnostics: eta_k in (the smooth surrogate of)
/// d phi(x) and xi_k in d I_{K_a}(x), recorded for the step k -> k+1.
#[derive(Debug, Clone, PartialEq)]
pub struct SectionRecord {
    pub eta: Vec<f64>,
    pub xi: Vec<f64>,
}

/// Grid-sampled state trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    grid: TimeGrid,
    states: Vec<Vec<f64>>,
    sections: Option<Vec<SectionRecord>>,
}

impl Trajectory {
    pub fn new(grid: TimeGrid, states: Vec<Vec<f64>>) -> Result<Self, DynamicsError> {
        if states.len() != grid.len() {
            return Err(DynamicsError::GridMismatch);
        }
        if states.iter().flatten().any(|v| !v.is_finite()) {
            return Err(DynamicsError::InvalidInput("trajectory entries must be finite".into()));
        }
        Ok(Self { grid, states, sections: None })
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k]
    }

    pub fn states(&self) -> &[Vec<f64>] {
        &self.states
    }

    pub fn final_state(&self) -> &[f64] {
        self.states.last().expect("grid has at least one node")
    }

    pub fn sections(&self) -> Option<&[SectionRecord]> {
        self.sections.as_deref()
    }

    /// sup_k ||x(t_k) - y(t_k)|| over the common grid.
    pub fn sup_distance(&self, other: &Trajectory) -> Result<f64, DynamicsError> {
        if self.grid != other.grid {
            return Err(DynamicsError::GridMismatch);
        }
        Ok(self
            .states
            .iter()
            .zip(&other.states)
            .map(|(a, b)| norm(&crate::linalg::sub(a, b)))
            .fold(0.0, f64::max))
    }
}

/// H z = (0, ..., 0, z_{n+1}, ..., z_{n+m}).
pub fn apply_h(n_free: usize, z: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; z.len()];
    out[n_free..].copy_from_slice(&z[n_free..]);
    out
}

/// Projection onto K_a(t): keeps the free components of z, replaces the
/// controlled ones by a(t). The Yosida map of the indicator is then
/// (z - proj)/lambda = (Hz - a(t))/lambda.
pub fn project_k(n_free: usize, z: &[f64], a_t: &[f64]) -> Vec<f64> {
    let mut out = z.to_vec();
    out[n_free..].copy_from_slice(&a_t[n_free..]);
    out
}

fn check_forcing(g: &Hypergraph, grid: TimeGrid, h: &[Vec<f64>]) -> Result<(), DynamicsError> {
    if h.len() != grid.len() || h.iter().any(|row| row.len() != g.vertex_count()) {
        return Err(DynamicsError::GridMismatch);
    }
    Ok(())
}

fn guard(step: usize, x: &[f64]) -> Result<(), DynamicsError> {
    let n = norm(x);
    if !n.is_finite() || n > BLOWUP_GUARD {
        return Err(DynamicsError::StepUnstable { step, norm: n });
    }
    Ok(())
}

/// Semi-implicit Euler for the penalized problem
/// x' + grad phi_pq(x) + (Hx - a)/lambda = h.
///
/// Controlled components take the penalty implicitly:
/// `x1 = (x - dt g + dt h + (dt/lambda) a) / (1 + dt/lambda)`;
/// free components are forward Euler. Deterministic.
pub fn solve_penalized(
    g: &Hypergraph,
    params: &EnergyParams,
    lambda: f64,
    a: &ControlPath,
    h: &[Vec<f64>],
    x0: &[f64],
    grid: TimeGrid,
) -> Result<Trajectory, DynamicsError> {
    if !(lambda > 0.0) {
        return Err(DynamicsError::InvalidInput(format!("lambda = {lambda} must be positive")));
    }
    let total = g.vertex_count();
    let n = g.n_free();
    if x0.len() != total || a.grid() != grid || a.dim() != total || a.n_free() != n {
        return Err(DynamicsError::GridMismatch);
    }
    check_forcing(g, grid, h)?;
    let dt = grid.dt();
    let ratio = dt / lambda;
    let mut states = Vec::with_capacity(grid.len());
    let mut sections = Vec::with_capacity(grid.steps());
    states.push(x0.to_vec());
    let mut x = x0.to_vec();
    for k in 0..grid.steps() {
        let grad = energy::grad_phi_pq(g, params, &x)?;
        let a_next = a.value(k + 1);
        let h_next = &h[k + 1];
        let mut x1 = vec![0.0; total];
        for l in 0..n {
            x1[l] = x[l] + dt * (h_next[l] - grad[l]);
        }
        for l in n..total {
            x1[l] = (x[l] + dt * (h_next[l] - grad[l]) + ratio * a_next[l]) / (1.0 + ratio);
        }
        guard(k + 1, &x1)?;
        let xi: Vec<f64> = (0..total)
            .map(|l| if l < n { 0.0 } else { (x1[l] - a_next[l]) / lambda })
            .collect();
        sections.push(SectionRecord { eta: grad, xi });
        states.push(x1.clone());
        x = x1;
    }
    let mut traj = Trajectory::new(grid, states)?;
    traj.sections = Some(sections);
    Ok(traj)
}

/// Options for the proximal inner solver of [`solve_constrained`] and the
/// nonsmooth resolvent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProxOptions {
    /// Largest smoothing exponent of the continuation ladder 4, 8, 16, ...
    pub q_max: f64,
    /// Stop the ladder once successive stage solutions differ by less.
    pub stage_tol: f64,
    /// Residual tolerance of each Newton stage, relative to 1 + ||anchor||.
    pub newton_tol: f64,
    pub max_newton_iters: usize,
}

impl Default for ProxOptions {
    fn default() -> Self {
        Self { q_max: 512.0, stage_tol: 1e-8, newton_tol: 1e-11, max_newton_iters: 200 }
    }
}

/// Proximal implicit Euler for the constrained inclusion (problem with the
/// exact constraint H x(t) = a(t)).
///
/// Each step solves
/// `x_{k+1} = argmin_{z in K_a(t_{k+1})} ||z - x_k - dt h_{k+1}||^2/(2 dt) + phi_p(z)`
/// with only the free components unknown; the constraint therefore holds
/// exactly at every node.
pub fn solve_constrained(
    g: &Hypergraph,
    p: f64,
    a: &ControlPath,
    h: &[Vec<f64>],
    x0: &[f64],
    grid: TimeGrid,
    opts: &ProxOptions,
) -> Result<Trajectory, DynamicsError> {
    if !(p >= 1.0) {
        return Err(DynamicsError::InvalidInput(format!("p = {p} must be at least 1")));
    }
    let total = g.vertex_count();
    let n = g.n_free();
    if x0.len() != total || a.grid() != grid || a.dim() != total {
        return Err(DynamicsError::GridMismatch);
    }
    check_forcing(g, grid, h)?;
    let feas_tol = 1e-12 * (1.0 + norm(x0));
    if (n..total).any(|l| (x0[l] - a.value(0)[l]).abs() > feas_tol) {
        return Err(DynamicsError::InfeasibleInit);
    }
    let dt = grid.dt();
    let mut states = Vec::with_capacity(grid.len());
    let mut sections = Vec::with_capacity(grid.steps());
    states.push(x0.to_vec());
    let mut x = x0.to_vec();
    for k in 0..grid.steps() {
        let a_next = a.value(k + 1);
        let anchor: Vec<f64> = x.iter().zip(&h[k + 1]).map(|(xi, hi)| xi + dt * hi).collect();
        let fixed: Vec<(usize, f64)> = (n..total).map(|l| (l, a_next[l])).collect();
        let tol = opts.newton_tol * (1.0 + norm(&anchor));
        let x1 = prox::prox_q_continuation(
            g,
            p,
            dt,
            &anchor,
            &fixed,
            &x,
            tol,
            opts.stage_tol,
            opts.q_max,
            opts.max_newton_iters,
        )
        .map_err(|f| DynamicsError::ProxNoConverge { step: k + 1, residual: f.residual })?;
        guard(k + 1, &x1)?;
        // section surrogate from the last smooth stage
        let eta = energy::grad_phi_pq_raw(g, p, opts.q_max, &x1);
        let xi: Vec<f64> =
            (0..total).map(|l| h[k + 1][l] - (x1[l] - x[l]) / dt - eta[l]).collect();
        sections.push(SectionRecord { eta, xi });
        states.push(x1.clone());
        x = x1;
    }
    let mut traj = Trajectory::new(grid, states)?;
    traj.sections = Some(sections);
    Ok(traj)
}

/// Gradient flow x' + grad phi_pq(x) = 0 by explicit Euler; for
/// 1 < p < 2 the step switches to the implicit proximal form once
/// ||x - mean|| < 1e-6 to traverse finite-time extinction without
/// oscillating.
pub fn solve_free(
    g: &Hypergraph,
    params: &EnergyParams,
    x0: &[f64],
    grid: TimeGrid,
) -> Result<Trajectory, DynamicsError> {
    let total = g.vertex_count();
    if x0.len() != total {
        return Err(DynamicsError::GridMismatch);
    }
    let q = match params.q() {
        QExponent::Finite(q) if q > 1.0 && params.p() > 1.0 => q,
        _ => {
            return Err(energy::EnergyError::DegenerateExponent {
                needed: "p > 1 and finite q > 1",
                p: params.p(),
                q: params.q().to_string(),
            }
            .into())
        }
    };
    let p = params.p();
    let dt = grid.dt();
    let mut states = Vec::with_capacity(grid.len());
    states.push(x0.to_vec());
    let mut x = x0.to_vec();
    for k in 0..grid.steps() {
        let grad = energy::grad_phi_pq(g, params, &x)?;
        // Explicit Euler oscillates at the finite-time extinction of the
        // p < 2 flow; switch to the proximal (implicit) step once the
        // explicit increment would overshoot the mean or the state is
        // already within 1e-6 of it.
        let spread = crate::linalg::dist_to_mean(&x);
        let implicit = p < 2.0 && (dt * norm(&grad) >= 0.5 * spread || spread < 1e-6);
        let x1 = if implicit {
            prox::prox_newton(g, p, q, dt, &x, &[], &x, 1e-11 * (1.0 + norm(&x)), 100)
                .map_err(|f| DynamicsError::ProxNoConverge { step: k + 1, residual: f.residual })?
        } else {
            x.iter().zip(&grad).map(|(xi, gi)| xi - dt * gi).collect()
        };
        guard(k + 1, &x1)?;
        states.push(x1.clone());
        x = x1;
    }
    Trajectory::new(grid, states)
}

/// max_k ||H x(t_k) - a(t_k)||, the constraint violation of a trajectory.
pub fn constraint_violation(traj: &Trajectory, a: &ControlPath) -> Result<f64, DynamicsError> {
    if traj.grid() != a.grid() {
        return Err(DynamicsError::GridMismatch);
    }
    let n = a.n_free();
    let mut worst = 0.0f64;
    for (x, av) in traj.states().iter().zip(a.samples()) {
        if x.len() != av.len() {
            return Err(DynamicsError::GridMismatch);
        }
        let v = (n..x.len()).map(|l| (x[l] - av[l]) * (x[l] - av[l])).sum::<f64>().sqrt();
        worst = worst.max(v);
    }
    Ok(worst)
}
