//! Energies on a hypergraph.
//!
//! The nonsmooth p-Dirichlet energy uses the per-edge spread
//! `f_e(x) = max_{i,j in e} |x_i - x_j|`:
//!
//! ```text
//! phi_p(x)  = (1/p) sum_e w(e) f_e(x)^p
//! ```
//!
//! Its smooth clique-expansion family replaces the max by an l^q mean over
//! the pairs of the edge, `f_eq(x) = (sum_{i<j in e} |x_i - x_j|^q)^{1/q}`:
//!
//! ```text
//! phi_pq(x) = (1/p) sum_e w(e) f_eq(x)^p
//! ```
//!
//! For q >= 2 all powers are evaluated in a normalized form (pair ratios
//! r = d / f_eq lie in [-1, 1]) so that large q, up to several thousand,
//! neither overflows nor loses the leading terms.

use thiserror::Error;

use crate::hypergraph::{Edge, Hypergraph};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnergyError {
    #[error("operation needs {needed}, got p = {p}, q = {q}")]
    DegenerateExponent { needed: &'static str, p: f64, q: String },
    #[error("invalid exponents: p = {p}, q = {q}")]
    InvalidParams { p: f64, q: String },
    #[error("vector has length {got}, hypergraph has {expected} vertices")]
    DimensionMismatch { got: usize, expected: usize },
}

/// The smoothing exponent q, either finite or the distinguished value
/// q = infinity under which the clique-expansion energy reduces to the
/// original nonsmooth one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum QExponent {
    Finite(f64),
    Infinite,
}

impl QExponent {
    pub fn finite(self) -> Option<f64> {
        match self {
            QExponent::Finite(q) => Some(q),
            QExponent::Infinite => None,
        }
    }
}

impl std::fmt::Display for QExponent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            QExponent::Finite(q) => write!(f, "{q}"),
            QExponent::Infinite => write!(f, "inf"),
        }
    }
}

/// Exponent pair (p, q), p >= 1 and q >= 1 or infinite.
///
/// The gradient needs p, q > 1, the Hessian p, q > 2 and the linearized /
/// adjoint control systems p, q > 3; those stricter requirements are
/// enforced by the operations that need them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyParams {
    p: f64,
    q: QExponent,
}

impl EnergyParams {
    pub fn new(p: f64, q: QExponent) -> Result<Self, EnergyError> {
        let q_ok = match q {
            QExponent::Finite(v) => v.is_finite() && v >= 1.0,
            QExponent::Infinite => true,
        };
        if !(p.is_finite() && p >= 1.0) || !q_ok {
            return Err(EnergyError::InvalidParams { p, q: q.to_string() });
        }
        Ok(Self { p, q })
    }

    pub fn finite(p: f64, q: f64) -> Result<Self, EnergyError> {
        Self::new(p, QExponent::Finite(q))
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn q(&self) -> QExponent {
        self.q
    }

    fn require_gradient(&self) -> Result<(f64, f64), EnergyError> {
        match self.q {
            QExponent::Finite(q) if self.p > 1.0 && q > 1.0 => Ok((self.p, q)),
            _ => Err(EnergyError::DegenerateExponent {
                needed: "p > 1 and finite q > 1",
                p: self.p,
                q: self.q.to_string(),
            }),
        }
    }

    fn require_hessian(&self) -> Result<(f64, f64), EnergyError> {
        match self.q {
            QExponent::Finite(q) if self.p > 2.0 && q > 2.0 => Ok((self.p, q)),
            _ => Err(EnergyError::DegenerateExponent {
                needed: "p > 2 and finite q > 2",
                p: self.p,
                q: self.q.to_string(),
            }),
        }
    }
}

fn check_dim(g: &Hypergraph, x: &[f64]) -> Result<(), EnergyError> {
    if x.len() != g.vertex_count() {
        return Err(EnergyError::DimensionMismatch { got: x.len(), expected: g.vertex_count() });
    }
    Ok(())
}

/// f_e(x) = max_{i,j in e} |x_i - x_j| = (max over e) - (min over e).
pub fn f_e(x: &[f64], e: &Edge) -> f64 {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in &e.vertices {
        lo = lo.min(x[v]);
        hi = hi.max(x[v]);
    }
    hi - lo
}

/// f_eq(x) = (sum_{i<j in e} |x_i - x_j|^q)^{1/q}; equals f_e for #e = 2.
pub fn f_eq(x: &[f64], e: &Edge, q: f64) -> f64 {
    let spread = f_e(x, e);
    if spread == 0.0 {
        return 0.0;
    }
    let mut sum = 0.0;
    for (a, &i) in e.vertices.iter().enumerate() {
        for &j in &e.vertices[a + 1..] {
            let r = (x[i] - x[j]).abs() / spread;
            if r > 0.0 {
                sum += r.powf(q);
            }
        }
    }
    spread * sum.powf(1.0 / q)
}

/// The nonsmooth energy phi_p(x) = (1/p) sum_e w(e) f_e(x)^p, p >= 1.
pub fn phi_p(g: &Hypergraph, params: &EnergyParams, x: &[f64]) -> Result<f64, EnergyError> {
    check_dim(g, x)?;
    let p = params.p();
    let mut acc = 0.0;
    for e in g.edges() {
        let v = f_e(x, e);
        if v > 0.0 {
            acc += e.weight * v.powf(p);
        }
    }
    Ok(acc / p)
}

/// The clique-expansion energy phi_pq(x) = (1/p) sum_e w(e) f_eq(x)^p.
///
/// With q = infinity this is exactly phi_p.
pub fn phi_pq(g: &Hypergraph, params: &EnergyParams, x: &[f64]) -> Result<f64, EnergyError> {
    let q = match params.q() {
        QExponent::Finite(q) => q,
        QExponent::Infinite => return phi_p(g, params, x),
    };
    check_dim(g, x)?;
    let p = params.p();
    let mut acc = 0.0;
    for e in g.edges() {
        let v = f_eq(x, e, q);
        if v > 0.0 {
            acc += e.weight * v.powf(p);
        }
    }
    Ok(acc / p)
}

/// sign(r) |r|^(exponent) with the 0 -> 0 convention.
fn signed_pow(r: f64, exponent: f64) -> f64 {
    if r == 0.0 {
        0.0
    } else {
        r.signum() * r.abs().powf(exponent)
    }
}

/// Gradient of phi_pq, component l:
///
/// ```text
/// sum_{e : l in e} w(e) f_eq(x)^(p-q) sum_{i in e} |x_l - x_i|^(q-2) (x_l - x_i)
/// ```
///
/// Edges with f_eq(x) = 0 contribute zero (the limit value). Requires
/// p, q > 1 with q finite.
pub fn grad_phi_pq(
    g: &Hypergraph,
    params: &EnergyParams,
    x: &[f64],
) -> Result<Vec<f64>, EnergyError> {
    let (p, q) = params.require_gradient()?;
    check_dim(g, x)?;
    Ok(grad_phi_pq_raw(g, p, q, x))
}

/// Gradient formula without the p > 1 guard (the limit expression stays
/// valid pointwise for p = 1 off the diagonal set, which the inner proximal
/// solver exploits). Needs finite q > 1.
pub(crate) fn grad_phi_pq_raw(g: &Hypergraph, p: f64, q: f64, x: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; g.vertex_count()];
    for e in g.edges() {
        accumulate_edge_gradient(e, x, p, q, &mut out);
    }
    out
}

fn accumulate_edge_gradient(e: &Edge, x: &[f64], p: f64, q: f64, out: &mut [f64]) {
    let f = f_eq(x, e, q);
    if f == 0.0 {
        return;
    }
    // w f^(p-q) |d|^(q-2) d  ==  w f^(p-1) sign(r) |r|^(q-1),  r = d/f in [-1,1]
    let scale = e.weight * f.powf(p - 1.0);
    for (a, &i) in e.vertices.iter().enumerate() {
        for &j in &e.vertices[a + 1..] {
            let t = scale * signed_pow((x[i] - x[j]) / f, q - 1.0);
            out[i] += t;
            out[j] -= t;
        }
    }
}

/// Hessian of phi_pq as a dense symmetric matrix (row-major N x N).
///
/// Differentiating the gradient once more gives, per edge with
/// s_l = sum_i sign(r_li) |r_li|^(q-1) and r_li = (x_l - x_i)/f_eq:
///
/// ```text
/// off-diagonal (l,k in e):  w f^(p-2) [ (p-q) s_l s_k - (q-1) |r_lk|^(q-2) ]
/// diagonal     (l in e):    w f^(p-2) [ (p-q) s_l^2  + (q-1) sum_i |r_li|^(q-2) ]
/// ```
///
/// Edges with f_eq(x) = 0 contribute zero. Requires p, q > 2.
pub fn hess_phi_pq(
    g: &Hypergraph,
    params: &EnergyParams,
    x: &[f64],
) -> Result<Vec<f64>, EnergyError> {
    let (p, q) = params.require_hessian()?;
    check_dim(g, x)?;
    Ok(hess_phi_pq_raw(g, p, q, x))
}

/// Hessian formula without the p > 2 guard. The inner proximal solver uses
/// it as curvature information for any p >= 1 (entries grow like
/// f_eq^(p-2) near the diagonal set; the solver's damping handles that).
/// Still needs q > 2.
pub(crate) fn hess_phi_pq_raw(g: &Hypergraph, p: f64, q: f64, x: &[f64]) -> Vec<f64> {
    let total = g.vertex_count();
    let mut out = vec![0.0; total * total];
    for e in g.edges() {
        let f = f_eq(x, e, q);
        if f == 0.0 {
            continue;
        }
        let k = e.vertices.len();
        let scale = e.weight * f.powf(p - 2.0);
        // s[a] = sum_b sign(r_ab) |r_ab|^(q-1); d2[a][b] = |r_ab|^(q-2)
        let mut s = vec![0.0; k];
        let mut d2 = vec![0.0; k * k];
        for a in 0..k {
            for b in a + 1..k {
                let r = (x[e.vertices[a]] - x[e.vertices[b]]) / f;
                let t = signed_pow(r, q - 1.0);
                s[a] += t;
                s[b] -= t;
                let u = if r == 0.0 { 0.0 } else { r.abs().powf(q - 2.0) };
                d2[a * k + b] = u;
                d2[b * k + a] = u;
            }
        }
        for a in 0..k {
            let l = e.vertices[a];
            let row_d2: f64 = (0..k).map(|b| d2[a * k + b]).sum();
            out[l * total + l] += scale * ((p - q) * s[a] * s[a] + (q - 1.0) * row_d2);
            for b in a + 1..k {
                let kk = e.vertices[b];
                let v = scale * ((p - q) * s[a] * s[b] - (q - 1.0) * d2[a * k + b]);
                out[l * total + kk] += v;
                out[kk * total + l] += v;
            }
        }
    }
    out
}

/// One extreme face of the subdifferential of phi_p at x, per edge, plus the
/// canonical selection: the uniform average of the extreme points
/// `1_i - 1_j` over (argmax x on e) x (argmin x on e), scaled by
/// w(e) f_e(x)^(p-1).
#[derive(Debug, Clone)]
pub struct SubgradientFace {
    pub per_edge: Vec<EdgeFace>,
    /// Canonical subgradient in the face of d(phi_p)(x).
    pub eta: Vec<f64>,
}

/// Face data of one edge: value of f_e and the maximizer/minimizer index
/// sets (vertex indices, with a relative tie tolerance).
#[derive(Debug, Clone)]
pub struct EdgeFace {
    pub edge: usize,
    pub value: f64,
    pub argmax: Vec<usize>,
    pub argmin: Vec<usize>,
}

/// Membership tolerance for argmax/argmin sets: 1e-12 (1 + ||x||).
fn tie_tolerance(x: &[f64]) -> f64 {
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    1e-12 * (1.0 + norm)
}

/// Per-edge argmax/argmin sets of x and the canonical subgradient of phi_p.
///
/// If f_e(x) = 0 the edge contributes the zero vector (for p > 1 the factor
/// f_e^(p-1) vanishes; for p = 1 the face average is zero by symmetry).
pub fn subdiff_face(
    g: &Hypergraph,
    params: &EnergyParams,
    x: &[f64],
) -> Result<SubgradientFace, EnergyError> {
    check_dim(g, x)?;
    let p = params.p();
    let tol = tie_tolerance(x);
    let mut eta = vec![0.0; g.vertex_count()];
    let mut per_edge = Vec::with_capacity(g.edges().len());
    for (edge, e) in g.edges().iter().enumerate() {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &v in &e.vertices {
            lo = lo.min(x[v]);
            hi = hi.max(x[v]);
        }
        let argmax: Vec<usize> =
            e.vertices.iter().copied().filter(|&v| x[v] >= hi - tol).collect();
        let argmin: Vec<usize> =
            e.vertices.iter().copied().filter(|&v| x[v] <= lo + tol).collect();
        let value = hi - lo;
        if value > tol {
            let scale = e.weight * value.powf(p - 1.0);
            let pairs = (argmax.len() * argmin.len()) as f64;
            for &i in &argmax {
                eta[i] += scale * argmin.len() as f64 / pairs;
            }
            for &j in &argmin {
                eta[j] -= scale * argmax.len() as f64 / pairs;
            }
        }
        per_edge.push(EdgeFace { edge, value, argmax, argmin });
    }
    Ok(SubgradientFace { per_edge, eta })
}

/// Computable constants (kappa, kappa') with
///
/// ```text
/// phi_p(z) <= kappa ||z||^p,   ||eta|| <= kappa ||z||^(p-1)  (eta in d phi_p(z))
/// phi_pq(x) <= kappa' ||x||^p, ||grad phi_pq(x)|| <= kappa' ||x||^(p-1)  (any q)
/// ```
///
/// built from f_e(z) <= 2||z|| and f_eq(x) <= #e(#e-1)||x||.
pub fn kappa_bounds(g: &Hypergraph, params: &EnergyParams) -> (f64, f64) {
    let p = params.p();
    let weight_sum: f64 = g.edges().iter().map(|e| e.weight).sum();
    let kappa = (2f64.powf(p) / p * weight_sum).max(2f64.sqrt() * 2f64.powf(p - 1.0) * weight_sum);
    let mut phi_part = 0.0;
    let mut grad_part = 0.0;
    for e in g.edges() {
        let k = e.vertices.len() as f64;
        let pairs2 = k * (k - 1.0);
        phi_part += e.weight * pairs2.powf(p) / p;
        grad_part += e.weight * k * k * pairs2.powf(p - 1.0);
    }
    (kappa, phi_part.max(grad_part))
}
