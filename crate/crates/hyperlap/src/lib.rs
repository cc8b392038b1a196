//! Evolution equations governed by the hypergraph p-Laplacian, their
//! clique-expansion approximation, adjoint-based optimal control, and the
//! spectral quantities of the approximation (Poincare constants, decay
//! envelopes, resolvents, first positive eigenvalue).

pub mod cli;
pub mod control;
pub mod dynamics;
pub mod energy;
pub mod hypergraph;
pub mod io;
pub mod linalg;
pub mod spectral;
pub mod testing;

pub(crate) mod prox;

pub use energy::{EnergyParams, QExponent};
pub use hypergraph::Hypergraph;
