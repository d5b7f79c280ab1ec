//! Gamma-gamma hierarchical models for differential expression.
//!
//! Expression of gene `i` on array `j` is modelled as
//! `x_ij ~ Ga(α_i, α_i / λ_{i,z_j})` with `λ` drawn from an inverse gamma
//! (GaGa) or a mixture of inverse gammas (MiGaGa) and `α_i ~ Ga(β, β/μ)`.
//! Hyperparameters are fitted by empirical Bayes (EM); genes are then
//! classified into expression patterns under Bayesian FDR control.

pub mod cli;
pub mod decision;
pub mod error;
pub mod fitting;
pub mod gas;
pub mod inference;
pub mod io;
pub mod model;
pub mod quad;
pub mod rng;
pub mod simulation;
pub mod special;

pub use error::{Error, ErrorKind, Result};
