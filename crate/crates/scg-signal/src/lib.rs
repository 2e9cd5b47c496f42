//! Solver library for optimal public and private signaling in singleton
//! congestion games (SCGs) with an uncertain state of nature.
//!
//! A sender who observes the realized state commits to a signaling scheme
//! and wants to minimize the expected social cost of the equilibrium the
//! agents end up playing. This crate computes:
//!
//! * the optimal **public** scheme under optimistic (cost-minimizing)
//!   equilibrium selection, via enumeration of equilibrium signatures and
//!   one aggregated linear program over the signature regions;
//! * the optimal **private** scheme as a Bayes correlated equilibrium in
//!   reduced form (configuration marginals), together with a
//!   flow-decomposition sampler that turns any feasible reduced form back
//!   into an explicit distribution over action profiles;
//! * exhaustive small-scale oracles (the exponential BCE program,
//!   brute-force equilibrium enumeration) used to cross-check the fast
//!   paths.
//!
//! All numeric kernels are generic over [`scalar::Scalar`], so every solve
//! can run either in exact rational arithmetic (the default for file-based
//! instances) or in `f64` for speed on larger instances.

pub mod cli;
pub mod equilibrium;
pub mod flow;
pub mod game;
pub mod instances;
pub mod lp;
pub mod private;
pub mod public;
pub mod scalar;

/// Exact arithmetic used by the default solve mode and by serialization.
pub type Rational = num_rational::BigRational;

/// Instance with exact rational costs and priors (the parse target).
pub type RationalInstance = game::Instance<Rational>;
/// Instance converted to floating point for large solves.
pub type FloatInstance = game::Instance<f64>;
