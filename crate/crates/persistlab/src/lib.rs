//! Numerical toolkit for deciding whether the vanishing component of a
//! semi-trivial steady state W* = (u*, 0) of a 1D cross-diffusion system is
//! unstable, and for certifying the structural conditions under which that
//! instability forces persistence of the v-species.
//!
//! The pipeline:
//!
//! 1. [`model`] declares the coupled system (diffusion / drift / reaction
//!    blocks as evaluable matrix fields), validates ellipticity and the
//!    vanishing-coupling requirements, and solves for u*.
//! 2. [`discretization`] assembles flux-form finite-difference operators on
//!    uniform grids with Dirichlet or Neumann closures.
//! 3. [`spectral`] computes the principal eigenvalue tau of the weighted
//!    eigenproblem L psi = tau^{-1} M psi by power iteration, plus the
//!    comparison and maximum-principle utilities used by the criteria.
//! 4. [`structure`] is the constant/spatial matrix toolkit: simultaneous
//!    lower-triangularization, positivity certificates, competitive-to-
//!    cooperative transforms.
//! 5. [`instability`] wires 1-4 into named instability criteria and the
//!    domain-scaling construction.
//! 6. [`sim`] cross-checks verdicts by direct IMEX simulation and monitors the
//!    persistence functional Y(t).
//!
//! The `persistlab` binary exposes all of it behind a scenario-file CLI.

pub mod discretization;
pub mod error;
pub mod model;
pub mod spectral;

pub use error::{Error, Result};
