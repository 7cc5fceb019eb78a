//! Laplacian-growth droplets from exterior harmonic moments.
//!
//! The exact side is the degree-two rational exterior map ([`conformal`]); the
//! approximate side is the family of planar orthonormal polynomials for the
//! weight e^{-N W(z)} ([`quadrature`], [`orthopoly`]). [`spectral`] builds the
//! algebraic curve of the Cauchy transform and the critical trajectory that
//! attracts the polynomial zeros.

pub mod cli;
pub mod conformal;
pub mod evolve;
pub mod moments;
pub mod orthopoly;
pub mod precision;
pub mod quadrature;
pub mod spectral;

pub use conformal::{classify_regime, classify_regime_at, solve_droplet, solve_params, RationalMap};
pub use moments::{MomentData, MomentKind, Potential};
