//! Exact and numerical analysis of the zero-energy threshold of half-line
//! Schrodinger operators H = -d^2/dr^2 + V with a Dirichlet condition at r = 0.
//!
//! The crate has two halves that check each other:
//!
//! * an exact engine over arbitrary-precision rationals: piecewise-polynomial
//!   functions ([`ppoly`]), factored potentials V = v*Uv ([`potential`]),
//!   classification of the threshold point ([`threshold`]), and the Laurent
//!   expansion of the resolvent (H + kappa^2)^-1 around kappa = 0
//!   ([`expansion`]);
//! * a floating-point finite-difference oracle ([`oracle`]) for independent
//!   validation: direct resolvent solves, Laurent-coefficient fitting,
//!   eigensolves and Crank-Nicolson time evolution.
//!
//! On top of both sits [`fgr`], which computes the Fermi-golden-rule data
//! (coupling b, order nu, coefficient g_nu, width Gamma) for a perturbed
//! threshold eigenvalue and predicts the survival amplitude.

pub mod expansion;
pub mod fgr;
pub mod kspace;
pub mod matrix;
pub mod oracle;
pub mod poly;
pub mod potential;
pub mod ppoly;
pub mod rational;
pub mod series;
pub mod threshold;

pub use expansion::{OperatorRep, RankTerm, ResolventExpansion};
pub use kspace::KSpace;
pub use matrix::QMat;
pub use poly::Poly;
pub use potential::{FactoredPotential, FiniteRankPotential, LocalPotential};
pub use ppoly::PiecewisePoly;
pub use rational::Rational;
pub use series::{LaurentMatrixSeries, MatrixSeries};
pub use threshold::{EigenData, ThresholdClassification, ThresholdKind};
