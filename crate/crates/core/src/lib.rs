//! Numerical laboratory for directional Haar projections on the discrete torus.
//!
//! The crate represents functions on `[0,1)^n` sampled on a dyadic grid and
//! implements the operator zoo around the directional Haar projection
//! `P^(ε)`: Figiel shifts, ring-domain operators `S_λ` and their shifted
//! copies, mollified Littlewood-Paley layers `P_l`, Riesz transforms and the
//! layer/Riesz compositions. The [`filtration`] module verifies the
//! combinatorial atom construction behind the ring-operator estimates in exact
//! rational arithmetic, and [`opnorm`] turns the operators into empirical norm
//! estimates and decay fits.

pub mod dyadic;
pub mod error;
pub mod exact;
pub mod filtration;
pub mod fourier;
pub mod grid;
pub mod mollify;
pub mod opnorm;
pub mod projection;
pub mod riesz;
pub mod ring;

pub use dyadic::{DyadicCube, HaarCoefficients, SignPattern};
pub use error::{Error, Result};
pub use grid::{GridFunction, ProbeKind, ProbeSpec};
