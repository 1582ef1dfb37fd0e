//! Numerical toolkit for the Neumann and Dirichlet spectra of Krein-Feller
//! operators `d/dμ d/dx` on `[0, 1]`.
//!
//! Measures are restricted to piecewise-constant densities, which covers the
//! level-`n` approximants of the weighted ternary Cantor measure. For such a
//! measure the iterated integrals `p_n`, `q_n` are exact piecewise polynomials;
//! the eigenvalues are the squares of the positive zeros of the sine series
//! built from them.
//!
//! The crate is organised bottom-up:
//!
//! - [`measures`]: measures, CDFs, Cantor approximants.
//! - [`polyalg`]: piecewise polynomials and the two integration operators.
//! - [`series`]: coefficient tables and the four trigonometric functions with
//!   truncation certificates.
//! - [`spectrum`]: root finding, eigenfunctions and a finite-element oracle.
//! - [`convergence`]: rate experiments and the inequality audit.

pub mod convergence;
pub mod error;
pub mod format;
pub mod measures;
pub mod polyalg;
pub mod series;
pub mod spectrum;
mod sum;

pub use error::{Error, ErrorKind, Result};
pub use measures::{CantorLevel, Measure, WeightVector};
pub use polyalg::PiecewisePolynomial;
pub use series::{TrigFn, TrigTable, TruncationCertificate};
pub use spectrum::{Boundary, EigenvalueRecord, Eigenfunction, Spectrum};
