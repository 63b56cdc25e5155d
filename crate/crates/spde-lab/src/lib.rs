//! Numerical laboratory for second-order SPDEs driven by Gaussian noise that is
//! white in time and spatially homogeneous.
//!
//! The crate is organized around the objects of that theory:
//!
//! * [`kernels`] — homogeneous covariance kernels (Riesz, Bessel, fractional)
//!   and their spectral densities;
//! * [`green`] — fundamental solutions of the heat and wave operators, their
//!   Fourier transforms and measure sampling;
//! * [`scaling`] — the small-time energy integrals, log-log slope fits and the
//!   closed-form exponent catalogue;
//! * [`noise`] — spectral sampling of the noise on a periodic grid;
//! * [`solver`] — mild-solution time stepping and empirical Hölder fits;
//! * [`malliavin`] — pathwise derivative fields, Gram matrices and the
//!   small-ball determinant probe;
//! * [`density`] — kernel density estimation of the joint law and the exact
//!   Gaussian oracle for the linear case.
//!
//! Replica-level loops run on rayon when the `parallel` feature (default) is
//! enabled and fall back to sequential iteration otherwise. Results are
//! bit-identical in both modes: every replica owns a counter-seeded RNG
//! stream, so the schedule does not influence the output.

pub mod density;
pub mod error;
pub mod exec;
pub mod fft;
pub mod green;
pub mod kernels;
pub mod linalg;
pub mod malliavin;
pub mod noise;
pub mod quad;
pub mod report;
pub mod scaling;
pub mod solver;
pub mod special;

pub use error::{Error, Result};
