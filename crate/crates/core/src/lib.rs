//! Simulation library for nonlocal evolution equations on perforated
//! domains.
//!
//! The crate covers the full pipeline: perforated geometry and effective
//! densities, convolution kernels with FFT evaluation, ball-averaged
//! nonlinear reactions, the evolution equations themselves with exponential
//! and Runge-Kutta integrators, principal eigenvalue estimation, and the
//! sweep harness that measures convergence of the perforated problems to
//! their homogenized limits.

pub mod error;
pub mod evolution;
pub mod export;
pub mod field;
pub mod geometry;
pub mod grid;
pub mod harness;
pub mod kernel;
pub mod nonlinearity;
pub mod spectral;
