//! Transient probabilistic response of 2-D dynamical systems driven by
//! fractional Gaussian noise.
//!
//! The crate provides three cooperating pipelines:
//!
//! 1. **Ensemble simulation** ([`simulate`]): second-order (Heun) integration of
//!    `dY = f(Y) dt + Σ dB^H` with exact fractional-Gaussian-noise increments
//!    ([`fgn`]), propagation of one-step state-transition matrices along each
//!    path, and evaluation of the diagonal Malliavin derivatives by
//!    product-integration quadrature of the singular memory kernel.
//! 2. **Diffusion-coefficient estimation** ([`dlmm`]): the discretized
//!    local-mean method — bin the ensemble in state space, average the
//!    Malliavin samples per bin with a global-mean fallback for empty bins,
//!    smooth with a uniform kernel, and interpolate onto the solver grid.
//! 3. **Memory-dependent Fokker–Planck solution** ([`solver`]): an explicit
//!    finite-difference scheme for
//!    `∂p/∂t = −Σ_i ∂(a_i p)/∂y_i + Σ_ij ∂²(b_ij p)/∂y_i∂y_j`
//!    with time-dependent, possibly state-dependent diffusion coefficients
//!    supplied analytically (linear model, [`linear`]), by the white-noise
//!    limit, or by the DLMM estimate.
//!
//! The [`linear`] module carries the exact linear-oscillator reference
//! (closed-form matrix exponential, transient Gaussian law via
//! singularity-aware quadrature, analytic diffusion coefficients) against
//! which the stochastic pipeline is validated. [`stats`] post-processes PDF
//! grids (marginals, moments, histograms, error metrics); [`io`], [`config`],
//! and [`runner`] provide serialization, run configuration, and the
//! end-to-end orchestration used by the CLI.

pub mod config;
pub mod dlmm;
pub mod error;
pub mod fgn;
pub mod geom;
pub mod io;
pub mod linalg;
pub mod linear;
pub mod model;
pub mod rng;
pub mod runner;
pub mod simulate;
pub mod solver;
pub mod stats;

pub use error::{Error, Result};
