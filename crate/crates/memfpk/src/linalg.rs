//! Small dense-matrix utilities: closed-form 2×2 matrix exponential and a
//! bivariate Gaussian density evaluator.

use crate::error::{Error, Result};
use nalgebra::{Matrix2, Vector2};

/// Matrix exponential of a real 2×2 matrix, in closed form.
///
/// Split `M = a·I + B` with `a = tr(M)/2`, so `B` is traceless. A traceless
/// 2×2 matrix satisfies `B² = δ·I` with `δ = B₁₁² + B₁₂B₂₁ = −det B`, hence
///
/// * `δ > 0`: `exp(M) = eᵃ(cosh(√δ)·I + sinh(√δ)/√δ·B)`
/// * `δ < 0`: `exp(M) = eᵃ(cos(√−δ)·I + sin(√−δ)/√−δ·B)`
/// * `δ ≈ 0`: Taylor series of both scalar factors (covers defective cases).
///
/// Exact for every real 2×2 matrix; no scaling-and-squaring needed.
pub fn expm2(m: &Matrix2<f64>) -> Matrix2<f64> {
    let a = 0.5 * (m[(0, 0)] + m[(1, 1)]);
    let b = Matrix2::new(m[(0, 0)] - a, m[(0, 1)], m[(1, 0)], m[(1, 1)] - a);
    let delta = b[(0, 0)] * b[(0, 0)] + b[(0, 1)] * b[(1, 0)];
    let ea = a.exp();
    let (cosh_like, sinc_like) = if delta > 1e-12 {
        let mu = delta.sqrt();
        (mu.cosh(), mu.sinh() / mu)
    } else if delta < -1e-12 {
        let mu = (-delta).sqrt();
        (mu.cos(), mu.sin() / mu)
    } else {
        // cosh(√δ) = 1 + δ/2 + δ²/24 + O(δ³), sinh(√δ)/√δ = 1 + δ/6 + δ²/120 + O(δ³);
        // both expansions are valid for either sign of δ, truncation ≤ |δ|³/720.
        (
            1.0 + delta / 2.0 + delta * delta / 24.0,
            1.0 + delta / 6.0 + delta * delta / 120.0,
        )
    };
    Matrix2::new(
        ea * (cosh_like + sinc_like * b[(0, 0)]),
        ea * sinc_like * b[(0, 1)],
        ea * sinc_like * b[(1, 0)],
        ea * (cosh_like + sinc_like * b[(1, 1)]),
    )
}

/// Bivariate Gaussian density with precomputed inverse covariance and
/// normalization, for fast evaluation over grids.
#[derive(Debug, Clone)]
pub struct Gaussian2 {
    mean: Vector2<f64>,
    inv_cov: Matrix2<f64>,
    norm: f64,
}

impl Gaussian2 {
    /// Builds the density `N(mean, cov)`. The covariance must be symmetric
    /// positive definite (checked via its determinant and diagonal).
    pub fn new(mean: Vector2<f64>, cov: Matrix2<f64>) -> Result<Self> {
        let det = cov[(0, 0)] * cov[(1, 1)] - cov[(0, 1)] * cov[(1, 0)];
        if !(det > 0.0 && cov[(0, 0)] > 0.0 && det.is_finite()) {
            return Err(Error::Domain(format!(
                "covariance is not positive definite (det = {det:e})"
            )));
        }
        let inv_cov = Matrix2::new(cov[(1, 1)], -cov[(0, 1)], -cov[(1, 0)], cov[(0, 0)]) / det;
        Ok(Self {
            mean,
            inv_cov,
            norm: 1.0 / (2.0 * std::f64::consts::PI * det.sqrt()),
        })
    }

    /// Density value at `y`.
    pub fn density(&self, y: &Vector2<f64>) -> f64 {
        let d = y - self.mean;
        let q = self.inv_cov[(0, 0)] * d.x * d.x
            + (self.inv_cov[(0, 1)] + self.inv_cov[(1, 0)]) * d.x * d.y
            + self.inv_cov[(1, 1)] * d.y * d.y;
        self.norm * (-0.5 * q).exp()
    }
}
