//! System models: drift, Jacobian, noise channels, Hurst indices, and the
//! Gaussian initial distribution, with four built-in 2-D systems.

use crate::error::{Error, Result};
use crate::fgn::validate_hurst;
use nalgebra::{Matrix2, Vector2};
use rand::Rng;
use rand_distr::StandardNormal;
use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

/// Hurst index restricted to the persistent range `(1/2, 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hurst(f64);

impl Hurst {
    pub fn new(h: f64) -> Result<Self> {
        Ok(Self(validate_hurst(h)?))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl fmt::Display for Hurst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Gaussian initial state distribution `N(mean, covariance)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianInit {
    pub mean: Vector2<f64>,
    pub covariance: Matrix2<f64>,
}

impl GaussianInit {
    pub fn new(mean: Vector2<f64>, covariance: Matrix2<f64>) -> Result<Self> {
        let det = covariance[(0, 0)] * covariance[(1, 1)] - covariance[(0, 1)] * covariance[(1, 0)];
        let symmetric = (covariance[(0, 1)] - covariance[(1, 0)]).abs()
            <= 1e-12 * covariance.abs().max().max(1.0);
        if !(det > 0.0 && covariance[(0, 0)] > 0.0 && symmetric && det.is_finite()) {
            return Err(Error::Config(
                "initial covariance must be symmetric positive definite".into(),
            ));
        }
        if !(mean.x.is_finite() && mean.y.is_finite()) {
            return Err(Error::Config("initial mean must be finite".into()));
        }
        Ok(Self { mean, covariance })
    }

    /// Isotropic initial law `N(mean, var·I)`.
    pub fn isotropic(mean: Vector2<f64>, var: f64) -> Result<Self> {
        Self::new(mean, Matrix2::new(var, 0.0, 0.0, var))
    }

    /// Draws an initial state (two standard-normal variates from `rng`,
    /// transformed by the Cholesky factor of the covariance).
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Vector2<f64> {
        let chol = self
            .covariance
            .cholesky()
            .expect("covariance validated positive definite at construction");
        let z = Vector2::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
        self.mean + chol.l() * z
    }
}

/// User-supplied dynamics: drift field and its exact Jacobian.
pub trait DriftJacobian: Send + Sync {
    fn drift(&self, y: &Vector2<f64>) -> Vector2<f64>;
    fn jacobian(&self, y: &Vector2<f64>) -> Matrix2<f64>;
    fn name(&self) -> &str;
}

/// `|y|^{m−1}·sign(y)` with the convention that it vanishes at `y = 0`
/// (the one-sided limit for integer `m ≥ 2`; for `m = 1` the kink at zero is
/// assigned slope-carrier 0).
fn abs_pow_signed(y: f64, m_minus_1: i32) -> f64 {
    if y == 0.0 {
        0.0
    } else {
        y.abs().powi(m_minus_1) * y.signum()
    }
}

/// The dynamics of a model: four built-in systems plus custom callbacks.
///
/// Built-in drifts (state `y = (y₁, y₂)`, written `(x, v)` for oscillators):
///
/// * `linear_sdof`: `(v, −k·x − c·v)`
/// * `duffing`: `(v, −η·v − α·x − β·x³)`
/// * `vdp`: `(v, −η·(−1 + x² + v²)·v − x)` (Van der Pol-type)
/// * `toggle`: `(α₁/(1+|y₂|^{m₁}) − y₁, α₂/(1+|y₁|^{m₂}) − y₂)`
///   (genetic toggle switch; integer Hill coefficients keep the drift smooth
///   on domains that include negative concentrations)
#[derive(Clone)]
pub enum Dynamics {
    LinearSdof { k: f64, c: f64 },
    Duffing { eta: f64, alpha: f64, beta: f64 },
    VanDerPol { eta: f64 },
    Toggle { alpha1: f64, alpha2: f64, m1: u32, m2: u32 },
    Custom(Arc<dyn DriftJacobian>),
}

impl fmt::Debug for Dynamics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Dynamics({})", self.name())
    }
}

impl Dynamics {
    pub fn name(&self) -> &str {
        match self {
            Dynamics::LinearSdof { .. } => "linear_sdof",
            Dynamics::Duffing { .. } => "duffing",
            Dynamics::VanDerPol { .. } => "vdp",
            Dynamics::Toggle { .. } => "toggle",
            Dynamics::Custom(d) => d.name(),
        }
    }

    #[inline]
    pub fn drift(&self, y: &Vector2<f64>) -> Vector2<f64> {
        let (x, v) = (y.x, y.y);
        match self {
            Dynamics::LinearSdof { k, c } => Vector2::new(v, -k * x - c * v),
            Dynamics::Duffing { eta, alpha, beta } => {
                Vector2::new(v, -eta * v - alpha * x - beta * x * x * x)
            }
            Dynamics::VanDerPol { eta } => {
                Vector2::new(v, -eta * (-1.0 + x * x + v * v) * v - x)
            }
            Dynamics::Toggle { alpha1, alpha2, m1, m2 } => Vector2::new(
                alpha1 / (1.0 + v.abs().powi(*m1 as i32)) - x,
                alpha2 / (1.0 + x.abs().powi(*m2 as i32)) - v,
            ),
            Dynamics::Custom(d) => d.drift(y),
        }
    }

    #[inline]
    pub fn jacobian(&self, y: &Vector2<f64>) -> Matrix2<f64> {
        let (x, v) = (y.x, y.y);
        match self {
            Dynamics::LinearSdof { k, c } => Matrix2::new(0.0, 1.0, -k, -c),
            Dynamics::Duffing { eta, alpha, beta } => {
                Matrix2::new(0.0, 1.0, -alpha - 3.0 * beta * x * x, -eta)
            }
            Dynamics::VanDerPol { eta } => Matrix2::new(
                0.0,
                1.0,
                -2.0 * eta * x * v - 1.0,
                -eta * (-1.0 + x * x + 3.0 * v * v),
            ),
            Dynamics::Toggle { alpha1, alpha2, m1, m2 } => {
                // d/dy |y|^m = m·|y|^{m−1}·sign(y); the Hill response is
                // decreasing in the repressor concentration, so both
                // off-diagonal entries carry a minus sign.
                let h1 = 1.0 + v.abs().powi(*m1 as i32);
                let h2 = 1.0 + x.abs().powi(*m2 as i32);
                let d12 = -alpha1 * *m1 as f64 * abs_pow_signed(v, *m1 as i32 - 1) / (h1 * h1);
                let d21 = -alpha2 * *m2 as f64 * abs_pow_signed(x, *m2 as i32 - 1) / (h2 * h2);
                Matrix2::new(-1.0, d12, d21, -1.0)
            }
            Dynamics::Custom(d) => d.jacobian(y),
        }
    }

    /// The constant system matrix, if the dynamics are linear.
    pub fn linear_matrix(&self) -> Option<Matrix2<f64>> {
        match self {
            Dynamics::LinearSdof { k, c } => Some(Matrix2::new(0.0, 1.0, -k, -c)),
            _ => None,
        }
    }
}

/// A complete system model: dynamics, diagonal noise matrix, per-channel
/// Hurst indices, and the initial distribution.
#[derive(Debug, Clone)]
pub struct SystemModel {
    pub dynamics: Dynamics,
    /// Diagonal of the constant noise matrix `Σ̂ = diag(σ₁, σ₂)`.
    pub sigma: [f64; 2],
    pub hurst: [Hurst; 2],
    pub init: GaussianInit,
}

impl SystemModel {
    pub fn new(
        dynamics: Dynamics,
        sigma: [f64; 2],
        hurst: [Hurst; 2],
        init: GaussianInit,
    ) -> Result<Self> {
        if sigma.iter().any(|s| *s < 0.0 || !s.is_finite()) {
            return Err(Error::Config(format!(
                "noise intensities must be nonnegative, got {sigma:?}"
            )));
        }
        if sigma[0] == 0.0 && sigma[1] == 0.0 {
            return Err(Error::Config("at least one noise channel must be active".into()));
        }
        Ok(Self { dynamics, sigma, hurst, init })
    }

    pub fn name(&self) -> &str {
        self.dynamics.name()
    }

    /// Channel indices with nonzero noise.
    pub fn active_channels(&self) -> Vec<usize> {
        (0..2).filter(|&i| self.sigma[i] > 0.0).collect()
    }
}

fn required(params: &BTreeMap<String, f64>, key: &str) -> Result<f64> {
    params
        .get(key)
        .copied()
        .ok_or_else(|| Error::Config(format!("missing model parameter `{key}`")))
}

fn require_positive(name: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Config(format!("parameter `{name}` must be positive, got {v}")))
    }
}

/// Builds one of the built-in models from its parameter map plus the shared
/// noise/initial-condition blocks.
///
/// Single-degree-of-freedom models (`linear_sdof`, `duffing`, `vdp`) are
/// driven through the velocity equation only: they require `σ₁ = 0` and equal
/// Hurst indices on both channels.
pub fn builtin(
    name: &str,
    params: &BTreeMap<String, f64>,
    sigma: [f64; 2],
    hurst: [f64; 2],
    init: GaussianInit,
) -> Result<SystemModel> {
    let dynamics = match name {
        "linear_sdof" => Dynamics::LinearSdof {
            k: require_positive("k", required(params, "k")?)?,
            c: require_positive("c", required(params, "c")?)?,
        },
        "duffing" => Dynamics::Duffing {
            eta: require_positive("eta", required(params, "eta")?)?,
            alpha: required(params, "alpha")?,
            beta: required(params, "beta")?,
        },
        "vdp" => Dynamics::VanDerPol {
            eta: require_positive("eta", required(params, "eta")?)?,
        },
        "toggle" => {
            let m1 = required(params, "m1")?;
            let m2 = required(params, "m2")?;
            if m1.fract() != 0.0 || m2.fract() != 0.0 || m1 < 1.0 || m2 < 1.0 {
                return Err(Error::Config(format!(
                    "Hill coefficients must be integers >= 1, got m1 = {m1}, m2 = {m2}"
                )));
            }
            Dynamics::Toggle {
                alpha1: require_positive("alpha1", required(params, "alpha1")?)?,
                alpha2: require_positive("alpha2", required(params, "alpha2")?)?,
                m1: m1 as u32,
                m2: m2 as u32,
            }
        }
        other => {
            return Err(Error::Config(format!(
                "unknown model `{other}` (expected linear_sdof, duffing, vdp, or toggle)"
            )))
        }
    };
    let is_sdof = matches!(
        dynamics,
        Dynamics::LinearSdof { .. } | Dynamics::Duffing { .. } | Dynamics::VanDerPol { .. }
    );
    if is_sdof {
        if sigma[0] != 0.0 {
            return Err(Error::Config(format!(
                "model `{name}` is driven through the velocity channel only; sigma[0] must be 0"
            )));
        }
        if hurst[0] != hurst[1] {
            return Err(Error::Config(format!(
                "model `{name}` uses a single noise source; both Hurst entries must be equal"
            )));
        }
    }
    SystemModel::new(dynamics, sigma, [Hurst::new(hurst[0])?, Hurst::new(hurst[1])?], init)
}

/// Result of the finite-difference Jacobian verification.
#[derive(Debug, Clone, Copy)]
pub struct JacobianReport {
    pub max_rel_error: f64,
    pub n_points: usize,
    pub pass: bool,
}

/// Compares the analytic Jacobian against central finite differences of the
/// drift at `n_points` random states in `[−2.5, 2.5]²`; passes when the
/// worst matrix-scaled relative error is ≤ 1e-5.
pub fn verify_jacobian(model: &SystemModel, n_points: usize, seed: u64) -> JacobianReport {
    let mut rng = crate::rng::stream_rng(seed, 0);
    let h = 1e-5;
    let mut max_rel = 0.0_f64;
    for _ in 0..n_points {
        let y = Vector2::new(rng.gen_range(-2.5..2.5), rng.gen_range(-2.5..2.5));
        let analytic = model.dynamics.jacobian(&y);
        let mut fd = Matrix2::zeros();
        for col in 0..2 {
            let mut e = Vector2::zeros();
            e[col] = h;
            let fp = model.dynamics.drift(&(y + e));
            let fm = model.dynamics.drift(&(y - e));
            fd[(0, col)] = (fp.x - fm.x) / (2.0 * h);
            fd[(1, col)] = (fp.y - fm.y) / (2.0 * h);
        }
        let scale = analytic.abs().max().max(1.0);
        let err = (fd - analytic).abs().max() / scale;
        max_rel = max_rel.max(err);
    }
    JacobianReport { max_rel_error: max_rel, n_points, pass: max_rel <= 1e-5 }
}
