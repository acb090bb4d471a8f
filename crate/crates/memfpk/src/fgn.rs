//! Exact fractional Gaussian noise (FGN) on a uniform time grid.
//!
//! FGN here means the increment process of fractional Brownian motion
//! `B^H`: `x_m = B^H(t_{m+1}) − B^H(t_m)` on the grid `t_m = m·dt`, a
//! stationary Gaussian sequence with autocovariance
//! `γ(k) = dt^{2H}/2·(|k+1|^{2H} − 2|k|^{2H} + |k−1|^{2H})`.
//!
//! Sampling is exact: Davies–Harte circulant embedding (O(n log n)) with a
//! Cholesky fallback for the rare case of a negative embedding eigenvalue.
//! Exactness matters because downstream acceptance checks compare ensemble
//! statistics against the closed-form covariance.

use crate::error::{Error, Result};
use crate::rng::stream_rng;
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

/// Admissible Hurst range for FGN sampling. The persistent regime
/// `1/2 < H < 1` is the modelling target; `H = 1/2` (white noise) is served
/// by a dedicated mode, not by this sampler.
pub fn validate_hurst(hurst: f64) -> Result<f64> {
    if hurst > 0.5 && hurst < 1.0 && hurst.is_finite() {
        Ok(hurst)
    } else {
        Err(Error::Domain(format!(
            "Hurst index must lie in (1/2, 1), got {hurst}"
        )))
    }
}

/// Specification of one FGN sequence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FgnSpec {
    pub hurst: f64,
    pub dt: f64,
    pub n_steps: usize,
    pub seed: u64,
}

impl FgnSpec {
    pub fn new(hurst: f64, dt: f64, n_steps: usize, seed: u64) -> Result<Self> {
        validate_hurst(hurst)?;
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Domain(format!("dt must be positive, got {dt}")));
        }
        if n_steps == 0 {
            return Err(Error::Domain("n_steps must be at least 1".into()));
        }
        Ok(Self { hurst, dt, n_steps, seed })
    }
}

/// One sampled FGN sequence together with its spec.
#[derive(Debug, Clone)]
pub struct FgnIncrements {
    pub values: Vec<f64>,
    pub spec: FgnSpec,
}

/// Closed-form autocovariance of FBM increments:
/// `γ(k) = dt^{2H}/2 · (|k+1|^{2H} − 2|k|^{2H} + |k−1|^{2H})`, so
/// `γ(0) = dt^{2H}`. Valid for any `H ∈ (0,1)` (used for validation even
/// though the sampler itself is restricted to the persistent range).
pub fn increment_autocovariance(hurst: f64, lag: usize, dt: f64) -> Result<f64> {
    if !(hurst > 0.0 && hurst < 1.0 && hurst.is_finite()) {
        return Err(Error::Domain(format!(
            "autocovariance needs Hurst in (0, 1), got {hurst}"
        )));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Domain(format!("dt must be positive, got {dt}")));
    }
    let h2 = 2.0 * hurst;
    let k = lag as f64;
    Ok(0.5 * dt.powf(h2) * ((k + 1.0).powf(h2) - 2.0 * k.powf(h2) + (k - 1.0).abs().powf(h2)))
}

/// One-sided power spectral density of FGN (unit time step),
/// `S_H(ω) = H·Γ(2H)·sin(Hπ)/π · |ω|^{1−2H}`.
///
/// At `H = 1/2` this is the flat white-noise spectrum `1/(2π)` for every ω;
/// for `H > 1/2` the spectrum diverges at ω = 0, which is reported as a
/// domain error.
pub fn psd(hurst: f64, omega: f64) -> Result<f64> {
    if !(hurst >= 0.5 && hurst < 1.0 && hurst.is_finite()) {
        return Err(Error::Domain(format!(
            "psd needs Hurst in [1/2, 1), got {hurst}"
        )));
    }
    if omega == 0.0 && hurst > 0.5 {
        return Err(Error::Domain(
            "psd diverges at omega = 0 for Hurst > 1/2".into(),
        ));
    }
    let g = statrs::function::gamma::gamma(2.0 * hurst);
    Ok(hurst * g * (hurst * std::f64::consts::PI).sin() / std::f64::consts::PI
        * omega.abs().powf(1.0 - 2.0 * hurst))
}

enum Method {
    /// Davies–Harte: the circulant embedding of the covariance has been
    /// diagonalized once; `scale[k]` holds the per-frequency amplitude
    /// (√(λ₀/M), √(λ_k/(2M)) for 0<k<n, √(λ_n/M)).
    CirculantEmbedding { scale: Vec<f64>, fft: Arc<dyn Fft<f64>> },
    /// Dense Cholesky factor of the n×n covariance (fallback).
    Cholesky { factor: DMatrix<f64> },
}

/// Reusable exact-FGN generator for a fixed `(hurst, dt, n_steps)` shape.
///
/// The spectral decomposition of the circulant embedding depends only on the
/// shape, so one generator is built per ensemble and shared across worker
/// threads; each draw needs one FFT and `2n` standard-normal variates.
pub struct FgnGenerator {
    pub hurst: f64,
    pub dt: f64,
    pub n_steps: usize,
    method: Method,
}

impl FgnGenerator {
    pub fn new(hurst: f64, dt: f64, n_steps: usize) -> Result<Self> {
        validate_hurst(hurst)?;
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Domain(format!("dt must be positive, got {dt}")));
        }
        if n_steps == 0 {
            return Err(Error::Domain("n_steps must be at least 1".into()));
        }
        let n = n_steps;
        let m = 2 * n;
        // First row of the circulant embedding: γ(0..n), then γ(n−1..1).
        let mut first_row = Vec::with_capacity(m);
        for k in 0..=n {
            first_row.push(increment_autocovariance(hurst, k, dt)?);
        }
        for k in (1..n).rev() {
            first_row.push(first_row[k]);
        }
        debug_assert_eq!(first_row.len(), m);

        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(m);
        let mut spectrum: Vec<Complex<f64>> =
            first_row.iter().map(|&v| Complex::new(v, 0.0)).collect();
        fft.process(&mut spectrum);

        let lambda: Vec<f64> = spectrum.iter().map(|c| c.re).collect();
        let lambda_max = lambda.iter().cloned().fold(0.0_f64, f64::max);
        let lambda_min = lambda.iter().cloned().fold(f64::INFINITY, f64::min);
        if lambda_min < -1e-8 * lambda_max {
            // Embedding not nonnegative definite at this size: fall back to a
            // dense factorization of the true covariance (exact as well).
            return Ok(Self { hurst, dt, n_steps, method: Self::cholesky_method(hurst, dt, n)? });
        }

        let mf = m as f64;
        let mut scale = vec![0.0; n + 1];
        scale[0] = (lambda[0].max(0.0) / mf).sqrt();
        for k in 1..n {
            scale[k] = (lambda[k].max(0.0) / (2.0 * mf)).sqrt();
        }
        scale[n] = (lambda[n].max(0.0) / mf).sqrt();
        Ok(Self {
            hurst,
            dt,
            n_steps,
            method: Method::CirculantEmbedding { scale, fft },
        })
    }

    fn cholesky_method(hurst: f64, dt: f64, n: usize) -> Result<Method> {
        let cov = DMatrix::from_fn(n, n, |i, j| {
            increment_autocovariance(hurst, i.abs_diff(j), dt).expect("validated hurst")
        });
        let chol = cov
            .cholesky()
            .ok_or_else(|| Error::Numerical("FGN covariance is not positive definite".into()))?;
        Ok(Method::Cholesky { factor: chol.unpack() })
    }

    /// Construction forced onto the Cholesky path (the fallback is exact too;
    /// exposed for direct testing and for tiny sequences).
    pub fn new_cholesky(hurst: f64, dt: f64, n_steps: usize) -> Result<Self> {
        validate_hurst(hurst)?;
        if n_steps == 0 {
            return Err(Error::Domain("n_steps must be at least 1".into()));
        }
        Ok(Self { hurst, dt, n_steps, method: Self::cholesky_method(hurst, dt, n_steps)? })
    }

    /// Name of the active sampling method, recorded in run metadata.
    pub fn method_name(&self) -> &'static str {
        match self.method {
            Method::CirculantEmbedding { .. } => "davies-harte",
            Method::Cholesky { .. } => "cholesky",
        }
    }

    /// Draws one sequence of `n_steps` increments using the caller's RNG.
    ///
    /// Draw order (part of the reproducibility contract): Davies–Harte draws
    /// `Z₀`, then `(U_k, W_k)` for k = 1..n−1, then `Z_n`; Cholesky draws
    /// `z_0..z_{n−1}`.
    pub fn sample_with_rng<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let n = self.n_steps;
        match &self.method {
            Method::CirculantEmbedding { scale, fft } => {
                let m = 2 * n;
                let mut w = vec![Complex::new(0.0, 0.0); m];
                let z0: f64 = rng.sample(StandardNormal);
                w[0] = Complex::new(scale[0] * z0, 0.0);
                for k in 1..n {
                    let u: f64 = rng.sample(StandardNormal);
                    let v: f64 = rng.sample(StandardNormal);
                    w[k] = Complex::new(scale[k] * u, scale[k] * v);
                    w[m - k] = w[k].conj();
                }
                let zn: f64 = rng.sample(StandardNormal);
                w[n] = Complex::new(scale[n] * zn, 0.0);
                fft.process(&mut w);
                w[..n].iter().map(|c| c.re).collect()
            }
            Method::Cholesky { factor } => {
                let z = DMatrix::from_fn(n, 1, |_, _| rng.sample(StandardNormal));
                let x = factor * z;
                x.column(0).iter().cloned().collect()
            }
        }
    }
}

/// Samples one FGN sequence from its spec (deterministic in `spec.seed`).
pub fn sample_path(spec: &FgnSpec) -> Result<FgnIncrements> {
    let generator = FgnGenerator::new(spec.hurst, spec.dt, spec.n_steps)?;
    let mut rng = stream_rng(spec.seed, 0);
    Ok(FgnIncrements {
        values: generator.sample_with_rng(&mut rng),
        spec: *spec,
    })
}

/// White-noise increments for the `H = 1/2` mode: i.i.d. `N(0, dt)`
/// (the `dt^{2H}` variance at `H = 1/2`).
pub fn sample_white_increments<R: Rng + ?Sized>(dt: f64, n_steps: usize, rng: &mut R) -> Vec<f64> {
    let sd = dt.sqrt();
    (0..n_steps)
        .map(|_| {
            let z: f64 = rng.sample(StandardNormal);
            sd * z
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    // Reference values computed independently with 40-digit arithmetic.
    const GAMMA1_H08: f64 = 0.515_716_566_510_398_08;
    const GAMMA1_H051: f64 = 0.013_959_479_790_029_139;

    #[test]
    fn autocovariance_matches_high_precision_references() {
        assert_relative_eq!(
            increment_autocovariance(0.8, 0, 1.0).unwrap(),
            1.0,
            epsilon = 1e-15
        );
        assert_relative_eq!(
            increment_autocovariance(0.8, 1, 1.0).unwrap(),
            GAMMA1_H08,
            epsilon = 1e-15
        );
        assert_relative_eq!(
            increment_autocovariance(0.8, 2, 1.0).unwrap(),
            0.368_339_934_376_847_96,
            epsilon = 1e-15
        );
        // The three-term difference |k+1|^{2H} − 2|k|^{2H} + |k−1|^{2H} loses
        // ~1.5 digits to cancellation at lag 5, so allow a few ulps more.
        assert_relative_eq!(
            increment_autocovariance(0.8, 5, 1.0).unwrap(),
            0.252_622_552_719_868_50,
            epsilon = 5e-15
        );
        assert_relative_eq!(
            increment_autocovariance(0.6, 1, 1.0).unwrap(),
            0.148_698_354_997_035_00,
            epsilon = 1e-15
        );
        assert_relative_eq!(
            increment_autocovariance(0.51, 1, 1.0).unwrap(),
            GAMMA1_H051,
            epsilon = 1e-15
        );
        assert_relative_eq!(
            increment_autocovariance(0.8, 1, 1e-3).unwrap(),
            8.173_556_755_017_490e-6,
            max_relative = 1e-14
        );
    }

    #[test]
    fn autocovariance_white_noise_is_uncorrelated() {
        let g = increment_autocovariance(0.5, 1, 1.0).unwrap();
        assert!(g.abs() < 1e-15);
        assert_relative_eq!(increment_autocovariance(0.5, 0, 0.25).unwrap(), 0.25);
    }

    #[test]
    fn autocovariance_rejects_bad_domain() {
        assert!(increment_autocovariance(0.0, 1, 1.0).is_err());
        assert!(increment_autocovariance(1.0, 1, 1.0).is_err());
        assert!(increment_autocovariance(0.7, 1, 0.0).is_err());
    }

    #[test]
    fn psd_white_noise_is_flat_one_over_two_pi() {
        let flat = 1.0 / (2.0 * std::f64::consts::PI);
        assert_relative_eq!(psd(0.5, 3.7).unwrap(), flat, epsilon = 1e-15);
        assert_relative_eq!(psd(0.5, 0.01).unwrap(), flat, epsilon = 1e-15);
    }

    #[test]
    fn psd_matches_high_precision_references() {
        assert_relative_eq!(psd(0.8, 1.0).unwrap(), 0.133_739_845_465_487_52, epsilon = 1e-12);
        assert_relative_eq!(psd(0.8, 2.0).unwrap(), 0.088_235_392_038_627_59, epsilon = 1e-12);
        assert_relative_eq!(psd(0.6, 1.0).unwrap(), 0.166_774_714_956_124_06, epsilon = 1e-12);
    }

    #[test]
    fn psd_rejects_divergent_origin_and_bad_hurst() {
        assert!(psd(0.8, 0.0).is_err());
        assert!(psd(0.4, 1.0).is_err());
        assert!(psd(1.0, 1.0).is_err());
    }

    #[test]
    fn sample_path_is_deterministic() {
        let spec = FgnSpec::new(0.8, 1.0, 256, 12345).unwrap();
        let a = sample_path(&spec).unwrap();
        let b = sample_path(&spec).unwrap();
        assert_eq!(a.values, b.values);
        assert_eq!(a.values.len(), 256);
    }

    /// Ensemble autocovariance estimate at `lag` over paths stored row-wise.
    fn ensemble_autocov(paths: &[Vec<f64>], lag: usize) -> f64 {
        let mut acc = 0.0;
        let mut count = 0usize;
        for p in paths {
            for m in 0..p.len() - lag {
                acc += p[m] * p[m + lag];
                count += 1;
            }
        }
        acc / count as f64
    }

    fn sample_ensemble(hurst: f64, n_steps: usize, n_paths: usize, seed: u64) -> Vec<Vec<f64>> {
        let generator = FgnGenerator::new(hurst, 1.0, n_steps).unwrap();
        (0..n_paths)
            .map(|i| generator.sample_with_rng(&mut stream_rng(seed, i as u64)))
            .collect()
    }

    #[test]
    fn persistent_ensemble_matches_closed_form_autocovariance() {
        let paths = sample_ensemble(0.8, 1 << 12, 200, 2024);
        assert_relative_eq!(ensemble_autocov(&paths, 1), GAMMA1_H08, epsilon = 0.02);
        assert_relative_eq!(ensemble_autocov(&paths, 0), 1.0, epsilon = 0.03);
        // Mean-zero invariant: path means are i.i.d., so their spread gives a
        // valid standard error even though increments are correlated in time.
        let means: Vec<f64> = paths
            .iter()
            .map(|p| p.iter().sum::<f64>() / p.len() as f64)
            .collect();
        let grand = means.iter().sum::<f64>() / means.len() as f64;
        let var = means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (means.len() - 1) as f64;
        let se = (var / means.len() as f64).sqrt();
        assert!(grand.abs() <= 4.0 * se, "mean {grand} exceeds 4 SE {se}");
    }

    #[test]
    fn near_white_ensemble_matches_closed_form_autocovariance() {
        let paths = sample_ensemble(0.51, 1 << 13, 100, 77);
        assert_relative_eq!(ensemble_autocov(&paths, 1), GAMMA1_H051, epsilon = 0.02);
    }

    #[test]
    fn partial_sums_recover_fbm_self_similarity() {
        // Var[B^H(k·dt)] = (k·dt)^{2H}: check the variance of the length-k
        // partial sum against the self-similar closed form.
        let (hurst, dt, k) = (0.7, 0.1, 64usize);
        let generator = FgnGenerator::new(hurst, dt, k).unwrap();
        let n_paths = 4000;
        let sums: Vec<f64> = (0..n_paths)
            .map(|i| generator.sample_with_rng(&mut stream_rng(5150, i)).iter().sum())
            .collect();
        let mean = sums.iter().sum::<f64>() / n_paths as f64;
        let var = sums.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n_paths - 1) as f64;
        let expected = (k as f64 * dt).powf(2.0 * hurst);
        // SE of a sample variance of Gaussians ≈ Var·√(2/N) ≈ 2.2%.
        let se = expected * (2.0 / n_paths as f64).sqrt();
        assert!(
            (var - expected).abs() <= 4.0 * se,
            "partial-sum variance {var} vs {expected} (4 SE = {})",
            4.0 * se
        );
    }

    #[test]
    fn cholesky_fallback_reproduces_covariance() {
        let generator = FgnGenerator::new_cholesky(0.8, 1.0, 4).unwrap();
        assert_eq!(generator.method_name(), "cholesky");
        let n_draws = 20000;
        let draws: Vec<Vec<f64>> = (0..n_draws)
            .map(|i| generator.sample_with_rng(&mut stream_rng(99, i)))
            .collect();
        for lag in 0..4 {
            let mut acc = 0.0;
            let mut count = 0;
            for d in &draws {
                for m in 0..4 - lag {
                    acc += d[m] * d[m + lag];
                    count += 1;
                }
            }
            let expected = increment_autocovariance(0.8, lag, 1.0).unwrap();
            assert_relative_eq!(acc / count as f64, expected, epsilon = 0.05);
        }
    }

    #[test]
    fn davies_harte_handles_single_step() {
        let generator = FgnGenerator::new(0.8, 0.5, 1).unwrap();
        assert_eq!(generator.method_name(), "davies-harte");
        let n_draws = 30000;
        let mut acc = 0.0;
        for i in 0..n_draws {
            let x = generator.sample_with_rng(&mut stream_rng(7, i));
            assert_eq!(x.len(), 1);
            acc += x[0] * x[0];
        }
        let expected = 0.5f64.powf(1.6);
        assert_relative_eq!(acc / n_draws as f64, expected, max_relative = 0.05);
    }

    #[test]
    fn white_increments_have_brownian_scaling() {
        let mut rng = stream_rng(3, 0);
        let xs = sample_white_increments(0.01, 50000, &mut rng);
        let var = xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64;
        assert_relative_eq!(var, 0.01, max_relative = 0.05);
    }

    #[test]
    fn spec_rejects_out_of_range_inputs() {
        assert!(FgnSpec::new(0.5, 1.0, 10, 0).is_err());
        assert!(FgnSpec::new(1.0, 1.0, 10, 0).is_err());
        assert!(FgnSpec::new(0.8, -1.0, 10, 0).is_err());
        assert!(FgnSpec::new(0.8, 1.0, 0, 0).is_err());
    }
}
