//! Post-processing: marginal PDFs, moment series, Monte-Carlo reference
//! histograms, and error metrics between gridded densities.
//!
//! All quadrature here is the same simple Riemann sum the solver's
//! node-value representation implies: a node value stands for the density on
//! the cell centered at the node. That keeps marginals, masses, and moments
//! mutually consistent — a marginal of a histogram equals the 1D histogram
//! of the raw samples by construction.

use crate::error::{Error, Result};
use crate::geom::GridGeometry;
use crate::simulate::Ensemble;
use crate::solver::PdfGrid;
use nalgebra::Vector2;
use ndarray::Array2;
use serde::Serialize;

/// A one-dimensional marginal density sampled at node centers.
#[derive(Debug, Clone, Serialize)]
pub struct MarginalPdf {
    /// 1 for the first state component, 2 for the second.
    pub axis: u8,
    pub centers: Vec<f64>,
    pub densities: Vec<f64>,
    pub time: f64,
    /// Node spacing along the axis.
    pub spacing: f64,
}

impl MarginalPdf {
    /// Riemann mass `Σ ρ·Δ`.
    pub fn mass(&self) -> f64 {
        self.densities.iter().sum::<f64>() * self.spacing
    }
}

/// First four standardized moments of one variable.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Moment4 {
    pub mean: f64,
    pub std: f64,
    pub skewness: f64,
    /// Raw fourth standardized moment: a Gaussian gives 3.
    pub kurtosis: f64,
}

/// Moment histories for both state variables.
#[derive(Debug, Clone, Serialize)]
pub struct MomentSeries {
    pub times: Vec<f64>,
    /// One `[moments of Y1, moments of Y2]` pair per time.
    pub moments: Vec<[Moment4; 2]>,
}

/// Integrates the joint density along the orthogonal axis (simple Riemann
/// sum), returning the two marginals. Each marginal's mass equals the joint
/// grid mass.
pub fn marginals(p: &PdfGrid) -> (MarginalPdf, MarginalPdf) {
    let geom = &p.geom;
    let mut d1 = vec![0.0; geom.n1];
    let mut d2 = vec![0.0; geom.n2];
    for i in 0..geom.n1 {
        for j in 0..geom.n2 {
            let v = p.values[[i, j]];
            d1[i] += v * geom.d2();
            d2[j] += v * geom.d1();
        }
    }
    let m1 = MarginalPdf {
        axis: 1,
        centers: (0..geom.n1).map(|i| geom.y1(i)).collect(),
        densities: d1,
        time: p.time,
        spacing: geom.d1(),
    };
    let m2 = MarginalPdf {
        axis: 2,
        centers: (0..geom.n2).map(|j| geom.y2(j)).collect(),
        densities: d2,
        time: p.time,
        spacing: geom.d2(),
    };
    (m1, m2)
}

/// Moments of a tabulated 1D density (normalized internally). Errors on
/// non-positive mass or vanishing variance.
pub fn moments_1d(centers: &[f64], densities: &[f64], spacing: f64) -> Result<Moment4> {
    let mass: f64 = densities.iter().sum::<f64>() * spacing;
    if !(mass > 0.0) {
        return Err(Error::Domain(format!(
            "cannot compute moments of a density with mass {mass:.3e}"
        )));
    }
    let mut mean = 0.0;
    for (y, rho) in centers.iter().zip(densities) {
        mean += y * rho;
    }
    mean *= spacing / mass;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for (y, rho) in centers.iter().zip(densities) {
        let d = y - mean;
        let w = rho * spacing / mass;
        m2 += d * d * w;
        m3 += d * d * d * w;
        m4 += d * d * d * d * w;
    }
    if !(m2 > 0.0) {
        return Err(Error::Numerical("zero variance: standardized moments undefined".into()));
    }
    let std = m2.sqrt();
    Ok(Moment4 { mean, std, skewness: m3 / (std * m2), kurtosis: m4 / (m2 * m2) })
}

/// Per-variable moments of a joint grid density, via its marginals (exact
/// for Riemann sums: marginalization and moment quadrature commute).
pub fn grid_moments(p: &PdfGrid) -> Result<[Moment4; 2]> {
    let (m1, m2) = marginals(p);
    Ok([
        moments_1d(&m1.centers, &m1.densities, m1.spacing)?,
        moments_1d(&m2.centers, &m2.densities, m2.spacing)?,
    ])
}

/// Plain sample moments (biased normalization, matching the density-side
/// definitions: skewness m₃/m₂^{3/2}, kurtosis m₄/m₂²).
pub fn sample_moments(samples: &[f64]) -> Result<Moment4> {
    if samples.is_empty() {
        return Err(Error::Domain("cannot compute moments of an empty sample".into()));
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &x in samples {
        let d = x - mean;
        m2 += d * d;
        m3 += d * d * d;
        m4 += d * d * d * d;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    if !(m2 > 0.0) {
        return Err(Error::Numerical("zero variance: standardized moments undefined".into()));
    }
    let std = m2.sqrt();
    Ok(Moment4 { mean, std, skewness: m3 / (std * m2), kurtosis: m4 / (m2 * m2) })
}

/// Sample-moment histories of the surviving ensemble paths at every
/// recorded time.
pub fn ensemble_moment_series(ensemble: &Ensemble) -> Result<MomentSeries> {
    let times = ensemble.record_times();
    let mut moments = Vec::with_capacity(times.len());
    for (idx, &t) in times.iter().enumerate() {
        let states = ensemble_states(ensemble, t)?;
        let xs: Vec<f64> = states.iter().map(|s| s.x).collect();
        let vs: Vec<f64> = states.iter().map(|s| s.y).collect();
        let _ = idx;
        moments.push([sample_moments(&xs)?, sample_moments(&vs)?]);
    }
    Ok(MomentSeries { times, moments })
}

/// States of all surviving paths at a recorded time.
pub fn ensemble_states(ensemble: &Ensemble, t: f64) -> Result<Vec<Vector2<f64>>> {
    let idx = ensemble.record_index_for_time(t)?;
    Ok(ensemble.surviving().map(|p| p.snapshots[idx].state).collect())
}

/// Bins sample states onto node-centered cells: node `(i, j)` collects the
/// cell `[yᵢ − Δ₁/2, yᵢ + Δ₁/2) × [yⱼ − Δ₂/2, yⱼ + Δ₂/2)`, and counts are
/// normalized by `N·Δ₁Δ₂` so the grid mass equals the in-domain fraction.
pub fn histogram2d(states: &[Vector2<f64>], geom: &GridGeometry, time: f64) -> Result<PdfGrid> {
    if states.is_empty() {
        return Err(Error::Domain("histogram needs at least one sample".into()));
    }
    let mut counts: Array2<f64> = Array2::zeros((geom.n1, geom.n2));
    for s in states {
        let u = (s.x - geom.rect.lo1) / geom.d1();
        let v = (s.y - geom.rect.lo2) / geom.d2();
        let i = u.round();
        let j = v.round();
        if i >= 0.0 && i < geom.n1 as f64 && j >= 0.0 && j < geom.n2 as f64 {
            counts[[i as usize, j as usize]] += 1.0;
        }
    }
    let norm = 1.0 / (states.len() as f64 * geom.cell_area());
    let mut grid = PdfGrid::zeros(*geom, time);
    grid.values = counts * norm;
    grid.update_mass();
    Ok(grid)
}

/// Histogram of the surviving ensemble at a recorded time.
pub fn ensemble_histogram(ensemble: &Ensemble, t: f64, geom: &GridGeometry) -> Result<PdfGrid> {
    let states = ensemble_states(ensemble, t)?;
    histogram2d(&states, geom, t)
}

/// Error metrics between two densities on the same grid.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CompareMetrics {
    /// `‖p_A − p_B‖∞` over nodes.
    pub max_abs: f64,
    /// `Σ |p_A − p_B| · Δ₁Δ₂`.
    pub l1: f64,
    /// Largest `|log₁₀ p_A − log₁₀ p_B|` over nodes where both densities
    /// exceed the threshold; NaN when no node qualifies.
    pub log_tail_max_abs: f64,
    /// Threshold used for the log-tail metric.
    pub log_threshold: f64,
}

pub const DEFAULT_LOG_THRESHOLD: f64 = 1e-8;

pub fn compare(pa: &PdfGrid, pb: &PdfGrid, log_threshold: f64) -> Result<CompareMetrics> {
    let ga = &pa.geom;
    let gb = &pb.geom;
    if ga.n1 != gb.n1
        || ga.n2 != gb.n2
        || (ga.rect.lo1 - gb.rect.lo1).abs() > 1e-12
        || (ga.rect.hi1 - gb.rect.hi1).abs() > 1e-12
        || (ga.rect.lo2 - gb.rect.lo2).abs() > 1e-12
        || (ga.rect.hi2 - gb.rect.hi2).abs() > 1e-12
    {
        return Err(Error::Domain("cannot compare densities on different grids".into()));
    }
    let mut max_abs = 0.0_f64;
    let mut l1 = 0.0;
    let mut log_tail = f64::NAN;
    for (&a, &b) in pa.values.iter().zip(pb.values.iter()) {
        let d = (a - b).abs();
        max_abs = max_abs.max(d);
        l1 += d;
        if a > log_threshold && b > log_threshold {
            let ld = (a.log10() - b.log10()).abs();
            log_tail = if log_tail.is_nan() { ld } else { log_tail.max(ld) };
        }
    }
    l1 *= ga.cell_area();
    Ok(CompareMetrics { max_abs, l1, log_tail_max_abs: log_tail, log_threshold })
}

/// L1 distance between two marginals on the same axis grid.
pub fn marginal_l1(ma: &MarginalPdf, mb: &MarginalPdf) -> Result<f64> {
    if ma.centers.len() != mb.centers.len() || (ma.spacing - mb.spacing).abs() > 1e-12 {
        return Err(Error::Domain("cannot compare marginals on different grids".into()));
    }
    Ok(ma
        .densities
        .iter()
        .zip(&mb.densities)
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        * ma.spacing)
}

/// Indices of strict interior local maxima with height at least
/// `min_frac · max`.
pub fn local_maxima_1d(densities: &[f64], min_frac: f64) -> Vec<usize> {
    let peak = densities.iter().fold(f64::NEG_INFINITY, |a, &v| a.max(v));
    let floor = min_frac * peak;
    let mut out = Vec::new();
    for i in 1..densities.len().saturating_sub(1) {
        if densities[i] > densities[i - 1] && densities[i] > densities[i + 1] && densities[i] >= floor
        {
            out.push(i);
        }
    }
    out
}

/// True when the density has at least two separated local maxima (each at
/// least `min_frac` of the peak) — the operational bimodality check.
pub fn is_bimodal(densities: &[f64], min_frac: f64) -> bool {
    local_maxima_1d(densities, min_frac).len() >= 2
}

/// Interior nodes that strictly dominate all 8 neighbors and reach at least
/// `min_frac · max` — used for joint-PDF mode counting.
pub fn local_maxima_2d(p: &PdfGrid, min_frac: f64) -> Vec<(usize, usize)> {
    let (n1, n2) = p.values.dim();
    let peak = p.max_value();
    let floor = min_frac * peak;
    let mut out = Vec::new();
    for i in 1..n1 - 1 {
        for j in 1..n2 - 1 {
            let v = p.values[[i, j]];
            if v < floor {
                continue;
            }
            let mut dominant = true;
            'nb: for di in -1i64..=1 {
                for dj in -1i64..=1 {
                    if di == 0 && dj == 0 {
                        continue;
                    }
                    let w = p.values[[(i as i64 + di) as usize, (j as i64 + dj) as usize]];
                    if w >= v {
                        dominant = false;
                        break 'nb;
                    }
                }
            }
            if dominant {
                out.push((i, j));
            }
        }
    }
    out
}
