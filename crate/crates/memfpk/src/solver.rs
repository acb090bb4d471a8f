//! Explicit finite-difference solution of the memory-dependent
//! Fokker–Planck–Kolmogorov equation
//!
//! `∂p/∂t = −Σᵢ ∂/∂yᵢ(aᵢ p) + ΣᵢΣⱼ ∂²/∂yᵢ∂yⱼ(b_ij p)`
//!
//! on a rectangular node grid: forward Euler in time, second-order central
//! differences applied to the products `aᵢ·p` and `b_ij·p`, the standard
//! 4-point centered cross stencil for the mixed term, and homogeneous
//! Dirichlet boundaries. The two mixed terms `b₁₂` and `b₂₁` use the same
//! operator, so they enter as the single combined field `b₁₂ + b₂₁` — this
//! is exactly the sum written in the equation, not an extra symmetrization.
//!
//! Diffusion coefficients come from one of three sources: the analytic
//! linear-reference series, the constant white-noise limit, or a DLMM
//! estimate interpolated onto the nodes. Drift is always the model drift
//! evaluated at the nodes. A CFL monitor recomputes the largest stable time
//! step at every coefficient refresh and aborts when the configured step
//! exceeds it. Optional non-negativity clamping and per-step mass
//! renormalization are off by default; their cumulative activity is
//! reported so they can never silently mask a scheme defect.

use crate::dlmm::NodeInterpolator;
use crate::error::{Error, Result};
use crate::geom::GridGeometry;
use crate::linalg::Gaussian2;
use crate::linear::{coeff_series, LinearParams};
use crate::model::{Dynamics, GaussianInit};
use nalgebra::Vector2;
use ndarray::Array2;

/// A joint PDF sampled on the node grid at one instant, together with the
/// diagnostics the conservation checks rely on.
#[derive(Debug, Clone)]
pub struct PdfGrid {
    pub geom: GridGeometry,
    pub time: f64,
    /// Node values, indexed `[i, j]` ↔ `(y1(i), y2(j))`.
    pub values: Array2<f64>,
    /// Riemann-sum mass `ΣΣ p·Δ₁Δ₂`, refreshed by [`PdfGrid::update_mass`].
    pub mass: f64,
    /// Most negative node value (0 for a clean grid), same refresh rule.
    pub min_value: f64,
}

impl PdfGrid {
    pub fn zeros(geom: GridGeometry, time: f64) -> Self {
        Self {
            geom,
            time,
            values: Array2::zeros((geom.n1, geom.n2)),
            mass: 0.0,
            min_value: 0.0,
        }
    }

    /// Recomputes the cached mass and minimum after the values changed.
    pub fn update_mass(&mut self) {
        self.mass = self.values.sum() * self.geom.cell_area();
        self.min_value = self.values.iter().fold(0.0_f64, |a, &v| a.min(v));
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().fold(f64::NEG_INFINITY, |a, &v| a.max(v))
    }
}

/// Solver discretization: node geometry, time step, horizon, report times.
#[derive(Debug, Clone)]
pub struct SolverGrid {
    pub geom: GridGeometry,
    pub dt: f64,
    pub t_end: f64,
    pub report_times: Vec<f64>,
}

impl SolverGrid {
    pub fn new(geom: GridGeometry, dt: f64, t_end: f64, report_times: Vec<f64>) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite() && t_end > 0.0 && t_end.is_finite()) {
            return Err(Error::Config(format!(
                "need positive dt and horizon, got dt = {dt}, T = {t_end}"
            )));
        }
        let g = Self { geom, dt, t_end, report_times };
        g.n_steps()?;
        let mut prev = -1.0;
        for &t in &g.report_times {
            if t < 0.0 || t > g.t_end * (1.0 + 1e-9) {
                return Err(Error::Config(format!(
                    "report time {t} outside [0, {}]",
                    g.t_end
                )));
            }
            if t <= prev {
                return Err(Error::Config("report times must be strictly increasing".into()));
            }
            g.step_of(t)?;
            prev = t;
        }
        Ok(g)
    }

    pub fn n_steps(&self) -> Result<usize> {
        self.step_of(self.t_end)
    }

    /// Step index of a time that must sit on the time grid.
    pub fn step_of(&self, t: f64) -> Result<usize> {
        let raw = t / self.dt;
        let step = raw.round();
        if (raw - step).abs() > 1e-6 * raw.abs().max(1.0) {
            return Err(Error::Config(format!(
                "time {t} does not lie on the solver time grid (dt = {})",
                self.dt
            )));
        }
        Ok(step as usize)
    }
}

/// Node-sampled Gaussian initial condition: boundary zeroed (consistent with
/// the Dirichlet condition), then renormalized to unit grid mass. Errors if
/// the grid captures less than 0.999 of the mass before renormalization.
pub fn initial_pdf(init: &GaussianInit, geom: &GridGeometry) -> Result<PdfGrid> {
    let gauss = Gaussian2::new(init.mean, init.covariance)?;
    let mut grid = PdfGrid::zeros(*geom, 0.0);
    for i in 1..geom.n1 - 1 {
        for j in 1..geom.n2 - 1 {
            grid.values[[i, j]] = gauss.density(&Vector2::new(geom.y1(i), geom.y2(j)));
        }
    }
    grid.update_mass();
    if grid.mass < 0.999 {
        return Err(Error::Domain(format!(
            "solver domain captures only {:.6} of the initial mass; enlarge the grid \
             (it should cover at least six standard deviations around the mean)",
            grid.mass
        )));
    }
    let scale = 1.0 / grid.mass;
    grid.values.mapv_inplace(|v| v * scale);
    grid.update_mass();
    Ok(grid)
}

/// Where the four diffusion-coefficient fields come from.
pub enum CoefficientSource<'a> {
    /// Spatially constant `b₂₁(t), b₂₂(t)` from the linear reference
    /// (`b₁₁ = b₁₂ = 0`).
    AnalyticLinear(&'a LinearParams),
    /// The white-noise limit: constant `b_kk = σ_k²/2`, off-diagonals zero.
    Gwn { sigma: [f64; 2] },
    /// DLMM estimate interpolated onto the solver nodes.
    Dlmm(&'a NodeInterpolator),
}

/// Flags controlling the march; everything defaults to the plain scheme.
#[derive(Debug, Clone, Copy, Default)]
pub struct SolveOptions {
    /// Zero out negative values after each step (cumulative clamped mass is
    /// reported).
    pub clamp_negative: bool,
    /// Rescale to unit mass after each step (cumulative log-factor
    /// reported).
    pub renormalize: bool,
    /// First-order upwind differencing for the advection term instead of
    /// central differences.
    pub upwind: bool,
}

/// Diagnostics captured at one report time.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct ReportEntry {
    pub time: f64,
    pub mass: f64,
    pub min_value: f64,
    /// Largest |mass − 1| seen at any step so far.
    pub max_mass_drift: f64,
    /// Total mass removed by the clamp so far (0 when disabled).
    pub clamped_mass: f64,
    /// Sum of log renormalization factors so far (0 when disabled).
    pub renorm_log: f64,
}

#[derive(Debug)]
pub struct SolveReport {
    /// One PDF per report time, in order.
    pub pdfs: Vec<PdfGrid>,
    pub entries: Vec<ReportEntry>,
    /// Smallest ratio (max stable Δt)/Δt observed; > 1 means the CFL margin
    /// held throughout.
    pub min_cfl_margin: f64,
}

struct CoeffFields {
    b11: Array2<f64>,
    b22: Array2<f64>,
    /// Combined mixed coefficient `b₁₂ + b₂₁`.
    bx: Array2<f64>,
}

impl CoeffFields {
    fn zeros(n1: usize, n2: usize) -> Self {
        Self {
            b11: Array2::zeros((n1, n2)),
            b22: Array2::zeros((n1, n2)),
            bx: Array2::zeros((n1, n2)),
        }
    }
}

/// One forward-Euler step on the interior; boundary values stay zero.
fn step(
    p: &Array2<f64>,
    out: &mut Array2<f64>,
    a1: &Array2<f64>,
    a2: &Array2<f64>,
    c: &CoeffFields,
    geom: &GridGeometry,
    dt: f64,
    upwind: bool,
) {
    let (n1, n2) = p.dim();
    let d1 = geom.d1();
    let d2 = geom.d2();
    let inv_2d1 = 1.0 / (2.0 * d1);
    let inv_2d2 = 1.0 / (2.0 * d2);
    let inv_d1sq = 1.0 / (d1 * d1);
    let inv_d2sq = 1.0 / (d2 * d2);
    let inv_cross = 1.0 / (4.0 * d1 * d2);
    for i in 1..n1 - 1 {
        for j in 1..n2 - 1 {
            let adv = if upwind {
                let a1c = a1[[i, j]];
                let f1 = if a1c >= 0.0 {
                    (a1c * p[[i, j]] - a1[[i - 1, j]] * p[[i - 1, j]]) / d1
                } else {
                    (a1[[i + 1, j]] * p[[i + 1, j]] - a1c * p[[i, j]]) / d1
                };
                let a2c = a2[[i, j]];
                let f2 = if a2c >= 0.0 {
                    (a2c * p[[i, j]] - a2[[i, j - 1]] * p[[i, j - 1]]) / d2
                } else {
                    (a2[[i, j + 1]] * p[[i, j + 1]] - a2c * p[[i, j]]) / d2
                };
                f1 + f2
            } else {
                (a1[[i + 1, j]] * p[[i + 1, j]] - a1[[i - 1, j]] * p[[i - 1, j]]) * inv_2d1
                    + (a2[[i, j + 1]] * p[[i, j + 1]] - a2[[i, j - 1]] * p[[i, j - 1]]) * inv_2d2
            };
            let g11 = (c.b11[[i + 1, j]] * p[[i + 1, j]] - 2.0 * c.b11[[i, j]] * p[[i, j]]
                + c.b11[[i - 1, j]] * p[[i - 1, j]])
                * inv_d1sq;
            let g22 = (c.b22[[i, j + 1]] * p[[i, j + 1]] - 2.0 * c.b22[[i, j]] * p[[i, j]]
                + c.b22[[i, j - 1]] * p[[i, j - 1]])
                * inv_d2sq;
            let gx = (c.bx[[i + 1, j + 1]] * p[[i + 1, j + 1]]
                - c.bx[[i + 1, j - 1]] * p[[i + 1, j - 1]]
                - c.bx[[i - 1, j + 1]] * p[[i - 1, j + 1]]
                + c.bx[[i - 1, j - 1]] * p[[i - 1, j - 1]])
                * inv_cross;
            out[[i, j]] = p[[i, j]] + dt * (-adv + g11 + g22 + gx);
        }
    }
}

/// Largest stable time step for the current coefficient fields:
/// `Δt ≤ 1 / max(2|b₁₁|/Δ₁² + 2|b₂₂|/Δ₂² + |b₁₂+b₂₁|/(Δ₁Δ₂) + |a₁|/Δ₁ + |a₂|/Δ₂)`.
fn max_stable_dt(a1: &Array2<f64>, a2: &Array2<f64>, c: &CoeffFields, geom: &GridGeometry) -> f64 {
    let d1 = geom.d1();
    let d2 = geom.d2();
    let mut worst = 0.0_f64;
    for ((((&a1v, &a2v), &b11), &b22), &bx) in a1
        .iter()
        .zip(a2.iter())
        .zip(c.b11.iter())
        .zip(c.b22.iter())
        .zip(c.bx.iter())
    {
        let rate = 2.0 * b11.abs() / (d1 * d1)
            + 2.0 * b22.abs() / (d2 * d2)
            + bx.abs() / (d1 * d2)
            + a1v.abs() / d1
            + a2v.abs() / d2;
        worst = worst.max(rate);
    }
    if worst == 0.0 {
        f64::INFINITY
    } else {
        1.0 / worst
    }
}

/// Time-marches the initial condition to `T`, returning the PDF at every
/// report time together with conservation diagnostics.
pub fn solve(
    dynamics: &Dynamics,
    source: &CoefficientSource,
    grid: &SolverGrid,
    init: &GaussianInit,
    opts: &SolveOptions,
) -> Result<SolveReport> {
    let geom = grid.geom;
    let n_steps = grid.n_steps()?;
    let report_steps: Vec<usize> =
        grid.report_times.iter().map(|&t| grid.step_of(t)).collect::<Result<_>>()?;

    // Width-2 interiors cannot hold a meaningful density.
    if geom.n1 < 5 || geom.n2 < 5 {
        return Err(Error::Config(format!(
            "solver grid too coarse ({} x {} nodes)",
            geom.n1, geom.n2
        )));
    }

    let mut pdf = initial_pdf(init, &geom)?;

    // Drift is autonomous: evaluate once.
    let mut a1 = Array2::zeros((geom.n1, geom.n2));
    let mut a2 = Array2::zeros((geom.n1, geom.n2));
    for i in 0..geom.n1 {
        for j in 0..geom.n2 {
            let f = dynamics.drift(&Vector2::new(geom.y1(i), geom.y2(j)));
            a1[[i, j]] = f.x;
            a2[[i, j]] = f.y;
        }
    }

    // Per-source preparation.
    let series = match source {
        CoefficientSource::AnalyticLinear(params) => {
            Some(coeff_series(params, grid.dt, n_steps)?)
        }
        _ => None,
    };
    let mut dlmm_stack = match source {
        CoefficientSource::Dlmm(interp) => Some(
            // Shape check happens on first fill below.
            {
                let z = || Array2::<f64>::zeros((geom.n1, geom.n2));
                let _ = interp;
                [[z(), z()], [z(), z()]]
            },
        ),
        _ => None,
    };

    let mut coeffs = CoeffFields::zeros(geom.n1, geom.n2);
    if let CoefficientSource::Gwn { sigma } = source {
        coeffs.b11.fill(0.5 * sigma[0] * sigma[0]);
        coeffs.b22.fill(0.5 * sigma[1] * sigma[1]);
        // Off-diagonal coefficients vanish in the white-noise limit.
    }

    let mut refresh = |coeffs: &mut CoeffFields, step_idx: usize| -> Result<()> {
        match source {
            CoefficientSource::AnalyticLinear(_) => {
                let s = series.as_ref().expect("series prepared");
                coeffs.bx.fill(s.b21[step_idx]);
                coeffs.b22.fill(s.b22[step_idx]);
            }
            CoefficientSource::Gwn { .. } => {}
            CoefficientSource::Dlmm(interp) => {
                let stack = dlmm_stack.as_mut().expect("stack prepared");
                interp.fill_at(step_idx as f64 * grid.dt, stack)?;
                for i in 0..geom.n1 {
                    for j in 0..geom.n2 {
                        coeffs.b11[[i, j]] = stack[0][0][[i, j]];
                        coeffs.b22[[i, j]] = stack[1][1][[i, j]];
                        coeffs.bx[[i, j]] = stack[0][1][[i, j]] + stack[1][0][[i, j]];
                    }
                }
            }
        }
        Ok(())
    };

    let mut pdfs = Vec::with_capacity(report_steps.len());
    let mut entries = Vec::with_capacity(report_steps.len());
    let mut max_mass_drift = 0.0_f64;
    let mut clamped_mass = 0.0_f64;
    let mut renorm_log = 0.0_f64;
    let mut min_cfl_margin = f64::INFINITY;

    let record = |pdf: &mut PdfGrid,
                      time: f64,
                      pdfs: &mut Vec<PdfGrid>,
                      entries: &mut Vec<ReportEntry>,
                      max_mass_drift: f64,
                      clamped_mass: f64,
                      renorm_log: f64| {
        pdf.time = time;
        pdf.update_mass();
        pdfs.push(pdf.clone());
        entries.push(ReportEntry {
            time,
            mass: pdf.mass,
            min_value: pdf.min_value,
            max_mass_drift,
            clamped_mass,
            renorm_log,
        });
    };

    let mut report_iter = report_steps.iter().peekable();
    if report_iter.peek() == Some(&&0) {
        record(&mut pdf, 0.0, &mut pdfs, &mut entries, 0.0, 0.0, 0.0);
        report_iter.next();
    }

    let cell_area = geom.cell_area();
    let mut next = pdf.values.clone();
    for m in 0..n_steps {
        refresh(&mut coeffs, m)?;
        let bound = max_stable_dt(&a1, &a2, &coeffs, &geom);
        min_cfl_margin = min_cfl_margin.min(bound / grid.dt);
        if grid.dt > bound {
            return Err(Error::Numerical(format!(
                "CFL monitor failure at t = {:.6}: configured dt = {:.3e} exceeds the \
                 largest stable step {:.3e}",
                m as f64 * grid.dt,
                grid.dt,
                bound
            )));
        }

        step(&pdf.values, &mut next, &a1, &a2, &coeffs, &geom, grid.dt, opts.upwind);
        std::mem::swap(&mut pdf.values, &mut next);

        if opts.clamp_negative {
            let mut removed = 0.0;
            pdf.values.mapv_inplace(|v| {
                if v < 0.0 {
                    removed -= v;
                    0.0
                } else {
                    v
                }
            });
            clamped_mass += removed * cell_area;
        }

        let mut mass = pdf.values.sum() * cell_area;
        if !mass.is_finite() {
            return Err(Error::Numerical(format!(
                "solution lost finiteness at t = {:.6}",
                (m + 1) as f64 * grid.dt
            )));
        }
        if opts.renormalize && mass > 0.0 {
            let scale = 1.0 / mass;
            pdf.values.mapv_inplace(|v| v * scale);
            renorm_log += scale.ln();
            mass = 1.0;
        }
        max_mass_drift = max_mass_drift.max((mass - 1.0).abs());

        if report_iter.peek() == Some(&&(m + 1)) {
            record(
                &mut pdf,
                (m + 1) as f64 * grid.dt,
                &mut pdfs,
                &mut entries,
                max_mass_drift,
                clamped_mass,
                renorm_log,
            );
            report_iter.next();
        }
    }

    Ok(SolveReport { pdfs, entries, min_cfl_margin })
}
