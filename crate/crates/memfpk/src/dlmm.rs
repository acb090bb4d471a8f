//! Data-driven local mean estimation of the memory diffusion coefficients
//! `b_kl(y, t) = σ_k·E[ d_{k,l} | Y(t) = y ]` from a simulated ensemble:
//! state-space binning, per-bin empirical means with a global-mean fallback
//! for empty bins, uniform-kernel smoothing, and interpolation of the binned
//! field onto a solver node grid (bilinear or Catmull–Rom in space, linear in
//! time).

use crate::error::{Error, Result};
use crate::geom::{GridGeometry, Rect};
use crate::simulate::Ensemble;
use ndarray::Array2;
use rayon::prelude::*;

/// Uniform cell grid over the estimation domain: `n1 × n2` half-open bins
/// `[edge, edge + w)` (the final bin on each axis is closed so the domain is
/// fully partitioned).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinGrid {
    pub rect: Rect,
    pub n1: usize,
    pub n2: usize,
}

impl BinGrid {
    pub fn new(rect: Rect, n1: usize, n2: usize) -> Result<Self> {
        if n1 == 0 || n2 == 0 {
            return Err(Error::Config(format!(
                "bin counts must be at least 1, got {n1} x {n2}"
            )));
        }
        Ok(Self { rect, n1, n2 })
    }

    pub fn width1(&self) -> f64 {
        self.rect.width1() / self.n1 as f64
    }

    pub fn width2(&self) -> f64 {
        self.rect.width2() / self.n2 as f64
    }

    pub fn center1(&self, i: usize) -> f64 {
        self.rect.lo1 + (i as f64 + 0.5) * self.width1()
    }

    pub fn center2(&self, j: usize) -> f64 {
        self.rect.lo2 + (j as f64 + 0.5) * self.width2()
    }

    /// Bin of a sample, `None` when it lies outside the domain. Ties on
    /// interior edges go to the bin whose lower edge they sit on; the upper
    /// domain boundary belongs to the last bin.
    pub fn assign(&self, y1: f64, y2: f64) -> Option<(usize, usize)> {
        if !self.rect.contains(y1, y2) {
            return None;
        }
        let i = (((y1 - self.rect.lo1) / self.width1()).floor() as usize).min(self.n1 - 1);
        let j = (((y2 - self.rect.lo2) / self.width2()).floor() as usize).min(self.n2 - 1);
        Some((i, j))
    }
}

/// Spatial interpolation rule used when mapping bin-center fields to nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Interpolation {
    #[default]
    Bilinear,
    /// Catmull–Rom cubic (tensor product); still constant beyond the hull.
    CatmullRom,
}

#[derive(Debug, Clone, Copy)]
pub struct DlmmOptions {
    pub smoothing_radius: usize,
    /// Augment every sample `(Y, d)` with `(−Y, d)`, for systems whose law
    /// and coefficient field are symmetric under `Y → −Y`.
    pub symmetrize: bool,
    pub interpolation: Interpolation,
}

impl Default for DlmmOptions {
    fn default() -> Self {
        Self { smoothing_radius: 1, symmetrize: false, interpolation: Interpolation::default() }
    }
}

/// Per-channel-pair array stack over bins: `fields[k][l]` holds `b_kl`.
pub type FieldStack = [[Array2<f64>; 2]; 2];

pub fn zero_stack(n1: usize, n2: usize) -> FieldStack {
    [
        [Array2::zeros((n1, n2)), Array2::zeros((n1, n2))],
        [Array2::zeros((n1, n2)), Array2::zeros((n1, n2))],
    ]
}

/// Estimated coefficient arrays at one snapshot time.
#[derive(Debug, Clone)]
pub struct CoeffSnapshot {
    pub time: f64,
    pub raw: FieldStack,
    pub smoothed: FieldStack,
    /// Samples per bin (shared by all channel pairs).
    pub counts: Array2<u32>,
    pub n_out_of_domain: usize,
    /// Samples entering the estimate (surviving paths, after any
    /// symmetrization).
    pub n_samples: usize,
}

/// The complete estimate: one snapshot per recorded ensemble time.
#[derive(Debug, Clone)]
pub struct CoefficientField {
    pub grid: BinGrid,
    pub channels: Vec<usize>,
    pub smoothing_radius: usize,
    pub interpolation: Interpolation,
    pub snapshots: Vec<CoeffSnapshot>,
}

impl CoefficientField {
    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.time).collect()
    }
}

/// Uniform `(2r+1)²` moving average with nearest-edge replication, so the
/// weights always sum to one and the output stays inside `[min, max]` of the
/// input. `r = 0` is the identity.
pub fn smooth(a: &Array2<f64>, r: usize) -> Array2<f64> {
    if r == 0 {
        return a.clone();
    }
    let (n1, n2) = a.dim();
    let ri = r as isize;
    let weight = 1.0 / ((2 * r + 1) * (2 * r + 1)) as f64;
    let mut out = Array2::zeros((n1, n2));
    for i in 0..n1 {
        for j in 0..n2 {
            let mut acc = 0.0;
            for di in -ri..=ri {
                let ii = (i as isize + di).clamp(0, n1 as isize - 1) as usize;
                for dj in -ri..=ri {
                    let jj = (j as isize + dj).clamp(0, n2 as isize - 1) as usize;
                    acc += a[[ii, jj]];
                }
            }
            out[[i, j]] = acc * weight;
        }
    }
    out
}

fn estimate_snapshot(
    ensemble: &Ensemble,
    grid: BinGrid,
    opts: &DlmmOptions,
    record_index: usize,
) -> CoeffSnapshot {
    let (n1, n2) = (grid.n1, grid.n2);
    let active: Vec<usize> = (0..2).filter(|&k| ensemble.sigma[k] > 0.0).collect();

    let mut sums = zero_stack(n1, n2);
    let mut counts: Array2<u32> = Array2::zeros((n1, n2));
    let mut global = [[0.0f64; 2]; 2];
    let mut n_out = 0usize;
    let mut n_samples = 0usize;

    let add_sample = |y1: f64, y2: f64, d: &[nalgebra::Vector2<f64>; 2],
                          sums: &mut FieldStack,
                          counts: &mut Array2<u32>,
                          global: &mut [[f64; 2]; 2],
                          n_out: &mut usize,
                          n_samples: &mut usize| {
        *n_samples += 1;
        for &k in &active {
            global[k][0] += d[k].x;
            global[k][1] += d[k].y;
        }
        match grid.assign(y1, y2) {
            Some((i, j)) => {
                counts[[i, j]] += 1;
                for &k in &active {
                    sums[k][0][[i, j]] += d[k].x;
                    sums[k][1][[i, j]] += d[k].y;
                }
            }
            None => *n_out += 1,
        }
    };

    for path in ensemble.surviving() {
        let snap = &path.snapshots[record_index];
        add_sample(
            snap.state.x,
            snap.state.y,
            &snap.malliavin,
            &mut sums,
            &mut counts,
            &mut global,
            &mut n_out,
            &mut n_samples,
        );
        if opts.symmetrize {
            add_sample(
                -snap.state.x,
                -snap.state.y,
                &snap.malliavin,
                &mut sums,
                &mut counts,
                &mut global,
                &mut n_out,
                &mut n_samples,
            );
        }
    }

    let mut raw = zero_stack(n1, n2);
    for &k in &active {
        let sigma = ensemble.sigma[k];
        for l in 0..2 {
            let fallback = sigma * global[k][l] / n_samples as f64;
            for i in 0..n1 {
                for j in 0..n2 {
                    let c = counts[[i, j]];
                    raw[k][l][[i, j]] = if c > 0 {
                        sigma * sums[k][l][[i, j]] / c as f64
                    } else {
                        fallback
                    };
                }
            }
        }
    }

    let smoothed = [
        [smooth(&raw[0][0], opts.smoothing_radius), smooth(&raw[0][1], opts.smoothing_radius)],
        [smooth(&raw[1][0], opts.smoothing_radius), smooth(&raw[1][1], opts.smoothing_radius)],
    ];

    CoeffSnapshot {
        time: ensemble.record_time(record_index),
        raw,
        smoothed,
        counts,
        n_out_of_domain: n_out,
        n_samples,
    }
}

/// Runs the estimator over every recorded snapshot of the ensemble
/// (parallel over snapshots; deterministic regardless of thread count).
pub fn estimate(ensemble: &Ensemble, grid: BinGrid, opts: &DlmmOptions) -> Result<CoefficientField> {
    if ensemble.surviving().next().is_none() {
        return Err(Error::Domain("the ensemble has no surviving samples to estimate from".into()));
    }
    let snapshots: Vec<CoeffSnapshot> = (0..ensemble.n_records())
        .into_par_iter()
        .map(|r| estimate_snapshot(ensemble, grid, opts, r))
        .collect();
    Ok(CoefficientField {
        grid,
        channels: (0..2).filter(|&k| ensemble.sigma[k] > 0.0).collect(),
        smoothing_radius: opts.smoothing_radius,
        interpolation: opts.interpolation,
        snapshots,
    })
}

/// Per-axis interpolation stencil: node indices and weights.
struct AxisStencil {
    idx: [usize; 4],
    w: [f64; 4],
}

fn axis_stencil(center0: f64, width: f64, n: usize, y: f64, interp: Interpolation) -> AxisStencil {
    let u = (y - center0) / width;
    // Constant extrapolation outside the bin-center hull.
    if u <= 0.0 || n == 1 {
        return AxisStencil { idx: [0; 4], w: [1.0, 0.0, 0.0, 0.0] };
    }
    if u >= (n - 1) as f64 {
        return AxisStencil { idx: [n - 1; 4], w: [1.0, 0.0, 0.0, 0.0] };
    }
    let i0 = u.floor() as usize;
    let t = u - i0 as f64;
    match interp {
        Interpolation::Bilinear => AxisStencil {
            idx: [i0, i0 + 1, i0, i0],
            w: [1.0 - t, t, 0.0, 0.0],
        },
        Interpolation::CatmullRom => {
            let t2 = t * t;
            let t3 = t2 * t;
            let wm = 0.5 * (-t3 + 2.0 * t2 - t);
            let w0 = 0.5 * (3.0 * t3 - 5.0 * t2 + 2.0);
            let w1 = 0.5 * (-3.0 * t3 + 4.0 * t2 + t);
            let wp = 0.5 * (t3 - t2);
            let mut idx = [i0, i0, i0 + 1, i0];
            let mut w = [0.0, w0, w1, 0.0];
            if i0 >= 1 {
                idx[0] = i0 - 1;
                w[0] = wm;
            } else {
                // Ghost value f(−1) := 2f(0) − f(1) keeps linear fields exact.
                w[1] += 2.0 * wm;
                w[2] -= wm;
            }
            if i0 + 2 <= n - 1 {
                idx[3] = i0 + 2;
                w[3] = wp;
            } else {
                // Ghost value f(n) := 2f(n−1) − f(n−2), same rationale.
                w[2] += 2.0 * wp;
                w[1] -= wp;
            }
            AxisStencil { idx, w }
        }
    }
}

/// Evaluates the smoothed coefficient fields of every snapshot at the nodes
/// of a solver grid once, then serves time-interpolated node arrays.
#[derive(Debug, Clone)]
pub struct NodeInterpolator {
    times: Vec<f64>,
    node_fields: Vec<FieldStack>,
    n1: usize,
    n2: usize,
}

impl NodeInterpolator {
    pub fn new(field: &CoefficientField, geom: &GridGeometry) -> Result<Self> {
        if field.snapshots.is_empty() {
            return Err(Error::Domain("coefficient field has no snapshots".into()));
        }
        let grid = field.grid;
        let (n1, n2) = (geom.n1, geom.n2);
        let stencils1: Vec<AxisStencil> = (0..n1)
            .map(|i| {
                axis_stencil(grid.center1(0), grid.width1(), grid.n1, geom.y1(i), field.interpolation)
            })
            .collect();
        let stencils2: Vec<AxisStencil> = (0..n2)
            .map(|j| {
                axis_stencil(grid.center2(0), grid.width2(), grid.n2, geom.y2(j), field.interpolation)
            })
            .collect();

        let node_fields: Vec<FieldStack> = field
            .snapshots
            .par_iter()
            .map(|snap| {
                let mut stack = zero_stack(n1, n2);
                for k in 0..2 {
                    for l in 0..2 {
                        let src = &snap.smoothed[k][l];
                        let dst = &mut stack[k][l];
                        for (i, s1) in stencils1.iter().enumerate() {
                            for (j, s2) in stencils2.iter().enumerate() {
                                let mut acc = 0.0;
                                for a in 0..4 {
                                    if s1.w[a] == 0.0 {
                                        continue;
                                    }
                                    let mut row = 0.0;
                                    for b in 0..4 {
                                        if s2.w[b] == 0.0 {
                                            continue;
                                        }
                                        row += s2.w[b] * src[[s1.idx[a], s2.idx[b]]];
                                    }
                                    acc += s1.w[a] * row;
                                }
                                dst[[i, j]] = acc;
                            }
                        }
                    }
                }
                stack
            })
            .collect();

        Ok(Self { times: field.times(), node_fields, n1, n2 })
    }

    pub fn time_range(&self) -> (f64, f64) {
        (self.times[0], *self.times.last().expect("nonempty"))
    }

    /// Node coefficient arrays at time `t` (linear interpolation between the
    /// bracketing snapshots). `t` must lie in the snapshot range, up to a
    /// small rounding slack.
    pub fn fill_at(&self, t: f64, out: &mut FieldStack) -> Result<()> {
        let (t0, t1) = self.time_range();
        let slack = 1e-9 * t1.abs().max(1.0);
        if t < t0 - slack || t > t1 + slack {
            return Err(Error::Domain(format!(
                "time {t} outside the estimated snapshot range [{t0}, {t1}]"
            )));
        }
        let t = t.clamp(t0, t1);
        // self.times is sorted; find the bracketing pair.
        let hi = match self.times.iter().position(|&s| s >= t) {
            Some(0) => {
                for k in 0..2 {
                    for l in 0..2 {
                        out[k][l].assign(&self.node_fields[0][k][l]);
                    }
                }
                return Ok(());
            }
            Some(p) => p,
            None => self.times.len() - 1,
        };
        let lo = hi - 1;
        let w = (t - self.times[lo]) / (self.times[hi] - self.times[lo]);
        for k in 0..2 {
            for l in 0..2 {
                let a = &self.node_fields[lo][k][l];
                let b = &self.node_fields[hi][k][l];
                let dst = &mut out[k][l];
                for i in 0..self.n1 {
                    for j in 0..self.n2 {
                        dst[[i, j]] = (1.0 - w) * a[[i, j]] + w * b[[i, j]];
                    }
                }
            }
        }
        Ok(())
    }

    pub fn at(&self, t: f64) -> Result<FieldStack> {
        let mut out = zero_stack(self.n1, self.n2);
        self.fill_at(t, &mut out)?;
        Ok(out)
    }
}
