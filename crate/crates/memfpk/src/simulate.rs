//! Ensemble simulation of `Ẏ = f(Y) + Σ̂ ξ^H(t)` under fractional Gaussian
//! noise, with pathwise tracking of the memory diffusion integrals.
//!
//! Each path advances with a Heun predictor–corrector step (second-order weak
//! accuracy for this additive-noise setting). Along every path the linearized
//! flow is propagated through per-step 2×2 exponentials of the midpoint
//! Jacobian, and the channel-`i` memory integral
//!
//! `M_i(t) = H_i(2H_i−1)·σ_i · ∫₀ᵗ Φ(t, s) e_i (t−s)^{2H_i−2} ds`
//!
//! is evaluated by product integration: the weakly singular kernel is
//! integrated exactly over every step (weights depend only on the lag, so a
//! single table serves all record times) while the flow factor is taken at
//! the step midpoint, `Φ(t_h, t_{m+1/2}) = Φ(t_h, t_{m+1})·Q_m` with
//! `Q_m = exp(J_mid·Δt/2)` and step propagator `P_m = Q_m²`.
//!
//! Path RNG streams are derived from the master seed by path index, so
//! results are byte-identical across thread counts.

use crate::error::{Error, Result};
use crate::fgn::{sample_white_increments, FgnGenerator};
use crate::linalg::expm2;
use crate::model::SystemModel;
use crate::rng::stream_rng;
use nalgebra::{Matrix2, Vector2};
use rayon::prelude::*;
use std::sync::Arc;

/// Uniform time grid `t_m = m·dt`, `m = 0..=n_steps`.
#[derive(Debug, Clone, Copy)]
pub struct SimGrid {
    pub dt: f64,
    pub n_steps: usize,
}

impl SimGrid {
    pub fn new(dt: f64, n_steps: usize) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Config(format!("time step must be positive, got {dt}")));
        }
        if n_steps == 0 {
            return Err(Error::Config("the grid needs at least one step".into()));
        }
        Ok(Self { dt, n_steps })
    }

    pub fn time(&self, step: usize) -> f64 {
        step as f64 * self.dt
    }

    pub fn t_end(&self) -> f64 {
        self.time(self.n_steps)
    }

    /// Step index of a requested time, which must sit on the grid (to within
    /// a relative rounding slack).
    pub fn step_for_time(&self, t: f64) -> Result<usize> {
        let raw = t / self.dt;
        let step = raw.round();
        if (raw - step).abs() > 1e-6 * raw.abs().max(1.0) || step < 0.0 {
            return Err(Error::Config(format!(
                "time {t} does not lie on the simulation grid (dt = {})",
                self.dt
            )));
        }
        let step = step as usize;
        if step > self.n_steps {
            return Err(Error::Config(format!(
                "time {t} lies beyond the simulated horizon {}",
                self.t_end()
            )));
        }
        Ok(step)
    }
}

/// Which point of each step carries the flow factor in the memory quadrature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MalliavinVariant {
    /// Midpoint factor `Φ(t_h, t_{m+1/2})` (default; second-order).
    #[default]
    Midpoint,
    /// Left-endpoint factor `Φ(t_h, t_m)` (first-order diagnostic variant).
    LeftEndpoint,
}

/// Driving-noise regime for a simulation run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NoiseKind {
    /// Fractional Gaussian noise with the model's per-channel Hurst indices.
    #[default]
    Fractional,
    /// Independent Brownian increments (the `H → 1/2` limit); the memory
    /// integral then degenerates to the constant `σ_i/2·e_i`.
    White,
}

#[derive(Debug, Clone, Copy)]
pub struct SimOptions {
    pub n_paths: usize,
    pub seed: u64,
    /// Snapshots are kept every `record_stride` steps (plus the final step).
    pub record_stride: usize,
    /// Track the memory integrals (disable for plain state ensembles).
    pub malliavin: bool,
    pub malliavin_variant: MalliavinVariant,
    pub noise: NoiseKind,
    /// A path whose state exceeds this magnitude (or turns non-finite) is
    /// marked divergent and frozen at its last good state.
    pub divergence_threshold: f64,
    /// Abort when more than this fraction of paths diverges.
    pub max_divergent_fraction: f64,
}

impl SimOptions {
    pub fn new(n_paths: usize, seed: u64, record_stride: usize) -> Self {
        Self {
            n_paths,
            seed,
            record_stride,
            malliavin: true,
            malliavin_variant: MalliavinVariant::default(),
            noise: NoiseKind::default(),
            divergence_threshold: 1e6,
            max_divergent_fraction: 0.01,
        }
    }
}

/// One recorded instant of one path.
#[derive(Debug, Clone, Copy)]
pub struct Snapshot {
    pub step: usize,
    pub state: Vector2<f64>,
    /// Memory integrals `M_i` per channel (zero for inactive channels or
    /// when tracking is off).
    pub malliavin: [Vector2<f64>; 2],
}

#[derive(Debug, Clone)]
pub struct PathRecord {
    pub snapshots: Vec<Snapshot>,
    /// Step index at which the path first left the admissible region.
    pub divergent_at: Option<usize>,
}

impl PathRecord {
    pub fn is_divergent(&self) -> bool {
        self.divergent_at.is_some()
    }
}

/// An index-ordered ensemble of recorded paths.
#[derive(Debug, Clone)]
pub struct Ensemble {
    pub dt: f64,
    pub record_steps: Vec<usize>,
    pub paths: Vec<PathRecord>,
    pub n_divergent: usize,
    pub sigma: [f64; 2],
    pub hurst: [f64; 2],
}

impl Ensemble {
    pub fn n_records(&self) -> usize {
        self.record_steps.len()
    }

    pub fn record_time(&self, r: usize) -> f64 {
        self.record_steps[r] as f64 * self.dt
    }

    pub fn record_times(&self) -> Vec<f64> {
        self.record_steps.iter().map(|&s| s as f64 * self.dt).collect()
    }

    /// Record index holding the given step, if that step was recorded.
    pub fn record_index_for_step(&self, step: usize) -> Option<usize> {
        self.record_steps.iter().position(|&s| s == step)
    }

    /// Record index holding the given time, which must match a recorded
    /// snapshot up to a small relative slack.
    pub fn record_index_for_time(&self, t: f64) -> Result<usize> {
        let slack = 1e-6 * t.abs().max(1.0);
        self.record_steps
            .iter()
            .position(|&s| (s as f64 * self.dt - t).abs() <= slack)
            .ok_or_else(|| {
                Error::MissingInput(format!("time {t} was not recorded in the ensemble"))
            })
    }

    /// Paths that stayed inside the admissible region.
    pub fn surviving(&self) -> impl Iterator<Item = &PathRecord> {
        self.paths.iter().filter(|p| !p.is_divergent())
    }
}

/// Product-integration kernel weights for one channel: `lag_weights[ℓ]` is
/// the exact kernel integral over the step at lag `ℓ ∈ 1..=n_steps`,
/// `∫ (t_h−s)^{2H−2} ds = Δt^{2H−1}·[ℓ^{2H−1} − (ℓ−1)^{2H−1}]/(2H−1)`.
fn lag_weights(hurst: f64, dt: f64, n_steps: usize) -> Vec<f64> {
    let p = 2.0 * hurst - 1.0;
    let scale = dt.powf(p) / p;
    let mut w = Vec::with_capacity(n_steps + 1);
    w.push(0.0);
    let mut prev = 0.0;
    for l in 1..=n_steps {
        let cur = (l as f64).powf(p);
        w.push(scale * (cur - prev));
        prev = cur;
    }
    w
}

struct ChannelSetup {
    index: usize,
    sigma: f64,
    hurst: f64,
    generator: Option<Arc<FgnGenerator>>,
    lag_weights: Option<Arc<Vec<f64>>>,
}

/// The record schedule: every `stride`-th step plus step 0 and the last step.
fn record_steps(n_steps: usize, stride: usize) -> Vec<usize> {
    let mut steps: Vec<usize> = (0..=n_steps).step_by(stride.max(1)).collect();
    if *steps.last().expect("nonempty") != n_steps {
        steps.push(n_steps);
    }
    steps
}

fn integrate_path(
    model: &SystemModel,
    grid: SimGrid,
    opts: &SimOptions,
    channels: &[ChannelSetup],
    schedule: &[usize],
    path_index: usize,
) -> PathRecord {
    let dt = grid.dt;
    let n = grid.n_steps;
    let mut rng = stream_rng(opts.seed, path_index as u64);

    let mut y = model.init.draw(&mut rng);

    // Channel draws happen in a fixed order so the stream layout is part of
    // the reproducibility contract: initial state, then channel 1, then 2.
    let mut increments: [Option<Vec<f64>>; 2] = [None, None];
    for ch in channels {
        let steps = match (&opts.noise, &ch.generator) {
            (NoiseKind::White, _) => sample_white_increments(dt, n, &mut rng),
            (NoiseKind::Fractional, Some(gen)) => gen.sample_with_rng(&mut rng),
            (NoiseKind::Fractional, None) => unreachable!("fractional channel without generator"),
        };
        increments[ch.index] = Some(steps);
    }

    let track = opts.malliavin && opts.noise == NoiseKind::Fractional;
    let mut half_props: Vec<Matrix2<f64>> = Vec::new();
    let mut step_props: Vec<Matrix2<f64>> = Vec::new();
    if track {
        half_props.reserve_exact(n);
        step_props.reserve_exact(n);
    }

    let mut states: Vec<Vector2<f64>> = Vec::with_capacity(schedule.len());
    let mut schedule_pos = 0;
    if schedule[0] == 0 {
        states.push(y);
        schedule_pos += 1;
    }

    let mut divergent_at = None;
    for m in 0..n {
        if divergent_at.is_none() {
            let mut db = Vector2::zeros();
            for ch in channels {
                let inc = increments[ch.index].as_ref().expect("active channel increments");
                db[ch.index] += ch.sigma * inc[m];
            }
            let f0 = model.dynamics.drift(&y);
            let predictor = y + f0 * dt + db;
            let f1 = model.dynamics.drift(&predictor);
            let y_next = y + (f0 + f1) * (dt / 2.0) + db;

            let finite = y_next.x.is_finite() && y_next.y.is_finite();
            if !finite || y_next.abs().max() > opts.divergence_threshold {
                divergent_at = Some(m + 1);
            } else {
                if track {
                    let j_mid = model.dynamics.jacobian(&((y + y_next) * 0.5));
                    let q = expm2(&(j_mid * (dt / 2.0)));
                    half_props.push(q);
                    step_props.push(q * q);
                }
                y = y_next;
            }
        }
        if divergent_at.is_some() && track {
            // Keep index alignment for the (unused) propagator arrays.
            half_props.push(Matrix2::identity());
            step_props.push(Matrix2::identity());
        }
        if schedule_pos < schedule.len() && schedule[schedule_pos] == m + 1 {
            states.push(y);
            schedule_pos += 1;
        }
    }
    debug_assert_eq!(states.len(), schedule.len());

    let mut snapshots = Vec::with_capacity(schedule.len());
    for (&step, state) in schedule.iter().zip(&states) {
        let mut malliavin = [Vector2::zeros(), Vector2::zeros()];
        if opts.malliavin && divergent_at.is_none() && step > 0 {
            for ch in channels {
                malliavin[ch.index] = match opts.noise {
                    NoiseKind::White => {
                        let mut m = Vector2::zeros();
                        m[ch.index] = 0.5 * ch.sigma;
                        m
                    }
                    NoiseKind::Fractional => {
                        let weights = ch.lag_weights.as_ref().expect("lag table");
                        let mut acc = Vector2::zeros();
                        let mut flow = Matrix2::identity();
                        let mut unit = Vector2::zeros();
                        unit[ch.index] = 1.0;
                        for m in (0..step).rev() {
                            let contrib = match opts.malliavin_variant {
                                MalliavinVariant::Midpoint => flow * (half_props[m] * unit),
                                MalliavinVariant::LeftEndpoint => {
                                    flow * (step_props[m] * unit)
                                }
                            };
                            acc += contrib * weights[step - m];
                            flow *= step_props[m];
                        }
                        acc * (ch.hurst * (2.0 * ch.hurst - 1.0) * ch.sigma)
                    }
                };
            }
        }
        snapshots.push(Snapshot { step, state: *state, malliavin });
    }

    PathRecord { snapshots, divergent_at }
}

/// Simulates the ensemble. Paths are index-ordered; the run fails if more
/// than `max_divergent_fraction` of them leave the admissible region.
pub fn run_ensemble(model: &SystemModel, grid: SimGrid, opts: &SimOptions) -> Result<Ensemble> {
    if opts.n_paths == 0 {
        return Err(Error::Config("the ensemble needs at least one path".into()));
    }
    if opts.record_stride == 0 {
        return Err(Error::Config("record stride must be at least 1".into()));
    }
    if !(opts.divergence_threshold > 0.0) {
        return Err(Error::Config("divergence threshold must be positive".into()));
    }

    let schedule = record_steps(grid.n_steps, opts.record_stride);

    let mut channels = Vec::new();
    for &i in &model.active_channels() {
        let hurst = model.hurst[i].value();
        let (generator, weights) = if opts.noise == NoiseKind::Fractional {
            // Channels with equal Hurst index share one eigenvalue setup.
            let reuse = channels
                .iter()
                .find(|c: &&ChannelSetup| c.hurst == hurst)
                .map(|c| (c.generator.clone(), c.lag_weights.clone()));
            match reuse {
                Some(pair) => pair,
                None => (
                    Some(Arc::new(FgnGenerator::new(hurst, grid.dt, grid.n_steps)?)),
                    Some(Arc::new(lag_weights(hurst, grid.dt, grid.n_steps))),
                ),
            }
        } else {
            (None, None)
        };
        channels.push(ChannelSetup {
            index: i,
            sigma: model.sigma[i],
            hurst,
            generator,
            lag_weights: weights,
        });
    }

    let paths: Vec<PathRecord> = (0..opts.n_paths)
        .into_par_iter()
        .map(|p| integrate_path(model, grid, opts, &channels, &schedule, p))
        .collect();

    let n_divergent = paths.iter().filter(|p| p.is_divergent()).count();
    let fraction = n_divergent as f64 / opts.n_paths as f64;
    if fraction > opts.max_divergent_fraction {
        return Err(Error::Numerical(format!(
            "{n_divergent} of {} paths left the admissible region \
             (fraction {fraction:.3} exceeds the allowed {:.3})",
            opts.n_paths, opts.max_divergent_fraction
        )));
    }

    Ok(Ensemble {
        dt: grid.dt,
        record_steps: schedule,
        paths,
        n_divergent,
        sigma: model.sigma,
        hurst: [model.hurst[0].value(), model.hurst[1].value()],
    })
}
