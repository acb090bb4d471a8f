//! Run configuration: one TOML file describes a complete experiment
//! (model, ensemble simulation, DLMM estimation, solver, outputs), and the
//! four builtin example configurations are generated here so committed
//! config files can be checked against the code.

use crate::dlmm::{BinGrid, DlmmOptions, Interpolation};
use crate::error::{Error, Result};
use crate::geom::{GridGeometry, Rect};
use crate::linear::LinearParams;
use crate::model::{builtin, GaussianInit, SystemModel};
use crate::simulate::{SimGrid, SimOptions};
use crate::solver::{SolveOptions, SolverGrid};
use nalgebra::Vector2;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelBlock,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sim: Option<SimBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dlmm: Option<DlmmBlock>,
    pub solver: SolverBlock,
    pub outputs: OutputsBlock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBlock {
    /// Builtin name: `linear_sdof`, `duffing`, `vdp`, or `toggle`.
    pub name: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    /// Diagonal noise intensities (σ₁, σ₂).
    pub sigma: [f64; 2],
    /// Hurst indices (H₁, H₂); SDOF models require H₁ = H₂.
    pub hurst: [f64; 2],
    pub init: InitBlock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitBlock {
    pub mean: [f64; 2],
    /// Isotropic initial variance σ₀².
    pub var: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimBlock {
    pub dt: f64,
    pub n_steps: usize,
    pub n_samples: usize,
    pub snapshot_stride: usize,
    pub seed: u64,
    #[serde(default = "default_true")]
    pub malliavin: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DlmmBlock {
    /// Bin domain `[lo1, hi1, lo2, hi2]`.
    pub domain: [f64; 4],
    pub bins: [usize; 2],
    #[serde(default = "default_radius")]
    pub smoothing_radius: usize,
    #[serde(default = "default_interpolation")]
    pub interpolation: String,
    #[serde(default)]
    pub symmetrize: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverBlock {
    /// Node domain `[lo1, hi1, lo2, hi2]`.
    pub domain: [f64; 4],
    /// Node counts per axis.
    pub nodes: [usize; 2],
    pub dt: f64,
    pub t_end: f64,
    /// Diffusion-coefficient source: `analytic`, `gwn`, or `dlmm`.
    pub source: String,
    #[serde(default)]
    pub clamp: bool,
    #[serde(default)]
    pub renormalize: bool,
    #[serde(default)]
    pub upwind: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputsBlock {
    pub directory: String,
    #[serde(default = "default_formats")]
    pub formats: Vec<String>,
    pub report_times: Vec<f64>,
    /// Monte-Carlo reference ensemble size for histogram comparisons
    /// (0 = no reference).
    #[serde(default)]
    pub reference_samples: usize,
    /// `none`, `analytic`, or `reference`.
    #[serde(default = "default_compare")]
    pub compare: String,
}

fn default_true() -> bool {
    true
}
fn default_radius() -> usize {
    1
}
fn default_interpolation() -> String {
    "bilinear".into()
}
fn default_formats() -> Vec<String> {
    vec!["csv".into()]
}
fn default_compare() -> String {
    "none".into()
}

/// Which coefficient fields drive the solver.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceKind {
    AnalyticLinear,
    Gwn,
    Dlmm,
}

/// What the solved PDF is compared against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CompareKind {
    None,
    Analytic,
    Reference,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Builds the system model from the model block.
    pub fn model(&self) -> Result<SystemModel> {
        let init = GaussianInit::isotropic(
            Vector2::new(self.model.init.mean[0], self.model.init.mean[1]),
            self.model.init.var,
        )?;
        builtin(&self.model.name, &self.model.params, self.model.sigma, self.model.hurst, init)
    }

    /// Linear-reference parameters; only valid for `linear_sdof`.
    pub fn linear_params(&self) -> Result<LinearParams> {
        if self.model.name != "linear_sdof" {
            return Err(Error::Config(format!(
                "the analytic linear reference needs model `linear_sdof`, got `{}`",
                self.model.name
            )));
        }
        let model = self.model()?;
        let k = *self.model.params.get("k").ok_or_else(|| missing_param("k"))?;
        let c = *self.model.params.get("c").ok_or_else(|| missing_param("c"))?;
        LinearParams::new(k, c, self.model.sigma[1], model.hurst[1], model.init)
    }

    pub fn sim_block(&self) -> Result<&SimBlock> {
        self.sim
            .as_ref()
            .ok_or_else(|| Error::Config("this run needs a [sim] block".into()))
    }

    pub fn sim_grid(&self) -> Result<SimGrid> {
        let s = self.sim_block()?;
        SimGrid::new(s.dt, s.n_steps)
    }

    pub fn sim_options(&self) -> Result<SimOptions> {
        let s = self.sim_block()?;
        if s.n_samples == 0 {
            return Err(Error::Config("sim.n_samples must be at least 1".into()));
        }
        if s.snapshot_stride == 0 {
            return Err(Error::Config("sim.snapshot_stride must be at least 1".into()));
        }
        let mut opts = SimOptions::new(s.n_samples, s.seed, s.snapshot_stride);
        opts.malliavin = s.malliavin;
        Ok(opts)
    }

    pub fn dlmm_block(&self) -> Result<&DlmmBlock> {
        self.dlmm
            .as_ref()
            .ok_or_else(|| Error::Config("this run needs a [dlmm] block".into()))
    }

    pub fn bin_grid(&self) -> Result<BinGrid> {
        let d = self.dlmm_block()?;
        BinGrid::new(
            Rect::new(d.domain[0], d.domain[1], d.domain[2], d.domain[3])?,
            d.bins[0],
            d.bins[1],
        )
    }

    pub fn dlmm_options(&self) -> Result<DlmmOptions> {
        let d = self.dlmm_block()?;
        let interpolation = match d.interpolation.as_str() {
            "bilinear" => Interpolation::Bilinear,
            "catmull-rom" => Interpolation::CatmullRom,
            other => {
                return Err(Error::Config(format!(
                    "dlmm.interpolation must be `bilinear` or `catmull-rom`, got `{other}`"
                )))
            }
        };
        Ok(DlmmOptions {
            smoothing_radius: d.smoothing_radius,
            symmetrize: d.symmetrize,
            interpolation,
        })
    }

    pub fn solver_geometry(&self) -> Result<GridGeometry> {
        let s = &self.solver;
        GridGeometry::new(
            Rect::new(s.domain[0], s.domain[1], s.domain[2], s.domain[3])?,
            s.nodes[0],
            s.nodes[1],
        )
    }

    pub fn solver_grid(&self) -> Result<SolverGrid> {
        SolverGrid::new(
            self.solver_geometry()?,
            self.solver.dt,
            self.solver.t_end,
            self.outputs.report_times.clone(),
        )
    }

    pub fn solve_options(&self) -> SolveOptions {
        SolveOptions {
            clamp_negative: self.solver.clamp,
            renormalize: self.solver.renormalize,
            upwind: self.solver.upwind,
        }
    }

    pub fn source_kind(&self) -> Result<SourceKind> {
        match self.solver.source.as_str() {
            "analytic" => Ok(SourceKind::AnalyticLinear),
            "gwn" => Ok(SourceKind::Gwn),
            "dlmm" => Ok(SourceKind::Dlmm),
            other => Err(Error::Config(format!(
                "solver.source must be `analytic`, `gwn`, or `dlmm`, got `{other}`"
            ))),
        }
    }

    pub fn compare_kind(&self) -> Result<CompareKind> {
        match self.outputs.compare.as_str() {
            "none" => Ok(CompareKind::None),
            "analytic" => Ok(CompareKind::Analytic),
            "reference" => Ok(CompareKind::Reference),
            other => Err(Error::Config(format!(
                "outputs.compare must be `none`, `analytic`, or `reference`, got `{other}`"
            ))),
        }
    }

    /// Full cross-field validation; every constructor above is exercised so
    /// failures carry field-level messages.
    pub fn validate(&self) -> Result<()> {
        self.model()?;
        let source = self.source_kind()?;
        let compare = self.compare_kind()?;
        let solver_grid = self.solver_grid()?;

        for f in &self.outputs.formats {
            if !matches!(f.as_str(), "csv" | "binary" | "gnuplot") {
                return Err(Error::Config(format!(
                    "outputs.formats entries must be csv, binary, or gnuplot, got `{f}`"
                )));
            }
        }
        if self.outputs.formats.is_empty() {
            return Err(Error::Config("outputs.formats must name at least one format".into()));
        }
        if self.outputs.report_times.is_empty() {
            return Err(Error::Config("outputs.report_times must not be empty".into()));
        }

        if source == SourceKind::AnalyticLinear || compare == CompareKind::Analytic {
            self.linear_params()?;
        }
        if source == SourceKind::Dlmm {
            let sim = self.sim_block()?;
            self.sim_grid()?;
            self.sim_options()?;
            self.bin_grid()?;
            self.dlmm_options()?;
            if !sim.malliavin {
                return Err(Error::Config(
                    "solver.source = `dlmm` needs sim.malliavin = true".into(),
                ));
            }
            // The DLMM snapshots must cover the solver horizon so the
            // node interpolator never extrapolates in time.
            let sim_horizon = sim.dt * sim.n_steps as f64;
            if sim_horizon + 1e-9 < solver_grid.t_end {
                return Err(Error::Config(format!(
                    "sim horizon {sim_horizon} does not cover the solver horizon {}",
                    solver_grid.t_end
                )));
            }
        }
        if compare == CompareKind::Reference {
            if self.outputs.reference_samples == 0 {
                return Err(Error::Config(
                    "outputs.compare = `reference` needs outputs.reference_samples ≥ 1".into(),
                ));
            }
            let sim = self.sim_block()?;
            let sim_horizon = sim.dt * sim.n_steps as f64;
            if sim_horizon + 1e-9 < solver_grid.t_end {
                return Err(Error::Config(format!(
                    "sim horizon {sim_horizon} does not cover the reference horizon {}",
                    solver_grid.t_end
                )));
            }
        }
        Ok(())
    }

    /// The four committed example configurations.
    pub fn example(id: &str, scale: Scale) -> Result<RunConfig> {
        let reference = match scale {
            Scale::Desk => 100_000,
            Scale::Paper => 6_000_000,
        };
        let cfg = match id {
            "ex1" => {
                let t_end = match scale {
                    Scale::Desk => 5.0,
                    Scale::Paper => 20.0,
                };
                let report_times = match scale {
                    Scale::Desk => vec![1.0, 5.0],
                    Scale::Paper => vec![1.0, 5.0, 20.0],
                };
                RunConfig {
                    model: ModelBlock {
                        name: "linear_sdof".into(),
                        params: BTreeMap::from([("k".into(), 1.0), ("c".into(), 0.4)]),
                        sigma: [0.0, 1.0],
                        hurst: [0.8, 0.8],
                        init: InitBlock { mean: [-1.0, -1.0], var: 0.15 },
                    },
                    sim: None,
                    dlmm: None,
                    solver: SolverBlock {
                        domain: [-6.0, 6.0, -6.0, 6.0],
                        nodes: [81, 81],
                        dt: 1e-3,
                        t_end,
                        source: "analytic".into(),
                        clamp: false,
                        renormalize: false,
                        upwind: false,
                    },
                    outputs: OutputsBlock {
                        directory: "out/ex1".into(),
                        formats: default_formats(),
                        report_times,
                        reference_samples: 0,
                        compare: "analytic".into(),
                    },
                }
            }
            "ex2" => RunConfig {
                model: ModelBlock {
                    name: "duffing".into(),
                    params: BTreeMap::from([
                        ("eta".into(), 1.0),
                        ("alpha".into(), -1.0),
                        ("beta".into(), 1.0),
                    ]),
                    sigma: [0.0, 0.6],
                    hurst: [0.65, 0.65],
                    init: InitBlock { mean: [0.0, 0.0], var: 0.05 },
                },
                sim: Some(SimBlock {
                    dt: 1e-3,
                    n_steps: 8000,
                    n_samples: 2000,
                    snapshot_stride: 50,
                    seed: 1,
                    malliavin: true,
                }),
                dlmm: Some(DlmmBlock {
                    domain: [-2.5, 2.5, -2.5, 2.5],
                    bins: [25, 25],
                    smoothing_radius: 1,
                    interpolation: "bilinear".into(),
                    symmetrize: false,
                }),
                solver: SolverBlock {
                    domain: [-2.5, 2.5, -2.5, 2.5],
                    nodes: [61, 61],
                    dt: 1e-3,
                    t_end: 8.0,
                    source: "dlmm".into(),
                    clamp: false,
                    renormalize: false,
                    upwind: false,
                },
                outputs: OutputsBlock {
                    directory: "out/ex2".into(),
                    formats: default_formats(),
                    report_times: vec![2.5, 3.0, 8.0],
                    reference_samples: reference,
                    compare: "reference".into(),
                },
            },
            "ex3" => RunConfig {
                model: ModelBlock {
                    name: "vdp".into(),
                    params: BTreeMap::from([("eta".into(), 2.0)]),
                    sigma: [0.0, 1.0],
                    hurst: [0.6, 0.6],
                    init: InitBlock { mean: [0.0, 0.0], var: 0.05 },
                },
                sim: Some(SimBlock {
                    dt: 1e-3,
                    n_steps: 8000,
                    n_samples: 2000,
                    snapshot_stride: 50,
                    seed: 1,
                    malliavin: true,
                }),
                dlmm: Some(DlmmBlock {
                    domain: [-2.5, 2.5, -2.5, 2.5],
                    bins: [25, 25],
                    smoothing_radius: 1,
                    interpolation: "bilinear".into(),
                    symmetrize: false,
                }),
                solver: SolverBlock {
                    domain: [-2.5, 2.5, -2.5, 2.5],
                    nodes: [81, 81],
                    // The strong limit-cycle drift at the domain corners puts
                    // the explicit scheme's stability bound at 9.97e-4 on
                    // this grid, so the solver runs at half the sampling
                    // step.
                    dt: 5e-4,
                    t_end: 8.0,
                    source: "dlmm".into(),
                    clamp: false,
                    renormalize: false,
                    upwind: false,
                },
                outputs: OutputsBlock {
                    directory: "out/ex3".into(),
                    formats: default_formats(),
                    report_times: vec![1.0, 2.0, 8.0],
                    reference_samples: reference,
                    compare: "reference".into(),
                },
            },
            "ex4" => RunConfig {
                model: ModelBlock {
                    name: "toggle".into(),
                    params: BTreeMap::from([
                        ("alpha1".into(), 2.5),
                        ("alpha2".into(), 2.5),
                        ("m1".into(), 2.0),
                        ("m2".into(), 2.0),
                    ]),
                    sigma: [0.5, 0.6],
                    hurst: [0.8, 0.7],
                    init: InitBlock { mean: [1.2, 1.0], var: 0.05 },
                },
                sim: Some(SimBlock {
                    dt: 1e-3,
                    n_steps: 16_000,
                    n_samples: 2000,
                    snapshot_stride: 100,
                    seed: 1,
                    malliavin: true,
                }),
                dlmm: Some(DlmmBlock {
                    domain: [-2.0, 5.0, -2.0, 5.0],
                    bins: [25, 25],
                    smoothing_radius: 1,
                    interpolation: "bilinear".into(),
                    symmetrize: false,
                }),
                solver: SolverBlock {
                    domain: [-2.0, 5.0, -2.0, 5.0],
                    nodes: [71, 71],
                    dt: 1e-3,
                    t_end: 16.0,
                    source: "dlmm".into(),
                    clamp: false,
                    renormalize: false,
                    upwind: false,
                },
                outputs: OutputsBlock {
                    directory: "out/ex4".into(),
                    formats: default_formats(),
                    report_times: vec![2.0, 5.0, 16.0],
                    reference_samples: reference,
                    compare: "reference".into(),
                },
            },
            other => {
                return Err(Error::Config(format!(
                    "unknown example `{other}` (expected ex1, ex2, ex3, or ex4)"
                )))
            }
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

fn missing_param(name: &str) -> Error {
    Error::Config(format!("model.params is missing `{name}`"))
}

/// Experiment scale: `Desk` shrinks the Monte-Carlo reference ensemble to a
/// laptop-friendly size; `Paper` is the full-size configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Desk,
    Paper,
}

impl std::str::FromStr for Scale {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Scale::Desk),
            "paper" => Ok(Scale::Paper),
            other => Err(Error::Config(format!("scale must be `desk` or `paper`, got `{other}`"))),
        }
    }
}
