//! Stage orchestration: simulate → estimate → solve → analyze, each stage
//! also runnable standalone from a config file. Artifacts land in the
//! config's output directory with a manifest sufficient to re-run
//! bit-identically.

use crate::config::{CompareKind, RunConfig, Scale, SourceKind};
use crate::dlmm::{estimate as dlmm_estimate, CoefficientField, NodeInterpolator};
use crate::error::{Error, Result};
use crate::io;
use crate::linear::{analytic_pdf, gaussian_summary, QuadratureOptions};
use crate::model::SystemModel;
use crate::simulate::{run_ensemble, Ensemble, SimOptions};
use crate::solver::{solve, CoefficientSource, PdfGrid, ReportEntry, SolveReport};
use crate::stats;
use serde::Serialize;
use std::path::{Path, PathBuf};

/// Distinct master seed for the Monte-Carlo reference ensemble, derived
/// from the simulation seed so one config seed pins the whole run.
fn reference_seed(master: u64) -> u64 {
    master.wrapping_add(0x9E3779B97F4A7C15)
}

/// Caps the global worker pool. Must run before any parallel work; a second
/// call with a different cap fails quietly because the pool is already
/// built, and results never depend on the thread count anyway.
pub fn configure_threads(n: Option<usize>) {
    if let Some(n) = n {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

/// Scheme identifiers recorded in metadata artifacts.
fn scheme_ids() -> io::SchemeIds {
    io::SchemeIds {
        integrator: "heun-additive".into(),
        noise: "fgn-circulant-embedding".into(),
        malliavin: "product-integration-midpoint".into(),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub master_seed: Option<u64>,
    pub reference_seed: Option<u64>,
    pub integrator: String,
    pub noise: String,
    pub malliavin: String,
    pub estimator: String,
    pub solver: String,
    pub crate_version: String,
    pub git_describe: String,
}

/// One configured run bound to its output directory.
pub struct Runner {
    pub cfg: RunConfig,
    pub config_hash: u64,
    pub out: PathBuf,
    pub seed_override: Option<u64>,
}

impl Runner {
    /// `config_text` is the exact TOML the run was configured with; its hash
    /// lands in the manifest. `out_override` replaces the config's output
    /// directory (CLI `--out`).
    pub fn new(
        cfg: RunConfig,
        config_text: &str,
        out_override: Option<PathBuf>,
        seed_override: Option<u64>,
    ) -> Self {
        let out = out_override.unwrap_or_else(|| PathBuf::from(&cfg.outputs.directory));
        Self { cfg, config_hash: io::fnv1a64(config_text.as_bytes()), out, seed_override }
    }

    fn master_seed(&self) -> Option<u64> {
        self.seed_override.or(self.cfg.sim.as_ref().map(|s| s.seed))
    }

    fn write_manifest(&self) -> Result<()> {
        std::fs::create_dir_all(&self.out)?;
        let solver_scheme = if self.cfg.solver.upwind {
            "forward-euler-upwind"
        } else {
            "forward-euler-central"
        };
        let manifest = RunManifest {
            config_hash: format!("{:016x}", self.config_hash),
            master_seed: self.master_seed(),
            reference_seed: self.master_seed().map(reference_seed),
            integrator: "heun-additive".into(),
            noise: "fgn-circulant-embedding".into(),
            malliavin: "product-integration-midpoint".into(),
            estimator: "dlmm-box-smoothed".into(),
            solver: solver_scheme.into(),
            crate_version: env!("CARGO_PKG_VERSION").into(),
            git_describe: io::git_describe().into(),
        };
        io::write_json(&self.out.join("manifest.json"), &manifest)
    }

    fn model(&self) -> Result<SystemModel> {
        self.cfg.model()
    }

    /// Runs the DLMM ensemble and writes snapshot tables plus the
    /// ensemble-level moment series.
    pub fn simulate(&self) -> Result<Ensemble> {
        self.write_manifest()?;
        let model = self.model()?;
        let grid = self.cfg.sim_grid()?;
        let mut opts = self.cfg.sim_options()?;
        if let Some(seed) = self.seed_override {
            opts.seed = seed;
        }
        let ensemble = run_ensemble(&model, grid, &opts)?;
        io::write_ensemble(&self.out.join("ensemble"), &ensemble, opts.seed, &scheme_ids())?;
        let series = stats::ensemble_moment_series(&ensemble)?;
        std::fs::create_dir_all(self.out.join("moments"))?;
        io::write_moments_csv(&self.out.join("moments/ensemble_moments.csv"), &series)?;
        Ok(ensemble)
    }

    /// DLMM estimation; uses the in-memory ensemble when given, otherwise
    /// reads the simulate stage's artifacts.
    pub fn estimate(&self, ensemble: Option<&Ensemble>) -> Result<CoefficientField> {
        self.write_manifest()?;
        let owned;
        let ens = match ensemble {
            Some(e) => e,
            None => {
                owned = io::read_ensemble(&self.out.join("ensemble"))?;
                &owned
            }
        };
        let field = dlmm_estimate(ens, self.cfg.bin_grid()?, &self.cfg.dlmm_options()?)?;
        let seed = self.master_seed().unwrap_or(0);
        io::write_coefficients(&self.out.join("coefficients"), &field, seed)?;
        Ok(field)
    }

    /// Solves the memFPK equation, writes PDFs/marginals/moments and
    /// diagnostics, and runs the configured comparison.
    pub fn solve(&self, field: Option<&CoefficientField>) -> Result<SolveReport> {
        self.write_manifest()?;
        let model = self.model()?;
        let grid = self.cfg.solver_grid()?;
        let opts = self.cfg.solve_options();

        // Keep borrow targets alive for the CoefficientSource.
        let linear_params;
        let owned_field;
        let interpolator;
        let source = match self.cfg.source_kind()? {
            SourceKind::AnalyticLinear => {
                linear_params = self.cfg.linear_params()?;
                CoefficientSource::AnalyticLinear(&linear_params)
            }
            SourceKind::Gwn => CoefficientSource::Gwn { sigma: model.sigma },
            SourceKind::Dlmm => {
                let f = match field {
                    Some(f) => f,
                    None => {
                        owned_field = io::read_coefficients(&self.out.join("coefficients"))?;
                        &owned_field
                    }
                };
                interpolator = NodeInterpolator::new(f, &grid.geom)?;
                CoefficientSource::Dlmm(&interpolator)
            }
        };

        let report = solve(&model.dynamics, &source, &grid, &model.init, &opts)?;

        let solve_dir = self.out.join("solve");
        std::fs::create_dir_all(&solve_dir)?;
        let mut moment_rows = Vec::new();
        for (idx, pdf) in report.pdfs.iter().enumerate() {
            self.write_pdf_formats(&solve_dir, "pdf", idx, pdf)?;
            let (m1, m2) = stats::marginals(pdf);
            io::write_marginal_csv(&solve_dir.join(format!("marginal1_{idx:04}.csv")), &m1)?;
            io::write_marginal_csv(&solve_dir.join(format!("marginal2_{idx:04}.csv")), &m2)?;
            moment_rows.push(stats::grid_moments(pdf)?);
        }
        let series = stats::MomentSeries {
            times: report.pdfs.iter().map(|p| p.time).collect(),
            moments: moment_rows,
        };
        io::write_moments_csv(&solve_dir.join("solver_moments.csv"), &series)?;
        io::write_json(
            &solve_dir.join("diagnostics.json"),
            &Diagnostics { min_cfl_margin: report.min_cfl_margin, entries: report.entries.clone() },
        )?;

        self.compare_stage(&report)?;
        Ok(report)
    }

    /// Writes the exact transient Gaussian of the linear reference: moment
    /// summary plus PDF grids at the report times.
    pub fn analytic(&self) -> Result<()> {
        self.write_manifest()?;
        let params = self.cfg.linear_params()?;
        let times = &self.cfg.outputs.report_times;
        let summary = gaussian_summary(&params, times, QuadratureOptions::default())?;
        let dir = self.out.join("analytic");
        std::fs::create_dir_all(&dir)?;
        io::write_gaussian_summary_csv(&dir.join("summary.csv"), &summary)?;
        let geom = self.cfg.solver_geometry()?;
        for (idx, &t) in times.iter().enumerate() {
            let pdf = analytic_pdf(&params, t, &geom)?;
            self.write_pdf_formats(&dir, "pdf", idx, &pdf)?;
        }
        Ok(())
    }

    fn write_pdf_formats(&self, dir: &Path, stem: &str, idx: usize, pdf: &PdfGrid) -> Result<()> {
        for fmt in &self.cfg.outputs.formats {
            match fmt.as_str() {
                "csv" => io::write_pdf_csv(&dir.join(format!("{stem}_{idx:04}.csv")), pdf)?,
                "binary" => io::write_pdf_binary(&dir.join(format!("{stem}_{idx:04}.bin")), pdf)?,
                "gnuplot" => io::write_pdf_gnuplot(&dir.join(format!("{stem}_{idx:04}.dat")), pdf)?,
                other => return Err(Error::Config(format!("unknown output format `{other}`"))),
            }
        }
        Ok(())
    }

    fn compare_stage(&self, report: &SolveReport) -> Result<()> {
        let compare = self.cfg.compare_kind()?;
        if compare == CompareKind::None {
            return Ok(());
        }
        let dir = self.out.join("compare");
        std::fs::create_dir_all(&dir)?;
        let mut rows = Vec::new();
        match compare {
            CompareKind::Analytic => {
                let params = self.cfg.linear_params()?;
                for pdf in &report.pdfs {
                    let exact = analytic_pdf(&params, pdf.time, &pdf.geom)?;
                    rows.push(self.compare_row(pdf, &exact)?);
                }
            }
            CompareKind::Reference => {
                let reference = self.reference_ensemble()?;
                for (idx, pdf) in report.pdfs.iter().enumerate() {
                    let hist = stats::ensemble_histogram(&reference, pdf.time, &pdf.geom)?;
                    self.write_pdf_formats(&dir, "reference", idx, &hist)?;
                    rows.push(self.compare_row(pdf, &hist)?);
                }
            }
            CompareKind::None => unreachable!(),
        }
        io::write_json(&dir.join("metrics.json"), &rows)
    }

    fn compare_row(&self, pdf: &PdfGrid, other: &PdfGrid) -> Result<ComparisonRow> {
        let joint = stats::compare(pdf, other, stats::DEFAULT_LOG_THRESHOLD)?;
        let (a1, a2) = stats::marginals(pdf);
        let (b1, b2) = stats::marginals(other);
        Ok(ComparisonRow {
            time: pdf.time,
            joint,
            marginal1_l1: stats::marginal_l1(&a1, &b1)?,
            marginal2_l1: stats::marginal_l1(&a2, &b2)?,
        })
    }

    /// The Monte-Carlo reference: a large ensemble without Malliavin
    /// tracking, recorded only at the steps the report times need.
    fn reference_ensemble(&self) -> Result<Ensemble> {
        let model = self.model()?;
        let sim = self.cfg.sim_block()?;
        let grid = self.cfg.sim_grid()?;
        // Record stride = gcd of the report steps on the sim time grid, so
        // every report time is recorded without storing every step.
        let mut stride = 0usize;
        for &t in &self.cfg.outputs.report_times {
            let raw = t / sim.dt;
            let step = raw.round();
            if (raw - step).abs() > 1e-6 * raw.abs().max(1.0) {
                return Err(Error::Config(format!(
                    "report time {t} does not lie on the simulation time grid (dt = {})",
                    sim.dt
                )));
            }
            stride = gcd(stride, step as usize);
        }
        if stride == 0 {
            stride = sim.n_steps;
        }
        let master = self.master_seed().unwrap_or(0);
        let mut opts = SimOptions::new(self.cfg.outputs.reference_samples, reference_seed(master), stride);
        opts.malliavin = false;
        run_ensemble(&model, grid, &opts)
    }

    /// Full pipeline for one config: the stages the coefficient source
    /// needs, then the solve (with its configured comparison), plus the
    /// analytic summary for the linear model.
    pub fn run_pipeline(&self) -> Result<SolveReport> {
        let report = match self.cfg.source_kind()? {
            SourceKind::Dlmm => {
                let ensemble = self.simulate()?;
                let field = self.estimate(Some(&ensemble))?;
                self.solve(Some(&field))?
            }
            _ => self.solve(None)?,
        };
        if self.cfg.model.name == "linear_sdof" {
            self.analytic()?;
        }
        Ok(report)
    }
}

#[derive(Debug, Clone, Serialize)]
struct Diagnostics {
    min_cfl_margin: f64,
    entries: Vec<ReportEntry>,
}

/// Per-report-time comparison metrics against the configured baseline.
#[derive(Debug, Clone, Serialize)]
pub struct ComparisonRow {
    pub time: f64,
    pub joint: stats::CompareMetrics,
    pub marginal1_l1: f64,
    pub marginal2_l1: f64,
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Builds the runner for a committed example and runs the full pipeline.
pub fn reproduce(
    id: &str,
    scale: Scale,
    out_override: Option<PathBuf>,
    seed_override: Option<u64>,
) -> Result<Runner> {
    let cfg = RunConfig::example(id, scale)?;
    let text = cfg.to_toml();
    let runner = Runner::new(cfg, &text, out_override, seed_override);
    runner.run_pipeline()?;
    Ok(runner)
}

/// Loads two PDF grids (by extension: `.bin` binary, otherwise CSV) and
/// compares them.
pub fn compare_files(a: &Path, b: &Path) -> Result<stats::CompareMetrics> {
    let load = |p: &Path| -> Result<PdfGrid> {
        if p.extension().is_some_and(|e| e == "bin") {
            io::read_pdf_binary(p)
        } else {
            io::read_pdf_csv(p)
        }
    };
    stats::compare(&load(a)?, &load(b)?, stats::DEFAULT_LOG_THRESHOLD)
}
