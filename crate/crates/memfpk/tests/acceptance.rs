//! Release acceptance suite: one test per criterion, each printing exactly
//! one summary line
//!
//! ```text
//! ACCEPTANCE n (name): PASS|FAIL — details
//! ```
//!
//! The line is emitted from a short-lived helper thread so it reaches the
//! console even under the default harness output capture; run with
//! `cargo test --test acceptance -- --nocapture --test-threads 1` for
//! orderly output. Two criteria (3 and 5) encode targets that are not
//! attainable by construction at the demanded discretization / estimator
//! structure; they are implemented faithfully and left red rather than
//! weakened. README "Known limitations" carries the analysis.

use memfpk::dlmm::{estimate, BinGrid, DlmmOptions, Interpolation};
use memfpk::fgn::{increment_autocovariance, FgnGenerator};
use memfpk::geom::{GridGeometry, Rect};
use memfpk::linalg::Gaussian2;
use memfpk::linear::{analytic_pdf, b_coefficients, stationary_gwn, LinearParams, QuadratureOptions};
use memfpk::model::{builtin, verify_jacobian, Dynamics, DriftJacobian, GaussianInit, Hurst, SystemModel};
use memfpk::rng::stream_rng;
use memfpk::simulate::{run_ensemble, Ensemble, SimGrid, SimOptions};
use memfpk::solver::{solve, CoefficientSource, PdfGrid, SolveOptions, SolverGrid};
use memfpk::stats;
use memfpk::config::{RunConfig, Scale};
use memfpk::runner::Runner;
use nalgebra::{Matrix2, Vector2};
use std::collections::BTreeMap;
use std::time::Instant;

/// Prints the one-line verdict, then asserts. The harness captures the
/// `print!` macros (including from spawned threads), so the line is written
/// straight to the process's stdout to stay visible in default runs.
fn report(n: u32, name: &'static str, pass: bool, details: String) {
    use std::io::Write;
    let line = format!(
        "ACCEPTANCE {n} ({name}): {} — {details}",
        if pass { "PASS" } else { "FAIL" }
    );
    match std::fs::OpenOptions::new().append(true).open("/dev/stdout") {
        Ok(mut out) => {
            let _ = writeln!(out, "{line}");
        }
        Err(_) => println!("{line}"),
    }
    assert!(pass, "{line}");
}

fn params(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

/// The damped linear oscillator shared by several criteria.
fn linear_model() -> SystemModel {
    builtin(
        "linear_sdof",
        &params(&[("k", 1.0), ("c", 0.4)]),
        [0.0, 1.0],
        [0.8, 0.8],
        GaussianInit::isotropic(Vector2::new(-1.0, -1.0), 0.15).unwrap(),
    )
    .unwrap()
}

fn linear_params() -> LinearParams {
    LinearParams::new(
        1.0,
        0.4,
        1.0,
        Hurst::new(0.8).unwrap(),
        GaussianInit::isotropic(Vector2::new(-1.0, -1.0), 0.15).unwrap(),
    )
    .unwrap()
}

// ---------------------------------------------------------------------------
// 1. Fractional Gaussian noise exactness
// ---------------------------------------------------------------------------

#[test]
fn acceptance_1_fgn_autocovariance() {
    let start = Instant::now();
    let (n, n_paths, dt) = (1 << 12, 200, 1.0);
    let mut worst_z = 0.0_f64;
    let mut worst_at = (0.0, 0usize);
    for (hi, &hurst) in [0.6, 0.8].iter().enumerate() {
        let gen = FgnGenerator::new(hurst, dt, n).unwrap();
        // Per-path autocovariance estimates at lags 0..=5, then the spread
        // across paths gives the Monte-Carlo standard error of the mean.
        let mut per_lag: Vec<Vec<f64>> = vec![Vec::with_capacity(n_paths); 6];
        for p in 0..n_paths {
            let mut rng = stream_rng(20_260_801, (hi * n_paths + p) as u64);
            let x = gen.sample_with_rng(&mut rng);
            for (lag, acc) in per_lag.iter_mut().enumerate() {
                let m = n - lag;
                let s: f64 = (0..m).map(|i| x[i] * x[i + lag]).sum();
                acc.push(s / m as f64);
            }
        }
        for (lag, samples) in per_lag.iter().enumerate() {
            let mean = samples.iter().sum::<f64>() / n_paths as f64;
            let var = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
                / (n_paths - 1) as f64;
            let se = (var / n_paths as f64).sqrt();
            let truth = increment_autocovariance(hurst, lag, dt).unwrap();
            let z = (mean - truth).abs() / se;
            if z > worst_z {
                worst_z = z;
                worst_at = (hurst, lag);
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    let pass = worst_z <= 4.0 && elapsed < 10.0;
    report(
        1,
        "fgn-autocovariance",
        pass,
        format!(
            "worst |z| = {worst_z:.2} at (H = {}, lag {}) over lags 0-5, H in {{0.6, 0.8}}, \
             200 x 4096 samples (bound 4 SE); {elapsed:.1} s (bound 10 s)",
            worst_at.0, worst_at.1
        ),
    );
}

// ---------------------------------------------------------------------------
// 2. Malliavin tracking vs closed-form linear coefficients
// ---------------------------------------------------------------------------

#[test]
fn acceptance_2_malliavin_linear_consistency() {
    let start = Instant::now();
    let model = linear_model();
    let p = linear_params();
    let grid = SimGrid::new(1e-3, 5000).unwrap();
    let opts = SimOptions::new(1, 1, 1000);
    let ens = run_ensemble(&model, grid, &opts).unwrap();
    let mut worst_rel = 0.0_f64;
    let mut detail = String::new();
    for &t in &[1.0, 5.0] {
        let idx = ens.record_index_for_time(t).unwrap();
        // One sigma factor lives inside the tracked derivative, the second
        // belongs to the coefficient definition; sigma = 1 here.
        let d = ens.paths[0].snapshots[idx].malliavin[1];
        let (sim21, sim22) = (model.sigma[1] * d.x, model.sigma[1] * d.y);
        let exact = b_coefficients(&p, t, QuadratureOptions::default()).unwrap();
        let r21 = (sim21 - exact.b21).abs() / exact.b21.abs();
        let r22 = (sim22 - exact.b22).abs() / exact.b22.abs();
        worst_rel = worst_rel.max(r21).max(r22);
        detail.push_str(&format!(
            "t = {t}: b21 {sim21:.6} vs {:.6}, b22 {sim22:.6} vs {:.6}; ",
            exact.b21, exact.b22
        ));
    }
    let elapsed = start.elapsed().as_secs_f64();
    let pass = worst_rel <= 1e-3 && elapsed < 5.0;
    report(
        2,
        "malliavin-linear-consistency",
        pass,
        format!("{detail}worst rel err {worst_rel:.2e} (bound 1e-3); {elapsed:.1} s (bound 5 s)"),
    );
}

// ---------------------------------------------------------------------------
// 3. Linear end-to-end transient accuracy at the nominal resolution
// ---------------------------------------------------------------------------

#[test]
fn acceptance_3_linear_transient_accuracy() {
    let model = linear_model();
    let p = linear_params();
    let geom =
        GridGeometry::new(Rect::new(-6.0, 6.0, -6.0, 6.0).unwrap(), 81, 81).unwrap();
    let grid = SolverGrid::new(geom, 1e-3, 5.0, vec![1.0, 5.0]).unwrap();
    let source = CoefficientSource::AnalyticLinear(&p);
    let rep = solve(&model.dynamics, &source, &grid, &model.init, &SolveOptions::default()).unwrap();
    let mut errs = Vec::new();
    for pdf in &rep.pdfs {
        let exact = analytic_pdf(&p, pdf.time, &geom).unwrap();
        let m = stats::compare(pdf, &exact, stats::DEFAULT_LOG_THRESHOLD).unwrap();
        errs.push((pdf.time, m.max_abs));
    }
    let drift = rep.entries.last().unwrap().max_mass_drift;
    // The early-time bound is truncation-dominated at this spacing for any
    // second-order scheme; halving the spacing meets it (criterion 7 checks
    // the convergence factor). Implemented as stated; expected red at t = 1.
    let pass = errs.iter().all(|&(_, e)| e <= 5e-3) && drift <= 1e-3;
    report(
        3,
        "linear-transient-accuracy",
        pass,
        format!(
            "max-abs err {} (bound 5e-3 each) on 81x81, dx = 0.15, dt = 1e-3; \
             mass drift {drift:.2e} (bound 1e-3)",
            errs.iter()
                .map(|(t, e)| format!("{e:.2e} at t = {t}"))
                .collect::<Vec<_>>()
                .join(", ")
        ),
    );
}

// ---------------------------------------------------------------------------
// 4. White-noise limit
// ---------------------------------------------------------------------------

#[test]
fn acceptance_4_white_noise_limit() {
    // (a) As H -> 1/2+ the memory coefficient approaches the constant sigma^2/2.
    let p_051 = LinearParams::new(
        1.0,
        0.4,
        1.0,
        Hurst::new(0.51).unwrap(),
        GaussianInit::isotropic(Vector2::new(-1.0, -1.0), 0.15).unwrap(),
    )
    .unwrap();
    let b = b_coefficients(&p_051, 5.0, QuadratureOptions::default()).unwrap();
    let dev = (b.b22 - 0.5).abs();
    let limit_ok = dev <= 0.05;

    // (b) White-noise solver mode relaxes onto the stationary Gaussian.
    let model = linear_model();
    let geom =
        GridGeometry::new(Rect::new(-6.0, 6.0, -6.0, 6.0).unwrap(), 81, 81).unwrap();
    let grid = SolverGrid::new(geom, 2e-3, 50.0, vec![50.0]).unwrap();
    let source = CoefficientSource::Gwn { sigma: model.sigma };
    let rep = solve(&model.dynamics, &source, &grid, &model.init, &SolveOptions::default()).unwrap();
    let (mean, cov) = stationary_gwn(&linear_params()).unwrap();
    let gauss = Gaussian2::new(mean, cov).unwrap();
    let mut stat = PdfGrid::zeros(geom, 50.0);
    for i in 0..geom.n1 {
        for j in 0..geom.n2 {
            stat.values[[i, j]] = gauss.density(&Vector2::new(geom.y1(i), geom.y2(j)));
        }
    }
    stat.update_mass();
    let scale = 1.0 / stat.mass;
    stat.values.mapv_inplace(|v| v * scale);
    stat.update_mass();
    let m = stats::compare(&rep.pdfs[0], &stat, stats::DEFAULT_LOG_THRESHOLD).unwrap();
    let l1_ok = m.l1 <= 2e-2;

    report(
        4,
        "white-noise-limit",
        limit_ok && l1_ok,
        format!(
            "H = 0.51: |b22(5) − sigma^2/2| = {dev:.2e} (bound 0.05); \
             white-noise solve at t = 50: rel L1 = {:.2e} vs stationary Gaussian (bound 2e-2)",
            m.l1
        ),
    );
}

// ---------------------------------------------------------------------------
// 5. DLMM estimator sanity on the linear model
// ---------------------------------------------------------------------------

/// Runs the linear-model estimator with `n` samples and returns
/// (fraction of populated bins within 3 MC standard errors, max deviation).
fn dlmm_linear_deviation(n_samples: usize) -> (f64, f64) {
    let model = linear_model();
    let grid = SimGrid::new(1e-3, 1000).unwrap();
    let opts = SimOptions::new(n_samples, 1, 1000);
    let ens = run_ensemble(&model, grid, &opts).unwrap();
    let bins = BinGrid::new(Rect::new(-4.0, 4.0, -4.0, 4.0).unwrap(), 25, 25).unwrap();
    let dopts = DlmmOptions {
        smoothing_radius: 1,
        symmetrize: false,
        interpolation: Interpolation::Bilinear,
    };
    let field = estimate(&ens, bins, &dopts).unwrap();
    let r = ens.record_index_for_time(1.0).unwrap();
    let snap = &field.snapshots[r];
    let truth = b_coefficients(&linear_params(), 1.0, QuadratureOptions::default())
        .unwrap()
        .b22;

    // Independent per-bin moments of the sigma-scaled Malliavin samples give
    // the Monte-Carlo standard error of each bin mean.
    let mut count = vec![vec![0usize; 25]; 25];
    let mut mean = vec![vec![0.0f64; 25]; 25];
    let mut m2 = vec![vec![0.0f64; 25]; 25];
    for path in ens.surviving() {
        let s = &path.snapshots[r];
        if let Some((i, j)) = bins.assign(s.state.x, s.state.y) {
            let v = model.sigma[1] * s.malliavin[1].y;
            count[i][j] += 1;
            let d = v - mean[i][j];
            mean[i][j] += d / count[i][j] as f64;
            m2[i][j] += d * (v - mean[i][j]);
        }
    }

    let (mut populated, mut within, mut max_dev) = (0usize, 0usize, 0.0f64);
    for i in 0..25 {
        for j in 0..25 {
            let n = snap.counts[[i, j]] as usize;
            if n == 0 {
                continue;
            }
            populated += 1;
            let est = snap.raw[1][1][[i, j]];
            let dev = (est - truth).abs();
            max_dev = max_dev.max(dev);
            let se = if n > 1 {
                (m2[i][j] / (n as f64 - 1.0) / n as f64).sqrt()
            } else {
                0.0
            };
            // Absolute floor keeps the check well-defined when the sample
            // standard error degenerates to zero.
            if dev <= (3.0 * se).max(1e-4) {
                within += 1;
            }
        }
    }
    (within as f64 / populated as f64, max_dev)
}

#[test]
fn acceptance_5_dlmm_linear_sanity() {
    let (frac, dev_n) = dlmm_linear_deviation(2000);
    let (_, dev_2n) = dlmm_linear_deviation(4000);
    let ratio = dev_2n / dev_n;
    let agree_ok = frac >= 0.95;
    // For constant-Jacobian dynamics every per-path Malliavin sample is
    // identical, so the bin deviation is pure quadrature bias and cannot
    // shrink with the ensemble size. Implemented as stated; expected red.
    let shrink_ok = ratio <= 0.8;
    report(
        5,
        "dlmm-linear-sanity",
        agree_ok && shrink_ok,
        format!(
            "b22(t = 1): {:.1}% of populated bins within 3 MC SE (bound >= 95%); \
             max-deviation ratio N = 2000 -> 4000: {ratio:.3} (bound <= 0.8; deviation is \
             {dev_n:.2e} at both sizes — deterministic estimator bias, not sampling noise)",
            100.0 * frac
        ),
    );
}

// ---------------------------------------------------------------------------
// 6. Bistable Duffing pipeline at desk scale
// ---------------------------------------------------------------------------

#[test]
fn acceptance_6_duffing_transition_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::example("ex2", Scale::Desk).unwrap();
    cfg.outputs.directory = tmp.path().join("ex2").to_string_lossy().into_owned();
    let text = cfg.to_toml();
    let runner = Runner::new(cfg, &text, None, None);
    let rep = runner.run_pipeline().unwrap();

    let pdf8 = rep.pdfs.iter().find(|p| (p.time - 8.0).abs() < 1e-9).unwrap();
    let (mx, _) = stats::marginals(pdf8);
    let bimodal = stats::is_bimodal(&mx.densities, 0.1);
    let kurt = stats::grid_moments(pdf8).unwrap()[0].kurtosis;
    let kurt_ok = kurt < 2.0;

    let metrics: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(runner.out.join("compare/metrics.json")).unwrap(),
    )
    .unwrap();
    let row = metrics
        .as_array()
        .unwrap()
        .iter()
        .find(|r| (r["time"].as_f64().unwrap() - 8.0).abs() < 1e-9)
        .unwrap();
    let l1 = row["marginal1_l1"].as_f64().unwrap();
    let l1_ok = l1 <= 0.05;

    report(
        6,
        "duffing-transition-pipeline",
        bimodal && kurt_ok && l1_ok,
        format!(
            "at t = 8: first marginal bimodal = {bimodal}; kurtosis = {kurt:.3} (bound < 2); \
             marginal L1 vs 1e5-sample reference = {l1:.3} (bound 0.05)"
        ),
    );
}

// ---------------------------------------------------------------------------
// 7. Property suite
// ---------------------------------------------------------------------------

struct ZeroDrift;

impl DriftJacobian for ZeroDrift {
    fn drift(&self, _y: &Vector2<f64>) -> Vector2<f64> {
        Vector2::zeros()
    }
    fn jacobian(&self, _y: &Vector2<f64>) -> Matrix2<f64> {
        Matrix2::zeros()
    }
    fn name(&self) -> &str {
        "zero_drift"
    }
}

/// Max-abs solver error against the analytic law at t = 1 on an n x n grid.
fn linear_solve_error(nodes: usize) -> f64 {
    let model = linear_model();
    let p = linear_params();
    let geom =
        GridGeometry::new(Rect::new(-6.0, 6.0, -6.0, 6.0).unwrap(), nodes, nodes).unwrap();
    let grid = SolverGrid::new(geom, 1e-3, 1.0, vec![1.0]).unwrap();
    let source = CoefficientSource::AnalyticLinear(&p);
    let rep = solve(&model.dynamics, &source, &grid, &model.init, &SolveOptions::default()).unwrap();
    let exact = analytic_pdf(&p, 1.0, &geom).unwrap();
    stats::compare(&rep.pdfs[0], &exact, stats::DEFAULT_LOG_THRESHOLD)
        .unwrap()
        .max_abs
}

#[test]
fn acceptance_7_property_suite() {
    // (a) Quadrature-weight telescoping: with zero drift the flow is the
    // identity and the tracked derivative must equal sigma*H*t^{2H-1}
    // exactly (the weights sum telescopically).
    let mut tele_worst = 0.0_f64;
    for &h in &[0.6, 0.75, 0.9] {
        let model = SystemModel::new(
            Dynamics::Custom(std::sync::Arc::new(ZeroDrift)),
            [0.0, 1.0],
            [Hurst::new(h).unwrap(), Hurst::new(h).unwrap()],
            GaussianInit::isotropic(Vector2::zeros(), 0.05).unwrap(),
        )
        .unwrap();
        let grid = SimGrid::new(0.01, 1000).unwrap();
        let ens = run_ensemble(&model, grid, &SimOptions::new(1, 3, 250)).unwrap();
        for snap in &ens.paths[0].snapshots {
            if snap.step == 0 {
                continue;
            }
            let t = snap.step as f64 * 0.01;
            let expect = h * t.powf(2.0 * h - 1.0);
            let got = snap.malliavin[1].y;
            tele_worst = tele_worst.max((got - expect).abs() / expect);
        }
    }
    let tele_ok = tele_worst <= 1e-12;

    // (b) Analytic Jacobians match central finite differences for every
    // builtin.
    let init = GaussianInit::isotropic(Vector2::new(0.5, 0.5), 0.05).unwrap();
    let builtins: Vec<SystemModel> = vec![
        builtin("linear_sdof", &params(&[("k", 1.0), ("c", 0.4)]), [0.0, 1.0], [0.8, 0.8], init).unwrap(),
        builtin(
            "duffing",
            &params(&[("eta", 1.0), ("alpha", -1.0), ("beta", 1.0)]),
            [0.0, 0.6],
            [0.65, 0.65],
            init,
        )
        .unwrap(),
        builtin("vdp", &params(&[("eta", 2.0)]), [0.0, 1.0], [0.6, 0.6], init).unwrap(),
        builtin(
            "toggle",
            &params(&[("alpha1", 2.5), ("alpha2", 2.5), ("m1", 2.0), ("m2", 2.0)]),
            [0.5, 0.6],
            [0.8, 0.7],
            init,
        )
        .unwrap(),
    ];
    let mut jac_worst = 0.0_f64;
    let jac_ok = builtins.iter().all(|m| {
        let r = verify_jacobian(m, 40, 7);
        jac_worst = jac_worst.max(r.max_rel_error);
        r.pass
    });

    // (c) Uniform-kernel smoothing cannot leave the raw field's range.
    let duffing = &builtins[1];
    let ens = run_ensemble(duffing, SimGrid::new(1e-3, 500).unwrap(), &SimOptions::new(150, 11, 100))
        .unwrap();
    let field = estimate(
        &ens,
        BinGrid::new(Rect::new(-2.5, 2.5, -2.5, 2.5).unwrap(), 12, 12).unwrap(),
        &DlmmOptions {
            smoothing_radius: 1,
            symmetrize: false,
            interpolation: Interpolation::Bilinear,
        },
    )
    .unwrap();
    let mut smooth_ok = true;
    for snap in &field.snapshots {
        for k in 0..2 {
            for l in 0..2 {
                let raw = &snap.raw[k][l];
                let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
                for &v in raw.iter() {
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
                for &v in snap.smoothed[k][l].iter() {
                    if v < lo - 1e-12 || v > hi + 1e-12 {
                        smooth_ok = false;
                    }
                }
            }
        }
    }

    // (d) Bitwise seed determinism across worker-pool sizes.
    let run_with = |threads: usize| -> Ensemble {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| {
                run_ensemble(duffing, SimGrid::new(1e-3, 300).unwrap(), &SimOptions::new(64, 5, 100))
                    .unwrap()
            })
    };
    let (e1, e4) = (run_with(1), run_with(4));
    let mut threads_ok = e1.paths.len() == e4.paths.len();
    for (a, b) in e1.paths.iter().zip(&e4.paths) {
        for (sa, sb) in a.snapshots.iter().zip(&b.snapshots) {
            if sa.state != sb.state || sa.malliavin != sb.malliavin {
                threads_ok = false;
            }
        }
    }

    // (e) Grid refinement halves the spacing and must cut the transient
    // error by at least the criterion factor.
    let (coarse, fine) = (linear_solve_error(41), linear_solve_error(81));
    let ratio = coarse / fine;
    let refine_ok = ratio >= 2.0;

    report(
        7,
        "property-suite",
        tele_ok && jac_ok && smooth_ok && threads_ok && refine_ok,
        format!(
            "telescoping worst rel {tele_worst:.1e} (bound 1e-12); Jacobian FD worst rel \
             {jac_worst:.1e} over 4 builtins (bound 1e-5); smoothing within raw range: \
             {smooth_ok}; bitwise equal across 1/4 worker threads: {threads_ok}; refinement \
             factor dx 0.3 -> 0.15: {ratio:.2} (bound >= 2)"
        ),
    );
}

// ---------------------------------------------------------------------------
// 8. Toggle-switch qualitative structure at desk scale
// ---------------------------------------------------------------------------

#[test]
fn acceptance_8_toggle_asymmetric_bimodality() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::example("ex4", Scale::Desk).unwrap();
    cfg.outputs.directory = tmp.path().join("ex4").to_string_lossy().into_owned();
    let text = cfg.to_toml();
    let runner = Runner::new(cfg, &text, None, None);
    let rep = runner.run_pipeline().unwrap();

    let pdf = rep.pdfs.iter().find(|p| (p.time - 16.0).abs() < 1e-9).unwrap();
    let modes = stats::local_maxima_2d(pdf, 0.05);
    let moments = stats::grid_moments(pdf).unwrap();
    let (s1, s2) = (moments[0].skewness, moments[1].skewness);
    let pass = modes.len() >= 2 && s1 > 0.0 && s2 > 0.0;
    report(
        8,
        "toggle-asymmetric-bimodality",
        pass,
        format!(
            "joint PDF at t = 16: {} local maxima (need >= 2) at {:?}; marginal skewness \
             ({s1:.3}, {s2:.3}) (need both > 0)",
            modes.len(),
            modes
        ),
    );
}
