//! On-disk artifact formats.
//!
//! Everything here is deterministic: floats are printed with 17 significant
//! digits (`{:.16e}`, exact f64 round-trip), rows are emitted in a fixed
//! order, and no timestamps or environment-dependent strings enter the
//! files — re-running a stage with the same config overwrites outputs with
//! identical bytes.
//!
//! Formats:
//! * **PdfGrid CSV** — `#`-prefixed header rows (domain, spacings, time,
//!   mass), then `n2` rows × `n1` comma-separated density values (row `j`
//!   holds `p(y1(0..n1), y2(j))`).
//! * **PdfGrid binary** — 64-byte header (8-byte magic `MFPKGRID`, u32
//!   version, u32 `n1`, u32 `n2`, u32 reserved, then `lo1 hi1 lo2 hi2 time`
//!   as little-endian f64), followed by `n1·n2` little-endian f64 values in
//!   row-major `[i][j]` order.
//! * **gnuplot matrix** — `splot 'f' nonuniform matrix`: first row
//!   `n1 y1(0) … y1(n1−1)`, then one row per `j`: `y2(j) p(·, j)`.
//! * **ensemble snapshots** — one CSV per recorded time with columns
//!   `path,y1,y2,d11,d12,d21,d22` (`dkl` = component `l` of the channel-`k`
//!   memory integral), plus `ensemble.json` metadata.
//! * **coefficient fields** — one CSV per snapshot with columns
//!   `i,j,y1_center,y2_center,count,` raw `b11,b12,b21,b22`, smoothed
//!   `b11,b12,b21,b22`, plus `coefficients.json` metadata.
//! * **Gaussian summary CSV** — `t,mu1,mu2,s11,s12,s22`.

use crate::dlmm::{zero_stack, BinGrid, CoeffSnapshot, CoefficientField, Interpolation};
use crate::error::{Error, Result};
use crate::geom::{GridGeometry, Rect};
use crate::linear::GaussianSummary;
use crate::simulate::{Ensemble, PathRecord, Snapshot};
use crate::solver::PdfGrid;
use crate::stats::{MarginalPdf, MomentSeries};
use nalgebra::Vector2;
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::{BufWriter, Read as _, Write as _};
use std::path::{Path, PathBuf};

/// Identifier of the build that produced an artifact, captured at compile
/// time.
pub fn git_describe() -> &'static str {
    env!("MEMFPK_GIT_DESCRIBE")
}

/// Canonical float formatting: 17 significant digits, exact round-trip.
pub fn fmt_f(x: f64) -> String {
    format!("{x:.16e}")
}

/// FNV-1a 64-bit hash, used for config fingerprints in manifests.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf29ce484222325_u64;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Serializes any value as pretty JSON (stable field order from the struct
/// definition) with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).map_err(Error::from)?;
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| missing(path, e))?;
    serde_json::from_str(&text).map_err(Error::from)
}

fn missing(path: &Path, e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::NotFound {
        Error::MissingInput(format!("{} not found", path.display()))
    } else {
        Error::Io(e)
    }
}

// ---------------------------------------------------------------------------
// PdfGrid

pub fn write_pdf_csv(path: &Path, p: &PdfGrid) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    let r = p.geom.rect;
    writeln!(
        w,
        "# domain {} {} {} {}",
        fmt_f(r.lo1),
        fmt_f(r.hi1),
        fmt_f(r.lo2),
        fmt_f(r.hi2)
    )?;
    writeln!(w, "# spacing {} {}", fmt_f(p.geom.d1()), fmt_f(p.geom.d2()))?;
    writeln!(w, "# time {}", fmt_f(p.time))?;
    writeln!(w, "# mass {}", fmt_f(p.mass))?;
    for j in 0..p.geom.n2 {
        let row: Vec<String> = (0..p.geom.n1).map(|i| fmt_f(p.values[[i, j]])).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_pdf_csv(path: &Path) -> Result<PdfGrid> {
    let text = fs::read_to_string(path).map_err(|e| missing(path, e))?;
    let bad = |what: &str| Error::MissingInput(format!("{}: bad {what}", path.display()));
    let mut domain = None;
    let mut time = None;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for line in text.lines() {
        if let Some(rest) = line.strip_prefix('#') {
            let mut it = rest.split_whitespace();
            match it.next() {
                Some("domain") => {
                    let vals: Vec<f64> =
                        it.map(str::parse).collect::<std::result::Result<_, _>>()
                            .map_err(|_| bad("domain header"))?;
                    if vals.len() != 4 {
                        return Err(bad("domain header"));
                    }
                    domain = Some((vals[0], vals[1], vals[2], vals[3]));
                }
                Some("time") => {
                    time = Some(
                        it.next()
                            .and_then(|s| s.parse().ok())
                            .ok_or_else(|| bad("time header"))?,
                    );
                }
                _ => {}
            }
        } else if !line.trim().is_empty() {
            let row: Vec<f64> = line
                .split(',')
                .map(|s| s.trim().parse())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| bad("value row"))?;
            rows.push(row);
        }
    }
    let (lo1, hi1, lo2, hi2) = domain.ok_or_else(|| bad("missing domain header"))?;
    let time = time.ok_or_else(|| bad("missing time header"))?;
    let n2 = rows.len();
    let n1 = rows.first().map(Vec::len).unwrap_or(0);
    if n2 < 3 || n1 < 3 || rows.iter().any(|r| r.len() != n1) {
        return Err(bad("value table shape"));
    }
    let geom = GridGeometry::new(Rect::new(lo1, hi1, lo2, hi2)?, n1, n2)?;
    let mut p = PdfGrid::zeros(geom, time);
    for (j, row) in rows.iter().enumerate() {
        for (i, &v) in row.iter().enumerate() {
            p.values[[i, j]] = v;
        }
    }
    p.update_mass();
    Ok(p)
}

const PDF_MAGIC: &[u8; 8] = b"MFPKGRID";
const PDF_VERSION: u32 = 1;

pub fn write_pdf_binary(path: &Path, p: &PdfGrid) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    w.write_all(PDF_MAGIC)?;
    w.write_all(&PDF_VERSION.to_le_bytes())?;
    w.write_all(&(p.geom.n1 as u32).to_le_bytes())?;
    w.write_all(&(p.geom.n2 as u32).to_le_bytes())?;
    w.write_all(&0u32.to_le_bytes())?;
    let r = p.geom.rect;
    for v in [r.lo1, r.hi1, r.lo2, r.hi2, p.time] {
        w.write_all(&v.to_le_bytes())?;
    }
    for i in 0..p.geom.n1 {
        for j in 0..p.geom.n2 {
            w.write_all(&p.values[[i, j]].to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_pdf_binary(path: &Path) -> Result<PdfGrid> {
    let mut f = fs::File::open(path).map_err(|e| missing(path, e))?;
    let mut buf = Vec::new();
    f.read_to_end(&mut buf)?;
    let bad = |what: &str| Error::MissingInput(format!("{}: bad {what}", path.display()));
    if buf.len() < 64 || &buf[0..8] != PDF_MAGIC {
        return Err(bad("magic"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(buf[o..o + 4].try_into().unwrap());
    let f64_at = |o: usize| f64::from_le_bytes(buf[o..o + 8].try_into().unwrap());
    if u32_at(8) != PDF_VERSION {
        return Err(bad("version"));
    }
    let n1 = u32_at(12) as usize;
    let n2 = u32_at(16) as usize;
    let (lo1, hi1, lo2, hi2, time) =
        (f64_at(24), f64_at(32), f64_at(40), f64_at(48), f64_at(56));
    if buf.len() != 64 + 8 * n1 * n2 {
        return Err(bad("payload size"));
    }
    let geom = GridGeometry::new(Rect::new(lo1, hi1, lo2, hi2)?, n1, n2)?;
    let mut p = PdfGrid::zeros(geom, time);
    let mut o = 64;
    for i in 0..n1 {
        for j in 0..n2 {
            p.values[[i, j]] = f64_at(o);
            o += 8;
        }
    }
    p.update_mass();
    Ok(p)
}

/// gnuplot `nonuniform matrix` layout for `splot`.
pub fn write_pdf_gnuplot(path: &Path, p: &PdfGrid) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    let mut head: Vec<String> = vec![p.geom.n1.to_string()];
    head.extend((0..p.geom.n1).map(|i| fmt_f(p.geom.y1(i))));
    writeln!(w, "{}", head.join(" "))?;
    for j in 0..p.geom.n2 {
        let mut row: Vec<String> = vec![fmt_f(p.geom.y2(j))];
        row.extend((0..p.geom.n1).map(|i| fmt_f(p.values[[i, j]])));
        writeln!(w, "{}", row.join(" "))?;
    }
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Marginals, moments, Gaussian summary

pub fn write_marginal_csv(path: &Path, m: &MarginalPdf) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "# axis {} time {}", m.axis, fmt_f(m.time))?;
    writeln!(w, "center,density")?;
    for (c, d) in m.centers.iter().zip(&m.densities) {
        writeln!(w, "{},{}", fmt_f(*c), fmt_f(*d))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_moments_csv(path: &Path, s: &MomentSeries) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "t,mean1,std1,skew1,kurt1,mean2,std2,skew2,kurt2")?;
    for (t, row) in s.times.iter().zip(&s.moments) {
        let cols: Vec<String> = std::iter::once(fmt_f(*t))
            .chain(row.iter().flat_map(|m| {
                [fmt_f(m.mean), fmt_f(m.std), fmt_f(m.skewness), fmt_f(m.kurtosis)]
            }))
            .collect();
        writeln!(w, "{}", cols.join(","))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_gaussian_summary_csv(path: &Path, s: &GaussianSummary) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "t,mu1,mu2,s11,s12,s22")?;
    for idx in 0..s.times.len() {
        let mu = s.means[idx];
        let cov = s.covariances[idx];
        writeln!(
            w,
            "{},{},{},{},{},{}",
            fmt_f(s.times[idx]),
            fmt_f(mu.x),
            fmt_f(mu.y),
            fmt_f(cov[(0, 0)]),
            fmt_f(cov[(0, 1)]),
            fmt_f(cov[(1, 1)])
        )?;
    }
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Ensemble snapshots

/// Metadata stored beside the per-snapshot tables. Only surviving paths are
/// written; divergent paths are counted here.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnsembleMeta {
    pub dt: f64,
    pub record_steps: Vec<usize>,
    pub n_paths_written: usize,
    pub n_divergent: usize,
    pub sigma: [f64; 2],
    pub hurst: [f64; 2],
    pub seed: u64,
    /// Scheme identifiers: integrator, noise generator, memory-integral
    /// discretization.
    pub scheme: SchemeIds,
    pub git_describe: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SchemeIds {
    pub integrator: String,
    pub noise: String,
    pub malliavin: String,
}

fn snapshot_file(dir: &Path, r: usize) -> PathBuf {
    dir.join(format!("snapshot_{r:04}.csv"))
}

/// Writes `ensemble.json` + one `snapshot_XXXX.csv` per recorded time into
/// `dir` (created if needed). Returns the snapshot file paths.
pub fn write_ensemble(
    dir: &Path,
    ensemble: &Ensemble,
    seed: u64,
    scheme: &SchemeIds,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let survivors: Vec<&PathRecord> = ensemble.surviving().collect();
    let meta = EnsembleMeta {
        dt: ensemble.dt,
        record_steps: ensemble.record_steps.clone(),
        n_paths_written: survivors.len(),
        n_divergent: ensemble.n_divergent,
        sigma: ensemble.sigma,
        hurst: ensemble.hurst,
        seed,
        scheme: scheme.clone(),
        git_describe: git_describe().to_string(),
    };
    write_json(&dir.join("ensemble.json"), &meta)?;
    let mut files = Vec::with_capacity(ensemble.n_records());
    for (r, &step) in ensemble.record_steps.iter().enumerate() {
        let path = snapshot_file(dir, r);
        let mut w = BufWriter::new(fs::File::create(&path)?);
        writeln!(w, "# step {} time {}", step, fmt_f(step as f64 * ensemble.dt))?;
        writeln!(w, "path,y1,y2,d11,d12,d21,d22")?;
        for (pid, rec) in survivors.iter().enumerate() {
            let s = &rec.snapshots[r];
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                pid,
                fmt_f(s.state.x),
                fmt_f(s.state.y),
                fmt_f(s.malliavin[0].x),
                fmt_f(s.malliavin[0].y),
                fmt_f(s.malliavin[1].x),
                fmt_f(s.malliavin[1].y)
            )?;
        }
        w.flush()?;
        files.push(path);
    }
    Ok(files)
}

/// Reads an ensemble written by [`write_ensemble`]. Divergent paths were
/// not written, so the result contains surviving paths only (with the
/// original divergent count in `n_divergent`).
pub fn read_ensemble(dir: &Path) -> Result<Ensemble> {
    let meta: EnsembleMeta = read_json(&dir.join("ensemble.json"))?;
    let n_records = meta.record_steps.len();
    let mut paths: Vec<PathRecord> = (0..meta.n_paths_written)
        .map(|_| PathRecord { snapshots: Vec::with_capacity(n_records), divergent_at: None })
        .collect();
    for (r, &step) in meta.record_steps.iter().enumerate() {
        let path = snapshot_file(dir, r);
        let text = fs::read_to_string(&path).map_err(|e| missing(&path, e))?;
        let bad = |what: &str| Error::MissingInput(format!("{}: bad {what}", path.display()));
        let mut n_rows = 0usize;
        for line in text.lines() {
            if line.starts_with('#') || line.starts_with("path,") || line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 7 {
                return Err(bad("column count"));
            }
            let pid: usize = cols[0].parse().map_err(|_| bad("path id"))?;
            if pid >= paths.len() {
                return Err(bad("path id range"));
            }
            let v: Vec<f64> = cols[1..]
                .iter()
                .map(|s| s.parse())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| bad("float field"))?;
            paths[pid].snapshots.push(Snapshot {
                step,
                state: Vector2::new(v[0], v[1]),
                malliavin: [Vector2::new(v[2], v[3]), Vector2::new(v[4], v[5])],
            });
            n_rows += 1;
        }
        if n_rows != meta.n_paths_written {
            return Err(bad("row count"));
        }
    }
    Ok(Ensemble {
        dt: meta.dt,
        record_steps: meta.record_steps,
        paths,
        n_divergent: meta.n_divergent,
        sigma: meta.sigma,
        hurst: meta.hurst,
    })
}

// ---------------------------------------------------------------------------
// Coefficient fields

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoefficientMeta {
    pub lo1: f64,
    pub hi1: f64,
    pub lo2: f64,
    pub hi2: f64,
    pub n1: usize,
    pub n2: usize,
    pub smoothing_radius: usize,
    pub interpolation: String,
    pub channels: Vec<usize>,
    pub n_snapshots: usize,
    pub seed: u64,
    pub git_describe: String,
}

fn coeff_file(dir: &Path, r: usize) -> PathBuf {
    dir.join(format!("coeffs_{r:04}.csv"))
}

fn interpolation_name(i: Interpolation) -> &'static str {
    match i {
        Interpolation::Bilinear => "bilinear",
        Interpolation::CatmullRom => "catmull-rom",
    }
}

fn interpolation_from(name: &str) -> Result<Interpolation> {
    match name {
        "bilinear" => Ok(Interpolation::Bilinear),
        "catmull-rom" => Ok(Interpolation::CatmullRom),
        other => Err(Error::Config(format!("unknown interpolation '{other}'"))),
    }
}

/// Writes `coefficients.json` + one `coeffs_XXXX.csv` per snapshot.
pub fn write_coefficients(dir: &Path, field: &CoefficientField, seed: u64) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let g = field.grid;
    let meta = CoefficientMeta {
        lo1: g.rect.lo1,
        hi1: g.rect.hi1,
        lo2: g.rect.lo2,
        hi2: g.rect.hi2,
        n1: g.n1,
        n2: g.n2,
        smoothing_radius: field.smoothing_radius,
        interpolation: interpolation_name(field.interpolation).to_string(),
        channels: field.channels.clone(),
        n_snapshots: field.snapshots.len(),
        seed,
        git_describe: git_describe().to_string(),
    };
    write_json(&dir.join("coefficients.json"), &meta)?;
    let mut files = Vec::with_capacity(field.snapshots.len());
    for (r, snap) in field.snapshots.iter().enumerate() {
        let path = coeff_file(dir, r);
        let mut w = BufWriter::new(fs::File::create(&path)?);
        writeln!(
            w,
            "# time {} n_samples {} n_out_of_domain {}",
            fmt_f(snap.time),
            snap.n_samples,
            snap.n_out_of_domain
        )?;
        writeln!(
            w,
            "i,j,y1_center,y2_center,count,b11,b12,b21,b22,b11_s,b12_s,b21_s,b22_s"
        )?;
        for i in 0..g.n1 {
            for j in 0..g.n2 {
                let mut cols = vec![
                    i.to_string(),
                    j.to_string(),
                    fmt_f(g.center1(i)),
                    fmt_f(g.center2(j)),
                    snap.counts[[i, j]].to_string(),
                ];
                for stack in [&snap.raw, &snap.smoothed] {
                    for k in 0..2 {
                        for l in 0..2 {
                            cols.push(fmt_f(stack[k][l][[i, j]]));
                        }
                    }
                }
                writeln!(w, "{}", cols.join(","))?;
            }
        }
        w.flush()?;
        files.push(path);
    }
    Ok(files)
}

/// Reads a coefficient field written by [`write_coefficients`].
pub fn read_coefficients(dir: &Path) -> Result<CoefficientField> {
    let meta: CoefficientMeta = read_json(&dir.join("coefficients.json"))?;
    let grid = BinGrid::new(Rect::new(meta.lo1, meta.hi1, meta.lo2, meta.hi2)?, meta.n1, meta.n2)?;
    let mut snapshots = Vec::with_capacity(meta.n_snapshots);
    for r in 0..meta.n_snapshots {
        let path = coeff_file(dir, r);
        let text = fs::read_to_string(&path).map_err(|e| missing(&path, e))?;
        let bad = |what: &str| Error::MissingInput(format!("{}: bad {what}", path.display()));
        let mut time = None;
        let mut n_samples = 0usize;
        let mut n_out = 0usize;
        let mut raw = zero_stack(meta.n1, meta.n2);
        let mut smoothed = zero_stack(meta.n1, meta.n2);
        let mut counts: Array2<u32> = Array2::zeros((meta.n1, meta.n2));
        let mut n_rows = 0usize;
        for line in text.lines() {
            if let Some(rest) = line.strip_prefix('#') {
                let toks: Vec<&str> = rest.split_whitespace().collect();
                for pair in toks.chunks(2) {
                    match pair {
                        ["time", v] => time = v.parse().ok(),
                        ["n_samples", v] => n_samples = v.parse().map_err(|_| bad("n_samples"))?,
                        ["n_out_of_domain", v] => {
                            n_out = v.parse().map_err(|_| bad("n_out_of_domain"))?
                        }
                        _ => {}
                    }
                }
                continue;
            }
            if line.starts_with("i,") || line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 13 {
                return Err(bad("column count"));
            }
            let i: usize = cols[0].parse().map_err(|_| bad("bin index"))?;
            let j: usize = cols[1].parse().map_err(|_| bad("bin index"))?;
            if i >= meta.n1 || j >= meta.n2 {
                return Err(bad("bin index range"));
            }
            counts[[i, j]] = cols[4].parse().map_err(|_| bad("count"))?;
            let vals: Vec<f64> = cols[5..]
                .iter()
                .map(|s| s.parse())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| bad("float field"))?;
            for (idx, stack) in [&mut raw, &mut smoothed].into_iter().enumerate() {
                for k in 0..2 {
                    for l in 0..2 {
                        stack[k][l][[i, j]] = vals[idx * 4 + 2 * k + l];
                    }
                }
            }
            n_rows += 1;
        }
        if n_rows != meta.n1 * meta.n2 {
            return Err(bad("row count"));
        }
        snapshots.push(CoeffSnapshot {
            time: time.ok_or_else(|| bad("missing time header"))?,
            raw,
            smoothed,
            counts,
            n_out_of_domain: n_out,
            n_samples,
        });
    }
    Ok(CoefficientField {
        grid,
        channels: meta.channels,
        smoothing_radius: meta.smoothing_radius,
        interpolation: interpolation_from(&meta.interpolation)?,
        snapshots,
    })
}

/// Dumps raw increments one value per line (debug helper for the noise
/// generator).
pub fn write_increments_csv(path: &Path, increments: &[f64]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for &x in increments {
        writeln!(w, "{}", fmt_f(x))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Dynamics, GaussianInit, Hurst, SystemModel};
    use crate::simulate::{run_ensemble, SimGrid, SimOptions};
    use approx::assert_relative_eq;

    fn sample_pdf() -> PdfGrid {
        let geom =
            GridGeometry::new(Rect::new(-1.0, 1.0, -2.0, 2.0).unwrap(), 5, 7).unwrap();
        let mut p = PdfGrid::zeros(geom, 0.75);
        for i in 0..5 {
            for j in 0..7 {
                p.values[[i, j]] = (i as f64 + 1.0) * 0.3 + (j as f64) * 0.01 + 1e-7;
            }
        }
        p.update_mass();
        p
    }

    #[test]
    fn pdf_csv_round_trips_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        let p = sample_pdf();
        write_pdf_csv(&path, &p).unwrap();
        let q = read_pdf_csv(&path).unwrap();
        assert_eq!(q.geom.n1, p.geom.n1);
        assert_eq!(q.geom.n2, p.geom.n2);
        assert_eq!(q.time, p.time);
        assert_eq!(q.values, p.values);
        assert_relative_eq!(q.mass, p.mass, epsilon = 1e-15);
        // n2 data rows of n1 columns.
        let text = std::fs::read_to_string(&path).unwrap();
        let data_rows: Vec<&str> =
            text.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(data_rows.len(), 7);
        assert_eq!(data_rows[0].split(',').count(), 5);
    }

    #[test]
    fn pdf_binary_round_trips_with_a_64_byte_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.bin");
        let p = sample_pdf();
        write_pdf_binary(&path, &p).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(bytes.len(), 64 + 8 * 5 * 7);
        assert_eq!(&bytes[0..8], b"MFPKGRID");
        let q = read_pdf_binary(&path).unwrap();
        assert_eq!(q.values, p.values);
        assert_eq!(q.time, p.time);
        assert_eq!(q.geom.rect.hi2, 2.0);
    }

    #[test]
    fn gnuplot_matrix_has_the_documented_shape() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.dat");
        let p = sample_pdf();
        write_pdf_gnuplot(&path, &p).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 1 + 7);
        assert_eq!(lines[0].split_whitespace().count(), 1 + 5);
        assert_eq!(lines[1].split_whitespace().count(), 1 + 5);
        assert_eq!(lines[0].split_whitespace().next().unwrap(), "5");
    }

    #[test]
    fn writes_are_idempotent_byte_for_byte() {
        let dir = tempfile::tempdir().unwrap();
        let p = sample_pdf();
        let a = dir.path().join("a.csv");
        write_pdf_csv(&a, &p).unwrap();
        let first = std::fs::read(&a).unwrap();
        write_pdf_csv(&a, &p).unwrap();
        assert_eq!(first, std::fs::read(&a).unwrap());
    }

    #[test]
    fn fnv1a64_matches_reference_vectors() {
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }

    fn small_ensemble() -> (Ensemble, u64) {
        let model = SystemModel::new(
            Dynamics::LinearSdof { k: 1.0, c: 0.4 },
            [0.0, 1.0],
            [Hurst::new(0.8).unwrap(), Hurst::new(0.8).unwrap()],
            GaussianInit::isotropic(Vector2::new(-1.0, -1.0), 0.15).unwrap(),
        )
        .unwrap();
        let grid = SimGrid::new(0.01, 50).unwrap();
        let opts = SimOptions::new(20, 9, 25);
        (run_ensemble(&model, grid, &opts).unwrap(), 9)
    }

    #[test]
    fn ensemble_round_trips_through_snapshot_tables() {
        let (ens, seed) = small_ensemble();
        let dir = tempfile::tempdir().unwrap();
        let scheme = SchemeIds {
            integrator: "heun-additive".into(),
            noise: "davies-harte".into(),
            malliavin: "product-integration-midpoint".into(),
        };
        let files = write_ensemble(dir.path(), &ens, seed, &scheme).unwrap();
        assert_eq!(files.len(), ens.n_records());
        let back = read_ensemble(dir.path()).unwrap();
        assert_eq!(back.record_steps, ens.record_steps);
        assert_eq!(back.paths.len(), ens.paths.len());
        assert_eq!(back.sigma, ens.sigma);
        assert_eq!(back.hurst, ens.hurst);
        for (a, b) in back.paths.iter().zip(&ens.paths) {
            for (sa, sb) in a.snapshots.iter().zip(&b.snapshots) {
                assert_eq!(sa.step, sb.step);
                assert_eq!(sa.state, sb.state);
                assert_eq!(sa.malliavin, sb.malliavin);
            }
        }
    }

    #[test]
    fn coefficient_field_round_trips() {
        use crate::dlmm::{estimate, DlmmOptions};
        let (ens, seed) = small_ensemble();
        let bins = BinGrid::new(Rect::new(-3.0, 3.0, -3.0, 3.0).unwrap(), 8, 8).unwrap();
        let field = estimate(&ens, bins, &DlmmOptions::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_coefficients(dir.path(), &field, seed).unwrap();
        let back = read_coefficients(dir.path()).unwrap();
        assert_eq!(back.snapshots.len(), field.snapshots.len());
        assert_eq!(back.smoothing_radius, field.smoothing_radius);
        assert_eq!(back.channels, field.channels);
        for (a, b) in back.snapshots.iter().zip(&field.snapshots) {
            assert_eq!(a.time, b.time);
            assert_eq!(a.counts, b.counts);
            assert_eq!(a.n_samples, b.n_samples);
            assert_eq!(a.n_out_of_domain, b.n_out_of_domain);
            for k in 0..2 {
                for l in 0..2 {
                    assert_eq!(a.raw[k][l], b.raw[k][l]);
                    assert_eq!(a.smoothed[k][l], b.smoothed[k][l]);
                }
            }
        }
    }

    #[test]
    fn missing_inputs_surface_as_missing_input_errors() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            read_ensemble(&dir.path().join("nope")),
            Err(Error::MissingInput(_))
        ));
        assert!(matches!(
            read_pdf_csv(&dir.path().join("nope.csv")),
            Err(Error::MissingInput(_))
        ));
        assert!(matches!(
            read_coefficients(&dir.path().join("nope")),
            Err(Error::MissingInput(_))
        ));
    }

    #[test]
    fn float_formatting_round_trips_f64_exactly() {
        for &x in &[
            0.0,
            -0.0,
            1.0 / 3.0,
            std::f64::consts::PI,
            1e-300,
            -2.2250738585072014e-308,
            0.1 + 0.2,
        ] {
            let s = fmt_f(x);
            let y: f64 = s.parse().unwrap();
            assert_eq!(x.to_bits(), y.to_bits(), "{s}");
        }
    }
}
