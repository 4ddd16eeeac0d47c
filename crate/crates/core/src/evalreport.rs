//! Point-error metrics, coverage accounting, alpha sweeps, the
//! weighted-centroid baseline and report emission.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conformal::{
    calibrate_with_regions, nonconformity_score, radius_serde, AssignmentMode, ConformalError, SacpCalibration,
};
use crate::dataset::{is_detected, ApInventory, FingerprintSample, Point};
use crate::regions::RegionModel;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no samples to evaluate")]
    EmptyInput,
    #[error("expected {expected} truths, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid alpha grid: {0}")]
    InvalidGrid(String),
    #[error(transparent)]
    Conformal(#[from] ConformalError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

fn check_pairs(preds: &[Point], truths: &[Point]) -> Result<(), EvalError> {
    if preds.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    if preds.len() != truths.len() {
        return Err(EvalError::DimensionMismatch {
            expected: preds.len(),
            found: truths.len(),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointMetrics {
    pub count: usize,
    /// Mean of `|Δx| + |Δy|`.
    pub mae_l1: f64,
    /// Mean Euclidean error.
    pub mae_euclid: f64,
    pub rmse: f64,
    pub median: f64,
    pub p75: f64,
    pub p95: f64,
}

/// Linear interpolation between order statistics at position `q·(n−1)`.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn point_metrics(preds: &[Point], truths: &[Point]) -> Result<PointMetrics, EvalError> {
    check_pairs(preds, truths)?;
    let n = preds.len() as f64;
    let mut errors: Vec<f64> = preds.iter().zip(truths).map(|(p, t)| nonconformity_score(*p, *t)).collect();
    let mae_l1 = preds
        .iter()
        .zip(truths)
        .map(|(p, t)| (p[0] - t[0]).abs() + (p[1] - t[1]).abs())
        .sum::<f64>()
        / n;
    let mae_euclid = errors.iter().sum::<f64>() / n;
    let rmse = (errors.iter().map(|e| e * e).sum::<f64>() / n).sqrt();
    errors.sort_by(f64::total_cmp);
    Ok(PointMetrics {
        count: preds.len(),
        mae_l1,
        mae_euclid,
        rmse,
        median: percentile(&errors, 0.5),
        p75: percentile(&errors, 0.75),
        p95: percentile(&errors, 0.95),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageRow {
    pub region: usize,
    pub count: usize,
    #[serde(with = "radius_serde")]
    pub radius: f64,
    /// `None` when no test sample falls in the region.
    pub coverage: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalCoverage {
    pub count: usize,
    #[serde(with = "radius_serde")]
    pub radius: f64,
    /// Fraction covered by the single global radius.
    pub coverage: f64,
    /// Fraction covered by the per-region sets.
    pub adaptive_coverage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub alpha: f64,
    pub assignment: AssignmentMode,
    pub rows: Vec<CoverageRow>,
    pub global: GlobalCoverage,
}

/// Test-time region of each sample under `mode`.
pub fn test_regions(region_model: &RegionModel, preds: &[Point], truths: &[Point], mode: AssignmentMode) -> Vec<usize> {
    preds
        .iter()
        .zip(truths)
        .map(|(&p, &t)| region_model.assign(mode.test_point(p, t)))
        .collect()
}

/// A sample is covered iff its truth lies within the radius of its region,
/// centered on the prediction.
pub fn coverage_by_region(
    preds: &[Point],
    truths: &[Point],
    calibration: &SacpCalibration,
    mode: AssignmentMode,
) -> Result<CoverageReport, EvalError> {
    check_pairs(preds, truths)?;
    let regions = test_regions(&calibration.region_model, preds, truths, mode);
    let k = calibration.regions.len();
    let mut counts = vec![0usize; k];
    let mut hits = vec![0usize; k];
    let mut global_hits = 0;
    for ((p, t), &r) in preds.iter().zip(truths).zip(&regions) {
        let d = nonconformity_score(*p, *t);
        counts[r] += 1;
        if d <= calibration.radius(r) {
            hits[r] += 1;
        }
        if d <= calibration.global_radius() {
            global_hits += 1;
        }
    }
    let n = preds.len() as f64;
    let rows = (0..k)
        .map(|r| CoverageRow {
            region: r,
            count: counts[r],
            radius: calibration.radius(r),
            coverage: (counts[r] > 0).then(|| hits[r] as f64 / counts[r] as f64),
        })
        .collect();
    Ok(CoverageReport {
        alpha: calibration.alpha,
        assignment: mode,
        rows,
        global: GlobalCoverage {
            count: preds.len(),
            radius: calibration.global_radius(),
            coverage: global_hits as f64 / n,
            adaptive_coverage: hits.iter().sum::<usize>() as f64 / n,
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub alpha: f64,
    pub regions: Vec<CoverageRow>,
    pub global: GlobalCoverage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub assignment: AssignmentMode,
    pub points: Vec<SweepPoint>,
}

impl SweepResult {
    pub fn alphas(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.alpha).collect()
    }

    /// True when every region's radius, and the global one, shrinks (weakly)
    /// as alpha grows.
    pub fn radii_monotone(&self) -> bool {
        self.points.windows(2).all(|w| {
            w[0].global.radius >= w[1].global.radius
                && w[0].regions.iter().zip(&w[1].regions).all(|(a, b)| a.radius >= b.radius)
        })
    }
}

pub fn validate_grid(grid: &[f64]) -> Result<(), EvalError> {
    if grid.is_empty() {
        return Err(EvalError::InvalidGrid("empty".into()));
    }
    if let Some(a) = grid.iter().find(|a| !(**a > 0.0 && **a < 1.0)) {
        return Err(EvalError::InvalidGrid(format!("{a} outside (0, 1)")));
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(EvalError::InvalidGrid("values must be strictly increasing".into()));
    }
    Ok(())
}

/// Recalibrates the radii at every alpha against one region model and
/// records the resulting test coverage.
pub fn alpha_sweep(
    cal_preds: &[Point],
    cal_truths: &[Point],
    test_preds: &[Point],
    test_truths: &[Point],
    grid: &[f64],
    region_model: &RegionModel,
    mode: AssignmentMode,
) -> Result<SweepResult, EvalError> {
    validate_grid(grid)?;
    check_pairs(test_preds, test_truths)?;
    let mut points = Vec::with_capacity(grid.len());
    for &alpha in grid {
        let cal = calibrate_with_regions(cal_preds, cal_truths, alpha, region_model, mode)?;
        let cov = coverage_by_region(test_preds, test_truths, &cal, mode)?;
        points.push(SweepPoint {
            alpha,
            regions: cov.rows,
            global: cov.global,
        });
    }
    Ok(SweepResult {
        assignment: mode,
        points,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    /// Reference power; APs heard close to it get the largest weight.
    pub reference_dbm: f64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self { reference_dbm: -30.0 }
    }
}

/// Average of detected AP positions weighted by `1 / (|rssi − ref| + 1)`;
/// the inventory centroid when nothing was detected.
pub fn weighted_centroid_baseline(sample: &FingerprintSample, inventory: &ApInventory, cfg: &BaselineConfig) -> Point {
    let mut acc = [0.0, 0.0];
    let mut total = 0.0;
    for (&v, pos) in sample.rssi.iter().zip(inventory.positions()) {
        if !is_detected(v) {
            continue;
        }
        let w = 1.0 / ((v - cfg.reference_dbm).abs() + 1.0);
        acc[0] += w * pos[0];
        acc[1] += w * pos[1];
        total += w;
    }
    if total > 0.0 {
        [acc[0] / total, acc[1] / total]
    } else {
        inventory.centroid()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorMapRow {
    pub x: f64,
    pub y: f64,
    pub error_m: f64,
    pub region: usize,
}

/// Per-sample errors at the true locations, tagged with the test-time region.
pub fn error_map(
    preds: &[Point],
    truths: &[Point],
    region_model: &RegionModel,
    mode: AssignmentMode,
) -> Result<Vec<ErrorMapRow>, EvalError> {
    check_pairs(preds, truths)?;
    let regions = test_regions(region_model, preds, truths, mode);
    Ok(preds
        .iter()
        .zip(truths)
        .zip(regions)
        .map(|((p, t), region)| ErrorMapRow {
            x: t[0],
            y: t[1],
            error_m: nonconformity_score(*p, *t),
            region,
        })
        .collect())
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub point_metrics: Option<PointMetrics>,
    pub baseline_metrics: Option<PointMetrics>,
    pub coverage: Option<CoverageReport>,
    pub sweep: Option<SweepResult>,
    #[serde(skip)]
    pub error_map: Vec<ErrorMapRow>,
}

impl Report {
    fn is_empty(&self) -> bool {
        self.point_metrics.is_none()
            && self.baseline_metrics.is_none()
            && self.coverage.is_none()
            && self.sweep.is_none()
            && self.error_map.is_empty()
    }
}

fn fmt_m(v: f64) -> String {
    if v.is_infinite() {
        "inf".into()
    } else {
        format!("{v:.3}")
    }
}

fn fmt_pct(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |c| format!("{:.1}%", 100.0 * c))
}

pub fn render_text(report: &Report) -> String {
    let mut s = String::new();
    s.push_str("# errors in meters; percentiles interpolate linearly between order statistics\n");
    s.push_str("# MAE(L1) = mean |dx|+|dy|; MAE(L2) and the rest use Euclidean error\n");
    let methods = [("graph model", report.point_metrics), ("weighted centroid", report.baseline_metrics)];
    if methods.iter().any(|(_, m)| m.is_some()) {
        let _ = writeln!(s, "\nLocalization error");
        let _ = writeln!(
            s,
            "{:<18} {:>7} {:>9} {:>9} {:>9} {:>9} {:>9} {:>9}",
            "method", "n", "MAE(L1)", "MAE(L2)", "RMSE", "median", "p75", "p95"
        );
        for (name, m) in methods {
            if let Some(m) = m {
                let _ = writeln!(
                    s,
                    "{:<18} {:>7} {:>9.3} {:>9.3} {:>9.3} {:>9.3} {:>9.3} {:>9.3}",
                    name, m.count, m.mae_l1, m.mae_euclid, m.rmse, m.median, m.p75, m.p95
                );
            }
        }
    }
    if let Some(c) = &report.coverage {
        let _ = writeln!(
            s,
            "\nCoverage at alpha = {} (target {:.1}%, assignment {:?})",
            c.alpha,
            100.0 * (1.0 - c.alpha),
            c.assignment
        );
        let _ = writeln!(s, "{:<10} {:>7} {:>10} {:>9}", "region", "n", "radius", "coverage");
        for r in &c.rows {
            let _ = writeln!(
                s,
                "{:<10} {:>7} {:>10} {:>9}",
                format!("R{}", r.region),
                r.count,
                fmt_m(r.radius),
                fmt_pct(r.coverage)
            );
        }
        let g = &c.global;
        let _ = writeln!(
            s,
            "{:<10} {:>7} {:>10} {:>9}",
            "global",
            g.count,
            fmt_m(g.radius),
            fmt_pct(Some(g.coverage))
        );
        let _ = writeln!(s, "{:<10} {:>7} {:>10} {:>9}", "adaptive", g.count, "-", fmt_pct(Some(g.adaptive_coverage)));
    }
    if let Some(sw) = &report.sweep {
        let _ = writeln!(s, "\nAlpha sweep (assignment {:?})", sw.assignment);
        let k = sw.points.first().map_or(0, |p| p.regions.len());
        let mut header = format!("{:<7} {:>10} {:>9} {:>9}", "alpha", "global r", "global", "adaptive");
        for r in 0..k {
            let _ = write!(header, " {:>9}", format!("r{r}"));
        }
        let _ = writeln!(s, "{header}");
        for p in &sw.points {
            let _ = write!(
                s,
                "{:<7} {:>10} {:>9} {:>9}",
                p.alpha,
                fmt_m(p.global.radius),
                fmt_pct(Some(p.global.coverage)),
                fmt_pct(Some(p.global.adaptive_coverage))
            );
            for r in &p.regions {
                let _ = write!(s, " {:>9}", fmt_m(r.radius));
            }
            s.push('\n');
        }
    }
    s
}

fn write_file(path: &Path, text: &str) -> Result<(), EvalError> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(text.as_bytes())?;
    Ok(())
}

/// Writes `report.json`, `report.txt` and whichever figure CSVs the report
/// has data for. Returns the paths written.
pub fn emit_report(report: &Report, dir: &Path) -> Result<Vec<std::path::PathBuf>, EvalError> {
    if report.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();

    let mut json = serde_json::to_string_pretty(report).map_err(|e| std::io::Error::other(e.to_string()))?;
    json.push('\n');
    let p = dir.join("report.json");
    write_file(&p, &json)?;
    written.push(p);

    let p = dir.join("report.txt");
    write_file(&p, &render_text(report))?;
    written.push(p);

    if !report.error_map.is_empty() {
        let mut csv = String::from("x,y,error_m,region\n");
        for r in &report.error_map {
            let _ = writeln!(csv, "{},{},{},{}", r.x, r.y, r.error_m, r.region);
        }
        let p = dir.join("fig_error_map.csv");
        write_file(&p, &csv)?;
        written.push(p);
    }

    if let Some(sw) = &report.sweep {
        let mut cov = String::from("alpha,region,coverage\n");
        let mut rad = String::from("alpha,region,radius\n");
        for pt in &sw.points {
            for r in &pt.regions {
                let c = r.coverage.map_or_else(String::new, |c| c.to_string());
                let _ = writeln!(cov, "{},{},{}", pt.alpha, r.region, c);
                let _ = writeln!(rad, "{},{},{}", pt.alpha, r.region, r.radius);
            }
            let _ = writeln!(cov, "{},global,{}", pt.alpha, pt.global.coverage);
            let _ = writeln!(cov, "{},adaptive,{}", pt.alpha, pt.global.adaptive_coverage);
            let _ = writeln!(rad, "{},global,{}", pt.alpha, pt.global.radius);
        }
        let p = dir.join("fig_alpha_coverage.csv");
        write_file(&p, &cov)?;
        written.push(p);
        let p = dir.join("fig_alpha_radius.csv");
        write_file(&p, &rad)?;
        written.push(p);
    }
    Ok(written)
}
