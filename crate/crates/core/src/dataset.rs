//! Fingerprint ingestion, train/calibration splitting, feature scaling and a
//! log-distance path-loss generator for synthetic environments.
//!
//! Fingerprint CSV layout: one column per AP id holding RSSI in dBm (the
//! value `100` marks an AP that was not heard), followed by `x` and `y` in
//! meters. Columns are matched by header name, so their order in the file
//! does not matter. Any other column is ignored.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Stored RSSI value meaning "not detected".
pub const SENTINEL: f64 = 100.0;
/// Default lower bound of the RSSI scaling window (dBm).
pub const RSSI_FLOOR_DBM: f64 = -100.0;
/// Default upper bound of the RSSI scaling window (dBm).
pub const RSSI_CEILING_DBM: f64 = -30.0;

/// A 2D position in meters.
pub type Point = [f64; 2];

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error in {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("malformed row {row}: {reason}")]
    MalformedRow { row: usize, reason: String },
    #[error("file has no data rows")]
    EmptyFile,
    #[error("empty input")]
    EmptyInput,
    #[error("invalid AP inventory: {0}")]
    InvalidInventory(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, DatasetError>;

/// Returns true when a stored RSSI value is an actual measurement.
#[inline]
pub fn is_detected(rssi: f64) -> bool {
    rssi != SENTINEL
}

/// The fixed access-point deployment: ids and planar coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApInventory {
    ids: Vec<String>,
    positions: Vec<Point>,
}

impl ApInventory {
    pub fn new(ids: Vec<String>, positions: Vec<Point>) -> Result<Self> {
        if ids.is_empty() {
            return Err(DatasetError::InvalidInventory("no access points".into()));
        }
        if ids.len() != positions.len() {
            return Err(DatasetError::InvalidInventory(format!(
                "{} ids but {} positions",
                ids.len(),
                positions.len()
            )));
        }
        let mut seen = HashSet::new();
        for id in &ids {
            if !seen.insert(id.as_str()) {
                return Err(DatasetError::InvalidInventory(format!("duplicate AP id `{id}`")));
            }
        }
        if let Some(i) = positions.iter().position(|p| !p[0].is_finite() || !p[1].is_finite()) {
            return Err(DatasetError::InvalidInventory(format!(
                "non-finite coordinates for `{}`",
                ids[i]
            )));
        }
        Ok(Self { ids, positions })
    }

    /// Number of access points (`m`).
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn positions(&self) -> &[Point] {
        &self.positions
    }

    /// Arithmetic mean of all AP positions.
    pub fn centroid(&self) -> Point {
        let n = self.positions.len() as f64;
        let (sx, sy) = self
            .positions
            .iter()
            .fold((0.0, 0.0), |(sx, sy), p| (sx + p[0], sy + p[1]));
        [sx / n, sy / n]
    }

    /// Returns a copy with APs reordered so that new index `i` holds old index `order[i]`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        Self {
            ids: order.iter().map(|&i| self.ids[i].clone()).collect(),
            positions: order.iter().map(|&i| self.positions[i]).collect(),
        }
    }
}

/// One Wi-Fi scan with its ground-truth location.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FingerprintSample {
    pub rssi: Vec<f64>,
    pub truth: Point,
    pub ref_point_id: Option<i64>,
}

impl FingerprintSample {
    pub fn new(rssi: Vec<f64>, truth: Point) -> Self {
        Self {
            rssi,
            truth,
            ref_point_id: None,
        }
    }

    pub fn detected_count(&self) -> usize {
        self.rssi.iter().filter(|&&v| is_detected(v)).count()
    }
}

fn validate_rssi(v: f64) -> std::result::Result<(), String> {
    if v == SENTINEL || (v.is_finite() && v <= 0.0) {
        Ok(())
    } else {
        Err(format!("RSSI value {v} is neither the sentinel 100 nor a finite value <= 0 dBm"))
    }
}

/// Train / calibration / test partition of a dataset.
#[derive(Debug, Clone)]
pub struct DatasetSplit {
    pub train: Vec<FingerprintSample>,
    pub calibration: Vec<FingerprintSample>,
    pub test: Vec<FingerprintSample>,
    pub seed: u64,
}

impl DatasetSplit {
    /// Splits `pool` into train/calibration; `test` is taken as-is.
    pub fn new(
        pool: &[FingerprintSample],
        test: Vec<FingerprintSample>,
        fraction: f64,
        seed: u64,
    ) -> Result<Self> {
        let (train, calibration) = split_train_calibration(pool, fraction, seed)?;
        Ok(Self {
            train,
            calibration,
            test,
            seed,
        })
    }
}

fn io_err(path: &Path, source: std::io::Error) -> DatasetError {
    DatasetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path, source: csv::Error) -> DatasetError {
    if source.is_io_error() {
        if let csv::ErrorKind::Io(e) = source.into_kind() {
            return io_err(path, e);
        }
        unreachable!()
    }
    DatasetError::Csv {
        path: path.to_path_buf(),
        source,
    }
}

fn open_reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    let file = std::fs::File::open(path).map_err(|e| io_err(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn parse_cell(row: usize, column: &str, cell: &str) -> Result<f64> {
    cell.parse::<f64>().map_err(|_| DatasetError::MalformedRow {
        row,
        reason: format!("column `{column}`: cannot parse `{cell}` as a number"),
    })
}

/// Reads an AP inventory CSV with columns `ap_id,x,y`.
pub fn load_inventory(path: &Path) -> Result<ApInventory> {
    let mut reader = open_reader(path)?;
    let headers = reader.headers().map_err(|e| csv_err(path, e))?.clone();
    if headers.is_empty() {
        return Err(DatasetError::EmptyFile);
    }
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| DatasetError::MissingColumn(name.to_string()))
    };
    let (id_col, x_col, y_col) = (find("ap_id")?, find("x")?, find("y")?);

    let mut ids = Vec::new();
    let mut positions = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| csv_err(path, e))?;
        if record.len() != headers.len() {
            return Err(DatasetError::MalformedRow {
                row,
                reason: format!("expected {} fields, found {}", headers.len(), record.len()),
            });
        }
        ids.push(record[id_col].to_string());
        positions.push([
            parse_cell(row, "x", &record[x_col])?,
            parse_cell(row, "y", &record[y_col])?,
        ]);
    }
    if ids.is_empty() {
        return Err(DatasetError::EmptyFile);
    }
    ApInventory::new(ids, positions)
}

/// Writes an AP inventory CSV (`ap_id,x,y`).
pub fn write_inventory(path: &Path, inventory: &ApInventory) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    writer
        .write_record(["ap_id", "x", "y"])
        .map_err(|e| csv_err(path, e))?;
    for (id, p) in inventory.ids.iter().zip(&inventory.positions) {
        writer
            .write_record([id.clone(), p[0].to_string(), p[1].to_string()])
            .map_err(|e| csv_err(path, e))?;
    }
    writer.flush().map_err(|e| io_err(path, e))
}

const X_COLUMNS: [&str; 2] = ["x", "ECoord"];
const Y_COLUMNS: [&str; 2] = ["y", "NCoord"];
const REF_POINT_COLUMN: &str = "ref_point_id";

/// Loads a fingerprint CSV whose RSSI columns are named after the inventory's AP ids.
pub fn load_fingerprints(path: &Path, inventory: &ApInventory) -> Result<Vec<FingerprintSample>> {
    let mut reader = open_reader(path)?;
    let headers = reader.headers().map_err(|e| csv_err(path, e))?.clone();
    if headers.is_empty() {
        return Err(DatasetError::EmptyFile);
    }
    let position = |name: &str| headers.iter().position(|h| h == name);

    let rssi_cols = inventory
        .ids
        .iter()
        .map(|id| position(id).ok_or_else(|| DatasetError::MissingColumn(id.clone())))
        .collect::<Result<Vec<_>>>()?;
    let x_col = X_COLUMNS
        .iter()
        .find_map(|c| position(c))
        .ok_or_else(|| DatasetError::MissingColumn("x".into()))?;
    let y_col = Y_COLUMNS
        .iter()
        .find_map(|c| position(c))
        .ok_or_else(|| DatasetError::MissingColumn("y".into()))?;
    let ref_col = position(REF_POINT_COLUMN);

    let used: HashSet<usize> = rssi_cols
        .iter()
        .copied()
        .chain([x_col, y_col])
        .chain(ref_col)
        .collect();
    let ignored: Vec<&str> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| !used.contains(i))
        .map(|(_, h)| h)
        .collect();
    if !ignored.is_empty() {
        log::warn!(
            "{}: ignoring {} extra column(s): {}",
            path.display(),
            ignored.len(),
            ignored.join(", ")
        );
    }

    let mut samples = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| csv_err(path, e))?;
        if record.len() != headers.len() {
            return Err(DatasetError::MalformedRow {
                row,
                reason: format!("expected {} fields, found {}", headers.len(), record.len()),
            });
        }
        let mut rssi = Vec::with_capacity(rssi_cols.len());
        for (&col, id) in rssi_cols.iter().zip(&inventory.ids) {
            let v = parse_cell(row, id, &record[col])?;
            validate_rssi(v).map_err(|reason| DatasetError::MalformedRow { row, reason })?;
            rssi.push(v);
        }
        let truth = [
            parse_cell(row, "x", &record[x_col])?,
            parse_cell(row, "y", &record[y_col])?,
        ];
        if !truth[0].is_finite() || !truth[1].is_finite() {
            return Err(DatasetError::MalformedRow {
                row,
                reason: "non-finite coordinate".into(),
            });
        }
        let ref_point_id = match ref_col {
            Some(c) if !record[c].is_empty() => {
                Some(record[c].parse::<i64>().map_err(|_| DatasetError::MalformedRow {
                    row,
                    reason: format!("column `{REF_POINT_COLUMN}`: `{}` is not an integer", &record[c]),
                })?)
            }
            _ => None,
        };
        samples.push(FingerprintSample {
            rssi,
            truth,
            ref_point_id,
        });
    }
    if samples.is_empty() {
        return Err(DatasetError::EmptyFile);
    }
    Ok(samples)
}

/// Writes samples in the fingerprint CSV layout read by [`load_fingerprints`].
pub fn write_fingerprints(
    path: &Path,
    inventory: &ApInventory,
    samples: &[FingerprintSample],
) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    let with_ref = samples.iter().any(|s| s.ref_point_id.is_some());
    let mut header: Vec<String> = inventory.ids.clone();
    header.push("x".into());
    header.push("y".into());
    if with_ref {
        header.push(REF_POINT_COLUMN.into());
    }
    writer.write_record(&header).map_err(|e| csv_err(path, e))?;
    for s in samples {
        if s.rssi.len() != inventory.len() {
            return Err(DatasetError::InvalidConfig(format!(
                "sample has {} RSSI values, inventory has {} APs",
                s.rssi.len(),
                inventory.len()
            )));
        }
        let mut row: Vec<String> = s.rssi.iter().map(|v| v.to_string()).collect();
        row.push(s.truth[0].to_string());
        row.push(s.truth[1].to_string());
        if with_ref {
            row.push(s.ref_point_id.map(|r| r.to_string()).unwrap_or_default());
        }
        writer.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    writer.flush().map_err(|e| io_err(path, e))
}

/// Seeded shuffle, then the first `round(fraction * n)` samples go to training.
pub fn split_train_calibration(
    samples: &[FingerprintSample],
    fraction: f64,
    seed: u64,
) -> Result<(Vec<FingerprintSample>, Vec<FingerprintSample>)> {
    if samples.is_empty() {
        return Err(DatasetError::EmptyInput);
    }
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(DatasetError::InvalidConfig(format!(
            "train fraction must lie in (0, 1), got {fraction}"
        )));
    }
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = (fraction * samples.len() as f64).round() as usize;
    let train = order[..n_train].iter().map(|&i| samples[i].clone()).collect();
    let calibration = order[n_train..].iter().map(|&i| samples[i].clone()).collect();
    Ok((train, calibration))
}

/// Maps RSSI into `[0, 1]`: sentinel to 0, detected values linearly between
/// `floor` and `ceiling` with clamping.
pub fn normalize_rssi(rssi: &[f64], floor: f64, ceiling: f64) -> Vec<f64> {
    assert!(floor < ceiling, "RSSI floor {floor} must be below ceiling {ceiling}");
    let span = ceiling - floor;
    rssi.iter()
        .map(|&v| {
            if is_detected(v) {
                ((v - floor) / span).clamp(0.0, 1.0)
            } else {
                0.0
            }
        })
        .collect()
}

/// Per-axis affine map between meters and the inventory's unit bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoordNormalizer {
    pub min: Point,
    pub span: Point,
}

impl CoordNormalizer {
    pub fn from_inventory(inventory: &ApInventory) -> Self {
        let mut min = [f64::INFINITY; 2];
        let mut max = [f64::NEG_INFINITY; 2];
        for p in &inventory.positions {
            for a in 0..2 {
                min[a] = min[a].min(p[a]);
                max[a] = max[a].max(p[a]);
            }
        }
        let mut span = [max[0] - min[0], max[1] - min[1]];
        for s in &mut span {
            if *s <= 0.0 {
                *s = 1.0;
            }
        }
        Self { min, span }
    }

    pub fn identity() -> Self {
        Self {
            min: [0.0, 0.0],
            span: [1.0, 1.0],
        }
    }

    pub fn normalize(&self, p: Point) -> Point {
        [
            (p[0] - self.min[0]) / self.span[0],
            (p[1] - self.min[1]) / self.span[1],
        ]
    }

    pub fn denormalize(&self, p: Point) -> Point {
        [
            p[0] * self.span[0] + self.min[0],
            p[1] * self.span[1] + self.min[1],
        ]
    }
}

/// Parameters of the log-distance path-loss environment generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub ap_count: usize,
    pub width_m: f64,
    pub height_m: f64,
    pub path_loss_exponent: f64,
    /// Received power at the 1 m reference distance.
    pub p0_dbm: f64,
    pub noise_std_db: f64,
    pub detection_floor_dbm: f64,
    pub samples: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            ap_count: 20,
            width_m: 100.0,
            height_m: 40.0,
            path_loss_exponent: 3.0,
            p0_dbm: -40.0,
            noise_std_db: 4.0,
            detection_floor_dbm: -95.0,
            samples: 1000,
            seed: 7,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(DatasetError::InvalidConfig(msg.to_string()));
        if self.ap_count < 3 {
            return bad("synthetic environment needs at least 3 APs");
        }
        if !(self.width_m > 0.0 && self.height_m > 0.0) {
            return bad("area dimensions must be positive");
        }
        if !(self.noise_std_db >= 0.0 && self.noise_std_db.is_finite()) {
            return bad("noise standard deviation must be finite and >= 0");
        }
        if !self.p0_dbm.is_finite() || !self.path_loss_exponent.is_finite() {
            return bad("path-loss parameters must be finite");
        }
        Ok(())
    }
}

/// Noise-free log-distance RSSI. Distances below the 1 m reference are clamped to it.
pub fn path_loss_rssi(p0_dbm: f64, exponent: f64, distance_m: f64) -> f64 {
    p0_dbm - 10.0 * exponent * distance_m.max(1.0).log10()
}

/// Draws APs uniformly over the area, then `cfg.samples` scans.
pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<(ApInventory, Vec<FingerprintSample>)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let ids = (1..=cfg.ap_count).map(|i| format!("AP{i:03}")).collect();
    let positions = (0..cfg.ap_count)
        .map(|_| {
            [
                rng.random::<f64>() * cfg.width_m,
                rng.random::<f64>() * cfg.height_m,
            ]
        })
        .collect();
    let inventory = ApInventory::new(ids, positions)?;
    let samples = sample_scans(&inventory, cfg, cfg.samples, &mut rng);
    Ok((inventory, samples))
}

/// Draws `count` additional scans over an existing inventory with its own seed.
pub fn generate_scans(
    inventory: &ApInventory,
    cfg: &SyntheticConfig,
    count: usize,
    seed: u64,
) -> Result<Vec<FingerprintSample>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(sample_scans(inventory, cfg, count, &mut rng))
}

fn sample_scans(
    inventory: &ApInventory,
    cfg: &SyntheticConfig,
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<FingerprintSample> {
    let noise = Normal::new(0.0, cfg.noise_std_db).expect("validated noise std");
    (0..count)
        .map(|_| {
            let truth = [
                rng.random::<f64>() * cfg.width_m,
                rng.random::<f64>() * cfg.height_m,
            ];
            let rssi = inventory
                .positions
                .iter()
                .map(|ap| {
                    let d = (ap[0] - truth[0]).hypot(ap[1] - truth[1]);
                    let mut v = path_loss_rssi(cfg.p0_dbm, cfg.path_loss_exponent, d);
                    if cfg.noise_std_db > 0.0 {
                        v += noise.sample(rng);
                    }
                    if v < cfg.detection_floor_dbm {
                        SENTINEL
                    } else {
                        v.min(0.0)
                    }
                })
                .collect();
            FingerprintSample::new(rssi, truth)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Write;

    fn inventory3() -> ApInventory {
        ApInventory::new(
            vec!["a".into(), "b".into(), "c".into()],
            vec![[0.0, 0.0], [10.0, 0.0], [30.0, 5.0]],
        )
        .unwrap()
    }

    fn write_file(dir: &tempfile::TempDir, name: &str, body: &str) -> PathBuf {
        let path = dir.path().join(name);
        let mut f = std::fs::File::create(&path).unwrap();
        f.write_all(body.as_bytes()).unwrap();
        path
    }

    #[test]
    fn inventory_rejects_duplicates_and_nan() {
        let dup = ApInventory::new(vec!["a".into(), "a".into()], vec![[0.0, 0.0], [1.0, 1.0]]);
        assert!(matches!(dup, Err(DatasetError::InvalidInventory(_))));
        let nan = ApInventory::new(vec!["a".into()], vec![[f64::NAN, 0.0]]);
        assert!(matches!(nan, Err(DatasetError::InvalidInventory(_))));
    }

    #[test]
    fn loads_rows_and_keeps_sentinel() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(&dir, "fp.csv", "a,b,c,x,y,FloorID\n-60,100,-80,1.5,2.5,1\n100,100,100,0,0,1\n");
        let samples = load_fingerprints(&path, &inventory3()).unwrap();
        assert_eq!(samples.len(), 2);
        assert_eq!(samples[0].rssi, vec![-60.0, 100.0, -80.0]);
        assert_eq!(samples[0].truth, [1.5, 2.5]);
        assert_eq!(samples[1].detected_count(), 0);
    }

    #[test]
    fn missing_ap_column_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(&dir, "fp.csv", "a,b,x,y\n-60,-70,0,0\n");
        match load_fingerprints(&path, &inventory3()) {
            Err(DatasetError::MissingColumn(c)) => assert_eq!(c, "c"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_cell_reports_row() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(&dir, "fp.csv", "a,b,c,x,y\n-60,-70,-80,0,0\n-60,oops,-80,0,0\n");
        match load_fingerprints(&path, &inventory3()) {
            Err(DatasetError::MalformedRow { row, .. }) => assert_eq!(row, 2),
            other => panic!("unexpected {other:?}"),
        }
        let path = write_file(&dir, "pos.csv", "a,b,c,x,y\n-60,5,-80,0,0\n");
        assert!(matches!(
            load_fingerprints(&path, &inventory3()),
            Err(DatasetError::MalformedRow { row: 1, .. })
        ));
    }

    #[test]
    fn empty_files() {
        let dir = tempfile::tempdir().unwrap();
        let header_only = write_file(&dir, "h.csv", "a,b,c,x,y\n");
        assert!(matches!(load_fingerprints(&header_only, &inventory3()), Err(DatasetError::EmptyFile)));
        let blank = write_file(&dir, "b.csv", "");
        assert!(matches!(load_fingerprints(&blank, &inventory3()), Err(DatasetError::EmptyFile)));
    }

    #[test]
    fn inventory_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("aps.csv");
        let inv = inventory3();
        write_inventory(&path, &inv).unwrap();
        assert_eq!(load_inventory(&path).unwrap(), inv);
    }

    #[test]
    fn split_sizes_and_determinism() {
        let samples: Vec<_> = (0..11_370)
            .map(|i| FingerprintSample::new(vec![-50.0], [i as f64, 0.0]))
            .collect();
        let (train, cal) = split_train_calibration(&samples, 0.8, 3).unwrap();
        assert_eq!((train.len(), cal.len()), (9_096, 2_274));

        let ten = &samples[..10];
        let a = split_train_calibration(ten, 0.8, 11).unwrap();
        let b = split_train_calibration(ten, 0.8, 11).unwrap();
        assert_eq!(a, b);
        let c = split_train_calibration(ten, 0.8, 12).unwrap();
        assert_eq!((c.0.len(), c.1.len()), (8, 2));

        assert!(matches!(split_train_calibration(&[], 0.8, 1), Err(DatasetError::EmptyInput)));
        assert!(split_train_calibration(ten, 1.0, 1).is_err());
    }

    #[test]
    fn split_is_deterministic_over_many_seeds() {
        let samples: Vec<_> = (0..50)
            .map(|i| FingerprintSample::new(vec![-50.0], [i as f64, 0.0]))
            .collect();
        for seed in 0..100u64 {
            let a = split_train_calibration(&samples, 0.8, seed).unwrap();
            let b = split_train_calibration(&samples, 0.8, seed).unwrap();
            assert_eq!(a, b);
            let mut xs: Vec<f64> = a.0.iter().chain(&a.1).map(|s| s.truth[0]).collect();
            xs.sort_by(f64::total_cmp);
            assert_eq!(xs, (0..50).map(|i| i as f64).collect::<Vec<_>>());
        }
    }

    #[test]
    fn normalize_examples() {
        let out = normalize_rssi(&[-75.0, SENTINEL, -20.0, -120.0], -100.0, -30.0);
        assert!((out[0] - 25.0 / 70.0).abs() < 1e-15);
        assert_eq!(out[1], 0.0);
        assert_eq!(out[2], 1.0);
        assert_eq!(out[3], 0.0);
    }

    #[test]
    fn path_loss_examples() {
        assert!((path_loss_rssi(-40.0, 2.0, 10.0) - -60.0).abs() < 1e-12);
        assert_eq!(path_loss_rssi(-40.0, 2.0, 1.0), -40.0);
    }

    #[test]
    fn detection_floor_becomes_sentinel() {
        // One AP at the origin, scans forced far enough that RSSI < floor.
        let inv = ApInventory::new(
            vec!["a".into(), "b".into(), "c".into()],
            vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
        )
        .unwrap();
        let cfg = SyntheticConfig {
            ap_count: 3,
            width_m: 1000.0,
            height_m: 1000.0,
            path_loss_exponent: 2.0,
            p0_dbm: -40.0,
            noise_std_db: 0.0,
            detection_floor_dbm: -90.0,
            samples: 0,
            seed: 0,
        };
        for s in generate_scans(&inv, &cfg, 200, 4).unwrap() {
            for (ap, &v) in inv.positions().iter().zip(&s.rssi) {
                let d = (ap[0] - s.truth[0]).hypot(ap[1] - s.truth[1]);
                let expected = -40.0 - 20.0 * d.max(1.0).log10();
                if expected < -90.0 {
                    assert_eq!(v, SENTINEL);
                } else {
                    assert!((v - expected).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn noiseless_generator_matches_closed_form() {
        let cfg = SyntheticConfig {
            noise_std_db: 0.0,
            detection_floor_dbm: -1000.0,
            samples: 300,
            ..SyntheticConfig::default()
        };
        let (inv, samples) = generate_synthetic(&cfg).unwrap();
        for s in &samples {
            for (ap, &v) in inv.positions().iter().zip(&s.rssi) {
                let d = ((ap[0] - s.truth[0]).powi(2) + (ap[1] - s.truth[1]).powi(2)).sqrt();
                let expected = cfg.p0_dbm - 10.0 * cfg.path_loss_exponent * d.max(1.0).log10();
                assert!((v - expected).abs() < 1e-9, "{v} vs {expected}");
            }
        }
        let (inv2, samples2) = generate_synthetic(&cfg).unwrap();
        assert_eq!(inv, inv2);
        assert_eq!(samples, samples2);
    }

    #[test]
    fn synthetic_config_validation() {
        let mut cfg = SyntheticConfig::default();
        cfg.ap_count = 2;
        assert!(generate_synthetic(&cfg).is_err());
        cfg.ap_count = 5;
        cfg.noise_std_db = -1.0;
        assert!(generate_synthetic(&cfg).is_err());
    }

    #[test]
    fn normalizer_round_trip() {
        let n = CoordNormalizer::from_inventory(&inventory3());
        assert_eq!(n.normalize([30.0, 5.0]), [1.0, 1.0]);
        let p = [12.3, 4.5];
        let q = n.denormalize(n.normalize(p));
        assert!((p[0] - q[0]).abs() < 1e-12 && (p[1] - q[1]).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn normalize_is_monotone_and_bounded(a in -150.0f64..0.0, b in -150.0f64..0.0) {
            let out = normalize_rssi(&[a, b], RSSI_FLOOR_DBM, RSSI_CEILING_DBM);
            prop_assert!(out.iter().all(|v| (0.0..=1.0).contains(v)));
            if a <= b {
                prop_assert!(out[0] <= out[1]);
            }
        }

        #[test]
        fn csv_round_trip(
            rows in proptest::collection::vec(
                (proptest::collection::vec(prop_oneof![Just(SENTINEL), -120.0f64..0.0], 3),
                 -1e4f64..1e4, -1e4f64..1e4),
                1..20)
        ) {
            let inv = inventory3();
            let samples: Vec<_> = rows
                .into_iter()
                .map(|(rssi, x, y)| FingerprintSample::new(rssi, [x, y]))
                .collect();
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("rt.csv");
            write_fingerprints(&path, &inv, &samples).unwrap();
            let back = load_fingerprints(&path, &inv).unwrap();
            prop_assert_eq!(back, samples);
        }
    }
}
