//! Split-conformal calibration of per-region confidence radii.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Point;
use crate::graphbuild::LocGraph;
use crate::gtmodel::{GtModel, ModelError};
use crate::regions::{kmeans_fit_with, KMeansConfig, RegionError, RegionModel};

#[derive(Debug, Error)]
pub enum ConformalError {
    #[error("calibration set is empty")]
    EmptyCalibration,
    #[error("alpha {0} must lie strictly between 0 and 1")]
    InvalidAlpha(f64),
    #[error("{what}: expected {expected} entries, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("non-finite coordinate at calibration sample {0}")]
    NonFinite(usize),
    #[error(transparent)]
    Region(#[from] RegionError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("malformed calibration file: {0}")]
    Format(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Serializes radii as JSON numbers, with `+∞` written as the string `"inf"`.
pub mod radius_serde {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Finite(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(r: &f64, s: S) -> Result<S::Ok, S::Error> {
        if r.is_infinite() && *r > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*r)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Finite(v) => Ok(v),
            Repr::Text(t) if t == "inf" => Ok(f64::INFINITY),
            Repr::Text(t) => Err(serde::de::Error::custom(format!("invalid radius `{t}`"))),
        }
    }
}

/// Euclidean distance between a prediction and the true location.
pub fn nonconformity_score(pred: Point, truth: Point) -> f64 {
    (pred[0] - truth[0]).hypot(pred[1] - truth[1])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConformalRank {
    /// 1-indexed rank into the ascending scores.
    Finite(usize),
    /// Too few scores to certify the level; the radius is unbounded.
    Infinite,
}

/// `⌈(1−α)(n+1)⌉`, or `Infinite` when that exceeds `n`.
pub fn conformal_rank(n: usize, alpha: f64) -> ConformalRank {
    let target = (1.0 - alpha) * (n as f64 + 1.0);
    // Absorb representation error such as 0.9 * 20 = 18.000000000000004.
    let p = (target - 1e-9 * target.max(1.0)).ceil().max(1.0) as usize;
    if p > n {
        ConformalRank::Infinite
    } else {
        ConformalRank::Finite(p)
    }
}

/// The conformal quantile of `scores` (any order) at level `alpha`.
pub fn conformal_radius(scores: &[f64], alpha: f64) -> f64 {
    match conformal_rank(scores.len(), alpha) {
        ConformalRank::Infinite => f64::INFINITY,
        ConformalRank::Finite(p) => {
            let mut sorted = scores.to_vec();
            sorted.sort_by(f64::total_cmp);
            sorted[p - 1]
        }
    }
}

fn check_alpha(alpha: f64) -> Result<(), ConformalError> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(ConformalError::InvalidAlpha(alpha))
    }
}

/// Which location decides the region of a calibration or test sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssignmentMode {
    /// Calibration samples by true location, test samples by prediction.
    #[default]
    Mixed,
    /// Both by true location.
    GroundTruth,
    /// Both by prediction.
    Predicted,
}

impl AssignmentMode {
    pub fn calibration_point(self, pred: Point, truth: Point) -> Point {
        match self {
            AssignmentMode::Mixed | AssignmentMode::GroundTruth => truth,
            AssignmentMode::Predicted => pred,
        }
    }

    pub fn test_point(self, pred: Point, truth: Point) -> Point {
        match self {
            AssignmentMode::GroundTruth => truth,
            AssignmentMode::Mixed | AssignmentMode::Predicted => pred,
        }
    }
}

impl std::str::FromStr for AssignmentMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mixed" => Ok(Self::Mixed),
            "ground_truth" | "ground-truth" => Ok(Self::GroundTruth),
            "predicted" => Ok(Self::Predicted),
            other => Err(format!(
                "unknown assignment mode `{other}` (expected mixed, ground_truth or predicted)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSet {
    pub scores: Vec<f64>,
    pub region_ids: Vec<usize>,
}

impl ScoreSet {
    pub fn new(scores: Vec<f64>, region_ids: Vec<usize>) -> Result<Self, ConformalError> {
        if scores.len() != region_ids.len() {
            return Err(ConformalError::DimensionMismatch {
                what: "region ids",
                expected: scores.len(),
                found: region_ids.len(),
            });
        }
        if let Some(i) = scores.iter().position(|s| !(*s >= 0.0)) {
            return Err(ConformalError::NonFinite(i));
        }
        Ok(Self { scores, region_ids })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn region_scores(&self, region: usize) -> Vec<f64> {
        self.scores
            .iter()
            .zip(&self.region_ids)
            .filter(|(_, &r)| r == region)
            .map(|(&s, _)| s)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionRadius {
    pub count: usize,
    #[serde(with = "radius_serde")]
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SacpCalibration {
    pub alpha: f64,
    pub assignment: AssignmentMode,
    pub region_model: RegionModel,
    pub regions: Vec<RegionRadius>,
    pub global: RegionRadius,
}

impl SacpCalibration {
    pub fn radius(&self, region: usize) -> f64 {
        self.regions[region].radius
    }

    pub fn radii(&self) -> Vec<f64> {
        self.regions.iter().map(|r| r.radius).collect()
    }

    pub fn counts(&self) -> Vec<usize> {
        self.regions.iter().map(|r| r.count).collect()
    }

    pub fn global_radius(&self) -> f64 {
        self.global.radius
    }

    /// Prediction set around an already computed point estimate.
    pub fn set_for(&self, center: Point) -> PredictionSet {
        let region = self.region_model.assign(center);
        PredictionSet {
            center,
            region,
            radius: self.radius(region),
        }
    }
}

fn scores_of(preds: &[Point], truths: &[Point]) -> Result<Vec<f64>, ConformalError> {
    if preds.is_empty() {
        return Err(ConformalError::EmptyCalibration);
    }
    if preds.len() != truths.len() {
        return Err(ConformalError::DimensionMismatch {
            what: "calibration truths",
            expected: preds.len(),
            found: truths.len(),
        });
    }
    preds
        .iter()
        .zip(truths)
        .enumerate()
        .map(|(i, (p, t))| {
            let s = nonconformity_score(*p, *t);
            if s.is_finite() {
                Ok(s)
            } else {
                Err(ConformalError::NonFinite(i))
            }
        })
        .collect()
}

/// Calibrates radii against an already fitted region model.
pub fn calibrate_with_regions(
    preds: &[Point],
    truths: &[Point],
    alpha: f64,
    region_model: &RegionModel,
    mode: AssignmentMode,
) -> Result<SacpCalibration, ConformalError> {
    check_alpha(alpha)?;
    let scores = scores_of(preds, truths)?;
    let ids = preds
        .iter()
        .zip(truths)
        .map(|(&p, &t)| region_model.assign(mode.calibration_point(p, t)))
        .collect();
    let set = ScoreSet::new(scores, ids)?;
    let regions = (0..region_model.k)
        .map(|r| {
            let s = set.region_scores(r);
            let radius = conformal_radius(&s, alpha);
            if radius.is_infinite() {
                log::warn!(
                    "region {r} has only {} calibration scores; radius is unbounded at alpha {alpha}",
                    s.len()
                );
            }
            RegionRadius { count: s.len(), radius }
        })
        .collect();
    let global = RegionRadius {
        count: set.len(),
        radius: conformal_radius(&set.scores, alpha),
    };
    Ok(SacpCalibration {
        alpha,
        assignment: mode,
        region_model: region_model.clone(),
        regions,
        global,
    })
}

/// Fits the region model on the calibration locations selected by `mode`,
/// then calibrates one radius per region.
pub fn calibrate(
    preds: &[Point],
    truths: &[Point],
    alpha: f64,
    regions: &KMeansConfig,
    mode: AssignmentMode,
) -> Result<SacpCalibration, ConformalError> {
    check_alpha(alpha)?;
    scores_of(preds, truths)?;
    let points: Vec<Point> = preds
        .iter()
        .zip(truths)
        .map(|(&p, &t)| mode.calibration_point(p, t))
        .collect();
    let model = kmeans_fit_with(&points, regions)?;
    calibrate_with_regions(preds, truths, alpha, &model, mode)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionSet {
    pub center: Point,
    pub region: usize,
    #[serde(with = "radius_serde")]
    pub radius: f64,
}

impl PredictionSet {
    pub fn contains(&self, point: Point) -> bool {
        nonconformity_score(self.center, point) <= self.radius
    }
}

/// Point estimate plus the radius of the region the estimate falls in.
pub fn predict_set(
    model: &GtModel,
    calibration: &SacpCalibration,
    graph: &LocGraph,
) -> Result<PredictionSet, ConformalError> {
    let center = model.predict(graph)?;
    Ok(calibration.set_for(center))
}

pub fn save_calibration(path: &Path, calibration: &SacpCalibration) -> Result<(), ConformalError> {
    let mut text =
        serde_json::to_string_pretty(calibration).map_err(|e| ConformalError::Format(e.to_string()))?;
    text.push('\n');
    let mut f = std::fs::File::create(path)?;
    f.write_all(text.as_bytes())?;
    Ok(())
}

pub fn load_calibration(path: &Path) -> Result<SacpCalibration, ConformalError> {
    let text = std::fs::read_to_string(path)?;
    let cal: SacpCalibration = serde_json::from_str(&text).map_err(|e| ConformalError::Format(e.to_string()))?;
    check_alpha(cal.alpha)?;
    if cal.regions.len() != cal.region_model.k || cal.region_model.centroids.len() != cal.region_model.k {
        return Err(ConformalError::Format(format!(
            "{} radii and {} centroids for k = {}",
            cal.regions.len(),
            cal.region_model.centroids.len(),
            cal.region_model.k
        )));
    }
    Ok(cal)
}
