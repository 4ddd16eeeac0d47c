//! K-Means partitioning of the floor plan into regions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Point;

#[derive(Debug, Error, PartialEq)]
pub enum RegionError {
    #[error("need at least {needed} distinct points for {needed} regions, got {found}")]
    TooFewPoints { needed: usize, found: usize },
    #[error("invalid region config: {0}")]
    InvalidConfig(String),
    #[error("non-finite coordinate at point {0}")]
    NonFinite(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KMeansConfig {
    pub k: usize,
    pub seed: u64,
    pub iteration_cap: usize,
    /// Lloyd stops once no centroid moves further than this (meters).
    pub convergence_tol: f64,
    /// Independent k-means++ starts; the lowest final objective wins.
    pub restarts: usize,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self {
            k: 5,
            seed: 0,
            iteration_cap: 100,
            convergence_tol: 1e-6,
            restarts: 1,
        }
    }
}

impl KMeansConfig {
    pub fn validate(&self) -> Result<(), RegionError> {
        if self.k == 0 || self.iteration_cap == 0 || self.restarts == 0 {
            return Err(RegionError::InvalidConfig(
                "k, iteration cap and restarts must be positive".into(),
            ));
        }
        if !(self.convergence_tol >= 0.0) {
            return Err(RegionError::InvalidConfig(format!(
                "convergence tolerance {} must be >= 0",
                self.convergence_tol
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionModel {
    pub k: usize,
    pub centroids: Vec<Point>,
    pub seed: u64,
    pub iteration_cap: usize,
    pub convergence_tol: f64,
    /// Within-cluster sum of squares on the fitting points.
    pub inertia: f64,
    pub iterations: usize,
}

impl RegionModel {
    /// Region whose centroid is nearest; ties go to the lowest id.
    pub fn assign(&self, point: Point) -> usize {
        nearest(&self.centroids, point).0
    }

    pub fn assign_all(&self, points: &[Point]) -> Vec<usize> {
        points.iter().map(|&p| self.assign(p)).collect()
    }
}

pub fn assign_region(model: &RegionModel, point: Point) -> usize {
    model.assign(point)
}

fn sq_dist(a: Point, b: Point) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    dx * dx + dy * dy
}

fn nearest(centroids: &[Point], p: Point) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, &c) in centroids.iter().enumerate() {
        let d = sq_dist(p, c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

fn distinct_count(points: &[Point]) -> usize {
    let mut keys: Vec<(u64, u64)> = points
        .iter()
        .map(|p| ((p[0] + 0.0).to_bits(), (p[1] + 0.0).to_bits()))
        .collect();
    keys.sort_unstable();
    keys.dedup();
    keys.len()
}

fn kmeans_pp<R: Rng>(points: &[Point], k: usize, rng: &mut R) -> Vec<Point> {
    let mut centroids = vec![points[rng.random_range(0..points.len())]];
    let mut d2: Vec<f64> = points.iter().map(|&p| sq_dist(p, centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let mut target = rng.random::<f64>() * total;
        let mut pick = None;
        for (i, &w) in d2.iter().enumerate() {
            if w > 0.0 {
                pick = Some(i);
                if target < w {
                    break;
                }
                target -= w;
            }
        }
        // Enough distinct points were checked up front, so some weight is positive.
        let c = points[pick.expect("a point away from all centroids")];
        centroids.push(c);
        for (d, &p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, c));
        }
    }
    centroids
}

/// One Lloyd run from k-means++ seeding. Returns the model and the objective
/// measured after every assignment step.
fn lloyd<R: Rng>(points: &[Point], cfg: &KMeansConfig, rng: &mut R) -> (Vec<Point>, Vec<f64>, usize) {
    let k = cfg.k;
    let mut centroids = kmeans_pp(points, k, rng);
    let mut labels = vec![0usize; points.len()];
    let mut history = Vec::new();
    let mut iterations = 0;

    for _ in 0..cfg.iteration_cap {
        iterations += 1;
        let mut inertia = 0.0;
        for (l, &p) in labels.iter_mut().zip(points) {
            let (c, d) = nearest(&centroids, p);
            *l = c;
            inertia += d;
        }
        history.push(inertia);

        let mut sums = vec![[0.0f64; 2]; k];
        let mut counts = vec![0usize; k];
        for (&l, p) in labels.iter().zip(points) {
            sums[l][0] += p[0];
            sums[l][1] += p[1];
            counts[l] += 1;
        }
        let mut updated: Vec<Point> = (0..k)
            .map(|c| {
                if counts[c] > 0 {
                    [sums[c][0] / counts[c] as f64, sums[c][1] / counts[c] as f64]
                } else {
                    centroids[c]
                }
            })
            .collect();
        for c in 0..k {
            if counts[c] > 0 {
                continue;
            }
            // Reseed an empty cluster on the point worst served by the others.
            let far = (0..points.len())
                .filter(|&i| counts[labels[i]] > 1)
                .max_by(|&a, &b| {
                    let da = sq_dist(points[a], updated[labels[a]]);
                    let db = sq_dist(points[b], updated[labels[b]]);
                    da.total_cmp(&db).then(b.cmp(&a))
                });
            if let Some(i) = far {
                counts[labels[i]] -= 1;
                labels[i] = c;
                counts[c] = 1;
                updated[c] = points[i];
            }
        }
        let shift = centroids
            .iter()
            .zip(&updated)
            .map(|(a, b)| sq_dist(*a, *b).sqrt())
            .fold(0.0, f64::max);
        centroids = updated;
        if shift < cfg.convergence_tol {
            break;
        }
    }
    (centroids, history, iterations)
}

fn objective(points: &[Point], centroids: &[Point]) -> f64 {
    points.iter().map(|&p| nearest(centroids, p).1).sum()
}

/// Fits regions and also returns the objective after each Lloyd assignment
/// step of the winning restart.
pub fn kmeans_fit_traced(points: &[Point], cfg: &KMeansConfig) -> Result<(RegionModel, Vec<f64>), RegionError> {
    cfg.validate()?;
    if let Some(i) = points.iter().position(|p| !p[0].is_finite() || !p[1].is_finite()) {
        return Err(RegionError::NonFinite(i));
    }
    let distinct = distinct_count(points);
    if distinct < cfg.k {
        return Err(RegionError::TooFewPoints {
            needed: cfg.k,
            found: distinct,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best: Option<(Vec<Point>, Vec<f64>, usize, f64)> = None;
    for _ in 0..cfg.restarts {
        let (centroids, history, iterations) = lloyd(points, cfg, &mut rng);
        let inertia = objective(points, &centroids);
        if best.as_ref().is_none_or(|b| inertia < b.3) {
            best = Some((centroids, history, iterations, inertia));
        }
    }
    let (centroids, history, iterations, inertia) = best.expect("restarts >= 1");
    Ok((
        RegionModel {
            k: cfg.k,
            centroids,
            seed: cfg.seed,
            iteration_cap: cfg.iteration_cap,
            convergence_tol: cfg.convergence_tol,
            inertia,
            iterations,
        },
        history,
    ))
}

pub fn kmeans_fit_with(points: &[Point], cfg: &KMeansConfig) -> Result<RegionModel, RegionError> {
    kmeans_fit_traced(points, cfg).map(|(m, _)| m)
}

pub fn kmeans_fit(points: &[Point], k: usize, seed: u64) -> Result<RegionModel, RegionError> {
    kmeans_fit_with(
        points,
        &KMeansConfig {
            k,
            seed,
            ..KMeansConfig::default()
        },
    )
}
