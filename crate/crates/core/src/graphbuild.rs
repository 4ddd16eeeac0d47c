//! Per-scan localization graphs.
//!
//! Node `j < m` is access point `j`; node `m` is the user. `A[i][j] = 1`
//! means node `i` aggregates messages from node `j`. AP–AP links are
//! symmetric and depend only on the inventory. The user row links to every
//! AP that was detected at or above the RSSI threshold; the user column is
//! always empty, so APs never aggregate from the user.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{
    is_detected, normalize_rssi, ApInventory, CoordNormalizer, FingerprintSample, Point,
    RSSI_CEILING_DBM, RSSI_FLOOR_DBM,
};

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("invalid graph configuration: {0}")]
    InvalidConfig(String),
    #[error("sample has {found} RSSI values, inventory has {expected} APs")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Link thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphConfig {
    /// Maximum AP–AP distance for a logical link, in meters.
    pub ap_distance_m: f64,
    /// Minimum RSSI for a user–AP physical link, in dBm.
    pub min_rssi_dbm: f64,
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self {
            ap_distance_m: 20.0,
            min_rssi_dbm: -75.0,
        }
    }
}

impl GraphConfig {
    pub fn validate(&self) -> Result<(), GraphError> {
        if !(self.ap_distance_m > 0.0) {
            return Err(GraphError::InvalidConfig(format!(
                "AP distance threshold must be > 0, got {}",
                self.ap_distance_m
            )));
        }
        if !(self.min_rssi_dbm <= 0.0) {
            return Err(GraphError::InvalidConfig(format!(
                "RSSI threshold must be <= 0 dBm, got {}",
                self.min_rssi_dbm
            )));
        }
        Ok(())
    }
}

/// Dense symmetric m×m AP link matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApAdjacency {
    size: usize,
    links: Vec<bool>,
}

impl ApAdjacency {
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.links[i * self.size + j]
    }

    pub fn edge_count(&self) -> usize {
        self.links.iter().filter(|&&l| l).count()
    }
}

pub fn build_ap_adjacency(inventory: &ApInventory, cfg: &GraphConfig) -> ApAdjacency {
    let pos = inventory.positions();
    let m = pos.len();
    let mut links = vec![false; m * m];
    for i in 0..m {
        for j in (i + 1)..m {
            let d = (pos[i][0] - pos[j][0]).hypot(pos[i][1] - pos[j][1]);
            if d <= cfg.ap_distance_m {
                links[i * m + j] = true;
                links[j * m + i] = true;
            }
        }
    }
    ApAdjacency { size: m, links }
}

/// One scan's graph with its node features.
#[derive(Debug, Clone, PartialEq)]
pub struct LocGraph {
    ap_count: usize,
    adjacency: Vec<bool>,
    /// Scaled RSSI vector of the user node, length m.
    pub user_features: Vec<f64>,
    /// Normalized AP coordinates, one row per AP.
    pub ap_features: Vec<Point>,
}

impl LocGraph {
    pub fn ap_count(&self) -> usize {
        self.ap_count
    }

    pub fn node_count(&self) -> usize {
        self.ap_count + 1
    }

    pub fn user_index(&self) -> usize {
        self.ap_count
    }

    pub fn has_edge(&self, dst: usize, src: usize) -> bool {
        self.adjacency[dst * self.node_count() + src]
    }

    /// Nodes that `node` aggregates from, ascending.
    pub fn neighbors(&self, node: usize) -> impl Iterator<Item = usize> + '_ {
        let n = self.node_count();
        (0..n).filter(move |&j| self.adjacency[node * n + j])
    }

    /// APs linked to the user node.
    pub fn user_links(&self) -> Vec<usize> {
        self.neighbors(self.user_index()).collect()
    }

    /// All directed edges as `(src, dst)` pairs in row-major order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let n = self.node_count();
        (0..n)
            .flat_map(|dst| self.neighbors(dst).map(move |src| (src, dst)))
            .collect()
    }

    /// Relabels AP nodes so that new AP `i` is old AP `order[i]`; the user stays last.
    pub fn permuted(&self, order: &[usize]) -> Self {
        let m = self.ap_count;
        let n = m + 1;
        let map = |i: usize| if i == m { m } else { order[i] };
        let mut adjacency = vec![false; n * n];
        for i in 0..n {
            for j in 0..n {
                adjacency[i * n + j] = self.adjacency[map(i) * n + map(j)];
            }
        }
        Self {
            ap_count: m,
            adjacency,
            user_features: order.iter().map(|&i| self.user_features[i]).collect(),
            ap_features: order.iter().map(|&i| self.ap_features[i]).collect(),
        }
    }

    /// Debug dump: one `src,dst` line per directed edge.
    pub fn write_edge_list(&self, path: &Path) -> Result<(), GraphError> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "src,dst")?;
        for (src, dst) in self.edges() {
            writeln!(out, "{src},{dst}")?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Builds the graph for one sample. Sentinel entries never form a link.
pub fn build_sample_graph(
    sample: &FingerprintSample,
    inventory: &ApInventory,
    ap_adj: &ApAdjacency,
    cfg: &GraphConfig,
) -> Result<LocGraph, GraphError> {
    let detected: Vec<bool> = sample.rssi.iter().map(|&v| is_detected(v)).collect();
    let normalizer = CoordNormalizer::from_inventory(inventory);
    let ap_features = inventory
        .positions()
        .iter()
        .map(|&p| normalizer.normalize(p))
        .collect();
    build_graph_masked(&sample.rssi, &detected, ap_features, ap_adj, cfg)
}

/// Builds a graph from RSSI values plus explicit detection flags. Entries
/// whose flag is false are treated as undetected whatever value they store.
pub fn build_graph_masked(
    rssi: &[f64],
    detected: &[bool],
    ap_features: Vec<Point>,
    ap_adj: &ApAdjacency,
    cfg: &GraphConfig,
) -> Result<LocGraph, GraphError> {
    let m = ap_adj.size();
    if rssi.len() != m || detected.len() != m {
        return Err(GraphError::DimensionMismatch {
            expected: m,
            found: rssi.len(),
        });
    }
    let n = m + 1;
    let mut adjacency = vec![false; n * n];
    for i in 0..m {
        adjacency[i * n..i * n + m].copy_from_slice(&ap_adj.links[i * m..(i + 1) * m]);
    }
    for j in 0..m {
        adjacency[m * n + j] = detected[j] && rssi[j] >= cfg.min_rssi_dbm;
    }
    let user_features = rssi
        .iter()
        .zip(detected)
        .map(|(&v, &d)| {
            if d {
                normalize_rssi(&[v], RSSI_FLOOR_DBM, RSSI_CEILING_DBM)[0]
            } else {
                0.0
            }
        })
        .collect();
    Ok(LocGraph {
        ap_count: m,
        adjacency,
        user_features,
        ap_features,
    })
}

/// Caches the AP block and normalized AP coordinates for repeated graph construction.
#[derive(Debug, Clone)]
pub struct GraphBuilder {
    cfg: GraphConfig,
    ap_adj: ApAdjacency,
    ap_features: Vec<Point>,
}

impl GraphBuilder {
    pub fn new(inventory: &ApInventory, cfg: GraphConfig) -> Result<Self, GraphError> {
        cfg.validate()?;
        let normalizer = CoordNormalizer::from_inventory(inventory);
        Ok(Self {
            ap_adj: build_ap_adjacency(inventory, &cfg),
            ap_features: inventory
                .positions()
                .iter()
                .map(|&p| normalizer.normalize(p))
                .collect(),
            cfg,
        })
    }

    pub fn config(&self) -> &GraphConfig {
        &self.cfg
    }

    pub fn ap_adjacency(&self) -> &ApAdjacency {
        &self.ap_adj
    }

    pub fn build_rssi(&self, rssi: &[f64]) -> Result<LocGraph, GraphError> {
        let detected: Vec<bool> = rssi.iter().map(|&v| is_detected(v)).collect();
        build_graph_masked(rssi, &detected, self.ap_features.clone(), &self.ap_adj, &self.cfg)
    }

    pub fn build(&self, sample: &FingerprintSample) -> Result<LocGraph, GraphError> {
        self.build_rssi(&sample.rssi)
    }

    pub fn build_all(&self, samples: &[FingerprintSample]) -> Result<Vec<LocGraph>, GraphError> {
        samples.iter().map(|s| self.build(s)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::SENTINEL;
    use proptest::prelude::*;

    fn line_inventory() -> ApInventory {
        ApInventory::new(
            vec!["1".into(), "2".into(), "3".into()],
            vec![[0.0, 0.0], [10.0, 0.0], [30.0, 0.0]],
        )
        .unwrap()
    }

    #[test]
    fn ap_links_respect_distance_threshold() {
        let adj = build_ap_adjacency(&line_inventory(), &GraphConfig::default());
        assert!(adj.get(0, 1) && adj.get(1, 0));
        assert!(adj.get(1, 2) && adj.get(2, 1));
        assert!(!adj.get(0, 2) && !adj.get(2, 0));
        assert!((0..3).all(|i| !adj.get(i, i)));
    }

    #[test]
    fn co_located_aps_are_linked_and_single_ap_has_no_links() {
        let inv = ApInventory::new(vec!["a".into(), "b".into()], vec![[5.0, 5.0], [5.0, 5.0]]).unwrap();
        let cfg = GraphConfig {
            ap_distance_m: 1e-6,
            ..GraphConfig::default()
        };
        assert!(build_ap_adjacency(&inv, &cfg).get(0, 1));
        let one = ApInventory::new(vec!["a".into()], vec![[0.0, 0.0]]).unwrap();
        let adj = build_ap_adjacency(&one, &cfg);
        assert_eq!(adj.size(), 1);
        assert_eq!(adj.edge_count(), 0);
    }

    #[test]
    fn sentinel_never_creates_a_user_link() {
        // 100 >= -75 numerically; the sentinel must still be excluded.
        let inv = line_inventory();
        let cfg = GraphConfig::default();
        let adj = build_ap_adjacency(&inv, &cfg);
        let sample = FingerprintSample::new(vec![-60.0, -80.0, SENTINEL], [0.0, 0.0]);
        let g = build_sample_graph(&sample, &inv, &adj, &cfg).unwrap();
        assert_eq!(g.user_links(), vec![0]);
        assert_eq!(g.user_features[2], 0.0);
    }

    #[test]
    fn all_sentinel_and_permissive_threshold() {
        let inv = line_inventory();
        let cfg = GraphConfig::default();
        let adj = build_ap_adjacency(&inv, &cfg);
        let none = FingerprintSample::new(vec![SENTINEL; 3], [0.0, 0.0]);
        assert!(build_sample_graph(&none, &inv, &adj, &cfg).unwrap().user_links().is_empty());

        let loose = GraphConfig {
            min_rssi_dbm: -120.0,
            ..cfg
        };
        let all = FingerprintSample::new(vec![-100.0, -90.0, -110.0], [0.0, 0.0]);
        let g = build_sample_graph(&all, &inv, &adj, &loose).unwrap();
        assert_eq!(g.user_links(), vec![0, 1, 2]);
    }

    #[test]
    fn structural_invariants() {
        let inv = line_inventory();
        let cfg = GraphConfig::default();
        let adj = build_ap_adjacency(&inv, &cfg);
        let g = build_sample_graph(&FingerprintSample::new(vec![-50.0; 3], [0.0, 0.0]), &inv, &adj, &cfg)
            .unwrap();
        let u = g.user_index();
        for i in 0..g.node_count() {
            assert!(!g.has_edge(i, i));
            assert!(!g.has_edge(i, u), "AP {i} must not aggregate from the user");
        }
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(g.has_edge(i, j), adj.get(i, j));
            }
        }
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let inv = line_inventory();
        let cfg = GraphConfig::default();
        let adj = build_ap_adjacency(&inv, &cfg);
        let bad = FingerprintSample::new(vec![-50.0; 2], [0.0, 0.0]);
        assert!(matches!(
            build_sample_graph(&bad, &inv, &adj, &cfg),
            Err(GraphError::DimensionMismatch { expected: 3, found: 2 })
        ));
    }

    #[test]
    fn edge_list_dump() {
        let inv = line_inventory();
        let builder = GraphBuilder::new(&inv, GraphConfig::default()).unwrap();
        let g = builder.build_rssi(&[-60.0, SENTINEL, SENTINEL]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("edges.csv");
        g.write_edge_list(&path).unwrap();
        let text = std::fs::read_to_string(path).unwrap();
        assert_eq!(text, "src,dst\n1,0\n0,1\n2,1\n1,2\n0,3\n");
    }

    #[test]
    fn invalid_config_rejected() {
        let inv = line_inventory();
        let bad = GraphConfig {
            ap_distance_m: 0.0,
            min_rssi_dbm: -75.0,
        };
        assert!(GraphBuilder::new(&inv, bad).is_err());
        let bad = GraphConfig {
            ap_distance_m: 10.0,
            min_rssi_dbm: 3.0,
        };
        assert!(GraphBuilder::new(&inv, bad).is_err());
    }

    fn random_inventory(coords: &[(f64, f64)]) -> ApInventory {
        ApInventory::new(
            (0..coords.len()).map(|i| i.to_string()).collect(),
            coords.iter().map(|&(x, y)| [x, y]).collect(),
        )
        .unwrap()
    }

    proptest! {
        #[test]
        fn user_links_shrink_as_threshold_rises(
            rssi in proptest::collection::vec(prop_oneof![Just(SENTINEL), -110.0f64..0.0], 6),
            t1 in -110.0f64..0.0, t2 in -110.0f64..0.0,
        ) {
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            let inv = random_inventory(&[(0.,0.),(1.,0.),(2.,0.),(3.,0.),(4.,0.),(5.,0.)]);
            let sample = FingerprintSample::new(rssi, [0.0, 0.0]);
            let mk = |tau| {
                let cfg = GraphConfig { ap_distance_m: 1.5, min_rssi_dbm: tau };
                let adj = build_ap_adjacency(&inv, &cfg);
                build_sample_graph(&sample, &inv, &adj, &cfg).unwrap().user_links()
            };
            let strict = mk(hi);
            let loose = mk(lo);
            prop_assert!(strict.iter().all(|j| loose.contains(j)));
        }

        #[test]
        fn ap_links_grow_with_distance_threshold(
            coords in proptest::collection::vec((0.0f64..50.0, 0.0f64..50.0), 2..10),
            d1 in 0.1f64..40.0, d2 in 0.1f64..40.0,
        ) {
            let (lo, hi) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
            let inv = random_inventory(&coords);
            let a = build_ap_adjacency(&inv, &GraphConfig { ap_distance_m: lo, min_rssi_dbm: -75.0 });
            let b = build_ap_adjacency(&inv, &GraphConfig { ap_distance_m: hi, min_rssi_dbm: -75.0 });
            for i in 0..coords.len() {
                for j in 0..coords.len() {
                    prop_assert!(!a.get(i, j) || b.get(i, j));
                    prop_assert_eq!(a.get(i, j), a.get(j, i));
                }
            }
        }

        #[test]
        fn sentinel_storage_code_is_irrelevant(
            rssi in proptest::collection::vec(prop_oneof![Just(SENTINEL), -110.0f64..0.0], 5),
            code in -200.0f64..200.0,
        ) {
            let inv = random_inventory(&[(0.,0.),(10.,0.),(20.,0.),(30.,0.),(40.,0.)]);
            let cfg = GraphConfig::default();
            let adj = build_ap_adjacency(&inv, &cfg);
            let detected: Vec<bool> = rssi.iter().map(|&v| is_detected(v)).collect();
            let recoded: Vec<f64> = rssi.iter().map(|&v| if is_detected(v) { v } else { code }).collect();
            let feats = vec![[0.0, 0.0]; 5];
            let a = build_graph_masked(&rssi, &detected, feats.clone(), &adj, &cfg).unwrap();
            let b = build_graph_masked(&recoded, &detected, feats, &adj, &cfg).unwrap();
            prop_assert_eq!(a.edges(), b.edges());
            prop_assert_eq!(a.user_features, b.user_features);
        }
    }
}
