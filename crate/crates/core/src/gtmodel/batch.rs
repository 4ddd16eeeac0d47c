use super::ModelError;
use crate::autodiff::{EdgeIndex, Tensor};
use crate::graphbuild::LocGraph;

/// Several graphs merged into one block-diagonal super-graph.
///
/// Node layout: AP `j` of graph `b` is node `b·m + j`; the user of graph `b`
/// is node `B·m + b`. Edges never cross graph boundaries.
#[derive(Debug, Clone)]
pub struct GraphBatch {
    pub graph_count: usize,
    pub ap_count: usize,
    /// `B × m` user feature rows.
    pub user_features: Tensor,
    /// `(B·m) × 2` AP feature rows.
    pub ap_features: Tensor,
    pub edges: EdgeIndex,
    pub user_rows: Vec<usize>,
}

impl GraphBatch {
    pub fn new(graphs: &[&LocGraph]) -> Result<Self, ModelError> {
        let first = graphs.first().ok_or(ModelError::EmptyBatch)?;
        let m = first.ap_count();
        let b_count = graphs.len();
        let mut user = Vec::with_capacity(b_count * m);
        let mut aps = Vec::with_capacity(b_count * m * 2);
        let mut src = Vec::new();
        let mut dst = Vec::new();
        for (b, g) in graphs.iter().enumerate() {
            if g.ap_count() != m {
                return Err(ModelError::DimensionMismatch {
                    expected: m,
                    found: g.ap_count(),
                });
            }
            user.extend_from_slice(&g.user_features);
            for p in &g.ap_features {
                aps.extend_from_slice(p);
            }
            let global = |node: usize| if node == m { b_count * m + b } else { b * m + node };
            for (s, d) in g.edges() {
                src.push(global(s));
                dst.push(global(d));
            }
        }
        let node_count = b_count * (m + 1);
        Ok(Self {
            graph_count: b_count,
            ap_count: m,
            user_features: Tensor::new(vec![b_count, m], user)?,
            ap_features: Tensor::new(vec![b_count * m, 2], aps)?,
            edges: EdgeIndex::new(src, dst, node_count)?,
            user_rows: (0..b_count).map(|b| b_count * m + b).collect(),
        })
    }

    pub fn node_count(&self) -> usize {
        self.edges.node_count()
    }
}
