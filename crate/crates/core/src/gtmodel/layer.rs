use rand::Rng;

use super::{glorot, Linear, LinearVars, ModelError};
use crate::autodiff::{softmax_in_place, EdgeIndex, Tape, Tensor, Var};

/// Multi-head TransformerConv layer.
///
/// Per head `e`, node `i` computes
/// `z_i = W_root x_i + Σ_{j∈N(i)} β_ij W_value x_j` with
/// `β_i· = softmax_j((W_query x_i)·(W_key x_j) / √head_dim)`.
/// Heads are averaged and the `head_dim`-wide result is mapped back to
/// `out_dim` by `merge`. The four projection matrices hold all heads side
/// by side: columns `e·head_dim .. (e+1)·head_dim` belong to head `e`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformerConvLayer {
    pub heads: usize,
    pub head_dim: usize,
    pub w_root: Tensor,
    pub w_value: Tensor,
    pub w_query: Tensor,
    pub w_key: Tensor,
    pub merge: Linear,
}

#[derive(Debug, Clone, Copy)]
pub struct LayerVars {
    pub w_root: Var,
    pub w_value: Var,
    pub w_query: Var,
    pub w_key: Var,
    pub merge: LinearVars,
}

/// Tape handles produced by one layer application.
#[derive(Debug, Clone, Copy)]
pub struct LayerOutput {
    pub output: Var,
    /// `edges × heads` attention weights.
    pub attention: Var,
}

impl TransformerConvLayer {
    pub fn new<R: Rng + ?Sized>(
        in_dim: usize,
        heads: usize,
        head_dim: usize,
        out_dim: usize,
        rng: &mut R,
    ) -> Self {
        let width = heads * head_dim;
        Self {
            heads,
            head_dim,
            w_root: glorot(in_dim, width, rng),
            w_value: glorot(in_dim, width, rng),
            w_query: glorot(in_dim, width, rng),
            w_key: glorot(in_dim, width, rng),
            merge: Linear::new(head_dim, out_dim, rng),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.w_root.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.merge.out_dim()
    }

    pub fn params(&self) -> Vec<(&'static str, &Tensor)> {
        vec![
            ("w_root", &self.w_root),
            ("w_value", &self.w_value),
            ("w_query", &self.w_query),
            ("w_key", &self.w_key),
            ("merge.weight", &self.merge.weight),
            ("merge.bias", &self.merge.bias),
        ]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        vec![
            &mut self.w_root,
            &mut self.w_value,
            &mut self.w_query,
            &mut self.w_key,
            &mut self.merge.weight,
            &mut self.merge.bias,
        ]
    }

    pub fn bind(&self, tape: &mut Tape) -> LayerVars {
        LayerVars {
            w_root: tape.param(&self.w_root),
            w_value: tape.param(&self.w_value),
            w_query: tape.param(&self.w_query),
            w_key: tape.param(&self.w_key),
            merge: self.merge.bind(tape),
        }
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        vars: &LayerVars,
        x: Var,
        edges: &EdgeIndex,
    ) -> Result<LayerOutput, ModelError> {
        let root = tape.matmul(x, vars.w_root)?;
        let value = tape.matmul(x, vars.w_value)?;
        let query = tape.matmul(x, vars.w_query)?;
        let key = tape.matmul(x, vars.w_key)?;
        let scale = 1.0 / (self.head_dim as f64).sqrt();
        let scores = tape.edge_scores(query, key, edges, self.heads, scale)?;
        let attention = tape.segment_softmax(scores, edges)?;
        let messages = tape.edge_aggregate(attention, value, edges, self.heads)?;
        let per_head = tape.add(root, messages)?;
        let averaged = tape.head_mean(per_head, self.heads)?;
        let output = self.merge.apply(tape, &vars.merge, averaged)?;
        Ok(LayerOutput { output, attention })
    }

    fn project_row(&self, w: &Tensor, x: &[f64], head: usize) -> Vec<f64> {
        let cols = w.cols();
        (0..self.head_dim)
            .map(|j| {
                let c = head * self.head_dim + j;
                x.iter().enumerate().map(|(r, xr)| xr * w.data()[r * cols + c]).sum()
            })
            .collect()
    }

    /// Attention of `node` over `neighbors` for one head, computed directly
    /// from the layer's input features (`n × in_dim`) without a tape.
    pub fn attention_coefficients(
        &self,
        head: usize,
        features: &Tensor,
        node: usize,
        neighbors: &[usize],
    ) -> Result<Vec<f64>, ModelError> {
        if neighbors.is_empty() {
            return Err(ModelError::EmptyNeighborhood(node));
        }
        if head >= self.heads || features.cols() != self.in_dim() {
            return Err(ModelError::DimensionMismatch {
                expected: self.in_dim(),
                found: features.cols(),
            });
        }
        let q = self.project_row(&self.w_query, features.row(node), head);
        let scale = (self.head_dim as f64).sqrt();
        let mut scores: Vec<f64> = neighbors
            .iter()
            .map(|&j| {
                let k = self.project_row(&self.w_key, features.row(j), head);
                q.iter().zip(&k).map(|(a, b)| a * b).sum::<f64>() / scale
            })
            .collect();
        softmax_in_place(&mut scores);
        Ok(scores)
    }
}
