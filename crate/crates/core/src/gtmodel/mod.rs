//! Two-layer multi-head graph-transformer regressor.
//!
//! Pipeline per graph: linear encoders lift the user's scaled RSSI vector
//! (length m) and each AP's normalized coordinates (length 2) into a shared
//! hidden width; two TransformerConv layers, each followed by ReLU and
//! dropout, propagate information; the user node's final embedding goes
//! through a linear head that outputs normalized `(x, y)`.

mod batch;
mod checkpoint;
mod layer;
mod train;

pub use batch::GraphBatch;
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, NamedTensor, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use layer::{LayerOutput, LayerVars, TransformerConvLayer};
pub use train::{mae_loss, train, train_samples, write_loss_log, EpochLog, TrainConfig, TrainOutcome};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{dropout_mask, AutodiffError, Tape, Tensor, Var};
use crate::dataset::{CoordNormalizer, Point};
use crate::graphbuild::{GraphError, LocGraph};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("dimension mismatch: model expects {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid model configuration: {0}")]
    InvalidConfig(String),
    #[error("node {0} has no neighbors")]
    EmptyNeighborhood(usize),
    #[error("empty batch")]
    EmptyBatch,
    #[error("training diverged (non-finite values) in epoch {epoch}")]
    TrainingDiverged { epoch: usize },
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// `(src, dst)` edges and, per layer, the `edges × heads` attention weights.
pub type AttentionTrace = (Vec<(usize, usize)>, Vec<Tensor>);

/// Architecture hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub ap_count: usize,
    pub hidden: usize,
    pub heads: usize,
    pub layers: usize,
}

impl ModelConfig {
    pub fn new(ap_count: usize, hidden: usize, heads: usize) -> Self {
        Self {
            ap_count,
            hidden,
            heads,
            layers: 2,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.hidden / self.heads
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::InvalidConfig(m));
        if self.ap_count == 0 || self.hidden == 0 || self.heads == 0 || self.layers == 0 {
            return bad(format!("all sizes must be positive: {self:?}"));
        }
        if !self.hidden.is_multiple_of(self.heads) {
            return bad(format!("{} heads do not divide hidden width {}", self.heads, self.hidden));
        }
        Ok(())
    }
}

pub(crate) fn glorot<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..fan_in * fan_out)
        .map(|_| rng.random_range(-limit..limit))
        .collect();
    Tensor::new(vec![fan_in, fan_out], data).expect("sized buffer")
}

/// Affine map `x·W + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Tensor,
    pub bias: Tensor,
}

#[derive(Debug, Clone, Copy)]
pub struct LinearVars {
    pub weight: Var,
    pub bias: Var,
}

impl Linear {
    pub fn new<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        Self {
            weight: glorot(in_dim, out_dim, rng),
            bias: Tensor::zeros(&[1, out_dim]),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn bind(&self, tape: &mut Tape) -> LinearVars {
        LinearVars {
            weight: tape.param(&self.weight),
            bias: tape.param(&self.bias),
        }
    }

    pub fn apply(&self, tape: &mut Tape, vars: &LinearVars, x: Var) -> Result<Var, ModelError> {
        let y = tape.matmul(x, vars.weight)?;
        Ok(tape.add_row(y, vars.bias)?)
    }
}

/// Whether dropout is active for a forward pass.
pub enum ForwardMode<'a> {
    Eval,
    Train { dropout: f64, rng: &'a mut ChaCha8Rng },
}

/// Tape handles for every model parameter, in [`GtModel::named_params`] order.
#[derive(Debug, Clone)]
pub struct ModelVars {
    pub user_encoder: LinearVars,
    pub ap_encoder: LinearVars,
    pub layers: Vec<LayerVars>,
    pub head: LinearVars,
}

impl ModelVars {
    pub fn all(&self) -> Vec<Var> {
        let mut out = vec![
            self.user_encoder.weight,
            self.user_encoder.bias,
            self.ap_encoder.weight,
            self.ap_encoder.bias,
        ];
        for l in &self.layers {
            out.extend([
                l.w_root,
                l.w_value,
                l.w_query,
                l.w_key,
                l.merge.weight,
                l.merge.bias,
            ]);
        }
        out.extend([self.head.weight, self.head.bias]);
        out
    }
}

/// Tape handles produced by a full forward pass.
#[derive(Debug, Clone)]
pub struct ForwardOutput {
    /// `B × 2` normalized coordinates.
    pub normalized: Var,
    /// Per layer, `edges × heads` attention weights.
    pub attention: Vec<Var>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GtModel {
    config: ModelConfig,
    normalizer: CoordNormalizer,
    pub user_encoder: Linear,
    pub ap_encoder: Linear,
    pub layers: Vec<TransformerConvLayer>,
    pub head: Linear,
}

impl GtModel {
    /// Glorot-uniform weights and zero biases drawn from `seed`.
    pub fn new(config: ModelConfig, normalizer: CoordNormalizer, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = config.hidden;
        let user_encoder = Linear::new(config.ap_count, h, &mut rng);
        let ap_encoder = Linear::new(2, h, &mut rng);
        let layers = (0..config.layers)
            .map(|_| TransformerConvLayer::new(h, config.heads, config.head_dim(), h, &mut rng))
            .collect();
        let head = Linear::new(h, 2, &mut rng);
        Ok(Self {
            config,
            normalizer,
            user_encoder,
            ap_encoder,
            layers,
            head,
        })
    }

    pub(crate) fn from_parts(
        config: ModelConfig,
        normalizer: CoordNormalizer,
        user_encoder: Linear,
        ap_encoder: Linear,
        layers: Vec<TransformerConvLayer>,
        head: Linear,
    ) -> Self {
        Self {
            config,
            normalizer,
            user_encoder,
            ap_encoder,
            layers,
            head,
        }
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn normalizer(&self) -> &CoordNormalizer {
        &self.normalizer
    }

    pub fn named_params(&self) -> Vec<(String, &Tensor)> {
        let mut out = vec![
            ("user_encoder.weight".to_string(), &self.user_encoder.weight),
            ("user_encoder.bias".to_string(), &self.user_encoder.bias),
            ("ap_encoder.weight".to_string(), &self.ap_encoder.weight),
            ("ap_encoder.bias".to_string(), &self.ap_encoder.bias),
        ];
        for (i, l) in self.layers.iter().enumerate() {
            out.extend(l.params().into_iter().map(|(n, t)| (format!("layers.{i}.{n}"), t)));
        }
        out.push(("head.weight".to_string(), &self.head.weight));
        out.push(("head.bias".to_string(), &self.head.bias));
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = vec![
            &mut self.user_encoder.weight,
            &mut self.user_encoder.bias,
            &mut self.ap_encoder.weight,
            &mut self.ap_encoder.bias,
        ];
        for l in &mut self.layers {
            out.extend(l.params_mut());
        }
        out.push(&mut self.head.weight);
        out.push(&mut self.head.bias);
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.named_params().iter().map(|(_, t)| t.numel()).sum()
    }

    pub fn bind(&self, tape: &mut Tape) -> ModelVars {
        ModelVars {
            user_encoder: self.user_encoder.bind(tape),
            ap_encoder: self.ap_encoder.bind(tape),
            layers: self.layers.iter().map(|l| l.bind(tape)).collect(),
            head: self.head.bind(tape),
        }
    }

    /// Records the forward pass for a batch on `tape`.
    pub fn forward(
        &self,
        tape: &mut Tape,
        vars: &ModelVars,
        batch: &GraphBatch,
        mut mode: ForwardMode<'_>,
    ) -> Result<ForwardOutput, ModelError> {
        if batch.ap_count != self.config.ap_count {
            return Err(ModelError::DimensionMismatch {
                expected: self.config.ap_count,
                found: batch.ap_count,
            });
        }
        let users = tape.constant(batch.user_features.clone());
        let aps = tape.constant(batch.ap_features.clone());
        let users = self.user_encoder.apply(tape, &vars.user_encoder, users)?;
        let aps = self.ap_encoder.apply(tape, &vars.ap_encoder, aps)?;
        let mut x = tape.concat_rows(&[aps, users])?;

        let mut attention = Vec::with_capacity(self.layers.len());
        for (layer, lv) in self.layers.iter().zip(&vars.layers) {
            let out = layer.forward(tape, lv, x, &batch.edges)?;
            attention.push(out.attention);
            x = tape.relu(out.output);
            if let ForwardMode::Train { dropout, rng } = &mut mode {
                if *dropout > 0.0 {
                    let shape = tape.value(x).shape().to_vec();
                    let mask = tape.constant(dropout_mask(&shape, *dropout, &mut **rng, true));
                    x = tape.mul(x, mask)?;
                }
            }
        }
        let users = tape.row_select(x, &batch.user_rows)?;
        let normalized = self.head.apply(tape, &vars.head, users)?;
        Ok(ForwardOutput {
            normalized,
            attention,
        })
    }

    /// Maps a `B × 2` normalized prediction to meters on the tape.
    pub fn denormalize_on_tape(&self, tape: &mut Tape, normalized: Var) -> Result<Var, ModelError> {
        let span = &self.normalizer.span;
        let diag = Tensor::new(vec![2, 2], vec![span[0], 0.0, 0.0, span[1]])?;
        let diag = tape.constant(diag);
        let offset = tape.constant(Tensor::new(vec![1, 2], self.normalizer.min.to_vec())?);
        let scaled = tape.matmul(normalized, diag)?;
        Ok(tape.add_row(scaled, offset)?)
    }

    /// Evaluation-mode normalized predictions for a batch.
    pub fn predict_normalized(&self, graphs: &[&LocGraph]) -> Result<Vec<Point>, ModelError> {
        let batch = GraphBatch::new(graphs)?;
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape);
        let out = self.forward(&mut tape, &vars, &batch, ForwardMode::Eval)?;
        Ok(tape
            .value(out.normalized)
            .data()
            .chunks_exact(2)
            .map(|c| [c[0], c[1]])
            .collect())
    }

    /// Evaluation-mode prediction in meters.
    pub fn predict(&self, graph: &LocGraph) -> Result<Point, ModelError> {
        let p = self.predict_normalized(&[graph])?[0];
        Ok(self.normalizer.denormalize(p))
    }

    /// Evaluation-mode predictions in meters, processed in fixed-size chunks.
    pub fn predict_all(&self, graphs: &[LocGraph]) -> Result<Vec<Point>, ModelError> {
        const CHUNK: usize = 256;
        let mut out = Vec::with_capacity(graphs.len());
        for chunk in graphs.chunks(CHUNK) {
            let refs: Vec<&LocGraph> = chunk.iter().collect();
            out.extend(
                self.predict_normalized(&refs)?
                    .into_iter()
                    .map(|p| self.normalizer.denormalize(p)),
            );
        }
        Ok(out)
    }

    /// Attention weights of every layer for one graph in evaluation mode,
    /// returned as `(edges (src, dst), per-layer edges × heads weights)`.
    pub fn attention_trace(&self, graph: &LocGraph) -> Result<AttentionTrace, ModelError> {
        let batch = GraphBatch::new(&[graph])?;
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape);
        let out = self.forward(&mut tape, &vars, &batch, ForwardMode::Eval)?;
        let edges = batch
            .edges
            .src()
            .iter()
            .zip(batch.edges.dst())
            .map(|(&s, &d)| (s, d))
            .collect();
        Ok((edges, out.attention.iter().map(|&a| tape.value(a).clone()).collect()))
    }

    /// Layer inputs for one graph in evaluation mode: the encoded node
    /// matrix followed by each layer's post-activation output.
    pub fn layer_inputs(&self, graph: &LocGraph) -> Result<Vec<Tensor>, ModelError> {
        let batch = GraphBatch::new(&[graph])?;
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape);
        let users = tape.constant(batch.user_features.clone());
        let aps = tape.constant(batch.ap_features.clone());
        let users = self.user_encoder.apply(&mut tape, &vars.user_encoder, users)?;
        let aps = self.ap_encoder.apply(&mut tape, &vars.ap_encoder, aps)?;
        let mut x = tape.concat_rows(&[aps, users])?;
        let mut out = vec![tape.value(x).clone()];
        for (layer, lv) in self.layers.iter().zip(&vars.layers) {
            let o = layer.forward(&mut tape, lv, x, &batch.edges)?;
            x = tape.relu(o.output);
            out.push(tape.value(x).clone());
        }
        Ok(out)
    }
}
