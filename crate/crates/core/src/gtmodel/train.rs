use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ForwardMode, GraphBatch, GtModel, ModelError};
use crate::autodiff::{cosine_lr, AdamState, CosineSchedule, Tape, Tensor};
use crate::dataset::{ApInventory, FingerprintSample, Point};
use crate::graphbuild::{GraphBuilder, GraphConfig, LocGraph};

const DROPOUT_SALT: u64 = 0xD809_0A7C_5EED_0001;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub base_lr: f64,
    pub min_lr: f64,
    pub weight_decay: f64,
    pub dropout: f64,
    pub seed: u64,
    /// Threads sharing each mini-batch; gradients are reduced in shard order.
    pub workers: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 64,
            base_lr: 0.001,
            min_lr: 0.0,
            weight_decay: 1e-4,
            dropout: 0.4,
            seed: 0,
            workers: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::InvalidConfig(m));
        if self.epochs == 0 || self.batch_size == 0 || self.workers == 0 {
            return bad("epochs, batch size and workers must be positive".into());
        }
        if !(self.base_lr >= 0.0 && self.min_lr >= 0.0 && self.min_lr <= self.base_lr) {
            return bad(format!(
                "learning rates must satisfy 0 <= min_lr <= base_lr (got {} / {})",
                self.min_lr, self.base_lr
            ));
        }
        if !(self.weight_decay >= 0.0) {
            return bad("weight decay must be >= 0".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    /// Mean per-sample `|Δx| + |Δy|` in meters over the epoch's batches.
    pub train_mae: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub log: Vec<EpochLog>,
    pub optimizer: AdamState,
}

/// Mean over samples of `|Δx| + |Δy|`.
pub fn mae_loss(preds: &[Point], truths: &[Point]) -> Result<f64, ModelError> {
    if preds.is_empty() {
        return Err(ModelError::EmptyBatch);
    }
    if preds.len() != truths.len() {
        return Err(ModelError::DimensionMismatch {
            expected: preds.len(),
            found: truths.len(),
        });
    }
    let total: f64 = preds
        .iter()
        .zip(truths)
        .map(|(p, t)| (p[0] - t[0]).abs() + (p[1] - t[1]).abs())
        .sum();
    Ok(total / preds.len() as f64)
}

/// A shard's loss contribution and per-parameter gradients.
type ShardResult = Result<(f64, Vec<Vec<f64>>), ModelError>;

/// Loss contribution and parameter gradients of one shard of a batch. The
/// shard's absolute error sum is divided by the full batch size so that
/// summing shards yields the batch mean.
fn shard_gradients(
    model: &GtModel,
    graphs: &[&LocGraph],
    truths: &[Point],
    batch_size: usize,
    dropout: f64,
    rng: &mut ChaCha8Rng,
) -> ShardResult {
    let batch = GraphBatch::new(graphs)?;
    let mut tape = Tape::new();
    let vars = model.bind(&mut tape);
    let mode = if dropout > 0.0 {
        ForwardMode::Train { dropout, rng }
    } else {
        ForwardMode::Eval
    };
    let out = model.forward(&mut tape, &vars, &batch, mode)?;
    let meters = model.denormalize_on_tape(&mut tape, out.normalized)?;
    let neg_truth: Vec<f64> = truths.iter().flat_map(|t| [-t[0], -t[1]]).collect();
    let neg_truth = tape.constant(Tensor::new(vec![truths.len(), 2], neg_truth)?);
    let diff = tape.add(meters, neg_truth)?;
    let abs = tape.abs_sum(diff);
    let loss = tape.scale(abs, 1.0 / batch_size as f64);
    tape.backward(loss)?;
    let value = tape.value(loss).data()[0];
    Ok((value, vars.all().into_iter().map(|v| tape.grad(v)).collect()))
}

fn shard_rng(seed: u64, epoch: usize, batch: usize, shard: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ DROPOUT_SALT);
    rng.set_stream(((epoch as u64) << 40) | ((batch as u64) << 12) | shard as u64);
    rng
}

/// Mini-batch Adam on the MAE objective with per-epoch cosine annealing.
pub fn train(
    model: &mut GtModel,
    graphs: &[LocGraph],
    truths: &[Point],
    cfg: &TrainConfig,
) -> Result<TrainOutcome, ModelError> {
    cfg.validate()?;
    if graphs.is_empty() {
        return Err(ModelError::EmptyBatch);
    }
    if graphs.len() != truths.len() {
        return Err(ModelError::DimensionMismatch {
            expected: graphs.len(),
            found: truths.len(),
        });
    }
    let mut optimizer = AdamState::new(model.named_params().into_iter().map(|(_, t)| t), cfg.weight_decay);
    let schedule = CosineSchedule {
        base_lr: cfg.base_lr,
        total_steps: cfg.epochs as u64,
        min_lr: cfg.min_lr,
    };
    let mut order: Vec<usize> = (0..graphs.len()).collect();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut log = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let lr = cosine_lr(&schedule, epoch as u64)?;
        order.shuffle(&mut shuffle_rng);
        let mut abs_total = 0.0;

        for (b, idx) in order.chunks(cfg.batch_size).enumerate() {
            let batch_graphs: Vec<&LocGraph> = idx.iter().map(|&i| &graphs[i]).collect();
            let batch_truths: Vec<Point> = idx.iter().map(|&i| truths[i]).collect();
            let shards = cfg.workers.min(idx.len());
            let shard_len = idx.len().div_ceil(shards);
            let model_ref: &GtModel = model;

            let results: Vec<ShardResult> = if shards == 1 {
                let mut rng = shard_rng(cfg.seed, epoch, b, 0);
                vec![shard_gradients(model_ref, &batch_graphs, &batch_truths, idx.len(), cfg.dropout, &mut rng)]
            } else {
                std::thread::scope(|scope| {
                    let handles: Vec<_> = batch_graphs
                        .chunks(shard_len)
                        .zip(batch_truths.chunks(shard_len))
                        .enumerate()
                        .map(|(s, (g, t))| {
                            scope.spawn(move || {
                                let mut rng = shard_rng(cfg.seed, epoch, b, s);
                                shard_gradients(model_ref, g, t, idx.len(), cfg.dropout, &mut rng)
                            })
                        })
                        .collect();
                    handles
                        .into_iter()
                        .map(|h| h.join().expect("training shard panicked"))
                        .collect()
                })
            };

            let mut loss = 0.0;
            let mut grads: Option<Vec<Vec<f64>>> = None;
            for r in results {
                let (l, g) = r?;
                loss += l;
                match &mut grads {
                    None => grads = Some(g),
                    Some(acc) => {
                        for (a, x) in acc.iter_mut().zip(&g) {
                            for (ai, xi) in a.iter_mut().zip(x) {
                                *ai += xi;
                            }
                        }
                    }
                }
            }
            if !loss.is_finite() {
                return Err(ModelError::TrainingDiverged { epoch });
            }
            abs_total += loss * idx.len() as f64;

            let grads = grads.expect("at least one shard");
            let mut params = model.params_mut();
            for (p, g) in params.iter_mut().zip(grads) {
                p.set_grad(g)?;
            }
            optimizer.step(&mut params, lr)?;
            if params.iter().any(|p| p.data().iter().any(|x| !x.is_finite())) {
                return Err(ModelError::TrainingDiverged { epoch });
            }
        }

        let train_mae = abs_total / graphs.len() as f64;
        log::debug!("epoch {epoch}: lr {lr:.6} train MAE {train_mae:.4} m");
        log.push(EpochLog { epoch, lr, train_mae });
    }
    for p in model.params_mut() {
        p.zero_grad();
    }
    Ok(TrainOutcome { log, optimizer })
}

/// Builds graphs for `samples` and trains on them.
pub fn train_samples(
    model: &mut GtModel,
    samples: &[FingerprintSample],
    cfg: &TrainConfig,
    graph_cfg: &GraphConfig,
    inventory: &ApInventory,
) -> Result<TrainOutcome, ModelError> {
    let builder = GraphBuilder::new(inventory, *graph_cfg)?;
    let graphs = builder.build_all(samples)?;
    let truths: Vec<Point> = samples.iter().map(|s| s.truth).collect();
    train(model, &graphs, &truths, cfg)
}

/// Writes `epoch,lr,train_mae` lines.
pub fn write_loss_log(path: &Path, log: &[EpochLog]) -> Result<(), ModelError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "epoch,lr,train_mae")?;
    for e in log {
        writeln!(out, "{},{},{}", e.epoch, e.lr, e.train_mae)?;
    }
    out.flush()?;
    Ok(())
}
