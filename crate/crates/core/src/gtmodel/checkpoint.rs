use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{GtModel, Linear, ModelConfig, ModelError, TransformerConvLayer};
use crate::autodiff::{AdamState, Tensor};
use crate::dataset::CoordNormalizer;
use crate::graphbuild::GraphConfig;

pub const CHECKPOINT_MAGIC: &str = "SACLOC-CHECKPOINT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// Everything needed to resume training or run inference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub magic: String,
    pub version: u32,
    pub model: ModelConfig,
    pub normalizer: CoordNormalizer,
    pub graph: GraphConfig,
    pub parameters: Vec<NamedTensor>,
    pub optimizer: Option<AdamState>,
    pub step: u64,
}

impl Checkpoint {
    pub fn from_model(model: &GtModel, graph: GraphConfig, optimizer: Option<AdamState>) -> Self {
        let step = optimizer.as_ref().map_or(0, |o| o.step);
        Self {
            magic: CHECKPOINT_MAGIC.to_string(),
            version: CHECKPOINT_VERSION,
            model: *model.config(),
            normalizer: *model.normalizer(),
            graph,
            parameters: model
                .named_params()
                .into_iter()
                .map(|(name, t)| NamedTensor {
                    name,
                    shape: t.shape().to_vec(),
                    data: t.data().to_vec(),
                })
                .collect(),
            optimizer,
            step,
        }
    }

    pub fn to_model(&self) -> Result<GtModel, ModelError> {
        if self.magic != CHECKPOINT_MAGIC {
            return Err(ModelError::Checkpoint(format!("bad magic header `{}`", self.magic)));
        }
        if self.version != CHECKPOINT_VERSION {
            return Err(ModelError::Checkpoint(format!(
                "unsupported checkpoint version {}",
                self.version
            )));
        }
        let cfg = self.model;
        cfg.validate()?;
        let mut tensors = self.parameters.iter();
        let mut next = |expected: &str, shape: [usize; 2]| -> Result<Tensor, ModelError> {
            let nt = tensors
                .next()
                .ok_or_else(|| ModelError::Checkpoint(format!("missing tensor `{expected}`")))?;
            if nt.name != expected || nt.shape != shape {
                return Err(ModelError::Checkpoint(format!(
                    "expected `{expected}` {shape:?}, found `{}` {:?}",
                    nt.name, nt.shape
                )));
            }
            Ok(Tensor::new(nt.shape.clone(), nt.data.clone())?)
        };
        let (h, hd, m) = (cfg.hidden, cfg.head_dim(), cfg.ap_count);
        let mut linear = |prefix: &str, i: usize, o: usize| -> Result<Linear, ModelError> {
            Ok(Linear {
                weight: next(&format!("{prefix}.weight"), [i, o])?,
                bias: next(&format!("{prefix}.bias"), [1, o])?,
            })
        };
        let user_encoder = linear("user_encoder", m, h)?;
        let ap_encoder = linear("ap_encoder", 2, h)?;
        let mut layers = Vec::with_capacity(cfg.layers);
        for l in 0..cfg.layers {
            let p = format!("layers.{l}");
            let w_root = next(&format!("{p}.w_root"), [h, h])?;
            let w_value = next(&format!("{p}.w_value"), [h, h])?;
            let w_query = next(&format!("{p}.w_query"), [h, h])?;
            let w_key = next(&format!("{p}.w_key"), [h, h])?;
            let merge = Linear {
                weight: next(&format!("{p}.merge.weight"), [hd, h])?,
                bias: next(&format!("{p}.merge.bias"), [1, h])?,
            };
            layers.push(TransformerConvLayer {
                heads: cfg.heads,
                head_dim: hd,
                w_root,
                w_value,
                w_query,
                w_key,
                merge,
            });
        }
        let head = Linear {
            weight: next("head.weight", [h, 2])?,
            bias: next("head.bias", [1, 2])?,
        };
        if tensors.next().is_some() {
            return Err(ModelError::Checkpoint("unexpected trailing tensors".into()));
        }
        Ok(GtModel::from_parts(cfg, self.normalizer, user_encoder, ap_encoder, layers, head))
    }
}

pub fn save_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<(), ModelError> {
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer(&mut out, checkpoint).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, ModelError> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let ckpt: Checkpoint =
        serde_json::from_reader(reader).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
    if ckpt.magic != CHECKPOINT_MAGIC {
        return Err(ModelError::Checkpoint(format!("bad magic header `{}`", ckpt.magic)));
    }
    Ok(ckpt)
}
