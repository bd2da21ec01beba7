//! Self-contained training artifact.
//!
//! Binary layout, all integers little-endian:
//!
//! ```text
//! magic      8 bytes   "KPCKPT\0\0"
//! version    u32
//! config     u64 byte length, then the training config as TOML text
//! metadata   u64 byte length, then a JSON object (task, payloads,
//!            normalization, history, ...)
//! tensors    u32 count, then per tensor:
//!              u32 name length, name (UTF-8)
//!              u32 rank, rank × u64 dims
//!              prod(dims) × f64
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Encoder, History, TrainConfig};
use crate::anchors::{Payload, Provenance, TaskKind};
use crate::data::NormalizationStats;
use crate::error::{KpError, Result};
use crate::kploss::AlignmentModule;
use crate::nn::{AffineLayer, Conv1dLayer, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"KPCKPT\0\0";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub version: u32,
    pub task: TaskKind,
    pub config: TrainConfig,
    pub encoder: Encoder,
    pub alignment: AlignmentModule,
    /// `[Z × F]` anchors mapped into feature space.
    pub aligned_anchors: Tensor,
    pub payloads: Vec<Payload>,
    pub anchor_provenance: Provenance,
    pub normalization: NormalizationStats,
    pub window_len: usize,
    pub channel_names: Vec<String>,
    pub classes: Option<Vec<String>>,
    pub r_max: Option<f64>,
    pub history: History,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum EncoderKind {
    Mlp,
    Conv1d,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Metadata {
    task: TaskKind,
    encoder_kind: EncoderKind,
    encoder_layers: usize,
    payloads: Vec<Payload>,
    anchor_provenance: Provenance,
    normalization: NormalizationStats,
    window_len: usize,
    channel_names: Vec<String>,
    classes: Option<Vec<String>>,
    r_max: Option<f64>,
    history: History,
}

fn bad(msg: impl Into<String>) -> KpError {
    KpError::Data(format!("checkpoint: {}", msg.into()))
}

impl Checkpoint {
    fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out: Vec<(String, &Tensor)> = self
            .encoder
            .param_names()
            .into_iter()
            .map(|n| format!("encoder.{n}"))
            .zip(self.encoder.params())
            .collect();
        let align_names = ["align.1.weight", "align.1.bias", "align.2.weight", "align.2.bias"];
        out.extend(align_names.iter().map(|n| n.to_string()).zip(self.alignment.params()));
        out.push(("aligned_anchors".into(), &self.aligned_anchors));
        out
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let (encoder_kind, encoder_layers) = match &self.encoder {
            Encoder::Mlp { layers } => (EncoderKind::Mlp, layers.len()),
            Encoder::Conv1d { convs, .. } => (EncoderKind::Conv1d, convs.len()),
        };
        let meta = Metadata {
            task: self.task,
            encoder_kind,
            encoder_layers,
            payloads: self.payloads.clone(),
            anchor_provenance: self.anchor_provenance.clone(),
            normalization: self.normalization.clone(),
            window_len: self.window_len,
            channel_names: self.channel_names.clone(),
            classes: self.classes.clone(),
            r_max: self.r_max,
            history: self.history.clone(),
        };
        let config = self.config.to_toml_string();
        let meta = serde_json::to_string(&meta).expect("metadata serializes");
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&self.version.to_le_bytes());
        for text in [&config, &meta] {
            out.extend_from_slice(&(text.len() as u64).to_le_bytes());
            out.extend_from_slice(text.as_bytes());
        }
        let tensors = self.named_tensors();
        out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
        for (name, t) in tensors {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != CHECKPOINT_MAGIC {
            return Err(bad("not a checkpoint file"));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let config_text = r.text()?;
        let config = TrainConfig::from_toml_str(config_text).map_err(|e| bad(e.to_string()))?;
        let meta: Metadata = serde_json::from_str(r.text()?).map_err(|e| bad(e.to_string()))?;
        let count = r.u32()? as usize;
        let mut tensors: Vec<(String, Tensor)> = Vec::with_capacity(count);
        for _ in 0..count {
            let n = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(n)?)
                .map_err(|_| bad("tensor name is not UTF-8"))?
                .to_string();
            let rank = r.u32()? as usize;
            let shape = (0..rank)
                .map(|_| r.u64().map(|d| d as usize))
                .collect::<Result<Vec<usize>>>()?;
            let len = shape
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .filter(|&l| l.checked_mul(8).is_some_and(|b| b <= r.remaining()))
                .ok_or_else(|| bad(format!("tensor {name} does not fit in the file")))?;
            let data = r
                .take(len * 8)?
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            let t = Tensor::new(shape, data).map_err(|e| bad(format!("tensor {name}: {e}")))?;
            tensors.push((name, t));
        }
        if r.remaining() != 0 {
            return Err(bad("trailing bytes"));
        }
        let mut get = |name: &str| -> Result<Tensor> {
            let i = tensors
                .iter()
                .position(|(n, _)| n == name)
                .ok_or_else(|| bad(format!("missing tensor {name}")))?;
            Ok(tensors.swap_remove(i).1)
        };
        let affine = |w: Tensor, b: Tensor| AffineLayer::new(w, b).map_err(|e| bad(e.to_string()));
        let encoder = match meta.encoder_kind {
            EncoderKind::Mlp => Encoder::Mlp {
                layers: (0..meta.encoder_layers)
                    .map(|i| affine(get(&format!("encoder.mlp.{i}.weight"))?, get(&format!("encoder.mlp.{i}.bias"))?))
                    .collect::<Result<_>>()?,
            },
            EncoderKind::Conv1d => {
                let convs = (0..meta.encoder_layers)
                    .map(|i| {
                        let weight = get(&format!("encoder.conv.{i}.weight"))?;
                        let bias = get(&format!("encoder.conv.{i}.bias"))?;
                        if weight.rank() != 3 || bias.shape() != [weight.shape()[0]] {
                            return Err(bad(format!("conv layer {i} has inconsistent shapes")));
                        }
                        Ok(Conv1dLayer { weight, bias })
                    })
                    .collect::<Result<_>>()?;
                let head = affine(get("encoder.head.weight")?, get("encoder.head.bias")?)?;
                Encoder::Conv1d { convs, head }
            }
        };
        let alignment = AlignmentModule::new(
            affine(get("align.1.weight")?, get("align.1.bias")?)?,
            affine(get("align.2.weight")?, get("align.2.bias")?)?,
        )
        .map_err(|e| bad(e.to_string()))?;
        let aligned_anchors = get("aligned_anchors")?;
        if !tensors.is_empty() {
            return Err(bad(format!("unexpected tensor {}", tensors[0].0)));
        }
        if aligned_anchors.rank() != 2
            || aligned_anchors.shape()[0] != meta.payloads.len()
            || aligned_anchors.shape()[1] != encoder.feature_dim()
        {
            return Err(bad("aligned anchor matrix does not match payloads and features"));
        }
        Ok(Checkpoint {
            version,
            task: meta.task,
            config,
            encoder,
            alignment,
            aligned_anchors,
            payloads: meta.payloads,
            anchor_provenance: meta.anchor_provenance,
            normalization: meta.normalization,
            window_len: meta.window_len,
            channel_names: meta.channel_names,
            classes: meta.classes,
            r_max: meta.r_max,
            history: meta.history,
        })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if n > self.remaining() {
            return Err(bad("file is truncated"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn text(&mut self) -> Result<&'a str> {
        let n = usize::try_from(self.u64()?).map_err(|_| bad("block too large"))?;
        std::str::from_utf8(self.take(n)?).map_err(|_| bad("text block is not UTF-8"))
    }
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, ckpt.to_bytes())?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = std::fs::read(path)
        .map_err(|e| KpError::Data(format!("cannot read checkpoint {}: {e}", path.display())))?;
    Checkpoint::from_bytes(&bytes)
}
