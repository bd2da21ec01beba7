use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::nn::{AffineLayer, AffineVars, Conv1dLayer, Conv1dVars, Tape, Tensor, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EncoderSpec {
    /// Flatten the window, then affine + ReLU per hidden width, then a linear
    /// projection to `feature_dim`.
    Mlp {
        #[serde(default)]
        hidden: Vec<usize>,
        feature_dim: usize,
    },
    /// Valid temporal convolutions with ReLU, mean over time, then a linear
    /// projection to `feature_dim`.
    Conv1d {
        channels: Vec<usize>,
        kernels: Vec<usize>,
        feature_dim: usize,
    },
}

impl Default for EncoderSpec {
    fn default() -> Self {
        EncoderSpec::Mlp {
            hidden: vec![128, 64],
            feature_dim: 64,
        }
    }
}

impl EncoderSpec {
    pub fn feature_dim(&self) -> usize {
        match self {
            EncoderSpec::Mlp { feature_dim, .. } | EncoderSpec::Conv1d { feature_dim, .. } => *feature_dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.feature_dim() >= 2, Usage, "feature_dim must be at least 2");
        match self {
            EncoderSpec::Mlp { hidden, .. } => {
                ensure!(hidden.iter().all(|&h| h > 0), Usage, "hidden widths must be positive");
            }
            EncoderSpec::Conv1d { channels, kernels, .. } => {
                ensure!(!channels.is_empty(), Usage, "conv1d encoder needs at least one layer");
                ensure!(
                    channels.len() == kernels.len(),
                    Usage,
                    "{} channel counts for {} kernel sizes",
                    channels.len(),
                    kernels.len()
                );
                ensure!(
                    channels.iter().chain(kernels).all(|&v| v > 0),
                    Usage,
                    "channel counts and kernel sizes must be positive"
                );
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Encoder {
    Mlp {
        layers: Vec<AffineLayer>,
    },
    Conv1d {
        convs: Vec<Conv1dLayer>,
        head: AffineLayer,
    },
}

#[derive(Clone, Debug)]
pub enum EncoderVars {
    Mlp(Vec<AffineVars>),
    Conv1d(Vec<Conv1dVars>, AffineVars),
}

impl Encoder {
    /// Initialize for windows of `channels × len`.
    pub fn init<R: Rng + ?Sized>(spec: &EncoderSpec, rng: &mut R, channels: usize, len: usize) -> Result<Self> {
        spec.validate()?;
        ensure!(channels > 0 && len > 0, Usage, "empty input shape");
        Ok(match spec {
            EncoderSpec::Mlp { hidden, feature_dim } => {
                let mut layers = Vec::new();
                let mut width = channels * len;
                for &h in hidden {
                    layers.push(AffineLayer::init(rng, width, h));
                    width = h;
                }
                layers.push(AffineLayer::init(rng, width, *feature_dim));
                Encoder::Mlp { layers }
            }
            EncoderSpec::Conv1d {
                channels: widths,
                kernels,
                feature_dim,
            } => {
                let mut convs = Vec::new();
                let (mut c_in, mut l) = (channels, len);
                for (&c_out, &k) in widths.iter().zip(kernels) {
                    ensure!(
                        k <= l,
                        Usage,
                        "kernel {k} is longer than the {l} remaining timesteps"
                    );
                    convs.push(Conv1dLayer::init(rng, c_in, c_out, k));
                    c_in = c_out;
                    l -= k - 1;
                }
                let head = AffineLayer::init(rng, c_in, *feature_dim);
                Encoder::Conv1d { convs, head }
            }
        })
    }

    pub fn feature_dim(&self) -> usize {
        match self {
            Encoder::Mlp { layers } => layers.last().expect("at least one layer").out_dim(),
            Encoder::Conv1d { head, .. } => head.out_dim(),
        }
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    /// Multiply-adds for one window of `len` timesteps.
    pub fn macs(&self, len: usize) -> u64 {
        match self {
            Encoder::Mlp { layers } => layers
                .iter()
                .map(|l| (l.in_dim() * l.out_dim()) as u64)
                .sum(),
            Encoder::Conv1d { convs, head } => {
                let mut l = len;
                let mut total = 0u64;
                for c in convs {
                    l = l + 1 - c.kernel();
                    total += (c.c_out() * c.c_in() * c.kernel() * l) as u64;
                }
                total + (head.in_dim() * head.out_dim()) as u64
            }
        }
    }

    pub fn params(&self) -> Vec<&Tensor> {
        match self {
            Encoder::Mlp { layers } => layers.iter().flat_map(AffineLayer::params).collect(),
            Encoder::Conv1d { convs, head } => convs
                .iter()
                .flat_map(Conv1dLayer::params)
                .chain(head.params())
                .collect(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            Encoder::Mlp { layers } => layers.iter_mut().flat_map(AffineLayer::params_mut).collect(),
            Encoder::Conv1d { convs, head } => convs
                .iter_mut()
                .flat_map(Conv1dLayer::params_mut)
                .chain(head.params_mut())
                .collect(),
        }
    }

    /// Parameter names, in [`Encoder::params`] order.
    pub fn param_names(&self) -> Vec<String> {
        let pair = |prefix: String| [format!("{prefix}.weight"), format!("{prefix}.bias")];
        match self {
            Encoder::Mlp { layers } => (0..layers.len()).flat_map(|i| pair(format!("mlp.{i}"))).collect(),
            Encoder::Conv1d { convs, .. } => (0..convs.len())
                .flat_map(|i| pair(format!("conv.{i}")))
                .chain(pair("head".into()))
                .collect(),
        }
    }

    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> EncoderVars {
        match self {
            Encoder::Mlp { layers } => EncoderVars::Mlp(layers.iter().map(|l| l.bind(tape, trainable)).collect()),
            Encoder::Conv1d { convs, head } => EncoderVars::Conv1d(
                convs.iter().map(|c| c.bind(tape, trainable)).collect(),
                head.bind(tape, trainable),
            ),
        }
    }
}

impl EncoderVars {
    /// `[B × C × L]` windows to `[B × F]` features.
    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        match self {
            EncoderVars::Mlp(layers) => {
                let (b, c, l) = tape.value(x).dims3()?;
                let mut h = tape.reshape(x, vec![b, c * l])?;
                for (i, layer) in layers.iter().enumerate() {
                    h = layer.forward(tape, h)?;
                    if i + 1 < layers.len() {
                        h = tape.relu(h);
                    }
                }
                Ok(h)
            }
            EncoderVars::Conv1d(convs, head) => {
                let mut h = x;
                for conv in convs {
                    h = conv.forward(tape, h)?;
                    h = tape.relu(h);
                }
                let pooled = tape.mean_time(h)?;
                head.forward(tape, pooled)
            }
        }
    }

    pub fn vars(&self) -> Vec<Var> {
        match self {
            EncoderVars::Mlp(layers) => layers.iter().flat_map(|l| l.vars()).collect(),
            EncoderVars::Conv1d(convs, head) => convs
                .iter()
                .flat_map(|c| c.vars())
                .chain(head.vars())
                .collect(),
        }
    }
}
