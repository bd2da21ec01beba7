use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{ensure, Result};

/// Uniform fan-in scaled initialization, `U(-sqrt(6/fan_in), sqrt(6/fan_in))`.
fn kaiming_uniform<R: Rng + ?Sized>(rng: &mut R, shape: &[usize], fan_in: usize) -> Tensor {
    let bound = (6.0 / fan_in as f64).sqrt();
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-bound..bound)).collect();
    Tensor::new(shape.to_vec(), data).expect("shape and data agree")
}

/// Fully connected layer, `y = W x + b`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineLayer {
    pub weight: Tensor,
    pub bias: Tensor,
}

/// Tape handles of an [`AffineLayer`]'s parameters.
#[derive(Clone, Copy, Debug)]
pub struct AffineVars {
    pub weight: Var,
    pub bias: Var,
}

impl AffineLayer {
    pub fn new(weight: Tensor, bias: Tensor) -> Result<Self> {
        let (out, _) = weight.dims2()?;
        ensure!(
            bias.shape() == [out],
            Dimension,
            "bias shape {:?} does not match weight rows {out}",
            bias.shape()
        );
        Ok(AffineLayer { weight, bias })
    }

    pub fn init<R: Rng + ?Sized>(rng: &mut R, in_dim: usize, out_dim: usize) -> Self {
        AffineLayer {
            weight: kaiming_uniform(rng, &[out_dim, in_dim], in_dim),
            bias: Tensor::zeros(&[out_dim]),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_dim(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> AffineVars {
        AffineVars {
            weight: tape.leaf(self.weight.clone(), trainable),
            bias: tape.leaf(self.bias.clone(), trainable),
        }
    }

    pub fn params(&self) -> Vec<&Tensor> {
        vec![&self.weight, &self.bias]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.weight, &mut self.bias]
    }
}

impl AffineVars {
    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        tape.affine(x, self.weight, self.bias)
    }

    pub fn vars(&self) -> [Var; 2] {
        [self.weight, self.bias]
    }
}

/// Stride-1 unpadded temporal convolution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Conv1dLayer {
    /// `[c_out × c_in × kernel]`
    pub weight: Tensor,
    pub bias: Tensor,
}

#[derive(Clone, Copy, Debug)]
pub struct Conv1dVars {
    pub weight: Var,
    pub bias: Var,
}

impl Conv1dLayer {
    pub fn init<R: Rng + ?Sized>(rng: &mut R, c_in: usize, c_out: usize, kernel: usize) -> Self {
        Conv1dLayer {
            weight: kaiming_uniform(rng, &[c_out, c_in, kernel], c_in * kernel),
            bias: Tensor::zeros(&[c_out]),
        }
    }

    pub fn c_in(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn c_out(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn kernel(&self) -> usize {
        self.weight.shape()[2]
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> Conv1dVars {
        Conv1dVars {
            weight: tape.leaf(self.weight.clone(), trainable),
            bias: tape.leaf(self.bias.clone(), trainable),
        }
    }

    pub fn params(&self) -> Vec<&Tensor> {
        vec![&self.weight, &self.bias]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.weight, &mut self.bias]
    }
}

impl Conv1dVars {
    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        tape.conv1d(x, self.weight, self.bias)
    }

    pub fn vars(&self) -> [Var; 2] {
        [self.weight, self.bias]
    }
}
