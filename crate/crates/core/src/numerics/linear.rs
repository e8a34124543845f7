use rand::Rng;

use crate::error::Result;
use crate::numerics::init::glorot_init;
use crate::numerics::tape::{Tape, Var};
use crate::numerics::tensor::Tensor;

/// Affine map `x · weight + bias` with `weight: in × out`, `bias: out`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub weight: Tensor,
    pub bias: Tensor,
}

/// A [`Linear`] whose tensors live on a tape.
#[derive(Clone, Copy, Debug)]
pub struct LinearVars {
    pub weight: Var,
    pub bias: Var,
}

impl Linear {
    /// Glorot weights, zero bias.
    pub fn new<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        Self {
            weight: glorot_init(fan_in, fan_out, rng),
            bias: Tensor::zeros(&[fan_out]),
        }
    }

    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            weight: Tensor::zeros(&[fan_in, fan_out]),
            bias: Tensor::zeros(&[fan_out]),
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn fan_out(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn bind(&self, tape: &mut Tape) -> LinearVars {
        LinearVars {
            weight: tape.param(&self.weight),
            bias: tape.param(&self.bias),
        }
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor; 2] {
        [&mut self.weight, &mut self.bias]
    }

    /// Plain forward pass without recording, row by row.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let (fan_in, fan_out) = (self.fan_in(), self.fan_out());
        debug_assert_eq!(x.len(), fan_in);
        let w = self.weight.data();
        let mut out = self.bias.data().to_vec();
        for (i, &xi) in x.iter().enumerate() {
            for (o, acc) in out.iter_mut().enumerate() {
                *acc += xi * w[i * fan_out + o];
            }
        }
        out
    }
}

impl LinearVars {
    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let xw = tape.matmul(x, self.weight)?;
        tape.add(xw, self.bias)
    }

    pub fn vars(&self) -> [Var; 2] {
        [self.weight, self.bias]
    }
}
