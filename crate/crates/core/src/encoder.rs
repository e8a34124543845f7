//! Graph-convolutional node encoder.
//!
//! A per-node linear layer followed by two graph convolutions. The encoder
//! sees one time step at a time; temporal context reaches it only through
//! the time-of-day feature.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Activation, Linear, LinearVars, Tape, Tensor, Var};
use crate::params::{prefixed, ParamSet};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderConfig {
    pub in_features: usize,
    pub hidden: usize,
    pub embedding: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            in_features: crate::dataset::NUM_FEATURES,
            hidden: 64,
            embedding: 128,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderParams {
    pub linear: Linear,
    pub gc1: Linear,
    pub gc2: Linear,
}

#[derive(Clone, Copy, Debug)]
pub struct EncoderVars {
    pub linear: LinearVars,
    pub gc1: LinearVars,
    pub gc2: LinearVars,
}

impl EncoderParams {
    pub fn new<R: Rng + ?Sized>(config: EncoderConfig, rng: &mut R) -> Self {
        Self {
            linear: Linear::new(config.in_features, config.hidden, rng),
            gc1: Linear::new(config.hidden, config.hidden, rng),
            gc2: Linear::new(config.hidden, config.embedding, rng),
        }
    }

    pub fn zeros(config: EncoderConfig) -> Self {
        Self {
            linear: Linear::zeros(config.in_features, config.hidden),
            gc1: Linear::zeros(config.hidden, config.hidden),
            gc2: Linear::zeros(config.hidden, config.embedding),
        }
    }

    pub fn config(&self) -> EncoderConfig {
        EncoderConfig {
            in_features: self.linear.fan_in(),
            hidden: self.linear.fan_out(),
            embedding: self.gc2.fan_out(),
        }
    }

    pub fn bind(&self, tape: &mut Tape) -> EncoderVars {
        EncoderVars {
            linear: self.linear.bind(tape),
            gc1: self.gc1.bind(tape),
            gc2: self.gc2.bind(tape),
        }
    }

    /// Embeddings for a stack of snapshots: `x` holds `B·N` rows of `F`
    /// features (snapshot-major) and the result holds `B·N` rows of `K`.
    pub fn encode_stacked(&self, x: &Tensor, a_hat: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape);
        let a = tape.constant(a_hat.clone());
        let xv = tape.constant(x.clone());
        let h = vars.forward(&mut tape, xv, a)?;
        Ok(tape.value(h).clone())
    }
}

impl ParamSet for EncoderParams {
    fn named_tensors_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out = Vec::with_capacity(6);
        for (layer, lin) in [
            ("linear", &mut self.linear),
            ("gc1", &mut self.gc1),
            ("gc2", &mut self.gc2),
        ] {
            let [w, b] = lin.tensors_mut();
            out.push((prefixed(layer, "weight"), w));
            out.push((prefixed(layer, "bias"), b));
        }
        out
    }

    fn named_tensors(&self) -> Vec<(String, Tensor)> {
        let mut out = Vec::with_capacity(6);
        for (layer, lin) in [("linear", &self.linear), ("gc1", &self.gc1), ("gc2", &self.gc2)] {
            out.push((prefixed(layer, "weight"), lin.weight.clone()));
            out.push((prefixed(layer, "bias"), lin.bias.clone()));
        }
        out
    }
}

impl EncoderVars {
    /// `gc2(gc1(relu(linear(x))))` with ReLU after `gc1` and identity after
    /// `gc2`.
    pub fn forward(&self, tape: &mut Tape, x: Var, a_hat: Var) -> Result<Var> {
        let n = tape.value(a_hat).shape()[0];
        let rows = tape.value(x).rows();
        if n == 0 || !rows.is_multiple_of(n) {
            return Err(Error::dim("encode", tape.value(x).shape(), tape.value(a_hat).shape()));
        }
        let h0 = self.linear.forward(tape, x)?;
        let h0 = tape.relu(h0);
        let h1 = gcn_layer(tape, h0, a_hat, &self.gc1, Some(Activation::Relu))?;
        gcn_layer(tape, h1, a_hat, &self.gc2, None)
    }

    pub fn vars(&self) -> Vec<Var> {
        [self.linear.vars(), self.gc1.vars(), self.gc2.vars()]
            .into_iter()
            .flatten()
            .collect()
    }
}

/// `activation(Â · h · W + b)`, applied blockwise when `h` stacks several
/// snapshots.
pub fn gcn_layer(
    tape: &mut Tape,
    h_in: Var,
    a_hat: Var,
    layer: &LinearVars,
    activation: Option<Activation>,
) -> Result<Var> {
    let mixed = tape.propagate(a_hat, h_in)?;
    let out = layer.forward(tape, mixed)?;
    Ok(match activation {
        Some(f) => tape.unary(out, f),
        None => out,
    })
}

/// Embeddings `N × K` for one snapshot `x_t: N × F`.
pub fn encode(x_t: &Tensor, a_hat: &Tensor, params: &EncoderParams) -> Result<Tensor> {
    let n = a_hat.shape()[0];
    if x_t.shape().len() != 2 || x_t.rows() != n {
        return Err(Error::dim("encode", x_t.shape(), a_hat.shape()));
    }
    if x_t.cols() != params.linear.fan_in() {
        return Err(Error::dim("encode", x_t.shape(), params.linear.weight.shape()));
    }
    params.encode_stacked(x_t, a_hat)
}
