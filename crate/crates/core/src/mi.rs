//! Discriminators, the corruption function and the binary cross-entropy
//! InfoMax objective.
//!
//! A positive pair is `(h_v(t), x_v(t+k))` taken from the real series; a
//! negative pair keeps the embedding but takes the future features from a
//! row-permuted snapshot, so it is a draw from the product of marginals.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::{sigmoid, Linear, LinearVars, Tape, Tensor, Var};
use crate::params::{prefixed, ParamSet};

/// Scores are clamped into `[SCORE_EPS, 1 - SCORE_EPS]` before taking logs.
pub const SCORE_EPS: f64 = 1e-7;

/// Two-layer scorer over `h ⊕ x` for one future offset `k`.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscriminatorParams {
    pub horizon: usize,
    pub hidden: Linear,
    pub output: Linear,
}

#[derive(Clone, Copy, Debug)]
pub struct DiscriminatorVars {
    pub hidden: LinearVars,
    pub output: LinearVars,
}

impl DiscriminatorParams {
    pub fn new<R: Rng + ?Sized>(
        horizon: usize,
        embedding: usize,
        features: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Self {
        Self {
            horizon,
            hidden: Linear::new(embedding + features, hidden, rng),
            output: Linear::new(hidden, 1, rng),
        }
    }

    pub fn zeros(horizon: usize, embedding: usize, features: usize, hidden: usize) -> Self {
        Self {
            horizon,
            hidden: Linear::zeros(embedding + features, hidden),
            output: Linear::zeros(hidden, 1),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.hidden.fan_in()
    }

    pub fn bind(&self, tape: &mut Tape) -> DiscriminatorVars {
        DiscriminatorVars {
            hidden: self.hidden.bind(tape),
            output: self.output.bind(tape),
        }
    }

    fn prefix(&self) -> String {
        format!("disc_k{}", self.horizon)
    }
}

impl ParamSet for DiscriminatorParams {
    fn named_tensors_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let p = self.prefix();
        let [w1, b1] = self.hidden.tensors_mut();
        let [w2, b2] = self.output.tensors_mut();
        vec![
            (prefixed(&p, "hidden.weight"), w1),
            (prefixed(&p, "hidden.bias"), b1),
            (prefixed(&p, "output.weight"), w2),
            (prefixed(&p, "output.bias"), b2),
        ]
    }

    fn named_tensors(&self) -> Vec<(String, Tensor)> {
        let p = self.prefix();
        vec![
            (prefixed(&p, "hidden.weight"), self.hidden.weight.clone()),
            (prefixed(&p, "hidden.bias"), self.hidden.bias.clone()),
            (prefixed(&p, "output.weight"), self.output.weight.clone()),
            (prefixed(&p, "output.bias"), self.output.bias.clone()),
        ]
    }
}

impl DiscriminatorVars {
    /// Scores `M × 1` in `(0, 1)` for `M` pairs (`h: M × K`, `x: M × F`).
    pub fn forward(&self, tape: &mut Tape, h: Var, x: Var) -> Result<Var> {
        let joint = tape.concat(h, x)?;
        let z = self.hidden.forward(tape, joint)?;
        let z = tape.relu(z);
        let logit = self.output.forward(tape, z)?;
        Ok(tape.sigmoid(logit))
    }

    pub fn vars(&self) -> Vec<Var> {
        [self.hidden.vars(), self.output.vars()]
            .into_iter()
            .flatten()
            .collect()
    }
}

/// `sigmoid(layer2(relu(layer1(h ⊕ x))))` for a single pair.
pub fn discriminate(h: &[f64], x: &[f64], params: &DiscriminatorParams) -> Result<f64> {
    if h.len() + x.len() != params.input_dim() {
        return Err(Error::dim(
            "discriminate",
            &[h.len(), x.len()],
            &[params.input_dim()],
        ));
    }
    let joint: Vec<f64> = h.iter().chain(x).copied().collect();
    let hidden: Vec<f64> = params
        .hidden
        .apply(&joint)
        .into_iter()
        .map(|v| v.max(0.0))
        .collect();
    Ok(sigmoid(params.output.apply(&hidden)[0]))
}

/// `out[i] = x[perm[i]]` for an `N × F` snapshot.
pub fn permute_rows(x: &[f64], features: usize, perm: &[usize]) -> Vec<f64> {
    debug_assert_eq!(x.len(), perm.len() * features);
    let mut out = Vec::with_capacity(x.len());
    for &src in perm {
        out.extend_from_slice(&x[src * features..(src + 1) * features]);
    }
    out
}

pub fn random_permutation<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    perm
}

/// Corrupted copy of one `N × F` snapshot: whole feature rows shuffled by a
/// uniformly random permutation.
pub fn corrupt<R: Rng + ?Sized>(x_t: &Tensor, rng: &mut R) -> Result<Tensor> {
    if x_t.shape().len() != 2 {
        return Err(Error::Contract(format!(
            "corrupt expects an N × F snapshot, got {:?}",
            x_t.shape()
        )));
    }
    let n = x_t.rows();
    if n < 2 {
        return Err(Error::Corruption(
            "a single-node graph has no distinct permutation".into(),
        ));
    }
    let perm = random_permutation(n, rng);
    Tensor::new(x_t.shape().to_vec(), permute_rows(x_t.data(), x_t.cols(), &perm))
}

/// `-(1/2B) Σ [ln pos_i + ln(1 - neg_i)]` with scores clamped away from 0/1.
pub fn infomax_loss(pos_scores: &[f64], neg_scores: &[f64]) -> Result<f64> {
    if pos_scores.is_empty() || neg_scores.is_empty() {
        return Err(Error::Contract("infomax_loss needs non-empty batches".into()));
    }
    let clamp = |s: f64| s.clamp(SCORE_EPS, 1.0 - SCORE_EPS);
    let pos: f64 = pos_scores.iter().map(|&s| clamp(s).ln()).sum::<f64>() / pos_scores.len() as f64;
    let neg: f64 =
        neg_scores.iter().map(|&s| (1.0 - clamp(s)).ln()).sum::<f64>() / neg_scores.len() as f64;
    Ok(-(pos + neg) / 2.0)
}

/// Differentiable form of [`infomax_loss`].
pub fn infomax_loss_var(tape: &mut Tape, pos: Var, neg: Var) -> Var {
    let p = tape.clamp(pos, SCORE_EPS, 1.0 - SCORE_EPS);
    let lp = tape.ln(p);
    let mp = tape.mean(lp);
    let n = tape.clamp(neg, SCORE_EPS, 1.0 - SCORE_EPS);
    let one_minus = tape.affine(n, -1.0, 1.0);
    let ln = tape.ln(one_minus);
    let mn = tape.mean(ln);
    let total = tape.add(mp, mn).expect("scalars always add");
    tape.scale(total, -0.5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::seeded_rng;

    #[test]
    fn uninformed_loss_is_ln2() {
        let l = infomax_loss(&[0.5; 4], &[0.5; 4]).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn perfect_discrimination_tends_to_zero() {
        let l = infomax_loss(&[1.0, 1.0], &[0.0, 0.0]).unwrap();
        assert!(l > 0.0 && l < 1e-6);
    }

    #[test]
    fn hand_value() {
        let l = infomax_loss(&[0.9], &[0.2]).unwrap();
        let expected = -(0.9f64.ln() + 0.8f64.ln()) / 2.0;
        assert!((l - expected).abs() < 1e-15);
        assert!((l - 0.1643).abs() < 1e-4);
    }

    #[test]
    fn tape_loss_matches_plain_loss() {
        let pos = [0.9, 0.6, 0.999_999_99];
        let neg = [0.2, 0.0, 0.7];
        let mut tape = Tape::new();
        let p = tape.constant(Tensor::vector(pos.to_vec()));
        let n = tape.constant(Tensor::vector(neg.to_vec()));
        let l = infomax_loss_var(&mut tape, p, n);
        assert!((tape.scalar(l) - infomax_loss(&pos, &neg).unwrap()).abs() < 1e-14);
    }

    #[test]
    fn empty_batches_rejected() {
        assert!(infomax_loss(&[], &[0.5]).is_err());
    }

    #[test]
    fn zero_params_score_half() {
        let d = DiscriminatorParams::zeros(1, 4, 2, 6);
        assert_eq!(discriminate(&[1.0, -2.0, 3.0, 0.5], &[9.0, 1.0], &d).unwrap(), 0.5);
    }

    #[test]
    fn discriminate_dim_mismatch() {
        let d = DiscriminatorParams::zeros(1, 4, 2, 6);
        assert!(matches!(
            discriminate(&[1.0; 3], &[1.0; 2], &d),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn single_node_cannot_be_corrupted() {
        let x = Tensor::zeros(&[1, 2]);
        assert!(matches!(corrupt(&x, &mut seeded_rng(0)), Err(Error::Corruption(_))));
    }

    #[test]
    fn identity_permutation_is_identity() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        assert_eq!(permute_rows(&x, 2, &[0, 1, 2]), x.to_vec());
        assert_eq!(permute_rows(&x, 2, &[2, 0, 1]), vec![5.0, 6.0, 1.0, 2.0, 3.0, 4.0]);
    }
}
