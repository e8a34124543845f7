//! Unsupervised InfoMax training of the encoder and its discriminators, and
//! embedding export.

use std::ops::Range;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::FeatureSeries;
use crate::encoder::{EncoderConfig, EncoderParams, EncoderVars};
use crate::error::{Error, Result};
use crate::mi::{infomax_loss_var, permute_rows, random_permutation, DiscriminatorParams, DiscriminatorVars};
use crate::numerics::tape::gemm;
use crate::numerics::{collect_grads, seeded_rng, AdamState, LrSchedule, SeededRng, Tape, Tensor, Var};
use crate::params::ParamSet;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PretrainConfig {
    pub epochs: usize,
    /// Time steps per optimizer step.
    pub batch_size: usize,
    pub schedule: LrSchedule,
    /// Future offsets, one discriminator each.
    pub ks: Vec<usize>,
    pub hidden: usize,
    pub embedding: usize,
    pub disc_hidden: usize,
    #[serde(skip)]
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 64,
            schedule: LrSchedule::new(1e-3),
            ks: vec![1, 3, 6],
            hidden: 64,
            embedding: 128,
            disc_hidden: 6,
            seed: 0,
        }
    }
}

impl PretrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 || self.batch_size < 1 {
            return Err(Error::Config("pretrain epochs and batch_size must be >= 1".into()));
        }
        if self.ks.is_empty() || self.ks.contains(&0) {
            return Err(Error::Config("pretrain ks must be non-empty and all >= 1".into()));
        }
        if self.hidden < 1 || self.embedding < 1 || self.disc_hidden < 1 {
            return Err(Error::Config("layer sizes must be >= 1".into()));
        }
        self.schedule.validate()
    }

    pub fn max_k(&self) -> usize {
        self.ks.iter().copied().max().unwrap_or(0)
    }
}

/// Encoder plus one discriminator per future offset.
#[derive(Clone, Debug, PartialEq)]
pub struct InfoMaxModel {
    pub encoder: EncoderParams,
    pub discriminators: Vec<DiscriminatorParams>,
}

impl InfoMaxModel {
    pub fn new<R: Rng + ?Sized>(features: usize, config: &PretrainConfig, rng: &mut R) -> Self {
        let enc = EncoderConfig {
            in_features: features,
            hidden: config.hidden,
            embedding: config.embedding,
        };
        let encoder = EncoderParams::new(enc, rng);
        let discriminators = config
            .ks
            .iter()
            .map(|&k| DiscriminatorParams::new(k, config.embedding, features, config.disc_hidden, rng))
            .collect();
        Self {
            encoder,
            discriminators,
        }
    }

    fn bind(&self, tape: &mut Tape) -> (EncoderVars, Vec<DiscriminatorVars>, Vec<Var>) {
        let enc = self.encoder.bind(tape);
        let discs: Vec<_> = self.discriminators.iter().map(|d| d.bind(tape)).collect();
        let mut vars = enc.vars();
        for d in &discs {
            vars.extend(d.vars());
        }
        (enc, discs, vars)
    }
}

impl ParamSet for InfoMaxModel {
    fn named_tensors_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out = self.encoder.named_tensors_mut();
        for d in &mut self.discriminators {
            out.extend(d.named_tensors_mut());
        }
        out
    }

    fn named_tensors(&self) -> Vec<(String, Tensor)> {
        let mut out = self.encoder.named_tensors();
        for d in &self.discriminators {
            out.extend(d.named_tensors());
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub loss: f64,
    /// Held-out pair accuracy, when a held-out range was given.
    pub accuracy: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    /// Held-out (or training, without a held-out range) loss before any update.
    pub initial_loss: f64,
    pub initial_accuracy: Option<f64>,
    pub epochs: Vec<EpochRecord>,
}

impl TrainHistory {
    pub fn final_loss(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.loss)
    }

    pub fn final_accuracy(&self) -> Option<f64> {
        self.epochs.last().and_then(|e| e.accuracy)
    }
}

#[derive(Clone, Debug)]
pub struct PretrainOutput {
    pub model: InfoMaxModel,
    pub history: TrainHistory,
}

/// Time steps `t` in `range` whose every future `t + k` stays inside it.
pub fn valid_times(range: &Range<usize>, max_k: usize) -> Vec<usize> {
    if range.len() <= max_k {
        return Vec::new();
    }
    (range.start..range.end - max_k).collect()
}

/// Positive and corrupted futures for a set of time steps.
struct PairBatch {
    x: Tensor,
    futures: Vec<Tensor>,
    corrupted: Vec<Tensor>,
}

fn build_batch<R: Rng + ?Sized>(
    series: &FeatureSeries,
    times: &[usize],
    ks: &[usize],
    rng: &mut R,
) -> Result<PairBatch> {
    let (n, f) = (series.nodes(), series.features());
    let mut x = Vec::with_capacity(times.len() * n * f);
    for &t in times {
        x.extend_from_slice(series.snapshot(t));
    }
    let mut futures = Vec::with_capacity(ks.len());
    let mut corrupted = Vec::with_capacity(ks.len());
    for &k in ks {
        let mut pos = Vec::with_capacity(x.len());
        let mut neg = Vec::with_capacity(x.len());
        for &t in times {
            if t + k >= series.steps() {
                return Err(Error::Contract(format!(
                    "pair (t={t}, k={k}) reaches past the last step {}",
                    series.steps() - 1
                )));
            }
            let snap = series.snapshot(t + k);
            pos.extend_from_slice(snap);
            neg.extend(permute_rows(snap, f, &random_permutation(n, rng)));
        }
        futures.push(Tensor::matrix(times.len() * n, f, pos)?);
        corrupted.push(Tensor::matrix(times.len() * n, f, neg)?);
    }
    Ok(PairBatch {
        x: Tensor::matrix(times.len() * n, f, x)?,
        futures,
        corrupted,
    })
}

/// Records the forward pass for one batch and returns the mean-over-`k`
/// loss together with every `(positive, negative)` score pair.
fn forward_batch(
    tape: &mut Tape,
    enc: &EncoderVars,
    discs: &[DiscriminatorVars],
    a_hat: Var,
    batch: PairBatch,
) -> Result<(Var, Vec<(Var, Var)>)> {
    let x = tape.constant(batch.x);
    let h = enc.forward(tape, x, a_hat)?;
    let mut losses = Vec::with_capacity(discs.len());
    let mut scores = Vec::with_capacity(discs.len());
    for ((d, fut), cor) in discs.iter().zip(batch.futures).zip(batch.corrupted) {
        let fut = tape.constant(fut);
        let cor = tape.constant(cor);
        let pos = d.forward(tape, h, fut)?;
        let neg = d.forward(tape, h, cor)?;
        losses.push(infomax_loss_var(tape, pos, neg));
        scores.push((pos, neg));
    }
    let mut total = losses[0];
    for &l in &losses[1..] {
        total = tape.add(total, l)?;
    }
    let loss = tape.scale(total, 1.0 / losses.len() as f64);
    Ok((loss, scores))
}

/// One pass over the shuffled valid time steps of `train`; returns the mean
/// batch loss.
#[allow(clippy::too_many_arguments)]
pub fn pretrain_epoch<R: Rng + ?Sized>(
    series: &FeatureSeries,
    a_hat: &Tensor,
    model: &mut InfoMaxModel,
    adam: &mut AdamState,
    config: &PretrainConfig,
    train: &Range<usize>,
    lr: f64,
    rng: &mut R,
) -> Result<f64> {
    let mut times = valid_times(train, config.max_k());
    if times.is_empty() {
        return Err(Error::Config(format!(
            "training range {train:?} is too short for k = {}",
            config.max_k()
        )));
    }
    times.shuffle(rng);
    let mut weighted = 0.0;
    for chunk in times.chunks(config.batch_size) {
        let batch = build_batch(series, chunk, &config.ks, rng)?;
        let mut tape = Tape::new();
        let (enc, discs, vars) = model.bind(&mut tape);
        let a = tape.constant(a_hat.clone());
        let (loss, _) = forward_batch(&mut tape, &enc, &discs, a, batch)?;
        let value = tape.scalar(loss);
        if !value.is_finite() {
            return Err(Error::Divergence(format!("pretraining loss became {value}")));
        }
        tape.backward(loss)?;
        let grads = collect_grads(&tape, &vars);
        adam.step(&mut model.tensors_mut(), &grads, lr)?;
        weighted += value * chunk.len() as f64;
    }
    Ok(weighted / times.len() as f64)
}

/// A fixed set of positive/negative pairs for monitoring.
pub struct HeldOutPairs {
    times: Vec<usize>,
    batches: Vec<(Vec<usize>, u64)>,
}

impl HeldOutPairs {
    pub fn new(range: &Range<usize>, max_k: usize, batch_size: usize, seed: u64) -> Result<Self> {
        let times = valid_times(range, max_k);
        if times.is_empty() {
            return Err(Error::Config(format!(
                "held-out range {range:?} is too short for k = {max_k}"
            )));
        }
        let batches = times
            .chunks(batch_size.max(1))
            .enumerate()
            .map(|(i, c)| (c.to_vec(), seed.wrapping_add(i as u64)))
            .collect();
        Ok(Self { times, batches })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// `(loss, accuracy)` where a positive counts as correct when its score
    /// exceeds 0.5 and a negative when its score is below 0.5.
    pub fn evaluate(
        &self,
        series: &FeatureSeries,
        a_hat: &Tensor,
        model: &InfoMaxModel,
        ks: &[usize],
    ) -> Result<(f64, f64)> {
        let (mut loss, mut correct, mut total) = (0.0, 0usize, 0usize);
        for (times, seed) in &self.batches {
            // Each batch has its own stream so the pairs never change.
            let mut rng = seeded_rng(*seed);
            let batch = build_batch(series, times, ks, &mut rng)?;
            let mut tape = Tape::new();
            let (enc, discs, _) = model.bind(&mut tape);
            let a = tape.constant(a_hat.clone());
            let (l, scores) = forward_batch(&mut tape, &enc, &discs, a, batch)?;
            loss += tape.scalar(l) * times.len() as f64;
            for (pos, neg) in scores {
                correct += tape.value(pos).data().iter().filter(|&&s| s > 0.5).count();
                correct += tape.value(neg).data().iter().filter(|&&s| s < 0.5).count();
                total += 2 * tape.value(pos).len();
            }
        }
        Ok((loss / self.times.len() as f64, correct as f64 / total as f64))
    }
}

/// Trains encoder and discriminators on `train` (normalized features).
/// Held-out pair accuracy is tracked on `heldout` when given.
pub fn pretrain(
    series: &FeatureSeries,
    a_hat: &Tensor,
    config: &PretrainConfig,
    train: Range<usize>,
    heldout: Option<Range<usize>>,
) -> Result<PretrainOutput> {
    pretrain_with(series, a_hat, config, train, heldout, |_| {})
}

/// [`pretrain`] with a callback after every epoch.
pub fn pretrain_with(
    series: &FeatureSeries,
    a_hat: &Tensor,
    config: &PretrainConfig,
    train: Range<usize>,
    heldout: Option<Range<usize>>,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<PretrainOutput> {
    config.validate()?;
    if a_hat.shape() != [series.nodes(), series.nodes()] {
        return Err(Error::dim("pretrain", a_hat.shape(), &[series.nodes()]));
    }
    if train.end > series.steps() {
        return Err(Error::Config(format!(
            "training range {train:?} exceeds {} steps",
            series.steps()
        )));
    }
    let mut rng: SeededRng = seeded_rng(config.seed);
    let mut model = InfoMaxModel::new(series.features(), config, &mut rng);
    let mut adam = AdamState::default();

    let monitor = match &heldout {
        Some(r) => Some(HeldOutPairs::new(r, config.max_k(), config.batch_size, config.seed ^ 0x5eed)?),
        None => None,
    };
    let initial = match &monitor {
        Some(m) => {
            let (l, a) = m.evaluate(series, a_hat, &model, &config.ks)?;
            (l, Some(a))
        }
        None => {
            let m = HeldOutPairs::new(&train, config.max_k(), config.batch_size, config.seed ^ 0x5eed)?;
            (m.evaluate(series, a_hat, &model, &config.ks)?.0, None)
        }
    };

    let mut history = TrainHistory {
        initial_loss: initial.0,
        initial_accuracy: initial.1,
        epochs: Vec::with_capacity(config.epochs),
    };
    for epoch in 0..config.epochs {
        let lr = config.schedule.lr_at_epoch(epoch);
        let loss = pretrain_epoch(series, a_hat, &mut model, &mut adam, config, &train, lr, &mut rng)?;
        let accuracy = match &monitor {
            Some(m) => Some(m.evaluate(series, a_hat, &model, &config.ks)?.1),
            None => None,
        };
        let record = EpochRecord {
            epoch,
            lr,
            loss,
            accuracy,
        };
        on_epoch(&record);
        history.epochs.push(record);
    }
    Ok(PretrainOutput { model, history })
}

/// Encoder outputs for every step, `T × N × K`.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingSeries {
    steps: usize,
    nodes: usize,
    dim: usize,
    values: Vec<f64>,
}

impl EmbeddingSeries {
    pub fn new(steps: usize, nodes: usize, dim: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != steps * nodes * dim {
            return Err(Error::dim("embedding_series", &[steps, nodes, dim], &[values.len()]));
        }
        Ok(Self {
            steps,
            nodes,
            dim,
            values,
        })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, t: usize, node: usize) -> &[f64] {
        let start = (t * self.nodes + node) * self.dim;
        &self.values[start..start + self.dim]
    }
}

/// Runs the frozen encoder over every step of `series`.
pub fn export_embeddings(
    series: &FeatureSeries,
    a_hat: &Tensor,
    encoder: &EncoderParams,
) -> Result<EmbeddingSeries> {
    const CHUNK: usize = 64;
    let (n, f) = (series.nodes(), series.features());
    if encoder.config().in_features != f {
        return Err(Error::Validation(format!(
            "encoder expects {} features, series has {f}",
            encoder.config().in_features
        )));
    }
    let dim = encoder.config().embedding;
    let mut values = Vec::with_capacity(series.steps() * n * dim);
    let mut t = 0;
    while t < series.steps() {
        let end = (t + CHUNK).min(series.steps());
        let w = n * f;
        let x = Tensor::matrix((end - t) * n, f, series.values()[t * w..end * w].to_vec())?;
        values.extend(encoder.encode_stacked(&x, a_hat)?.into_data());
        t = end;
    }
    EmbeddingSeries::new(series.steps(), n, dim, values)
}

/// One row of the 2-D embedding projection.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectedPoint {
    pub t: usize,
    pub node: usize,
    pub x: f64,
    pub y: f64,
    /// Speed `lookahead` steps later, when that step exists.
    pub speed_ahead: Option<f64>,
}

/// Projects every `(t, v)` embedding onto the top two principal components.
/// `speeds` supplies the value attached to each point (`lookahead` steps
/// ahead); pass the series in original units.
pub fn pca_projection(
    embeddings: &EmbeddingSeries,
    speeds: &FeatureSeries,
    lookahead: usize,
) -> Result<Vec<ProjectedPoint>> {
    let (rows, dim) = (embeddings.steps * embeddings.nodes, embeddings.dim);
    if rows < 2 || dim < 2 {
        return Err(Error::Validation("PCA needs at least two points and two dimensions".into()));
    }
    if speeds.steps() != embeddings.steps || speeds.nodes() != embeddings.nodes {
        return Err(Error::dim(
            "pca_projection",
            &[embeddings.steps, embeddings.nodes],
            &[speeds.steps(), speeds.nodes()],
        ));
    }
    let mut mean = vec![0.0; dim];
    for row in embeddings.values.chunks(dim) {
        mean.iter_mut().zip(row).for_each(|(m, v)| *m += v);
    }
    mean.iter_mut().for_each(|m| *m /= rows as f64);
    let centered: Vec<f64> = embeddings
        .values
        .chunks(dim)
        .flat_map(|row| row.iter().zip(&mean).map(|(v, m)| v - m))
        .collect();

    let mut cov = vec![0.0; dim * dim];
    gemm(dim, rows, dim, &centered, true, &centered, false, &mut cov, 0.0);
    let cov = DMatrix::from_row_slice(dim, dim, &cov) / (rows - 1) as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let axes: Vec<Vec<f64>> = order[..2]
        .iter()
        .map(|&i| {
            let col: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
            // Fix the sign so the largest-magnitude loading is positive.
            let pivot = col.iter().copied().fold(0.0f64, |acc, v| if v.abs() > acc.abs() { v } else { acc });
            if pivot < 0.0 {
                col.iter().map(|v| -v).collect()
            } else {
                col
            }
        })
        .collect();

    let mut out = Vec::with_capacity(rows);
    for (r, row) in centered.chunks(dim).enumerate() {
        let (t, node) = (r / embeddings.nodes, r % embeddings.nodes);
        let proj = |axis: &[f64]| row.iter().zip(axis).map(|(a, b)| a * b).sum::<f64>();
        out.push(ProjectedPoint {
            t,
            node,
            x: proj(&axes[0]),
            y: proj(&axes[1]),
            speed_ahead: (t + lookahead < speeds.steps()).then(|| speeds.speed(t + lookahead, node)),
        });
    }
    Ok(out)
}
