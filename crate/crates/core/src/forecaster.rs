//! Per-node LSTM sequence-to-sequence speed forecaster.
//!
//! One model is shared by every node; a training sample is a `(node, window)`
//! pair and the model never sees another node's series. In `stdgi` mode each
//! input vector is the node's raw features concatenated with its frozen
//! embedding at the same step.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{make_windows, FeatureSeries, NormStats, WindowSample, SPEED};
use crate::error::{Error, Result};
use crate::numerics::tape::gemm;
use crate::numerics::{
    collect_grads, glorot_init, seeded_rng, sigmoid, AdamState, Linear, LinearVars, LrSchedule, Tape, Tensor, Var,
};
use crate::params::{prefixed, ParamSet};
use crate::pretrain::EmbeddingSeries;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Baseline,
    Stdgi,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Baseline => "baseline",
            Mode::Stdgi => "stdgi",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(Mode::Baseline),
            "stdgi" => Ok(Mode::Stdgi),
            other => Err(Error::Config(format!("unknown mode `{other}` (baseline|stdgi)"))),
        }
    }
}

/// Gate blocks are laid out `[i | f | g | o]` along the last axis.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmParams {
    pub w_x: Tensor,
    pub w_h: Tensor,
    pub bias: Tensor,
}

#[derive(Clone, Copy, Debug)]
pub struct LstmVars {
    pub w_x: Var,
    pub w_h: Var,
    pub bias: Var,
    hidden: usize,
}

impl LstmParams {
    pub fn new<R: Rng + ?Sized>(input: usize, hidden: usize, rng: &mut R) -> Self {
        let mut bias = Tensor::zeros(&[4 * hidden]);
        bias.data_mut()[hidden..2 * hidden].fill(1.0);
        Self {
            w_x: glorot_init(input, 4 * hidden, rng),
            w_h: glorot_init(hidden, 4 * hidden, rng),
            bias,
        }
    }

    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            w_x: Tensor::zeros(&[input, 4 * hidden]),
            w_h: Tensor::zeros(&[hidden, 4 * hidden]),
            bias: Tensor::zeros(&[4 * hidden]),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w_x.shape()[0]
    }

    pub fn hidden(&self) -> usize {
        self.w_h.shape()[0]
    }

    pub fn bind(&self, tape: &mut Tape) -> LstmVars {
        LstmVars {
            w_x: tape.param(&self.w_x),
            w_h: tape.param(&self.w_h),
            bias: tape.param(&self.bias),
            hidden: self.hidden(),
        }
    }

    /// One step for a batch: `x: B × d_in`, `h`, `c: B × H`.
    pub fn step_batch(&self, x: &[f64], h: &[f64], c: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (d, hid) = (self.input_dim(), self.hidden());
        let b = h.len() / hid;
        let mut z = Vec::with_capacity(b * 4 * hid);
        for _ in 0..b {
            z.extend_from_slice(self.bias.data());
        }
        gemm(b, d, 4 * hid, x, false, self.w_x.data(), false, &mut z, 1.0);
        gemm(b, hid, 4 * hid, h, false, self.w_h.data(), false, &mut z, 1.0);
        let mut h_next = vec![0.0; b * hid];
        let mut c_next = vec![0.0; b * hid];
        for r in 0..b {
            let zr = &z[r * 4 * hid..(r + 1) * 4 * hid];
            for j in 0..hid {
                let i = sigmoid(zr[j]);
                let f = sigmoid(zr[hid + j]);
                let g = zr[2 * hid + j].tanh();
                let o = sigmoid(zr[3 * hid + j]);
                let cn = f * c[r * hid + j] + i * g;
                c_next[r * hid + j] = cn;
                h_next[r * hid + j] = o * cn.tanh();
            }
        }
        (h_next, c_next)
    }
}

impl LstmVars {
    pub fn vars(&self) -> [Var; 3] {
        [self.w_x, self.w_h, self.bias]
    }

    /// Records one step for a batch; returns `(h′, c′)`.
    pub fn step(&self, tape: &mut Tape, x: Var, h: Var, c: Var) -> Result<(Var, Var)> {
        let hid = self.hidden;
        let zx = tape.matmul(x, self.w_x)?;
        let zh = tape.matmul(h, self.w_h)?;
        let z = tape.add(zx, zh)?;
        let z = tape.add(z, self.bias)?;
        let i = tape.slice_cols(z, 0, hid)?;
        let i = tape.sigmoid(i);
        let f = tape.slice_cols(z, hid, 2 * hid)?;
        let f = tape.sigmoid(f);
        let g = tape.slice_cols(z, 2 * hid, 3 * hid)?;
        let g = tape.tanh(g);
        let o = tape.slice_cols(z, 3 * hid, 4 * hid)?;
        let o = tape.sigmoid(o);
        let fc = tape.mul(f, c)?;
        let ig = tape.mul(i, g)?;
        let c_next = tape.add(fc, ig)?;
        let tc = tape.tanh(c_next);
        let h_next = tape.mul(o, tc)?;
        Ok((h_next, c_next))
    }
}

impl ParamSet for LstmParams {
    fn named_tensors_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        vec![
            ("w_x".into(), &mut self.w_x),
            ("w_h".into(), &mut self.w_h),
            ("bias".into(), &mut self.bias),
        ]
    }

    fn named_tensors(&self) -> Vec<(String, Tensor)> {
        vec![
            ("w_x".into(), self.w_x.clone()),
            ("w_h".into(), self.w_h.clone()),
            ("bias".into(), self.bias.clone()),
        ]
    }
}

/// `i, f, o = σ(·)`, `g = tanh(·)`, `c′ = f⊙c + i⊙g`, `h′ = o⊙tanh(c′)`.
pub fn lstm_cell(x: &[f64], h: &[f64], c: &[f64], params: &LstmParams) -> Result<(Vec<f64>, Vec<f64>)> {
    let hid = params.hidden();
    if x.len() != params.input_dim() || h.len() != hid || c.len() != hid {
        return Err(Error::dim(
            "lstm_cell",
            &[x.len(), h.len(), c.len()],
            &[params.input_dim(), hid, hid],
        ));
    }
    Ok(params.step_batch(x, h, c))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Seq2SeqParams {
    pub encoder: LstmParams,
    pub decoder: LstmParams,
    pub head: Linear,
}

pub struct Seq2SeqVars {
    pub encoder: LstmVars,
    pub decoder: LstmVars,
    pub head: LinearVars,
}

impl Seq2SeqParams {
    pub fn new<R: Rng + ?Sized>(input: usize, hidden: usize, rng: &mut R) -> Self {
        Self {
            encoder: LstmParams::new(input, hidden, rng),
            decoder: LstmParams::new(1, hidden, rng),
            head: Linear::new(hidden, 1, rng),
        }
    }

    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            encoder: LstmParams::zeros(input, hidden),
            decoder: LstmParams::zeros(1, hidden),
            head: Linear::zeros(hidden, 1),
        }
    }

    pub fn bind(&self, tape: &mut Tape) -> Seq2SeqVars {
        Seq2SeqVars {
            encoder: self.encoder.bind(tape),
            decoder: self.decoder.bind(tape),
            head: self.head.bind(tape),
        }
    }
}

impl Seq2SeqVars {
    pub fn vars(&self) -> Vec<Var> {
        let mut v = self.encoder.vars().to_vec();
        v.extend(self.decoder.vars());
        v.extend(self.head.vars());
        v
    }

    /// Teacher-forced forward pass. `inputs[s]` is `B × d_in` for encoder
    /// step `s`, `last` is `B × 1` and `teacher[j]` is the `B × 1` true speed
    /// at horizon step `j`. Returns the `B × 1` prediction per horizon step.
    pub fn forward(&self, tape: &mut Tape, inputs: &[Var], last: Var, teacher: &[Var]) -> Result<Vec<Var>> {
        let b = tape.value(last).rows();
        let hid = self.encoder.hidden;
        let mut h = tape.constant(Tensor::zeros(&[b, hid]));
        let mut c = tape.constant(Tensor::zeros(&[b, hid]));
        for &x in inputs {
            (h, c) = self.encoder.step(tape, x, h, c)?;
        }
        let mut preds = Vec::with_capacity(teacher.len());
        let mut input = last;
        for &truth in teacher {
            (h, c) = self.decoder.step(tape, input, h, c)?;
            preds.push(self.head.forward(tape, h)?);
            input = truth;
        }
        Ok(preds)
    }
}

impl ParamSet for Seq2SeqParams {
    fn named_tensors_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out = Vec::with_capacity(8);
        for (p, l) in [("encoder", &mut self.encoder), ("decoder", &mut self.decoder)] {
            out.push((prefixed(p, "w_x"), &mut l.w_x));
            out.push((prefixed(p, "w_h"), &mut l.w_h));
            out.push((prefixed(p, "bias"), &mut l.bias));
        }
        let [w, b] = self.head.tensors_mut();
        out.push(("head.weight".into(), w));
        out.push(("head.bias".into(), b));
        out
    }

    fn named_tensors(&self) -> Vec<(String, Tensor)> {
        let mut out = Vec::with_capacity(8);
        for (p, l) in [("encoder", &self.encoder), ("decoder", &self.decoder)] {
            out.push((prefixed(p, "w_x"), l.w_x.clone()));
            out.push((prefixed(p, "w_h"), l.w_h.clone()));
            out.push((prefixed(p, "bias"), l.bias.clone()));
        }
        out.push(("head.weight".into(), self.head.weight.clone()));
        out.push(("head.bias".into(), self.head.bias.clone()));
        out
    }
}

/// Anything that maps a batch of input sequences to horizon forecasts.
pub trait SequenceModel {
    fn input_dim(&self) -> usize;

    /// `inputs` is step-major, `steps × B × d_in`; `last` holds the `B` last
    /// observed speeds. Returns `B × horizon`, row-major.
    fn forecast_batch(&self, inputs: &[f64], steps: usize, last: &[f64], horizon: usize) -> Result<Vec<f64>>;
}

impl SequenceModel for Seq2SeqParams {
    fn input_dim(&self) -> usize {
        self.encoder.input_dim()
    }

    fn forecast_batch(&self, inputs: &[f64], steps: usize, last: &[f64], horizon: usize) -> Result<Vec<f64>> {
        let b = last.len();
        let (d, hid) = (self.input_dim(), self.encoder.hidden());
        if inputs.len() != steps * b * d {
            return Err(Error::dim("forecast_batch", &[inputs.len()], &[steps, b, d]));
        }
        let mut h = vec![0.0; b * hid];
        let mut c = vec![0.0; b * hid];
        for x in inputs.chunks(b * d) {
            (h, c) = self.encoder.step_batch(x, &h, &c);
        }
        let mut out = vec![0.0; b * horizon];
        let mut input = last.to_vec();
        for j in 0..horizon {
            (h, c) = self.decoder.step_batch(&input, &h, &c);
            let mut y = vec![0.0; b];
            for (r, yr) in y.iter_mut().enumerate() {
                *yr = self.head.apply(&h[r * hid..(r + 1) * hid])[0];
                out[r * horizon + j] = *yr;
            }
            input = y;
        }
        Ok(out)
    }
}

/// Repeats the last observed speed over the whole horizon.
#[derive(Clone, Copy, Debug)]
pub struct Persistence {
    pub input_dim: usize,
}

impl SequenceModel for Persistence {
    fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn forecast_batch(&self, _inputs: &[f64], _steps: usize, last: &[f64], horizon: usize) -> Result<Vec<f64>> {
        Ok(last.iter().flat_map(|&s| std::iter::repeat_n(s, horizon)).collect())
    }
}

/// Runs a model over one sequence: `input_seq` is `T′ × d_in`. With
/// `teacher`, the decoder is fed the true previous speed from the second step
/// on; without it, its own previous prediction.
pub fn seq2seq_forecast(
    input_seq: &[f64],
    input_steps: usize,
    last: f64,
    params: &Seq2SeqParams,
    horizon: usize,
    teacher: Option<&[f64]>,
) -> Result<Vec<f64>> {
    let d = params.input_dim();
    if input_seq.len() != input_steps * d || input_steps == 0 {
        return Err(Error::Contract(format!(
            "input sequence holds {} values, expected {input_steps} steps of {d}",
            input_seq.len()
        )));
    }
    match teacher {
        None => params.forecast_batch(input_seq, input_steps, &[last], horizon),
        Some(truth) => {
            if truth.len() != horizon {
                return Err(Error::Contract(format!(
                    "teacher sequence has {} steps, expected {horizon}",
                    truth.len()
                )));
            }
            let mut tape = Tape::new();
            let vars = params.bind(&mut tape);
            let inputs: Vec<Var> = input_seq
                .chunks(d)
                .map(|x| tape.constant(Tensor::matrix(1, d, x.to_vec()).expect("row")))
                .collect();
            let last = tape.constant(Tensor::matrix(1, 1, vec![last])?);
            let teacher: Vec<Var> = truth
                .iter()
                .map(|&s| tape.constant(Tensor::matrix(1, 1, vec![s]).expect("scalar")))
                .collect();
            let preds = vars.forward(&mut tape, &inputs, last, &teacher)?;
            Ok(preds.iter().map(|&p| tape.scalar(p)).collect())
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegressorConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub schedule: LrSchedule,
    pub hidden: usize,
    pub input_steps: usize,
    pub horizon: usize,
    /// Step between consecutive training windows; 1 uses every window.
    pub window_stride: usize,
    /// Step between validation windows scored after each epoch.
    pub eval_stride: usize,
    #[serde(skip)]
    pub mode: Mode,
    #[serde(skip)]
    pub seed: u64,
}

impl Default for RegressorConfig {
    fn default() -> Self {
        Self {
            epochs: 120,
            batch_size: 64,
            schedule: LrSchedule::new(1e-2),
            hidden: 64,
            input_steps: 12,
            horizon: 12,
            window_stride: 1,
            eval_stride: 1,
            mode: Mode::Baseline,
            seed: 0,
        }
    }
}

impl RegressorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 || self.batch_size < 1 || self.hidden < 1 {
            return Err(Error::Config("regressor epochs, batch_size and hidden must be >= 1".into()));
        }
        if self.input_steps < 1 || self.horizon < 1 {
            return Err(Error::Config("input_steps and horizon must be >= 1".into()));
        }
        if self.window_stride < 1 || self.eval_stride < 1 {
            return Err(Error::Config("window strides must be >= 1".into()));
        }
        self.schedule.validate()
    }
}

/// Model inputs for one mode: the normalized series and, in `stdgi` mode,
/// the embeddings to append.
#[derive(Clone, Copy)]
pub struct InputSource<'a> {
    pub series: &'a FeatureSeries,
    pub embeddings: Option<&'a EmbeddingSeries>,
}

impl<'a> InputSource<'a> {
    pub fn new(series: &'a FeatureSeries, mode: Mode, embeddings: Option<&'a EmbeddingSeries>) -> Result<Self> {
        let embeddings = match mode {
            Mode::Baseline => None,
            Mode::Stdgi => {
                let e = embeddings
                    .ok_or_else(|| Error::Config("stdgi mode requires embeddings".into()))?;
                if e.steps() < series.steps() || e.nodes() != series.nodes() {
                    return Err(Error::Config(format!(
                        "embeddings cover {} steps × {} nodes but the series has {} × {}",
                        e.steps(),
                        e.nodes(),
                        series.steps(),
                        series.nodes()
                    )));
                }
                Some(e)
            }
        };
        Ok(Self { series, embeddings })
    }

    pub fn input_dim(&self) -> usize {
        self.series.features() + self.embeddings.map_or(0, |e| e.dim())
    }

    fn push_input(&self, out: &mut Vec<f64>, t: usize, node: usize) {
        out.extend_from_slice(self.series.node_features(t, node));
        if let Some(e) = self.embeddings {
            out.extend_from_slice(e.get(t, node));
        }
    }

    /// Step-major inputs, last observed speeds and targets (`B × horizon`)
    /// for a batch of `(node, window)` samples.
    fn gather(&self, samples: &[(usize, WindowSample)]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let steps = samples.first().map_or(0, |(_, w)| w.input_steps);
        let mut inputs = Vec::with_capacity(steps * samples.len() * self.input_dim());
        for s in 0..steps {
            for (node, w) in samples {
                self.push_input(&mut inputs, w.start + s, *node);
            }
        }
        let last = samples
            .iter()
            .map(|(node, w)| self.series.speed(w.last_input(), *node))
            .collect();
        let mut targets = Vec::with_capacity(samples.len() * samples.first().map_or(0, |(_, w)| w.horizon));
        for (node, w) in samples {
            targets.extend(w.target_range().map(|t| self.series.get(t, *node, SPEED)));
        }
        (inputs, last, targets)
    }
}

/// Every `(node, window)` pair, window-major.
pub fn node_samples(windows: &[WindowSample], nodes: usize) -> Vec<(usize, WindowSample)> {
    windows
        .iter()
        .flat_map(|w| (0..nodes).map(move |v| (v, *w)))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressorEpoch {
    pub epoch: usize,
    pub lr: f64,
    /// Mean teacher-forced MAE over the epoch's batches (normalized units).
    pub train_loss: f64,
    /// Autoregressive MAE on validation windows (normalized units).
    pub val_mae: f64,
}

#[derive(Clone, Debug)]
pub struct RegressorOutput {
    /// Parameters from the epoch with the lowest validation MAE.
    pub params: Seq2SeqParams,
    pub best_epoch: usize,
    pub history: Vec<RegressorEpoch>,
}

/// Teacher-forced MAE over all horizon steps for one batch, recorded on a
/// fresh tape. Returns the tape, the loss and the parameter vars.
pub fn batch_loss(
    params: &Seq2SeqParams,
    inputs: &[f64],
    last: &[f64],
    targets: &[f64],
    steps: usize,
    horizon: usize,
) -> Result<(Tape, Var, Vec<Var>)> {
    let b = last.len();
    let d = params.input_dim();
    let mut tape = Tape::new();
    let vars = params.bind(&mut tape);
    let xs: Vec<Var> = inputs
        .chunks(b * d)
        .take(steps)
        .map(|x| tape.constant(Tensor::matrix(b, d, x.to_vec()).expect("batch block")))
        .collect();
    let last = tape.constant(Tensor::matrix(b, 1, last.to_vec())?);
    let teacher: Vec<Var> = (0..horizon)
        .map(|j| {
            let col = (0..b).map(|r| targets[r * horizon + j]).collect();
            tape.constant(Tensor::matrix(b, 1, col).expect("column"))
        })
        .collect();
    let preds = vars.forward(&mut tape, &xs, last, &teacher)?;
    let mut total: Option<Var> = None;
    for (p, t) in preds.iter().zip(&teacher) {
        let diff = tape.sub(*p, *t)?;
        let err = tape.abs(diff);
        let m = tape.mean(err);
        total = Some(match total {
            Some(acc) => tape.add(acc, m)?,
            None => m,
        });
    }
    let total = total.ok_or_else(|| Error::Contract("horizon must be >= 1".into()))?;
    let loss = tape.scale(total, 1.0 / horizon as f64);
    Ok((tape, loss, vars.vars()))
}

/// Trains one shared forecaster on every node's training windows. `series`
/// must already be normalized.
pub fn train_regressor(
    source: InputSource<'_>,
    train: std::ops::Range<usize>,
    val: std::ops::Range<usize>,
    config: &RegressorConfig,
) -> Result<RegressorOutput> {
    train_regressor_with(source, train, val, config, |_| {})
}

pub fn train_regressor_with(
    source: InputSource<'_>,
    train: std::ops::Range<usize>,
    val: std::ops::Range<usize>,
    config: &RegressorConfig,
    mut on_epoch: impl FnMut(&RegressorEpoch),
) -> Result<RegressorOutput> {
    config.validate()?;
    let nodes = source.series.nodes();
    let stride = |ws: Vec<WindowSample>, k: usize| ws.into_iter().step_by(k).collect::<Vec<_>>();
    let train_windows = stride(
        make_windows(config.input_steps, config.horizon, train).samples,
        config.window_stride,
    );
    let val_windows = stride(
        make_windows(config.input_steps, config.horizon, val).samples,
        config.eval_stride,
    );
    if train_windows.is_empty() || val_windows.is_empty() {
        return Err(Error::Config(
            "training and validation ranges must each fit one input+horizon window".into(),
        ));
    }
    let mut samples = node_samples(&train_windows, nodes);
    let mut rng = seeded_rng(config.seed);
    let mut params = Seq2SeqParams::new(source.input_dim(), config.hidden, &mut rng);
    let mut adam = AdamState::default();
    let mut history = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, Seq2SeqParams)> = None;

    for epoch in 0..config.epochs {
        let lr = config.schedule.lr_at_epoch(epoch);
        samples.shuffle(&mut rng);
        let mut weighted = 0.0;
        for batch in samples.chunks(config.batch_size) {
            let (inputs, last, targets) = source.gather(batch);
            let (mut tape, loss, vars) =
                batch_loss(&params, &inputs, &last, &targets, config.input_steps, config.horizon)?;
            let value = tape.scalar(loss);
            if !value.is_finite() {
                return Err(Error::Divergence(format!("regressor loss became {value}")));
            }
            tape.backward(loss)?;
            let grads = collect_grads(&tape, &vars);
            adam.step(&mut params.tensors_mut(), &grads, lr)?;
            weighted += value * batch.len() as f64;
        }
        let val_forecast = forecast_normalized(&params, source, &val_windows, config.horizon)?;
        let val_mae = val_forecast.mae();
        if !val_mae.is_finite() {
            return Err(Error::Divergence(format!("validation MAE became {val_mae}")));
        }
        let record = RegressorEpoch {
            epoch,
            lr,
            train_loss: weighted / samples.len() as f64,
            val_mae,
        };
        on_epoch(&record);
        history.push(record);
        if best.as_ref().is_none_or(|(m, _, _)| val_mae < *m) {
            best = Some((val_mae, epoch, params.clone()));
        }
    }
    let (_, best_epoch, params) = best.expect("at least one epoch");
    Ok(RegressorOutput {
        params,
        best_epoch,
        history,
    })
}

/// Predictions and truths for a list of windows, each laid out
/// `samples × horizon × nodes`.
#[derive(Clone, Debug, PartialEq)]
pub struct Forecast {
    pub windows: Vec<WindowSample>,
    pub horizon: usize,
    pub nodes: usize,
    pub preds: Vec<f64>,
    pub trues: Vec<f64>,
}

impl Forecast {
    pub fn num_samples(&self) -> usize {
        self.windows.len()
    }

    pub fn index(&self, sample: usize, step: usize, node: usize) -> usize {
        (sample * self.horizon + step) * self.nodes + node
    }

    /// MAE over every entry.
    pub fn mae(&self) -> f64 {
        let n = self.preds.len() as f64;
        self.preds.iter().zip(&self.trues).map(|(p, t)| (p - t).abs()).sum::<f64>() / n
    }

    fn map(mut self, f: impl Fn(f64) -> f64) -> Self {
        self.preds.iter_mut().for_each(|v| *v = f(*v));
        self.trues.iter_mut().for_each(|v| *v = f(*v));
        self
    }
}

const PREDICT_BATCH: usize = 256;

/// Autoregressive forecasts in normalized units.
pub fn forecast_normalized<M: SequenceModel + ?Sized>(
    model: &M,
    source: InputSource<'_>,
    windows: &[WindowSample],
    horizon: usize,
) -> Result<Forecast> {
    if model.input_dim() != source.input_dim() {
        return Err(Error::dim("predict", &[model.input_dim()], &[source.input_dim()]));
    }
    if windows.iter().any(|w| w.horizon != horizon || w.end() > source.series.steps()) {
        return Err(Error::Contract("windows must match the horizon and fit the series".into()));
    }
    let nodes = source.series.nodes();
    let samples = node_samples(windows, nodes);
    let mut preds = vec![0.0; windows.len() * horizon * nodes];
    let mut trues = vec![0.0; preds.len()];
    for (chunk_idx, batch) in samples.chunks(PREDICT_BATCH).enumerate() {
        let steps = batch[0].1.input_steps;
        let (inputs, last, targets) = source.gather(batch);
        let out = model.forecast_batch(&inputs, steps, &last, horizon)?;
        for (r, _) in batch.iter().enumerate() {
            let flat = chunk_idx * PREDICT_BATCH + r;
            let (sample, node) = (flat / nodes, flat % nodes);
            for j in 0..horizon {
                let at = (sample * horizon + j) * nodes + node;
                preds[at] = out[r * horizon + j];
                trues[at] = targets[r * horizon + j];
            }
        }
    }
    Ok(Forecast {
        windows: windows.to_vec(),
        horizon,
        nodes,
        preds,
        trues,
    })
}

/// Autoregressive forecasts mapped back to original speed units.
pub fn predict<M: SequenceModel + ?Sized>(
    model: &M,
    source: InputSource<'_>,
    windows: &[WindowSample],
    horizon: usize,
    stats: &NormStats,
) -> Result<Forecast> {
    let f = forecast_normalized(model, source, windows, horizon)?;
    if f.preds.iter().any(|v| !v.is_finite()) {
        return Err(Error::Divergence("non-finite prediction".into()));
    }
    Ok(f.map(|v| stats.denormalize(v)))
}
