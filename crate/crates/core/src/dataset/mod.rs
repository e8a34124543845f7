//! Node feature time series: ingestion, normalization, windowing, splits and
//! a synthetic generator.
//!
//! Features are stored `T × N × F` with channel 0 = speed and channel 1 =
//! fractional time of day.

mod io;
pub mod synthetic;

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{load_features_csv, write_features_csv};
pub use synthetic::{synthesize_traffic, synthetic_distances, GraphFamily, SynthParams};

pub const SPEED: usize = 0;
pub const TIME_OF_DAY: usize = 1;
pub const NUM_FEATURES: usize = 2;
pub const MINUTES_PER_DAY: usize = 1440;

/// Fraction of the day elapsed at step `t`, in `[0, 1)`.
pub fn time_of_day(t: usize, step_minutes: usize) -> f64 {
    ((t * step_minutes) % MINUTES_PER_DAY) as f64 / MINUTES_PER_DAY as f64
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSeries {
    steps: usize,
    nodes: usize,
    features: usize,
    step_minutes: usize,
    values: Vec<f64>,
}

impl FeatureSeries {
    pub fn new(
        steps: usize,
        nodes: usize,
        features: usize,
        step_minutes: usize,
        values: Vec<f64>,
    ) -> Result<Self> {
        if steps == 0 || nodes == 0 || features == 0 {
            return Err(Error::Validation(format!(
                "series dimensions must be positive, got {steps}×{nodes}×{features}"
            )));
        }
        if values.len() != steps * nodes * features {
            return Err(Error::dim(
                "feature_series",
                &[steps, nodes, features],
                &[values.len()],
            ));
        }
        Ok(Self {
            steps,
            nodes,
            features,
            step_minutes,
            values,
        })
    }

    /// Builds the standard two-channel series from a `T × N` speed grid.
    pub fn from_speeds(steps: usize, nodes: usize, step_minutes: usize, speeds: &[f64]) -> Result<Self> {
        if speeds.len() != steps * nodes {
            return Err(Error::dim("from_speeds", &[steps, nodes], &[speeds.len()]));
        }
        let mut values = Vec::with_capacity(steps * nodes * NUM_FEATURES);
        for t in 0..steps {
            let tod = time_of_day(t, step_minutes);
            for v in 0..nodes {
                values.push(speeds[t * nodes + v]);
                values.push(tod);
            }
        }
        Self::new(steps, nodes, NUM_FEATURES, step_minutes, values)
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn features(&self) -> usize {
        self.features
    }

    pub fn step_minutes(&self) -> usize {
        self.step_minutes
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, t: usize, node: usize, feature: usize) -> f64 {
        self.values[(t * self.nodes + node) * self.features + feature]
    }

    pub fn speed(&self, t: usize, node: usize) -> f64 {
        self.get(t, node, SPEED)
    }

    /// The `N × F` snapshot at step `t`.
    pub fn snapshot(&self, t: usize) -> &[f64] {
        let w = self.nodes * self.features;
        &self.values[t * w..(t + 1) * w]
    }

    /// One node's feature vector at step `t`.
    pub fn node_features(&self, t: usize, node: usize) -> &[f64] {
        let start = (t * self.nodes + node) * self.features;
        &self.values[start..start + self.features]
    }

    fn speeds_in(&self, range: Range<usize>) -> impl Iterator<Item = f64> + '_ {
        range.flat_map(move |t| (0..self.nodes).map(move |v| self.speed(t, v)))
    }
}

/// Z-score statistics for the speed channel, fit on the training range only.
/// Time of day is never normalized.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: f64,
    pub std: f64,
}

impl NormStats {
    pub fn normalize(&self, speed: f64) -> f64 {
        (speed - self.mean) / self.std
    }

    pub fn denormalize(&self, z: f64) -> f64 {
        z * self.std + self.mean
    }
}

pub fn fit_normalizer(series: &FeatureSeries, train: Range<usize>) -> Result<NormStats> {
    if train.is_empty() || train.end > series.steps() {
        return Err(Error::Normalization(format!(
            "training range {train:?} invalid for {} steps",
            series.steps()
        )));
    }
    let count = (train.len() * series.nodes()) as f64;
    let mean = series.speeds_in(train.clone()).sum::<f64>() / count;
    let var = series
        .speeds_in(train)
        .map(|s| (s - mean).powi(2))
        .sum::<f64>()
        / count;
    let std = var.sqrt();
    if !(std > 0.0) {
        return Err(Error::Normalization(
            "speed has zero variance over the training range".into(),
        ));
    }
    Ok(NormStats { mean, std })
}

pub fn apply_normalizer(series: &FeatureSeries, stats: &NormStats) -> FeatureSeries {
    map_speed(series, |s| stats.normalize(s))
}

pub fn invert_normalizer(series: &FeatureSeries, stats: &NormStats) -> FeatureSeries {
    map_speed(series, |s| stats.denormalize(s))
}

fn map_speed(series: &FeatureSeries, f: impl Fn(f64) -> f64) -> FeatureSeries {
    let mut out = series.clone();
    for chunk in out.values.chunks_mut(series.features) {
        chunk[SPEED] = f(chunk[SPEED]);
    }
    out
}

/// A forecasting sample: steps `start .. start + input_steps` are observed and
/// the speeds of the following `horizon` steps are the target.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WindowSample {
    pub start: usize,
    pub input_steps: usize,
    pub horizon: usize,
}

impl WindowSample {
    /// Index of the last observed step.
    pub fn last_input(&self) -> usize {
        self.start + self.input_steps - 1
    }

    pub fn input_range(&self) -> Range<usize> {
        self.start..self.start + self.input_steps
    }

    pub fn target_range(&self) -> Range<usize> {
        self.start + self.input_steps..self.end()
    }

    pub fn end(&self) -> usize {
        self.start + self.input_steps + self.horizon
    }

    /// `input_steps × N × F` block.
    pub fn input<'a>(&self, series: &'a FeatureSeries) -> &'a [f64] {
        let w = series.nodes() * series.features();
        &series.values()[self.start * w..(self.start + self.input_steps) * w]
    }

    /// `horizon × N` target speeds.
    pub fn target(&self, series: &FeatureSeries) -> Vec<f64> {
        self.target_range()
            .flat_map(|t| (0..series.nodes()).map(move |v| series.speed(t, v)))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Windows {
    pub samples: Vec<WindowSample>,
    /// Set when the range could not hold a single window.
    pub too_short: bool,
}

/// Every window (stride 1) that fits entirely inside `range`.
pub fn make_windows(input_steps: usize, horizon: usize, range: Range<usize>) -> Windows {
    let span = input_steps + horizon;
    if range.len() < span || span == 0 {
        return Windows {
            samples: Vec::new(),
            too_short: true,
        };
    }
    let samples = (range.start..=range.end - span)
        .map(|start| WindowSample {
            start,
            input_steps,
            horizon,
        })
        .collect();
    Windows {
        samples,
        too_short: false,
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: Range<usize>,
    pub val: Range<usize>,
    pub test: Range<usize>,
}

/// Chronological train/validation/test split with cumulative rounding of the
/// boundaries. Each split must hold at least `min_len` steps.
pub fn split_series(steps: usize, ratios: [f64; 3], min_len: usize) -> Result<SplitSpec> {
    if ratios.iter().any(|r| !(*r > 0.0)) {
        return Err(Error::Config(format!("split ratios must be positive: {ratios:?}")));
    }
    let total: f64 = ratios.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "split ratios must sum to 1, got {total}"
        )));
    }
    let train_end = (ratios[0] * steps as f64).round() as usize;
    let val_end = (((ratios[0] + ratios[1]) * steps as f64).round() as usize).min(steps);
    let spec = SplitSpec {
        train: 0..train_end,
        val: train_end..val_end,
        test: val_end..steps,
    };
    for (name, r) in [("train", &spec.train), ("val", &spec.val), ("test", &spec.test)] {
        if r.len() < min_len {
            return Err(Error::Config(format!(
                "{name} split has {} steps, fewer than the {min_len} one window needs",
                r.len()
            )));
        }
    }
    Ok(spec)
}
