//! Horizon-resolved error metrics and paired mode comparison.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forecaster::{Forecast, Mode};

/// Default report horizons in steps (15, 30 and 60 minutes at 5-minute steps).
pub const DEFAULT_HORIZONS: [usize; 3] = [3, 6, 12];

fn check(pred: &[f64], truth: &[f64], mask: Option<&[bool]>) -> Result<()> {
    if pred.len() != truth.len() || mask.is_some_and(|m| m.len() != pred.len()) {
        return Err(Error::dim(
            "metric",
            &[pred.len()],
            &[truth.len(), mask.map_or(truth.len(), <[bool]>::len)],
        ));
    }
    Ok(())
}

/// Errors `pred - true` over entries whose mask is `true` (all when absent).
fn errors<'a>(
    pred: &'a [f64],
    truth: &'a [f64],
    mask: Option<&'a [bool]>,
) -> impl Iterator<Item = (f64, f64)> + 'a {
    pred.iter()
        .zip(truth)
        .enumerate()
        .filter(move |(i, _)| mask.is_none_or(|m| m[*i]))
        .map(|(_, (&p, &t))| (p, t))
}

pub fn mae(pred: &[f64], truth: &[f64], mask: Option<&[bool]>) -> Result<f64> {
    check(pred, truth, mask)?;
    let (sum, n) = errors(pred, truth, mask).fold((0.0, 0usize), |(s, n), (p, t)| (s + (p - t).abs(), n + 1));
    if n == 0 {
        return Err(Error::UndefinedMetric("mae over zero entries".into()));
    }
    Ok(sum / n as f64)
}

pub fn rmse(pred: &[f64], truth: &[f64], mask: Option<&[bool]>) -> Result<f64> {
    check(pred, truth, mask)?;
    let (sum, n) = errors(pred, truth, mask).fold((0.0, 0usize), |(s, n), (p, t)| (s + (p - t).powi(2), n + 1));
    if n == 0 {
        return Err(Error::UndefinedMetric("rmse over zero entries".into()));
    }
    Ok((sum / n as f64).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mape {
    pub value: f64,
    /// Unmasked entries dropped because the true value was zero.
    pub zero_masked: usize,
}

pub fn mape(pred: &[f64], truth: &[f64], mask: Option<&[bool]>) -> Result<Mape> {
    check(pred, truth, mask)?;
    let (mut sum, mut n, mut zero_masked) = (0.0, 0usize, 0usize);
    for (p, t) in errors(pred, truth, mask) {
        if t == 0.0 {
            zero_masked += 1;
            continue;
        }
        sum += ((p - t) / t).abs();
        n += 1;
    }
    if n == 0 {
        return Err(Error::UndefinedMetric("mape: every entry is masked or zero".into()));
    }
    Ok(Mape {
        value: sum / n as f64,
        zero_masked,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HorizonMetrics {
    pub horizon: usize,
    pub minutes: usize,
    pub mae: f64,
    pub rmse: f64,
    /// Fraction, not percent.
    pub mape: f64,
    /// Entries left out of MAPE because the true speed was zero.
    pub mape_masked: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mode: Mode,
    pub seed: u64,
    pub horizons: Vec<HorizonMetrics>,
}

impl MetricsReport {
    pub fn at(&self, horizon: usize) -> Option<&HorizonMetrics> {
        self.horizons.iter().find(|h| h.horizon == horizon)
    }
}

/// Metrics at each listed horizon, computed over exactly that step's values
/// across all samples and nodes.
pub fn horizon_report(
    forecast: &Forecast,
    horizons: &[usize],
    step_minutes: usize,
    mode: Mode,
    seed: u64,
) -> Result<MetricsReport> {
    if forecast.preds.len() != forecast.trues.len() {
        return Err(Error::dim("horizon_report", &[forecast.preds.len()], &[forecast.trues.len()]));
    }
    let mut out = Vec::with_capacity(horizons.len());
    for &h in horizons {
        if h == 0 || h > forecast.horizon {
            return Err(Error::Config(format!(
                "report horizon {h} outside 1..={}",
                forecast.horizon
            )));
        }
        let (mut p, mut t) = (Vec::new(), Vec::new());
        for s in 0..forecast.num_samples() {
            for v in 0..forecast.nodes {
                let i = forecast.index(s, h - 1, v);
                p.push(forecast.preds[i]);
                t.push(forecast.trues[i]);
            }
        }
        let m = mape(&p, &t, None)?;
        out.push(HorizonMetrics {
            horizon: h,
            minutes: h * step_minutes,
            mae: mae(&p, &t, None)?,
            rmse: rmse(&p, &t, None)?,
            mape: m.value,
            mape_masked: m.zero_masked,
        });
    }
    Ok(MetricsReport {
        mode,
        seed,
        horizons: out,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

fn mean_std(xs: &[f64]) -> MeanStd {
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    let std = if xs.len() > 1 {
        (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
    } else {
        0.0
    };
    MeanStd { mean, std }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trend {
    Increasing,
    Decreasing,
    Flat,
    Mixed,
}

fn trend(xs: &[f64]) -> Trend {
    const TOL: f64 = 1e-12;
    let steps: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
    if steps.iter().all(|d| d.abs() <= TOL) {
        Trend::Flat
    } else if steps.iter().all(|&d| d >= -TOL) {
        Trend::Increasing
    } else if steps.iter().all(|&d| d <= TOL) {
        Trend::Decreasing
    } else {
        Trend::Mixed
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HorizonComparison {
    pub horizon: usize,
    pub minutes: usize,
    pub baseline_mae: MeanStd,
    pub stdgi_mae: MeanStd,
    pub baseline_rmse: MeanStd,
    pub stdgi_rmse: MeanStd,
    pub baseline_mape: MeanStd,
    pub stdgi_mape: MeanStd,
    /// `baseline - stdgi` MAE per seed, in seed order.
    pub paired_mae_diff: Vec<f64>,
    /// `(baseline - stdgi) / baseline` of the seed-mean MAE.
    pub relative_improvement: f64,
    /// The same ratio per seed.
    pub relative_improvement_per_seed: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub seeds: Vec<u64>,
    pub horizons: Vec<HorizonComparison>,
    /// Shape of the relative MAE improvement across horizons.
    pub trend: Trend,
    /// Per-seed trend of the relative MAE improvement.
    pub trend_per_seed: Vec<Trend>,
    /// Set when only one seed is available, so every std is 0.
    pub single_seed: bool,
}

/// Pairs baseline and stdgi reports by seed and summarizes them per horizon.
pub fn compare_runs(reports: &[MetricsReport]) -> Result<Comparison> {
    let mut by_mode: BTreeMap<(u8, u64), &MetricsReport> = BTreeMap::new();
    for r in reports {
        let key = (matches!(r.mode, Mode::Stdgi) as u8, r.seed);
        if by_mode.insert(key, r).is_some() {
            return Err(Error::Comparison(format!("duplicate {} report for seed {}", r.mode, r.seed)));
        }
    }
    let seeds_of = |m: u8| by_mode.keys().filter(|k| k.0 == m).map(|k| k.1).collect::<Vec<_>>();
    let (base_seeds, stdgi_seeds) = (seeds_of(0), seeds_of(1));
    if base_seeds.is_empty() || stdgi_seeds.is_empty() {
        return Err(Error::Comparison("need at least one report per mode".into()));
    }
    if base_seeds != stdgi_seeds {
        return Err(Error::Comparison(format!(
            "seed sets differ: baseline {base_seeds:?}, stdgi {stdgi_seeds:?}"
        )));
    }
    let seeds = base_seeds;
    let horizon_list: Vec<(usize, usize)> = by_mode[&(0, seeds[0])]
        .horizons
        .iter()
        .map(|h| (h.horizon, h.minutes))
        .collect();

    let mut horizons = Vec::with_capacity(horizon_list.len());
    for &(h, minutes) in &horizon_list {
        let pick = |mode: u8, f: fn(&HorizonMetrics) -> f64| -> Result<Vec<f64>> {
            seeds
                .iter()
                .map(|s| {
                    by_mode[&(mode, *s)]
                        .at(h)
                        .map(f)
                        .ok_or_else(|| Error::Comparison(format!("seed {s} lacks horizon {h}")))
                })
                .collect()
        };
        let (b_mae, s_mae) = (pick(0, |m| m.mae)?, pick(1, |m| m.mae)?);
        let (b_rmse, s_rmse) = (pick(0, |m| m.rmse)?, pick(1, |m| m.rmse)?);
        let (b_mape, s_mape) = (pick(0, |m| m.mape)?, pick(1, |m| m.mape)?);
        let baseline_mae = mean_std(&b_mae);
        let stdgi_mae = mean_std(&s_mae);
        horizons.push(HorizonComparison {
            horizon: h,
            minutes,
            baseline_mae,
            stdgi_mae,
            baseline_rmse: mean_std(&b_rmse),
            stdgi_rmse: mean_std(&s_rmse),
            baseline_mape: mean_std(&b_mape),
            stdgi_mape: mean_std(&s_mape),
            paired_mae_diff: b_mae.iter().zip(&s_mae).map(|(b, s)| b - s).collect(),
            relative_improvement: relative(baseline_mae.mean, stdgi_mae.mean),
            relative_improvement_per_seed: b_mae.iter().zip(&s_mae).map(|(b, s)| relative(*b, *s)).collect(),
        });
    }
    let overall: Vec<f64> = horizons.iter().map(|h| h.relative_improvement).collect();
    let trend_per_seed = (0..seeds.len())
        .map(|i| trend(&horizons.iter().map(|h| h.relative_improvement_per_seed[i]).collect::<Vec<_>>()))
        .collect();
    Ok(Comparison {
        single_seed: seeds.len() == 1,
        seeds,
        horizons,
        trend: trend(&overall),
        trend_per_seed,
    })
}

fn relative(baseline: f64, stdgi: f64) -> f64 {
    if baseline == 0.0 {
        0.0
    } else {
        (baseline - stdgi) / baseline
    }
}

fn cell(m: MeanStd, percent: bool) -> String {
    if percent {
        format!("{:.2}% ± {:.2}", 100.0 * m.mean, 100.0 * m.std)
    } else {
        format!("{:.2} ± {:.4}", m.mean, m.std)
    }
}

/// Text table with one block per metric, one row per method and one column
/// per horizon.
pub fn comparison_table(cmp: &Comparison) -> String {
    let header: Vec<String> = cmp.horizons.iter().map(|h| format!("{} min", h.minutes)).collect();
    let width = 22;
    let mut out = String::new();
    let _ = write!(out, "{:<8}{:<16}", "Metric", "Method");
    for h in &header {
        let _ = write!(out, "{h:>width$}");
    }
    out.push('\n');
    out.push_str(&"-".repeat(24 + width * header.len()));
    out.push('\n');
    type Getter = fn(&HorizonComparison) -> (MeanStd, MeanStd);
    let blocks: [(&str, Getter, bool); 3] = [
        ("MAE", |h| (h.baseline_mae, h.stdgi_mae), false),
        ("RMSE", |h| (h.baseline_rmse, h.stdgi_rmse), false),
        ("MAPE", |h| (h.baseline_mape, h.stdgi_mape), true),
    ];
    for (name, get, percent) in blocks {
        for (i, method) in ["LSTM Baseline", "STDGI"].into_iter().enumerate() {
            let label = if i == 0 { name } else { "" };
            let _ = write!(out, "{label:<8}{method:<16}");
            for h in &cmp.horizons {
                let (b, s) = get(h);
                let _ = write!(out, "{:>width$}", cell(if i == 0 { b } else { s }, percent));
            }
            out.push('\n');
        }
    }
    let _ = write!(out, "{:<24}", "MAE improvement");
    for h in &cmp.horizons {
        let _ = write!(out, "{:>width$}", format!("{:.2}%", 100.0 * h.relative_improvement));
    }
    out.push('\n');
    let _ = writeln!(out, "trend: {:?}; seeds: {:?}", cmp.trend, cmp.seeds);
    if cmp.single_seed {
        out.push_str("warning: single seed, standard deviations are reported as 0\n");
    }
    out
}
