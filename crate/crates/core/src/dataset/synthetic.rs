//! Desk-scale stand-in for a road sensor network.
//!
//! Each node has a free-flow level `b_v` plus a shared daily sinusoid, and a
//! deviation from that level which diffuses over the graph:
//!
//! ```text
//! d(t)   = s(t) - b - β·sin(2π·tod(t))
//! s(t+1) = b + β·sin(2π·tod(t+1)) + (1 - γ)·[(1 - α)·d(t) + α·Â·d(t)] + ε
//! ```
//!
//! with `ε ~ N(0, noise_std²)` and speeds clipped to `[0, 80]`. With a common
//! level and `β = γ = 0` this is exactly `s(t+1) = (1-α)s(t) + αÂs(t) + ε`.
//! For `α > 0` a node's future depends on its neighbours' present, so
//! spatial context is informative by construction; the weak reversion `γ`
//! keeps the process stationary.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::{time_of_day, FeatureSeries};
use crate::error::{Error, Result};
use crate::graph::{Distance, Graph};

pub const MAX_SPEED: f64 = 80.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthParams {
    /// Spatial coupling in `[0, 1]`.
    pub alpha: f64,
    pub noise_std: f64,
    /// Daily sinusoid amplitude (mph).
    pub beta: f64,
    /// Per-step pull of the deviation back to zero, in `[0, 1)`.
    pub reversion: f64,
    pub base_min: f64,
    pub base_max: f64,
    /// Half-width of the uniform initial deviation.
    pub initial_spread: f64,
    pub step_minutes: usize,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            noise_std: 1.0,
            beta: 5.0,
            reversion: 0.005,
            base_min: 25.0,
            base_max: 70.0,
            initial_spread: 0.0,
            step_minutes: 5,
        }
    }
}

impl SynthParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Validation(format!(
                "alpha must lie in [0, 1], got {}",
                self.alpha
            )));
        }
        if !(self.noise_std >= 0.0) || !(self.initial_spread >= 0.0) {
            return Err(Error::Validation(
                "noise_std and initial_spread must be >= 0".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.reversion) {
            return Err(Error::Validation(format!(
                "reversion must lie in [0, 1), got {}",
                self.reversion
            )));
        }
        if !(self.base_min <= self.base_max) || self.base_min < 0.0 || self.base_max > MAX_SPEED {
            return Err(Error::Validation(format!(
                "base speed range [{}, {}] must sit inside [0, {MAX_SPEED}]",
                self.base_min, self.base_max
            )));
        }
        if self.step_minutes == 0 {
            return Err(Error::Validation("step_minutes must be >= 1".into()));
        }
        Ok(())
    }
}

pub fn synthesize_traffic<R: Rng + ?Sized>(
    graph: &Graph,
    steps: usize,
    params: &SynthParams,
    rng: &mut R,
) -> Result<FeatureSeries> {
    params.validate()?;
    if steps == 0 {
        return Err(Error::Validation("steps must be >= 1".into()));
    }
    let a_hat = graph.normalized_adjacency()?;
    let n = graph.num_nodes();
    let noise = Normal::new(0.0, params.noise_std)
        .map_err(|e| Error::Validation(format!("noise_std: {e}")))?;

    let base: Vec<f64> = (0..n)
        .map(|_| {
            if params.base_max > params.base_min {
                rng.random_range(params.base_min..params.base_max)
            } else {
                params.base_min
            }
        })
        .collect();
    let level = |t: usize, v: usize| {
        base[v] + params.beta * (2.0 * PI * time_of_day(t, params.step_minutes)).sin()
    };

    let mut speeds = Vec::with_capacity(steps * n);
    for v in 0..n {
        let jitter = if params.initial_spread > 0.0 {
            rng.random_range(-params.initial_spread..=params.initial_spread)
        } else {
            0.0
        };
        speeds.push((level(0, v) + jitter).clamp(0.0, MAX_SPEED));
    }
    let keep = 1.0 - params.reversion;
    let mut dev = vec![0.0; n];
    for t in 1..steps {
        let prev = &speeds[(t - 1) * n..t * n];
        for v in 0..n {
            dev[v] = prev[v] - level(t - 1, v);
        }
        let mut next = Vec::with_capacity(n);
        for v in 0..n {
            let row = a_hat.row(v);
            let mixed: f64 = row.iter().zip(&dev).map(|(a, d)| a * d).sum();
            let d = keep * ((1.0 - params.alpha) * dev[v] + params.alpha * mixed);
            let eps = if params.noise_std > 0.0 {
                noise.sample(rng)
            } else {
                0.0
            };
            next.push((level(t, v) + d + eps).clamp(0.0, MAX_SPEED));
        }
        speeds.extend(next);
    }
    FeatureSeries::from_speeds(steps, n, params.step_minutes, &speeds)
}

/// Sensor layouts for synthetic graphs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphFamily {
    /// Directed loop road: node `i` is linked to `i + 1 (mod N)` with a
    /// uniformly drawn spacing.
    #[default]
    Corridor,
    /// Sensors scattered uniformly in a square; all pairwise distances.
    Geometric,
}

/// Road distances for a synthetic layout. `scale_m` is the corridor spacing
/// range (`[lo, hi]`) or, for the geometric family, `hi` is the square side.
pub fn synthetic_distances<R: Rng + ?Sized>(
    family: GraphFamily,
    nodes: usize,
    scale_m: (f64, f64),
    rng: &mut R,
) -> Result<Vec<Distance>> {
    if nodes < 2 {
        return Err(Error::Validation("synthetic graphs need at least 2 nodes".into()));
    }
    let (lo, hi) = scale_m;
    if !(lo > 0.0 && lo <= hi) {
        return Err(Error::Validation(format!("invalid distance scale ({lo}, {hi})")));
    }
    let draw = |rng: &mut R| if hi > lo { rng.random_range(lo..hi) } else { lo };
    Ok(match family {
        GraphFamily::Corridor => (0..nodes)
            .map(|i| Distance {
                src: i,
                dst: (i + 1) % nodes,
                meters: draw(rng),
            })
            .collect(),
        GraphFamily::Geometric => {
            let pts: Vec<(f64, f64)> = (0..nodes)
                .map(|_| (rng.random_range(0.0..hi), rng.random_range(0.0..hi)))
                .collect();
            let mut out = Vec::with_capacity(nodes * (nodes - 1));
            for (i, a) in pts.iter().enumerate() {
                for (j, b) in pts.iter().enumerate() {
                    if i != j {
                        out.push(Distance {
                            src: i,
                            dst: j,
                            meters: ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt(),
                        });
                    }
                }
            }
            out
        }
    })
}
