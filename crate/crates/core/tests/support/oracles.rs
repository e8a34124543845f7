//! Hand-computed metric values, shared by the oracle tests and the
//! acceptance report.

use rand::Rng;
use stdgi_core::dataset::make_windows;
use stdgi_core::metrics::{compare_runs, horizon_report, mae, mape, rmse, HorizonMetrics, Trend};
use stdgi_core::numerics::seeded_rng;
use stdgi_core::{Forecast, MetricsReport, Mode};

pub const TOL: f64 = 1e-12;

fn close(what: &str, got: f64, want: f64) -> Result<(), String> {
    if (got - want).abs() <= TOL {
        Ok(())
    } else {
        Err(format!("{what}: got {got}, expected {want}"))
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

pub fn mae_examples() -> Result<(), String> {
    close("mae(p, p)", mae(&[4.0, -2.5, 7.0], &[4.0, -2.5, 7.0], None).map_err(err)?, 0.0)?;
    close("mae([3,5],[1,1])", mae(&[3.0, 5.0], &[1.0, 1.0], None).map_err(err)?, 3.0)?;
    close(
        "masked mae",
        mae(&[3.0, 5.0], &[1.0, 1.0], Some(&[false, true])).map_err(err)?,
        4.0,
    )?;
    if mae(&[1.0], &[2.0], Some(&[false])).is_ok() {
        return Err("fully masked mae should be undefined".into());
    }
    Ok(())
}

pub fn rmse_examples() -> Result<(), String> {
    close("rmse(p, p)", rmse(&[1.0, 2.0], &[1.0, 2.0], None).map_err(err)?, 0.0)?;
    close("rmse([3,5],[1,1])", rmse(&[3.0, 5.0], &[1.0, 1.0], None).map_err(err)?, 10f64.sqrt())
}

pub fn mape_examples() -> Result<(), String> {
    let m = mape(&[110.0], &[100.0], None).map_err(err)?;
    close("mape([110],[100])", m.value, 0.10)?;
    let m = mape(&[90.0, 120.0], &[100.0, 100.0], None).map_err(err)?;
    close("mape([90,120],[100,100])", m.value, 0.15)?;
    let m = mape(&[90.0, 5.0, 120.0], &[100.0, 0.0, 100.0], None).map_err(err)?;
    close("mape with a zero truth", m.value, 0.15)?;
    if m.zero_masked != 1 {
        return Err(format!("zero truth masked {} times, expected 1", m.zero_masked));
    }
    if mape(&[1.0], &[0.0], None).is_ok() {
        return Err("mape over only zero truths should be undefined".into());
    }
    Ok(())
}

/// One sample, one node, every step off by exactly 1.
pub fn horizon_examples() -> Result<(), String> {
    let windows = make_windows(12, 12, 0..24).samples;
    let trues: Vec<f64> = (0..12).map(|j| 50.0 + j as f64).collect();
    let preds: Vec<f64> = trues.iter().enumerate().map(|(j, t)| t + if j % 2 == 0 { 1.0 } else { -1.0 }).collect();
    let f = Forecast { windows, horizon: 12, nodes: 1, preds, trues: trues.clone() };
    let r = horizon_report(&f, &[3, 6, 12], 5, Mode::Stdgi, 0).map_err(err)?;
    let hs: Vec<usize> = r.horizons.iter().map(|h| h.horizon).collect();
    if hs != [3, 6, 12] {
        return Err(format!("report horizons {hs:?}"));
    }
    for h in &r.horizons {
        close(&format!("mae@{}", h.horizon), h.mae, 1.0)?;
        close(&format!("rmse@{}", h.horizon), h.rmse, 1.0)?;
        close(&format!("mape@{}", h.horizon), h.mape, 1.0 / trues[h.horizon - 1])?;
    }
    let perfect = Forecast { preds: f.trues.clone(), ..f.clone() };
    let r = horizon_report(&perfect, &[3, 6, 12], 5, Mode::Stdgi, 0).map_err(err)?;
    for h in &r.horizons {
        close("perfect mae", h.mae, 0.0)?;
        close("perfect rmse", h.rmse, 0.0)?;
        close("perfect mape", h.mape, 0.0)?;
    }
    if horizon_report(&f, &[13], 5, Mode::Stdgi, 0).is_ok() {
        return Err("horizon 13 should be rejected".into());
    }
    Ok(())
}

fn report(mode: Mode, seed: u64, maes: [f64; 3]) -> MetricsReport {
    let horizons = [3usize, 6, 12]
        .iter()
        .zip(maes)
        .map(|(&h, m)| HorizonMetrics { horizon: h, minutes: 5 * h, mae: m, rmse: m + 1.0, mape: m / 50.0, mape_masked: 0 })
        .collect();
    MetricsReport { mode, seed, horizons }
}

pub fn comparison_examples() -> Result<(), String> {
    let c = compare_runs(&[
        report(Mode::Baseline, 0, [4.0, 5.0, 6.0]),
        report(Mode::Stdgi, 0, [3.9, 4.8, 5.6]),
    ])
    .map_err(err)?;
    for (h, want) in c.horizons.iter().zip([0.025, 0.04, 0.4 / 6.0]) {
        close(&format!("relative improvement@{}", h.horizon), h.relative_improvement, want)?;
        if h.baseline_mae.std != 0.0 || h.stdgi_mae.std != 0.0 {
            return Err("single-seed std must be 0".into());
        }
    }
    if c.trend != Trend::Increasing || !c.single_seed {
        return Err(format!("trend {:?}, single_seed {}", c.trend, c.single_seed));
    }
    let same = compare_runs(&[
        report(Mode::Baseline, 1, [4.0, 5.0, 6.0]),
        report(Mode::Stdgi, 1, [4.0, 5.0, 6.0]),
    ])
    .map_err(err)?;
    for h in &same.horizons {
        close("self-comparison improvement", h.relative_improvement, 0.0)?;
        close("self-comparison paired diff", h.paired_mae_diff[0], 0.0)?;
    }
    if compare_runs(&[report(Mode::Baseline, 0, [1.0; 3]), report(Mode::Stdgi, 1, [1.0; 3])]).is_ok() {
        return Err("mismatched seeds should be a comparison error".into());
    }
    Ok(())
}

pub fn all_examples() -> Result<(), String> {
    mae_examples()?;
    rmse_examples()?;
    mape_examples()?;
    horizon_examples()?;
    comparison_examples()
}

/// `rmse >= mae` on `count` random vectors of random length.
pub fn rmse_dominates(count: usize, seed: u64) -> Result<(), String> {
    let mut rng = seeded_rng(seed);
    for i in 0..count {
        let n = rng.random_range(1..64);
        let p: Vec<f64> = (0..n).map(|_| rng.random_range(-100.0..100.0)).collect();
        let t: Vec<f64> = (0..n).map(|_| rng.random_range(-100.0..100.0)).collect();
        let (a, r) = (mae(&p, &t, None).map_err(err)?, rmse(&p, &t, None).map_err(err)?);
        if r + TOL < a {
            return Err(format!("vector {i}: rmse {r} < mae {a}"));
        }
    }
    Ok(())
}
