mod support;

use proptest::prelude::*;
use rand::Rng;
use stdgi_core::dataset::{
    fit_normalizer, make_windows, synthesize_traffic, time_of_day, FeatureSeries, SynthParams, TIME_OF_DAY,
};
use stdgi_core::forecaster::{
    forecast_normalized, lstm_cell, seq2seq_forecast, InputSource, LstmParams, Seq2SeqParams,
};
use stdgi_core::metrics::{horizon_report, mae, mape, rmse};
use stdgi_core::numerics::{seeded_rng, LrSchedule};
use stdgi_core::{Edge, Forecast, Graph, Mode, Normalization};

use support::invariants;

#[test]
fn encoder_is_permutation_equivariant() {
    invariants::encoder_equivariance(64).unwrap();
}

#[test]
fn encoder_sees_two_hops() {
    invariants::two_hop_locality(64).unwrap();
}

#[test]
fn corruption_preserves_rows() {
    invariants::corruption_multiset(128).unwrap();
}

#[test]
fn windows_never_leak() {
    invariants::window_leakage(256).unwrap();
}

#[test]
fn normalized_adjacency_is_row_stochastic() {
    invariants::row_stochastic(128).unwrap();
}

fn vectors() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1usize..40).prop_flat_map(|n| {
        (
            prop::collection::vec(-100.0f64..100.0, n),
            prop::collection::vec(-100.0f64..100.0, n),
        )
    })
}

proptest! {
    #[test]
    fn rmse_dominates_mae((p, t) in vectors()) {
        let a = mae(&p, &t, None).unwrap();
        let r = rmse(&p, &t, None).unwrap();
        prop_assert!(r + 1e-12 >= a);
        prop_assert!(a >= 0.0);
    }

    #[test]
    fn metrics_ignore_joint_permutation((p, t) in vectors(), seed in any::<u64>()) {
        let mut rng = seeded_rng(seed);
        let mask: Vec<bool> = (0..p.len()).map(|i| i == 0 || rng.random_bool(0.7)).collect();
        let perm = stdgi_core::mi::random_permutation(p.len(), &mut rng);
        let pp: Vec<f64> = perm.iter().map(|&i| p[i]).collect();
        let tp: Vec<f64> = perm.iter().map(|&i| t[i]).collect();
        let mp: Vec<bool> = perm.iter().map(|&i| mask[i]).collect();
        prop_assert!((mae(&p, &t, Some(&mask)).unwrap() - mae(&pp, &tp, Some(&mp)).unwrap()).abs() < 1e-9);
        prop_assert!((rmse(&p, &t, Some(&mask)).unwrap() - rmse(&pp, &tp, Some(&mp)).unwrap()).abs() < 1e-9);
        let (a, b) = (mape(&p, &t, Some(&mask)), mape(&pp, &tp, Some(&mp)));
        if let (Ok(a), Ok(b)) = (a, b) {
            prop_assert!((a.value - b.value).abs() < 1e-9);
        }
    }

    #[test]
    fn normalizer_ignores_non_training_values(seed in any::<u64>(), scale in 0.1f64..100.0) {
        let mut rng = seeded_rng(seed);
        let (steps, nodes) = (30, 3);
        let speeds: Vec<f64> = (0..steps * nodes).map(|_| rng.random_range(0.0..80.0)).collect();
        let a = FeatureSeries::from_speeds(steps, nodes, 5, &speeds).unwrap();
        let mut moved = speeds.clone();
        moved[20 * nodes..].iter_mut().for_each(|s| *s *= scale);
        let b = FeatureSeries::from_speeds(steps, nodes, 5, &moved).unwrap();
        prop_assert_eq!(fit_normalizer(&a, 0..20).unwrap(), fit_normalizer(&b, 0..20).unwrap());
    }

    #[test]
    fn schedule_never_increases(base in 1e-5f64..1.0, warm in 1usize..40, period in 1usize..40) {
        let s = LrSchedule { base_lr: base, warm_epochs: warm, period, factor: 0.1 };
        let lrs: Vec<f64> = (0..200).map(|e| s.lr_at_epoch(e)).collect();
        prop_assert!(lrs.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn synthetic_speeds_stay_bounded(seed in any::<u64>(), alpha in 0.0f64..=1.0, noise in 0.0f64..20.0) {
        let mut rng = seeded_rng(seed);
        let edges = (0..6).map(|i| Edge { src: i, dst: (i + 1) % 6, weight: 0.5 }).collect();
        let g = Graph::new(6, edges).unwrap().normalize(Normalization::Row);
        let p = SynthParams { alpha, noise_std: noise, ..SynthParams::default() };
        let s = synthesize_traffic(&g, 600, &p, &mut rng).unwrap();
        let period = 1440 / 5;
        for t in 0..600 {
            for v in 0..6 {
                prop_assert!((0.0..=80.0).contains(&s.speed(t, v)));
                if t + period < 600 {
                    prop_assert_eq!(s.get(t, v, TIME_OF_DAY), s.get(t + period, v, TIME_OF_DAY));
                }
            }
            prop_assert_eq!(s.get(t, 0, TIME_OF_DAY), time_of_day(t, 5));
        }
    }

    #[test]
    fn lstm_cell_state_is_bounded(seed in any::<u64>()) {
        let mut rng = seeded_rng(seed);
        let p = LstmParams::new(3, 5, &mut rng);
        let x: Vec<f64> = (0..3).map(|_| rng.random_range(-10.0..10.0)).collect();
        let h: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
        let c: Vec<f64> = (0..5).map(|_| rng.random_range(-5.0..5.0)).collect();
        let (h2, c2) = lstm_cell(&x, &h, &c, &p).unwrap();
        for j in 0..5 {
            prop_assert!(c2[j].abs() <= c[j].abs() + 1.0);
            prop_assert!(h2[j].abs() < 1.0);
        }
    }

    #[test]
    fn teacher_forcing_with_own_predictions_is_autoregression(seed in any::<u64>()) {
        let mut rng = seeded_rng(seed);
        let p = Seq2SeqParams::new(2, 4, &mut rng);
        let input: Vec<f64> = (0..12 * 2).map(|_| rng.random_range(-1.0..1.0)).collect();
        let free = seq2seq_forecast(&input, 12, 0.3, &p, 12, None).unwrap();
        let forced = seq2seq_forecast(&input, 12, 0.3, &p, 12, Some(&free)).unwrap();
        for (a, b) in free.iter().zip(&forced) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn horizon_metric_reads_only_its_step(seed in any::<u64>(), other in 0usize..12) {
        let mut rng = seeded_rng(seed);
        let (samples, horizon, nodes) = (4, 12, 3);
        let n = samples * horizon * nodes;
        let preds: Vec<f64> = (0..n).map(|_| rng.random_range(1.0..70.0)).collect();
        let trues: Vec<f64> = (0..n).map(|_| rng.random_range(1.0..70.0)).collect();
        let windows = make_windows(12, 12, 0..27).samples;
        let f = Forecast { windows, horizon, nodes, preds, trues };
        let base = horizon_report(&f, &[3, 6, 12], 5, Mode::Baseline, 0).unwrap();
        let mut g = f.clone();
        for s in 0..samples {
            for v in 0..nodes {
                let i = g.index(s, other, v);
                g.preds[i] += 17.0;
            }
        }
        let moved = horizon_report(&g, &[3, 6, 12], 5, Mode::Baseline, 0).unwrap();
        for (a, b) in base.horizons.iter().zip(&moved.horizons) {
            if a.horizon - 1 != other {
                prop_assert_eq!(a, b);
            } else {
                prop_assert!(a != b);
            }
        }
    }
}

#[test]
fn forecaster_treats_nodes_independently() {
    let mut rng = seeded_rng(5);
    let (steps, nodes) = (40, 4);
    let speeds: Vec<f64> = (0..steps * nodes).map(|_| rng.random_range(-1.0..1.0)).collect();
    let series = FeatureSeries::from_speeds(steps, nodes, 5, &speeds).unwrap();
    let perm = [2usize, 0, 3, 1];
    let permuted: Vec<f64> = (0..steps)
        .flat_map(|t| perm.map(|p| speeds[t * nodes + p]))
        .collect();
    let series_p = FeatureSeries::from_speeds(steps, nodes, 5, &permuted).unwrap();
    let params = Seq2SeqParams::new(2, 6, &mut rng);
    let windows = make_windows(12, 12, 0..steps).samples;
    let src = InputSource::new(&series, Mode::Baseline, None).unwrap();
    let src_p = InputSource::new(&series_p, Mode::Baseline, None).unwrap();
    let f = forecast_normalized(&params, src, &windows, 12).unwrap();
    let fp = forecast_normalized(&params, src_p, &windows, 12).unwrap();
    for s in 0..windows.len() {
        for j in 0..12 {
            for (v, &p) in perm.iter().enumerate() {
                assert!((fp.preds[fp.index(s, j, v)] - f.preds[f.index(s, j, p)]).abs() < 1e-12);
            }
        }
    }
}
