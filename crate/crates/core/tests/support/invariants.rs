//! Structural properties run through proptest's runner, so the same checks
//! serve both the property-test target and the acceptance report.

use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};
use rand::Rng;
use stdgi_core::dataset::{make_windows, split_series};
use stdgi_core::encoder::{EncoderConfig, EncoderParams};
use stdgi_core::mi::{corrupt, random_permutation};
use stdgi_core::numerics::{seeded_rng, SeededRng, Tensor};
use stdgi_core::params::ParamSet;
use stdgi_core::pretrain::valid_times;
use stdgi_core::{Edge, Graph, Normalization};

fn runner(cases: u32) -> TestRunner {
    TestRunner::new(Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    })
}

fn outcome<T: std::fmt::Debug>(r: Result<(), proptest::test_runner::TestError<T>>) -> Result<(), String> {
    r.map_err(|e| e.to_string())
}

fn random_graph(rng: &mut SeededRng, n: usize, density: f64) -> Graph {
    let mut edges = Vec::new();
    for s in 0..n {
        for d in 0..n {
            if s != d && rng.random_bool(density) {
                edges.push(Edge {
                    src: s,
                    dst: d,
                    weight: rng.random_range(0.05..1.0),
                });
            }
        }
    }
    Graph::new(n, edges).unwrap().normalize(Normalization::Row)
}

fn random_matrix(rng: &mut SeededRng, rows: usize, cols: usize) -> Tensor {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap()
}

fn small_encoder(rng: &mut SeededRng) -> EncoderParams {
    let mut p = EncoderParams::new(
        EncoderConfig {
            in_features: 2,
            hidden: 8,
            embedding: 5,
        },
        rng,
    );
    for (_, t) in p.named_tensors_mut() {
        if t.shape().len() == 1 {
            t.data_mut().iter_mut().for_each(|v| *v = rng.random_range(-0.5..0.5));
        }
    }
    p
}

/// Relabelling the nodes relabels the embeddings: `enc(Px, PÂPᵀ) = P·enc(x, Â)`.
pub fn encoder_equivariance(cases: u32) -> Result<(), String> {
    outcome(runner(cases).run(&(2usize..9, any::<u64>()), |(n, seed)| {
        let mut rng = seeded_rng(seed);
        let graph = random_graph(&mut rng, n, 0.4);
        let a = graph.normalized_adjacency().unwrap();
        let x = random_matrix(&mut rng, n, 2);
        let params = small_encoder(&mut rng);
        let perm = random_permutation(n, &mut rng);

        let mut pa = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                pa[i * n + j] = a.at(perm[i], perm[j]);
            }
        }
        let px: Vec<f64> = perm.iter().flat_map(|&p| x.row(p).to_vec()).collect();
        let h = params.encode_stacked(&x, a).unwrap();
        let ph = params
            .encode_stacked(&Tensor::matrix(n, 2, px).unwrap(), &Tensor::matrix(n, n, pa).unwrap())
            .unwrap();
        for (i, &p) in perm.iter().enumerate() {
            for (u, v) in ph.row(i).iter().zip(h.row(p)) {
                prop_assert!((u - v).abs() <= 1e-9, "node {i}: {u} vs {v}");
            }
        }
        Ok(())
    }))
}

/// On a path graph, perturbing node `j` leaves every node more than two hops
/// away bit-for-bit unchanged.
pub fn two_hop_locality(cases: u32) -> Result<(), String> {
    outcome(runner(cases).run(&(5usize..12, any::<u64>()), |(n, seed)| {
        let mut rng = seeded_rng(seed);
        let mut edges = Vec::new();
        for i in 0..n - 1 {
            edges.push(Edge { src: i, dst: i + 1, weight: 1.0 });
            edges.push(Edge { src: i + 1, dst: i, weight: 1.0 });
        }
        let graph = Graph::new(n, edges).unwrap().normalize(Normalization::Row);
        let a = graph.normalized_adjacency().unwrap();
        let params = small_encoder(&mut rng);
        let x = random_matrix(&mut rng, n, 2);
        let j = rng.random_range(0..n);
        let mut y = x.clone();
        y.data_mut()[2 * j] += 3.0;
        y.data_mut()[2 * j + 1] -= 2.0;
        let hx = params.encode_stacked(&x, a).unwrap();
        let hy = params.encode_stacked(&y, a).unwrap();
        for i in 0..n {
            if i.abs_diff(j) > 2 {
                prop_assert_eq!(hx.row(i), hy.row(i), "node {} moved when node {} changed", i, j);
            }
        }
        Ok(())
    }))
}

/// A corrupted snapshot holds exactly the original rows.
pub fn corruption_multiset(cases: u32) -> Result<(), String> {
    outcome(runner(cases).run(&(2usize..30, 1usize..4, any::<u64>()), |(n, f, seed)| {
        let mut rng = seeded_rng(seed);
        let x = random_matrix(&mut rng, n, f);
        let c = corrupt(&x, &mut rng).map_err(|e| TestCaseError::fail(e.to_string()))?;
        prop_assert_eq!(c.shape(), x.shape());
        let sorted = |t: &Tensor| {
            let mut rows: Vec<Vec<f64>> = (0..t.rows()).map(|r| t.row(r).to_vec()).collect();
            rows.sort_by(|a, b| a.partial_cmp(b).unwrap());
            rows
        };
        prop_assert_eq!(sorted(&c), sorted(&x));
        Ok(())
    }))
}

/// Splits are contiguous and ordered, windows never leave their split, and
/// pretraining pairs never reach past the training range.
pub fn window_leakage(cases: u32) -> Result<(), String> {
    let strategy = (60usize..3000, 1usize..13, 1usize..13, 0.5f64..0.8, 0.05f64..0.2, 1usize..8);
    outcome(runner(cases).run(&strategy, |(steps, input, horizon, tr, va, max_k)| {
        let te = 1.0 - tr - va;
        let Ok(split) = split_series(steps, [tr, va, te], input + horizon) else {
            return Ok(());
        };
        prop_assert_eq!(split.train.start, 0);
        prop_assert_eq!(split.train.end, split.val.start);
        prop_assert_eq!(split.val.end, split.test.start);
        prop_assert_eq!(split.test.end, steps);
        for range in [&split.train, &split.val, &split.test] {
            let w = make_windows(input, horizon, range.clone());
            prop_assert_eq!(w.samples.len(), range.len() + 1 - input - horizon);
            for s in &w.samples {
                prop_assert!(s.start >= range.start && s.end() <= range.end);
            }
        }
        for t in valid_times(&split.train, max_k) {
            prop_assert!(t + max_k < split.train.end);
        }
        Ok(())
    }))
}

/// Every row of the normalized adjacency is a probability vector.
pub fn row_stochastic(cases: u32) -> Result<(), String> {
    outcome(runner(cases).run(&(1usize..25, 0.0f64..1.0, any::<u64>()), |(n, density, seed)| {
        let g = random_graph(&mut seeded_rng(seed), n, density);
        let a = g.normalized_adjacency().unwrap();
        for i in 0..n {
            let row = a.row(i);
            prop_assert!(row.iter().all(|&v| v >= 0.0));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(row[i] > 0.0);
        }
        Ok(())
    }))
}
