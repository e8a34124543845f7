//! Fixtures for the criterion benchmarks in `benches/`.

use stdgi_core::dataset::{synthesize_traffic, synthetic_distances, FeatureSeries, GraphFamily, SynthParams};
use stdgi_core::numerics::{seeded_rng, Tensor};
use stdgi_core::{Graph, Normalization};

/// Deterministic, well-spread values without pulling in an RNG.
pub fn filled(rows: usize, cols: usize, phase: f64) -> Tensor {
    let data = (0..rows * cols).map(|i| (i as f64 * 0.618 + phase).sin()).collect();
    Tensor::matrix(rows, cols, data).expect("shape matches data")
}

/// The default synthetic corridor: graph plus series.
pub fn corridor(nodes: usize, steps: usize) -> (Graph, FeatureSeries) {
    let mut rng = seeded_rng(7);
    let d = synthetic_distances(GraphFamily::Corridor, nodes, (600.0, 1000.0), &mut rng).expect("distances");
    let g = Graph::from_distances(&d, 1000.0, 0.1, Some(nodes))
        .expect("graph")
        .normalize(Normalization::Row);
    let s = synthesize_traffic(&g, steps, &SynthParams::default(), &mut rng).expect("series");
    (g, s)
}
