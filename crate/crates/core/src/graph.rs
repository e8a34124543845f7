//! Weighted directed sensor graph and its propagation matrix.
//!
//! Edge `(src, dst, w)` sets `W[src][dst] = w`; row `src` of the propagation
//! matrix therefore aggregates over the nodes `src` points to.

use std::collections::HashSet;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    pub weight: f64,
}

/// How `W + I` is normalized into the propagation matrix.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// `D⁻¹(W + I)`, row-stochastic; valid for directed graphs.
    #[default]
    Row,
    /// `D^{-1/2}(W + I)D^{-1/2}`; only meaningful for symmetric `W`.
    Symmetric,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    num_nodes: usize,
    edges: Vec<Edge>,
    normalized: Option<Tensor>,
}

/// One row of a distances file.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Distance {
    pub src: usize,
    pub dst: usize,
    pub meters: f64,
}

impl Graph {
    pub fn new(num_nodes: usize, edges: Vec<Edge>) -> Result<Self> {
        if num_nodes == 0 {
            return Err(Error::Validation("graph needs at least one node".into()));
        }
        let mut seen = HashSet::with_capacity(edges.len());
        for e in &edges {
            if e.src >= num_nodes || e.dst >= num_nodes {
                return Err(Error::Validation(format!(
                    "edge {}->{} out of range for {num_nodes} nodes",
                    e.src, e.dst
                )));
            }
            if !(e.weight > 0.0) || !e.weight.is_finite() {
                return Err(Error::Validation(format!(
                    "edge {}->{} has non-positive weight {}",
                    e.src, e.dst, e.weight
                )));
            }
            if e.src == e.dst {
                return Err(Error::Validation(format!(
                    "explicit self-loop on node {}; self-loops are added during normalization",
                    e.src
                )));
            }
            if !seen.insert((e.src, e.dst)) {
                return Err(Error::Validation(format!(
                    "duplicate edge {}->{}",
                    e.src, e.dst
                )));
            }
        }
        Ok(Self {
            num_nodes,
            edges,
            normalized: None,
        })
    }

    /// Gaussian-kernel graph: `w = exp(-d²/σ²)`, keeping edges with
    /// `w >= weight_floor`. Self-distances are skipped.
    pub fn from_distances(
        distances: &[Distance],
        sigma: f64,
        weight_floor: f64,
        num_nodes: Option<usize>,
    ) -> Result<Self> {
        if !(sigma > 0.0) {
            return Err(Error::Validation(format!("sigma must be > 0, got {sigma}")));
        }
        if !(weight_floor > 0.0 && weight_floor < 1.0) {
            return Err(Error::Validation(format!(
                "weight_floor must lie in (0, 1), got {weight_floor}"
            )));
        }
        if let Some(d) = distances.iter().find(|d| !(d.meters >= 0.0)) {
            return Err(Error::Validation(format!(
                "negative distance {} on {}->{}",
                d.meters, d.src, d.dst
            )));
        }
        let n = resolve_nodes(distances.iter().map(|d| d.src.max(d.dst)), num_nodes)?;
        let edges = distances
            .iter()
            .filter(|d| d.src != d.dst)
            .map(|d| Edge {
                src: d.src,
                dst: d.dst,
                weight: kernel_weight(d.meters, sigma),
            })
            .filter(|e| e.weight >= weight_floor)
            .collect();
        Self::new(n, edges)
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Dense `W` (no self-loops).
    pub fn adjacency(&self) -> Tensor {
        let n = self.num_nodes;
        let mut w = Tensor::zeros(&[n, n]);
        for e in &self.edges {
            w.data_mut()[e.src * n + e.dst] = e.weight;
        }
        w
    }

    /// Computes and caches the propagation matrix.
    pub fn normalize(mut self, mode: Normalization) -> Self {
        self.normalized = Some(normalize_adjacency(&self.adjacency(), mode));
        self
    }

    pub fn normalized_adjacency(&self) -> Result<&Tensor> {
        self.normalized
            .as_ref()
            .ok_or_else(|| Error::Contract("graph has not been normalized".into()))
    }

    /// Reads `src,dst,weight` rows; the header line is optional.
    pub fn load_edge_list(path: &Path, num_nodes: Option<usize>) -> Result<Self> {
        let rows = read_triples(path, &["src", "dst", "weight"])?;
        let mut edges = Vec::with_capacity(rows.len());
        for (line, src, dst, weight) in rows {
            if !(weight > 0.0) {
                return Err(Error::Validation(format!(
                    "line {line}: weight must be > 0, got {weight}"
                )));
            }
            if src != dst {
                edges.push(Edge { src, dst, weight });
            }
        }
        let n = resolve_nodes(edges.iter().map(|e| e.src.max(e.dst)), num_nodes)?;
        Self::new(n, edges)
    }

    pub fn write_edge_list(&self, path: &Path) -> Result<()> {
        let mut out = String::from("src,dst,weight\n");
        for e in &self.edges {
            out.push_str(&format!("{},{},{}\n", e.src, e.dst, e.weight));
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

pub fn kernel_weight(meters: f64, sigma: f64) -> f64 {
    (-(meters * meters) / (sigma * sigma)).exp()
}

/// Population standard deviation of the off-diagonal distances, the usual
/// kernel width for road-distance graphs.
pub fn default_sigma(distances: &[Distance]) -> Result<f64> {
    let d: Vec<f64> = distances
        .iter()
        .filter(|d| d.src != d.dst && d.meters.is_finite())
        .map(|d| d.meters)
        .collect();
    if d.is_empty() {
        return Err(Error::Validation("no distances to derive sigma from".into()));
    }
    let mean = d.iter().sum::<f64>() / d.len() as f64;
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / d.len() as f64;
    if !(var > 0.0) {
        return Err(Error::Validation(
            "all distances are equal; sigma must be given explicitly".into(),
        ));
    }
    Ok(var.sqrt())
}

/// Normalizes `W + I`.
pub fn normalize_adjacency(w: &Tensor, mode: Normalization) -> Tensor {
    let n = w.shape()[0];
    let mut a = w.clone();
    for i in 0..n {
        a.data_mut()[i * n + i] += 1.0;
    }
    let deg: Vec<f64> = (0..n).map(|i| a.row(i).iter().sum()).collect();
    let data = a.data_mut();
    match mode {
        Normalization::Row => {
            for i in 0..n {
                for j in 0..n {
                    data[i * n + j] /= deg[i];
                }
            }
        }
        Normalization::Symmetric => {
            let inv: Vec<f64> = deg.iter().map(|d| 1.0 / d.sqrt()).collect();
            for i in 0..n {
                for j in 0..n {
                    data[i * n + j] *= inv[i] * inv[j];
                }
            }
        }
    }
    a
}

pub fn load_distances(path: &Path) -> Result<Vec<Distance>> {
    let rows = read_triples(path, &["src", "dst", "distance_m"])?;
    rows.into_iter()
        .map(|(line, src, dst, meters)| {
            if meters < 0.0 {
                Err(Error::Validation(format!(
                    "line {line}: negative distance {meters}"
                )))
            } else {
                Ok(Distance { src, dst, meters })
            }
        })
        .collect()
}

pub fn write_distances(path: &Path, distances: &[Distance]) -> Result<()> {
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = String::from("src,dst,distance_m\n");
    for d in distances {
        out.push_str(&format!("{},{},{}\n", d.src, d.dst, d.meters));
    }
    file.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

fn resolve_nodes(max_ids: impl Iterator<Item = usize>, num_nodes: Option<usize>) -> Result<usize> {
    let inferred = max_ids.max().map_or(0, |m| m + 1);
    match num_nodes {
        Some(n) if n < inferred => Err(Error::Validation(format!(
            "node count {n} is smaller than the largest node id + 1 ({inferred})"
        ))),
        Some(n) => Ok(n),
        None if inferred == 0 => Err(Error::Validation(
            "empty edge list and no node count given".into(),
        )),
        None => Ok(inferred),
    }
}

/// Parses `int,int,float` rows, skipping a leading header equal to `header`.
fn read_triples(path: &Path, header: &[&str; 3]) -> Result<Vec<(usize, usize, usize, f64)>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let mut out = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(i + 1, |p| p.line() as usize);
        if i == 0 && record.iter().eq(header.iter().copied()) {
            continue;
        }
        if record.len() != 3 {
            return Err(Error::Parse {
                line,
                message: format!("expected 3 fields, found {}", record.len()),
            });
        }
        let id = |k: usize| {
            record[k].parse::<usize>().map_err(|_| Error::Parse {
                line,
                message: format!("`{}` is not a node id", &record[k]),
            })
        };
        let value = record[2].parse::<f64>().map_err(|_| Error::Parse {
            line,
            message: format!("`{}` is not a number", &record[2]),
        })?;
        out.push((line, id(0)?, id(1)?, value));
    }
    Ok(out)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse {
            line,
            message: format!("{other:?}"),
        },
    }
}
