use std::fmt::Write as _;
use std::path::Path;

use crate::dataset::{FeatureSeries, SPEED};
use crate::error::{Error, Result};

/// Reads a dense `t,node,speed` grid. Time indices are shifted so the first
/// step is 0; time of day is derived from `t · step_minutes`.
pub fn load_features_csv(path: &Path, step_minutes: usize) -> Result<FeatureSeries> {
    if step_minutes == 0 {
        return Err(Error::Config("step_minutes must be >= 1".into()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| io_or_parse(path, e))?;
    let headers = reader.headers().map_err(|e| io_or_parse(path, e))?.clone();
    if !headers.iter().eq(["t", "node", "speed"]) {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header `t,node,speed`, found `{}`", headers.as_slice()),
        });
    }

    let mut rows: Vec<(i64, usize, f64)> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| io_or_parse(path, e))?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let parse_err = |what: &str, raw: &str| Error::Parse {
            line,
            message: format!("`{raw}` is not a valid {what}"),
        };
        let t: i64 = record[0].parse().map_err(|_| parse_err("time index", &record[0]))?;
        let node: usize = record[1].parse().map_err(|_| parse_err("node id", &record[1]))?;
        let speed: f64 = record[2].parse().map_err(|_| parse_err("speed", &record[2]))?;
        if !speed.is_finite() {
            return Err(parse_err("speed", &record[2]));
        }
        rows.push((t, node, speed));
    }
    if rows.is_empty() {
        return Err(Error::Ingestion(format!("{} has no data rows", path.display())));
    }

    let t0 = rows.iter().map(|r| r.0).min().unwrap();
    let steps = (rows.iter().map(|r| r.0).max().unwrap() - t0 + 1) as usize;
    let nodes = rows.iter().map(|r| r.1).max().unwrap() + 1;
    let mut grid: Vec<Option<f64>> = vec![None; steps * nodes];
    for &(t, node, speed) in &rows {
        let cell = &mut grid[(t - t0) as usize * nodes + node];
        if cell.is_some() {
            return Err(Error::Ingestion(format!("duplicate cell (t={t}, node={node})")));
        }
        *cell = Some(speed);
    }
    if let Some(gap) = grid.iter().position(Option::is_none) {
        return Err(Error::Ingestion(format!(
            "missing cell (t={}, node={}); the grid must be dense",
            gap / nodes + t0 as usize,
            gap % nodes
        )));
    }
    let speeds: Vec<f64> = grid.into_iter().map(Option::unwrap).collect();
    FeatureSeries::from_speeds(steps, nodes, step_minutes, &speeds)
}

pub fn write_features_csv(path: &Path, series: &FeatureSeries) -> Result<()> {
    let mut out = String::with_capacity(series.steps() * series.nodes() * 16);
    out.push_str("t,node,speed\n");
    for t in 0..series.steps() {
        for v in 0..series.nodes() {
            writeln!(out, "{t},{v},{}", series.get(t, v, SPEED)).unwrap();
        }
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn io_or_parse(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse {
            line,
            message: format!("{other:?}"),
        },
    }
}
