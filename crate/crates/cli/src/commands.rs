//! One function per subcommand. Each reads its inputs from and writes its
//! outputs under the configured output directory:
//!
//! ```text
//! data/{features,edges,distances}.csv            synth
//! seed_S/encoder.json, pretrain_history.jsonl   pretrain
//! seed_S/embeddings.bin, pca.csv                 embed
//! seed_S/MODE/regressor.json, history.jsonl      train
//! seed_S/MODE/predictions.csv, metrics.json      eval
//! comparison.json, comparison.txt                compare
//! ```

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use log::info;
use serde::Serialize;
use serde_json::json;
use stdgi_core::dataset::{
    apply_normalizer, fit_normalizer, load_features_csv, make_windows, split_series, synthesize_traffic,
    synthetic_distances, write_features_csv, FeatureSeries, NormStats, SplitSpec,
};
use stdgi_core::encoder::{EncoderConfig, EncoderParams};
use stdgi_core::forecaster::{predict, train_regressor_with, Forecast, InputSource, Seq2SeqParams};
use stdgi_core::graph::{default_sigma, load_distances, write_distances};
use stdgi_core::metrics::{compare_runs, comparison_table, horizon_report};
use stdgi_core::numerics::seeded_rng;
use stdgi_core::params::Checkpoint;
use stdgi_core::pretrain::{export_embeddings, pca_projection, pretrain_with, EpochRecord};
use stdgi_core::{Comparison, EmbeddingSeries, Error, Graph, MetricsReport, Mode, Result, TrainHistory};

use crate::config::ExperimentConfig;
use crate::embfile::{read_embeddings, write_embeddings};

/// Raw and normalized series with their graph and split.
pub struct Dataset {
    pub raw: FeatureSeries,
    pub norm: FeatureSeries,
    pub graph: Graph,
    pub split: SplitSpec,
    pub stats: NormStats,
}

impl Dataset {
    pub fn a_hat(&self) -> &stdgi_core::Tensor {
        self.graph
            .normalized_adjacency()
            .expect("dataset graphs are always normalized")
    }
}

pub fn load_dataset(cfg: &ExperimentConfig) -> Result<Dataset> {
    let raw = load_features_csv(&cfg.features_path(), cfg.data.step_minutes)?;
    let n = raw.nodes();
    let graph = match (&cfg.graph.edges, &cfg.graph.distances) {
        (Some(edges), _) => Graph::load_edge_list(edges, Some(n))?,
        (None, Some(dist)) => {
            let d = load_distances(dist)?;
            let sigma = match cfg.graph.sigma_m {
                Some(s) => s,
                None => default_sigma(&d)?,
            };
            Graph::from_distances(&d, sigma, cfg.graph.weight_floor, Some(n))?
        }
        (None, None) => Graph::load_edge_list(&cfg.data_dir().join("edges.csv"), Some(n))?,
    }
    .normalize(cfg.graph.normalization);
    let min_len = cfg.regressor.input_steps + cfg.regressor.horizon;
    let split = split_series(raw.steps(), cfg.data.split, min_len)?;
    let stats = fit_normalizer(&raw, split.train.clone())?;
    let norm = apply_normalizer(&raw, &stats);
    Ok(Dataset {
        raw,
        norm,
        graph,
        split,
        stats,
    })
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut out = String::new();
    for r in rows {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Validation(format!("{}: {other:?}", path.display())),
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SynthSummary {
    pub nodes: usize,
    pub steps: usize,
    pub alpha: f64,
    pub edges: usize,
    pub features: PathBuf,
}

pub fn cmd_synth(cfg: &ExperimentConfig) -> Result<SynthSummary> {
    cfg.validate()?;
    let syn = &cfg.data.synthetic;
    let mut rng = seeded_rng(syn.seed);
    let distances = synthetic_distances(syn.family, syn.nodes, (syn.spacing_m[0], syn.spacing_m[1]), &mut rng)?;
    let graph = Graph::from_distances(&distances, syn.sigma_m, cfg.graph.weight_floor, Some(syn.nodes))?
        .normalize(cfg.graph.normalization);
    let series = synthesize_traffic(&graph, syn.steps, &syn.process, &mut rng)?;

    let dir = cfg.data_dir();
    create_dir(&dir)?;
    let features = dir.join("features.csv");
    write_features_csv(&features, &series)?;
    graph.write_edge_list(&dir.join("edges.csv"))?;
    write_distances(&dir.join("distances.csv"), &distances)?;
    info!("synthetic data written to {}", dir.display());
    Ok(SynthSummary {
        nodes: syn.nodes,
        steps: syn.steps,
        alpha: syn.process.alpha,
        edges: graph.edges().len(),
        features,
    })
}

pub fn cmd_pretrain(cfg: &ExperimentConfig, seed: u64) -> Result<TrainHistory> {
    let ds = load_dataset(cfg)?;
    let mut pc = cfg.pretrain.clone();
    pc.seed = seed;
    let dir = cfg.seed_dir(seed);
    create_dir(&dir)?;
    let out = pretrain_with(
        &ds.norm,
        ds.a_hat(),
        &pc,
        ds.split.train.clone(),
        Some(ds.split.val.clone()),
        |r: &EpochRecord| {
            info!(
                "seed {seed} pretrain epoch {} lr {:.0e} loss {:.4} accuracy {:.4}",
                r.epoch,
                r.lr,
                r.loss,
                r.accuracy.unwrap_or(f64::NAN)
            )
        },
    )?;
    let meta = json!({
        "seed": seed,
        "encoder": out.model.encoder.config(),
        "ks": pc.ks,
        "disc_hidden": pc.disc_hidden,
        "initial_loss": out.history.initial_loss,
        "initial_accuracy": out.history.initial_accuracy,
    });
    Checkpoint::capture("infomax", meta, &[&out.model]).save(&dir.join("encoder.json"))?;
    write_jsonl(&dir.join("pretrain_history.jsonl"), &out.history.epochs)?;
    Ok(out.history)
}

fn load_encoder(cfg: &ExperimentConfig, features: usize, seed: u64) -> Result<EncoderParams> {
    let ck = Checkpoint::load(&cfg.seed_dir(seed).join("encoder.json"))?;
    let mut enc = EncoderParams::zeros(EncoderConfig {
        in_features: features,
        hidden: cfg.pretrain.hidden,
        embedding: cfg.pretrain.embedding,
    });
    ck.restore_into(&mut enc)?;
    Ok(enc)
}

#[derive(Clone, Debug, Serialize)]
pub struct EmbedSummary {
    pub dims: (usize, usize, usize),
    pub pca_rows: usize,
}

/// Lookahead of the speed column attached to each projected point.
pub const PCA_LOOKAHEAD: usize = 3;

pub fn cmd_embed(cfg: &ExperimentConfig, seed: u64) -> Result<EmbedSummary> {
    let ds = load_dataset(cfg)?;
    let enc = load_encoder(cfg, ds.norm.features(), seed)?;
    let emb = export_embeddings(&ds.norm, ds.a_hat(), &enc)?;
    let dir = cfg.seed_dir(seed);
    write_embeddings(&dir.join("embeddings.bin"), &emb)?;

    let points = pca_projection(&emb, &ds.raw, PCA_LOOKAHEAD)?;
    let path = dir.join("pca.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| csv_err(&path, e))?;
    w.write_record(["t", "node", "x", "y", "speed_t_plus_3"])
        .map_err(|e| csv_err(&path, e))?;
    for p in &points {
        let speed = p.speed_ahead.map(|s| s.to_string()).unwrap_or_default();
        w.write_record([p.t.to_string(), p.node.to_string(), p.x.to_string(), p.y.to_string(), speed])
            .map_err(|e| csv_err(&path, e))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    Ok(EmbedSummary {
        dims: (emb.steps(), emb.nodes(), emb.dim()),
        pca_rows: points.len(),
    })
}

fn embeddings_for(cfg: &ExperimentConfig, seed: u64, mode: Mode) -> Result<Option<EmbeddingSeries>> {
    match mode {
        Mode::Baseline => Ok(None),
        Mode::Stdgi => {
            let path = cfg.seed_dir(seed).join("embeddings.bin");
            if !path.exists() {
                return Err(Error::Config(format!(
                    "stdgi mode requires embeddings; {} is missing (run `embed` first)",
                    path.display()
                )));
            }
            read_embeddings(&path).map(Some)
        }
    }
}

fn mode_dir(cfg: &ExperimentConfig, seed: u64, mode: Mode) -> PathBuf {
    cfg.seed_dir(seed).join(mode.as_str())
}

#[derive(Clone, Debug, Serialize)]
pub struct TrainSummary {
    pub mode: Mode,
    pub seed: u64,
    pub input_dim: usize,
    pub best_epoch: usize,
    pub initial_val_mae: f64,
    pub best_val_mae: f64,
}

pub fn cmd_train(cfg: &ExperimentConfig, seed: u64, mode: Mode) -> Result<TrainSummary> {
    let ds = load_dataset(cfg)?;
    let emb = embeddings_for(cfg, seed, mode)?;
    let source = InputSource::new(&ds.norm, mode, emb.as_ref())?;
    info!("seed {seed} {mode}: input dim {}", source.input_dim());
    let mut rc = cfg.regressor.clone();
    rc.seed = seed;
    rc.mode = mode;
    let out = train_regressor_with(source, ds.split.train.clone(), ds.split.val.clone(), &rc, |r| {
        info!(
            "seed {seed} {mode} epoch {} lr {:.0e} train {:.4} val {:.4}",
            r.epoch, r.lr, r.train_loss, r.val_mae
        )
    })?;
    let dir = mode_dir(cfg, seed, mode);
    create_dir(&dir)?;
    let meta = json!({
        "mode": mode,
        "seed": seed,
        "input_dim": source.input_dim(),
        "hidden": rc.hidden,
        "best_epoch": out.best_epoch,
        "norm": ds.stats,
    });
    Checkpoint::capture("seq2seq", meta, &[&out.params]).save(&dir.join("regressor.json"))?;
    write_jsonl(&dir.join("history.jsonl"), &out.history)?;
    Ok(TrainSummary {
        mode,
        seed,
        input_dim: source.input_dim(),
        best_epoch: out.best_epoch,
        initial_val_mae: out.history[0].val_mae,
        best_val_mae: out.history[out.best_epoch].val_mae,
    })
}

pub fn write_predictions(path: &Path, f: &Forecast) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(["sample", "node", "step", "pred", "true"])
        .map_err(|e| csv_err(path, e))?;
    for s in 0..f.num_samples() {
        for v in 0..f.nodes {
            for j in 0..f.horizon {
                let i = f.index(s, j, v);
                w.write_record([
                    s.to_string(),
                    v.to_string(),
                    (j + 1).to_string(),
                    f.preds[i].to_string(),
                    f.trues[i].to_string(),
                ])
                .map_err(|e| csv_err(path, e))?;
            }
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Test-split forecasts of a trained regressor, in original units.
pub fn forecast_test(cfg: &ExperimentConfig, ds: &Dataset, seed: u64, mode: Mode) -> Result<Forecast> {
    let emb = embeddings_for(cfg, seed, mode)?;
    let source = InputSource::new(&ds.norm, mode, emb.as_ref())?;
    let ck = Checkpoint::load(&mode_dir(cfg, seed, mode).join("regressor.json"))?;
    let mut params = Seq2SeqParams::zeros(source.input_dim(), cfg.regressor.hidden);
    ck.restore_into(&mut params)?;
    let windows = make_windows(cfg.regressor.input_steps, cfg.regressor.horizon, ds.split.test.clone()).samples;
    predict(&params, source, &windows, cfg.regressor.horizon, &ds.stats)
}

pub fn cmd_eval(cfg: &ExperimentConfig, seed: u64, mode: Mode) -> Result<MetricsReport> {
    let ds = load_dataset(cfg)?;
    let forecast = forecast_test(cfg, &ds, seed, mode)?;
    let dir = mode_dir(cfg, seed, mode);
    write_predictions(&dir.join("predictions.csv"), &forecast)?;
    let report = horizon_report(&forecast, &cfg.metrics.horizons, cfg.data.step_minutes, mode, seed)?;
    write_json(&dir.join("metrics.json"), &report)?;
    Ok(report)
}

pub fn load_report(path: &Path) -> Result<MetricsReport> {
    let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&raw)?)
}

/// Pairs every available per-seed report; a seed evaluated in only one mode
/// is a comparison error.
pub fn cmd_compare(cfg: &ExperimentConfig) -> Result<(Comparison, String)> {
    let mut reports = Vec::new();
    for &seed in &cfg.seeds {
        for mode in [Mode::Baseline, Mode::Stdgi] {
            let path = mode_dir(cfg, seed, mode).join("metrics.json");
            if path.exists() {
                reports.push(load_report(&path)?);
            }
        }
    }
    let cmp = compare_runs(&reports)?;
    let table = comparison_table(&cmp);
    create_dir(&cfg.output_dir)?;
    write_json(&cfg.output_dir.join("comparison.json"), &cmp)?;
    let path = cfg.output_dir.join("comparison.txt");
    let mut f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    f.write_all(table.as_bytes()).map_err(|e| Error::io(&path, e))?;
    Ok((cmp, table))
}

/// Exit status for a failed command.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_)
        | Error::Validation(_)
        | Error::Comparison(_)
        | Error::Corruption(_)
        | Error::Normalization(_) => 2,
        Error::Io { .. } | Error::Parse { .. } | Error::Ingestion(_) | Error::Serde(_) => 3,
        Error::Divergence(_) => 4,
        _ => 1,
    }
}
