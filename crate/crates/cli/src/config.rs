//! Experiment configuration: one strict JSON document with every
//! hyperparameter visible.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use stdgi_core::dataset::{GraphFamily, SynthParams};
use stdgi_core::metrics::DEFAULT_HORIZONS;
use stdgi_core::{Error, Normalization, PretrainConfig, RegressorConfig, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GraphConfig {
    /// Edge list `src,dst,weight`. Takes precedence over `distances`.
    pub edges: Option<PathBuf>,
    /// Road distances `src,dst,distance_m`, turned into a kernel graph.
    pub distances: Option<PathBuf>,
    /// Kernel width in meters; defaults to the std of the listed distances.
    pub sigma_m: Option<f64>,
    pub weight_floor: f64,
    pub normalization: Normalization,
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self {
            edges: None,
            distances: None,
            sigma_m: None,
            weight_floor: 0.1,
            normalization: Normalization::Row,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticConfig {
    pub nodes: usize,
    pub steps: usize,
    pub family: GraphFamily,
    /// Corridor spacing range, or `[_, side]` of the square for `geometric`.
    pub spacing_m: [f64; 2],
    pub sigma_m: f64,
    /// Seed of the dataset itself, shared by every experiment seed.
    pub seed: u64,
    pub process: SynthParams,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            nodes: 20,
            steps: 2000,
            family: GraphFamily::Corridor,
            spacing_m: [600.0, 1000.0],
            sigma_m: 1000.0,
            seed: 7,
            process: SynthParams::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// Features CSV `t,node,speed`; defaults to the synthetic output.
    pub features: Option<PathBuf>,
    pub step_minutes: usize,
    /// Chronological train/val/test fractions.
    pub split: [f64; 3],
    pub synthetic: SyntheticConfig,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            features: None,
            step_minutes: 5,
            split: [0.7, 0.1, 0.2],
            synthetic: SyntheticConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsConfig {
    pub horizons: Vec<usize>,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            horizons: DEFAULT_HORIZONS.to_vec(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub graph: GraphConfig,
    pub data: DataConfig,
    pub pretrain: PretrainConfig,
    pub regressor: RegressorConfig,
    pub metrics: MetricsConfig,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            graph: GraphConfig::default(),
            data: DataConfig::default(),
            pretrain: PretrainConfig::default(),
            regressor: RegressorConfig::default(),
            metrics: MetricsConfig::default(),
            seeds: vec![0, 1, 2],
            output_dir: PathBuf::from("runs"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(raw: &str) -> Result<Self> {
        serde_json::from_str(raw).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg = Self::from_json(&raw)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config always serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.pretrain.validate()?;
        self.regressor.validate()?;
        self.data.synthetic.process.validate()?;
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must list at least one seed".into()));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return Err(Error::Config("seeds must be distinct".into()));
        }
        if self.metrics.horizons.iter().any(|&h| h == 0 || h > self.regressor.horizon) {
            return Err(Error::Config(format!(
                "metric horizons must lie in 1..={}",
                self.regressor.horizon
            )));
        }
        if self.data.step_minutes == 0 {
            return Err(Error::Config("step_minutes must be >= 1".into()));
        }
        if self.data.synthetic.process.step_minutes != self.data.step_minutes {
            return Err(Error::Config(format!(
                "data.step_minutes ({}) and data.synthetic.process.step_minutes ({}) disagree",
                self.data.step_minutes, self.data.synthetic.process.step_minutes
            )));
        }
        Ok(())
    }

    pub fn data_dir(&self) -> PathBuf {
        self.output_dir.join("data")
    }

    pub fn features_path(&self) -> PathBuf {
        self.data
            .features
            .clone()
            .unwrap_or_else(|| self.data_dir().join("features.csv"))
    }

    pub fn seed_dir(&self, seed: u64) -> PathBuf {
        self.output_dir.join(format!("seed_{seed}"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = ExperimentConfig::default();
        let back = ExperimentConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(cfg, back);
        assert_eq!(cfg.pretrain.epochs, 100);
        assert_eq!(cfg.regressor.epochs, 120);
        assert_eq!(cfg.regressor.schedule.base_lr, 1e-2);
        assert_eq!(cfg.pretrain.schedule.base_lr, 1e-3);
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = ExperimentConfig::from_json(r#"{"pretrain": {"epoch": 3}}"#).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(ExperimentConfig::from_json(r#"{"extra": 1}"#).is_err());
    }

    #[test]
    fn partial_documents_fill_defaults() {
        let cfg = ExperimentConfig::from_json(r#"{"seeds": [4], "data": {"synthetic": {"nodes": 5}}}"#).unwrap();
        assert_eq!(cfg.seeds, vec![4]);
        assert_eq!(cfg.data.synthetic.nodes, 5);
        assert_eq!(cfg.data.synthetic.steps, 2000);
    }

    #[test]
    fn alpha_is_validated() {
        let cfg =
            ExperimentConfig::from_json(r#"{"data": {"synthetic": {"process": {"alpha": 2.0}}}}"#).unwrap();
        assert!(matches!(cfg.validate(), Err(Error::Validation(_))));
    }
}
