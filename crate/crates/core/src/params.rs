//! Named parameter sets and their JSON checkpoint container.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// A model whose tensors can be enumerated in a stable order. The order must
/// match the order of the vars returned by the model's `bind`.
pub trait ParamSet {
    fn named_tensors_mut(&mut self) -> Vec<(String, &mut Tensor)>;

    fn named_tensors(&self) -> Vec<(String, Tensor)>;

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.named_tensors_mut().into_iter().map(|(_, t)| t).collect()
    }

    fn num_parameters(&self) -> usize {
        self.named_tensors().iter().map(|(_, t)| t.len()).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    #[serde(flatten)]
    pub tensor: Tensor,
}

/// `{"kind": …, "meta": {…}, "tensors": [{"name", "shape", "values"}, …]}`
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub kind: String,
    #[serde(default)]
    pub meta: serde_json::Value,
    pub tensors: Vec<NamedTensor>,
}

impl Checkpoint {
    pub fn capture(kind: &str, meta: serde_json::Value, params: &[&dyn ParamSetDyn]) -> Self {
        let tensors = params
            .iter()
            .flat_map(|p| p.named())
            .map(|(name, tensor)| NamedTensor { name, tensor })
            .collect();
        Self {
            kind: kind.to_string(),
            meta,
            tensors,
        }
    }

    /// Copies stored tensors into `params` by name; every parameter must be
    /// present with the same shape.
    pub fn restore_into<P: ParamSet + ?Sized>(&self, params: &mut P) -> Result<()> {
        for (name, slot) in params.named_tensors_mut() {
            let stored = self
                .tensors
                .iter()
                .find(|t| t.name == name)
                .ok_or_else(|| Error::Validation(format!("checkpoint lacks tensor `{name}`")))?;
            if stored.tensor.shape() != slot.shape() {
                return Err(Error::Validation(format!(
                    "tensor `{name}` has shape {:?} in the checkpoint but the model expects {:?}",
                    stored.tensor.shape(),
                    slot.shape()
                )));
            }
            *slot = stored.tensor.clone();
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string(self)?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&raw)?)
    }
}

/// Object-safe view used when capturing several models into one checkpoint.
pub trait ParamSetDyn {
    fn named(&self) -> Vec<(String, Tensor)>;
}

impl<P: ParamSet> ParamSetDyn for P {
    fn named(&self) -> Vec<(String, Tensor)> {
        self.named_tensors()
    }
}

pub(crate) fn prefixed(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}
