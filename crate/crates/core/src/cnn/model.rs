//! Versioned model files: architecture hyperparameters, label map,
//! normalization statistics, and every parameter array by name.

use super::{init_network, Network};
use crate::error::{Error, Result};
use crate::signal::{NormStats, Spectrogram};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

pub const MODEL_VERSION: u32 = 1;

/// A trained network bundled with everything needed to classify raw data:
/// the class-name order and the training-time normalization statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub network: Network,
    pub label_map: Vec<String>,
    pub norm_stats: NormStats,
}

impl Model {
    pub fn new(network: Network, label_map: Vec<String>, norm_stats: NormStats) -> Result<Self> {
        if label_map.len() != network.num_classes() {
            return Err(Error::Config(format!(
                "label map has {} entries but the network outputs {} classes",
                label_map.len(),
                network.num_classes()
            )));
        }
        Ok(Self {
            network,
            label_map,
            norm_stats,
        })
    }

    /// Classifies one raw spectrogram and names the winning class.
    pub fn predict(&self, spec: &Spectrogram) -> Result<(String, Vec<f64>)> {
        let (idx, probs) = super::predict(&self.network, spec, &self.norm_stats)?;
        Ok((self.label_map[idx].clone(), probs))
    }
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    version: u32,
    num_classes: usize,
    growth_rate: usize,
    label_map: Vec<String>,
    norm_stats: NormStats,
    params: BTreeMap<String, Vec<f64>>,
}

/// The versioned JSON form of a model, one line plus a trailing newline.
pub fn model_to_json(model: &Model) -> Result<String> {
    let mut params = BTreeMap::new();
    for (name, slice) in model.network.param_slices() {
        params.insert(name, slice.to_vec());
    }
    for (name, slice) in model.network.stat_slices() {
        params.insert(name, slice.to_vec());
    }
    let file = ModelFile {
        version: MODEL_VERSION,
        num_classes: model.network.num_classes(),
        growth_rate: model.network.growth_rate(),
        label_map: model.label_map.clone(),
        norm_stats: model.norm_stats,
        params,
    };
    Ok(serde_json::to_string(&file)? + "\n")
}

pub fn save_model(path: &Path, model: &Model) -> Result<()> {
    std::fs::write(path, model_to_json(model)?)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<Model> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Format(format!("cannot open {}: {e}", path.display())))?;
    let file: ModelFile = serde_json::from_str(&text)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    if file.version != MODEL_VERSION {
        return Err(Error::Format(format!(
            "{}: unsupported model version {}",
            path.display(),
            file.version
        )));
    }
    let mut network = init_network(file.num_classes, file.growth_rate, 0)?;
    let mut remaining = file.params;
    let mut fill = |slots: Vec<(String, &mut [f64])>| -> Result<()> {
        for (name, slot) in slots {
            let values = remaining
                .remove(&name)
                .ok_or_else(|| Error::Format(format!("model file is missing \"{name}\"")))?;
            if values.len() != slot.len() {
                return Err(Error::Format(format!(
                    "\"{name}\" holds {} values, expected {}",
                    values.len(),
                    slot.len()
                )));
            }
            slot.copy_from_slice(&values);
        }
        Ok(())
    };
    fill(network.param_slices_mut())?;
    fill(network.stat_slices_mut())?;
    if let Some(name) = remaining.keys().next() {
        return Err(Error::Format(format!(
            "model file holds unknown parameter \"{name}\""
        )));
    }
    Model::new(network, file.label_map, file.norm_stats)
}
