//! The training loop, evaluation, and the optimizer/learning-rate sweep.

mod optim;
mod split;
mod sweep;

pub use optim::{optimizer_step, OptimizerKind, OptimizerSpec, OptimizerState};
pub use split::split_dataset;
pub use sweep::{sweep, SweepRow, SweepTable};

use crate::cnn::{cross_entropy, init_network, Mode, Network, Tensor3};
use crate::error::{Error, Result};
use crate::signal::Spectrogram;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::time::Instant;

/// Class names in index order. Built from data in first-appearance order so
/// a featurized file always maps to the same indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    labels: Vec<String>,
}

impl LabelMap {
    pub fn new(labels: Vec<String>) -> Result<Self> {
        if labels.len() < 2 {
            return Err(Error::Config(format!(
                "a label map needs at least 2 classes, got {}",
                labels.len()
            )));
        }
        for (i, l) in labels.iter().enumerate() {
            if labels[..i].contains(l) {
                return Err(Error::Config(format!("duplicate label \"{l}\"")));
            }
        }
        Ok(Self { labels })
    }

    pub fn from_specs(specs: &[Spectrogram]) -> Result<Self> {
        let mut labels: Vec<String> = Vec::new();
        for (i, spec) in specs.iter().enumerate() {
            let label = spec
                .label
                .as_deref()
                .ok_or_else(|| Error::Data(format!("item {i} has no label")))?;
            if !labels.iter().any(|l| l == label) {
                labels.push(label.to_string());
            }
        }
        Self::new(labels)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn index_of(&self, label: &str) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::Data(format!("label \"{label}\" is not in the label map")))
    }

    /// Class index of every item; errors on unlabeled or unknown labels.
    pub fn targets(&self, specs: &[Spectrogram]) -> Result<Vec<usize>> {
        specs
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let label = s
                    .label
                    .as_deref()
                    .ok_or_else(|| Error::Data(format!("item {i} has no label")))?;
                self.index_of(label)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainConfig {
    pub optimizer: OptimizerSpec,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Fraction of the training portion carved out for validation.
    pub validation_fraction: f64,
    pub growth_rate: usize,
}

impl TrainConfig {
    pub fn new(optimizer: OptimizerSpec, seed: u64) -> Self {
        Self {
            optimizer,
            epochs: 200,
            batch_size: 32,
            seed,
            validation_fraction: 0.15,
            growth_rate: crate::cnn::DEFAULT_GROWTH_RATE,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.optimizer.validate()?;
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.batch_size < 2 {
            return Err(Error::Config(
                "batch size must be at least 2 (batch statistics need two items)".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::Config(format!(
                "validation fraction must lie in [0, 1), got {}",
                self.validation_fraction
            )));
        }
        if self.growth_rate == 0 {
            return Err(Error::Config("growth rate must be positive".into()));
        }
        Ok(())
    }
}

/// What a training run produced. Wall-clock time is reported in memory and
/// on stderr but never serialized, so artifact files stay byte-identical
/// across runs.
#[derive(Debug, Clone, Serialize)]
pub struct TrainReport {
    pub labels: Vec<String>,
    pub train_costs: Vec<f64>,
    pub val_costs: Vec<f64>,
    pub train_accuracy: f64,
    pub val_accuracy: f64,
    pub test_accuracy: Option<f64>,
    /// Test confusion matrix, rows = ground truth, columns = prediction.
    pub confusion: Vec<Vec<usize>>,
    #[serde(skip)]
    pub wall_clock_seconds: f64,
}

impl TrainReport {
    pub fn attach_test(&mut self, accuracy: f64, confusion: Vec<Vec<usize>>) {
        self.test_accuracy = Some(accuracy);
        self.confusion = confusion;
    }
}

fn to_tensors(specs: &[Spectrogram]) -> Vec<Tensor3> {
    specs.iter().map(Tensor3::from_spectrogram).collect()
}

/// Mean inference-mode cross-entropy over a set; NaN when empty.
fn infer_cost(net: &Network, tensors: &[Tensor3], targets: &[usize]) -> Result<f64> {
    if tensors.is_empty() {
        return Ok(f64::NAN);
    }
    let (probs, _) = net.forward(tensors, Mode::Infer)?;
    Ok(cross_entropy(&probs, targets))
}

fn infer_predictions(net: &Network, tensors: &[Tensor3]) -> Result<Vec<usize>> {
    let (probs, _) = net.forward(tensors, Mode::Infer)?;
    Ok(probs.iter().map(|p| crate::cnn::argmax(p)).collect())
}

fn accuracy_of(predictions: &[usize], targets: &[usize]) -> f64 {
    if targets.is_empty() {
        return f64::NAN;
    }
    let correct = predictions
        .iter()
        .zip(targets)
        .filter(|(p, t)| p == t)
        .count();
    correct as f64 / targets.len() as f64
}

/// Counts (truth, prediction) pairs into an n-by-n matrix.
pub fn confusion_matrix(truth: &[usize], predictions: &[usize], num_classes: usize) -> Vec<Vec<usize>> {
    let mut matrix = vec![vec![0usize; num_classes]; num_classes];
    for (&t, &p) in truth.iter().zip(predictions) {
        matrix[t][p] += 1;
    }
    matrix
}

/// Trains a fresh network on labeled, already-normalized spectrograms.
///
/// A stratified `validation_fraction` slice is carved out of `train_set`
/// first; the remainder is fit with shuffled mini-batches. Per-epoch mean
/// training cost and validation cost are recorded; validation costs are
/// measured after recalibrating the batchnorm running statistics on the
/// fit set, so every entry reflects the model as it would ship after that
/// epoch. Deterministic for a fixed config.
pub fn train(
    train_set: &[Spectrogram],
    label_map: &LabelMap,
    config: &TrainConfig,
) -> Result<(Network, TrainReport)> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::Data("training set is empty".into()));
    }
    let started = Instant::now();

    let (fit_specs, val_specs) = if config.validation_fraction > 0.0 {
        split_dataset(train_set, 1.0 - config.validation_fraction, config.seed)?
    } else {
        (train_set.to_vec(), Vec::new())
    };

    let fit_targets = label_map.targets(&fit_specs)?;
    let val_targets = label_map.targets(&val_specs)?;
    for (idx, label) in label_map.labels().iter().enumerate() {
        if !fit_targets.contains(&idx) {
            return Err(Error::Data(format!(
                "class \"{label}\" has no items in the training portion"
            )));
        }
    }
    if fit_specs.len() < 2 {
        return Err(Error::Data(
            "training portion needs at least 2 items for batch statistics".into(),
        ));
    }

    let fit_tensors = to_tensors(&fit_specs);
    let val_tensors = to_tensors(&val_specs);

    let mut net = init_network(label_map.len(), config.growth_rate, config.seed)?;
    let mut params = net.flat_params();
    let mut state = OptimizerState::new(config.optimizer.kind, params.len());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut train_costs = Vec::with_capacity(config.epochs);
    let mut val_costs = Vec::with_capacity(config.epochs);
    let mut order: Vec<usize> = (0..fit_tensors.len()).collect();

    for _epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut boundaries: Vec<usize> = (0..order.len())
            .step_by(config.batch_size)
            .skip(1)
            .collect();
        boundaries.push(order.len());
        // A trailing single-item batch cannot supply batch statistics;
        // merge it into its predecessor.
        if boundaries.len() >= 2 {
            let last = boundaries.len() - 1;
            if boundaries[last] - boundaries[last - 1] == 1 {
                boundaries.remove(last - 1);
            }
        }

        let mut epoch_cost = 0.0;
        let mut start = 0;
        for &end in &boundaries {
            let batch: Vec<Tensor3> = order[start..end]
                .iter()
                .map(|&i| fit_tensors[i].clone())
                .collect();
            let targets: Vec<usize> = order[start..end].iter().map(|&i| fit_targets[i]).collect();
            let (probs, cache) = net.forward(&batch, Mode::Train)?;
            let cache = cache.expect("training-mode forward returns a cache");
            net.apply_running_updates(&cache);
            epoch_cost += cross_entropy(&probs, &targets) * batch.len() as f64;
            let grads = net.backward(&cache, &targets)?;
            optimizer_step(&mut params, &grads.0, &mut state, &config.optimizer)?;
            net.set_flat_params(&params)?;
            start = end;
        }
        train_costs.push(epoch_cost / fit_tensors.len() as f64);

        // Recalibrate inference statistics before measuring validation
        // cost: one training-mode pass over the whole fit set gives every
        // batchnorm its exact activation statistics at the current
        // parameters. The momentum-smoothed estimates lag the optimizer by
        // several steps, which distorts inference-mode costs mid-training.
        let (_, calibration) = net.forward(&fit_tensors, Mode::Train)?;
        net.set_running_stats_from(&calibration.expect("training-mode forward returns a cache"));
        val_costs.push(infer_cost(&net, &val_tensors, &val_targets)?);
    }

    let train_accuracy = accuracy_of(&infer_predictions(&net, &fit_tensors)?, &fit_targets);
    let val_accuracy = accuracy_of(&infer_predictions(&net, &val_tensors)?, &val_targets);

    let report = TrainReport {
        labels: label_map.labels().to_vec(),
        train_costs,
        val_costs,
        train_accuracy,
        val_accuracy,
        test_accuracy: None,
        confusion: Vec::new(),
        wall_clock_seconds: started.elapsed().as_secs_f64(),
    };
    Ok((net, report))
}

/// Accuracy and confusion matrix of a trained network on a labeled,
/// already-normalized test set.
pub fn evaluate(
    net: &Network,
    test_set: &[Spectrogram],
    label_map: &LabelMap,
) -> Result<(f64, Vec<Vec<usize>>)> {
    if test_set.is_empty() {
        return Err(Error::Data("test set is empty".into()));
    }
    if label_map.len() != net.num_classes() {
        return Err(Error::Config(format!(
            "label map has {} classes but the network outputs {}",
            label_map.len(),
            net.num_classes()
        )));
    }
    let targets = label_map.targets(test_set)?;
    let predictions = infer_predictions(net, &to_tensors(test_set))?;
    let accuracy = accuracy_of(&predictions, &targets);
    let confusion = confusion_matrix(&targets, &predictions, label_map.len());
    Ok((accuracy, confusion))
}
