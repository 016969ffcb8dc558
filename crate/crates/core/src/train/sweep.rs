//! Optimizer/learning-rate sweep: one training run per candidate on an
//! identical split, summarized as a small table with the optimum flagged.

use super::{evaluate, split_dataset, train, LabelMap, OptimizerSpec, TrainConfig};
use crate::error::{Error, Result};
use crate::signal::Spectrogram;
use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub optimizer: OptimizerSpec,
    pub final_val_cost: f64,
    pub test_accuracy: f64,
    pub optimal: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn optimal_index(&self) -> usize {
        self.rows
            .iter()
            .position(|r| r.optimal)
            .expect("a nonempty table flags one optimum")
    }
}

/// Trains one model per candidate optimizer on an identical train/test
/// split and flags the row with the lowest final validation cost (lowest
/// index wins ties).
///
/// Candidate `i` trains with its own generator seeded `base.seed + i`, so
/// running candidates concurrently or serially yields the same table.
pub fn sweep(
    specs: &[Spectrogram],
    label_map: &LabelMap,
    candidates: &[OptimizerSpec],
    base: &TrainConfig,
    train_fraction: f64,
) -> Result<SweepTable> {
    if candidates.is_empty() {
        return Err(Error::Config("sweep needs at least one candidate".into()));
    }
    let (train_set, test_set) = split_dataset(specs, train_fraction, base.seed)?;

    let mut results: Vec<Option<Result<(f64, f64)>>> = Vec::new();
    results.resize_with(candidates.len(), || None);
    std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for (i, candidate) in candidates.iter().enumerate() {
            let train_set = &train_set;
            let test_set = &test_set;
            handles.push(scope.spawn(move || -> Result<(f64, f64)> {
                let config = TrainConfig {
                    optimizer: *candidate,
                    seed: base.seed + i as u64,
                    ..base.clone()
                };
                let (net, report) = train(train_set, label_map, &config)?;
                let (accuracy, _) = evaluate(&net, test_set, label_map)?;
                let final_val_cost = *report.val_costs.last().expect("epochs >= 1");
                Ok((final_val_cost, accuracy))
            }));
        }
        for (slot, handle) in results.iter_mut().zip(handles) {
            *slot = Some(handle.join().expect("sweep worker panicked"));
        }
    });

    let mut rows = Vec::with_capacity(candidates.len());
    for (candidate, outcome) in candidates.iter().zip(results) {
        let (final_val_cost, test_accuracy) = outcome.expect("slot filled")?;
        rows.push(SweepRow {
            optimizer: *candidate,
            final_val_cost,
            test_accuracy,
            optimal: false,
        });
    }
    let mut best = 0;
    for (i, row) in rows.iter().enumerate().skip(1) {
        if row.final_val_cost.total_cmp(&rows[best].final_val_cost) == std::cmp::Ordering::Less {
            best = i;
        }
    }
    rows[best].optimal = true;
    Ok(SweepTable { rows })
}
