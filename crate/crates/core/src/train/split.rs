//! Deterministic stratified train/test splitting.

use crate::error::{Error, Result};
use crate::signal::Spectrogram;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Splits labeled spectrograms into train and test sets, stratified by
/// label. The train set holds exactly `floor(N * train_fraction)` items:
/// each label contributes the floor of its proportional share, and the
/// leftover slots go to the labels with the largest fractional remainders
/// (ties broken by first appearance). The same seed always produces the
/// same membership.
pub fn split_dataset(
    specs: &[Spectrogram],
    train_fraction: f64,
    seed: u64,
) -> Result<(Vec<Spectrogram>, Vec<Spectrogram>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Config(format!(
            "train fraction must lie strictly between 0 and 1, got {train_fraction}"
        )));
    }
    if specs.is_empty() {
        return Err(Error::Data("cannot split an empty dataset".into()));
    }

    // Group item indices by label, in first-appearance order.
    let mut labels: Vec<&str> = Vec::new();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (i, spec) in specs.iter().enumerate() {
        let label = spec
            .label
            .as_deref()
            .ok_or_else(|| Error::Data(format!("item {i} has no label")))?;
        match labels.iter().position(|&l| l == label) {
            Some(g) => groups[g].push(i),
            None => {
                labels.push(label);
                groups.push(vec![i]);
            }
        }
    }

    let total = specs.len();
    let train_total = (total as f64 * train_fraction).floor() as usize;

    // Floor each label's share, then hand out the remainder by descending
    // fractional part.
    let mut take: Vec<usize> = Vec::with_capacity(groups.len());
    let mut fractions: Vec<(usize, f64)> = Vec::with_capacity(groups.len());
    for (g, group) in groups.iter().enumerate() {
        let exact = group.len() as f64 * train_fraction;
        take.push(exact.floor() as usize);
        fractions.push((g, exact - exact.floor()));
    }
    let mut remainder = train_total - take.iter().sum::<usize>();
    fractions.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    for &(g, _) in &fractions {
        if remainder == 0 {
            break;
        }
        if take[g] < groups[g].len() {
            take[g] += 1;
            remainder -= 1;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::with_capacity(train_total);
    let mut test = Vec::with_capacity(total - train_total);
    for (g, group) in groups.iter().enumerate() {
        let mut shuffled = group.clone();
        shuffled.shuffle(&mut rng);
        for (pos, &idx) in shuffled.iter().enumerate() {
            if pos < take[g] {
                train.push(idx);
            } else {
                test.push(idx);
            }
        }
    }
    // Keep the original item order inside each side so output files are
    // stable and easy to diff.
    train.sort_unstable();
    test.sort_unstable();

    Ok((
        train.into_iter().map(|i| specs[i].clone()).collect(),
        test.into_iter().map(|i| specs[i].clone()).collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labeled(label: &str, n: usize) -> Vec<Spectrogram> {
        (0..n)
            .map(|i| {
                let mut s = Spectrogram::zero();
                s.window_start_s = i as f64;
                s.label = Some(label.to_string());
                s
            })
            .collect()
    }

    fn counts(specs: &[Spectrogram], label: &str) -> usize {
        specs
            .iter()
            .filter(|s| s.label.as_deref() == Some(label))
            .count()
    }

    #[test]
    fn four_balanced_classes_of_106_split_360_to_64() {
        let mut specs = Vec::new();
        for label in ["normal", "ab1", "ab2", "ab3"] {
            specs.extend(labeled(label, 106));
        }
        assert_eq!(specs.len(), 424);
        let (train, test) = split_dataset(&specs, 0.85, 7).unwrap();
        assert_eq!(train.len(), 360);
        assert_eq!(test.len(), 64);
    }

    #[test]
    fn three_balanced_classes_of_162_split_413_to_73() {
        let mut specs = Vec::new();
        for label in ["hand", "hammer", "spanner"] {
            specs.extend(labeled(label, 162));
        }
        assert_eq!(specs.len(), 486);
        let (train, test) = split_dataset(&specs, 0.85, 7).unwrap();
        assert_eq!(train.len(), 413);
        assert_eq!(test.len(), 73);
    }

    #[test]
    fn same_seed_gives_identical_membership() {
        let mut specs = labeled("a", 31);
        specs.extend(labeled("b", 19));
        let (t1, e1) = split_dataset(&specs, 0.85, 42).unwrap();
        let (t2, e2) = split_dataset(&specs, 0.85, 42).unwrap();
        assert_eq!(t1, t2);
        assert_eq!(e1, e2);
        let (t3, _) = split_dataset(&specs, 0.85, 43).unwrap();
        assert_ne!(t1, t3);
    }

    #[test]
    fn split_is_an_exact_partition() {
        let mut specs = labeled("a", 23);
        specs.extend(labeled("b", 11));
        specs.extend(labeled("c", 5));
        let (train, test) = split_dataset(&specs, 0.7, 3).unwrap();
        assert_eq!(train.len() + test.len(), specs.len());
        let mut joined: Vec<f64> = train
            .iter()
            .chain(&test)
            .map(|s| {
                // (label, window_start_s) identifies an item uniquely here.
                let l = s.label.as_deref().unwrap();
                s.window_start_s + if l == "a" { 0.0 } else if l == "b" { 100.0 } else { 200.0 }
            })
            .collect();
        joined.sort_by(f64::total_cmp);
        let expected: Vec<f64> = (0..23)
            .map(|i| i as f64)
            .chain((0..11).map(|i| 100.0 + i as f64))
            .chain((0..5).map(|i| 200.0 + i as f64))
            .collect();
        assert_eq!(joined, expected);
    }

    #[test]
    fn stratification_stays_within_one_item_of_the_global_fraction() {
        let mut specs = labeled("a", 106);
        specs.extend(labeled("b", 53));
        specs.extend(labeled("c", 27));
        let fraction = 0.85;
        let (train, _) = split_dataset(&specs, fraction, 11).unwrap();
        for (label, n) in [("a", 106.0), ("b", 53.0), ("c", 27.0)] {
            let got = counts(&train, label) as f64;
            assert!(
                (got - n * fraction).abs() <= 1.0,
                "label {label}: {got} of {n}"
            );
        }
    }

    #[test]
    fn unlabeled_items_are_a_data_error() {
        let mut specs = labeled("a", 10);
        specs[3].label = None;
        specs.extend(labeled("b", 10));
        assert!(matches!(
            split_dataset(&specs, 0.85, 0),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn out_of_range_fractions_are_config_errors() {
        let specs = labeled("a", 10);
        assert!(matches!(
            split_dataset(&specs, 1.0, 0),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            split_dataset(&specs, 0.0, 0),
            Err(Error::Config(_))
        ));
    }
}
