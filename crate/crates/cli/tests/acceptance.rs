//! Acceptance suite: one test per acceptance criterion, each printing a
//! PASS line (visible with `--nocapture`) and enforcing its stated
//! tolerance and runtime budget.
//!
//! Run with:
//!
//! ```text
//! cargo test -p strain-sense-cli --test acceptance -- --nocapture
//! ```

use std::process::Command;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use strain_sense_core::cnn::{self, init_network, Mode, Model, Tensor3};
use strain_sense_core::dataset::{featurize_dataset, generate_synthetic, state_profiles};
use strain_sense_core::signal::{self, Spectrogram};
use strain_sense_core::stream::{feed, StreamState};
use strain_sense_core::train::{
    evaluate, optimizer_step, split_dataset, sweep, train, LabelMap, OptimizerKind, OptimizerSpec,
    OptimizerState, TrainConfig,
};
use strain_sense_core::tsne;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn pass(name: &str) {
    println!("ACCEPTANCE PASS - {name}");
}

// ---------------------------------------------------------------------
// 1. DFT oracle
// ---------------------------------------------------------------------

/// The defining double sum, written here independently of the library.
fn naive_dft(frame: &[f64]) -> Vec<(f64, f64)> {
    let n = frame.len();
    (0..n)
        .map(|j| {
            let mut re = 0.0;
            let mut im = 0.0;
            for (k, &x) in frame.iter().enumerate() {
                let angle = -std::f64::consts::TAU * (j as f64) * (k as f64) / n as f64;
                re += x * angle.cos();
                im += x * angle.sin();
            }
            (re, im)
        })
        .collect()
}

#[test]
fn acceptance_01_dft_matches_naive_oracle_and_parseval() {
    let started = Instant::now();
    let sizes = [1usize, 2, 20, 64];
    let mut rng = ChaCha8Rng::seed_from_u64(1001);
    for trial in 0..1000 {
        let n = sizes[trial % sizes.len()];
        let frame: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
        let fast = signal::dft(&frame).unwrap();
        let slow = naive_dft(&frame);
        let scale: f64 = frame.iter().map(|x| x.abs()).sum::<f64>().max(1e-30);
        for (c, (re, im)) in fast.coefficients.iter().zip(&slow) {
            let err = ((c.re - re).powi(2) + (c.im - im).powi(2)).sqrt();
            assert!(err <= 1e-10 * scale, "n={n} trial={trial}");
        }
        let time_energy: f64 = frame.iter().map(|x| x * x).sum();
        let freq_energy: f64 =
            fast.coefficients.iter().map(|c| c.norm_sqr()).sum::<f64>() / n as f64;
        assert!(
            (time_energy - freq_energy).abs() <= 1e-9 * time_energy.max(1.0),
            "Parseval n={n} trial={trial}"
        );
    }
    let elapsed = started.elapsed();
    assert!(elapsed < Duration::from_secs(5), "took {elapsed:?}");
    pass("DFT matches the quadratic oracle (1000 frames) and Parseval holds");
}

// ---------------------------------------------------------------------
// 2. Spectrogram geometry
// ---------------------------------------------------------------------

#[test]
fn acceptance_02_spectrogram_geometry() {
    // 6 s at 10 Hz -> one 10x5 spectrogram.
    let series = signal::TimeSeries::new(10.0, 0.0, vec![1.0; 60], None).unwrap();
    let spec = signal::build_spectrogram(&series).unwrap();
    assert_eq!(spec.bins.len(), 10);
    assert!(spec.bins.iter().all(|row| row.len() == 5));

    // A 2.5 Hz sinusoid maps to bin 2.5 * 20 * 0.1 = 5 in every column.
    let sine: Vec<f64> = (0..60)
        .map(|k| (std::f64::consts::TAU * 2.5 * k as f64 / 10.0).sin())
        .collect();
    let spec = signal::build_spectrogram(
        &signal::TimeSeries::new(10.0, 0.0, sine, None).unwrap(),
    )
    .unwrap();
    for col in 0..5 {
        let argmax = (0..10)
            .max_by(|&a, &b| spec.bins[a][col].total_cmp(&spec.bins[b][col]))
            .unwrap();
        assert_eq!(argmax, 5, "column {col}");
    }
    pass("6 s @ 10 Hz windows become 10x5 spectrograms; 2.5 Hz peaks at row 5");
}

// ---------------------------------------------------------------------
// 3. Gradient check
// ---------------------------------------------------------------------

#[test]
fn acceptance_03_gradient_check_growth_rate_2() {
    let started = Instant::now();
    let net = init_network(3, 2, 61).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let batch: Vec<Tensor3> = (0..4)
        .map(|_| {
            Tensor3::new(
                1,
                10,
                5,
                (0..50).map(|_| rng.random_range(0.0..1.0)).collect(),
            )
            .unwrap()
        })
        .collect();
    let targets = [0usize, 1, 2, 1];

    let (_, cache) = net.forward(&batch, Mode::Train).unwrap();
    let analytic = net.backward(&cache.unwrap(), &targets).unwrap();

    let loss_at = |params: &[f64]| -> f64 {
        let mut probe = net.clone();
        probe.set_flat_params(params).unwrap();
        let (probs, _) = probe.forward(&batch, Mode::Train).unwrap();
        cnn::cross_entropy(&probs, &targets)
    };
    let base = net.flat_params();
    let h = 1e-4;
    for idx in 0..base.len() {
        let mut plus = base.clone();
        plus[idx] += h;
        let mut minus = base.clone();
        minus[idx] -= h;
        let numeric = (loss_at(&plus) - loss_at(&minus)) / (2.0 * h);
        let a = analytic.0[idx];
        let err = (a - numeric).abs();
        assert!(
            err <= 1e-6 || err <= 1e-3 * a.abs().max(numeric.abs()),
            "flat index {idx}: analytic {a} vs numeric {numeric}"
        );
    }
    // Every parameter group is covered by the flat walk.
    assert_eq!(
        net.param_groups().iter().map(|g| g.len).sum::<usize>(),
        base.len()
    );
    let elapsed = started.elapsed();
    assert!(elapsed < Duration::from_secs(60), "took {elapsed:?}");
    pass("every parameter group matches central finite differences");
}

// ---------------------------------------------------------------------
// 4. Optimizer unit oracles
// ---------------------------------------------------------------------

#[test]
fn acceptance_04_optimizer_oracles() {
    // First Adam step on scalar gradient 1 at lr 0.02.
    let spec = OptimizerSpec::adam(0.02);
    let mut state = OptimizerState::new(OptimizerKind::Adam, 1);
    let mut params = vec![0.0];
    optimizer_step(&mut params, &[1.0], &mut state, &spec).unwrap();
    assert!((params[0] - (-0.02)).abs() <= 1e-6, "{}", params[0]);

    // Adagrad accumulator is monotone over 100 random steps.
    let spec = OptimizerSpec::adagrad(0.002);
    let mut state = OptimizerState::new(OptimizerKind::Adagrad, 3);
    let mut params = vec![0.0; 3];
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut previous = vec![0.0; 3];
    for _ in 0..100 {
        let grads: Vec<f64> = (0..3).map(|_| rng.random_range(-5.0..5.0)).collect();
        optimizer_step(&mut params, &grads, &mut state, &spec).unwrap();
        let OptimizerState::Adagrad { accumulator } = &state else {
            unreachable!()
        };
        for (now, before) in accumulator.iter().zip(&previous) {
            assert!(now >= before);
        }
        previous = accumulator.clone();
    }

    // Plain gradient descent is exact arithmetic.
    let spec = OptimizerSpec::gradient_descent(0.0002);
    let mut state = OptimizerState::new(OptimizerKind::GradientDescent, 1);
    let mut params = vec![1.0];
    optimizer_step(&mut params, &[0.5], &mut state, &spec).unwrap();
    assert_eq!(params[0], 0.9999);

    pass("Adam first step, Adagrad monotonicity and GD arithmetic all exact");
}

// ---------------------------------------------------------------------
// 5. Split counts
// ---------------------------------------------------------------------

#[test]
fn acceptance_05_split_counts() {
    let labeled = |label: &str, n: usize| -> Vec<Spectrogram> {
        (0..n)
            .map(|i| {
                let mut s = Spectrogram::zero();
                s.window_start_s = i as f64;
                s.label = Some(label.to_string());
                s
            })
            .collect()
    };
    let mut states = Vec::new();
    for label in ["normal", "ab1", "ab2", "ab3"] {
        states.extend(labeled(label, 106));
    }
    let (train_set, test_set) = split_dataset(&states, 0.85, 7).unwrap();
    assert_eq!((train_set.len(), test_set.len()), (360, 64));

    let mut impacts = Vec::new();
    for label in ["hand", "hammer", "spanner"] {
        impacts.extend(labeled(label, 162));
    }
    let (train_set, test_set) = split_dataset(&impacts, 0.85, 7).unwrap();
    assert_eq!((train_set.len(), test_set.len()), (413, 73));

    pass("424 items split 360/64 and 486 split 413/73 at fraction 0.85");
}

// ---------------------------------------------------------------------
// 6 & 9 share one trained model on the synthetic state experiment.
// ---------------------------------------------------------------------

struct StateExperiment {
    model: Model,
    specs: Vec<Spectrogram>,
    test_accuracy: f64,
    train_seconds: f64,
    canonical_csv: String,
}

fn state_experiment() -> &'static StateExperiment {
    static EXPERIMENT: OnceLock<StateExperiment> = OnceLock::new();
    EXPERIMENT.get_or_init(|| {
        let started = Instant::now();
        let dataset = generate_synthetic(&state_profiles(), 700.0, 7).unwrap();
        let (specs, stats) = featurize_dataset(&dataset).unwrap();
        let labels = LabelMap::from_specs(&specs).unwrap();
        let (train_set, test_set) = split_dataset(&specs, 0.85, 7).unwrap();
        let config = TrainConfig::new(OptimizerSpec::adam(0.02), 7); // 200 epochs
        let (net, _) = train(&train_set, &labels, &config).unwrap();
        let (test_accuracy, _) = evaluate(&net, &test_set, &labels).unwrap();
        StateExperiment {
            model: Model::new(net, labels.labels().to_vec(), stats).unwrap(),
            specs,
            test_accuracy,
            train_seconds: started.elapsed().as_secs_f64(),
            canonical_csv: strain_sense_core::dataset::export_canonical(&dataset),
        }
    })
}

#[test]
fn acceptance_06_synthetic_state_experiment() {
    let experiment = state_experiment();
    assert!(
        experiment.specs.len() >= 424,
        "only {} spectrograms",
        experiment.specs.len()
    );
    assert!(
        experiment.test_accuracy >= 0.89,
        "held-out accuracy {}",
        experiment.test_accuracy
    );
    assert!(
        experiment.train_seconds < 300.0,
        "experiment took {} s",
        experiment.train_seconds
    );

    // Deterministic per seed: the training machinery reproduces itself
    // bit for bit (checked at reduced epochs; the loop is epoch-uniform).
    let labels = LabelMap::new(experiment.model.label_map.clone()).unwrap();
    let (train_set, _) = split_dataset(&experiment.specs, 0.85, 7).unwrap();
    let config = TrainConfig {
        epochs: 40,
        ..TrainConfig::new(OptimizerSpec::adam(0.02), 7)
    };
    let (net_a, report_a) = train(&train_set, &labels, &config).unwrap();
    let (net_b, report_b) = train(&train_set, &labels, &config).unwrap();
    assert_eq!(net_a.flat_params(), net_b.flat_params());
    assert_eq!(report_a.train_costs, report_b.train_costs);

    pass(&format!(
        "state experiment: {} spectrograms, Adam 0.02, 200 epochs -> test accuracy {:.4} (>= 0.89) in {:.0} s",
        experiment.specs.len(),
        experiment.test_accuracy,
        experiment.train_seconds
    ));
}

// ---------------------------------------------------------------------
// 7. Sweep ordering
// ---------------------------------------------------------------------

#[test]
fn acceptance_07_sweep_ordering() {
    let experiment = state_experiment();
    let labels = LabelMap::new(experiment.model.label_map.clone()).unwrap();
    let candidates = [
        OptimizerSpec::gradient_descent(0.0002),
        OptimizerSpec::adagrad(0.002),
        OptimizerSpec::adam(0.02),
    ];
    let base = TrainConfig::new(OptimizerSpec::adam(0.02), 7); // 200 epochs
    let table = sweep(&experiment.specs, &labels, &candidates, &base, 0.85).unwrap();

    let gd = table.rows[0].final_val_cost;
    let adagrad = table.rows[1].final_val_cost;
    let adam = table.rows[2].final_val_cost;
    assert!(
        adam < gd && adam < adagrad,
        "adam {adam} vs gd {gd}, adagrad {adagrad}"
    );
    assert!(table.rows[2].optimal);

    pass(&format!(
        "sweep ordering: adam(0.02) cost {adam:.4} < gd(0.0002) {gd:.4} and adagrad(0.002) {adagrad:.4}"
    ));
}

// ---------------------------------------------------------------------
// 8. t-SNE
// ---------------------------------------------------------------------

#[test]
fn acceptance_08_tsne_calibration_and_separation() {
    let started = Instant::now();

    // Three Gaussian clusters, N = 300, D = 10.
    let mut rng = ChaCha8Rng::seed_from_u64(88);
    let per = 100usize;
    let mut values = Vec::new();
    let mut labels = Vec::new();
    for (k, name) in ["one", "two", "three"].iter().enumerate() {
        for _ in 0..per {
            for j in 0..10 {
                let center = if j % 3 == k { 12.0 } else { 0.0 };
                let z: f64 = StandardNormal.sample(&mut rng);
                values.push(center + 0.5 * z);
            }
            labels.push(Some(name.to_string()));
        }
    }
    let features = tsne::FeatureMatrix::new(3 * per, 10, values, labels).unwrap();

    // Per-row perplexity calibration at the reference value 13.
    let affinities = tsne::conditional_affinities(&features, 13.0).unwrap();
    let distances = tsne::pairwise_sq_distances(&features.values, features.n, features.d);
    for i in 0..features.n {
        let beta = affinities.betas[i];
        let mut weights = vec![0.0; features.n];
        let mut sum = 0.0;
        for j in 0..features.n {
            if j != i {
                weights[j] = (-beta * distances[i * features.n + j]).exp();
                sum += weights[j];
            }
        }
        let mut h_bits = 0.0;
        for w in &weights {
            let p = w / sum;
            if p > 0.0 {
                h_bits -= p * p.log2();
            }
        }
        let perp = h_bits.exp2();
        assert!((perp - 13.0).abs() <= 1e-3, "row {i}: 2^H = {perp}");
    }

    // Early exaggeration 4, perplexity 13 (the reference settings).
    let config = tsne::TsneConfig::new(9);
    assert_eq!(config.perplexity, 13.0);
    assert_eq!(config.early_exaggeration, 4.0);
    let embedding = tsne::tsne_from_affinities(&affinities, &features.labels, &config).unwrap();
    assert!(
        embedding.final_kl < embedding.kl_after_exaggeration,
        "final {} vs post-exaggeration {}",
        embedding.final_kl,
        embedding.kl_after_exaggeration
    );

    let centroid = |cluster: usize| -> [f64; 3] {
        let mut c = [0.0; 3];
        for i in cluster * per..(cluster + 1) * per {
            for k in 0..3 {
                c[k] += embedding.point(i)[k] / per as f64;
            }
        }
        c
    };
    let centroids = [centroid(0), centroid(1), centroid(2)];
    let mut intra = 0.0;
    for i in 0..embedding.n {
        let c = centroids[i / per];
        let d2: f64 = (0..3).map(|k| (embedding.point(i)[k] - c[k]).powi(2)).sum();
        intra += d2.sqrt() / embedding.n as f64;
    }
    let mut inter = 0.0;
    for a in 0..3 {
        for b in (a + 1)..3 {
            let d2: f64 = (0..3)
                .map(|k| (centroids[a][k] - centroids[b][k]).powi(2))
                .sum();
            inter += d2.sqrt() / 3.0;
        }
    }
    assert!(
        inter > 3.0 * intra,
        "inter-centroid {inter} vs intra spread {intra}"
    );

    let elapsed = started.elapsed();
    assert!(elapsed < Duration::from_secs(120), "took {elapsed:?}");
    pass(&format!(
        "t-SNE: per-row |2^H - 13| <= 1e-3, KL {:.3} < {:.3} after exaggeration, separation {:.1}x",
        embedding.final_kl,
        embedding.kl_after_exaggeration,
        inter / intra
    ));
}

// ---------------------------------------------------------------------
// 9. Streaming equivalence
// ---------------------------------------------------------------------

#[test]
fn acceptance_09_streaming_equivalence() {
    let experiment = state_experiment();
    let model = &experiment.model;

    let class_rows = |label: &str| -> Vec<(f64, f64)> {
        experiment
            .canonical_csv
            .lines()
            .skip(1)
            .filter_map(strain_sense_core::dataset::parse_canonical_row)
            .filter_map(|(t, v, l)| (l == label).then_some((t, v)))
            .collect()
    };

    let mut max_latency = Duration::ZERO;
    for label in &model.label_map {
        // Offline: inference on the featurized windows of this class.
        let offline: Vec<String> = experiment
            .specs
            .iter()
            .filter(|s| s.label.as_deref() == Some(label))
            .map(|s| {
                let (idx, _) = cnn::predict_normalized(&model.network, s).unwrap();
                model.label_map[idx].clone()
            })
            .collect();

        // Online: the class's raw rows through the stream classifier.
        let rows = class_rows(label);
        let mut state = StreamState::new();
        let mut online = Vec::new();
        for chunk in rows.chunks(60) {
            let started = Instant::now();
            let events = feed(&mut state, chunk, model).unwrap();
            let elapsed = started.elapsed();
            if !events.is_empty() {
                max_latency = max_latency.max(elapsed);
            }
            online.extend(events.into_iter().map(|e| e.label));
        }
        assert_eq!(online, offline, "class {label}");

        // Chunking invariance for the contracted chunk sizes.
        for chunk_size in [1usize, 7, 60, 600] {
            let mut s = StreamState::new();
            let mut relabeled = Vec::new();
            for chunk in rows.chunks(chunk_size) {
                relabeled.extend(feed(&mut s, chunk, model).unwrap().into_iter().map(|e| e.label));
            }
            assert_eq!(relabeled, online, "chunk size {chunk_size}");
        }
    }
    assert!(
        max_latency < Duration::from_millis(100),
        "worst per-window latency {max_latency:?}"
    );
    pass(&format!(
        "offline and online labels agree on every window; worst latency {max_latency:?}"
    ));
}

// ---------------------------------------------------------------------
// 10. Determinism of the full pipeline through the binary
// ---------------------------------------------------------------------

#[test]
fn acceptance_10_pipeline_determinism() {
    let bin = env!("CARGO_BIN_EXE_strain-sense");
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();

    let run = |args: &[&str]| {
        let out = Command::new(bin)
            .args(args)
            .current_dir(d)
            .env_remove("STRAIN_SENSE_SEED")
            .output()
            .unwrap();
        assert!(
            out.status.success(),
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    };

    let pipeline = |tag: &str| {
        let data = format!("data-{tag}.csv");
        let specs = format!("specs-{tag}.jsonl");
        let model = format!("model-{tag}.json");
        let reports = format!("reports-{tag}");
        let embedding = format!("embedding-{tag}.csv");
        run(&["gen", "--profiles", "default4", "--duration", "700", "--seed", "7", "-o", &data]);
        run(&["featurize", &data, "-o", &specs]);
        run(&[
            "train", &specs, "--optimizer", "adam", "--lr", "0.02", "--epochs", "60", "--seed",
            "7", "-o", &model, "--report-dir", &reports,
        ]);
        run(&["eval", &specs, "--model", &model, "--report-dir", &reports]);
        run(&[
            "embed", &specs, "--model", &model, "--iterations", "400", "--seed", "7", "-o",
            &embedding,
        ]);
    };

    pipeline("a");
    pipeline("b");

    for (a, b) in [
        ("model-a.json", "model-b.json"),
        ("reports-a/report.json", "reports-b/report.json"),
        ("reports-a/cost_curve.csv", "reports-b/cost_curve.csv"),
        ("reports-a/confusion.csv", "reports-b/confusion.csv"),
        ("embedding-a.csv", "embedding-b.csv"),
    ] {
        let bytes_a = std::fs::read(d.join(a)).unwrap();
        let bytes_b = std::fs::read(d.join(b)).unwrap();
        assert_eq!(bytes_a, bytes_b, "{a} differs from {b}");
    }
    pass("gen -> featurize -> train -> eval -> embed twice with seed 7 is byte-identical");
}
