//! Exact (quadratic) t-SNE: Gaussian affinities calibrated per row to a
//! target perplexity by bisection, then gradient descent with momentum on
//! the KL divergence against Student-t similarities in the embedding space.
//!
//! Sized for hundreds of points, which keeps the O(N^2) inner loops simple
//! and lets tests compare every quantity against a naive per-pair oracle.

pub mod export;


use crate::cnn::{Network, Tensor3};
use crate::error::{Error, Result};
use crate::signal::Spectrogram;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Rows of high-dimensional feature vectors with one label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub n: usize,
    pub d: usize,
    /// Row-major n*d values.
    pub values: Vec<f64>,
    pub labels: Vec<Option<String>>,
}

impl FeatureMatrix {
    pub fn new(n: usize, d: usize, values: Vec<f64>, labels: Vec<Option<String>>) -> Result<Self> {
        if n < 5 {
            return Err(Error::Config(format!(
                "an embedding needs at least 5 points, got {n}"
            )));
        }
        if d == 0 {
            return Err(Error::Config("feature dimension must be positive".into()));
        }
        if values.len() != n * d {
            return Err(Error::Shape(format!(
                "expected {} feature values, got {}",
                n * d,
                values.len()
            )));
        }
        if labels.len() != n {
            return Err(Error::Shape(format!(
                "expected {n} labels, got {}",
                labels.len()
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::MalformedInput(format!("feature value {k} is not finite")));
        }
        Ok(Self { n, d, values, labels })
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.d..(i + 1) * self.d]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub early_exaggeration: f64,
    pub output_dims: usize,
    pub iterations: usize,
    pub exaggeration_iters: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl TsneConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            perplexity: 13.0,
            early_exaggeration: 4.0,
            output_dims: 3,
            iterations: 1000,
            exaggeration_iters: 250,
            learning_rate: 200.0,
            seed,
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        if !(self.perplexity > 0.0) {
            return Err(Error::Config("perplexity must be positive".into()));
        }
        if self.perplexity >= n as f64 {
            return Err(Error::Config(format!(
                "perplexity {} must be below the number of points {n}",
                self.perplexity
            )));
        }
        if !(self.early_exaggeration > 0.0) {
            return Err(Error::Config("early exaggeration must be positive".into()));
        }
        if self.output_dims == 0 {
            return Err(Error::Config("output dimension must be positive".into()));
        }
        if self.iterations <= self.exaggeration_iters {
            return Err(Error::Config(format!(
                "iterations ({}) must exceed the exaggeration phase ({})",
                self.iterations, self.exaggeration_iters
            )));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        Ok(())
    }
}

/// Symmetrized affinities plus the per-row bandwidths that produced them.
#[derive(Debug, Clone)]
pub struct Affinities {
    pub n: usize,
    /// Row-major n*n, symmetric, zero diagonal, sums to 1.
    pub p: Vec<f64>,
    /// Per-row precision beta_i = 1 / (2 sigma_i^2).
    pub betas: Vec<f64>,
    /// False where bisection hit its iteration cap; the best bandwidth found
    /// is kept.
    pub converged: Vec<bool>,
}

/// Squared Euclidean distances between all rows, row-major n*n.
pub fn pairwise_sq_distances(values: &[f64], n: usize, d: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let a = &values[i * d..(i + 1) * d];
            let b = &values[j * d..(j + 1) * d];
            let dist: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
            out[i * n + j] = dist;
            out[j * n + i] = dist;
        }
    }
    out
}

const BISECTION_ITERS: usize = 50;
const PERPLEXITY_TOL: f64 = 1e-5;

/// Conditional distribution over j for row i at precision beta, and its
/// perplexity 2^H. The kernel is shifted by the nearest-neighbor distance so
/// at least one weight never underflows.
fn row_conditional(dist_row: &[f64], i: usize, beta: f64, out: &mut [f64]) -> f64 {
    let mut min_d = f64::INFINITY;
    for (j, &d) in dist_row.iter().enumerate() {
        if j != i && d < min_d {
            min_d = d;
        }
    }
    let mut sum = 0.0;
    for (j, &d) in dist_row.iter().enumerate() {
        out[j] = if j == i {
            0.0
        } else {
            (-beta * (d - min_d)).exp()
        };
        sum += out[j];
    }
    let mut entropy_bits = 0.0;
    for v in out.iter_mut() {
        *v /= sum;
        if *v > 0.0 {
            entropy_bits -= *v * v.log2();
        }
    }
    entropy_bits.exp2()
}

/// Calibrates per-row Gaussian bandwidths by bisection so every conditional
/// distribution's perplexity matches the target, then symmetrizes:
/// P = (P(j|i) + P(i|j)) / 2N.
pub fn conditional_affinities(features: &FeatureMatrix, perplexity: f64) -> Result<Affinities> {
    let n = features.n;
    if perplexity >= n as f64 {
        return Err(Error::Config(format!(
            "perplexity {perplexity} must be below the number of points {n}"
        )));
    }
    if !(perplexity > 0.0) {
        return Err(Error::Config("perplexity must be positive".into()));
    }
    let distances = pairwise_sq_distances(&features.values, n, features.d);

    let mut conditional = vec![0.0; n * n];
    let mut betas = vec![0.0; n];
    let mut converged = vec![false; n];
    let mut row_buf = vec![0.0; n];
    for i in 0..n {
        let dist_row = &distances[i * n..(i + 1) * n];
        let mut beta = 1.0;
        let mut beta_min = f64::NEG_INFINITY;
        let mut beta_max = f64::INFINITY;
        for _ in 0..BISECTION_ITERS {
            let perp = row_conditional(dist_row, i, beta, &mut row_buf);
            let diff = perp - perplexity;
            if diff.abs() <= PERPLEXITY_TOL {
                converged[i] = true;
                break;
            }
            if diff > 0.0 {
                // Too many effective neighbors: narrow the kernel.
                beta_min = beta;
                beta = if beta_max.is_finite() {
                    (beta + beta_max) / 2.0
                } else {
                    beta * 2.0
                };
            } else {
                beta_max = beta;
                beta = if beta_min.is_finite() {
                    (beta + beta_min) / 2.0
                } else {
                    beta / 2.0
                };
            }
        }
        row_conditional(dist_row, i, beta, &mut row_buf);
        betas[i] = beta;
        conditional[i * n..(i + 1) * n].copy_from_slice(&row_buf);
    }

    let mut p = vec![0.0; n * n];
    let scale = 1.0 / (2.0 * n as f64);
    for i in 0..n {
        for j in 0..n {
            p[i * n + j] = (conditional[i * n + j] + conditional[j * n + i]) * scale;
        }
    }
    Ok(Affinities {
        n,
        p,
        betas,
        converged,
    })
}

/// Student-t (df = 1) similarities of embedding coordinates: unnormalized
/// weights w_ij = 1/(1+d^2) with zero diagonal and their total Z. The
/// normalized matrix is w/Z.
pub fn student_t_weights(coords: &[f64], n: usize, dims: usize) -> (Vec<f64>, f64) {
    let mut w = vec![0.0; n * n];
    let mut z = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let a = &coords[i * dims..(i + 1) * dims];
            let b = &coords[j * dims..(j + 1) * dims];
            let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
            let v = 1.0 / (1.0 + d2);
            w[i * n + j] = v;
            w[j * n + i] = v;
            z += 2.0 * v;
        }
    }
    (w, z)
}

/// KL(P || Q) over off-diagonal pairs, in nats. Q entries are floored to
/// avoid log of zero; P entries of zero contribute nothing.
pub fn kl_divergence(p: &[f64], w: &[f64], z: f64, n: usize) -> f64 {
    let mut kl = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let pij = p[i * n + j];
            if pij > 0.0 {
                let qij = (w[i * n + j] / z).max(1e-12);
                kl += pij * (pij / qij).ln();
            }
        }
    }
    kl
}

/// Exact KL gradient: dC/dy_i = 4 sum_j (p_ij - q_ij) w_ij (y_i - y_j).
pub fn kl_gradient(p: &[f64], coords: &[f64], n: usize, dims: usize) -> Vec<f64> {
    let (w, z) = student_t_weights(coords, n, dims);
    let mut grad = vec![0.0; n * dims];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let wij = w[i * n + j];
            let factor = 4.0 * (p[i * n + j] - wij / z) * wij;
            for k in 0..dims {
                grad[i * dims + k] += factor * (coords[i * dims + k] - coords[j * dims + k]);
            }
        }
    }
    grad
}

/// Embedding coordinates with the labels carried through and the KL values
/// reached during optimization.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub n: usize,
    pub dims: usize,
    /// Row-major n*dims coordinates.
    pub coords: Vec<f64>,
    pub labels: Vec<Option<String>>,
    pub final_kl: f64,
    /// KL (against the plain, un-exaggerated P) right after the
    /// exaggeration phase ended.
    pub kl_after_exaggeration: f64,
    pub initial_kl: f64,
}

impl Embedding {
    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dims..(i + 1) * self.dims]
    }
}

const MOMENTUM_EARLY: f64 = 0.5;
const MOMENTUM_LATE: f64 = 0.8;
const INIT_SIGMA: f64 = 1e-4;

/// Runs gradient descent on KL(P || Q). P is multiplied by
/// `early_exaggeration` for the first `exaggeration_iters` iterations;
/// momentum switches from 0.5 to 0.8 at the same point. Deterministic per
/// seed; all logged KL values are measured against the plain P.
pub fn tsne(features: &FeatureMatrix, config: &TsneConfig) -> Result<Embedding> {
    config.validate(features.n)?;
    let affinities = conditional_affinities(features, config.perplexity)?;
    tsne_from_affinities(&affinities, &features.labels, config)
}

/// Same as [`tsne`] but starting from precomputed affinities.
pub fn tsne_from_affinities(
    affinities: &Affinities,
    labels: &[Option<String>],
    config: &TsneConfig,
) -> Result<Embedding> {
    let n = affinities.n;
    let dims = config.output_dims;
    config.validate(n)?;
    if labels.len() != n {
        return Err(Error::Shape(format!(
            "expected {n} labels, got {}",
            labels.len()
        )));
    }
    let p_plain = &affinities.p;
    let p_exaggerated: Vec<f64> = p_plain.iter().map(|v| v * config.early_exaggeration).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut coords: Vec<f64> = (0..n * dims)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z * INIT_SIGMA
        })
        .collect();
    let mut velocity = vec![0.0; n * dims];

    let initial_kl = {
        let (w, z) = student_t_weights(&coords, n, dims);
        kl_divergence(p_plain, &w, z, n)
    };
    let mut kl_after_exaggeration = f64::NAN;

    for iter in 0..config.iterations {
        let exaggerating = iter < config.exaggeration_iters;
        if iter == config.exaggeration_iters {
            let (w, z) = student_t_weights(&coords, n, dims);
            kl_after_exaggeration = kl_divergence(p_plain, &w, z, n);
        }
        let p = if exaggerating { &p_exaggerated } else { p_plain };
        let grad = kl_gradient(p, &coords, n, dims);
        let momentum = if exaggerating { MOMENTUM_EARLY } else { MOMENTUM_LATE };
        for (k, g) in grad.iter().enumerate() {
            velocity[k] = momentum * velocity[k] - config.learning_rate * g;
            coords[k] += velocity[k];
        }
        // Keep the cloud centered; translation does not change Q.
        for k in 0..dims {
            let mean: f64 = coords[k..].iter().step_by(dims).sum::<f64>() / n as f64;
            for row in 0..n {
                coords[row * dims + k] -= mean;
            }
        }
    }

    let final_kl = {
        let (w, z) = student_t_weights(&coords, n, dims);
        kl_divergence(p_plain, &w, z, n)
    };
    Ok(Embedding {
        n,
        dims,
        coords,
        labels: labels.to_vec(),
        final_kl,
        kl_after_exaggeration,
        initial_kl,
    })
}

/// Flattened pre-FC feature maps of every spectrogram under an
/// inference-mode forward pass; labels are carried through.
pub fn extract_features(net: &Network, specs: &[Spectrogram]) -> Result<FeatureMatrix> {
    if specs.is_empty() {
        return Err(Error::Data("no spectrograms to embed".into()));
    }
    let d = net.feature_len();
    let mut values = Vec::with_capacity(specs.len() * d);
    let mut labels = Vec::with_capacity(specs.len());
    for spec in specs {
        let features = net.features_infer(&Tensor3::from_spectrogram(spec))?;
        values.extend_from_slice(features.values());
        labels.push(spec.label.clone());
    }
    FeatureMatrix::new(specs.len(), d, values, labels)
}

/// Embeds raw spectrogram bins directly (10*5 = 50 dimensions per item),
/// bypassing the network.
pub fn raw_features(specs: &[Spectrogram]) -> Result<FeatureMatrix> {
    if specs.is_empty() {
        return Err(Error::Data("no spectrograms to embed".into()));
    }
    let d = crate::signal::FREQ_BINS * crate::signal::TIME_FRAMES;
    let mut values = Vec::with_capacity(specs.len() * d);
    let mut labels = Vec::with_capacity(specs.len());
    for spec in specs {
        for row in &spec.bins {
            values.extend_from_slice(row);
        }
        labels.push(spec.label.clone());
    }
    FeatureMatrix::new(specs.len(), d, values, labels)
}
