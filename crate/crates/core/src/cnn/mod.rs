//! A small densely connected CNN for 10x5 spectrograms, written from
//! scratch: two dense blocks of three 3x3 layers each (pre-activation
//! batchnorm -> ReLU -> conv), a transition (batchnorm -> 1x1 conv ->
//! 2x2 average pool) between them, adaptive 2x2 average pooling, and a
//! fully connected softmax head.
//!
//! Spatial trace for a 1x10x5 input: 10x5 through block A, 5x2 after the
//! transition pool, 5x2 through block B, 2x2 after adaptive pooling.
//! Inside a block, layer l sees the block input concatenated with every
//! earlier layer's output, so its channel count is
//! `block_input + (l-1) * growth_rate`.

pub mod layers;
pub mod model;
pub mod tensor;


pub use layers::{argmax, softmax, Padding};
pub use model::Model;
pub use tensor::Tensor3;

use crate::error::{Error, Result};
use crate::signal::{NormStats, Spectrogram, FREQ_BINS, TIME_FRAMES};
use layers::{
    adaptive_avg_pool, adaptive_avg_pool_backward, avg_pool_2x2, avg_pool_2x2_backward, relu,
    relu_backward, BatchNorm, BnCache, Conv2d, Linear,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use tensor::{concat_channels, split_channels};

pub const DEFAULT_GROWTH_RATE: usize = 8;
/// Channel compression applied by the transition's 1x1 convolution.
const TRANSITION_COMPRESSION: f64 = 0.5;
const LAYERS_PER_BLOCK: usize = 3;
/// Output spatial size after the final adaptive pool.
const POOLED: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// One dense-block layer: batchnorm -> ReLU -> 3x3 same-padding conv.
#[derive(Debug, Clone, PartialEq)]
struct DenseLayer {
    bn: BatchNorm,
    conv: Conv2d,
}

/// Transition: batchnorm -> 1x1 conv (channel compression) -> 2x2 avg pool.
#[derive(Debug, Clone, PartialEq)]
struct TransitionLayer {
    bn: BatchNorm,
    conv: Conv2d,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    num_classes: usize,
    growth_rate: usize,
    block_a: Vec<DenseLayer>,
    transition: TransitionLayer,
    block_b: Vec<DenseLayer>,
    fc: Linear,
}

struct DenseLayerCache {
    bn: BnCache,
    /// Post-batchnorm activations, kept for the ReLU mask.
    pre_relu: Vec<Tensor3>,
    /// Post-ReLU activations, the convolution input.
    conv_in: Vec<Tensor3>,
}

struct BlockCache {
    layers: Vec<DenseLayerCache>,
}

struct TransitionCache {
    bn: BnCache,
    conv_in: Vec<Tensor3>,
    pre_pool_dims: (usize, usize, usize),
}

/// Activations retained by a training-mode forward pass.
pub struct ForwardCache {
    block_a: BlockCache,
    transition: TransitionCache,
    block_b: BlockCache,
    adaptive_in_dims: (usize, usize, usize),
    fc_in: Vec<Vec<f64>>,
    probs: Vec<Vec<f64>>,
    targets_capacity: usize,
}

/// Flat gradient vector in the same order as [`Network::flat_params`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients(pub Vec<f64>);

/// A named contiguous range inside the flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGroup {
    pub name: String,
    pub offset: usize,
    pub len: usize,
}

fn he_conv(rng: &mut ChaCha8Rng, in_ch: usize, out_ch: usize, k: usize, padding: Padding) -> Conv2d {
    let mut conv = Conv2d::zeros(in_ch, out_ch, k, padding);
    let std = (2.0 / (in_ch * k * k) as f64).sqrt();
    for w in conv.weight.iter_mut() {
        let z: f64 = StandardNormal.sample(rng);
        *w = z * std;
    }
    conv
}

fn he_linear(rng: &mut ChaCha8Rng, in_features: usize, out_features: usize) -> Linear {
    let mut fc = Linear::zeros(in_features, out_features);
    let std = (2.0 / in_features as f64).sqrt();
    for w in fc.weight.iter_mut() {
        let z: f64 = StandardNormal.sample(rng);
        *w = z * std;
    }
    fc
}

/// Builds a freshly initialized network. The same seed always produces
/// bit-identical parameters.
pub fn init_network(num_classes: usize, growth_rate: usize, seed: u64) -> Result<Network> {
    if num_classes < 2 {
        return Err(Error::Config(format!(
            "a classifier needs at least 2 classes, got {num_classes}"
        )));
    }
    if growth_rate == 0 {
        return Err(Error::Config("growth rate must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut channels = 1;
    let mut block_a = Vec::with_capacity(LAYERS_PER_BLOCK);
    for _ in 0..LAYERS_PER_BLOCK {
        block_a.push(DenseLayer {
            bn: BatchNorm::identity(channels),
            conv: he_conv(&mut rng, channels, growth_rate, 3, Padding::Same),
        });
        channels += growth_rate;
    }
    let trans_out = ((channels as f64) * TRANSITION_COMPRESSION).floor() as usize;
    let transition = TransitionLayer {
        bn: BatchNorm::identity(channels),
        conv: he_conv(&mut rng, channels, trans_out, 1, Padding::Same),
    };

    let mut channels_b = trans_out;
    let mut block_b = Vec::with_capacity(LAYERS_PER_BLOCK);
    for _ in 0..LAYERS_PER_BLOCK {
        block_b.push(DenseLayer {
            bn: BatchNorm::identity(channels_b),
            conv: he_conv(&mut rng, channels_b, growth_rate, 3, Padding::Same),
        });
        channels_b += growth_rate;
    }

    let fc_in = channels_b * POOLED * POOLED;
    let fc = he_linear(&mut rng, fc_in, num_classes);

    Ok(Network {
        num_classes,
        growth_rate,
        block_a,
        transition,
        block_b,
        fc,
    })
}

impl Network {
    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn growth_rate(&self) -> usize {
        self.growth_rate
    }

    /// Convolutional layers inside dense blocks (the transition's 1x1 conv
    /// belongs to the transition layer, not this count).
    pub fn conv_layer_count(&self) -> usize {
        self.block_a.len() + self.block_b.len()
    }

    pub fn transition_layer_count(&self) -> usize {
        1
    }

    pub fn fc_in_features(&self) -> usize {
        self.fc.in_features
    }

    pub fn fc_out_features(&self) -> usize {
        self.fc.out_features
    }

    /// Channels entering dense-block layer `idx` of block A.
    pub fn block_a_in_channels(&self, idx: usize) -> usize {
        self.block_a[idx].bn.channels
    }

    /// Length of the flattened pre-FC feature vector.
    pub fn feature_len(&self) -> usize {
        self.fc.in_features
    }

    fn check_input(&self, t: &Tensor3) -> Result<()> {
        if t.channels != 1 || t.height != FREQ_BINS || t.width != TIME_FRAMES {
            return Err(Error::Shape(format!(
                "network input must be 1x{FREQ_BINS}x{TIME_FRAMES}, got {}x{}x{}",
                t.channels, t.height, t.width
            )));
        }
        Ok(())
    }

    fn dense_block_train(
        layers: &[DenseLayer],
        input: &[Tensor3],
    ) -> Result<(Vec<Tensor3>, BlockCache)> {
        let batch = input.len();
        // stages[s][item]: block input, then each layer's output.
        let mut stages: Vec<Vec<Tensor3>> = vec![input.to_vec()];
        let mut caches = Vec::with_capacity(layers.len());
        for layer in layers {
            let concat_in: Vec<Tensor3> = (0..batch)
                .map(|i| {
                    let parts: Vec<&Tensor3> = stages.iter().map(|s| &s[i]).collect();
                    concat_channels(&parts)
                })
                .collect();
            let (bn_out, bn_cache) = layer.bn.forward_train(&concat_in)?;
            let conv_in: Vec<Tensor3> = bn_out.iter().map(relu).collect();
            let out: Vec<Tensor3> = conv_in
                .iter()
                .map(|t| layer.conv.forward(t))
                .collect::<Result<_>>()?;
            caches.push(DenseLayerCache {
                bn: bn_cache,
                pre_relu: bn_out,
                conv_in,
            });
            stages.push(out);
        }
        let output: Vec<Tensor3> = (0..batch)
            .map(|i| {
                let parts: Vec<&Tensor3> = stages.iter().map(|s| &s[i]).collect();
                concat_channels(&parts)
            })
            .collect();
        Ok((output, BlockCache { layers: caches }))
    }

    fn dense_block_infer(layers: &[DenseLayer], input: &Tensor3) -> Result<Tensor3> {
        let mut stages: Vec<Tensor3> = vec![input.clone()];
        for layer in layers {
            let parts: Vec<&Tensor3> = stages.iter().collect();
            let concat_in = concat_channels(&parts);
            let bn_out = layer.bn.forward_infer(&concat_in)?;
            let out = layer.conv.forward(&relu(&bn_out))?;
            stages.push(out);
        }
        let parts: Vec<&Tensor3> = stages.iter().collect();
        Ok(concat_channels(&parts))
    }

    /// Gradient of a dense block. `grad_out` is the gradient at the block's
    /// concatenated output; returns the gradient at the block input and
    /// appends per-layer parameter gradients (in forward layer order) to
    /// `grads`.
    fn dense_block_backward(
        layers: &[DenseLayer],
        cache: &BlockCache,
        grad_out: &[Tensor3],
    ) -> (Vec<Tensor3>, Vec<LayerGrads>) {
        let batch = grad_out.len();
        let block_in_channels = layers[0].bn.channels;
        let mut counts = vec![block_in_channels];
        for layer in layers {
            counts.push(layer.conv.out_channels);
        }
        // stage_grads[s][item]: accumulated gradient for stage s.
        let mut stage_grads: Vec<Vec<Tensor3>> = Vec::with_capacity(counts.len());
        for item in grad_out {
            let split = split_channels(item, &counts);
            for (s, part) in split.into_iter().enumerate() {
                if stage_grads.len() <= s {
                    stage_grads.push(Vec::with_capacity(batch));
                }
                stage_grads[s].push(part);
            }
        }

        let mut layer_grads: Vec<LayerGrads> = Vec::with_capacity(layers.len());
        for (l, layer) in layers.iter().enumerate().rev() {
            let lcache = &cache.layers[l];
            let mut grad_w = vec![0.0; layer.conv.weight.len()];
            let mut grad_b = vec![0.0; layer.conv.bias.len()];
            let mut grad_conv_in = Vec::with_capacity(batch);
            for i in 0..batch {
                let (gi, gw, gb) = layer.conv.backward(&lcache.conv_in[i], &stage_grads[l + 1][i]);
                for (a, b) in grad_w.iter_mut().zip(&gw) {
                    *a += b;
                }
                for (a, b) in grad_b.iter_mut().zip(&gb) {
                    *a += b;
                }
                grad_conv_in.push(gi);
            }
            let grad_pre_relu: Vec<Tensor3> = grad_conv_in
                .iter()
                .zip(&lcache.pre_relu)
                .map(|(g, pre)| relu_backward(pre, g))
                .collect();
            let (grad_concat, grad_gamma, grad_beta) = layer.bn.backward(&lcache.bn, &grad_pre_relu);
            // The layer input was concat(stages[0..=l]); fold its gradient
            // back into the per-stage accumulators.
            for (i, g) in grad_concat.iter().enumerate() {
                let split = split_channels(g, &counts[..=l]);
                for (s, part) in split.into_iter().enumerate() {
                    let acc = &mut stage_grads[s][i];
                    for (a, b) in acc.values_mut().iter_mut().zip(part.values()) {
                        *a += b;
                    }
                }
            }
            layer_grads.push(LayerGrads {
                gamma: grad_gamma,
                beta: grad_beta,
                conv_w: grad_w,
                conv_b: grad_b,
            });
        }
        layer_grads.reverse();
        (stage_grads.swap_remove(0), layer_grads)
    }

    /// Runs the network on a batch.
    ///
    /// Pure in both modes; a training-mode pass returns the cache needed by
    /// [`Network::backward`], and the caller folds its batch statistics into
    /// the running estimates with [`Network::apply_running_updates`].
    pub fn forward(
        &self,
        batch: &[Tensor3],
        mode: Mode,
    ) -> Result<(Vec<Vec<f64>>, Option<ForwardCache>)> {
        for t in batch {
            self.check_input(t)?;
        }
        match mode {
            Mode::Infer => {
                let probs = batch
                    .iter()
                    .map(|t| self.forward_infer_single(t))
                    .collect::<Result<_>>()?;
                Ok((probs, None))
            }
            Mode::Train => {
                let (probs, cache) = self.forward_train(batch)?;
                Ok((probs, Some(cache)))
            }
        }
    }

    fn forward_train(&self, batch: &[Tensor3]) -> Result<(Vec<Vec<f64>>, ForwardCache)> {
        let (a_out, a_cache) = Self::dense_block_train(&self.block_a, batch)?;

        let (bn_out, trans_bn_cache) = self.transition.bn.forward_train(&a_out)?;
        let conv_out: Vec<Tensor3> = bn_out
            .iter()
            .map(|t| self.transition.conv.forward(t))
            .collect::<Result<_>>()?;
        let pre_pool_dims = (
            conv_out[0].channels,
            conv_out[0].height,
            conv_out[0].width,
        );
        let pooled: Vec<Tensor3> = conv_out.iter().map(avg_pool_2x2).collect::<Result<_>>()?;

        let (b_out, b_cache) = Self::dense_block_train(&self.block_b, &pooled)?;
        let adaptive_in_dims = (b_out[0].channels, b_out[0].height, b_out[0].width);
        let features: Vec<Tensor3> = b_out
            .iter()
            .map(|t| adaptive_avg_pool(t, POOLED, POOLED))
            .collect::<Result<_>>()?;

        let fc_in: Vec<Vec<f64>> = features.iter().map(|t| t.values().to_vec()).collect();
        let probs: Vec<Vec<f64>> = fc_in
            .iter()
            .map(|v| Ok(softmax(&self.fc.forward(v)?)))
            .collect::<Result<_>>()?;

        Ok((
            probs.clone(),
            ForwardCache {
                block_a: a_cache,
                transition: TransitionCache {
                    bn: trans_bn_cache,
                    conv_in: bn_out,
                    pre_pool_dims,
                },
                block_b: b_cache,
                adaptive_in_dims,
                fc_in,
                probs,
                targets_capacity: batch.len(),
            },
        ))
    }

    /// Folds every batchnorm's cached batch statistics into its running
    /// statistics. Call once per optimization step after a training forward.
    pub fn apply_running_updates(&mut self, cache: &ForwardCache) {
        for (layer, lc) in self.block_a.iter_mut().zip(&cache.block_a.layers) {
            layer.bn.update_running(&lc.bn);
        }
        self.transition.bn.update_running(&cache.transition.bn);
        for (layer, lc) in self.block_b.iter_mut().zip(&cache.block_b.layers) {
            layer.bn.update_running(&lc.bn);
        }
    }

    /// Overwrites every batchnorm's running statistics with the cached batch
    /// statistics. Used to recalibrate inference after training: a single
    /// training-mode forward over the whole fit set yields exact activation
    /// statistics at the final parameters, where the momentum-smoothed
    /// estimates still lag the last optimizer steps.
    pub fn set_running_stats_from(&mut self, cache: &ForwardCache) {
        let assign = |bn: &mut layers::BatchNorm, c: &BnCache| {
            bn.running_mean.copy_from_slice(&c.mean);
            bn.running_var.copy_from_slice(&c.var);
        };
        for (layer, lc) in self.block_a.iter_mut().zip(&cache.block_a.layers) {
            assign(&mut layer.bn, &lc.bn);
        }
        assign(&mut self.transition.bn, &cache.transition.bn);
        for (layer, lc) in self.block_b.iter_mut().zip(&cache.block_b.layers) {
            assign(&mut layer.bn, &lc.bn);
        }
    }

    fn forward_infer_single(&self, input: &Tensor3) -> Result<Vec<f64>> {
        let features = self.features_infer(input)?;
        let logits = self.fc.forward(features.values())?;
        Ok(softmax(&logits))
    }

    /// Inference up to (and including) the adaptive pool: the flattened
    /// 2x2 feature maps that feed both the FC head and the embedding.
    pub fn features_infer(&self, input: &Tensor3) -> Result<Tensor3> {
        self.check_input(input)?;
        let a_out = Self::dense_block_infer(&self.block_a, input)?;
        let bn_out = self.transition.bn.forward_infer(&a_out)?;
        let pooled = avg_pool_2x2(&self.transition.conv.forward(&bn_out)?)?;
        let b_out = Self::dense_block_infer(&self.block_b, &pooled)?;
        adaptive_avg_pool(&b_out, POOLED, POOLED)
    }

    /// Gradients of the mean cross-entropy loss for the batch the cache was
    /// computed from, flat-indexed like [`Network::flat_params`].
    pub fn backward(&self, cache: &ForwardCache, targets: &[usize]) -> Result<Gradients> {
        if targets.len() != cache.targets_capacity {
            return Err(Error::State(format!(
                "cache was built for a batch of {}, got {} targets",
                cache.targets_capacity,
                targets.len()
            )));
        }
        if let Some(&t) = targets.iter().find(|&&t| t >= self.num_classes) {
            return Err(Error::Data(format!(
                "target class {t} is out of range for {} classes",
                self.num_classes
            )));
        }
        let batch = targets.len();
        let scale = 1.0 / batch as f64;

        // Softmax + cross-entropy gradient at the logits.
        let mut fc_grad_w = vec![0.0; self.fc.weight.len()];
        let mut fc_grad_b = vec![0.0; self.fc.bias.len()];
        let mut grad_features = Vec::with_capacity(batch);
        let (c_b, h_b, w_b) = cache.adaptive_in_dims;
        for i in 0..batch {
            let mut dlogits = cache.probs[i].clone();
            dlogits[targets[i]] -= 1.0;
            for d in dlogits.iter_mut() {
                *d *= scale;
            }
            let grad_in =
                self.fc
                    .backward_accumulate(&cache.fc_in[i], &dlogits, &mut fc_grad_w, &mut fc_grad_b);
            let grad_feat = Tensor3::new(self.fc.in_features / (POOLED * POOLED), POOLED, POOLED, grad_in)
                .expect("fc input is a flattened pooled feature map");
            grad_features.push(adaptive_avg_pool_backward(c_b, h_b, w_b, &grad_feat));
        }

        let (grad_pooled, block_b_grads) =
            Self::dense_block_backward(&self.block_b, &cache.block_b, &grad_features);

        let (c_t, h_t, w_t) = cache.transition.pre_pool_dims;
        let grad_conv_out: Vec<Tensor3> = grad_pooled
            .iter()
            .map(|g| avg_pool_2x2_backward(c_t, h_t, w_t, g))
            .collect();
        let mut trans_grad_w = vec![0.0; self.transition.conv.weight.len()];
        let mut trans_grad_b = vec![0.0; self.transition.conv.bias.len()];
        let mut grad_trans_bn_out = Vec::with_capacity(batch);
        for i in 0..batch {
            let (gi, gw, gb) = self
                .transition
                .conv
                .backward(&cache.transition.conv_in[i], &grad_conv_out[i]);
            for (a, b) in trans_grad_w.iter_mut().zip(&gw) {
                *a += b;
            }
            for (a, b) in trans_grad_b.iter_mut().zip(&gb) {
                *a += b;
            }
            grad_trans_bn_out.push(gi);
        }
        let (grad_a_out, trans_gamma, trans_beta) = self
            .transition
            .bn
            .backward(&cache.transition.bn, &grad_trans_bn_out);

        let (_, block_a_grads) =
            Self::dense_block_backward(&self.block_a, &cache.block_a, &grad_a_out);

        let net_grads = NetGrads {
            block_a: block_a_grads,
            transition: LayerGrads {
                gamma: trans_gamma,
                beta: trans_beta,
                conv_w: trans_grad_w,
                conv_b: trans_grad_b,
            },
            block_b: block_b_grads,
            fc_w: fc_grad_w,
            fc_b: fc_grad_b,
        };
        Ok(Gradients(net_grads.flatten()))
    }

    // ---- flat parameter plumbing -------------------------------------

    /// Trainable parameter slices in canonical walk order. The walk order
    /// here defines the flat indexing used by `flat_params`,
    /// `set_flat_params`, `param_groups` and `Gradients`.
    fn param_slices(&self) -> Vec<(String, &[f64])> {
        let mut out = Vec::new();
        for (i, layer) in self.block_a.iter().enumerate() {
            out.push((format!("block_a.{i}.bn.gamma"), &layer.bn.gamma[..]));
            out.push((format!("block_a.{i}.bn.beta"), &layer.bn.beta[..]));
            out.push((format!("block_a.{i}.conv.weight"), &layer.conv.weight[..]));
            out.push((format!("block_a.{i}.conv.bias"), &layer.conv.bias[..]));
        }
        out.push(("transition.bn.gamma".into(), &self.transition.bn.gamma[..]));
        out.push(("transition.bn.beta".into(), &self.transition.bn.beta[..]));
        out.push(("transition.conv.weight".into(), &self.transition.conv.weight[..]));
        out.push(("transition.conv.bias".into(), &self.transition.conv.bias[..]));
        for (i, layer) in self.block_b.iter().enumerate() {
            out.push((format!("block_b.{i}.bn.gamma"), &layer.bn.gamma[..]));
            out.push((format!("block_b.{i}.bn.beta"), &layer.bn.beta[..]));
            out.push((format!("block_b.{i}.conv.weight"), &layer.conv.weight[..]));
            out.push((format!("block_b.{i}.conv.bias"), &layer.conv.bias[..]));
        }
        out.push(("fc.weight".into(), &self.fc.weight[..]));
        out.push(("fc.bias".into(), &self.fc.bias[..]));
        out
    }

    fn param_slices_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut out: Vec<(String, &mut [f64])> = Vec::new();
        for (i, layer) in self.block_a.iter_mut().enumerate() {
            out.push((format!("block_a.{i}.bn.gamma"), &mut layer.bn.gamma[..]));
            out.push((format!("block_a.{i}.bn.beta"), &mut layer.bn.beta[..]));
            out.push((format!("block_a.{i}.conv.weight"), &mut layer.conv.weight[..]));
            out.push((format!("block_a.{i}.conv.bias"), &mut layer.conv.bias[..]));
        }
        out.push(("transition.bn.gamma".into(), &mut self.transition.bn.gamma[..]));
        out.push(("transition.bn.beta".into(), &mut self.transition.bn.beta[..]));
        out.push((
            "transition.conv.weight".into(),
            &mut self.transition.conv.weight[..],
        ));
        out.push(("transition.conv.bias".into(), &mut self.transition.conv.bias[..]));
        for (i, layer) in self.block_b.iter_mut().enumerate() {
            out.push((format!("block_b.{i}.bn.gamma"), &mut layer.bn.gamma[..]));
            out.push((format!("block_b.{i}.bn.beta"), &mut layer.bn.beta[..]));
            out.push((format!("block_b.{i}.conv.weight"), &mut layer.conv.weight[..]));
            out.push((format!("block_b.{i}.conv.bias"), &mut layer.conv.bias[..]));
        }
        out.push(("fc.weight".into(), &mut self.fc.weight[..]));
        out.push(("fc.bias".into(), &mut self.fc.bias[..]));
        out
    }

    /// Running batchnorm statistics, serialized with the model but excluded
    /// from the trainable flat vector.
    pub(crate) fn stat_slices(&self) -> Vec<(String, &[f64])> {
        let mut out = Vec::new();
        for (i, layer) in self.block_a.iter().enumerate() {
            out.push((format!("block_a.{i}.bn.running_mean"), &layer.bn.running_mean[..]));
            out.push((format!("block_a.{i}.bn.running_var"), &layer.bn.running_var[..]));
        }
        out.push((
            "transition.bn.running_mean".into(),
            &self.transition.bn.running_mean[..],
        ));
        out.push((
            "transition.bn.running_var".into(),
            &self.transition.bn.running_var[..],
        ));
        for (i, layer) in self.block_b.iter().enumerate() {
            out.push((format!("block_b.{i}.bn.running_mean"), &layer.bn.running_mean[..]));
            out.push((format!("block_b.{i}.bn.running_var"), &layer.bn.running_var[..]));
        }
        out
    }

    pub(crate) fn stat_slices_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut out: Vec<(String, &mut [f64])> = Vec::new();
        for (i, layer) in self.block_a.iter_mut().enumerate() {
            out.push((
                format!("block_a.{i}.bn.running_mean"),
                &mut layer.bn.running_mean[..],
            ));
            out.push((
                format!("block_a.{i}.bn.running_var"),
                &mut layer.bn.running_var[..],
            ));
        }
        out.push((
            "transition.bn.running_mean".into(),
            &mut self.transition.bn.running_mean[..],
        ));
        out.push((
            "transition.bn.running_var".into(),
            &mut self.transition.bn.running_var[..],
        ));
        for (i, layer) in self.block_b.iter_mut().enumerate() {
            out.push((
                format!("block_b.{i}.bn.running_mean"),
                &mut layer.bn.running_mean[..],
            ));
            out.push((
                format!("block_b.{i}.bn.running_var"),
                &mut layer.bn.running_var[..],
            ));
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.param_slices().iter().map(|(_, s)| s.len()).sum()
    }

    pub fn param_groups(&self) -> Vec<ParamGroup> {
        let mut offset = 0;
        self.param_slices()
            .into_iter()
            .map(|(name, slice)| {
                let group = ParamGroup {
                    name,
                    offset,
                    len: slice.len(),
                };
                offset += slice.len();
                group
            })
            .collect()
    }

    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for (_, slice) in self.param_slices() {
            out.extend_from_slice(slice);
        }
        out
    }

    pub fn set_flat_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                params.len()
            )));
        }
        let mut offset = 0;
        for (_, slice) in self.param_slices_mut() {
            slice.copy_from_slice(&params[offset..offset + slice.len()]);
            offset += slice.len();
        }
        Ok(())
    }
}

struct LayerGrads {
    gamma: Vec<f64>,
    beta: Vec<f64>,
    conv_w: Vec<f64>,
    conv_b: Vec<f64>,
}

struct NetGrads {
    block_a: Vec<LayerGrads>,
    transition: LayerGrads,
    block_b: Vec<LayerGrads>,
    fc_w: Vec<f64>,
    fc_b: Vec<f64>,
}

impl NetGrads {
    /// Must mirror the walk order of `Network::param_slices`.
    fn flatten(self) -> Vec<f64> {
        let mut out = Vec::new();
        let push_layer = |out: &mut Vec<f64>, l: LayerGrads| {
            out.extend(l.gamma);
            out.extend(l.beta);
            out.extend(l.conv_w);
            out.extend(l.conv_b);
        };
        for l in self.block_a {
            push_layer(&mut out, l);
        }
        push_layer(&mut out, self.transition);
        for l in self.block_b {
            push_layer(&mut out, l);
        }
        out.extend(self.fc_w);
        out.extend(self.fc_b);
        out
    }
}

/// Mean cross-entropy of predicted probabilities against target classes.
pub fn cross_entropy(probs: &[Vec<f64>], targets: &[usize]) -> f64 {
    debug_assert_eq!(probs.len(), targets.len());
    let total: f64 = probs
        .iter()
        .zip(targets)
        .map(|(p, &t)| -(p[t].max(1e-300)).ln())
        .sum();
    total / probs.len() as f64
}

/// Classifies one raw (un-normalized) spectrogram: rescales it with the
/// training statistics, runs an inference forward pass, and returns the
/// argmax class index with the full probability vector.
pub fn predict(net: &Network, spec: &Spectrogram, stats: &NormStats) -> Result<(usize, Vec<f64>)> {
    let input = Tensor3::from_spectrogram(&spec.normalized(stats));
    let probs = net.forward_infer_single(&input)?;
    Ok((argmax(&probs), probs))
}

/// Classifies a spectrogram that is already in the network's input space
/// (normalized to the training range).
pub fn predict_normalized(net: &Network, spec: &Spectrogram) -> Result<(usize, Vec<f64>)> {
    let input = Tensor3::from_spectrogram(spec);
    let probs = net.forward_infer_single(&input)?;
    Ok((argmax(&probs), probs))
}
