//! Layer primitives: convolution, batch normalization, pooling, ReLU and the
//! fully connected head, each with a matching backward pass.

use super::tensor::Tensor3;
use crate::error::{Error, Result};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// Zero-pad so height/width are preserved (odd kernels).
    Same,
    /// No padding; output shrinks by k-1.
    Valid,
}

/// 2D cross-correlation with per-output-channel bias.
///
/// Weights are flat in `[out][in][kh][kw]` order.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub padding: Padding,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Conv2d {
    pub fn zeros(in_channels: usize, out_channels: usize, kernel: usize, padding: Padding) -> Self {
        Self {
            in_channels,
            out_channels,
            kernel,
            padding,
            weight: vec![0.0; out_channels * in_channels * kernel * kernel],
            bias: vec![0.0; out_channels],
        }
    }

    #[inline]
    fn w(&self, o: usize, i: usize, u: usize, v: usize) -> f64 {
        self.weight[((o * self.in_channels + i) * self.kernel + u) * self.kernel + v]
    }

    fn pad(&self) -> usize {
        match self.padding {
            Padding::Same => (self.kernel - 1) / 2,
            Padding::Valid => 0,
        }
    }

    pub fn output_dims(&self, h: usize, w: usize) -> (usize, usize) {
        match self.padding {
            Padding::Same => (h, w),
            Padding::Valid => (h + 1 - self.kernel, w + 1 - self.kernel),
        }
    }

    pub fn forward(&self, input: &Tensor3) -> Result<Tensor3> {
        if input.channels != self.in_channels {
            return Err(Error::Shape(format!(
                "conv expects {} input channels, got {}",
                self.in_channels, input.channels
            )));
        }
        let pad = self.pad() as isize;
        let (oh, ow) = self.output_dims(input.height, input.width);
        let mut out = Tensor3::zeros(self.out_channels, oh, ow);
        for o in 0..self.out_channels {
            for y in 0..oh {
                for x in 0..ow {
                    let mut acc = self.bias[o];
                    for i in 0..self.in_channels {
                        for u in 0..self.kernel {
                            for v in 0..self.kernel {
                                let sy = y as isize + u as isize - pad;
                                let sx = x as isize + v as isize - pad;
                                if sy < 0
                                    || sx < 0
                                    || sy >= input.height as isize
                                    || sx >= input.width as isize
                                {
                                    continue;
                                }
                                acc += self.w(o, i, u, v) * input.get(i, sy as usize, sx as usize);
                            }
                        }
                    }
                    out.set(o, y, x, acc);
                }
            }
        }
        Ok(out)
    }

    /// Returns (grad wrt input, grad wrt weight, grad wrt bias).
    pub fn backward(&self, input: &Tensor3, grad_out: &Tensor3) -> (Tensor3, Vec<f64>, Vec<f64>) {
        let pad = self.pad() as isize;
        let mut grad_in = Tensor3::zeros(input.channels, input.height, input.width);
        let mut grad_w = vec![0.0; self.weight.len()];
        let mut grad_b = vec![0.0; self.bias.len()];
        for o in 0..self.out_channels {
            for y in 0..grad_out.height {
                for x in 0..grad_out.width {
                    let g = grad_out.get(o, y, x);
                    grad_b[o] += g;
                    for i in 0..self.in_channels {
                        for u in 0..self.kernel {
                            for v in 0..self.kernel {
                                let sy = y as isize + u as isize - pad;
                                let sx = x as isize + v as isize - pad;
                                if sy < 0
                                    || sx < 0
                                    || sy >= input.height as isize
                                    || sx >= input.width as isize
                                {
                                    continue;
                                }
                                let (sy, sx) = (sy as usize, sx as usize);
                                let widx =
                                    ((o * self.in_channels + i) * self.kernel + u) * self.kernel + v;
                                grad_w[widx] += g * input.get(i, sy, sx);
                                grad_in.add(i, sy, sx, g * self.w(o, i, u, v));
                            }
                        }
                    }
                }
            }
        }
        (grad_in, grad_w, grad_b)
    }
}

/// Per-channel batch normalization with learned scale/shift and running
/// statistics for inference.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub channels: usize,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
}

/// Batch statistics and normalized activations retained for backward.
#[derive(Debug, Clone)]
pub struct BnCache {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub x_hat: Vec<Tensor3>,
}

impl BatchNorm {
    pub fn identity(channels: usize) -> Self {
        Self {
            channels,
            gamma: vec![1.0; channels],
            beta: vec![0.0; channels],
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
        }
    }

    fn check_channels(&self, t: &Tensor3) -> Result<()> {
        if t.channels != self.channels {
            return Err(Error::Shape(format!(
                "batchnorm over {} channels got a {}-channel tensor",
                self.channels, t.channels
            )));
        }
        Ok(())
    }

    /// Training-mode forward over a whole batch using batch statistics.
    /// Pure: running statistics are only folded in by
    /// [`BatchNorm::update_running`].
    pub fn forward_train(&self, batch: &[Tensor3]) -> Result<(Vec<Tensor3>, BnCache)> {
        if batch.len() < 2 {
            return Err(Error::Config(format!(
                "batchnorm in training mode needs a batch of at least 2, got {}",
                batch.len()
            )));
        }
        for t in batch {
            self.check_channels(t)?;
        }
        let m = (batch.len() * batch[0].spatial_len()) as f64;
        let mut mean = vec![0.0; self.channels];
        let mut var = vec![0.0; self.channels];
        for c in 0..self.channels {
            let mut sum = 0.0;
            for t in batch {
                for &v in t.channel(c) {
                    sum += v;
                }
            }
            mean[c] = sum / m;
            let mut sq = 0.0;
            for t in batch {
                for &v in t.channel(c) {
                    let d = v - mean[c];
                    sq += d * d;
                }
            }
            var[c] = sq / m;
        }
        let mut x_hat = Vec::with_capacity(batch.len());
        let mut out = Vec::with_capacity(batch.len());
        for t in batch {
            let mut hat = t.clone();
            let mut y = t.clone();
            for c in 0..self.channels {
                let inv_std = 1.0 / (var[c] + BN_EPS).sqrt();
                for h in 0..t.height {
                    for w in 0..t.width {
                        let xh = (t.get(c, h, w) - mean[c]) * inv_std;
                        hat.set(c, h, w, xh);
                        y.set(c, h, w, self.gamma[c] * xh + self.beta[c]);
                    }
                }
            }
            x_hat.push(hat);
            out.push(y);
        }
        Ok((out, BnCache { mean, var, x_hat }))
    }

    /// Folds cached batch statistics into the running estimates.
    pub fn update_running(&mut self, cache: &BnCache) {
        for c in 0..self.channels {
            self.running_mean[c] =
                (1.0 - BN_MOMENTUM) * self.running_mean[c] + BN_MOMENTUM * cache.mean[c];
            self.running_var[c] =
                (1.0 - BN_MOMENTUM) * self.running_var[c] + BN_MOMENTUM * cache.var[c];
        }
    }

    /// Inference-mode forward using running statistics.
    pub fn forward_infer(&self, input: &Tensor3) -> Result<Tensor3> {
        self.check_channels(input)?;
        let mut out = input.clone();
        for c in 0..self.channels {
            let inv_std = 1.0 / (self.running_var[c] + BN_EPS).sqrt();
            for h in 0..input.height {
                for w in 0..input.width {
                    let xh = (input.get(c, h, w) - self.running_mean[c]) * inv_std;
                    out.set(c, h, w, self.gamma[c] * xh + self.beta[c]);
                }
            }
        }
        Ok(out)
    }

    /// Returns (grad wrt input batch, grad gamma, grad beta).
    pub fn backward(
        &self,
        cache: &BnCache,
        grad_out: &[Tensor3],
    ) -> (Vec<Tensor3>, Vec<f64>, Vec<f64>) {
        let m = (grad_out.len() * grad_out[0].spatial_len()) as f64;
        let mut grad_gamma = vec![0.0; self.channels];
        let mut grad_beta = vec![0.0; self.channels];
        for (g, hat) in grad_out.iter().zip(&cache.x_hat) {
            for c in 0..self.channels {
                let gc = g.channel(c);
                let hc = hat.channel(c);
                for (gv, hv) in gc.iter().zip(hc) {
                    grad_gamma[c] += gv * hv;
                    grad_beta[c] += gv;
                }
            }
        }
        // dx = gamma/std * (dy - mean(dy) - x_hat * mean(dy * x_hat))
        let mut grad_in: Vec<Tensor3> = grad_out.to_vec();
        for c in 0..self.channels {
            let inv_std = 1.0 / (cache.var[c] + BN_EPS).sqrt();
            let mean_dy = grad_beta[c] / m;
            let mean_dy_xhat = grad_gamma[c] / m;
            for (gi, (g, hat)) in grad_in.iter_mut().zip(grad_out.iter().zip(&cache.x_hat)) {
                for h in 0..g.height {
                    for w in 0..g.width {
                        let dy = g.get(c, h, w);
                        let xh = hat.get(c, h, w);
                        gi.set(
                            c,
                            h,
                            w,
                            self.gamma[c] * inv_std * (dy - mean_dy - xh * mean_dy_xhat),
                        );
                    }
                }
            }
        }
        (grad_in, grad_gamma, grad_beta)
    }
}

pub fn relu(input: &Tensor3) -> Tensor3 {
    input.map(|v| v.max(0.0))
}

/// Gradient mask: passes where the pre-activation was strictly positive.
pub fn relu_backward(pre_activation: &Tensor3, grad_out: &Tensor3) -> Tensor3 {
    let mut out = grad_out.clone();
    for (o, &p) in out
        .values_mut()
        .iter_mut()
        .zip(pre_activation.values().iter())
    {
        if p <= 0.0 {
            *o = 0.0;
        }
    }
    out
}

/// 2x2 average pooling with stride 2; odd trailing rows/columns are dropped.
pub fn avg_pool_2x2(input: &Tensor3) -> Result<Tensor3> {
    if input.height < 2 || input.width < 2 {
        return Err(Error::Shape(format!(
            "2x2 pooling needs at least 2x2 input, got {}x{}",
            input.height, input.width
        )));
    }
    let (oh, ow) = (input.height / 2, input.width / 2);
    let mut out = Tensor3::zeros(input.channels, oh, ow);
    for c in 0..input.channels {
        for y in 0..oh {
            for x in 0..ow {
                let s = input.get(c, 2 * y, 2 * x)
                    + input.get(c, 2 * y, 2 * x + 1)
                    + input.get(c, 2 * y + 1, 2 * x)
                    + input.get(c, 2 * y + 1, 2 * x + 1);
                out.set(c, y, x, s / 4.0);
            }
        }
    }
    Ok(out)
}

pub fn avg_pool_2x2_backward(
    in_channels: usize,
    in_height: usize,
    in_width: usize,
    grad_out: &Tensor3,
) -> Tensor3 {
    let mut grad_in = Tensor3::zeros(in_channels, in_height, in_width);
    for c in 0..grad_out.channels {
        for y in 0..grad_out.height {
            for x in 0..grad_out.width {
                let g = grad_out.get(c, y, x) / 4.0;
                grad_in.add(c, 2 * y, 2 * x, g);
                grad_in.add(c, 2 * y, 2 * x + 1, g);
                grad_in.add(c, 2 * y + 1, 2 * x, g);
                grad_in.add(c, 2 * y + 1, 2 * x + 1, g);
            }
        }
    }
    grad_in
}

/// Contiguous, non-overlapping bins covering `len` cells with `out` bins:
/// bin i spans [ceil(i*len/out), ceil((i+1)*len/out)).
fn adaptive_bounds(len: usize, out: usize, i: usize) -> (usize, usize) {
    let start = (i * len).div_ceil(out);
    let end = ((i + 1) * len).div_ceil(out);
    (start, end)
}

/// Adaptive average pooling to a fixed output size.
pub fn adaptive_avg_pool(input: &Tensor3, out_h: usize, out_w: usize) -> Result<Tensor3> {
    if input.height < out_h || input.width < out_w {
        return Err(Error::Shape(format!(
            "adaptive pooling to {out_h}x{out_w} needs input at least that large, got {}x{}",
            input.height, input.width
        )));
    }
    let mut out = Tensor3::zeros(input.channels, out_h, out_w);
    for c in 0..input.channels {
        for y in 0..out_h {
            let (y0, y1) = adaptive_bounds(input.height, out_h, y);
            for x in 0..out_w {
                let (x0, x1) = adaptive_bounds(input.width, out_w, x);
                let mut acc = 0.0;
                for sy in y0..y1 {
                    for sx in x0..x1 {
                        acc += input.get(c, sy, sx);
                    }
                }
                out.set(c, y, x, acc / ((y1 - y0) * (x1 - x0)) as f64);
            }
        }
    }
    Ok(out)
}

pub fn adaptive_avg_pool_backward(
    in_channels: usize,
    in_height: usize,
    in_width: usize,
    grad_out: &Tensor3,
) -> Tensor3 {
    let mut grad_in = Tensor3::zeros(in_channels, in_height, in_width);
    for c in 0..grad_out.channels {
        for y in 0..grad_out.height {
            let (y0, y1) = adaptive_bounds(in_height, grad_out.height, y);
            for x in 0..grad_out.width {
                let (x0, x1) = adaptive_bounds(in_width, grad_out.width, x);
                let g = grad_out.get(c, y, x) / ((y1 - y0) * (x1 - x0)) as f64;
                for sy in y0..y1 {
                    for sx in x0..x1 {
                        grad_in.add(c, sy, sx, g);
                    }
                }
            }
        }
    }
    grad_in
}

/// Fully connected layer, weights flat in `[out][in]` order.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub in_features: usize,
    pub out_features: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Linear {
    pub fn zeros(in_features: usize, out_features: usize) -> Self {
        Self {
            in_features,
            out_features,
            weight: vec![0.0; out_features * in_features],
            bias: vec![0.0; out_features],
        }
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.in_features {
            return Err(Error::Shape(format!(
                "linear layer expects {} features, got {}",
                self.in_features,
                input.len()
            )));
        }
        Ok((0..self.out_features)
            .map(|o| {
                let row = &self.weight[o * self.in_features..(o + 1) * self.in_features];
                self.bias[o] + row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>()
            })
            .collect())
    }

    /// Accumulates weight/bias gradients in place and returns grad wrt input.
    pub fn backward_accumulate(
        &self,
        input: &[f64],
        grad_out: &[f64],
        grad_w: &mut [f64],
        grad_b: &mut [f64],
    ) -> Vec<f64> {
        let mut grad_in = vec![0.0; self.in_features];
        for o in 0..self.out_features {
            let g = grad_out[o];
            grad_b[o] += g;
            let row = &self.weight[o * self.in_features..(o + 1) * self.in_features];
            let grow = &mut grad_w[o * self.in_features..(o + 1) * self.in_features];
            for i in 0..self.in_features {
                grow[i] += g * input[i];
                grad_in[i] += g * row[i];
            }
        }
        grad_in
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_tensor(rng: &mut ChaCha8Rng, c: usize, h: usize, w: usize) -> Tensor3 {
        Tensor3::new(c, h, w, (0..c * h * w).map(|_| rng.random_range(-1.0..1.0)).collect())
            .unwrap()
    }

    /// Six nested loops, written independently of Conv2d::forward.
    fn conv_oracle(input: &Tensor3, conv: &Conv2d) -> Tensor3 {
        let pad = match conv.padding {
            Padding::Same => (conv.kernel - 1) / 2,
            Padding::Valid => 0,
        } as isize;
        let (oh, ow) = conv.output_dims(input.height, input.width);
        let mut out = Tensor3::zeros(conv.out_channels, oh, ow);
        for o in 0..conv.out_channels {
            for i in 0..conv.in_channels {
                for y in 0..oh {
                    for x in 0..ow {
                        for u in 0..conv.kernel {
                            for v in 0..conv.kernel {
                                let sy = y as isize + u as isize - pad;
                                let sx = x as isize + v as isize - pad;
                                if sy >= 0
                                    && sx >= 0
                                    && (sy as usize) < input.height
                                    && (sx as usize) < input.width
                                {
                                    let w_val = conv.weight[((o * conv.in_channels + i)
                                        * conv.kernel
                                        + u)
                                        * conv.kernel
                                        + v];
                                    let prev = out.get(o, y, x);
                                    out.set(
                                        o,
                                        y,
                                        x,
                                        prev + w_val * input.get(i, sy as usize, sx as usize),
                                    );
                                }
                            }
                        }
                    }
                }
            }
        }
        for o in 0..conv.out_channels {
            for y in 0..oh {
                for x in 0..ow {
                    let prev = out.get(o, y, x);
                    out.set(o, y, x, prev + conv.bias[o]);
                }
            }
        }
        out
    }

    #[test]
    fn identity_1x1_kernel_reproduces_the_input() {
        let mut conv = Conv2d::zeros(1, 1, 1, Padding::Same);
        conv.weight[0] = 1.0;
        let input = Tensor3::new(1, 3, 3, (1..=9).map(|v| v as f64).collect()).unwrap();
        assert_eq!(conv.forward(&input).unwrap(), input);
    }

    #[test]
    fn zero_input_produces_all_bias_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut conv = Conv2d::zeros(2, 3, 3, Padding::Same);
        for w in conv.weight.iter_mut() {
            *w = rng.random_range(-1.0..1.0);
        }
        conv.bias = vec![0.5, -1.5, 2.0];
        let out = conv.forward(&Tensor3::zeros(2, 4, 4)).unwrap();
        for o in 0..3 {
            assert!(out.channel(o).iter().all(|&v| v == conv.bias[o]));
        }
    }

    #[test]
    fn conv_matches_the_six_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for padding in [Padding::Same, Padding::Valid] {
            let mut conv = Conv2d::zeros(1, 4, 3, padding);
            for w in conv.weight.iter_mut() {
                *w = rng.random_range(-1.0..1.0);
            }
            for b in conv.bias.iter_mut() {
                *b = rng.random_range(-1.0..1.0);
            }
            let input = random_tensor(&mut rng, 1, 10, 5);
            let fast = conv.forward(&input).unwrap();
            let slow = conv_oracle(&input, &conv);
            for (a, b) in fast.values().iter().zip(slow.values()) {
                assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
            }
        }
    }

    #[test]
    fn conv_rejects_channel_mismatch() {
        let conv = Conv2d::zeros(2, 1, 3, Padding::Same);
        assert!(matches!(
            conv.forward(&Tensor3::zeros(3, 4, 4)),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn relu_clamps_negatives_and_keeps_nonnegatives() {
        let t = Tensor3::new(1, 1, 3, vec![-1.0, 0.0, 2.0]).unwrap();
        assert_eq!(relu(&t).values(), &[0.0, 0.0, 2.0]);
        let nonneg = Tensor3::new(1, 1, 3, vec![0.0, 1.0, 3.5]).unwrap();
        assert_eq!(relu(&nonneg), nonneg);
    }

    #[test]
    fn relu_gradient_mask_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let t = random_tensor(&mut rng, 1, 4, 4);
        let upstream = random_tensor(&mut rng, 1, 4, 4);
        let analytic = relu_backward(&t, &upstream);
        let h = 1e-6;
        for idx in 0..t.values().len() {
            let mut plus = t.clone();
            plus.values_mut()[idx] += h;
            let mut minus = t.clone();
            minus.values_mut()[idx] -= h;
            // L = sum(upstream * relu(x))
            let lp: f64 = relu(&plus)
                .values()
                .iter()
                .zip(upstream.values())
                .map(|(a, b)| a * b)
                .sum();
            let lm: f64 = relu(&minus)
                .values()
                .iter()
                .zip(upstream.values())
                .map(|(a, b)| a * b)
                .sum();
            let numeric = (lp - lm) / (2.0 * h);
            assert!((analytic.values()[idx] - numeric).abs() < 1e-6);
        }
    }

    #[test]
    fn batchnorm_train_standardizes_each_channel() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let bn = BatchNorm::identity(3);
        let batch: Vec<Tensor3> = (0..4).map(|_| random_tensor(&mut rng, 3, 4, 4)).collect();
        let (out, _) = bn.forward_train(&batch).unwrap();
        for c in 0..3 {
            let vals: Vec<f64> = out.iter().flat_map(|t| t.channel(c).to_vec()).collect();
            let m = vals.iter().sum::<f64>() / vals.len() as f64;
            let v = vals.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / vals.len() as f64;
            assert!(m.abs() < 1e-6);
            assert!((v - 1.0).abs() < 1e-3); // scaled by var/(var+eps)
        }
    }

    #[test]
    fn batchnorm_infer_with_identity_stats_divides_by_sqrt_one_plus_eps() {
        let bn = BatchNorm::identity(1);
        let t = Tensor3::new(1, 1, 4, vec![1.0, -2.0, 0.5, 3.0]).unwrap();
        let out = bn.forward_infer(&t).unwrap();
        let scale = 1.0 / (1.0 + BN_EPS).sqrt();
        for (o, i) in out.values().iter().zip(t.values()) {
            assert!((o - i * scale).abs() < 1e-12);
        }
    }

    #[test]
    fn batchnorm_train_rejects_batches_below_two() {
        let bn = BatchNorm::identity(1);
        let err = bn.forward_train(&[Tensor3::zeros(1, 2, 2)]).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn batchnorm_backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut bn = BatchNorm::identity(3);
        for g in bn.gamma.iter_mut() {
            *g = rng.random_range(0.5..1.5);
        }
        for b in bn.beta.iter_mut() {
            *b = rng.random_range(-0.5..0.5);
        }
        let batch: Vec<Tensor3> = (0..2).map(|_| random_tensor(&mut rng, 3, 4, 4)).collect();
        let upstream: Vec<Tensor3> = (0..2).map(|_| random_tensor(&mut rng, 3, 4, 4)).collect();
        let loss = |batch: &[Tensor3]| -> f64 {
            let (out, _) = bn.forward_train(batch).unwrap();
            out.iter()
                .zip(&upstream)
                .flat_map(|(o, u)| o.values().iter().zip(u.values()))
                .map(|(a, b)| a * b)
                .sum()
        };
        let (_, cache) = bn.forward_train(&batch).unwrap();
        let (grad_in, grad_gamma, grad_beta) = bn.backward(&cache, &upstream);

        let h = 1e-5;
        for item in 0..batch.len() {
            for idx in 0..batch[item].values().len() {
                let mut plus = batch.clone();
                plus[item].values_mut()[idx] += h;
                let mut minus = batch.clone();
                minus[item].values_mut()[idx] -= h;
                let numeric = (loss(&plus) - loss(&minus)) / (2.0 * h);
                let analytic = grad_in[item].values()[idx];
                let tol = 1e-4 * numeric.abs().max(1.0);
                assert!(
                    (analytic - numeric).abs() <= tol,
                    "input grad mismatch at item {item} idx {idx}: {analytic} vs {numeric}"
                );
            }
        }
        let perturbed_loss = |bn2: &BatchNorm| -> f64 {
            let (out, _) = bn2.forward_train(&batch).unwrap();
            out.iter()
                .zip(&upstream)
                .flat_map(|(o, u)| o.values().iter().zip(u.values()))
                .map(|(a, b)| a * b)
                .sum()
        };
        for c in 0..3 {
            for (is_gamma, analytic) in [(true, grad_gamma[c]), (false, grad_beta[c])] {
                let mut plus = bn.clone();
                let mut minus = bn.clone();
                if is_gamma {
                    plus.gamma[c] += h;
                    minus.gamma[c] -= h;
                } else {
                    plus.beta[c] += h;
                    minus.beta[c] -= h;
                }
                let numeric = (perturbed_loss(&plus) - perturbed_loss(&minus)) / (2.0 * h);
                assert!(
                    (analytic - numeric).abs() <= 1e-4 * numeric.abs().max(1.0),
                    "scale/shift grad mismatch at channel {c}"
                );
            }
        }
    }

    #[test]
    fn avg_pool_halves_10x5_to_5x2() {
        let t = Tensor3::zeros(2, 10, 5);
        let out = avg_pool_2x2(&t).unwrap();
        assert_eq!((out.channels, out.height, out.width), (2, 5, 2));
    }

    #[test]
    fn avg_pool_of_constants_is_constant() {
        let t = Tensor3::new(1, 4, 4, vec![3.5; 16]).unwrap();
        let out = avg_pool_2x2(&t).unwrap();
        assert!(out.values().iter().all(|&v| v == 3.5));
    }

    #[test]
    fn avg_pool_2x2_block_mean() {
        let t = Tensor3::new(1, 2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let out = avg_pool_2x2(&t).unwrap();
        assert_eq!(out.values(), &[2.5]);
    }

    #[test]
    fn avg_pool_rejects_too_small_inputs() {
        assert!(matches!(
            avg_pool_2x2(&Tensor3::zeros(1, 1, 4)),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn adaptive_pool_bins_5x2_as_3_plus_2_rows() {
        let t = Tensor3::new(1, 5, 2, (0..10).map(|v| v as f64).collect()).unwrap();
        let out = adaptive_avg_pool(&t, 2, 2).unwrap();
        // rows {0,1,2} and {3,4}; columns {0} and {1}
        assert_eq!(out.get(0, 0, 0), (0.0 + 2.0 + 4.0) / 3.0);
        assert_eq!(out.get(0, 0, 1), (1.0 + 3.0 + 5.0) / 3.0);
        assert_eq!(out.get(0, 1, 0), (6.0 + 8.0) / 2.0);
        assert_eq!(out.get(0, 1, 1), (7.0 + 9.0) / 2.0);
    }

    #[test]
    fn adaptive_pool_is_identity_when_shapes_match() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let t = random_tensor(&mut rng, 3, 2, 2);
        assert_eq!(adaptive_avg_pool(&t, 2, 2).unwrap(), t);
    }

    #[test]
    fn adaptive_pool_of_constants_is_constant() {
        let t = Tensor3::new(1, 5, 3, vec![1.25; 15]).unwrap();
        let out = adaptive_avg_pool(&t, 2, 2).unwrap();
        assert!(out.values().iter().all(|&v| (v - 1.25).abs() < 1e-12));
    }

    #[test]
    fn adaptive_pool_rejects_upsampling() {
        assert!(matches!(
            adaptive_avg_pool(&Tensor3::zeros(1, 1, 1), 2, 2),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn pool_backward_distributes_means() {
        let grad = Tensor3::new(1, 1, 1, vec![4.0]).unwrap();
        let back = avg_pool_2x2_backward(1, 2, 2, &grad);
        assert_eq!(back.values(), &[1.0, 1.0, 1.0, 1.0]);

        let agrad = Tensor3::new(1, 2, 1, vec![3.0, 2.0]).unwrap();
        let aback = adaptive_avg_pool_backward(1, 5, 1, &agrad);
        assert_eq!(aback.values(), &[1.0, 1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn softmax_sums_to_one_and_argmax_breaks_ties_low() {
        let p = softmax(&[1.0, 2.0, 3.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(argmax(&[0.5, 0.5, 0.1]), 0);
    }
}
