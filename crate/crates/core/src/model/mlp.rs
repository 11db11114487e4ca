//! Batch-normalized MLP: `d → 256 → 128 → 64 → 2`.
//!
//! Hidden layers run Linear → BatchNorm → LeakyReLU → Dropout (dropout on
//! the first two only); the output layer is affine. Everything is `f64`.

use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ModelError;

pub const HIDDEN_SIZES: [usize; 3] = [256, 128, 64];
pub const N_CLASSES: usize = 2;
pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;
pub const DEFAULT_LEAKY_SLOPE: f64 = 0.01;
/// Hidden layers (0-based) that apply dropout.
pub const DROPOUT_LAYERS: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `in × out`.
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    fn kaiming(n_in: usize, n_out: usize, slope: f64, rng: &mut ChaCha8Rng) -> Self {
        let gain = (2.0 / (1.0 + slope * slope)).sqrt();
        let bound = gain * (3.0 / n_in as f64).sqrt();
        let weight = Array2::from_shape_fn((n_in, n_out), |_| rng.random_range(-bound..bound));
        Self {
            weight,
            bias: Array1::zeros(n_out),
        }
    }

    fn apply(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.weight) + &self.bias
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
}

impl BatchNorm {
    fn new(n: usize) -> Self {
        Self {
            gamma: Array1::ones(n),
            beta: Array1::zeros(n),
            running_mean: Array1::zeros(n),
            running_var: Array1::ones(n),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HiddenLayer {
    pub dense: Dense,
    pub norm: BatchNorm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub input_dim: usize,
    pub hidden: Vec<HiddenLayer>,
    pub output: Dense,
    pub leaky_slope: f64,
}

impl ModelParams {
    /// `[input_dim, 256, 128, 64, 2]`.
    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut s = vec![self.input_dim];
        s.extend(self.hidden.iter().map(|h| h.dense.bias.len()));
        s.push(self.output.bias.len());
        s
    }

    /// Trainable tensors in a fixed order: per hidden layer weight, bias,
    /// gamma, beta; then output weight and bias.
    pub fn trainable_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::with_capacity(4 * self.hidden.len() + 2);
        for h in &mut self.hidden {
            out.push(h.dense.weight.as_slice_mut().expect("standard layout"));
            out.push(h.dense.bias.as_slice_mut().expect("standard layout"));
            out.push(h.norm.gamma.as_slice_mut().expect("standard layout"));
            out.push(h.norm.beta.as_slice_mut().expect("standard layout"));
        }
        out.push(self.output.weight.as_slice_mut().expect("standard layout"));
        out.push(self.output.bias.as_slice_mut().expect("standard layout"));
        out
    }

    pub fn trainable_sizes(&self) -> Vec<usize> {
        let mut out = Vec::new();
        for h in &self.hidden {
            out.extend([
                h.dense.weight.len(),
                h.dense.bias.len(),
                h.norm.gamma.len(),
                h.norm.beta.len(),
            ]);
        }
        out.extend([self.output.weight.len(), self.output.bias.len()]);
        out
    }

    /// Validates that the layer dimensions chain and variances are usable.
    pub fn check(&self) -> Result<(), ModelError> {
        let mut prev = self.input_dim;
        for (i, h) in self.hidden.iter().enumerate() {
            let (n_in, n_out) = h.dense.weight.dim();
            let norm_ok = [&h.norm.gamma, &h.norm.beta, &h.norm.running_mean, &h.norm.running_var]
                .iter()
                .all(|v| v.len() == n_out);
            if n_in != prev || h.dense.bias.len() != n_out || !norm_ok {
                return Err(ModelError::Shape(format!("hidden layer {i} does not chain")));
            }
            if h.norm.running_var.iter().any(|v| !(*v >= 0.0)) {
                return Err(ModelError::Shape(format!(
                    "hidden layer {i} has a negative running variance"
                )));
            }
            prev = n_out;
        }
        if self.output.weight.nrows() != prev
            || self.output.weight.ncols() != N_CLASSES
            || self.output.bias.len() != N_CLASSES
        {
            return Err(ModelError::Shape("output layer does not chain".into()));
        }
        Ok(())
    }
}

/// Kaiming-uniform weights for the LeakyReLU gain, zero biases, unit
/// batch-norm state. Deterministic per seed.
pub fn init_model(input_dim: usize, seed: u64) -> Result<ModelParams, ModelError> {
    init_model_with(input_dim, seed, DEFAULT_LEAKY_SLOPE)
}

pub fn init_model_with(input_dim: usize, seed: u64, leaky_slope: f64) -> Result<ModelParams, ModelError> {
    if input_dim == 0 {
        return Err(ModelError::Shape("input dimension must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut prev = input_dim;
    let hidden = HIDDEN_SIZES
        .iter()
        .map(|&n| {
            let layer = HiddenLayer {
                dense: Dense::kaiming(prev, n, leaky_slope, &mut rng),
                norm: BatchNorm::new(n),
            };
            prev = n;
            layer
        })
        .collect();
    let output = Dense::kaiming(prev, N_CLASSES, leaky_slope, &mut rng);
    Ok(ModelParams {
        input_dim,
        hidden,
        output,
        leaky_slope,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dropout {
    pub rate: f64,
    pub seed: u64,
}

impl Dropout {
    pub const NONE: Dropout = Dropout { rate: 0.0, seed: 0 };
}

#[derive(Debug, Clone)]
struct LayerCache {
    input: Array2<f64>,
    x_hat: Array2<f64>,
    inv_std: Array1<f64>,
    pre_act: Array2<f64>,
    /// Inverted-dropout multipliers (0 or 1/keep); `None` when inactive.
    mask: Option<Array2<f64>>,
    batch_mean: Array1<f64>,
    batch_var: Array1<f64>,
}

/// Logits plus what backpropagation and the running-stat update need.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub logits: Array2<f64>,
    mode: Mode,
    layers: Vec<LayerCache>,
    final_input: Array2<f64>,
}

pub fn forward(
    params: &ModelParams,
    batch: &Array2<f64>,
    mode: Mode,
    dropout: Dropout,
) -> Result<ForwardPass, ModelError> {
    if batch.ncols() != params.input_dim {
        return Err(ModelError::Shape(format!(
            "batch has {} features, model expects {}",
            batch.ncols(),
            params.input_dim
        )));
    }
    let n = batch.nrows();
    if mode == Mode::Train && n < 2 {
        return Err(ModelError::BatchTooSmall(n));
    }
    if !(0.0..1.0).contains(&dropout.rate) {
        return Err(ModelError::Config(format!("dropout {} outside [0, 1)", dropout.rate)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(dropout.seed);
    let mut a = batch.clone();
    let mut layers = Vec::with_capacity(params.hidden.len());
    for (li, layer) in params.hidden.iter().enumerate() {
        let z = layer.dense.apply(&a);
        let (mean, var) = match mode {
            Mode::Train => {
                let mean = z.mean_axis(Axis(0)).expect("non-empty batch");
                let var = (&z - &mean).mapv(|v| v * v).mean_axis(Axis(0)).expect("non-empty batch");
                (mean, var)
            }
            Mode::Eval => (layer.norm.running_mean.clone(), layer.norm.running_var.clone()),
        };
        let inv_std = var.mapv(|v| 1.0 / (v + BN_EPS).sqrt());
        let x_hat = (&z - &mean) * &inv_std;
        let pre_act = &x_hat * &layer.norm.gamma + &layer.norm.beta;
        let slope = params.leaky_slope;
        let mut out = pre_act.mapv(|v| if v > 0.0 { v } else { slope * v });
        let mask = if mode == Mode::Train && dropout.rate > 0.0 && li < DROPOUT_LAYERS {
            let keep = 1.0 - dropout.rate;
            let m = Array2::from_shape_fn(out.dim(), |_| {
                if rng.random::<f64>() >= dropout.rate {
                    1.0 / keep
                } else {
                    0.0
                }
            });
            out *= &m;
            Some(m)
        } else {
            None
        };
        layers.push(LayerCache {
            input: a,
            x_hat,
            inv_std,
            pre_act,
            mask,
            batch_mean: mean,
            batch_var: var,
        });
        a = out;
    }
    let logits = params.output.apply(&a);
    Ok(ForwardPass {
        logits,
        mode,
        layers,
        final_input: a,
    })
}

impl ForwardPass {
    /// Exponential moving update of the batch-norm running statistics
    /// (unbiased batch variance, momentum 0.1). No-op for eval passes.
    pub fn update_running_stats(&self, params: &mut ModelParams) {
        if self.mode != Mode::Train {
            return;
        }
        for (cache, layer) in self.layers.iter().zip(&mut params.hidden) {
            let n = cache.input.nrows() as f64;
            let unbiased = &cache.batch_var * (n / (n - 1.0));
            layer.norm.running_mean =
                &layer.norm.running_mean * (1.0 - BN_MOMENTUM) + &cache.batch_mean * BN_MOMENTUM;
            layer.norm.running_var =
                &layer.norm.running_var * (1.0 - BN_MOMENTUM) + unbiased * BN_MOMENTUM;
        }
    }

    /// Normalized (pre-γ/β) activations of hidden layer `i`.
    pub fn normalized(&self, i: usize) -> &Array2<f64> {
        &self.layers[i].x_hat
    }

    /// Gradients of the loss with respect to every trainable tensor, in
    /// [`ModelParams::trainable_mut`] order, given `d loss / d logits`.
    pub fn backward(&self, params: &ModelParams, d_logits: &Array2<f64>) -> Vec<Vec<f64>> {
        let mut grads: Vec<Vec<f64>> = Vec::with_capacity(4 * self.layers.len() + 2);
        let d_wo = self.final_input.t().dot(d_logits);
        let d_bo = d_logits.sum_axis(Axis(0));
        let mut d_a = d_logits.dot(&params.output.weight.t());

        let mut per_layer: Vec<[Vec<f64>; 4]> = Vec::with_capacity(self.layers.len());
        for (cache, layer) in self.layers.iter().zip(&params.hidden).rev() {
            if let Some(mask) = &cache.mask {
                d_a *= mask;
            }
            let slope = params.leaky_slope;
            let d_pre = &d_a * &cache.pre_act.mapv(|v| if v > 0.0 { 1.0 } else { slope });
            let d_gamma = (&d_pre * &cache.x_hat).sum_axis(Axis(0));
            let d_beta = d_pre.sum_axis(Axis(0));
            let d_xhat = &d_pre * &layer.norm.gamma;
            let d_z = match self.mode {
                Mode::Train => {
                    let n = d_xhat.nrows() as f64;
                    let sum_d = d_xhat.sum_axis(Axis(0));
                    let sum_dx = (&d_xhat * &cache.x_hat).sum_axis(Axis(0));
                    ((&d_xhat * n) - &sum_d - &(&cache.x_hat * &sum_dx)) * &cache.inv_std / n
                }
                Mode::Eval => &d_xhat * &cache.inv_std,
            };
            let d_w = cache.input.t().dot(&d_z);
            let d_b = d_z.sum_axis(Axis(0));
            d_a = d_z.dot(&layer.dense.weight.t());
            per_layer.push([
                d_w.iter().copied().collect(),
                d_b.to_vec(),
                d_gamma.to_vec(),
                d_beta.to_vec(),
            ]);
        }
        for g in per_layer.into_iter().rev() {
            grads.extend(g);
        }
        grads.push(d_wo.iter().copied().collect());
        grads.push(d_bo.to_vec());
        grads
    }
}

/// Eval-mode logits.
pub fn predict_logits(params: &ModelParams, batch: &Array2<f64>) -> Result<Array2<f64>, ModelError> {
    Ok(forward(params, batch, Mode::Eval, Dropout::NONE)?.logits)
}

/// Row-wise softmax.
pub fn softmax(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - m).exp());
        let s = row.sum();
        row.mapv_inplace(|v| v / s);
    }
    out
}

/// Mean negative log-likelihood with log-sum-exp stabilization.
pub fn cross_entropy(logits: &Array2<f64>, labels: &[usize]) -> f64 {
    cross_entropy_with_grad(logits, labels).0
}

/// Loss and its gradient with respect to the logits.
pub fn cross_entropy_with_grad(logits: &Array2<f64>, labels: &[usize]) -> (f64, Array2<f64>) {
    let n = logits.nrows().max(1) as f64;
    let mut grad = Array2::zeros(logits.dim());
    let mut loss = 0.0;
    for (i, (row, &y)) in logits.rows().into_iter().zip(labels).enumerate() {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        loss += lse - row[y];
        for (c, v) in row.iter().enumerate() {
            let p = (v - lse).exp();
            grad[[i, c]] = (p - if c == y { 1.0 } else { 0.0 }) / n;
        }
    }
    (loss / n, grad)
}
