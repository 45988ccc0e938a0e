//! Fully connected regressor from radial image features to SPD samples:
//! leaky-ReLU hidden layers, a linear output head, mean-squared-error loss
//! and Adam.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::imager::FeatureVector;
use crate::metrics::Metrics;
use crate::spectral::{normalize_samples, SpectralGrid, Spd};
use crate::synth::Seed;

/// One affine layer. `weights` is `out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Layer {
    fn zeros_like(&self) -> Layer {
        Layer { weights: Array2::zeros(self.weights.raw_dim()), bias: Array1::zeros(self.bias.len()) }
    }

    fn same_shape(&self, other: &Layer) -> bool {
        self.weights.dim() == other.weights.dim() && self.bias.len() == other.bias.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    layer_dims: Vec<usize>,
    leaky_slope: f64,
    layers: Vec<Layer>,
}

/// Gradients with the same layout as the model's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

fn check_dims(layer_dims: &[usize], leaky_slope: f64) -> Result<()> {
    if layer_dims.len() < 2 || layer_dims.contains(&0) {
        return Err(Error::DimensionMismatch(format!("invalid layer dims {layer_dims:?}")));
    }
    if !(leaky_slope > 0.0 && leaky_slope < 1.0) {
        return Err(Error::InvalidArgument(format!("leaky slope {leaky_slope} outside (0, 1)")));
    }
    Ok(())
}

/// Weights uniform in `±sqrt(6 / (fan_in + fan_out))`, drawn layer by layer
/// in row-major order; biases zero.
pub fn init_model(layer_dims: &[usize], leaky_slope: f64, seed: Seed) -> Result<MlpModel> {
    check_dims(layer_dims, leaky_slope)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = layer_dims
        .windows(2)
        .map(|w| {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let weights = Array2::from_shape_simple_fn((fan_out, fan_in), || bound * (2.0 * rng.random::<f64>() - 1.0));
            Layer { weights, bias: Array1::zeros(fan_out) }
        })
        .collect();
    Ok(MlpModel { layer_dims: layer_dims.to_vec(), leaky_slope, layers })
}

struct Trace {
    /// Layer inputs, `activations[0]` is the batch itself.
    activations: Vec<Array2<f64>>,
    /// Pre-activations of each layer.
    pre: Vec<Array2<f64>>,
}

impl MlpModel {
    pub fn from_layers(leaky_slope: f64, layers: Vec<Layer>) -> Result<Self> {
        let mut dims = Vec::with_capacity(layers.len() + 1);
        for (i, l) in layers.iter().enumerate() {
            let (out, inp) = l.weights.dim();
            if l.bias.len() != out {
                return Err(Error::DimensionMismatch(format!("layer {i}: bias length {} for {out} outputs", l.bias.len())));
            }
            if i == 0 {
                dims.push(inp);
            } else if dims[i] != inp {
                return Err(Error::DimensionMismatch(format!("layer {i} expects {inp} inputs, gets {}", dims[i])));
            }
            dims.push(out);
        }
        check_dims(&dims, leaky_slope)?;
        if layers.iter().any(|l| l.weights.iter().chain(l.bias.iter()).any(|v| !v.is_finite())) {
            return Err(Error::InvalidArgument("non-finite model parameter".into()));
        }
        Ok(MlpModel { layer_dims: dims, leaky_slope, layers })
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    pub fn leaky_slope(&self) -> f64 {
        self.leaky_slope
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    fn leaky(&self, z: f64) -> f64 {
        if z > 0.0 {
            z
        } else {
            self.leaky_slope * z
        }
    }

    fn check_batch(&self, inputs: &ArrayView2<f64>) -> Result<()> {
        if inputs.ncols() != self.input_dim() {
            return Err(Error::DimensionMismatch(format!(
                "input length {} but model expects {}",
                inputs.ncols(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    fn trace(&self, inputs: ArrayView2<f64>) -> Trace {
        let mut activations = vec![inputs.to_owned()];
        let mut pre = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let z = activations[i].dot(&layer.weights.t()) + &layer.bias;
            if i + 1 < self.layers.len() {
                activations.push(z.mapv(|v| self.leaky(v)));
            }
            pre.push(z);
        }
        Trace { activations, pre }
    }

    /// Batched forward pass; one row per sample.
    pub fn forward_batch(&self, inputs: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_batch(&inputs)?;
        Ok(self.trace(inputs).pre.pop().expect("model has at least one layer"))
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let row = ArrayView2::from_shape((1, x.len()), x).expect("contiguous slice");
        Ok(self.forward_batch(row)?.into_raw_vec_and_offset().0)
    }

    /// Mean squared error over batch and outputs.
    pub fn loss(&self, inputs: ArrayView2<f64>, targets: ArrayView2<f64>) -> Result<f64> {
        let out = self.forward_batch(inputs)?;
        check_targets(&out, &targets)?;
        Ok(mse(&out, &targets))
    }

    /// Loss and its gradient by backpropagation.
    pub fn loss_and_grad(&self, inputs: ArrayView2<f64>, targets: ArrayView2<f64>) -> Result<(f64, Gradients)> {
        self.check_batch(&inputs)?;
        if inputs.nrows() == 0 {
            return Err(Error::EmptyBatch);
        }
        let trace = self.trace(inputs);
        let out = trace.pre.last().unwrap();
        check_targets(out, &targets)?;
        let loss = mse(out, &targets);

        let scale = 2.0 / out.len() as f64;
        let mut delta = (out - &targets).mapv(|d| d * scale);
        let mut grads: Vec<Layer> = Vec::with_capacity(self.layers.len());
        for i in (0..self.layers.len()).rev() {
            let weights = delta.t().dot(&trace.activations[i]);
            let bias = delta.sum_axis(Axis(0));
            if i > 0 {
                let mut upstream = delta.dot(&self.layers[i].weights);
                let slope = self.leaky_slope;
                Zip::from(&mut upstream).and(&trace.pre[i - 1]).for_each(|g, &z| {
                    if z <= 0.0 {
                        *g *= slope;
                    }
                });
                delta = upstream;
            }
            grads.push(Layer { weights, bias });
        }
        grads.reverse();
        Ok((loss, Gradients { layers: grads }))
    }

    /// Deterministic SHA-256 over the checkpoint encoding of the parameters.
    pub fn parameter_hash(&self) -> String {
        let json = serde_json::to_vec(&Checkpoint::from_model(self)).expect("model serializes");
        hex::encode(Sha256::digest(&json))
    }
}

fn check_targets(out: &Array2<f64>, targets: &ArrayView2<f64>) -> Result<()> {
    if out.dim() != targets.dim() {
        return Err(Error::DimensionMismatch(format!(
            "targets {:?} vs outputs {:?}",
            targets.dim(),
            out.dim()
        )));
    }
    Ok(())
}

fn mse(out: &Array2<f64>, targets: &ArrayView2<f64>) -> f64 {
    let mut acc = 0.0;
    Zip::from(out).and(targets).for_each(|a, b| acc += (a - b) * (a - b));
    acc / out.len() as f64
}

/// Convenience over [`MlpModel::forward`].
pub fn forward(model: &MlpModel, x: &FeatureVector) -> Result<Vec<f64>> {
    model.forward(x.values())
}

/// Adam moments and step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first: Vec<Layer>,
    pub second: Vec<Layer>,
    pub t: u64,
}

impl AdamState {
    pub fn new(model: &MlpModel) -> Self {
        let zeros: Vec<Layer> = model.layers.iter().map(Layer::zeros_like).collect();
        AdamState { first: zeros.clone(), second: zeros, t: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Loss {
    Mse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub train_fraction: f64,
    pub seed: Seed,
    pub loss: Loss,
    pub hidden_dims: Vec<usize>,
    pub leaky_slope: f64,
    /// Stop after this many epochs without a new best validation loss.
    pub patience: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 64,
            max_epochs: 100_000,
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            train_fraction: 0.8,
            seed: 0,
            loss: Loss::Mse,
            hidden_dims: vec![256, 256],
            leaky_slope: 0.01,
            patience: Some(200),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: String| Err(Error::InvalidArgument(what));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if self.max_epochs == 0 {
            return bad("max_epochs must be at least 1".into());
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return bad(format!("train_fraction {} outside (0, 1)", self.train_fraction));
        }
        for (name, b) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return bad(format!("{name} {b} outside (0, 1)"));
            }
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite() && self.adam_eps > 0.0) {
            return bad("learning_rate and adam_eps must be positive".into());
        }
        if self.patience == Some(0) {
            return bad("patience must be at least 1".into());
        }
        check_dims(&[1, 1], self.leaky_slope)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config: TrainConfig = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        config.validate()?;
        Ok(config)
    }
}

/// One bias-corrected Adam update; increments `state.t`.
pub fn adam_step(model: &mut MlpModel, grads: &Gradients, state: &mut AdamState, config: &TrainConfig) -> Result<()> {
    let shapes_ok = grads.layers.len() == model.layers.len()
        && state.first.len() == model.layers.len()
        && model.layers.iter().zip(&grads.layers).zip(&state.first).zip(&state.second).all(
            |(((p, g), m), v)| p.same_shape(g) && p.same_shape(m) && p.same_shape(v),
        );
    if !shapes_ok {
        return Err(Error::DimensionMismatch("gradients or optimizer state do not match the model".into()));
    }
    state.t += 1;
    let (b1, b2) = (config.adam_beta1, config.adam_beta2);
    let c1 = 1.0 - b1.powi(state.t as i32);
    let c2 = 1.0 - b2.powi(state.t as i32);
    let (lr, eps) = (config.learning_rate, config.adam_eps);
    let update = |p: &mut f64, g: &f64, m: &mut f64, v: &mut f64| {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= lr * m_hat / (v_hat.sqrt() + eps);
    };
    for (((p, g), m), v) in model.layers.iter_mut().zip(&grads.layers).zip(&mut state.first).zip(&mut state.second) {
        Zip::from(&mut p.weights).and(&g.weights).and(&mut m.weights).and(&mut v.weights).for_each(update);
        Zip::from(&mut p.bias).and(&g.bias).and(&mut m.bias).and(&mut v.bias).for_each(update);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters at the epoch with the lowest validation loss.
    pub model: MlpModel,
    pub history: Vec<EpochStats>,
    pub best_epoch: usize,
    pub train_indices: Vec<usize>,
    pub val_indices: Vec<usize>,
}

fn stack(rows: &[&[f64]]) -> Result<Array2<f64>> {
    let width = rows.first().map_or(0, |r| r.len());
    if rows.iter().any(|r| r.len() != width) {
        return Err(Error::DimensionMismatch("rows of unequal length".into()));
    }
    let flat: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
    Ok(Array2::from_shape_vec((rows.len(), width), flat).expect("shape checked"))
}

/// Seeded split of `n` items: a shuffled index list cut at
/// `round(train_fraction * n)`, clamped so both parts are non-empty.
pub fn split_indices(n: usize, train_fraction: f64, seed: Seed) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = ((train_fraction * n as f64).round() as usize).clamp(1, n.saturating_sub(1).max(1));
    let val = idx.split_off(n_train);
    (idx, val)
}

/// Splits `samples` by `config.seed` and trains on them.
pub fn train(samples: &[(FeatureVector, Spd)], config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    if samples.len() < 2 {
        return Err(Error::InvalidArgument("training needs at least 2 samples".into()));
    }
    let (train_idx, val_idx) = split_indices(samples.len(), config.train_fraction, config.seed);
    let rows = |idx: &[usize]| -> Result<(Array2<f64>, Array2<f64>)> {
        let x: Vec<&[f64]> = idx.iter().map(|&i| samples[i].0.values()).collect();
        let y: Vec<&[f64]> = idx.iter().map(|&i| samples[i].1.power()).collect();
        Ok((stack(&x)?, stack(&y)?))
    };
    let (tx, ty) = rows(&train_idx)?;
    let (vx, vy) = rows(&val_idx)?;
    let (model, history, best_epoch) = fit(tx.view(), ty.view(), vx.view(), vy.view(), config)?;
    Ok(TrainOutcome { model, history, best_epoch, train_indices: train_idx, val_indices: val_idx })
}

/// Mini-batch Adam on explicit train/validation matrices. Returns the
/// best-validation model, per-epoch history and the best epoch (1-based).
pub fn fit(
    train_x: ArrayView2<f64>,
    train_y: ArrayView2<f64>,
    val_x: ArrayView2<f64>,
    val_y: ArrayView2<f64>,
    config: &TrainConfig,
) -> Result<(MlpModel, Vec<EpochStats>, usize)> {
    config.validate()?;
    if train_x.nrows() == 0 || train_x.nrows() != train_y.nrows() || val_x.nrows() != val_y.nrows() {
        return Err(Error::DimensionMismatch("feature and target counts differ".into()));
    }
    if val_x.nrows() > 0 && (val_x.ncols() != train_x.ncols() || val_y.ncols() != train_y.ncols()) {
        return Err(Error::DimensionMismatch("validation and training widths differ".into()));
    }
    let mut dims = vec![train_x.ncols()];
    dims.extend(&config.hidden_dims);
    dims.push(train_y.ncols());
    let mut model = init_model(&dims, config.leaky_slope, config.seed)?;
    let mut state = AdamState::new(&model);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x05EE_D0FB_A7C4);

    let n = train_x.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = Vec::new();
    let mut best = (f64::INFINITY, model.clone(), 0usize);
    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let bx = train_x.select(Axis(0), chunk);
            let by = train_y.select(Axis(0), chunk);
            let (loss, grads) = model.loss_and_grad(bx.view(), by.view())?;
            loss_sum += loss * chunk.len() as f64;
            adam_step(&mut model, &grads, &mut state, config)?;
        }
        let train_loss = loss_sum / n as f64;
        if !train_loss.is_finite() {
            return Err(Error::InvalidArgument(format!("training diverged at epoch {epoch}")));
        }
        let val_loss = if val_x.nrows() > 0 { model.loss(val_x, val_y)? } else { train_loss };
        history.push(EpochStats { epoch, train_loss, val_loss });
        if val_loss < best.0 {
            best = (val_loss, model.clone(), epoch);
        }
        if config.patience.is_some_and(|p| epoch - best.2 >= p) {
            break;
        }
    }
    Ok((best.1, history, best.2))
}

/// Forward pass, negatives clamped to zero, then peak-normalized.
pub fn predict_spd(model: &MlpModel, features: &FeatureVector, grid: &SpectralGrid) -> Result<Spd> {
    if model.output_dim() != grid.n_bins {
        return Err(Error::DimensionMismatch(format!(
            "model predicts {} bins, grid has {}",
            model.output_dim(),
            grid.n_bins
        )));
    }
    let out: Vec<f64> = model.forward(features.values())?.into_iter().map(|v| v.max(0.0)).collect();
    let power = normalize_samples(out).map_err(|_| Error::DegeneratePrediction)?;
    Spd::new(*grid, power)
}

/// JSON checkpoint layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub layer_dims: Vec<usize>,
    pub leaky_slope: f64,
    /// Per layer, row-major `out x in`.
    pub weights: Vec<Vec<Vec<f64>>>,
    pub biases: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<SpectralGrid>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_config: Option<TrainConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub best_epoch: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_metrics: Option<Metrics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub val_metrics: Option<Metrics>,
}

impl Checkpoint {
    pub fn from_model(model: &MlpModel) -> Self {
        Checkpoint {
            layer_dims: model.layer_dims.clone(),
            leaky_slope: model.leaky_slope,
            weights: model.layers.iter().map(|l| l.weights.outer_iter().map(|r| r.to_vec()).collect()).collect(),
            biases: model.layers.iter().map(|l| l.bias.to_vec()).collect(),
            grid: None,
            train_config: None,
            best_epoch: None,
            train_metrics: None,
            val_metrics: None,
        }
    }

    pub fn to_model(&self) -> Result<MlpModel> {
        if self.weights.len() != self.biases.len() || self.weights.len() + 1 != self.layer_dims.len() {
            return Err(Error::DimensionMismatch("checkpoint layer count inconsistent".into()));
        }
        let layers = self
            .weights
            .iter()
            .zip(&self.biases)
            .map(|(w, b)| {
                let rows: Vec<&[f64]> = w.iter().map(Vec::as_slice).collect();
                Ok(Layer { weights: stack(&rows)?, bias: Array1::from(b.clone()) })
            })
            .collect::<Result<Vec<_>>>()?;
        let model = MlpModel::from_layers(self.leaky_slope, layers)?;
        if model.layer_dims != self.layer_dims {
            return Err(Error::DimensionMismatch(format!(
                "checkpoint declares {:?}, weights imply {:?}",
                self.layer_dims, model.layer_dims
            )));
        }
        Ok(model)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("checkpoint serializes") + "\n"
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn random_batch(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_simple_fn((rows, cols), || 2.0 * rng.random::<f64>() - 1.0)
    }

    #[test]
    fn init_deterministic_and_bounded() {
        let dims = [5, 7, 3];
        let a = init_model(&dims, 0.01, 3).unwrap();
        assert_eq!(a, init_model(&dims, 0.01, 3).unwrap());
        assert_ne!(a, init_model(&dims, 0.01, 4).unwrap());
        for (l, w) in a.layers().iter().zip(dims.windows(2)) {
            assert!(l.bias.iter().all(|b| *b == 0.0));
            let bound = (6.0 / (w[0] + w[1]) as f64).sqrt();
            assert!(l.weights.iter().all(|v| v.abs() <= bound));
        }
        assert!(init_model(&[5], 0.01, 0).is_err());
        assert!(init_model(&[5, 0, 2], 0.01, 0).is_err());
        assert!(init_model(&[5, 2], 1.5, 0).is_err());
    }

    #[test]
    fn forward_examples() {
        let mut m = init_model(&[3, 4, 2], 0.01, 1).unwrap();
        for l in m.layers_mut() {
            l.weights.fill(0.0);
        }
        assert_eq!(m.forward(&[1.0, -2.0, 3.0]).unwrap(), vec![0.0, 0.0]);

        let eye = MlpModel::from_layers(0.01, vec![Layer { weights: Array2::eye(3), bias: Array1::zeros(3) }]).unwrap();
        assert_eq!(eye.forward(&[0.5, 2.0, 0.0]).unwrap(), vec![0.5, 2.0, 0.0]);

        // 1 -> 1 -> 1 with unit weights: the hidden unit sees -1.
        let unit = || Layer { weights: array![[1.0]], bias: array![0.0] };
        let net = MlpModel::from_layers(0.01, vec![unit(), unit()]).unwrap();
        assert!((net.forward(&[-1.0]).unwrap()[0] + 0.01).abs() < 1e-18);
        assert!(net.forward(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn zero_loss_at_target() {
        let m = init_model(&[4, 6, 3], 0.01, 2).unwrap();
        let x = random_batch(5, 4, 8);
        let y = m.forward_batch(x.view()).unwrap();
        let (loss, g) = m.loss_and_grad(x.view(), y.view()).unwrap();
        assert_eq!(loss, 0.0);
        assert!(g.layers.iter().all(|l| l.weights.iter().chain(l.bias.iter()).all(|v| *v == 0.0)));
    }

    #[test]
    fn scalar_loss_gradient() {
        // Single linear unit: pred p = w x + b.
        let m = MlpModel::from_layers(0.01, vec![Layer { weights: array![[0.7]], bias: array![0.2] }]).unwrap();
        let (x, t) = (array![[2.0]], array![[1.0]]);
        let p = 0.7 * 2.0 + 0.2;
        let (loss, g) = m.loss_and_grad(x.view(), t.view()).unwrap();
        assert!((loss - (p - 1.0) * (p - 1.0)).abs() < 1e-15);
        assert!((g.layers[0].bias[0] - 2.0 * (p - 1.0)).abs() < 1e-15);
        assert!((g.layers[0].weights[[0, 0]] - 2.0 * (p - 1.0) * 2.0).abs() < 1e-15);
    }

    #[test]
    fn empty_batch_rejected() {
        let m = init_model(&[2, 2], 0.01, 0).unwrap();
        let e = Array2::<f64>::zeros((0, 2));
        assert!(matches!(m.loss_and_grad(e.view(), e.view()), Err(Error::EmptyBatch)));
    }

    /// Central differences, h = 1e-5. Relative error uses a 1e-6 floor on
    /// the denominator so vanishing components compare absolutely.
    fn max_grad_error(m: &MlpModel, x: &Array2<f64>, y: &Array2<f64>) -> f64 {
        let (_, g) = m.loss_and_grad(x.view(), y.view()).unwrap();
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for li in 0..m.layers().len() {
            let n_w = m.layers()[li].weights.len();
            let n_b = m.layers()[li].bias.len();
            for k in 0..(n_w + n_b) {
                let probe = |delta: f64| {
                    let mut p = m.clone();
                    let layer = &mut p.layers_mut()[li];
                    if k < n_w {
                        layer.weights.as_slice_mut().unwrap()[k] += delta;
                    } else {
                        layer.bias[k - n_w] += delta;
                    }
                    p.loss(x.view(), y.view()).unwrap()
                };
                let numeric = (probe(h) - probe(-h)) / (2.0 * h);
                let analytic = if k < n_w {
                    g.layers[li].weights.as_slice().unwrap()[k]
                } else {
                    g.layers[li].bias[k - n_w]
                };
                let err = (numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1e-6);
                worst = worst.max(err);
            }
        }
        worst
    }

    #[test]
    fn gradients_match_finite_differences() {
        let m = init_model(&[4, 8, 3], 0.01, 11).unwrap();
        let (x, y) = (random_batch(2, 4, 1), random_batch(2, 3, 2));
        let err = max_grad_error(&m, &x, &y);
        assert!(err < 1e-4, "max relative error {err}");
    }

    #[test]
    fn adam_first_step() {
        let mut m = MlpModel::from_layers(0.01, vec![Layer { weights: array![[0.0, 0.0]], bias: array![0.0] }]).unwrap();
        let mut state = AdamState::new(&m);
        let g = Gradients { layers: vec![Layer { weights: array![[0.5, -0.5]], bias: array![0.0] }] };
        adam_step(&mut m, &g, &mut state, &TrainConfig::default()).unwrap();
        // m_hat = 0.5, v_hat = 0.25: step = 1e-3 * 0.5 / (0.5 + 1e-8).
        let expected: f64 = -1e-3 * 0.5 / (0.5 + 1e-8);
        assert!((expected + 9.9999998e-4).abs() < 1e-12);
        assert!((m.layers()[0].weights[[0, 0]] - expected).abs() < 1e-15);
        assert_eq!(m.layers()[0].weights[[0, 1]], -m.layers()[0].weights[[0, 0]]);
        assert_eq!(m.layers()[0].bias[0], 0.0);
        assert_eq!(state.t, 1);
    }

    #[test]
    fn adam_zero_gradient_is_noop() {
        let mut m = init_model(&[3, 4, 2], 0.01, 5).unwrap();
        let before = m.clone();
        let mut state = AdamState::new(&m);
        let zero = Gradients { layers: m.layers().iter().map(Layer::zeros_like).collect() };
        adam_step(&mut m, &zero, &mut state, &TrainConfig::default()).unwrap();
        assert_eq!(m, before);
        assert_eq!(state.t, 1);
        let wrong = Gradients { layers: vec![] };
        assert!(adam_step(&mut m, &wrong, &mut state, &TrainConfig::default()).is_err());
    }

    #[test]
    fn split_sizes() {
        let (t, v) = split_indices(5000, 0.8, 1);
        assert_eq!((t.len(), v.len()), (4000, 1000));
        let mut all: Vec<usize> = t.iter().chain(&v).copied().collect();
        all.sort();
        assert_eq!(all, (0..5000).collect::<Vec<_>>());
        let (t, v) = split_indices(2, 0.99, 1);
        assert_eq!((t.len(), v.len()), (1, 1));
    }

    fn toy_samples(n: usize) -> Vec<(FeatureVector, Spd)> {
        let grid = SpectralGrid::new(400.0, 700.0, 5).unwrap();
        (0..n)
            .map(|i| {
                let x = random_batch(1, 6, i as u64).into_raw_vec_and_offset().0;
                let y: Vec<f64> = (0..5).map(|k| 0.5 + 0.4 * (x[k] * (k + 1) as f64).sin()).collect();
                (FeatureVector(x), Spd::new(grid, y).unwrap())
            })
            .collect()
    }

    #[test]
    fn training_deterministic_and_best_checkpoint() {
        let samples = toy_samples(20);
        let config = TrainConfig { batch_size: 4, max_epochs: 30, hidden_dims: vec![8], seed: 9, ..TrainConfig::default() };
        let a = train(&samples, &config).unwrap();
        let b = train(&samples, &config).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.history, b.history);
        assert_eq!((a.train_indices.len(), a.val_indices.len()), (16, 4));
        let best = a.history.iter().map(|h| h.val_loss).fold(f64::INFINITY, f64::min);
        assert_eq!(a.history[a.best_epoch - 1].val_loss, best);
        assert!(a.history.windows(2).all(|w| w[1].epoch == w[0].epoch + 1));
    }

    #[test]
    fn training_rejects_ragged_features() {
        let mut samples = toy_samples(4);
        samples[2].0 = FeatureVector(vec![0.0; 3]);
        assert!(train(&samples, &TrainConfig { max_epochs: 1, ..TrainConfig::default() }).is_err());
    }

    #[test]
    fn predict_constant_bias() {
        let grid = SpectralGrid::new(400.0, 700.0, 4).unwrap();
        let layer = Layer { weights: Array2::zeros((4, 3)), bias: Array1::from_elem(4, 0.3) };
        let m = MlpModel::from_layers(0.01, vec![layer]).unwrap();
        let spd = predict_spd(&m, &FeatureVector(vec![1.0, 2.0, 3.0]), &grid).unwrap();
        assert_eq!(spd.power(), &[1.0; 4]);

        let neg = Layer { weights: Array2::zeros((4, 3)), bias: Array1::from_elem(4, -0.3) };
        let m = MlpModel::from_layers(0.01, vec![neg]).unwrap();
        let err = predict_spd(&m, &FeatureVector(vec![1.0, 2.0, 3.0]), &grid).unwrap_err();
        assert_eq!(err.to_string(), "degenerate prediction");
    }

    #[test]
    fn checkpoint_round_trip() {
        let m = init_model(&[3, 5, 2], 0.02, 8).unwrap();
        let ck = Checkpoint::from_model(&m);
        let back: Checkpoint = serde_json::from_str(&ck.to_json()).unwrap();
        assert_eq!(back.to_model().unwrap(), m);
        assert_eq!(back.weights[0].len(), 5);
        assert_eq!(back.weights[0][0].len(), 3);
        let mut broken = back.clone();
        broken.layer_dims = vec![3, 4, 2];
        assert!(broken.to_model().is_err());
        assert_eq!(m.parameter_hash(), init_model(&[3, 5, 2], 0.02, 8).unwrap().parameter_hash());
    }
}
