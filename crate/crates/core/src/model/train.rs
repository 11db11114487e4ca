//! Mini-batch training with Adam and step decay, plus evaluation.

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::metrics::Metrics;
use super::mlp::{
    cross_entropy, cross_entropy_with_grad, forward, init_model_with, predict_logits, Dropout, Mode, ModelParams,
    DEFAULT_LEAKY_SLOPE,
};
use super::optim::{Adam, AdamConfig, StepLr};
use super::ModelError;
use crate::dataset::LabeledMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub lr_step: usize,
    pub lr_gamma: f64,
    pub dropout: f64,
    pub leaky_slope: f64,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 16,
            lr: 1e-3,
            lr_step: 5,
            lr_gamma: 0.5,
            dropout: 0.3,
            leaky_slope: DEFAULT_LEAKY_SLOPE,
            adam: AdamConfig::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let positive = [
            ("epochs", self.epochs as f64),
            ("batch_size", self.batch_size as f64),
            ("lr", self.lr),
            ("lr_step", self.lr_step as f64),
            ("lr_gamma", self.lr_gamma),
            ("leaky_slope", self.leaky_slope),
            ("adam.eps", self.adam.eps),
        ];
        if let Some((name, v)) = positive.iter().find(|(_, v)| !(v.is_finite() && *v > 0.0)) {
            return Err(ModelError::Config(format!("{name} must be positive, got {v}")));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(ModelError::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        for (name, b) in [("adam.beta1", self.adam.beta1), ("adam.beta2", self.adam.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(ModelError::Config(format!("{name} {b} outside [0, 1)")));
            }
        }
        Ok(())
    }

    pub fn schedule(&self) -> StepLr {
        StepLr {
            base: self.lr,
            step: self.lr_step,
            gamma: self.lr_gamma,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    /// Eval-mode loss on the full training set after the epoch.
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub val_acc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were returned.
    pub best_epoch: usize,
}

impl History {
    /// `epoch,lr,train_loss,val_loss,val_acc`; missing validation values are empty.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,lr,train_loss,val_loss,val_acc\n");
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.epochs {
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                r.epoch,
                r.lr,
                r.train_loss,
                opt(r.val_loss),
                opt(r.val_acc)
            ));
        }
        s
    }
}

/// Partitions a shuffled index list into batches. A trailing batch of one
/// row is merged into its predecessor since batch statistics need two rows.
fn batches(order: &[usize], size: usize) -> Vec<&[usize]> {
    let mut out: Vec<&[usize]> = order.chunks(size).collect();
    if out.len() > 1 && out.last().is_some_and(|b| b.len() == 1) {
        out.pop();
        let start = (out.len() - 1) * size;
        *out.last_mut().expect("at least one batch") = &order[start..];
    }
    out
}

fn select_rows(x: &Array2<f64>, idx: &[usize]) -> Array2<f64> {
    x.select(Axis(0), idx)
}

fn data_loss(params: &ModelParams, data: &LabeledMatrix) -> Result<f64, ModelError> {
    Ok(cross_entropy(&predict_logits(params, &data.features)?, &data.labels))
}

/// Trains a fresh network on already standardized data.
///
/// Returns the parameters from the epoch with the lowest validation loss
/// (training loss when `val` is absent or empty).
pub fn train(
    train_data: &LabeledMatrix,
    val_data: Option<&LabeledMatrix>,
    cfg: &TrainConfig,
) -> Result<(ModelParams, History), ModelError> {
    cfg.validate()?;
    if train_data.len() < 2 {
        return Err(ModelError::EmptyData);
    }
    let val_data = val_data.filter(|v| !v.is_empty());
    if let Some(v) = val_data {
        if v.dim() != train_data.dim() {
            return Err(ModelError::Shape(format!(
                "validation has {} features, training has {}",
                v.dim(),
                train_data.dim()
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let init_seed: u64 = rng.random();
    let mut params = init_model_with(train_data.dim(), init_seed, cfg.leaky_slope)?;
    let mut adam = Adam::new(&params.trainable_sizes(), cfg.adam);
    let schedule = cfg.schedule();
    let mut order: Vec<usize> = (0..train_data.len()).collect();
    let mut history = History::default();
    let mut best: Option<(f64, ModelParams)> = None;

    for epoch in 0..cfg.epochs {
        let lr = schedule.lr(epoch);
        order.shuffle(&mut rng);
        for (bi, idx) in batches(&order, cfg.batch_size).into_iter().enumerate() {
            let x = select_rows(&train_data.features, idx);
            let y: Vec<usize> = idx.iter().map(|&i| train_data.labels[i]).collect();
            let dropout = Dropout {
                rate: cfg.dropout,
                seed: rng.random(),
            };
            let pass = forward(&params, &x, Mode::Train, dropout)?;
            let (loss, d_logits) = cross_entropy_with_grad(&pass.logits, &y);
            if !loss.is_finite() {
                return Err(ModelError::NonFiniteLoss { epoch, batch: bi });
            }
            let grads = pass.backward(&params, &d_logits);
            pass.update_running_stats(&mut params);
            adam.step(&mut params.trainable_mut(), &grads, lr);
        }

        let train_loss = data_loss(&params, train_data)?;
        if !train_loss.is_finite() {
            return Err(ModelError::NonFiniteLoss { epoch, batch: usize::MAX });
        }
        let (val_loss, val_acc) = match val_data {
            Some(v) => {
                let logits = predict_logits(&params, &v.features)?;
                let acc = Metrics::from_predictions(&v.labels, &argmax(&logits)).map(|m| m.accuracy);
                (Some(cross_entropy(&logits, &v.labels)), acc)
            }
            None => (None, None),
        };
        history.epochs.push(EpochRecord {
            epoch,
            lr,
            train_loss,
            val_loss,
            val_acc,
        });
        let score = val_loss.unwrap_or(train_loss);
        if best.as_ref().is_none_or(|(b, _)| score < *b) {
            best = Some((score, params.clone()));
            history.best_epoch = epoch;
        }
    }
    let (_, best_params) = best.expect("at least one epoch");
    Ok((best_params, history))
}

pub(crate) fn argmax(logits: &Array2<f64>) -> Vec<usize> {
    logits
        .rows()
        .into_iter()
        .map(|r| usize::from(r[1] > r[0]))
        .collect()
}

/// Eval-mode metrics on standardized data.
pub fn evaluate(params: &ModelParams, data: &LabeledMatrix) -> Result<Metrics, ModelError> {
    if data.is_empty() {
        return Err(ModelError::EmptyData);
    }
    let logits = predict_logits(params, &data.features)?;
    Metrics::from_predictions(&data.labels, &argmax(&logits)).ok_or(ModelError::EmptyData)
}
