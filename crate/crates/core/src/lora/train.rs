use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::model::{DropoutMask, ModelDims, ToyLm};
use super::{positions, LoraError, LrSchedule, Result};

/// Improvement threshold for early stopping.
pub const MIN_DELTA: f64 = 1e-6;

const STREAM_INIT: u64 = 0;
const STREAM_SHUFFLE: u64 = 1;
const STREAM_DROPOUT: u64 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub clip_norm: f64,
    pub lr_schedule: LrSchedule,
    pub seed: u64,
    pub weight_decay: f64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(LoraError::InvalidArgument(m));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate must be positive, got {}", self.learning_rate));
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.patience == 0 {
            return bad("batch_size, max_epochs and patience must be positive".into());
        }
        if self.patience > self.max_epochs {
            return bad(format!("patience {} exceeds max_epochs {}", self.patience, self.max_epochs));
        }
        if self.clip_norm.is_nan() || self.clip_norm <= 0.0 {
            return bad(format!("clip_norm must be positive, got {}", self.clip_norm));
        }
        if self.weight_decay.is_nan() || self.weight_decay < 0.0 {
            return bad(format!("weight decay must be non-negative, got {}", self.weight_decay));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdapterSpec {
    pub rank: usize,
    pub alpha: f64,
    pub dropout: f64,
}

impl AdapterSpec {
    pub fn scale(&self) -> f64 {
        self.alpha / self.rank as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainPreset {
    FewShot,
    OneShot,
}

/// Preset hyperparameters together with the number of training sequences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PresetSpec {
    pub config: TrainConfig,
    pub adapter: AdapterSpec,
    pub train_samples: usize,
}

impl TrainPreset {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "few-shot" => Some(Self::FewShot),
            "one-shot" => Some(Self::OneShot),
            _ => None,
        }
    }

    pub fn spec(self, seed: u64) -> PresetSpec {
        let (rank, alpha, lr, batch, max_epochs, train_samples) = match self {
            TrainPreset::FewShot => (64, 32.0, 1e-4, 4, 50, 80),
            TrainPreset::OneShot => (8, 4.0, 1e-3, 1, 20, 8),
        };
        PresetSpec {
            config: TrainConfig {
                learning_rate: lr,
                batch_size: batch,
                max_epochs,
                patience: 5,
                clip_norm: 1.0,
                lr_schedule: LrSchedule::Cosine,
                seed,
                weight_decay: 0.01,
            },
            adapter: AdapterSpec { rank, alpha, dropout: 0.1 },
            train_samples,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenDataset {
    pub train: Vec<Vec<usize>>,
    pub val: Vec<Vec<usize>>,
}

impl TokenDataset {
    /// Sequences following a fixed random successor map, with `noise`
    /// probability of a uniformly random next token.
    pub fn synthetic(vocab: usize, n_train: usize, n_val: usize, seq_len: usize, noise: f64, seed: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut successor: Vec<usize> = (0..vocab).collect();
        successor.shuffle(&mut rng);
        let mut gen = |n: usize| -> Vec<Vec<usize>> {
            (0..n)
                .map(|_| {
                    let mut seq = vec![rng.random_range(0..vocab)];
                    while seq.len() < seq_len {
                        let prev = *seq.last().expect("non-empty");
                        let next = if rng.random::<f64>() < noise { rng.random_range(0..vocab) } else { successor[prev] };
                        seq.push(next);
                    }
                    seq
                })
                .collect()
        };
        let train = gen(n_train);
        let val = gen(n_val);
        Self { train, val }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    EarlyStop,
    MaxEpochs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub lr: f64,
    pub grad_norm: f64,
    pub clipped_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub initial_train_loss: f64,
    pub initial_val_loss: f64,
    pub epochs: Vec<EpochRecord>,
    pub steps: Vec<StepRecord>,
    pub stop_epoch: usize,
    pub stop_reason: Option<StopReason>,
}

impl TrainTrace {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss,lr\n");
        for e in &self.epochs {
            let _ = writeln!(out, "{},{},{},{}", e.epoch, e.train_loss, e.val_loss, e.lr);
        }
        out
    }

    pub fn summary_json(&self, config_echo: serde_json::Value) -> serde_json::Value {
        serde_json::json!({
            "stop_epoch": self.stop_epoch,
            "stop_reason": self.stop_reason,
            "initial_train_loss": self.initial_train_loss,
            "final_train_loss": self.epochs.last().map(|e| e.train_loss),
            "final_val_loss": self.epochs.last().map(|e| e.val_loss),
            "config": config_echo,
        })
    }
}

/// Patience counter over validation losses.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    since_best: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self { patience, best: f64::INFINITY, since_best: 0 }
    }

    /// Records one epoch; returns true when training should stop.
    pub fn observe(&mut self, val_loss: f64) -> bool {
        if val_loss < self.best - MIN_DELTA {
            self.best = val_loss;
            self.since_best = 0;
        } else {
            self.since_best += 1;
        }
        self.since_best >= self.patience
    }

    pub fn best(&self) -> f64 {
        self.best
    }
}

/// First 1-based epoch at which early stopping fires on `val_losses`.
pub fn early_stop_epoch(val_losses: &[f64], patience: usize) -> Option<usize> {
    let mut es = EarlyStopping::new(patience);
    val_losses.iter().position(|&v| es.observe(v)).map(|i| i + 1)
}

fn rng_stream(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Builds a seeded toy model and trains its adapter.
pub fn train_toy(config: &TrainConfig, data: &TokenDataset, dims: ModelDims, spec: AdapterSpec) -> Result<(TrainTrace, ToyLm)> {
    config.validate()?;
    let mut init = rng_stream(config.seed, STREAM_INIT);
    let mut model = ToyLm::random(dims, spec.rank, spec.alpha, spec.dropout, &mut init)?;
    let trace = train(&mut model, config, data)?;
    Ok((trace, model))
}

/// SGD with decoupled weight decay on the adapter factors only.
pub fn train(model: &mut ToyLm, config: &TrainConfig, data: &TokenDataset) -> Result<TrainTrace> {
    config.validate()?;
    if data.train.is_empty() || positions(&data.train).is_empty() {
        return Err(LoraError::EmptyInput("train split".into()));
    }
    if data.val.is_empty() || positions(&data.val).is_empty() {
        return Err(LoraError::EmptyInput("val split".into()));
    }
    let mut shuffle_rng = rng_stream(config.seed, STREAM_SHUFFLE);
    let mut dropout_rng = rng_stream(config.seed, STREAM_DROPOUT);
    let steps_per_epoch = data.train.len().div_ceil(config.batch_size);
    let total_steps = steps_per_epoch * config.max_epochs;
    let mut trace = TrainTrace {
        initial_train_loss: model.loss(&data.train, None)?,
        initial_val_loss: model.loss(&data.val, None)?,
        epochs: Vec::new(),
        steps: Vec::new(),
        stop_epoch: 0,
        stop_reason: None,
    };
    let mut stopper = EarlyStopping::new(config.patience);
    let mut order: Vec<usize> = (0..data.train.len()).collect();
    let mut step = 0usize;
    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut shuffle_rng);
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<Vec<usize>> = chunk.iter().map(|&i| data.train[i].clone()).collect();
            let n_pos = positions(&batch).len();
            if n_pos == 0 {
                step += 1;
                continue;
            }
            let lr = config.lr_schedule.lr_at(step, total_steps, config.learning_rate)?;
            let rate = model.adapter().dropout_rate();
            let mask = DropoutMask::sample(n_pos, model.dims().d, rate, &mut dropout_rng);
            let (_, mut grads) = model.loss_and_gradients(&batch, Some(&mask))?;
            let grad_norm = grads.global_norm();
            if grad_norm > config.clip_norm {
                grads.scale(config.clip_norm / grad_norm);
            }
            let clipped_norm = grads.global_norm();
            let decay = 1.0 - lr * config.weight_decay;
            let (a, b) = model.adapter_mut().factors_mut();
            for (p, g) in a.data_mut().iter_mut().zip(grads.a.data()) {
                *p = decay * *p - lr * g;
            }
            for (p, g) in b.data_mut().iter_mut().zip(grads.b.data()) {
                *p = decay * *p - lr * g;
            }
            trace.steps.push(StepRecord { step, lr, grad_norm, clipped_norm });
            step += 1;
        }
        let train_loss = model.loss(&data.train, None)?;
        let val_loss = model.loss(&data.val, None)?;
        let lr = config.lr_schedule.lr_at(step, total_steps, config.learning_rate)?;
        trace.epochs.push(EpochRecord { epoch, train_loss, val_loss, lr });
        trace.stop_epoch = epoch;
        if !train_loss.is_finite() || !val_loss.is_finite() {
            return Err(LoraError::Divergence { epoch, trace: Box::new(trace) });
        }
        if stopper.observe(val_loss) {
            trace.stop_reason = Some(StopReason::EarlyStop);
            return Ok(trace);
        }
    }
    trace.stop_reason = Some(StopReason::MaxEpochs);
    Ok(trace)
}

/// Steps per epoch for a given split size.
pub fn steps_per_epoch(train_len: usize, batch_size: usize) -> usize {
    train_len.div_ceil(batch_size)
}
