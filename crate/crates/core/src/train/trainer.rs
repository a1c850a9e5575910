use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::{batch_order, SampleSource};
use crate::error::{Error, Result};
use crate::graph::{Gradients, ModelGraph, DEFAULT_DROPOUT};
use crate::ops::cross_entropy_loss;
use crate::train::metrics::evaluate;
use crate::train::optimizer::{Optimizer, OptimizerSpec};

const DROPOUT_STREAM_KEY: u64 = 0x5DEE_CE66_D1CE_4E5B;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f32,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub optimizer: OptimizerSpec,
    pub val_fraction: f64,
    pub dropout_rate: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            epochs: 10,
            batch_size: 16,
            seed: 0,
            optimizer: OptimizerSpec::default(),
            val_fraction: 0.2,
            dropout_rate: DEFAULT_DROPOUT,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::arg(format!("learning rate {} is not usable", self.learning_rate)));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::arg("epochs and batch size must be positive"));
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return Err(Error::arg(format!("validation fraction {} not in (0, 1)", self.val_fraction)));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::arg(format!("dropout rate {} not in [0, 1)", self.dropout_rate)));
        }
        self.optimizer.validate()
    }
}

/// Metrics of one completed epoch. `val_acc` is absent without a validation set.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_acc: Option<f64>,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
}

impl History {
    pub fn last(&self) -> Option<&EpochRecord> {
        self.epochs.last()
    }
}

struct SampleStep {
    loss: f64,
    correct: bool,
    grads: Gradients<f32>,
}

fn sample_step(model: &ModelGraph<f32>, data: &(impl SampleSource + ?Sized), index: usize, rng: &mut ChaCha8Rng) -> Result<SampleStep> {
    let sample = data.load(index)?;
    let (probs, cache) = model.forward(&sample.pixels, true, rng)?;
    let (loss, grad) = cross_entropy_loss(&probs, sample.label)?;
    let grads = model.backward(&cache, &grad)?;
    Ok(SampleStep {
        loss: loss as f64,
        correct: probs.argmax() == sample.label,
        grads,
    })
}

/// Mini-batch training driver; one [`Trainer::run_epoch`] call per epoch.
pub struct Trainer<'m> {
    model: &'m mut ModelGraph<f32>,
    cfg: TrainConfig,
    optimizer: Box<dyn Optimizer>,
    epoch: usize,
}

impl<'m> Trainer<'m> {
    pub fn new(model: &'m mut ModelGraph<f32>, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        if model.dropout_rate() != cfg.dropout_rate {
            return Err(Error::arg(format!(
                "model was built with dropout {} but the config asks for {}",
                model.dropout_rate(),
                cfg.dropout_rate
            )));
        }
        let optimizer = cfg.optimizer.build();
        Ok(Trainer {
            model,
            cfg,
            optimizer,
            epoch: 0,
        })
    }

    /// Epochs completed so far.
    pub fn epochs_done(&self) -> usize {
        self.epoch
    }

    pub fn model(&self) -> &ModelGraph<f32> {
        self.model
    }

    pub fn run_epoch<T, V>(&mut self, train: &T, val: &V) -> Result<EpochRecord>
    where
        T: SampleSource + ?Sized,
        V: SampleSource + ?Sized,
    {
        if train.is_empty() {
            return Err(Error::arg("training set is empty"));
        }
        if self.cfg.batch_size > train.len() {
            return Err(Error::arg(format!(
                "batch size {} exceeds the {} training samples",
                self.cfg.batch_size,
                train.len()
            )));
        }
        let k = self.model.num_classes();
        if let Some(i) = (0..train.len()).find(|&i| train.label(i) >= k) {
            return Err(Error::Data(format!("training sample {i} has label {} >= {k}", train.label(i))));
        }
        let start = Instant::now();
        self.epoch += 1;
        let epoch = self.epoch;
        let order = batch_order(train.len(), self.cfg.batch_size, self.cfg.seed, epoch)?;
        let (mut loss_sum, mut correct) = (0.0f64, 0usize);
        let mut position = 0u64;
        for (b, batch) in order.iter().enumerate() {
            let model: &ModelGraph<f32> = self.model;
            let seed = self.cfg.seed ^ DROPOUT_STREAM_KEY;
            let steps: Vec<Result<SampleStep>> = batch
                .par_iter()
                .enumerate()
                .map(|(j, &i)| {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    rng.set_stream(((epoch as u64) << 32) | (position + j as u64));
                    sample_step(model, train, i, &mut rng)
                })
                .collect();
            position += batch.len() as u64;
            let mut total = Gradients::zeros_like(model);
            for step in steps {
                let step = step.map_err(|e| match e {
                    Error::Numeric { .. } => Error::Diverged { epoch, batch: b + 1 },
                    other => other,
                })?;
                if !step.loss.is_finite() {
                    return Err(Error::Diverged { epoch, batch: b + 1 });
                }
                loss_sum += step.loss;
                correct += usize::from(step.correct);
                total.add_assign(&step.grads);
            }
            total.scale(1.0 / batch.len() as f32);
            let grads = total.slices();
            let mut params = self.model.param_slices_mut();
            self.optimizer.step(&mut params, &grads, self.cfg.learning_rate)?;
        }
        let val_acc = if val.is_empty() {
            None
        } else {
            Some(evaluate(self.model, val)?.1.accuracy)
        };
        Ok(EpochRecord {
            epoch,
            train_loss: loss_sum / train.len() as f64,
            train_acc: correct as f64 / train.len() as f64,
            val_acc,
            seconds: start.elapsed().as_secs_f64(),
        })
    }
}

/// Runs `cfg.epochs` epochs, calling `on_epoch` after each.
pub fn train_with<T, V>(
    model: &mut ModelGraph<f32>,
    train_set: &T,
    val_set: &V,
    cfg: &TrainConfig,
    on_epoch: &mut dyn FnMut(&EpochRecord),
) -> Result<History>
where
    T: SampleSource + ?Sized,
    V: SampleSource + ?Sized,
{
    let mut trainer = Trainer::new(model, cfg.clone())?;
    let mut history = History::default();
    for _ in 0..cfg.epochs {
        let rec = trainer.run_epoch(train_set, val_set)?;
        on_epoch(&rec);
        history.epochs.push(rec);
    }
    Ok(history)
}

pub fn train<T, V>(model: &mut ModelGraph<f32>, train_set: &T, val_set: &V, cfg: &TrainConfig) -> Result<History>
where
    T: SampleSource + ?Sized,
    V: SampleSource + ?Sized,
{
    train_with(model, train_set, val_set, cfg, &mut |_| {})
}
