//! L1 objective, Adam, mini-batch epochs with early stopping, and
//! multi-seed trials.

mod adam;

pub use adam::Adam;

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::WindowSet;
use crate::diffcore::{Graph, Tensor, Var};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::model::{Forecaster, ParamStore};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub trials: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.001,
            weight_decay: 5e-4,
            batch_size: 32,
            max_epochs: 1500,
            patience: 200,
            seed: 0,
            trials: 10,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("train.learning_rate must be positive, got {}", self.learning_rate)));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::Config(format!("train.weight_decay must be >= 0, got {}", self.weight_decay)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("train.batch_size must be at least 1".into()));
        }
        if self.patience > self.max_epochs {
            return Err(Error::Config(format!(
                "train.patience {} exceeds train.max_epochs {}",
                self.patience, self.max_epochs
            )));
        }
        if self.trials == 0 {
            return Err(Error::Config("train.trials must be at least 1".into()));
        }
        Ok(())
    }

    /// The seeds of a trial set: `seed, seed+1, ...`.
    pub fn seeds(&self) -> Vec<u64> {
        (0..self.trials as u64).map(|k| self.seed + k).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean absolute error per entry over the epoch's batches (train mode).
    pub train_l1: f64,
    /// Mean absolute error per entry on the validation windows.
    pub val_l1: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_l1: f64,
    pub stopped_epoch: usize,
    pub learning_rate: f64,
}

/// Hooks called by [`train_model`].
pub trait TrainObserver {
    fn on_epoch(&mut self, _record: &EpochRecord) -> Result<()> {
        Ok(())
    }

    /// Called whenever validation improves, with the new best parameters.
    fn on_best(&mut self, _epoch: usize, _params: &ParamStore) -> Result<()> {
        Ok(())
    }
}

/// Observer that ignores everything.
pub struct Quiet;

impl TrainObserver for Quiet {}

/// `Σ |y − ŷ|` of an `N×1` prediction node against a target vector.
pub fn l1_loss_node(g: &mut Graph, prediction: Var, target: &[f64]) -> Result<Var> {
    let y = g.constant(Tensor::column(target));
    let diff = g.sub(prediction, y)?;
    Ok(g.sum_abs(diff))
}

/// `Σ |y − ŷ|` over matching flat vectors.
pub fn l1_loss(prediction: &[f64], target: &[f64]) -> Result<f64> {
    if prediction.len() != target.len() {
        return Err(Error::shape("l1_loss", &[prediction.len()], &[target.len()]));
    }
    Ok(prediction.iter().zip(target).map(|(p, y)| (y - p).abs()).sum())
}

/// Mixes seed components into one 64-bit seed (SplitMix64 finalizer).
pub fn derive_seed(parts: &[u64]) -> u64 {
    let mut z = 0x9E37_79B9_7F4A_7C15u64;
    for &p in parts {
        z = z.wrapping_add(p).wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}

/// Loss and gradients of one sample, in parameter order.
fn sample_gradients<M: Forecaster>(model: &M, input: &Tensor, target: &[f64], rng: Option<&mut ChaCha8Rng>) -> Result<(f64, Vec<Tensor>)> {
    let mut g = Graph::new();
    let p = model.params().bind(&mut g, true);
    let pred = model.forward(&mut g, &p, input, rng)?;
    let loss = l1_loss_node(&mut g, pred, target)?;
    g.backward(loss)?;
    let value = g.value(loss).item()?;
    Ok((value, p.vars().iter().map(|&v| g.grad(v)).collect()))
}

/// Summed L1 loss and gradients over a batch; samples are processed
/// under `exec` and reduced in batch order.
pub fn batch_gradients<M: Forecaster>(
    model: &M,
    set: &WindowSet,
    batch: &[usize],
    dropout_seed: Option<u64>,
    exec: Execution,
) -> Result<(f64, Vec<Tensor>)> {
    let results = exec.map(batch, |&i| {
        let sample = &set.samples[i];
        let mut rng = dropout_seed.map(|s| ChaCha8Rng::seed_from_u64(derive_seed(&[s, i as u64])));
        sample_gradients(model, &sample.input, &sample.target, rng.as_mut())
    });
    let mut total = 0.0;
    let mut sum: Option<Vec<Tensor>> = None;
    for r in results {
        let (loss, grads) = r?;
        total += loss;
        match sum.as_mut() {
            None => sum = Some(grads),
            Some(acc) => {
                for (a, g) in acc.iter_mut().zip(&grads) {
                    a.add_assign(g);
                }
            }
        }
    }
    let grads = sum.unwrap_or_else(|| model.params().iter().map(|p| Tensor::zeros(p.value.shape())).collect());
    Ok((total, grads))
}

/// Mean absolute error per entry of eval-mode predictions on `set`.
pub fn mean_l1<M: Forecaster>(model: &M, set: &WindowSet, exec: Execution) -> Result<f64> {
    let losses = exec.map(&set.samples, |s| l1_loss(&model.predict(&s.input)?, &s.target));
    let mut total = 0.0;
    for l in losses {
        total += l?;
    }
    Ok(total / (set.len() * set.num_locations()).max(1) as f64)
}

/// Trains `model` in place and returns it with the best validation
/// parameters restored.
pub fn train_model<M: Forecaster>(
    mut model: M,
    train: &WindowSet,
    val: &WindowSet,
    cfg: &TrainConfig,
    exec: Execution,
    observer: &mut impl TrainObserver,
) -> Result<(M, TrainReport)> {
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::Contract(format!(
            "training needs nonempty train and validation windows, got {} and {}",
            train.len(),
            val.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[cfg.seed, 0]));
    let mut opt = Adam::new(model.params(), cfg.learning_rate, cfg.weight_decay);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let entries = train.num_locations() as f64;

    let mut epochs = Vec::new();
    let mut best = (0usize, f64::INFINITY, model.params().clone());
    let mut since_best = 0usize;
    let mut stopped = 0usize;
    for epoch in 1..=cfg.max_epochs {
        let started = Instant::now();
        order.shuffle(&mut rng);
        let mut train_total = 0.0;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let dropout_seed = derive_seed(&[cfg.seed, epoch as u64, b as u64]);
            let (loss, grads) = batch_gradients(&model, train, batch, Some(dropout_seed), exec)?;
            if !loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
                return Err(Error::Numerical(format!(
                    "training loss became non-finite at epoch {epoch}; try a smaller learning rate than {}",
                    cfg.learning_rate
                )));
            }
            train_total += loss;
            opt.step(model.params_mut(), &grads);
        }
        let val_l1 = mean_l1(&model, val, exec)?;
        if !val_l1.is_finite() {
            return Err(Error::Numerical(format!(
                "validation loss became non-finite at epoch {epoch}; try a smaller learning rate than {}",
                cfg.learning_rate
            )));
        }
        let record = EpochRecord {
            epoch,
            train_l1: train_total / (train.len() as f64 * entries),
            val_l1,
            seconds: started.elapsed().as_secs_f64(),
        };
        observer.on_epoch(&record)?;
        epochs.push(record);
        stopped = epoch;
        if val_l1 < best.1 {
            best = (epoch, val_l1, model.params().clone());
            since_best = 0;
            observer.on_best(epoch, model.params())?;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
    }
    let (best_epoch, best_val_l1, best_params) = best;
    *model.params_mut() = best_params;
    Ok((
        model,
        TrainReport {
            epochs,
            best_epoch,
            best_val_l1,
            stopped_epoch: stopped,
            learning_rate: cfg.learning_rate,
        },
    ))
}

/// Runs `trial` once per seed under `exec`, keeping seed order.
pub fn run_trials<T, F>(seeds: &[u64], exec: Execution, trial: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    if seeds.is_empty() {
        return Err(Error::Config("at least one seed is required".into()));
    }
    exec.map(seeds, |&s| trial(s)).into_iter().collect()
}
