//! Mini-batch training with validation-based early stopping.

use std::time::Instant;

use hnam_tensor::{AdamW, Graph, SeedTree, Tensor, Var};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::WindowSample;
use crate::error::{CoreError, Result};
use crate::model::{Batch, CovariateSet, HnamConfig, HnamModel, Mode, TransformStats};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub max_epochs_initial: usize,
    pub max_epochs_finetune: usize,
    pub patience: usize,
    pub seed: u64,
    /// Global gradient norm above which gradients are rescaled.
    pub clip_norm: f64,
    /// Random subset of training samples visited per epoch; all if unset.
    pub samples_per_epoch: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            weight_decay: 0.01,
            batch_size: 256,
            max_epochs_initial: 300,
            max_epochs_finetune: 100,
            patience: 30,
            seed: 0,
            clip_norm: 10.0,
            samples_per_epoch: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(CoreError::Config("batch_size must be at least 1".into()));
        }
        if self.patience >= self.max_epochs_initial.max(1) {
            return Err(CoreError::Config(format!(
                "patience {} must be below max_epochs_initial {}",
                self.patience, self.max_epochs_initial
            )));
        }
        if !(self.lr > 0.0 && self.weight_decay >= 0.0 && self.clip_norm > 0.0) {
            return Err(CoreError::Config(
                "lr and clip_norm must be positive, weight_decay nonnegative".into(),
            ));
        }
        if self.samples_per_epoch == Some(0) {
            return Err(CoreError::Config(
                "samples_per_epoch must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Patience,
    MaxEpochs,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 0 is the evaluation of the starting parameters.
    pub epoch: usize,
    pub train_loss: Option<f64>,
    pub val_loss: f64,
    pub seconds: f64,
    pub clipped_batches: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stop_reason: StopReason,
}

impl TrainLog {
    /// Loss columns only, for reproducibility comparisons.
    pub fn losses(&self) -> Vec<(Option<f64>, f64)> {
        self.epochs
            .iter()
            .map(|e| (e.train_loss, e.val_loss))
            .collect()
    }
}

/// Tracks the best validation loss; stops after `patience` epochs without
/// strict improvement.
#[derive(Clone, Debug)]
pub struct EarlyStopping {
    patience: usize,
    best_epoch: usize,
    best_loss: f64,
    since_best: usize,
    seen: bool,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best_epoch: 0,
            best_loss: f64::INFINITY,
            since_best: 0,
            seen: false,
        }
    }

    /// Records `loss` for `epoch`; returns whether it is the new best.
    pub fn observe(&mut self, epoch: usize, loss: f64) -> bool {
        if !self.seen || loss < self.best_loss {
            self.seen = true;
            self.best_epoch = epoch;
            self.best_loss = loss;
            self.since_best = 0;
            true
        } else {
            self.since_best += 1;
            false
        }
    }

    pub fn should_stop(&self) -> bool {
        self.since_best >= self.patience
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn best_loss(&self) -> f64 {
        self.best_loss
    }
}

/// Runs [`EarlyStopping`] over a precomputed loss sequence (index = epoch,
/// 0 included) with at most `max_epochs` training epochs. Returns `(best
/// epoch, last evaluated epoch, reason)`.
pub fn simulate_early_stopping(
    losses: &[f64],
    patience: usize,
    max_epochs: usize,
) -> (usize, usize, StopReason) {
    let mut es = EarlyStopping::new(patience);
    let last = max_epochs.min(losses.len().saturating_sub(1));
    for (epoch, &loss) in losses.iter().enumerate().take(last + 1) {
        es.observe(epoch, loss);
        if es.should_stop() {
            return (es.best_epoch(), epoch, StopReason::Patience);
        }
    }
    (es.best_epoch(), last, StopReason::MaxEpochs)
}

/// Mean squared error over unmasked cells in the per-sample scaled space.
pub fn compute_loss(predictions: &[f64], targets: &[f64], mask: &[bool]) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for ((p, y), &m) in predictions.iter().zip(targets).zip(mask) {
        if m {
            sum += (p - y) * (p - y);
            n += 1;
        }
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Model-ready batch plus scaled targets and mask as flat `[batch, horizon]`.
pub struct PreparedBatch {
    pub batch: Batch,
    pub targets: Vec<f64>,
    pub mask: Vec<bool>,
}

pub fn prepare(model: &HnamModel, samples: &[&WindowSample]) -> Result<PreparedBatch> {
    let bundles: Vec<_> = samples.iter().map(|s| &s.bundle).collect();
    let batch = model.batch(&bundles)?;
    let mut targets = Vec::new();
    let mut mask = Vec::new();
    for s in samples {
        targets.extend(s.target.iter().map(|y| y / s.bundle.scale));
        mask.extend_from_slice(&s.target_mask);
    }
    Ok(PreparedBatch {
        batch,
        targets,
        mask,
    })
}

fn loss_var(g: &Graph, prediction: Var, prepared: &PreparedBatch) -> Result<(Var, usize)> {
    let shape = g.shape(prediction);
    let count = prepared.mask.iter().filter(|&&m| m).count();
    let target = g.constant(Tensor::new(shape.clone(), prepared.targets.clone())?);
    let mask = g.constant(Tensor::new(
        shape,
        prepared.mask.iter().map(|&m| m as u8 as f64).collect(),
    )?);
    let diff = g.sub(prediction, target)?;
    let sq = g.mul(g.mul(diff, diff)?, mask)?;
    Ok((g.scale(g.sum_all(sq), 1.0 / count.max(1) as f64), count))
}

/// Masked validation loss: mean over all unmasked cells of all batches.
pub fn evaluate_loss(model: &HnamModel, batches: &[PreparedBatch]) -> Result<f64> {
    let (mut sum, mut n) = (0.0, 0usize);
    for p in batches {
        let g = Graph::inference();
        let out = model.forward(&g, &p.batch, &mut Mode::Eval, true)?;
        let pred = g.value(out.prediction);
        let count = p.mask.iter().filter(|&&m| m).count();
        sum += compute_loss(pred.data(), &p.targets, &p.mask) * count as f64;
        n += count;
    }
    if n == 0 {
        return Err(CoreError::InsufficientData(
            "validation set has no unmasked targets".into(),
        ));
    }
    Ok(sum / n as f64)
}

fn clip(grads: &mut [Option<Tensor>], max_norm: f64) -> bool {
    let norm = grads
        .iter()
        .flatten()
        .flat_map(|g| g.data())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm {
        let k = max_norm / norm;
        for g in grads.iter_mut().flatten() {
            g.data_mut().iter_mut().for_each(|v| *v *= k);
        }
        true
    } else {
        false
    }
}

fn chunks<'a>(
    samples: &'a [WindowSample],
    order: &[usize],
    size: usize,
) -> Vec<Vec<&'a WindowSample>> {
    order
        .chunks(size)
        .map(|c| c.iter().map(|&i| &samples[i]).collect())
        .collect()
}

/// Fits continuous-covariate statistics on training samples and builds a
/// freshly initialized model.
pub fn init_model(config: HnamConfig, train: &[WindowSample], seed: u64) -> Result<HnamModel> {
    let stats = TransformStats::fit(&config.covariates, train.iter().map(|s| &s.bundle))?;
    HnamModel::new(config, stats, seed)
}

fn fit(
    model: &HnamModel,
    train: &[WindowSample],
    val: &[WindowSample],
    cfg: &TrainConfig,
    max_epochs: usize,
) -> Result<(HnamModel, TrainLog)> {
    if train.is_empty() || val.is_empty() {
        return Err(CoreError::InsufficientData(format!(
            "{} training and {} validation samples",
            train.len(),
            val.len()
        )));
    }
    let seeds = SeedTree::new(cfg.seed);
    let val_order: Vec<usize> = (0..val.len()).collect();
    let val_batches = chunks(val, &val_order, cfg.batch_size)
        .iter()
        .map(|c| prepare(model, c))
        .collect::<Result<Vec<_>>>()?;
    let mut current = model.clone();
    let mut best = model.clone();
    let mut opt = AdamW::new(cfg.lr, cfg.weight_decay);
    let mut stopper = EarlyStopping::new(cfg.patience);
    let started = Instant::now();
    let initial = evaluate_loss(&current, &val_batches)?;
    stopper.observe(0, initial);
    let mut epochs = vec![EpochRecord {
        epoch: 0,
        train_loss: None,
        val_loss: initial,
        seconds: started.elapsed().as_secs_f64(),
        clipped_batches: 0,
    }];
    let mut stop_reason = StopReason::MaxEpochs;
    for epoch in 1..=max_epochs {
        if stopper.should_stop() {
            stop_reason = StopReason::Patience;
            break;
        }
        let t0 = Instant::now();
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut seeds.indexed("shuffle", epoch as u64));
        if let Some(cap) = cfg.samples_per_epoch {
            order.truncate(cap);
        }
        let mut dropout = seeds.indexed("dropout", epoch as u64);
        let (mut loss_sum, mut cells, mut clipped) = (0.0, 0usize, 0usize);
        for (b, chunk) in chunks(train, &order, cfg.batch_size).iter().enumerate() {
            let prepared = prepare(&current, chunk)?;
            let g = Graph::new();
            let out = current.forward(&g, &prepared.batch, &mut Mode::Train(&mut dropout), true)?;
            let (loss, count) = loss_var(&g, out.prediction, &prepared)?;
            let value = g.value(loss).data()[0];
            if !value.is_finite() {
                return Err(CoreError::Diverged {
                    epoch,
                    batch: b,
                    loss: value,
                });
            }
            if count == 0 {
                continue;
            }
            let mut grads = g.backward(loss)?.param_grads(current.params());
            if clip(&mut grads, cfg.clip_norm) {
                clipped += 1;
            }
            opt.step(current.params_mut(), &grads)?;
            loss_sum += value * count as f64;
            cells += count;
        }
        if clipped > 0 {
            log::info!("epoch {epoch}: gradient clipped in {clipped} batches");
        }
        let val_loss = evaluate_loss(&current, &val_batches)?;
        let train_loss = (cells > 0).then(|| loss_sum / cells as f64);
        log::info!(
            "epoch {epoch}: train {:.6} val {val_loss:.6}",
            train_loss.unwrap_or(f64::NAN)
        );
        epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            seconds: t0.elapsed().as_secs_f64(),
            clipped_batches: clipped,
        });
        if stopper.observe(epoch, val_loss) {
            best = current.clone();
        }
        if epoch == max_epochs && stopper.should_stop() {
            stop_reason = StopReason::Patience;
        }
    }
    if max_epochs == 0 && stopper.should_stop() {
        stop_reason = StopReason::Patience;
    }
    Ok((
        best,
        TrainLog {
            epochs,
            best_epoch: stopper.best_epoch(),
            best_val_loss: stopper.best_loss(),
            stop_reason,
        },
    ))
}

/// Trains from `model`'s parameters for up to `max_epochs_initial` epochs
/// and returns the parameters with the lowest validation loss.
pub fn train(
    model: &HnamModel,
    train: &[WindowSample],
    val: &[WindowSample],
    cfg: &TrainConfig,
) -> Result<(HnamModel, TrainLog)> {
    cfg.validate()?;
    fit(model, train, val, cfg, cfg.max_epochs_initial)
}

/// Names of covariates whose specs differ between two schemas.
pub fn schema_differences(expected: &CovariateSet, actual: &CovariateSet) -> Vec<String> {
    let mut names: Vec<String> = Vec::new();
    for spec in expected.specs() {
        if actual.get(&spec.name) != Some(spec) {
            names.push(spec.name.clone());
        }
    }
    for spec in actual.specs() {
        if expected.get(&spec.name).is_none() {
            names.push(spec.name.clone());
        }
    }
    names
}

/// Continues training a snapshot on `data_schema` samples for up to
/// `max_epochs_finetune` epochs. Transform statistics are kept.
pub fn finetune(
    model: &HnamModel,
    data_schema: &CovariateSet,
    train: &[WindowSample],
    val: &[WindowSample],
    cfg: &TrainConfig,
) -> Result<(HnamModel, TrainLog)> {
    cfg.validate()?;
    let diff = schema_differences(&model.config().covariates, data_schema);
    if !diff.is_empty() {
        return Err(CoreError::SpecMismatch(diff.join(", ")));
    }
    fit(model, train, val, cfg, cfg.max_epochs_finetune)
}
