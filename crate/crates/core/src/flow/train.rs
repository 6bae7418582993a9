//! Mini-batch training loop.

use super::adamw::{adamw_step, lr_at_step, AdamHyper, AdamState};
use super::backward::{loss_grad, prepare_batch};
use super::params::{init_model, FlowModel};
use super::{FlowArch, Objective, BN_MOMENTUM};
use crate::error::{Error, Result};
use crate::matrix::EmbeddingMatrix;
use crate::num::{c, Mat, Real};
use crate::rng::{stream_rng, StreamDomain};
use crate::standardize::standardize_fit;
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

/// Training knobs. Defaults follow the reference hyperparameters:
/// AdamW with lr 1e-4, weight decay 1e-5, 500 warmup steps, 10% condition
/// dropout.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub warmup_steps: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub cond_dropout: f64,
    pub objective: Objective,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            weight_decay: 1e-5,
            warmup_steps: 500,
            batch_size: 128,
            epochs: 100,
            cond_dropout: 0.10,
            objective: Objective::Cfm,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.cond_dropout) {
            return Err(Error::InvalidParameter(format!(
                "condition dropout {} outside [0, 1]",
                self.cond_dropout
            )));
        }
        if self.learning_rate < 0.0 || self.weight_decay < 0.0 {
            return Err(Error::InvalidParameter(
                "learning rate and weight decay must be >= 0".into(),
            ));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::InvalidParameter(
                "batch size and epochs must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Independent RNG streams for each stochastic ingredient of training, so
/// draws never interleave across purposes.
pub struct TrainStreams {
    pub noise: ChaCha8Rng,
    pub time: ChaCha8Rng,
    pub dropout: ChaCha8Rng,
    pub shuffle: ChaCha8Rng,
}

impl TrainStreams {
    pub fn new(seed: u64) -> Self {
        Self {
            noise: stream_rng(seed, StreamDomain::TrainNoise, 0),
            time: stream_rng(seed, StreamDomain::TrainTime, 0),
            dropout: stream_rng(seed, StreamDomain::TrainDropout, 0),
            shuffle: stream_rng(seed, StreamDomain::TrainShuffle, 0),
        }
    }
}

/// Per-epoch mean loss and step count of a finished run.
#[derive(Debug, Clone)]
pub struct TrainReport {
    pub epoch_loss: Vec<f64>,
    pub steps: usize,
}

/// Train a fresh model on `(condition row, target row)` pairs.
///
/// Standardization statistics are fit on the full target matrix, stored in
/// the model, and applied to every batch; generated samples are mapped
/// back through them on the way out. Absent conditions train the
/// unconditional model (the zero condition vector). Deterministic for a
/// fixed seed.
pub fn train<T: Real>(
    targets: &EmbeddingMatrix,
    conditions: Option<&EmbeddingMatrix>,
    pairs: &[(usize, usize)],
    cfg: &TrainConfig,
    arch: &FlowArch,
) -> Result<(FlowModel<T>, TrainReport)> {
    cfg.validate()?;
    arch.validate()?;
    if pairs.is_empty() {
        return Err(Error::InvalidParameter("no training pairs".into()));
    }
    if targets.cols() != arch.input_dim {
        return Err(Error::DimensionMismatch(format!(
            "targets have dimension {}, architecture expects {}",
            targets.cols(),
            arch.input_dim
        )));
    }
    if let Some(cm) = conditions {
        if cm.cols() != arch.cond_dim {
            return Err(Error::DimensionMismatch(format!(
                "conditions have dimension {}, architecture expects {}",
                cm.cols(),
                arch.cond_dim
            )));
        }
    }
    for &(ci, ti) in pairs {
        if ti >= targets.rows() {
            return Err(Error::InvalidParameter(format!(
                "target index {ti} out of range {}",
                targets.rows()
            )));
        }
        if let Some(cm) = conditions {
            if ci >= cm.rows() {
                return Err(Error::InvalidParameter(format!(
                    "condition index {ci} out of range {}",
                    cm.rows()
                )));
            }
        }
    }

    let stats = standardize_fit(targets)?;
    let mut model = init_model::<T>(arch, cfg.seed)?;
    model.standardize = stats.clone();
    model.objective = cfg.objective;
    model.cond_dropout_used = if conditions.is_some() && cfg.objective == Objective::Cfm {
        cfg.cond_dropout as f32
    } else {
        0.0
    };

    // Standardize targets once, in model precision.
    let d = targets.cols();
    let mut targets_std = Mat::<T>::zeros(targets.rows(), d);
    for i in 0..targets.rows() {
        let src = targets.row(i);
        let dst = targets_std.row_mut(i);
        for j in 0..d {
            dst[j] = c((src[j] as f64 - stats.mean[j] as f64) / stats.std[j] as f64);
        }
    }
    let cond_mat: Option<Mat<T>> = conditions.map(|cm| {
        let mut m = Mat::<T>::zeros(cm.rows(), cm.cols());
        for i in 0..cm.rows() {
            for (dst, &src) in m.row_mut(i).iter_mut().zip(cm.row(i)) {
                *dst = c(src as f64);
            }
        }
        m
    });

    let mut rngs = TrainStreams::new(cfg.seed);
    let mut state = AdamState::new(&model);
    let hyper = AdamHyper::default();
    let batches_per_epoch = pairs.len().div_ceil(cfg.batch_size);
    let total_steps = batches_per_epoch * cfg.epochs;
    let dropout = if conditions.is_some() && cfg.objective == Objective::Cfm {
        cfg.cond_dropout
    } else {
        0.0
    };

    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut epoch_loss = Vec::with_capacity(cfg.epochs);
    let mut step = 0usize;
    for _epoch in 0..cfg.epochs {
        order.shuffle(&mut rngs.shuffle);
        let mut loss_sum = 0.0f64;
        for chunk in order.chunks(cfg.batch_size) {
            let bsz = chunk.len();
            let mut xb = Mat::<T>::zeros(bsz, d);
            for (row, &pi) in chunk.iter().enumerate() {
                xb.row_mut(row).copy_from_slice(targets_std.row(pairs[pi].1));
            }
            let cb: Option<Mat<T>> = cond_mat.as_ref().map(|cm| {
                let mut m = Mat::<T>::zeros(bsz, cm.cols());
                for (row, &pi) in chunk.iter().enumerate() {
                    m.row_mut(row).copy_from_slice(cm.row(pairs[pi].0));
                }
                m
            });

            let batch = prepare_batch(&model, cfg.objective, &xb, cb.as_ref(), dropout, &mut rngs);
            let out = loss_grad(&model, &batch).map_err(|e| {
                Error::Training(format!("step {step}: {e} (parameters left at last good state)"))
            })?;

            step += 1;
            let lr = lr_at_step(step, cfg.learning_rate, cfg.warmup_steps, total_steps);
            adamw_step(&mut model, &out.grads, &mut state, step, lr, cfg.weight_decay, &hyper);
            update_running_stats(&mut model, &out.batch_mean, &out.batch_var, bsz);
            loss_sum += out.loss;
        }
        epoch_loss.push(loss_sum / batches_per_epoch as f64);
    }

    Ok((model, TrainReport { epoch_loss, steps: step }))
}

// running = (1 - momentum) * running + momentum * batch; the variance uses
// the unbiased batch estimate when the batch has more than one row.
fn update_running_stats<T: Real>(model: &mut FlowModel<T>, mean: &[T], var: &[T], bsz: usize) {
    let m: T = c(BN_MOMENTUM);
    let unbias: T = if bsz > 1 {
        c(bsz as f64 / (bsz as f64 - 1.0))
    } else {
        T::ONE
    };
    for (r, &b) in model
        .cond_bn
        .running_mean
        .as_mut_slice()
        .iter_mut()
        .zip(mean)
    {
        *r = (T::ONE - m) * *r + m * b;
    }
    for (r, &b) in model
        .cond_bn
        .running_var
        .as_mut_slice()
        .iter_mut()
        .zip(var)
    {
        *r = (T::ONE - m) * *r + m * b * unbias;
    }
}
