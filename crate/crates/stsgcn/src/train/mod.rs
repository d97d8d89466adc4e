//! Losses, optimizer schedule and the end-to-end training loop.

mod adam;

pub use adam::{adam_step, adam_update, lr_at_epoch, AdamState};

use crate::data::WindowSet;
use crate::error::{Error, Result};
use crate::model::{model_forward, ModelConfig, ModelParams};
use crate::rng::Rng;
use crate::tensor::{Tape, Var};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    /// Mean per-joint position error; pairs with coordinate data.
    Mpjpe,
    /// Mean angle error; pairs with exponential-map data.
    Mae,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr0: f64,
    pub decay_factor: f64,
    pub decay_every: usize,
    pub decay_after: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub loss: LossKind,
    pub seed: u64,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 256,
            lr0: 0.01,
            decay_factor: 0.1,
            decay_every: 5,
            decay_after: 20,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            loss: LossKind::Mpjpe,
            seed: 0,
            shuffle: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.decay_every == 0 {
            return Err(Error::InvalidConfig(
                "epochs, batch_size and decay_every must be positive".into(),
            ));
        }
        for (name, value) in [
            ("lr0", self.lr0),
            ("decay_factor", self.decay_factor),
            ("beta1", self.beta1),
            ("beta2", self.beta2),
            ("epsilon", self.epsilon),
        ] {
            if !value.is_finite() || value <= 0.0 {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be positive and finite, got {value}"
                )));
            }
        }
        if self.beta1 >= 1.0 || self.beta2 >= 1.0 {
            return Err(Error::InvalidConfig(
                "beta1 and beta2 must be below 1".into(),
            ));
        }
        Ok(())
    }
}

/// Per-epoch training record.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub lr: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
}

impl TrainReport {
    /// CSV columns: epoch, train_loss, val_loss, lr, seconds.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut text = String::from("epoch,train_loss,val_loss,lr,seconds\n");
        for e in &self.epochs {
            let _ = writeln!(
                text,
                "{},{},{},{},{:.3}",
                e.epoch, e.train_loss, e.val_loss, e.lr, e.seconds
            );
        }
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

fn apply_loss(tape: &mut Tape, kind: LossKind, pred: Var, target: Var) -> Result<Var> {
    match kind {
        LossKind::Mpjpe => tape.loss_mpjpe(pred, target),
        LossKind::Mae => tape.loss_mae(pred, target),
    }
}

fn check_geometry(model_cfg: &ModelConfig, windows: &WindowSet, what: &str) -> Result<()> {
    if windows.joints() != model_cfg.joints
        || windows.input_frames() != model_cfg.input_frames
        || windows.target_frames() != model_cfg.output_frames
    {
        return Err(Error::InvalidConfig(format!(
            "{what} windows are V={} T={} K={}, model expects V={} T={} K={}",
            windows.joints(),
            windows.input_frames(),
            windows.target_frames(),
            model_cfg.joints,
            model_cfg.input_frames,
            model_cfg.output_frames
        )));
    }
    Ok(())
}

/// Mean loss over a window set in eval mode (no gradient, running statistics).
pub fn eval_loss(
    params: &mut ModelParams,
    windows: &WindowSet,
    batch_size: usize,
    kind: LossKind,
) -> Result<f64> {
    let indices: Vec<usize> = (0..windows.len()).collect();
    let mut total = 0.0;
    for chunk in indices.chunks(batch_size) {
        let (x, t) = windows.batch(chunk)?;
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape);
        let xv = tape.leaf(&x);
        let tv = tape.leaf(&t);
        let pred = model_forward(&mut tape, params, &bound, xv, false)?;
        let loss = apply_loss(&mut tape, kind, pred, tv)?;
        total += tape.value(loss)[0] * chunk.len() as f64;
    }
    Ok(total / windows.len() as f64)
}

/// Train end to end; deterministic given the config seed.
///
/// Returns the parameters with the best validation loss (falling back to the
/// epoch train loss when `val_windows` is empty) and the per-epoch report.
pub fn train(
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    windows: &WindowSet,
    val_windows: &WindowSet,
) -> Result<(ModelParams, TrainReport)> {
    model_cfg.validate()?;
    train_cfg.validate()?;
    if windows.is_empty() {
        return Err(Error::InvalidConfig("training window set is empty".into()));
    }
    check_geometry(model_cfg, windows, "training")?;
    if !val_windows.is_empty() {
        check_geometry(model_cfg, val_windows, "validation")?;
    }

    let mut params = ModelParams::init(model_cfg, train_cfg.seed)?;
    let mut state = AdamState::new(&params);
    let mut shuffle_rng = Rng::new(train_cfg.seed ^ 0x73687566_666c6531);

    let mut report = TrainReport::default();
    let mut best_loss = f64::INFINITY;
    let mut best_params = params.clone();

    let mut order: Vec<usize> = (0..windows.len()).collect();
    for epoch in 1..=train_cfg.epochs {
        let start = Instant::now();
        let lr = lr_at_epoch(train_cfg, epoch);
        if train_cfg.shuffle {
            shuffle_rng.shuffle(&mut order);
        }
        let mut epoch_loss = 0.0;
        for (batch_idx, chunk) in order.chunks(train_cfg.batch_size).enumerate() {
            let (x, t) = windows.batch(chunk)?;
            let mut tape = Tape::new();
            let bound = params.bind(&mut tape);
            let xv = tape.leaf(&x);
            let tv = tape.leaf(&t);
            let pred = model_forward(&mut tape, &mut params, &bound, xv, true)?;
            let loss = apply_loss(&mut tape, train_cfg.loss, pred, tv)?;
            let loss_value = tape.value(loss)[0];
            if !loss_value.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    batch: batch_idx,
                });
            }
            epoch_loss += loss_value * chunk.len() as f64;
            tape.backward(loss)?;
            bound.write_grads(&tape, &mut params)?;
            drop(tape);
            adam_step(&mut params, &mut state, train_cfg, lr)?;
        }
        let train_loss = epoch_loss / windows.len() as f64;
        let val_loss = if val_windows.is_empty() {
            train_loss
        } else {
            eval_loss(&mut params, val_windows, train_cfg.batch_size, train_cfg.loss)?
        };
        if val_loss < best_loss {
            best_loss = val_loss;
            best_params = params.clone();
        }
        report.epochs.push(EpochStats {
            epoch,
            train_loss,
            val_loss,
            lr,
            seconds: start.elapsed().as_secs_f64(),
        });
    }
    Ok((best_params, report))
}

#[cfg(test)]
mod tests;
