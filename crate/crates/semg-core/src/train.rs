//! Training: focal loss, RAdam with Lookahead, the delayed cosine learning
//! rate schedule, and the epoch loop with per-epoch augmentation.
//!
//! The loop trains for a fixed number of epochs (no early stopping). Every
//! epoch reshuffles the training windows and re-augments non-rest windows
//! with fresh noise, so over tens of epochs the model sees roughly as many
//! unique non-rest samples as rest samples. Class imbalance is otherwise
//! handled by the focal loss alone; there is no per-class weighting.

use crate::augment::{augment_window, AugmentConfig};
use crate::error::{Error, Result};
use crate::metrics::{self, EvalReport};
use crate::model::{self, ModelParams};
use crate::rng;
use crate::tensor::Tensor2;
use crate::windowing::WindowSet;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

// ---------------------------------------------------------------------------
// Focal loss
// ---------------------------------------------------------------------------

/// Focal loss `FL = -(1 - p_t)^gamma * log(p_t)` for one probability row.
///
/// Returns the loss, its gradient with respect to the logits (softmax
/// folded in), and whether `p_t` had to be clamped away from 0/1.
pub fn focal_loss(probs: &Tensor2, target: usize, gamma: f64) -> Result<(f64, Tensor2, bool)> {
    if probs.rows() != 1 || target >= probs.cols() {
        return Err(Error::Dimension(format!(
            "focal loss: probs {}x{}, target {}",
            probs.rows(),
            probs.cols(),
            target
        )));
    }
    let p_raw = probs[(0, target)];
    let clamped = !(1e-12..=1.0 - 1e-12).contains(&p_raw);
    let p = p_raw.clamp(1e-12, 1.0 - 1e-12);

    let one_minus = 1.0 - p;
    let loss = -one_minus.powf(gamma) * p.ln();
    // d loss / d logit_j = g * (delta_tj - p_j) with
    // g = gamma * p * (1-p)^(gamma-1) * ln(p) - (1-p)^gamma.
    let g = if gamma == 0.0 {
        -1.0
    } else {
        gamma * p * one_minus.powf(gamma - 1.0) * p.ln() - one_minus.powf(gamma)
    };
    let mut dlogits = Tensor2::zeros(1, probs.cols());
    for j in 0..probs.cols() {
        let delta = if j == target { 1.0 } else { 0.0 };
        dlogits[(0, j)] = g * (delta - probs[(0, j)]);
    }
    Ok((loss, dlogits, clamped))
}

// ---------------------------------------------------------------------------
// RAdam
// ---------------------------------------------------------------------------

/// RAdam moment coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RAdamParams {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for RAdamParams {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment accumulators for one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentState {
    pub m: Tensor2,
    pub v: Tensor2,
}

/// Variance rectification length `rho_t`; the adaptive branch activates once
/// it exceeds 5.
pub fn radam_rho(t: usize, beta2: f64) -> f64 {
    let rho_inf = 2.0 / (1.0 - beta2) - 1.0;
    let b2t = beta2.powi(t as i32);
    rho_inf - 2.0 * t as f64 * b2t / (1.0 - b2t)
}

/// One RAdam update on a single tensor. `t` is the 1-based step count.
///
/// While `rho_t <= 5` the update is plain bias-corrected momentum (no
/// variance adaptation); afterwards the rectified adaptive step applies.
pub fn radam_step(
    value: &mut Tensor2,
    grad: &Tensor2,
    state: &mut MomentState,
    t: usize,
    lr: f64,
    p: &RAdamParams,
) {
    debug_assert!(t >= 1);
    let rho_inf = 2.0 / (1.0 - p.beta2) - 1.0;
    let rho_t = radam_rho(t, p.beta2);
    let bias1 = 1.0 - p.beta1.powi(t as i32);
    let bias2 = 1.0 - p.beta2.powi(t as i32);

    let adaptive = rho_t > 5.0;
    let rect = if adaptive {
        (((rho_t - 4.0) * (rho_t - 2.0) * rho_inf) / ((rho_inf - 4.0) * (rho_inf - 2.0) * rho_t))
            .sqrt()
    } else {
        0.0
    };

    let n = value.len();
    for i in 0..n {
        let g = grad.as_slice()[i];
        let m = &mut state.m.as_mut_slice()[i];
        *m = p.beta1 * *m + (1.0 - p.beta1) * g;
        let v = &mut state.v.as_mut_slice()[i];
        *v = p.beta2 * *v + (1.0 - p.beta2) * g * g;
        let m_hat = *m / bias1;
        let step = if adaptive {
            let denom = v.sqrt() + p.eps;
            lr * rect * m_hat * bias2.sqrt() / denom
        } else {
            lr * m_hat
        };
        value.as_mut_slice()[i] -= step;
    }
}

/// Lookahead interpolation: every `k` steps, `slow += alpha * (fast - slow)`
/// and the fast weights reset to the slow ones.
pub fn lookahead_sync(fast: &mut Tensor2, slow: &mut Tensor2, alpha: f64) {
    for (s, f) in slow.as_mut_slice().iter_mut().zip(fast.as_mut_slice()) {
        *s += alpha * (*f - *s);
        *f = *s;
    }
}

// ---------------------------------------------------------------------------
// Ranger = RAdam + Lookahead over a whole model
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RangerConfig {
    pub radam: RAdamParams,
    pub lookahead_k: usize,
    pub lookahead_alpha: f64,
}

impl Default for RangerConfig {
    fn default() -> Self {
        Self {
            radam: RAdamParams::default(),
            lookahead_k: 6,
            lookahead_alpha: 0.5,
        }
    }
}

/// Optimizer state for every trainable tensor of a model, in visitor order.
#[derive(Debug, Clone, PartialEq)]
pub struct Ranger {
    pub config: RangerConfig,
    pub step_count: usize,
    pub moments: Vec<MomentState>,
    pub slow: Vec<Tensor2>,
}

impl Ranger {
    pub fn new(params: &mut ModelParams, config: RangerConfig) -> Self {
        let mut moments = Vec::new();
        let mut slow = Vec::new();
        params.for_each_tensor_mut(&mut |_, trainable, value, _| {
            if trainable {
                moments.push(MomentState {
                    m: Tensor2::zeros(value.rows(), value.cols()),
                    v: Tensor2::zeros(value.rows(), value.cols()),
                });
                slow.push(value.clone());
            }
        });
        Self {
            config,
            step_count: 0,
            moments,
            slow,
        }
    }

    /// Applies one optimization step using the gradients currently stored in
    /// the model's grad slots.
    pub fn step(&mut self, params: &mut ModelParams, lr: f64) {
        self.step_count += 1;
        let t = self.step_count;
        let mut idx = 0;
        let radam = self.config.radam;
        let moments = &mut self.moments;
        params.for_each_tensor_mut(&mut |_, trainable, value, grad| {
            if trainable {
                radam_step(value, grad, &mut moments[idx], t, lr, &radam);
                idx += 1;
            }
        });
        if t % self.config.lookahead_k == 0 {
            let alpha = self.config.lookahead_alpha;
            let slow = &mut self.slow;
            let mut idx = 0;
            params.for_each_tensor_mut(&mut |_, trainable, value, _| {
                if trainable {
                    lookahead_sync(value, &mut slow[idx], alpha);
                    idx += 1;
                }
            });
        }
    }
}

// ---------------------------------------------------------------------------
// Learning rate schedule
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_start: f64,
    pub lr_end: f64,
    /// Epochs held at `lr_start` before cosine annealing begins.
    pub warm_epochs: usize,
    pub focal_gamma: f64,
    pub ranger: RangerConfig,
    pub seed: u64,
}

impl TrainConfig {
    /// The published recipe: 55 epochs, batch 128, 1e-3 -> 1e-5 after 5 warm
    /// epochs, focal gamma 2.
    pub fn paper(seed: u64) -> Self {
        Self {
            epochs: 55,
            batch_size: 128,
            lr_start: 1e-3,
            lr_end: 1e-5,
            warm_epochs: 5,
            focal_gamma: 2.0,
            ranger: RangerConfig::default(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be >= 1".into()));
        }
        if !(self.lr_end < self.lr_start) {
            return Err(Error::Config(format!(
                "lr_end {} must be below lr_start {}",
                self.lr_end, self.lr_start
            )));
        }
        if self.warm_epochs >= self.epochs {
            return Err(Error::Config(format!(
                "warm epochs {} must be below total epochs {}",
                self.warm_epochs, self.epochs
            )));
        }
        Ok(())
    }
}

/// Delayed cosine annealing: flat at `lr_start` through the warm epochs,
/// then cosine from `lr_start` to exactly `lr_end` at the final epoch.
pub fn lr_schedule(epoch: usize, cfg: &TrainConfig) -> f64 {
    if epoch < cfg.warm_epochs {
        return cfg.lr_start;
    }
    let span = (cfg.epochs - 1).saturating_sub(cfg.warm_epochs).max(1);
    let progress = (epoch - cfg.warm_epochs) as f64 / span as f64;
    cfg.lr_end + (cfg.lr_start - cfg.lr_end) * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
}

// ---------------------------------------------------------------------------
// Epoch loop
// ---------------------------------------------------------------------------

/// One history row per epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_accuracy: f64,
    pub val_balanced_accuracy: f64,
    pub val_mcc: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
    /// Times the focal loss clamped a degenerate probability.
    pub clamp_events: usize,
    pub warnings: Vec<String>,
}

impl TrainHistory {
    /// CSV rendering: `epoch,lr,train_loss,val_acc,val_balacc,val_mcc`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,lr,train_loss,val_acc,val_balacc,val_mcc\n");
        for row in &self.epochs {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                row.epoch,
                row.lr,
                row.train_loss,
                row.val_accuracy,
                row.val_balanced_accuracy,
                row.val_mcc
            ));
        }
        out
    }
}

/// Worker cap: `SEMG_THREADS` when set, otherwise the machine's parallelism.
pub fn worker_count() -> usize {
    std::env::var("SEMG_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(std::num::NonZero::get)
                .unwrap_or(1)
        })
}

/// Scores a window set with the current parameters.
///
/// Inference is pure, so windows fan out across workers; the prediction
/// order (hence the report) does not depend on the worker count.
pub fn evaluate_windows(params: &ModelParams, ws: &WindowSet) -> Result<EvalReport> {
    let workers = worker_count().min(ws.len().max(1));
    let chunk = ws.len().div_ceil(workers).max(1);
    let results: Vec<Result<Vec<usize>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = ws
            .windows
            .chunks(chunk)
            .map(|slice| {
                scope.spawn(move || {
                    slice
                        .iter()
                        .map(|w| model::predict(params, &w.data))
                        .collect::<Result<Vec<usize>>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("prediction worker panicked"))
            .collect()
    });
    let mut preds = Vec::with_capacity(ws.len());
    for r in results {
        preds.extend(r?);
    }
    let truth: Vec<usize> = ws.windows.iter().map(|w| w.label).collect();
    metrics::evaluate(&preds, &truth, params.config.num_classes)
}

/// Trains over `epoch_range` with an existing optimizer, mutating `params`
/// in place. Each epoch derives its own RNG streams from the seed and the
/// epoch index, so training can stop and resume at any epoch boundary and
/// reproduce the uninterrupted run bit for bit.
pub fn train_range(
    params: &mut ModelParams,
    train: &WindowSet,
    val: &WindowSet,
    cfg: &TrainConfig,
    augment: Option<&AugmentConfig>,
    epoch_range: std::ops::Range<usize>,
    opt: &mut Ranger,
) -> Result<TrainHistory> {
    cfg.validate()?;
    if let Some(a) = augment {
        a.validate()?;
    }
    if train.is_empty() {
        return Err(Error::Validation("training window set is empty".into()));
    }

    let mut history = TrainHistory::default();

    // Classes with no training windows are reported, not fatal.
    let hist = train.class_counts();
    for class in 0..params.config.num_classes {
        if hist.get(class).copied().unwrap_or(0) == 0 {
            history
                .warnings
                .push(format!("class {} has no training windows", class));
        }
    }

    for epoch in epoch_range {
        let mut epoch_rng = rng::stream_rng(cfg.seed, epoch as u64);
        let mut aug_rng = augment.map(|a| rng::stream_rng(a.seed, epoch as u64));

        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut epoch_rng);
        let lr = lr_schedule(epoch, cfg);

        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            params.zero_grads();
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let window = &train.windows[i];
                let aug;
                let data = match (&mut aug_rng, augment) {
                    (Some(rng), Some(acfg)) => {
                        aug = augment_window(window, acfg, rng);
                        &aug.data
                    }
                    _ => &window.data,
                };
                let (probs, cache) = model::forward(params, data, true, &mut epoch_rng)?;
                let (loss, mut dlogits, clamped) =
                    focal_loss(&probs, window.label, cfg.focal_gamma)?;
                if clamped {
                    history.clamp_events += 1;
                }
                loss_sum += loss;
                for v in dlogits.as_mut_slice() {
                    *v *= scale;
                }
                model::backward(params, &cache, &dlogits)?;
            }
            opt.step(params, lr);
        }

        let report = evaluate_windows(params, val)?;
        history.epochs.push(EpochStats {
            epoch,
            lr,
            train_loss: loss_sum / train.len() as f64,
            val_accuracy: report.accuracy,
            val_balanced_accuracy: report.balanced_accuracy,
            val_mcc: report.mcc,
        });
    }
    Ok(history)
}

/// Full training run: fresh optimizer, all epochs.
pub fn train_loop(
    params: &mut ModelParams,
    train: &WindowSet,
    val: &WindowSet,
    cfg: &TrainConfig,
    augment: Option<&AugmentConfig>,
) -> Result<TrainHistory> {
    let mut opt = Ranger::new(params, cfg.ranger);
    train_range(params, train, val, cfg, augment, 0..cfg.epochs, &mut opt)
}
