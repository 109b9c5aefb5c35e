//! Gradient-descent training: ADAM updates with bias correction, label-
//! balanced batching, gradient clipping, learning-rate decay, scheduled loss
//! coefficients, early stopping, restarts, and the incremental subrule-count
//! search.

use crate::datasets::{split, Dataset};
use crate::error::{Error, Result};
use crate::losses::{schedule, total_loss_and_grad, LossWeights, ScheduleConfig, VariableLayout};
use crate::rule_model::{
    forward, ActivationParams, Example, OpMode, RuleSpaceWeights, WeightGrad,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::time::Instant;

/// All training hyperparameters. Defaults follow the published settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub lr_decay: f64,
    pub beta: f64,
    pub lambda: f64,
    pub gamma: f64,
    pub eta: f64,
    pub c1: f64,
    pub c2: f64,
    pub epsilon: f64,
    pub epochs: usize,
    pub restarts: usize,
    pub batch_size: usize,
    pub accuracy_threshold: f64,
    pub lambda_e_max: f64,
    pub lambda_s_max: f64,
    pub lambda_s_min: f64,
    pub lambda_r_max: f64,
    pub lambda_c_max: f64,
    pub lambda_d_max: f64,
    pub entropy_threshold: f64,
    pub clip_norm: f64,
    pub seed: u64,
    pub n_max: usize,
    pub op_mode: OpMode,
    pub split_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            lr_decay: 0.0001,
            beta: 20.0,
            lambda: 10.0,
            gamma: 0.5,
            eta: 0.1,
            c1: 1.0,
            c2: 12.5,
            epsilon: 1e-6,
            epochs: 500,
            restarts: 3,
            batch_size: 128,
            accuracy_threshold: 0.95,
            lambda_e_max: 0.1,
            lambda_s_max: 0.2,
            lambda_s_min: 0.0,
            lambda_r_max: 1.0,
            lambda_c_max: 5.0,
            lambda_d_max: 0.001,
            entropy_threshold: 0.4,
            clip_norm: 1.0,
            seed: 0,
            n_max: 8,
            op_mode: OpMode::Attention,
            split_fraction: 0.8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("learning_rate", self.learning_rate),
            ("beta", self.beta),
            ("lambda", self.lambda),
            ("clip_norm", self.clip_norm),
        ] {
            if v <= 0.0 || !v.is_finite() {
                return Err(Error::NotPositive(name, v));
            }
        }
        if self.lr_decay < 0.0 {
            return Err(Error::NotPositive("lr_decay", self.lr_decay));
        }
        if !(0.0 < self.gamma && self.gamma < 1.0) {
            return Err(Error::OutOfRange("gamma", "(0, 1)", self.gamma));
        }
        if !(0.0 < self.accuracy_threshold && self.accuracy_threshold <= 1.0) {
            return Err(Error::OutOfRange(
                "accuracy_threshold",
                "(0, 1]",
                self.accuracy_threshold,
            ));
        }
        if self.batch_size == 0 {
            return Err(Error::NotPositive("batch_size", 0.0));
        }
        if self.restarts == 0 {
            return Err(Error::NotPositive("restarts", 0.0));
        }
        if self.n_max == 0 {
            return Err(Error::NotPositive("n_max", 0.0));
        }
        if !(0.0 < self.split_fraction && self.split_fraction < 1.0) {
            return Err(Error::OutOfRange(
                "split_fraction",
                "(0, 1)",
                self.split_fraction,
            ));
        }
        Ok(())
    }

    pub fn activation(&self) -> ActivationParams {
        ActivationParams {
            beta: self.beta,
            lambda: self.lambda,
            gamma: self.gamma,
        }
    }

    fn loss_weights_at(&self, epoch: usize, layout: &VariableLayout, n: usize) -> Result<LossWeights> {
        let sched = ScheduleConfig {
            lambda_e_max: self.lambda_e_max,
            lambda_s_max: self.lambda_s_max,
            lambda_s_min: self.lambda_s_min,
            lambda_r_max: self.lambda_r_max,
            lambda_c_max: self.lambda_c_max,
            lambda_d_max: self.lambda_d_max,
            total_epochs: self.epochs,
            head_vars: layout.head_vars().len(),
            aux_vars: layout.aux_vars().len(),
            subrules: n,
        };
        let mut lw = schedule(epoch, &sched)?;
        lw.eta = self.eta;
        lw.c1 = self.c1;
        lw.c2 = self.c2;
        lw.epsilon = self.epsilon;
        Ok(lw)
    }
}

/// ADAM hyperparameters; the effective step size is `lr / (1 + lr_decay * t)`.
#[derive(Debug, Clone, Copy)]
pub struct AdamParams {
    pub lr: f64,
    pub lr_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamParams {
    pub fn new(lr: f64, lr_decay: f64) -> Self {
        Self {
            lr,
            lr_decay,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment accumulators.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }
}

/// One bias-corrected ADAM update. `t` is the 1-based step count.
pub fn adam_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut AdamState,
    hp: &AdamParams,
    t: usize,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::ShapeMismatch {
            context: "adam_step",
            expected: params.len(),
            got: grads.len(),
        });
    }
    if t == 0 {
        return Err(Error::NotPositive("adam step t", 0.0));
    }
    if grads.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("adam_step gradient"));
    }
    let lr = hp.lr / (1.0 + hp.lr_decay * t as f64);
    let bc1 = 1.0 - hp.beta1.powi(t as i32);
    let bc2 = 1.0 - hp.beta2.powi(t as i32);
    for i in 0..params.len() {
        state.m[i] = hp.beta1 * state.m[i] + (1.0 - hp.beta1) * grads[i];
        state.v[i] = hp.beta2 * state.v[i] + (1.0 - hp.beta2) * grads[i] * grads[i];
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + hp.eps);
    }
    Ok(())
}

/// Scales gradients so the global L2 norm does not exceed `max_norm`.
/// Returns the pre-clip norm.
pub fn clip_gradients(grads: &mut WeightGrad, max_norm: f64) -> f64 {
    let norm = grads.l2_norm();
    if norm > max_norm {
        grads.scale(max_norm / norm);
    }
    norm
}

/// A label-balanced batch of row indices.
#[derive(Debug, Clone)]
pub struct BalancedBatch {
    pub indices: Vec<usize>,
    /// False when one class was missing and the batch fell back to uniform
    /// sampling.
    pub balanced: bool,
}

/// Draws a batch with `|#pos - #neg| <= 1`, oversampling (with replacement)
/// whichever class is too small. A dataset missing one class entirely yields
/// an unbalanced uniform batch with the flag cleared.
pub fn balance_batch(
    dataset: &Dataset,
    batch_size: usize,
    rng: &mut ChaCha8Rng,
) -> Result<BalancedBatch> {
    if dataset.is_empty() {
        return Err(Error::EmptyInput("balance_batch dataset"));
    }
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for (i, row) in dataset.rows().iter().enumerate() {
        if row.label() == 1 {
            pos.push(i);
        } else {
            neg.push(i);
        }
    }
    Ok(balance_batch_from_parts(
        &pos,
        &neg,
        dataset.len(),
        batch_size,
        rng,
    ))
}

fn balance_batch_from_parts(
    pos: &[usize],
    neg: &[usize],
    total: usize,
    batch_size: usize,
    rng: &mut ChaCha8Rng,
) -> BalancedBatch {
    if pos.is_empty() || neg.is_empty() {
        let indices = (0..batch_size).map(|_| rng.gen_range(0..total)).collect();
        return BalancedBatch {
            indices,
            balanced: false,
        };
    }
    let pos_need = batch_size / 2;
    let neg_need = batch_size - pos_need;
    let mut indices = Vec::with_capacity(batch_size);
    sample_class(pos, pos_need, rng, &mut indices);
    sample_class(neg, neg_need, rng, &mut indices);
    BalancedBatch {
        indices,
        balanced: true,
    }
}

fn sample_class(class: &[usize], need: usize, rng: &mut ChaCha8Rng, out: &mut Vec<usize>) {
    if class.len() >= need {
        // partial Fisher-Yates: without replacement
        let mut scratch: Vec<usize> = class.to_vec();
        for k in 0..need {
            let j = rng.gen_range(k..scratch.len());
            scratch.swap(k, j);
            out.push(scratch[k]);
        }
    } else {
        for _ in 0..need {
            out.push(class[rng.gen_range(0..class.len())]);
        }
    }
}

/// Fraction of rows whose thresholded prediction matches the label.
pub fn evaluate(
    weights: &RuleSpaceWeights,
    act: ActivationParams,
    mode: OpMode,
    dataset: &Dataset,
) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::EmptyInput("evaluate dataset"));
    }
    let trace = forward(weights, dataset.rows(), act, mode)?;
    let correct = trace
        .predictions()
        .iter()
        .zip(dataset.rows())
        .filter(|(&p, row)| (p >= 0.5) == (row.label() == 1))
        .count();
    Ok(correct as f64 / dataset.len() as f64)
}

/// Loss and accuracy at one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub train_accuracy: f64,
    pub val_accuracy: f64,
}

/// Outcome of a single training run.
#[derive(Debug, Clone)]
pub struct TrainReport {
    pub history: Vec<EpochStats>,
    pub weights: RuleSpaceWeights,
    pub seed: u64,
    pub train_accuracy: f64,
    pub val_accuracy: f64,
    pub final_loss: f64,
    pub stopped_early: bool,
    pub wall_time_secs: f64,
}

/// Draws initial weights i.i.d. normal with standard deviation 0.1, which
/// keeps the initial subpredicate distributions near uniform.
pub fn init_weights(n: usize, m: usize, rng: &mut ChaCha8Rng) -> Result<RuleSpaceWeights> {
    let w = (0..n * m * 3).map(|_| 0.1 * sample_standard_normal(rng)).collect();
    RuleSpaceWeights::from_vec(n, m, w)
}

// Box-Muller transform; two uniforms per normal keeps the stream stable
// across platforms.
fn sample_standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = 1.0 - rng.gen_range(0.0..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Trains one model with `n` subrules for up to `config.epochs` epochs of
/// balanced mini-batch ADAM under the scheduled objective. Stops early once
/// validation accuracy reaches the threshold after a grace period of a fifth
/// of the horizon. Deterministic for a fixed `(config, data, seed)`.
pub fn train_once(
    config: &TrainConfig,
    layout: &VariableLayout,
    train: &Dataset,
    val: &Dataset,
    n: usize,
    seed: u64,
) -> Result<TrainReport> {
    config.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::EmptyInput("train_once datasets"));
    }
    if train.atoms() != layout.atoms() || val.atoms() != layout.atoms() {
        return Err(Error::ShapeMismatch {
            context: "train_once schema width",
            expected: layout.atoms(),
            got: train.atoms(),
        });
    }
    let started = Instant::now();
    let m = train.atoms();
    let act = config.activation();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut weights = init_weights(n, m, &mut rng)?;
    let mut adam = AdamState::new(n * m * 3);
    let adam_hp = AdamParams::new(config.learning_rate, config.lr_decay);

    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for (i, row) in train.rows().iter().enumerate() {
        if row.label() == 1 {
            pos.push(i);
        } else {
            neg.push(i);
        }
    }
    let steps_per_epoch = train.len().div_ceil(config.batch_size).max(1);

    let mut history = Vec::with_capacity(config.epochs);
    let mut stopped_early = false;
    let mut step_count = 0usize;
    let mut final_loss = f64::NAN;

    for epoch in 1..=config.epochs {
        let lw = config.loss_weights_at(epoch, layout, n)?;
        let mut epoch_loss = 0.0;
        for step in 0..steps_per_epoch {
            let batch_idx =
                balance_batch_from_parts(&pos, &neg, train.len(), config.batch_size, &mut rng);
            let batch: Vec<Example> = batch_idx
                .indices
                .iter()
                .map(|&i| train.rows()[i].clone())
                .collect();
            let (parts, mut grad) =
                total_loss_and_grad(&weights, &batch, layout, act, config.op_mode, &lw)?;
            if !parts.total.is_finite() || !grad.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, step });
            }
            clip_gradients(&mut grad, config.clip_norm);
            step_count += 1;
            adam_step(
                weights.as_mut_slice(),
                grad.as_slice(),
                &mut adam,
                &adam_hp,
                step_count,
            )?;
            epoch_loss += parts.total;
        }
        let loss = epoch_loss / steps_per_epoch as f64;
        final_loss = loss;
        let train_acc = evaluate(&weights, act, config.op_mode, train)?;
        let val_acc = evaluate(&weights, act, config.op_mode, val)?;
        history.push(EpochStats {
            epoch,
            loss,
            train_accuracy: train_acc,
            val_accuracy: val_acc,
        });
        if val_acc >= config.accuracy_threshold && 5 * epoch >= config.epochs {
            stopped_early = epoch < config.epochs;
            break;
        }
    }

    let train_accuracy = evaluate(&weights, act, config.op_mode, train)?;
    let val_accuracy = evaluate(&weights, act, config.op_mode, val)?;
    Ok(TrainReport {
        history,
        weights,
        seed,
        train_accuracy,
        val_accuracy,
        final_loss,
        stopped_early,
        wall_time_secs: started.elapsed().as_secs_f64(),
    })
}

/// One row of the search log.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AttemptSummary {
    pub n: usize,
    pub restart: usize,
    pub seed: u64,
    pub val_accuracy: f64,
    pub train_accuracy: f64,
    pub final_loss: f64,
    pub epochs_run: usize,
}

/// Result of the incremental subrule-count search.
#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub report: TrainReport,
    pub n: usize,
    pub restart: usize,
    pub met_threshold: bool,
    pub attempts: Vec<AttemptSummary>,
}

/// Incremental search over the subrule count: for each `n` from 1 upward,
/// runs `config.restarts` restarts (seeds `seed + restart index`, in
/// parallel) and selects the smallest `n` whose best validation accuracy
/// reaches the threshold. If none does, the globally best validation
/// accuracy wins, with ties broken by smaller `n` and then lower final loss.
pub fn search_rule_count(
    config: &TrainConfig,
    layout: &VariableLayout,
    train: &Dataset,
    val: &Dataset,
    n_max: usize,
) -> Result<SearchOutcome> {
    config.validate()?;
    if n_max == 0 {
        return Err(Error::NotPositive("n_max", 0.0));
    }
    let mut attempts = Vec::new();
    let mut global_best: Option<(TrainReport, usize, usize)> = None;

    for n in 1..=n_max {
        let reports: Vec<TrainReport> = (0..config.restarts)
            .into_par_iter()
            .map(|r| train_once(config, layout, train, val, n, config.seed + r as u64))
            .collect::<Result<Vec<_>>>()?;
        for (r, report) in reports.iter().enumerate() {
            attempts.push(AttemptSummary {
                n,
                restart: r,
                seed: report.seed,
                val_accuracy: report.val_accuracy,
                train_accuracy: report.train_accuracy,
                final_loss: report.final_loss,
                epochs_run: report.history.len(),
            });
        }
        let (best_restart, best) = reports
            .into_iter()
            .enumerate()
            .max_by(|(ra, a), (rb, b)| {
                a.val_accuracy
                    .partial_cmp(&b.val_accuracy)
                    .unwrap_or(std::cmp::Ordering::Equal)
                    // lower loss wins a tie, then the earlier restart
                    .then_with(|| {
                        b.final_loss
                            .partial_cmp(&a.final_loss)
                            .unwrap_or(std::cmp::Ordering::Equal)
                    })
                    .then_with(|| rb.cmp(ra))
            })
            .expect("at least one restart");
        let meets = best.val_accuracy >= config.accuracy_threshold;
        let better_than_global = match &global_best {
            None => true,
            Some((g, _, _)) => {
                best.val_accuracy > g.val_accuracy
                    || (best.val_accuracy == g.val_accuracy && best.final_loss < g.final_loss)
            }
        };
        if better_than_global {
            global_best = Some((best, n, best_restart));
        }
        if meets {
            let (report, n, restart) = global_best.expect("just set");
            return Ok(SearchOutcome {
                report,
                n,
                restart,
                met_threshold: true,
                attempts,
            });
        }
    }
    let (report, n, restart) = global_best.expect("n_max >= 1");
    Ok(SearchOutcome {
        report,
        n,
        restart,
        met_threshold: false,
        attempts,
    })
}

/// Convenience wrapper: splits a single dataset with the configured fraction
/// (seeded by `config.seed`) and runs the search.
pub fn search_with_split(
    config: &TrainConfig,
    layout: &VariableLayout,
    data: &Dataset,
    n_max: usize,
) -> Result<(SearchOutcome, Dataset, Dataset)> {
    let (train, val) = split(data, config.split_fraction, config.seed)?;
    let outcome = search_rule_count(config, layout, &train, &val, n_max)?;
    Ok((outcome, train, val))
}
