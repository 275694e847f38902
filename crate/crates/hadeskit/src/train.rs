//! Two-phase semi-supervised training and the evaluation harness.
//!
//! Phase 1 trains on the labeled subset with plain binary cross-entropy.
//! The phase-1 model then pseudo-labels the unlabeled pool, keeping only
//! predictions whose confidence clears the threshold τ. Phase 2 minimizes
//! the mixed loss `L = (1−λ)·L⁺ + λ·L⁻` with pseudo labels frozen for the
//! whole phase. Gradients inside a batch are computed per chunk (optionally
//! in parallel) and reduced in index order, so the parameter trajectory is a
//! pure function of data, configuration, and seed.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::LabelSource;
use crate::error::{Error, Result};
use crate::model::{nll_loss, ChunkInput, Model, Prediction};
use crate::nn::{Adam, GradStore, ParamLeaves, Tape};

/// Training hyper-parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs_phase1: usize,
    pub epochs_phase2: usize,
    /// Mixing weight of the pseudo-labeled loss, in [0, 1].
    pub lambda: f64,
    /// Pseudo-label confidence threshold, in (0.5, 1].
    pub tau: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 0.001,
            batch_size: 128,
            epochs_phase1: 50,
            epochs_phase2: 50,
            lambda: 0.5,
            tau: 0.95,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lr <= 0.0 || self.batch_size == 0 {
            return Err(Error::Config("lr and batch_size must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::Config("lambda must be in [0, 1]".into()));
        }
        if !(self.tau > 0.5 && self.tau <= 1.0) {
            return Err(Error::Config("tau must be in (0.5, 1]".into()));
        }
        Ok(())
    }
}

/// One chunk prepared for training or evaluation.
#[derive(Debug, Clone)]
pub struct Sample {
    pub chunk_id: String,
    pub window_start: u64,
    pub input: ChunkInput,
    pub label: Option<u8>,
    pub source: LabelSource,
}

/// Mixed-loss decomposition for one epoch or batch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    #[serde(rename = "L_plus")]
    pub l_plus: f64,
    #[serde(rename = "L_minus")]
    pub l_minus: f64,
    #[serde(rename = "L_total")]
    pub l_total: f64,
}

impl LossReport {
    pub fn mixed(l_plus: f64, l_minus: f64, lambda: f64) -> Self {
        Self {
            l_plus,
            l_minus,
            l_total: (1.0 - lambda) * l_plus + lambda * l_minus,
        }
    }
}

/// One line of the JSONL training log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochRecord {
    pub phase: u8,
    pub epoch: usize,
    #[serde(flatten)]
    pub loss: LossReport,
}

/// Confusion counts and the derived measurements.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    #[serde(rename = "TP")]
    pub tp: u64,
    #[serde(rename = "FP")]
    pub fp: u64,
    #[serde(rename = "FN")]
    pub fn_: u64,
    #[serde(rename = "TN")]
    pub tn: u64,
    #[serde(rename = "Rec")]
    pub rec: f64,
    #[serde(rename = "Pre")]
    pub pre: f64,
    #[serde(rename = "F1")]
    pub f1: f64,
}

impl EvalReport {
    pub fn from_counts(tp: u64, fp: u64, fn_: u64, tn: u64) -> Self {
        let rec = if tp + fn_ == 0 { 1.0 } else { tp as f64 / (tp + fn_) as f64 };
        let pre = if tp + fp == 0 { 1.0 } else { tp as f64 / (tp + fp) as f64 };
        let f1 = if 2 * tp + fn_ + fp == 0 {
            1.0
        } else {
            2.0 * tp as f64 / (2 * tp + fn_ + fp) as f64
        };
        Self { tp, fp, fn_, tn, rec, pre, f1 }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

/// Mean binary cross-entropy of explicit probability pairs, with the
/// probability of the labeled class clamped away from 0 and 1.
pub fn bce_loss(probabilities: &[(f64, f64)], labels: &[u8]) -> Result<f64> {
    if probabilities.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if probabilities.len() != labels.len() {
        return Err(Error::Shape("probabilities and labels differ in length".into()));
    }
    let mut sum = 0.0;
    for ((p0, p1), &y) in probabilities.iter().zip(labels) {
        let p = if y == 0 { *p0 } else { *p1 };
        let p = p.clamp(1e-12, 1.0 - 1e-12);
        sum += -p.ln();
    }
    Ok(sum / probabilities.len() as f64)
}

/// Forward + backward for one sample; loss per the clamped NLL node.
fn sample_grads(model: &Model, sample: &Sample, label: u8) -> Result<(GradStore, f64)> {
    let mut tape = Tape::new();
    let leaves = ParamLeaves::register(&mut tape, &model.params);
    let logits = model.forward_logits(&mut tape, &leaves, &sample.input)?;
    let loss_var = nll_loss(&mut tape, logits, label);
    let loss = tape.value(loss_var)[[0, 0]];
    let mut grads = tape.backward(loss_var);
    let mut store = GradStore::new();
    leaves.collect_grads(&mut grads, &mut store, 1.0);
    Ok((store, loss))
}

/// Mean gradient over a batch, computed per chunk in parallel and reduced in
/// index order. Returns `(grads · scale, mean loss)`.
fn batch_grads(model: &Model, batch: &[&Sample], scale: f64) -> Result<(GradStore, f64)> {
    let per_chunk: Vec<Result<(GradStore, f64)>> = batch
        .par_iter()
        .map(|s| {
            let label = s.label.expect("training sample must carry a label");
            sample_grads(model, s, label)
        })
        .collect();
    let mut merged = GradStore::new();
    let mut loss_sum = 0.0;
    let n = batch.len() as f64;
    for item in per_chunk {
        let (store, loss) = item?;
        merged.merge(&store, scale / n);
        loss_sum += loss;
    }
    Ok((merged, loss_sum / n))
}

fn check_finite(loss: f64, what: &str) -> Result<()> {
    if !loss.is_finite() {
        return Err(Error::Numerical(format!("{what} loss diverged to {loss}")));
    }
    Ok(())
}

/// Supervised warm-up on the labeled subset.
pub fn phase1_train(
    model: &mut Model,
    train_labeled: &[Sample],
    config: &TrainConfig,
) -> Result<Vec<EpochRecord>> {
    config.validate()?;
    if train_labeled.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let has = |y: u8| train_labeled.iter().any(|s| s.label == Some(y));
    if !has(0) || !has(1) {
        return Err(Error::DegenerateLabels);
    }

    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let mut adam = Adam::new(config.lr);
    let mut trace = Vec::with_capacity(config.epochs_phase1);
    let mut order: Vec<usize> = (0..train_labeled.len()).collect();

    for epoch in 0..config.epochs_phase1 {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        for batch_idx in order.chunks(config.batch_size) {
            let batch: Vec<&Sample> = batch_idx.iter().map(|&i| &train_labeled[i]).collect();
            let (grads, loss) = batch_grads(model, &batch, 1.0)?;
            check_finite(loss, "phase-1")?;
            adam.step(&mut model.params, &grads);
            loss_sum += loss * batch.len() as f64;
            seen += batch.len();
        }
        let l_plus = loss_sum / seen as f64;
        trace.push(EpochRecord {
            phase: 1,
            epoch,
            loss: LossReport::mixed(l_plus, 0.0, 0.0),
        });
    }
    model.params.check_finite()?;
    Ok(trace)
}

/// Predict the unlabeled pool and keep the confident chunks as pseudo-labeled
/// samples (label_source = pseudo). Low-confidence chunks are left out.
pub fn pseudo_label(model: &Model, unlabeled: &[Sample], tau: f64) -> Result<Vec<Sample>> {
    let predictions: Vec<Result<Prediction>> = unlabeled
        .par_iter()
        .map(|s| model.predict(&s.input))
        .collect();
    let mut kept = Vec::new();
    for (sample, pred) in unlabeled.iter().zip(predictions) {
        let pred = pred?;
        if pred.confidence >= tau {
            let mut s = sample.clone();
            s.label = Some(pred.label);
            s.source = LabelSource::Pseudo;
            kept.push(s);
        }
    }
    Ok(kept)
}

/// Mixed-loss phase: every step pairs a labeled mini-batch with a
/// pseudo-labeled mini-batch drawn in lockstep; pseudo labels stay frozen.
/// An empty pseudo set (or λ = 0) degrades to supervised training on the
/// labeled data alone.
pub fn phase2_train(
    model: &mut Model,
    train_labeled: &[Sample],
    pseudo_labeled: &[Sample],
    config: &TrainConfig,
) -> Result<Vec<EpochRecord>> {
    config.validate()?;
    if train_labeled.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let use_pseudo = !pseudo_labeled.is_empty() && config.lambda > 0.0;
    if pseudo_labeled.is_empty() && config.epochs_phase2 > 0 {
        eprintln!("warning: empty pseudo-labeled set; phase 2 degrades to supervised training");
    }
    if config.lambda == 1.0 && pseudo_labeled.is_empty() {
        // The whole objective weight sits on an empty term: nothing to do.
        return Ok(Vec::new());
    }

    let mut labeled_rng = ChaCha20Rng::seed_from_u64(config.seed);
    labeled_rng.set_stream(2);
    let mut pseudo_rng = ChaCha20Rng::seed_from_u64(config.seed);
    pseudo_rng.set_stream(3);

    let mut adam = Adam::new(config.lr);
    let mut trace = Vec::with_capacity(config.epochs_phase2);
    let mut labeled_order: Vec<usize> = (0..train_labeled.len()).collect();
    let mut pseudo_order: Vec<usize> = (0..pseudo_labeled.len()).collect();
    let mut pseudo_cursor = pseudo_order.len(); // force a shuffle on first draw

    for epoch in 0..config.epochs_phase2 {
        labeled_order.shuffle(&mut labeled_rng);
        let mut plus_sum = 0.0;
        let mut minus_sum = 0.0;
        let mut steps = 0usize;
        for batch_idx in labeled_order.chunks(config.batch_size) {
            let labeled_batch: Vec<&Sample> =
                batch_idx.iter().map(|&i| &train_labeled[i]).collect();
            let (mut grads, l_plus) = batch_grads(model, &labeled_batch, 1.0 - config.lambda)?;
            check_finite(l_plus, "phase-2 labeled")?;

            let l_minus = if use_pseudo {
                let mut batch = Vec::with_capacity(config.batch_size.min(pseudo_labeled.len()));
                for _ in 0..config.batch_size.min(pseudo_labeled.len()) {
                    if pseudo_cursor >= pseudo_order.len() {
                        pseudo_order.shuffle(&mut pseudo_rng);
                        pseudo_cursor = 0;
                    }
                    batch.push(&pseudo_labeled[pseudo_order[pseudo_cursor]]);
                    pseudo_cursor += 1;
                }
                let (pseudo_grads, l_minus) = batch_grads(model, &batch, config.lambda)?;
                check_finite(l_minus, "phase-2 pseudo")?;
                grads.merge(&pseudo_grads, 1.0);
                l_minus
            } else {
                0.0
            };

            adam.step(&mut model.params, &grads);
            plus_sum += l_plus;
            minus_sum += l_minus;
            steps += 1;
        }
        trace.push(EpochRecord {
            phase: 2,
            epoch,
            loss: LossReport::mixed(plus_sum / steps as f64, minus_sum / steps as f64, config.lambda),
        });
    }
    model.params.check_finite()?;
    Ok(trace)
}

/// Confusion counts over a human-labeled test set.
pub fn evaluate(model: &Model, test: &[Sample]) -> Result<EvalReport> {
    if test.is_empty() {
        return Err(Error::EmptyTestSet);
    }
    for s in test {
        if s.label.is_none() {
            return Err(Error::Data(format!(
                "test chunk {} carries no label",
                s.chunk_id
            )));
        }
    }
    let predictions: Vec<Result<Prediction>> =
        test.par_iter().map(|s| model.predict(&s.input)).collect();
    let mut preds = Vec::with_capacity(test.len());
    for p in predictions {
        preds.push(p?);
    }
    Ok(confusion(&preds, test))
}

/// Count TP/FP/FN/TN between predictions and labeled samples.
pub fn confusion(preds: &[Prediction], test: &[Sample]) -> EvalReport {
    let (mut tp, mut fp, mut fn_, mut tn) = (0u64, 0u64, 0u64, 0u64);
    for (pred, s) in preds.iter().zip(test) {
        match (pred.label, s.label.unwrap()) {
            (1, 1) => tp += 1,
            (1, 0) => fp += 1,
            (0, 1) => fn_ += 1,
            (0, 0) => tn += 1,
            _ => unreachable!("labels are binary"),
        }
    }
    EvalReport::from_counts(tp, fp, fn_, tn)
}
