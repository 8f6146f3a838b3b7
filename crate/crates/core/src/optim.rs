//! Adam optimizer and the training loop.
//!
//! Training is deterministic: (seed, data, config) fully determine the
//! final parameters and the loss history.

use serde::{Deserialize, Serialize};

use crate::data::Batch;
use crate::error::{Error, Result};
use crate::loss::{coupling_loss, LossWeights};
use crate::mechanism::difference_residual;
use crate::model::{Model, Provenance};
use crate::rng::{mix, Rng};
use crate::scalar::Scalar;
use crate::tape::{Mode, Tape, Value};

pub const DEFAULT_LEARNING_RATE: f64 = 1e-4;
pub const DEFAULT_EPOCHS: usize = 2000;

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: DEFAULT_LEARNING_RATE,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Per-parameter first/second moment estimates plus the step counter.
#[derive(Debug, Clone)]
pub struct AdamState<S> {
    first_moment: Vec<Vec<S>>,
    second_moment: Vec<Vec<S>>,
    step_count: u64,
}

impl<S: Scalar> AdamState<S> {
    pub fn new(shapes: &[usize]) -> Self {
        Self {
            first_moment: shapes.iter().map(|&n| vec![S::zero(); n]).collect(),
            second_moment: shapes.iter().map(|&n| vec![S::zero(); n]).collect(),
            step_count: 0,
        }
    }

    pub fn for_model(model: &Model<S>) -> Self {
        let shapes: Vec<usize> = model.params().iter().map(|p| p.len()).collect();
        Self::new(&shapes)
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// One Adam update with bias correction:
    /// `m ← β₁m + (1-β₁)g`, `v ← β₂v + (1-β₂)g²`,
    /// `p ← p - lr·m̂/(√v̂ + ε)` with `m̂ = m/(1-β₁ᵗ)`, `v̂ = v/(1-β₂ᵗ)`.
    pub fn step(
        &mut self,
        cfg: &AdamConfig,
        params: &mut [crate::model::ParamTensor<S>],
        grads: &[Value<S>],
    ) -> Result<()> {
        if params.len() != grads.len() || params.len() != self.first_moment.len() {
            return Err(Error::Contract(format!(
                "adam step got {} gradients for {} parameters",
                grads.len(),
                params.len()
            )));
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let beta1 = S::of(cfg.beta1);
        let beta2 = S::of(cfg.beta2);
        let lr = S::of(cfg.learning_rate);
        let eps = S::of(cfg.epsilon);
        let bias1 = S::one() - beta1.powi(t);
        let bias2 = S::one() - beta2.powi(t);

        for ((param, grad), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.first_moment.iter_mut().zip(&mut self.second_moment))
        {
            if param.len() != grad.len() {
                return Err(Error::Contract(format!(
                    "gradient for `{}` has {} elements, parameter has {}",
                    param.name,
                    grad.len(),
                    param.len()
                )));
            }
            if !grad.all_finite() {
                return Err(Error::Training(format!(
                    "non-finite gradient for parameter `{}`",
                    param.name
                )));
            }
            for ((p, &g), (mi, vi)) in param
                .data
                .iter_mut()
                .zip(grad.data())
                .zip(m.iter_mut().zip(v.iter_mut()))
            {
                *mi = beta1 * *mi + (S::one() - beta1) * g;
                *vi = beta2 * *vi + (S::one() - beta2) * g * g;
                let m_hat = *mi / bias1;
                let v_hat = *vi / bias2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Default mini-batch size. At the configured learning rate and epoch
/// count, a full-batch schedule moves each parameter by at most
/// `lr·epochs = 0.2`, which is not enough to fit the data; shuffled
/// mini-batches keep the schedule intact while giving the optimizer a
/// workable step budget.
pub const DEFAULT_BATCH_SIZE: usize = 16;

/// Training schedule. `batch_size = 0` means full-batch (one Adam step per
/// epoch); a positive value trains on shuffled mini-batches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub adam: AdamConfig,
    pub loss: LossWeights,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: DEFAULT_EPOCHS,
            adam: AdamConfig::default(),
            loss: LossWeights::default(),
            batch_size: DEFAULT_BATCH_SIZE,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        if !self.adam.learning_rate.is_finite() || self.adam.learning_rate <= 0.0 {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.adam.learning_rate
            )));
        }
        Ok(())
    }
}

/// Per-epoch loss record; the epoch index is 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub l_data: f64,
    pub l_dc: f64,
    pub l_cor: f64,
    pub total: f64,
    pub val_total: f64,
}

#[derive(Debug)]
pub struct TrainOutcome<S> {
    pub model: Model<S>,
    pub history: Vec<EpochRecord>,
    /// Difference-constraint violation rate on the training set, measured in
    /// eval mode after the first and after the last epoch.
    pub first_epoch_violations: Option<f64>,
    pub final_epoch_violations: Option<f64>,
}

struct LossValues {
    data: f64,
    dc: f64,
    cor: f64,
    total: f64,
}

fn run_loss_graph<S: Scalar>(
    model: &mut Model<S>,
    adam: Option<&mut AdamState<S>>,
    batch: &Batch<S>,
    weights: &LossWeights,
    adam_cfg: &AdamConfig,
    tape_seed: u64,
    mode: Mode,
) -> Result<LossValues> {
    let mut tape = Tape::new(tape_seed);
    let bound = model.bind(&mut tape);
    let pred = model.forward(&mut tape, &bound, &batch.features, batch.ym.as_deref(), mode)?;
    let target = tape.input(batch.targets.clone());
    let y_ig = tape.input(Value::vector(batch.y_ig.clone()));
    let nodes = coupling_loss(&mut tape, pred, target, y_ig, &bound.head, weights)?;
    let values = LossValues {
        data: tape.value(nodes.data).as_scalar().unwrap().as_f64(),
        dc: tape.value(nodes.dc).as_scalar().unwrap().as_f64(),
        cor: tape.value(nodes.cor).as_scalar().unwrap().as_f64(),
        total: tape.value(nodes.total).as_scalar().unwrap().as_f64(),
    };
    if !values.total.is_finite() {
        return Err(Error::Training("non-finite loss".into()));
    }
    if let Some(adam) = adam {
        let grads = tape.backward(nodes.total)?;
        adam.step(adam_cfg, model.params_mut(), &grads)?;
    }
    Ok(values)
}

fn train_violation_rate<S: Scalar>(model: &Model<S>, batch: &Batch<S>) -> Result<f64> {
    let preds = batch.predict(model)?;
    let violations = preds
        .iter()
        .zip(&batch.y_ig)
        .filter(|(p, &g)| difference_residual(p[0], p[1], g) > S::zero())
        .count();
    Ok(violations as f64 / preds.len().max(1) as f64)
}

/// Train a model on the prepared split, recording train and validation
/// total loss per epoch. Returns the final-epoch model (no early stopping;
/// validation is for reporting only).
pub fn train<S: Scalar>(
    model: Model<S>,
    train: &Batch<S>,
    val: &Batch<S>,
    cfg: &TrainConfig,
) -> Result<TrainOutcome<S>> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Contract("training split is empty".into()));
    }
    let mut model = model;
    let mut adam = AdamState::for_model(&model);
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut first_epoch_violations = None;
    let mut final_epoch_violations = None;

    let n = train.len();
    for epoch in 1..=cfg.epochs {
        let with_epoch = |e: Error| match e {
            Error::Training(msg) => Error::Training(format!("epoch {epoch}: {msg}")),
            other => other,
        };

        let terms = if cfg.batch_size == 0 || cfg.batch_size >= n {
            run_loss_graph(
                &mut model,
                Some(&mut adam),
                train,
                &cfg.loss,
                &cfg.adam,
                mix(cfg.seed, epoch as u64),
                Mode::Train,
            )
            .map_err(with_epoch)?
        } else {
            // Mini-batch path: shuffled chunks, one Adam step each, epoch
            // losses averaged over samples.
            let mut order: Vec<usize> = (0..n).collect();
            let mut rng = Rng::derive(cfg.seed, epoch as u64);
            rng.shuffle(&mut order);
            let mut sums = LossValues {
                data: 0.0,
                dc: 0.0,
                cor: 0.0,
                total: 0.0,
            };
            let mut seen = 0usize;
            for (c, chunk) in order.chunks(cfg.batch_size).enumerate() {
                // The correlation term needs at least two samples.
                if chunk.len() < 2 {
                    continue;
                }
                let sub = train.select(chunk);
                let terms = run_loss_graph(
                    &mut model,
                    Some(&mut adam),
                    &sub,
                    &cfg.loss,
                    &cfg.adam,
                    mix(mix(cfg.seed, epoch as u64), c as u64 + 1),
                    Mode::Train,
                )
                .map_err(with_epoch)?;
                let w = chunk.len() as f64;
                sums.data += terms.data * w;
                sums.dc += terms.dc * w;
                sums.cor += terms.cor * w;
                sums.total += terms.total * w;
                seen += chunk.len();
            }
            let w = seen.max(1) as f64;
            LossValues {
                data: sums.data / w,
                dc: sums.dc / w,
                cor: sums.cor / w,
                total: sums.total / w,
            }
        };

        let val_total = run_loss_graph(
            &mut model,
            None,
            val,
            &cfg.loss,
            &cfg.adam,
            0,
            Mode::Eval,
        )
        .map_err(with_epoch)?
        .total;

        history.push(EpochRecord {
            epoch,
            l_data: terms.data,
            l_dc: terms.dc,
            l_cor: terms.cor,
            total: terms.total,
            val_total,
        });

        if epoch == 1 {
            first_epoch_violations = Some(train_violation_rate(&model, train)?);
        }
        if epoch == cfg.epochs {
            final_epoch_violations = Some(train_violation_rate(&model, train)?);
        }
    }

    Ok(TrainOutcome {
        model,
        history,
        first_epoch_violations,
        final_epoch_violations,
    })
}

/// Loss-history CSV: provenance comment, header, one row per epoch.
pub fn write_history_csv<W: std::io::Write>(
    mut w: W,
    history: &[EpochRecord],
    provenance: &Provenance,
) -> Result<()> {
    writeln!(w, "{}", provenance.comment_line())?;
    writeln!(w, "epoch,l_data,l_dc,l_cor,total,val_total")?;
    for r in history {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.epoch, r.l_data, r.l_dc, r.l_cor, r.total, r.val_total
        )?;
    }
    Ok(())
}
