//! Physics-embedded coupling loss: data MSE, the interval-difference
//! penalty, the interval-correlation penalty, and their weighted sum.
//!
//! Every term is built on the tape in meters, so gradients flow back into
//! the network (and into the correlation head) through `backward`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tape::{NodeId, Tape, Value};

pub const DEFAULT_LAMBDA_DC: f64 = 0.01;
pub const DEFAULT_LAMBDA_COR: f64 = 0.1;

/// Epsilon inside the correlation log ratio, guarding underflow.
pub const LOG_GUARD: f64 = 1e-12;

/// Penalty weights of the coupling loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda_dc: f64,
    pub lambda_cor: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_dc: DEFAULT_LAMBDA_DC,
            lambda_cor: DEFAULT_LAMBDA_COR,
        }
    }
}

impl LossWeights {
    /// Both penalties disabled; the total reduces to the data term.
    pub fn data_only() -> Self {
        Self {
            lambda_dc: 0.0,
            lambda_cor: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.lambda_dc.is_finite() || self.lambda_dc < 0.0 {
            return Err(Error::Config(format!(
                "lambda_dc must be non-negative, got {}",
                self.lambda_dc
            )));
        }
        if !self.lambda_cor.is_finite() || self.lambda_cor < 0.0 {
            return Err(Error::Config(format!(
                "lambda_cor must be non-negative, got {}",
                self.lambda_cor
            )));
        }
        Ok(())
    }
}

/// Tape-bound linear correlation head `g = w_c·pred_l + b_c`; both scalars
/// are trainable and updated by the same optimizer as the network.
#[derive(Debug, Clone, Copy)]
pub struct CorrelationHead {
    pub w_c: NodeId,
    pub b_c: NodeId,
}

/// Initial values of the correlation head.
pub const CORRELATION_W_INIT: f64 = 1.0;
pub const CORRELATION_B_INIT: f64 = 0.0;

/// Mean squared error over all `2N` entries of the prediction matrix.
pub fn data_loss<S: Scalar>(tape: &mut Tape<S>, pred: NodeId, target: NodeId) -> Result<NodeId> {
    let (pd, td) = (tape.value(pred), tape.value(target));
    if pd.dims() != td.dims() {
        return Err(Error::Shape(format!(
            "data_loss shapes differ: {:?} vs {:?}",
            pd.dims(),
            td.dims()
        )));
    }
    if pd.is_empty() {
        return Err(Error::Contract("data_loss on an empty batch".into()));
    }
    let err = tape.sub(pred, target)?;
    let sq = tape.square(err);
    Ok(tape.mean(sq))
}

/// Interval-difference penalty `(1/N)·Σ relu(pred_l + y_IG - pred_u)²`.
/// Zero exactly when every sample keeps `pred_u ≥ pred_l + y_IG`.
pub fn difference_penalty<S: Scalar>(
    tape: &mut Tape<S>,
    pred_l: NodeId,
    pred_u: NodeId,
    y_ig: NodeId,
) -> Result<NodeId> {
    let (l, u, g) = (tape.value(pred_l), tape.value(pred_u), tape.value(y_ig));
    if l.rank() != 1 || l.dims() != u.dims() || l.dims() != g.dims() {
        return Err(Error::Shape(format!(
            "difference_penalty needs aligned vectors, got {:?}, {:?}, {:?}",
            l.dims(),
            u.dims(),
            g.dims()
        )));
    }
    if l.is_empty() {
        return Err(Error::Contract("difference_penalty on an empty batch".into()));
    }
    let shifted = tape.add(pred_l, y_ig)?;
    let residual = tape.sub(shifted, pred_u)?;
    let active = tape.relu(residual);
    let sq = tape.square(active);
    Ok(tape.mean(sq))
}

/// Interval-correlation penalty: with `g = w_c·pred_l + b_c`, `P` the
/// softmax of `g` over the batch and `Q` the softmax of `pred_u`, returns
/// `(1/N)·Σ |P_i·ln((P_i+ε)/(Q_i+ε))|`.
pub fn correlation_penalty<S: Scalar>(
    tape: &mut Tape<S>,
    pred_l: NodeId,
    pred_u: NodeId,
    head: &CorrelationHead,
) -> Result<NodeId> {
    let (l, u) = (tape.value(pred_l), tape.value(pred_u));
    if l.rank() != 1 || l.dims() != u.dims() {
        return Err(Error::Shape(format!(
            "correlation_penalty needs equal-length vectors, got {:?} vs {:?}",
            l.dims(),
            u.dims()
        )));
    }
    if l.len() < 2 {
        return Err(Error::Contract(
            "correlation_penalty needs a batch of at least 2 (a one-point distribution is degenerate)"
                .into(),
        ));
    }
    let scaled = tape.mul(head.w_c, pred_l)?;
    let g = tape.add(scaled, head.b_c)?;
    let p = tape.softmax(g)?;
    let q = tape.softmax(pred_u)?;
    let eps = tape.input(Value::scalar(S::of(LOG_GUARD)));
    let p_eps = tape.add(p, eps)?;
    let q_eps = tape.add(q, eps)?;
    let ln_p = tape.ln(p_eps);
    let ln_q = tape.ln(q_eps);
    let log_ratio = tape.sub(ln_p, ln_q)?;
    let weighted = tape.mul(p, log_ratio)?;
    let magnitude = tape.abs(weighted);
    Ok(tape.mean(magnitude))
}

/// `L = L_data + λ_DC·L_DC + λ_COR·L_COR`.
pub fn total_loss<S: Scalar>(
    tape: &mut Tape<S>,
    l_data: NodeId,
    l_dc: NodeId,
    l_cor: NodeId,
    weights: &LossWeights,
) -> Result<NodeId> {
    weights.validate().map_err(|e| Error::Contract(e.to_string()))?;
    for (name, id) in [("L_data", l_data), ("L_DC", l_dc), ("L_COR", l_cor)] {
        let v = tape.value(id);
        let x = v
            .as_scalar()
            .ok_or_else(|| Error::Contract(format!("{name} must be scalar")))?;
        if !x.is_finite() || x < S::zero() {
            return Err(Error::Contract(format!(
                "{name} must be finite and non-negative, got {x}"
            )));
        }
    }
    let dc = tape.scalar_mul(S::of(weights.lambda_dc), l_dc);
    let cor = tape.scalar_mul(S::of(weights.lambda_cor), l_cor);
    let partial = tape.add(l_data, dc)?;
    tape.add(partial, cor)
}

/// All loss nodes for one batch: the three terms plus the weighted total.
#[derive(Debug, Clone, Copy)]
pub struct LossNodes {
    pub data: NodeId,
    pub dc: NodeId,
    pub cor: NodeId,
    pub total: NodeId,
}

/// Assemble the full coupling loss from an N×2 prediction in meters.
pub fn coupling_loss<S: Scalar>(
    tape: &mut Tape<S>,
    pred: NodeId,
    target: NodeId,
    y_ig: NodeId,
    head: &CorrelationHead,
    weights: &LossWeights,
) -> Result<LossNodes> {
    let pred_l = tape.column(pred, 0)?;
    let pred_u = tape.column(pred, 1)?;
    let data = data_loss(tape, pred, target)?;
    let dc = difference_penalty(tape, pred_l, pred_u, y_ig)?;
    let cor = correlation_penalty(tape, pred_l, pred_u, head)?;
    let total = total_loss(tape, data, dc, cor, weights)?;
    Ok(LossNodes {
        data,
        dc,
        cor,
        total,
    })
}
