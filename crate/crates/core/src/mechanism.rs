//! Closed-form mixed-oil mechanism math: the Austin correlation, the
//! critical Reynolds number, the interval gap from the operation plan, and
//! the interval-difference residual.
//!
//! All lengths are meters, flowrates m³/h, durations minutes.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Pipeline geometry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipeSpec<S> {
    diameter: S,
    length: S,
}

impl<S: Scalar> PipeSpec<S> {
    pub fn new(diameter: S, length: S) -> Result<Self> {
        if !diameter.is_finite() || diameter <= S::zero() {
            return Err(Error::Domain(format!(
                "pipe diameter must be positive and finite, got {diameter}"
            )));
        }
        if !length.is_finite() || length <= S::zero() {
            return Err(Error::Domain(format!(
                "pipe length must be positive and finite, got {length}"
            )));
        }
        if diameter >= length {
            return Err(Error::Domain(format!(
                "pipe diameter ({diameter}) must be smaller than its length ({length})"
            )));
        }
        Ok(Self { diameter, length })
    }

    pub fn diameter(&self) -> S {
        self.diameter
    }

    pub fn length(&self) -> S {
        self.length
    }
}

/// Hydraulic state; the Reynolds number is an input feature, never derived
/// from fluid properties here.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowState<S> {
    reynolds: S,
}

impl<S: Scalar> FlowState<S> {
    pub fn new(reynolds: S) -> Result<Self> {
        if !reynolds.is_finite() || reynolds <= S::zero() {
            return Err(Error::Domain(format!(
                "Reynolds number must be positive and finite, got {reynolds}"
            )));
        }
        Ok(Self { reynolds })
    }

    pub fn reynolds(&self) -> S {
        self.reynolds
    }
}

/// Operator plan for receiving the batch interface: minimum distribution
/// flowrate (m³/h) and cutting delay (min).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperationPlan<S> {
    q_min: S,
    delay: S,
}

impl<S: Scalar> OperationPlan<S> {
    pub fn new(q_min: S, delay: S) -> Result<Self> {
        if !q_min.is_finite() || q_min < S::zero() {
            return Err(Error::Domain(format!(
                "minimum flowrate must be non-negative and finite, got {q_min}"
            )));
        }
        if !delay.is_finite() || delay < S::zero() {
            return Err(Error::Domain(format!(
                "delay duration must be non-negative and finite, got {delay}"
            )));
        }
        Ok(Self { q_min, delay })
    }

    pub fn q_min(&self) -> S {
        self.q_min
    }

    pub fn delay(&self) -> S {
        self.delay
    }
}

/// Critical Reynolds number `10000·exp(2.72·√d)`; the threshold between the
/// turbulent and laminar mixed-oil regimes. Strictly increasing in the
/// diameter, and at least 10000.
pub fn critical_reynolds<S: Scalar>(pipe: &PipeSpec<S>) -> S {
    S::of(10_000.0) * (S::of(2.72) * pipe.diameter.sqrt()).exp()
}

/// Mixed-oil length from the Austin correlation.
///
/// Turbulent branch `11.75·√d·√L·Re^-0.1` when `Re ≥ Re_j`, laminar branch
/// `18384·√d·√L·Re^-0.9·exp(2.18·√d)` otherwise. The tie at `Re = Re_j`
/// resolves to the turbulent branch.
pub fn austin_length<S: Scalar>(pipe: &PipeSpec<S>, flow: &FlowState<S>) -> S {
    let sqrt_d = pipe.diameter.sqrt();
    let sqrt_l = pipe.length.sqrt();
    let re = flow.reynolds;
    if re >= critical_reynolds(pipe) {
        S::of(11.75) * sqrt_d * sqrt_l * re.powf(S::of(-0.1))
    } else {
        S::of(18_384.0) * sqrt_d * sqrt_l * re.powf(S::of(-0.9)) * (S::of(2.18) * sqrt_d).exp()
    }
}

/// Minimum admissible distance between the interval limits,
/// `Q_m·T_d / 600`, in meters.
pub fn interval_gap<S: Scalar>(plan: &OperationPlan<S>) -> S {
    plan.q_min * plan.delay / S::of(600.0)
}

/// Interval-difference residual `y_l + y_IG - y_u`; non-positive values mean
/// the constraint is satisfied.
pub fn difference_residual<S: Scalar>(y_l: S, y_u: S, y_ig: S) -> S {
    y_l + y_ig - y_u
}
