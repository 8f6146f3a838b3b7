//! Central finite-difference verification of tape gradients.
//!
//! The builder closure must be a deterministic function of the tape (same
//! seed, same graph); the checker re-runs it with one parameter element
//! nudged at a time and compares the difference quotient against the
//! adjoint from `backward`.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tape::{NodeId, ParamTweak, Tape};

/// Default relative tolerance for gradient checks.
pub const DEFAULT_TOL: f64 = 1e-4;

/// Central finite-difference step, applied on standardized-scale values.
pub const FD_STEP: f64 = 1e-5;

/// Guard for the relative-error denominator.
pub const DENOM_GUARD: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub parameters: usize,
    pub elements: usize,
    pub max_rel_err: f64,
    pub tol: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err <= self.tol
    }
}

/// Compare analytic gradients of a scalar-rooted graph against central
/// finite differences, for every element of every trainable parameter.
pub fn grad_check<S, F>(seed: u64, tol: f64, build: F) -> Result<GradCheckReport>
where
    S: Scalar,
    F: Fn(&mut Tape<S>) -> Result<NodeId>,
{
    let mut tape = Tape::new(seed);
    let root = build(&mut tape)?;
    let value = tape.value(root);
    if !value.is_scalar() {
        return Err(Error::Contract(format!(
            "grad_check root must be scalar, got shape {:?}",
            value.dims()
        )));
    }
    if !value.all_finite() {
        return Err(Error::Eval("non-finite forward value in grad_check".into()));
    }
    let grads = tape.backward(root)?;

    let eval_at = |param_index: usize, element: usize, delta: f64| -> Result<f64> {
        let mut t = Tape::with_tweak(
            seed,
            ParamTweak {
                param_index,
                element,
                delta: S::of(delta),
            },
        );
        let r = build(&mut t)?;
        let v = t.value(r);
        if !v.all_finite() {
            return Err(Error::Eval(
                "non-finite forward value during finite differencing".into(),
            ));
        }
        Ok(v.as_scalar().expect("scalar root").as_f64())
    };

    let mut max_rel_err = 0.0f64;
    let mut elements = 0usize;
    for (k, grad) in grads.iter().enumerate() {
        for i in 0..grad.len() {
            let plus = eval_at(k, i, FD_STEP)?;
            let minus = eval_at(k, i, -FD_STEP)?;
            let fd = (plus - minus) / (2.0 * FD_STEP);
            let analytic = grad.data()[i].as_f64();
            let denom = fd.abs().max(analytic.abs()).max(DENOM_GUARD);
            let rel = (fd - analytic).abs() / denom;
            if rel > max_rel_err {
                max_rel_err = rel;
            }
            elements += 1;
        }
    }

    Ok(GradCheckReport {
        parameters: grads.len(),
        elements,
        max_rel_err,
        tol,
    })
}
