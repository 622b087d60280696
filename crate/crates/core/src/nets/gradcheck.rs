//! Central finite-difference verification of analytic gradients.

use crate::error::{Error, Result};

/// Sigmoid/tanh pre-activations beyond this magnitude have vanishing slope,
/// so finite differences there say nothing about the analytic gradient.
pub const SATURATION_LIMIT: f64 = 30.0;

/// Denominator floor for the per-parameter relative error.
const REL_FLOOR: f64 = 1e-6;

const MAX_PARAMS: usize = 1000;

/// A scalar loss of a flat parameter vector with an analytic gradient.
pub trait LossFunctional {
    fn loss(&mut self, params: &[f64]) -> f64;

    fn loss_and_grad(&mut self, params: &[f64]) -> (f64, Vec<f64>);

    /// Largest |pre-activation| of any saturating nonlinearity at `params`.
    fn max_preactivation(&mut self, _params: &[f64]) -> f64 {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
    Unreliable,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    /// `max_i |a_i - n_i| / max(|a_i|, |n_i|, 1e-6)`.
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub max_preactivation: f64,
    /// Saturated nonlinearities make the comparison meaningless.
    pub unreliable: bool,
}

impl GradCheck {
    pub fn verdict(&self, tolerance: f64) -> Verdict {
        if self.unreliable {
            Verdict::Unreliable
        } else if self.max_rel_error < tolerance {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }
}

pub fn gradient_check<F: LossFunctional + ?Sized>(
    functional: &mut F,
    params: &[f64],
    epsilon: f64,
) -> Result<GradCheck> {
    if !(1e-6..=1e-3).contains(&epsilon) {
        return Err(Error::InvalidArgument(format!(
            "epsilon {epsilon} outside [1e-6, 1e-3]"
        )));
    }
    if params.len() > MAX_PARAMS {
        return Err(Error::InvalidArgument(format!(
            "{} parameters exceeds the {MAX_PARAMS}-parameter limit",
            params.len()
        )));
    }
    let (loss, analytic) = functional.loss_and_grad(params);
    if !loss.is_finite() {
        return Err(Error::NonFinite(format!("loss {loss} at the check point")));
    }
    assert_eq!(analytic.len(), params.len());
    let max_pre = functional.max_preactivation(params);

    let mut probe = params.to_vec();
    let mut worst = (0.0f64, 0usize);
    for i in 0..params.len() {
        probe[i] = params[i] + epsilon;
        let plus = functional.loss(&probe);
        probe[i] = params[i] - epsilon;
        let minus = functional.loss(&probe);
        probe[i] = params[i];
        if !(plus.is_finite() && minus.is_finite()) {
            return Err(Error::NonFinite(format!(
                "loss at parameter {i} ± {epsilon}"
            )));
        }
        let numeric = (plus - minus) / (2.0 * epsilon);
        let a = analytic[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_FLOOR);
        if rel > worst.0 {
            worst = (rel, i);
        }
    }
    Ok(GradCheck {
        max_rel_error: worst.0,
        worst_index: worst.1,
        max_preactivation: max_pre,
        unreliable: max_pre > SATURATION_LIMIT,
    })
}
