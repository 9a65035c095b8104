//! Tail and generalization bound calculators, and the bias of IPS under
//! misspecified propensities.
//!
//! All formulas use the natural log; tests pin the constants exactly.

use alloc::format;

use crate::loss::{LossEvaluator, LossKind};
use crate::math;
use crate::matrix::{PropensityMatrix, RatingMatrix, RatingScale};
use crate::{Error, Result};

/// Shared parameters of the bound formulas.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundInputs {
    /// Loss range: 0 <= delta <= delta_max. Zero collapses every bound
    /// to the plain estimate.
    pub delta_max: f64,
    /// Confidence parameter in (0, 1); the bounds hold with probability
    /// 1 - eta.
    pub eta: f64,
    /// Size of the hypothesis space |H|.
    pub hypothesis_count: usize,
}

impl BoundInputs {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta_max >= 0.0 && self.delta_max.is_finite()) {
            return Err(Error::InvalidConfig {
                reason: format!(
                    "loss range {} must be finite and nonnegative",
                    self.delta_max
                ),
            });
        }
        check_eta(self.eta)?;
        if self.hypothesis_count == 0 {
            return Err(Error::InvalidConfig {
                reason: "hypothesis count must be at least 1".into(),
            });
        }
        Ok(())
    }
}

fn check_eta(eta: f64) -> Result<()> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::InvalidConfig {
            reason: format!("confidence parameter {eta} must lie in (0, 1)"),
        });
    }
    Ok(())
}

/// High-probability deviation bound for the IPS estimate on a known
/// instance:
///
///   (1/(U·I)) * sqrt( (ln(2/eta)/2) * sum rho^2 )
///
/// with rho = delta/P at cells where P < 1 and rho = 0 where P = 1
/// (fully revealed cells cannot deviate).
pub fn ips_tail_bound(
    truth: &RatingMatrix,
    pred: &RatingMatrix,
    props: &PropensityMatrix,
    kind: LossKind,
    eta: f64,
) -> Result<f64> {
    truth.same_dims(pred)?;
    props.same_dims_as(truth.users(), truth.items())?;
    check_eta(eta)?;
    let eval = LossEvaluator::new(pred, kind, RatingScale::default())?;
    let mut sum_rho_sq = 0.0;
    for u in 0..truth.users() {
        for i in 0..truth.items() {
            let p = props[(u, i)];
            if p < 1.0 {
                let rho = eval.loss(u, i, truth[(u, i)])? / p;
                sum_rho_sq += rho * rho;
            }
        }
    }
    let cells = truth.cells() as f64;
    Ok(math::sqrt(math::ln(2.0 / eta) / 2.0 * sum_rho_sq) / cells)
}

/// Generalization error bound for propensity-weighted ERM over a finite
/// hypothesis space:
///
///   ips_value + (delta_max/(U·I)) * sqrt(ln(2|H|/eta)/2) * sqrt(sum 1/P^2)
pub fn erm_bound(ips_value: f64, inputs: &BoundInputs, props: &PropensityMatrix) -> Result<f64> {
    inputs.validate()?;
    let mut sum_inv_sq = 0.0;
    for &p in props.values() {
        sum_inv_sq += 1.0 / (p * p);
    }
    let cells = (props.users() * props.items()) as f64;
    let log_factor = math::ln(2.0 * inputs.hypothesis_count as f64 / inputs.eta);
    Ok(
        ips_value
            + inputs.delta_max / cells * math::sqrt(log_factor / 2.0) * math::sqrt(sum_inv_sq),
    )
}

/// Bias of the IPS estimate when evaluated with propensities `est_props`
/// while reveals actually follow `true_props`:
///
///   sum over cells of (delta/(U·I)) * (1 - P/P_est)
///
/// The sign convention is truth minus expectation: the returned value
/// equals true_risk - E[IPS with est_props].
pub fn ips_bias(
    truth: &RatingMatrix,
    pred: &RatingMatrix,
    true_props: &PropensityMatrix,
    est_props: &PropensityMatrix,
    kind: LossKind,
) -> Result<f64> {
    truth.same_dims(pred)?;
    true_props.same_dims_as(truth.users(), truth.items())?;
    est_props.same_dims_as(truth.users(), truth.items())?;
    let eval = LossEvaluator::new(pred, kind, RatingScale::default())?;
    let cells = truth.cells() as f64;
    let mut bias = 0.0;
    for u in 0..truth.users() {
        for i in 0..truth.items() {
            let delta = eval.loss(u, i, truth[(u, i)])?;
            bias += delta / cells * (1.0 - true_props[(u, i)] / est_props[(u, i)]);
        }
    }
    Ok(bias)
}

/// Generalization bound under inaccurate propensities: adds a bias term
/// on top of the variance term of [`erm_bound`], both evaluated with the
/// estimated propensities.
///
///   ips_value + (delta_max/(U·I)) * sum |1 - P/P_est|
///             + (delta_max/(U·I)) * sqrt(ln(2|H|/eta)/2) * sqrt(sum 1/P_est^2)
///
/// The bias term bounds each unknown per-entry loss by delta_max, which
/// is why the true ratings and predictions do not appear.
pub fn erm_bound_inaccurate(
    ips_value: f64,
    inputs: &BoundInputs,
    true_props: &PropensityMatrix,
    est_props: &PropensityMatrix,
) -> Result<f64> {
    inputs.validate()?;
    true_props.same_dims_as(est_props.users(), est_props.items())?;
    let cells = (est_props.users() * est_props.items()) as f64;
    let mut bias_sum = 0.0;
    for (&p, &p_est) in true_props.values().iter().zip(est_props.values()) {
        bias_sum += (1.0 - p / p_est).abs();
    }
    let with_bias = ips_value + inputs.delta_max / cells * bias_sum;
    erm_bound(with_bias, inputs, est_props)
}
