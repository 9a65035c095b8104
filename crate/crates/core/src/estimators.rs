//! Naive, IPS and SNIPS risk estimators over observed entries, plus an
//! exact-expectation oracle that enumerates every observation pattern of
//! a small instance.

use alloc::vec::Vec;

use crate::loss::{LossEvaluator, LossKind};
use crate::matrix::{ObservationSample, PropensityMatrix, RatingMatrix, RatingScale};
use crate::{Error, Result};

/// Largest U·I the enumeration oracle accepts (2^cells patterns).
pub const MAX_ORACLE_CELLS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorKind {
    Naive,
    Ips,
    Snips,
}

impl core::fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            EstimatorKind::Naive => write!(f, "Naive"),
            EstimatorKind::Ips => write!(f, "IPS"),
            EstimatorKind::Snips => write!(f, "SNIPS"),
        }
    }
}

/// One estimate plus the quantities it was assembled from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimateReport {
    pub estimator: EstimatorKind,
    pub value: f64,
    /// Number of observed entries that entered the sum.
    pub observed: usize,
    /// Denominator: observed count (Naive), U·I (IPS), or the sum of
    /// inverse propensities (SNIPS).
    pub normalizer: f64,
}

/// Mean over observed entries, ignoring propensities.
pub fn naive_estimate(
    obs: &ObservationSample,
    pred: &RatingMatrix,
    kind: LossKind,
) -> Result<EstimateReport> {
    let eval = LossEvaluator::new(pred, kind, RatingScale::default())?;
    naive_estimate_with(obs, &eval)
}

pub fn naive_estimate_with(
    obs: &ObservationSample,
    eval: &LossEvaluator,
) -> Result<EstimateReport> {
    if obs.is_empty() {
        return Err(Error::UndefinedEstimate { estimator: "naive" });
    }
    let mut sum = 0.0;
    for e in obs.iter() {
        sum += eval.loss(e.user, e.item, e.rating)?;
    }
    Ok(EstimateReport {
        estimator: EstimatorKind::Naive,
        value: sum / obs.len() as f64,
        observed: obs.len(),
        normalizer: obs.len() as f64,
    })
}

/// Inverse-propensity-scored estimate: (1/(U·I)) sum of delta/P over
/// observed entries. An empty sample yields 0, the literal empty sum.
pub fn ips_estimate(
    obs: &ObservationSample,
    pred: &RatingMatrix,
    props: &PropensityMatrix,
    kind: LossKind,
) -> Result<EstimateReport> {
    let eval = LossEvaluator::new(pred, kind, RatingScale::default())?;
    ips_estimate_with(obs, props, &eval)
}

pub fn ips_estimate_with(
    obs: &ObservationSample,
    props: &PropensityMatrix,
    eval: &LossEvaluator,
) -> Result<EstimateReport> {
    props.same_dims_as(obs.users(), obs.items())?;
    let cells = (obs.users() * obs.items()) as f64;
    let mut sum = 0.0;
    for e in obs.iter() {
        sum += eval.loss(e.user, e.item, e.rating)? / props[(e.user, e.item)];
    }
    Ok(EstimateReport {
        estimator: EstimatorKind::Ips,
        value: sum / cells,
        observed: obs.len(),
        normalizer: cells,
    })
}

/// Self-normalized IPS: (sum delta/P) / (sum 1/P) over observed entries.
pub fn snips_estimate(
    obs: &ObservationSample,
    pred: &RatingMatrix,
    props: &PropensityMatrix,
    kind: LossKind,
) -> Result<EstimateReport> {
    let eval = LossEvaluator::new(pred, kind, RatingScale::default())?;
    snips_estimate_with(obs, props, &eval)
}

pub fn snips_estimate_with(
    obs: &ObservationSample,
    props: &PropensityMatrix,
    eval: &LossEvaluator,
) -> Result<EstimateReport> {
    props.same_dims_as(obs.users(), obs.items())?;
    if obs.is_empty() {
        return Err(Error::UndefinedEstimate { estimator: "snips" });
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for e in obs.iter() {
        let p = props[(e.user, e.item)];
        num += eval.loss(e.user, e.item, e.rating)? / p;
        den += 1.0 / p;
    }
    Ok(EstimateReport {
        estimator: EstimatorKind::Snips,
        value: num / den,
        observed: obs.len(),
        normalizer: den,
    })
}

/// Exact first and second moments of an estimator under the reveal model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactMoments {
    pub mean: f64,
    pub variance: f64,
    /// Probability mass of patterns on which the estimator is undefined
    /// (the all-hidden pattern, for Naive and SNIPS). The mean and
    /// variance condition on the defined patterns. Always 0 for IPS.
    pub undefined_mass: f64,
}

/// Enumerates all 2^(U·I) observation patterns: entries reveal
/// independently with `true_props`, the estimator is evaluated with
/// `eval_props`. Exact up to float rounding; U·I must not exceed
/// [`MAX_ORACLE_CELLS`].
pub fn exact_expectation(
    truth: &RatingMatrix,
    pred: &RatingMatrix,
    true_props: &PropensityMatrix,
    eval_props: &PropensityMatrix,
    kind: LossKind,
    estimator: EstimatorKind,
) -> Result<ExactMoments> {
    truth.same_dims(pred)?;
    true_props.same_dims_as(truth.users(), truth.items())?;
    eval_props.same_dims_as(truth.users(), truth.items())?;
    let cells = truth.cells();
    if cells > MAX_ORACLE_CELLS {
        return Err(Error::InstanceTooLarge {
            cells,
            max: MAX_ORACLE_CELLS,
        });
    }

    let eval = LossEvaluator::new(pred, kind, RatingScale::default())?;
    let items = truth.items();
    let mut delta = Vec::with_capacity(cells);
    for cell in 0..cells {
        let (u, i) = (cell / items, cell % items);
        delta.push(eval.loss(u, i, truth[(u, i)])?);
    }
    let p_true = true_props.values();
    let p_eval = eval_props.values();

    let mut defined_mass = 0.0;
    let mut undefined_mass = 0.0;
    let mut first = 0.0;
    let mut second = 0.0;
    for pattern in 0u32..(1u32 << cells) {
        let mut prob = 1.0;
        let mut weighted = 0.0;
        let mut inv_sum = 0.0;
        let mut plain = 0.0;
        let mut revealed = 0usize;
        for cell in 0..cells {
            if pattern & (1 << cell) != 0 {
                prob *= p_true[cell];
                weighted += delta[cell] / p_eval[cell];
                inv_sum += 1.0 / p_eval[cell];
                plain += delta[cell];
                revealed += 1;
            } else {
                prob *= 1.0 - p_true[cell];
            }
        }
        let value = match estimator {
            EstimatorKind::Ips => weighted / cells as f64,
            EstimatorKind::Snips | EstimatorKind::Naive if revealed == 0 => {
                undefined_mass += prob;
                continue;
            }
            EstimatorKind::Snips => weighted / inv_sum,
            EstimatorKind::Naive => plain / revealed as f64,
        };
        defined_mass += prob;
        first += prob * value;
        second += prob * value * value;
    }

    let mean = first / defined_mass;
    let variance = (second / defined_mass - mean * mean).max(0.0);
    Ok(ExactMoments {
        mean,
        variance,
        undefined_mass,
    })
}
