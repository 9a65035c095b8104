//! Propensity estimation for the observational setting.
//!
//! Three models, in increasing order of information required: a uniform
//! baseline (observed fraction everywhere), Naive Bayes from revealed
//! ratings plus a small uniformly-sampled marginal sample, and logistic
//! regression on per-cell feature vectors. Also the fold scaling used by
//! cross-validation, and the numerical floor every emitted propensity
//! respects.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::math;
use crate::matrix::{ObservationSample, PropensityMatrix, RatingMatrix, RatingScale};
use crate::optimize::{minimize, Method, OptimizeConfig, StopReason};
use crate::{Error, Result};

/// Lower clamp for every propensity this module emits. Keeps inverse
/// weights finite under finite-precision fitting; distinct from the
/// variance-reduction clipping some estimators use, which is out of
/// scope here.
pub const DEFAULT_PROPENSITY_FLOOR: f64 = 1e-6;

fn clamp_to_unit(value: f64, floor: f64) -> f64 {
    value.clamp(floor, 1.0)
}

/// Constant matrix at the observed fraction |obs|/(U·I), floored when
/// the sample is empty.
pub fn uniform_propensities(obs: &ObservationSample) -> PropensityMatrix {
    let p = clamp_to_unit(obs.observed_fraction(), DEFAULT_PROPENSITY_FLOOR);
    PropensityMatrix::uniform(obs.users(), obs.items(), p).expect("clamped into (0, 1]")
}

/// Entrywise multiply by `factor`, then clamp back into [floor, 1].
///
/// Cross-validation charges each fold the share of the reveal
/// probability it retains: (k-1)/k on training folds, 1/k on the
/// held-out fold.
pub fn scale_for_cv(props: &PropensityMatrix, factor: f64) -> Result<PropensityMatrix> {
    if !(factor > 0.0 && factor <= 1.0) {
        return Err(Error::InvalidConfig {
            reason: format!("propensity scale factor {factor} must lie in (0, 1]"),
        });
    }
    let values = props
        .values()
        .iter()
        .map(|p| clamp_to_unit(p * factor, DEFAULT_PROPENSITY_FLOOR))
        .collect();
    PropensityMatrix::new(props.users(), props.items(), values)
}

/// A propensity value plus whether clamping changed it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClampedProbability {
    pub value: f64,
    pub clamped: bool,
}

// ── Naive Bayes ───────────────────────────────────────────────────────

/// Bayes-rule propensity model: P(O=1 | Y=r) = P(Y=r | O=1) P(O=1) / P(Y=r).
///
/// P(Y=r | O=1) comes from the revealed (selection-biased) ratings,
/// P(Y=r) from a separate uniformly-sampled rating set, both Laplace
/// smoothed.
#[derive(Debug, Clone, PartialEq)]
pub struct NaiveBayesPropensityModel {
    scale: RatingScale,
    /// P(Y=r | O=1), indexed by scale position.
    cond_rating_dist: Vec<f64>,
    /// P(O=1).
    reveal_rate: f64,
    /// P(Y=r), indexed by scale position.
    marginal_rating_dist: Vec<f64>,
    laplace_alpha: f64,
}

impl NaiveBayesPropensityModel {
    /// Fits from counts: revealed ratings give the conditional
    /// distribution and the reveal rate, `mcar_ratings` the marginal.
    /// `laplace_alpha` pseudo-counts are added per rating value to both.
    pub fn fit(
        mnar_obs: &ObservationSample,
        mcar_ratings: &[f64],
        laplace_alpha: f64,
        scale: RatingScale,
    ) -> Result<Self> {
        if mnar_obs.is_empty() {
            return Err(Error::UndefinedEstimate {
                estimator: "naive-bayes propensity",
            });
        }
        if !(laplace_alpha >= 0.0 && laplace_alpha.is_finite()) {
            return Err(Error::InvalidConfig {
                reason: format!("smoothing pseudo-count {laplace_alpha} must be finite and >= 0"),
            });
        }
        if mcar_ratings.is_empty() && laplace_alpha == 0.0 {
            return Err(Error::InvalidConfig {
                reason: "empty marginal sample needs a positive smoothing pseudo-count".into(),
            });
        }
        let cond = smoothed_histogram(mnar_obs.iter().map(|e| e.rating), scale, laplace_alpha)?;
        let marginal = smoothed_histogram(mcar_ratings.iter().copied(), scale, laplace_alpha)?;
        Ok(Self {
            scale,
            cond_rating_dist: cond,
            reveal_rate: mnar_obs.observed_fraction(),
            marginal_rating_dist: marginal,
            laplace_alpha,
        })
    }

    /// Builds directly from known distributions, bypassing counting;
    /// feeding the exact generating distributions reproduces the
    /// generating propensities to float precision.
    pub fn from_distributions(
        cond_rating_dist: Vec<f64>,
        reveal_rate: f64,
        marginal_rating_dist: Vec<f64>,
        scale: RatingScale,
    ) -> Result<Self> {
        if cond_rating_dist.len() != scale.len() || marginal_rating_dist.len() != scale.len() {
            return Err(Error::InvalidConfig {
                reason: format!("distributions must have {} entries", scale.len()),
            });
        }
        for (name, dist) in [
            ("conditional", &cond_rating_dist),
            ("marginal", &marginal_rating_dist),
        ] {
            let sum: f64 = dist.iter().sum();
            if (sum - 1.0).abs() > 1e-9 || dist.iter().any(|&p| p.is_nan() || p < 0.0) {
                return Err(Error::InvalidConfig {
                    reason: format!("{name} rating distribution must be nonnegative and sum to 1"),
                });
            }
        }
        if !(reveal_rate > 0.0 && reveal_rate <= 1.0) {
            return Err(Error::InvalidConfig {
                reason: format!("reveal rate {reveal_rate} must lie in (0, 1]"),
            });
        }
        Ok(Self {
            scale,
            cond_rating_dist,
            reveal_rate,
            marginal_rating_dist,
            laplace_alpha: 0.0,
        })
    }

    pub fn scale(&self) -> RatingScale {
        self.scale
    }

    pub fn reveal_rate(&self) -> f64 {
        self.reveal_rate
    }

    pub fn cond_rating_dist(&self) -> &[f64] {
        &self.cond_rating_dist
    }

    pub fn marginal_rating_dist(&self) -> &[f64] {
        &self.marginal_rating_dist
    }

    pub fn laplace_alpha(&self) -> f64 {
        self.laplace_alpha
    }

    /// Propensity for a rating value, clamped into [floor, 1].
    pub fn propensity(&self, rating: f64) -> Result<ClampedProbability> {
        let idx = self.scale.index_of(rating).ok_or(Error::OffScaleRating {
            value: rating,
            min: self.scale.min,
            max: self.scale.max,
        })?;
        let raw = self.cond_rating_dist[idx] * self.reveal_rate / self.marginal_rating_dist[idx];
        // a rating class absent from the marginal sample blows the ratio
        // up to inf (or NaN when the conditional is also empty); the
        // clamp rule resolves both to 1
        let value = if raw.is_finite() {
            clamp_to_unit(raw, DEFAULT_PROPENSITY_FLOOR)
        } else {
            1.0
        };
        Ok(ClampedProbability {
            value,
            clamped: value != raw,
        })
    }

    /// Full matrix: observed cells get the propensity of their revealed
    /// rating; unobserved cells are imputed with the reveal rate (only
    /// bound calculators ever read those, estimators touch observed
    /// cells only).
    pub fn propensity_matrix(&self, obs: &ObservationSample) -> Result<ImputedPropensities> {
        let (users, items) = obs.dims();
        let fill = clamp_to_unit(self.reveal_rate, DEFAULT_PROPENSITY_FLOOR);
        let mut values = vec![fill; users * items];
        let mut imputed = vec![true; users * items];
        let mut any_clamped = false;
        for e in obs.iter() {
            let p = self.propensity(e.rating)?;
            any_clamped |= p.clamped;
            values[e.user * items + e.item] = p.value;
            imputed[e.user * items + e.item] = false;
        }
        Ok(ImputedPropensities {
            matrix: PropensityMatrix::new(users, items, values)?,
            imputed,
            any_clamped,
        })
    }
}

/// Propensity matrix plus which cells hold imputed (reveal-rate) values.
#[derive(Debug, Clone, PartialEq)]
pub struct ImputedPropensities {
    pub matrix: PropensityMatrix,
    /// Row-major flags, true where the cell was not observed.
    pub imputed: Vec<bool>,
    /// True when any observed cell's raw value fell outside [floor, 1].
    pub any_clamped: bool,
}

fn smoothed_histogram(
    ratings: impl Iterator<Item = f64>,
    scale: RatingScale,
    alpha: f64,
) -> Result<Vec<f64>> {
    let mut counts = vec![alpha; scale.len()];
    let mut total = alpha * scale.len() as f64;
    for r in ratings {
        let idx = scale.index_of(r).ok_or(Error::OffScaleRating {
            value: r,
            min: scale.min,
            max: scale.max,
        })?;
        counts[idx] += 1.0;
        total += 1.0;
    }
    if total == 0.0 {
        // only reachable with alpha = 0 and no ratings; callers with an
        // empty MCAR sample are rejected earlier
        return Err(Error::InvalidConfig {
            reason: "cannot normalize an empty histogram without smoothing".into(),
        });
    }
    Ok(counts.into_iter().map(|c| c / total).collect())
}

// ── Logistic regression ───────────────────────────────────────────────

/// One feature vector per cell, row-major, fixed dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct PairFeatures {
    users: usize,
    items: usize,
    dim: usize,
    values: Vec<f64>,
}

impl PairFeatures {
    pub fn new(users: usize, items: usize, dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidConfig {
                reason: "feature dimension must be at least 1".into(),
            });
        }
        if values.len() != users * items * dim {
            return Err(Error::InvalidConfig {
                reason: format!(
                    "feature buffer holds {} values, expected {}",
                    values.len(),
                    users * items * dim
                ),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig {
                reason: "features must be finite".into(),
            });
        }
        Ok(Self {
            users,
            items,
            dim,
            values,
        })
    }

    /// Single constant feature 1.0 everywhere.
    pub fn bias_only(users: usize, items: usize) -> Self {
        Self {
            users,
            items,
            dim: 1,
            values: vec![1.0; users * items],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.users, self.items)
    }

    pub fn feature(&self, user: usize, item: usize) -> &[f64] {
        let start = (user * self.items + item) * self.dim;
        &self.values[start..start + self.dim]
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LogisticConfig {
    pub regularization: f64,
    /// Penalize the per-user and per-item offsets too, not just the
    /// feature weights.
    pub penalize_offsets: bool,
    pub max_iterations: usize,
    /// Gradient max-norm convergence threshold.
    pub tolerance: f64,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        Self {
            regularization: 1.0,
            penalize_offsets: false,
            max_iterations: 500,
            tolerance: 1e-6,
        }
    }
}

/// sigma(w.x + beta_i + gamma_u), trained on the full reveal indicator.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticPropensityModel {
    weights: Vec<f64>,
    item_offsets: Vec<f64>,
    user_offsets: Vec<f64>,
    regularization: f64,
}

impl LogisticPropensityModel {
    pub fn from_parts(
        weights: Vec<f64>,
        item_offsets: Vec<f64>,
        user_offsets: Vec<f64>,
        regularization: f64,
    ) -> Result<Self> {
        let finite = weights
            .iter()
            .chain(&item_offsets)
            .chain(&user_offsets)
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidConfig {
                reason: "logistic parameters must be finite".into(),
            });
        }
        Ok(Self {
            weights,
            item_offsets,
            user_offsets,
            regularization,
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn item_offsets(&self) -> &[f64] {
        &self.item_offsets
    }

    pub fn user_offsets(&self) -> &[f64] {
        &self.user_offsets
    }

    pub fn regularization(&self) -> f64 {
        self.regularization
    }

    /// Propensity for one cell, floored at the configured minimum.
    pub fn propensity(&self, feature: &[f64], user: usize, item: usize) -> Result<f64> {
        if feature.len() != self.weights.len() {
            return Err(Error::FeatureDimMismatch {
                expected: self.weights.len(),
                got: feature.len(),
            });
        }
        let mut z = self.item_offsets[item] + self.user_offsets[user];
        for (w, x) in self.weights.iter().zip(feature) {
            z += w * x;
        }
        Ok(clamp_to_unit(sigmoid(z), DEFAULT_PROPENSITY_FLOOR))
    }

    pub fn propensity_matrix(&self, features: &PairFeatures) -> Result<PropensityMatrix> {
        let (users, items) = features.dims();
        let mut values = Vec::with_capacity(users * items);
        for u in 0..users {
            for i in 0..items {
                values.push(self.propensity(features.feature(u, i), u, i)?);
            }
        }
        PropensityMatrix::new(users, items, values)
    }
}

#[derive(Debug, Clone)]
pub struct LogisticFitOutcome {
    pub model: LogisticPropensityModel,
    pub iterations: usize,
    pub converged: bool,
    /// Final penalized negative log-likelihood.
    pub objective: f64,
}

/// Fits the logistic model on the full reveal indicator by minimizing
/// the L2-penalized Bernoulli negative log-likelihood, full batch from
/// an all-zero start. Deterministic: no randomness anywhere.
pub fn fit_logistic(
    indicator: &RatingMatrix,
    features: &PairFeatures,
    config: &LogisticConfig,
) -> Result<LogisticFitOutcome> {
    let (users, items) = indicator.dims();
    if features.dims() != (users, items) {
        return Err(Error::DimensionMismatch {
            expected_users: users,
            expected_items: items,
            got_users: features.dims().0,
            got_items: features.dims().1,
        });
    }
    for &o in indicator.values() {
        if o != 0.0 && o != 1.0 {
            return Err(Error::InvalidConfig {
                reason: format!("reveal indicator entries must be 0 or 1, found {o}"),
            });
        }
    }
    if !(config.regularization >= 0.0 && config.regularization.is_finite()) {
        return Err(Error::InvalidConfig {
            reason: format!(
                "regularization {} must be finite and >= 0",
                config.regularization
            ),
        });
    }

    let dim = features.dim();
    let n = dim + items + users;
    let out = minimize(
        |theta, grad| penalized_nll(theta, Some(grad), indicator, features, config),
        vec![0.0; n],
        &OptimizeConfig {
            method: Method::default(),
            max_iterations: config.max_iterations,
            tolerance: config.tolerance,
        },
    );
    if out.stop == StopReason::Diverged {
        return Err(Error::InvalidConfig {
            reason: "logistic fit diverged to non-finite parameters".into(),
        });
    }
    let model = LogisticPropensityModel::from_parts(
        out.theta[..dim].to_vec(),
        out.theta[dim..dim + items].to_vec(),
        out.theta[dim + items..].to_vec(),
        config.regularization,
    )?;
    Ok(LogisticFitOutcome {
        model,
        iterations: out.iterations,
        converged: out.stop == StopReason::Converged,
        objective: out.value,
    })
}

/// Penalized Bernoulli negative log-likelihood over the full indicator,
/// with optional gradient accumulation. Parameter packing: feature
/// weights, then item offsets, then user offsets.
fn penalized_nll(
    theta: &[f64],
    mut grad: Option<&mut [f64]>,
    indicator: &RatingMatrix,
    features: &PairFeatures,
    config: &LogisticConfig,
) -> f64 {
    let (users, items) = indicator.dims();
    let dim = features.dim();
    let beta0 = dim;
    let gamma0 = dim + items;
    if let Some(g) = grad.as_deref_mut() {
        g.fill(0.0);
    }
    let mut nll = 0.0;
    for u in 0..users {
        for i in 0..items {
            let x = features.feature(u, i);
            let mut z = theta[beta0 + i] + theta[gamma0 + u];
            for (w, xj) in theta[..dim].iter().zip(x) {
                z += w * xj;
            }
            let o = indicator[(u, i)];
            nll += if o == 1.0 { softplus(-z) } else { softplus(z) };
            if let Some(g) = grad.as_deref_mut() {
                let dz = sigmoid(z) - o;
                g[beta0 + i] += dz;
                g[gamma0 + u] += dz;
                for (gj, xj) in g[..dim].iter_mut().zip(x) {
                    *gj += dz * xj;
                }
            }
        }
    }
    let pen_end = if config.penalize_offsets {
        theta.len()
    } else {
        dim
    };
    for j in 0..pen_end {
        nll += config.regularization * theta[j] * theta[j];
        if let Some(g) = grad.as_deref_mut() {
            g[j] += 2.0 * config.regularization * theta[j];
        }
    }
    nll
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + math::exp(-z))
    } else {
        let e = math::exp(z);
        e / (1.0 + e)
    }
}

/// ln(1 + e^z), overflow-safe.
fn softplus(z: f64) -> f64 {
    if z > 30.0 {
        z
    } else if z < -30.0 {
        math::exp(z)
    } else {
        math::ln(1.0 + math::exp(z))
    }
}
