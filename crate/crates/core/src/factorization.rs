//! Propensity-weighted matrix factorization with offsets, trained by
//! full-batch L-BFGS, plus IPS-scored cross-validation for picking the
//! regularization strength and rank.
//!
//! The training objective is
//!
//!   sum over observed (u,i) of delta(Y, Yhat)/P + lambda (|V|_F^2 + |W|_F^2)
//!
//! with Yhat = v_u . w_i + a_u + b_i + c. The offsets a, b, c are not
//! regularized. There is no 1/(U·I) factor; it is absorbed into the
//! scale of lambda.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::estimators::ips_estimate_with;
use crate::loss::{LossEvaluator, LossKind};
use crate::math;
use crate::matrix::{ObservationSample, PropensityMatrix, RatingMatrix, RatingScale};
use crate::optimize::{minimize, OptimizeConfig};
use crate::propensity::scale_for_cv;
use crate::rng;
use crate::{Error, Result};

pub use crate::optimize::{Method, StopReason};

/// Hyperparameter search space used by the experiments when none is
/// given: lambda by decades, rank over the usual small set.
pub const DEFAULT_LAMBDA_GRID: [f64; 7] = [1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1.0];
pub const DEFAULT_RANK_GRID: [usize; 4] = [5, 10, 20, 40];

/// Differentiable losses the trainer supports. MAE descends along the
/// sign subgradient, taken as 0 at zero residual.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainLoss {
    Mse,
    Mae,
}

impl TrainLoss {
    pub fn loss_kind(self) -> LossKind {
        match self {
            TrainLoss::Mse => LossKind::Mse,
            TrainLoss::Mae => LossKind::Mae,
        }
    }
}

impl core::fmt::Display for TrainLoss {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            TrainLoss::Mse => write!(f, "MSE"),
            TrainLoss::Mae => write!(f, "MAE"),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TrainConfig {
    pub lambda: f64,
    pub rank: usize,
    pub loss: TrainLoss,
    pub max_iterations: usize,
    /// Gradient max-norm below which training stops.
    pub tolerance: f64,
    pub seed: u64,
    /// Standard deviation of the factor initialization.
    pub init_scale: f64,
    pub method: Method,
}

impl TrainConfig {
    /// Defaults: MSE loss, 500 iterations, tolerance 1e-6, seed 0,
    /// init scale 0.1/sqrt(rank), L-BFGS with memory 10.
    pub fn new(lambda: f64, rank: usize) -> Self {
        Self {
            lambda,
            rank,
            loss: TrainLoss::Mse,
            max_iterations: 500,
            tolerance: 1e-6,
            seed: 0,
            init_scale: 0.1 / math::sqrt(rank.max(1) as f64),
            method: Method::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |reason: alloc::string::String| Err(Error::InvalidConfig { reason });
        if self.rank == 0 {
            return bad("rank must be at least 1".into());
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!(
                "regularization strength {} must be finite and >= 0",
                self.lambda
            ));
        }
        if self.tolerance.is_nan() || self.tolerance <= 0.0 {
            return bad(format!("tolerance {} must be positive", self.tolerance));
        }
        if !(self.init_scale > 0.0 && self.init_scale.is_finite()) {
            return bad(format!(
                "init scale {} must be finite and positive",
                self.init_scale
            ));
        }
        Ok(())
    }
}

// ── Model ─────────────────────────────────────────────────────────────

/// Rank-d factor model with user, item and global offsets.
///
/// Also serves as the container for objective gradients, which share the
/// model's shape.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorModel {
    users: usize,
    items: usize,
    rank: usize,
    /// U x d, row per user.
    user_factors: Vec<f64>,
    /// I x d, row per item.
    item_factors: Vec<f64>,
    user_offsets: Vec<f64>,
    item_offsets: Vec<f64>,
    global_offset: f64,
}

impl FactorModel {
    pub fn zeroed(users: usize, items: usize, rank: usize) -> Result<Self> {
        Self::from_parts(
            users,
            items,
            rank,
            0.0,
            vec![0.0; users],
            vec![0.0; items],
            vec![0.0; users * rank],
            vec![0.0; items * rank],
        )
    }

    /// Validates shapes, d >= 1 and finiteness of every parameter.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        users: usize,
        items: usize,
        rank: usize,
        global_offset: f64,
        user_offsets: Vec<f64>,
        item_offsets: Vec<f64>,
        user_factors: Vec<f64>,
        item_factors: Vec<f64>,
    ) -> Result<Self> {
        if users == 0 || items == 0 || rank == 0 {
            return Err(Error::InvalidConfig {
                reason: format!(
                    "model dimensions {users}x{items} rank {rank} must all be at least 1"
                ),
            });
        }
        if user_offsets.len() != users
            || item_offsets.len() != items
            || user_factors.len() != users * rank
            || item_factors.len() != items * rank
        {
            return Err(Error::InvalidConfig {
                reason: "model parameter block lengths disagree with dimensions".into(),
            });
        }
        let finite = global_offset.is_finite()
            && user_offsets.iter().all(|v| v.is_finite())
            && item_offsets.iter().all(|v| v.is_finite())
            && user_factors.iter().all(|v| v.is_finite())
            && item_factors.iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidConfig {
                reason: "model parameters must be finite".into(),
            });
        }
        Ok(Self {
            users,
            items,
            rank,
            user_factors,
            item_factors,
            user_offsets,
            item_offsets,
            global_offset,
        })
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn items(&self) -> usize {
        self.items
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn user_factors(&self) -> &[f64] {
        &self.user_factors
    }

    pub fn item_factors(&self) -> &[f64] {
        &self.item_factors
    }

    pub fn user_offsets(&self) -> &[f64] {
        &self.user_offsets
    }

    pub fn item_offsets(&self) -> &[f64] {
        &self.item_offsets
    }

    pub fn global_offset(&self) -> f64 {
        self.global_offset
    }

    pub fn predict_entry(&self, user: usize, item: usize) -> f64 {
        let v = &self.user_factors[user * self.rank..(user + 1) * self.rank];
        let w = &self.item_factors[item * self.rank..(item + 1) * self.rank];
        let mut dot = 0.0;
        for j in 0..self.rank {
            dot += v[j] * w[j];
        }
        dot + self.user_offsets[user] + self.item_offsets[item] + self.global_offset
    }

    /// Predictions for every cell.
    pub fn predict(&self) -> RatingMatrix {
        let mut values = Vec::with_capacity(self.users * self.items);
        for u in 0..self.users {
            for i in 0..self.items {
                values.push(self.predict_entry(u, i));
            }
        }
        RatingMatrix::new(self.users, self.items, values).expect("dims positive")
    }

    /// Flat parameter order: c, a, b, V row-major, W row-major. The
    /// trainer, the gradient and the finite-difference tests all share
    /// this packing.
    pub fn to_parameter_vector(&self) -> Vec<f64> {
        let mut theta = Vec::with_capacity(theta_len(self.users, self.items, self.rank));
        theta.push(self.global_offset);
        theta.extend_from_slice(&self.user_offsets);
        theta.extend_from_slice(&self.item_offsets);
        theta.extend_from_slice(&self.user_factors);
        theta.extend_from_slice(&self.item_factors);
        theta
    }

    pub fn from_parameter_vector(
        users: usize,
        items: usize,
        rank: usize,
        theta: &[f64],
    ) -> Result<Self> {
        if theta.len() != theta_len(users, items, rank) {
            return Err(Error::InvalidConfig {
                reason: format!(
                    "parameter vector length {} does not match {}",
                    theta.len(),
                    theta_len(users, items, rank)
                ),
            });
        }
        let layout = Layout::new(users, items, rank);
        Self::from_parts(
            users,
            items,
            rank,
            theta[0],
            theta[layout.a..layout.b].to_vec(),
            theta[layout.b..layout.v].to_vec(),
            theta[layout.v..layout.w].to_vec(),
            theta[layout.w..].to_vec(),
        )
    }

    /// Like [`FactorModel::from_parameter_vector`] but keeps non-finite
    /// parameters; used to surface the last iterate after divergence.
    fn from_theta_unchecked(users: usize, items: usize, rank: usize, theta: &[f64]) -> Self {
        let layout = Layout::new(users, items, rank);
        Self {
            users,
            items,
            rank,
            global_offset: theta[0],
            user_offsets: theta[layout.a..layout.b].to_vec(),
            item_offsets: theta[layout.b..layout.v].to_vec(),
            user_factors: theta[layout.v..layout.w].to_vec(),
            item_factors: theta[layout.w..].to_vec(),
        }
    }
}

struct Layout {
    a: usize,
    b: usize,
    v: usize,
    w: usize,
    rank: usize,
}

impl Layout {
    fn new(users: usize, items: usize, rank: usize) -> Self {
        let a = 1;
        let b = a + users;
        let v = b + items;
        let w = v + users * rank;
        Self { a, b, v, w, rank }
    }
}

fn theta_len(users: usize, items: usize, rank: usize) -> usize {
    1 + users + items + (users + items) * rank
}

// ── Objective and gradient ────────────────────────────────────────────

/// Objective and, when `grad` is given, its gradient accumulated into a
/// zeroed buffer. Single pass over the observed entries in stored order.
fn eval_theta(
    theta: &[f64],
    mut grad: Option<&mut [f64]>,
    obs: &ObservationSample,
    props: &PropensityMatrix,
    layout: &Layout,
    lambda: f64,
    loss: TrainLoss,
) -> f64 {
    if let Some(g) = grad.as_deref_mut() {
        g.fill(0.0);
    }
    let d = layout.rank;
    let mut data = 0.0;
    for e in obs.iter() {
        let v_off = layout.v + e.user * d;
        let w_off = layout.w + e.item * d;
        let mut pred = theta[0] + theta[layout.a + e.user] + theta[layout.b + e.item];
        for j in 0..d {
            pred += theta[v_off + j] * theta[w_off + j];
        }
        let r = pred - e.rating;
        let weight = 1.0 / props[(e.user, e.item)];
        let pull = match loss {
            TrainLoss::Mse => {
                data += r * r * weight;
                2.0 * r * weight
            }
            TrainLoss::Mae => {
                data += r.abs() * weight;
                let sign = if r > 0.0 {
                    1.0
                } else if r < 0.0 {
                    -1.0
                } else {
                    0.0
                };
                sign * weight
            }
        };
        if let Some(g) = grad.as_deref_mut() {
            g[0] += pull;
            g[layout.a + e.user] += pull;
            g[layout.b + e.item] += pull;
            for j in 0..d {
                g[v_off + j] += pull * theta[w_off + j];
                g[w_off + j] += pull * theta[v_off + j];
            }
        }
    }
    let mut penalty = 0.0;
    for idx in layout.v..theta.len() {
        let p = theta[idx];
        penalty += lambda * (p * p);
        if let Some(g) = grad.as_deref_mut() {
            g[idx] += 2.0 * lambda * p;
        }
    }
    data + penalty
}

fn check_training_inputs(
    obs: &ObservationSample,
    props: &PropensityMatrix,
    config: &TrainConfig,
) -> Result<()> {
    config.validate()?;
    props.same_dims_as(obs.users(), obs.items())
}

/// Training objective at a given model.
pub fn objective(
    model: &FactorModel,
    obs: &ObservationSample,
    props: &PropensityMatrix,
    config: &TrainConfig,
) -> Result<f64> {
    check_training_inputs(obs, props, config)?;
    check_model_dims(model, obs, config)?;
    let layout = Layout::new(model.users, model.items, model.rank);
    let theta = model.to_parameter_vector();
    Ok(eval_theta(
        &theta,
        None,
        obs,
        props,
        &layout,
        config.lambda,
        config.loss,
    ))
}

/// Exact objective gradient, returned in a model-shaped container.
pub fn gradient(
    model: &FactorModel,
    obs: &ObservationSample,
    props: &PropensityMatrix,
    config: &TrainConfig,
) -> Result<FactorModel> {
    check_training_inputs(obs, props, config)?;
    check_model_dims(model, obs, config)?;
    let layout = Layout::new(model.users, model.items, model.rank);
    let theta = model.to_parameter_vector();
    let mut g = vec![0.0; theta.len()];
    eval_theta(
        &theta,
        Some(&mut g),
        obs,
        props,
        &layout,
        config.lambda,
        config.loss,
    );
    Ok(FactorModel::from_theta_unchecked(
        model.users,
        model.items,
        model.rank,
        &g,
    ))
}

fn check_model_dims(
    model: &FactorModel,
    obs: &ObservationSample,
    config: &TrainConfig,
) -> Result<()> {
    if (model.users, model.items) != obs.dims() || model.rank != config.rank {
        return Err(Error::InvalidConfig {
            reason: format!(
                "model shape {}x{} rank {} does not match data {}x{} rank {}",
                model.users,
                model.items,
                model.rank,
                obs.users(),
                obs.items(),
                config.rank
            ),
        });
    }
    Ok(())
}

// ── Training ──────────────────────────────────────────────────────────

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: FactorModel,
    /// Accepted descent steps.
    pub iterations: usize,
    pub objective: f64,
    /// True when the gradient tolerance was reached.
    pub converged: bool,
    /// Objective after initialization and after each accepted step.
    pub objective_trace: Vec<f64>,
}

/// Trains a factor model on the observed entries.
///
/// Initialization: factors from a seeded zero-mean normal scaled by
/// `init_scale` (all user factors drawn first, then item factors, both
/// row-major), a = b = 0, and c set to the propensity-weighted mean
/// rating. Identical seed and config give a bit-identical model.
pub fn train(
    obs: &ObservationSample,
    props: &PropensityMatrix,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    check_training_inputs(obs, props, config)?;
    if obs.is_empty() {
        return Err(Error::InvalidConfig {
            reason: "training requires at least one observed entry".into(),
        });
    }
    let (users, items) = obs.dims();
    let d = config.rank;
    let layout = Layout::new(users, items, d);

    let mut theta = vec![0.0; theta_len(users, items, d)];
    let mut r = rng::from_seed(config.seed);
    for slot in theta[layout.v..].iter_mut() {
        *slot = rng::normal_f64(&mut r) * config.init_scale;
    }
    let (mut num, mut den) = (0.0, 0.0);
    for e in obs.iter() {
        let w = 1.0 / props[(e.user, e.item)];
        num += e.rating * w;
        den += w;
    }
    theta[0] = num / den;

    let opt = OptimizeConfig {
        method: config.method,
        max_iterations: config.max_iterations,
        tolerance: config.tolerance,
    };
    let out = minimize(
        |t, g| eval_theta(t, Some(g), obs, props, &layout, config.lambda, config.loss),
        theta,
        &opt,
    );

    if out.stop == StopReason::Diverged {
        return Err(Error::Diverged {
            last_model: alloc::boxed::Box::new(FactorModel::from_theta_unchecked(
                users, items, d, &out.theta,
            )),
        });
    }
    Ok(TrainOutcome {
        model: FactorModel::from_theta_unchecked(users, items, d, &out.theta),
        iterations: out.iterations,
        objective: out.value,
        converged: out.stop == StopReason::Converged,
        objective_trace: out.trace,
    })
}

// ── Cross-validation ──────────────────────────────────────────────────

/// Validation scores for one (lambda, rank) candidate.
#[derive(Debug, Clone)]
pub struct CvCandidate {
    pub lambda: f64,
    pub rank: usize,
    /// IPS-estimated risk on each held-out fold.
    pub fold_scores: Vec<f64>,
    pub mean_score: f64,
}

#[derive(Debug, Clone)]
pub struct CvResult {
    pub best_lambda: f64,
    pub best_rank: usize,
    pub candidates: Vec<CvCandidate>,
    /// Final model retrained on all observations with unscaled
    /// propensities.
    pub outcome: TrainOutcome,
    /// Propensity scaling applied to training folds: (k-1)/k.
    pub train_scale: f64,
    /// Propensity scaling applied to the held-out fold: 1/k.
    pub validation_scale: f64,
}

/// Entry-level k-fold cross-validation scored by the IPS estimator.
///
/// Observed entries are shuffled once (seeded) and dealt round-robin
/// into k folds. Each candidate trains on k-1 folds with propensities
/// scaled by (k-1)/k and is scored on the held-out fold with
/// propensities scaled by 1/k; a cell's sample only covers that share
/// of the full matrix, so its reveal probability shrinks accordingly.
/// The candidate with the smallest mean score wins; ties go to the
/// smallest lambda, then the smallest rank. The winner is retrained on
/// everything with unscaled propensities and the caller's seed.
pub fn cross_validate(
    obs: &ObservationSample,
    props: &PropensityMatrix,
    lambda_grid: &[f64],
    rank_grid: &[usize],
    folds: usize,
    base: &TrainConfig,
) -> Result<CvResult> {
    props.same_dims_as(obs.users(), obs.items())?;
    if folds < 2 {
        return Err(Error::InvalidConfig {
            reason: format!("cross-validation needs at least 2 folds, got {folds}"),
        });
    }
    if obs.len() < folds {
        return Err(Error::InvalidConfig {
            reason: format!("{} observed entries cannot fill {folds} folds", obs.len()),
        });
    }
    if lambda_grid.is_empty() || rank_grid.is_empty() {
        return Err(Error::InvalidConfig {
            reason: "hyperparameter grids must be non-empty".into(),
        });
    }

    let (users, items) = obs.dims();
    let n = obs.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut shuffle_rng = rng::from_seed(rng::derive_seed(base.seed, 0));
    rng::shuffle(&mut shuffle_rng, &mut order);
    let mut fold_of = vec![0usize; n];
    for (pos, &entry_idx) in order.iter().enumerate() {
        fold_of[entry_idx] = pos % folds;
    }

    let train_scale = (folds - 1) as f64 / folds as f64;
    let validation_scale = 1.0 / folds as f64;
    let train_props = scale_for_cv(props, train_scale)?;
    let valid_props = scale_for_cv(props, validation_scale)?;

    // fold partitions and per-fold training seeds are shared across the
    // whole grid so candidates differ only in their hyperparameters
    let mut splits = Vec::with_capacity(folds);
    for fold in 0..folds {
        let mut train_entries = Vec::with_capacity(n - n / folds);
        let mut valid_entries = Vec::with_capacity(n / folds + 1);
        for (idx, e) in obs.iter().enumerate() {
            if fold_of[idx] == fold {
                valid_entries.push(*e);
            } else {
                train_entries.push(*e);
            }
        }
        if train_entries.is_empty() || valid_entries.is_empty() {
            return Err(Error::EmptyFold { fold });
        }
        splits.push((
            ObservationSample::new(users, items, train_entries)?,
            ObservationSample::new(users, items, valid_entries)?,
            rng::derive_seed(base.seed, 1 + fold as u64),
        ));
    }

    let mut candidates = Vec::with_capacity(lambda_grid.len() * rank_grid.len());
    let mut best: Option<(f64, usize, f64)> = None;
    for &lambda in lambda_grid {
        for &rank in rank_grid {
            let mut fold_scores = Vec::with_capacity(folds);
            for (fold_train, fold_valid, fold_seed) in &splits {
                let mut cfg = *base;
                cfg.lambda = lambda;
                cfg.rank = rank;
                cfg.seed = *fold_seed;
                cfg.init_scale = 0.1 / math::sqrt(rank as f64);
                let trained = train(fold_train, &train_props, &cfg)?;
                let pred = trained.model.predict();
                let eval =
                    LossEvaluator::new(&pred, base.loss.loss_kind(), RatingScale::default())?;
                fold_scores.push(ips_estimate_with(fold_valid, &valid_props, &eval)?.value);
            }
            let mean_score = fold_scores.iter().sum::<f64>() / folds as f64;
            if best.is_none_or(|(_, _, s)| mean_score < s) {
                best = Some((lambda, rank, mean_score));
            }
            candidates.push(CvCandidate {
                lambda,
                rank,
                fold_scores,
                mean_score,
            });
        }
    }

    let (best_lambda, best_rank, _) = best.expect("grids checked non-empty");
    let mut final_cfg = *base;
    final_cfg.lambda = best_lambda;
    final_cfg.rank = best_rank;
    final_cfg.init_scale = 0.1 / math::sqrt(best_rank as f64);
    let outcome = train(obs, props, &final_cfg)?;
    Ok(CvResult {
        best_lambda,
        best_rank,
        candidates,
        outcome,
        train_scale,
        validation_scale,
    })
}
