//! Semi-synthetic ground truth and the rating-dependent observation
//! model used by the experiments.
//!
//! The pipeline: complete a partially observed rating sample with
//! unweighted matrix factorization, snap the predicted values onto a
//! target marginal rating distribution by quantiles, then reveal entries
//! with propensity k for ratings 4 and 5 and k*alpha^(4-r) below, where
//! k is solved so the expected revealed fraction hits a target. The five
//! prediction generators give evaluators with known closed-form true
//! MAE.
//!
//! Everything here assumes the 1..5 rating scale.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::factorization::{train, TrainConfig, TrainLoss};
use crate::math;
use crate::matrix::{
    ObservationSample, ObservedEntry, PropensityMatrix, RatingMatrix, RatingScale,
};
use crate::rng;
use crate::{Error, Result};

/// Marginal probabilities of ratings 1..5.
///
/// The default inverts published true-MAE values of the four
/// deterministic predictors, which pin p1..p4; p5 normalizes the sum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginalDistribution {
    p: [f64; 5],
}

impl Default for MarginalDistribution {
    fn default() -> Self {
        Self {
            p: [0.5263, 0.2425, 0.1458, 0.0572, 0.0282],
        }
    }
}

impl MarginalDistribution {
    pub fn new(p: [f64; 5]) -> Result<Self> {
        if p.iter().any(|&x| x.is_nan() || x < 0.0) {
            return Err(Error::InvalidConfig {
                reason: "marginal probabilities must be nonnegative".into(),
            });
        }
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig {
                reason: format!("marginal probabilities sum to {sum}, expected 1"),
            });
        }
        Ok(Self { p })
    }

    pub fn probabilities(&self) -> &[f64; 5] {
        &self.p
    }

    /// p_r for a rating r in 1..5.
    pub fn probability_of(&self, rating: u32) -> f64 {
        self.p[(rating - 1) as usize]
    }
}

// ── Completion ────────────────────────────────────────────────────────

/// Settings for the completion factorization.
#[derive(Debug, Clone)]
pub struct CompletionConfig {
    pub rank: usize,
    /// Candidates for the regularization strength; picked on a held-out
    /// split by 0/1 accuracy of rounded predictions.
    pub lambda_grid: Vec<f64>,
    /// Share of entries held out for that pick.
    pub holdout_fraction: f64,
    pub max_iterations: usize,
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for CompletionConfig {
    fn default() -> Self {
        Self {
            rank: 20,
            lambda_grid: crate::factorization::DEFAULT_LAMBDA_GRID.to_vec(),
            holdout_fraction: 0.1,
            max_iterations: 300,
            tolerance: 1e-5,
            seed: 0,
        }
    }
}

/// Completes a partial rating sample into a fully known ground-truth
/// matrix with the requested marginal rating distribution.
///
/// Unweighted matrix factorization (all propensities 1) is trained on a
/// 90-10 split per lambda candidate; the candidate with the highest 0/1
/// accuracy of rounded predictions on the holdout wins (ties to the
/// smaller lambda). The winner is retrained on all entries, every cell
/// is predicted, and predictions are replaced by ratings in ascending
/// order: the lowest floor(p1*N) values become 1, the next floor(p2*N)
/// become 2, and so on, with the remainder becoming 5.
pub fn complete_and_adjust(
    partial: &ObservationSample,
    marginal: &MarginalDistribution,
    config: &CompletionConfig,
) -> Result<RatingMatrix> {
    let scale = RatingScale::default();
    for e in partial.iter() {
        if !scale.contains(e.rating) {
            return Err(Error::OffScaleRating {
                value: e.rating,
                min: scale.min,
                max: scale.max,
            });
        }
    }
    let n = partial.len();
    if n < 2 {
        return Err(Error::InvalidConfig {
            reason: format!("completion needs at least 2 observed entries, got {n}"),
        });
    }
    if !(config.holdout_fraction > 0.0 && config.holdout_fraction < 1.0) {
        return Err(Error::InvalidConfig {
            reason: format!(
                "holdout fraction {} must lie in (0, 1)",
                config.holdout_fraction
            ),
        });
    }
    if config.lambda_grid.is_empty() {
        return Err(Error::InvalidConfig {
            reason: "lambda grid must be non-empty".into(),
        });
    }

    let (users, items) = partial.dims();
    let mut order: Vec<usize> = (0..n).collect();
    let mut split_rng = rng::from_seed(rng::derive_seed(config.seed, 0));
    rng::shuffle(&mut split_rng, &mut order);
    let n_holdout = ((n as f64 * config.holdout_fraction) as usize)
        .max(1)
        .min(n - 1);
    let holdout: Vec<ObservedEntry> = order[..n_holdout]
        .iter()
        .map(|&i| partial.entries()[i])
        .collect();
    let train_entries: Vec<ObservedEntry> = order[n_holdout..]
        .iter()
        .map(|&i| partial.entries()[i])
        .collect();
    let train_sample = ObservationSample::new(users, items, train_entries)?;
    let ones = PropensityMatrix::uniform(users, items, 1.0)?;

    let base_cfg = |lambda: f64, seed: u64| TrainConfig {
        lambda,
        rank: config.rank,
        loss: TrainLoss::Mse,
        max_iterations: config.max_iterations,
        tolerance: config.tolerance,
        seed,
        init_scale: 0.1 / math::sqrt(config.rank as f64),
        method: Default::default(),
    };

    let fit_seed = rng::derive_seed(config.seed, 1);
    let mut best: Option<(f64, f64)> = None;
    for &lambda in &config.lambda_grid {
        let out = train(&train_sample, &ones, &base_cfg(lambda, fit_seed))?;
        let pred = out.model.predict();
        let mut hits = 0usize;
        for e in &holdout {
            if scale.round_to_scale(pred[(e.user, e.item)]) == e.rating {
                hits += 1;
            }
        }
        let accuracy = hits as f64 / holdout.len() as f64;
        if best.is_none_or(|(a, _)| accuracy > a) {
            best = Some((accuracy, lambda));
        }
    }
    let (_, best_lambda) = best.expect("grid checked non-empty");

    let full = train(
        partial,
        &ones,
        &base_cfg(best_lambda, rng::derive_seed(config.seed, 2)),
    )?;
    let values = quantile_assign(full.model.predict().values(), marginal);
    RatingMatrix::new(users, items, values)
}

/// Replaces values by ratings according to the marginal: sorted
/// ascending (ties by index), the lowest floor(p1*N) slots become 1,
/// the next floor(p2*N) become 2, ..., the remainder becomes 5.
///
/// The floors carry a 1e-9 nudge so that targets like 0.5263 * 60000,
/// which decimal arithmetic makes integral but binary floats land a
/// hair below, count as the integer they name.
pub fn quantile_assign(values: &[f64], marginal: &MarginalDistribution) -> Vec<f64> {
    let n = values.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_unstable_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let mut out = vec![5.0; n];
    let mut pos = 0usize;
    for rating in 1..=4u32 {
        let count = math::floor(marginal.probability_of(rating) * n as f64 + 1e-9) as usize;
        for &cell in idx.iter().skip(pos).take(count) {
            out[cell] = rating as f64;
        }
        pos += count;
    }
    // remaining slots keep rating 5
    out
}

// ── Observation model ─────────────────────────────────────────────────

/// Rating-dependent reveal model: propensity k for ratings 4 and 5,
/// k * alpha^(4-r) for r < 4, with k solved from the target fraction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservationModelConfig {
    /// Bias severity in (0, 1]; 1 means uniform reveal (MCAR).
    pub alpha: f64,
    /// Expected share of cells revealed; default 0.05.
    pub target_fraction: f64,
}

impl Default for ObservationModelConfig {
    fn default() -> Self {
        Self {
            alpha: 0.25,
            target_fraction: 0.05,
        }
    }
}

impl ObservationModelConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::InvalidConfig {
                reason: format!("alpha {} must lie in (0, 1]", self.alpha),
            });
        }
        if !(self.target_fraction > 0.0 && self.target_fraction <= 1.0) {
            return Err(Error::InvalidConfig {
                reason: format!(
                    "target fraction {} must lie in (0, 1]",
                    self.target_fraction
                ),
            });
        }
        Ok(())
    }
}

/// Per-cell reveal probabilities for a ground-truth matrix under the
/// model; the expected revealed fraction equals the target exactly.
pub fn observation_propensities(
    truth: &RatingMatrix,
    config: &ObservationModelConfig,
) -> Result<PropensityMatrix> {
    config.validate()?;
    let scale = RatingScale::default();
    truth.validate_on_scale(scale)?;
    let mut counts = [0usize; 5];
    for &y in truth.values() {
        counts[(y as usize) - 1] += 1;
    }
    let a = config.alpha;
    let weight = [a * a * a, a * a, a, 1.0, 1.0];
    let mut denom = 0.0;
    for (r, &c) in counts.iter().enumerate() {
        denom += weight[r] * c as f64;
    }
    let k = config.target_fraction * truth.cells() as f64 / denom;
    if k > 1.0 {
        return Err(Error::InfeasibleObservationModel { k });
    }
    let by_rating = [k * weight[0], k * weight[1], k * weight[2], k, k];
    let values = truth
        .values()
        .iter()
        .map(|&y| by_rating[(y as usize) - 1])
        .collect();
    PropensityMatrix::new(truth.users(), truth.items(), values)
}

/// Independent Bernoulli reveal of each cell, one uniform draw per cell
/// in row-major order. Revealed entries carry the true rating.
pub fn sample_observations(
    truth: &RatingMatrix,
    props: &PropensityMatrix,
    seed: u64,
) -> Result<ObservationSample> {
    props.same_dims_as(truth.users(), truth.items())?;
    let mut r = rng::from_seed(seed);
    let mut entries = Vec::new();
    for u in 0..truth.users() {
        for i in 0..truth.items() {
            let draw = rng::uniform_f64(&mut r);
            if draw < props[(u, i)] {
                entries.push(ObservedEntry {
                    user: u,
                    item: i,
                    rating: truth[(u, i)],
                });
            }
        }
    }
    ObservationSample::new(truth.users(), truth.items(), entries)
}

// ── Prediction generators ─────────────────────────────────────────────

/// The five synthetic evaluators with known behavior against a 1..5
/// ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredictorKind {
    /// Flip |Y=5| randomly chosen 1-rated cells to 5.
    RecOnes,
    /// Flip |Y=5| randomly chosen 4-rated cells to 5.
    RecFours,
    /// Y-1 where Y >= 2, else 5.
    Rotate,
    /// Normal around Y with sigma (6-Y)/2, clipped to [0, 6].
    Skewed,
    /// 3 where Y <= 3, else 4.
    Coarsened,
}

impl PredictorKind {
    pub const ALL: [PredictorKind; 5] = [
        PredictorKind::RecOnes,
        PredictorKind::RecFours,
        PredictorKind::Rotate,
        PredictorKind::Skewed,
        PredictorKind::Coarsened,
    ];
}

impl core::fmt::Display for PredictorKind {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        let name = match self {
            PredictorKind::RecOnes => "REC_ONES",
            PredictorKind::RecFours => "REC_FOURS",
            PredictorKind::Rotate => "ROTATE",
            PredictorKind::Skewed => "SKEWED",
            PredictorKind::Coarsened => "COARSENED",
        };
        write!(f, "{name}")
    }
}

/// Builds the prediction matrix of a synthetic evaluator.
pub fn make_predictor(
    kind: PredictorKind,
    truth: &RatingMatrix,
    seed: u64,
) -> Result<RatingMatrix> {
    let scale = RatingScale::default();
    truth.validate_on_scale(scale)?;
    let values = match kind {
        PredictorKind::RecOnes => flip_to_five(truth, 1.0, seed)?,
        PredictorKind::RecFours => flip_to_five(truth, 4.0, seed)?,
        PredictorKind::Rotate => truth
            .values()
            .iter()
            .map(|&y| if y >= 2.0 { y - 1.0 } else { 5.0 })
            .collect(),
        PredictorKind::Skewed => {
            let mut r = rng::from_seed(seed);
            truth
                .values()
                .iter()
                .map(|&y| {
                    let sigma = (6.0 - y) / 2.0;
                    (y + sigma * rng::normal_f64(&mut r)).clamp(0.0, 6.0)
                })
                .collect()
        }
        PredictorKind::Coarsened => truth
            .values()
            .iter()
            .map(|&y| if y <= 3.0 { 3.0 } else { 4.0 })
            .collect(),
    };
    RatingMatrix::new(truth.users(), truth.items(), values)
}

/// Copies truth, then rewrites |Y=5| seeded-uniformly-chosen cells whose
/// rating equals `source` to 5.
fn flip_to_five(truth: &RatingMatrix, source: f64, seed: u64) -> Result<Vec<f64>> {
    let fives = truth.values().iter().filter(|&&y| y == 5.0).count();
    let mut sources: Vec<usize> = truth
        .values()
        .iter()
        .enumerate()
        .filter(|(_, &y)| y == source)
        .map(|(cell, _)| cell)
        .collect();
    if sources.len() < fives {
        return Err(Error::InsufficientFlippable {
            needed: fives,
            available: sources.len(),
        });
    }
    let mut r = rng::from_seed(seed);
    rng::partial_shuffle(&mut r, &mut sources, fives);
    let mut values = truth.values().to_vec();
    for &cell in &sources[..fives] {
        values[cell] = 5.0;
    }
    Ok(values)
}

/// Analytic true MAE of the deterministic predictors against a matrix
/// whose ratings exactly follow the marginal.
pub fn closed_form_true_mae(kind: PredictorKind, marginal: &MarginalDistribution) -> Result<f64> {
    let p = marginal.probabilities();
    Ok(match kind {
        PredictorKind::RecOnes => 4.0 * p[4],
        PredictorKind::RecFours => p[4],
        PredictorKind::Rotate => 1.0 + 3.0 * p[0],
        PredictorKind::Coarsened => 2.0 * p[0] + p[1] + p[4],
        PredictorKind::Skewed => {
            return Err(Error::InvalidConfig {
                reason: "SKEWED predictions are stochastic; no closed-form true MAE".into(),
            })
        }
    })
}

// ── Synthetic partial ratings ─────────────────────────────────────────

/// A seeded stand-in for a real partial rating dataset: a low-rank
/// latent model rounded onto the 1..5 scale, revealed uniformly at the
/// given fraction. Feeds [`complete_and_adjust`] when no external file
/// is supplied.
pub fn synthetic_partial(
    users: usize,
    items: usize,
    observed_fraction: f64,
    seed: u64,
) -> Result<ObservationSample> {
    if !(observed_fraction > 0.0 && observed_fraction <= 1.0) {
        return Err(Error::InvalidConfig {
            reason: format!("observed fraction {observed_fraction} must lie in (0, 1]"),
        });
    }
    let scale = RatingScale::default();
    let d = 5usize;
    let mut r = rng::from_seed(seed);
    let spread = 1.0 / math::sqrt(d as f64);
    let uf: Vec<f64> = (0..users * d)
        .map(|_| rng::normal_f64(&mut r) * spread)
        .collect();
    let itf: Vec<f64> = (0..items * d)
        .map(|_| rng::normal_f64(&mut r) * spread)
        .collect();
    let mut entries = Vec::new();
    for u in 0..users {
        for i in 0..items {
            let reveal = rng::uniform_f64(&mut r) < observed_fraction;
            if !reveal {
                continue;
            }
            let mut s = 0.0;
            for j in 0..d {
                s += uf[u * d + j] * itf[i * d + j];
            }
            entries.push(ObservedEntry {
                user: u,
                item: i,
                rating: scale.round_to_scale(3.0 + 1.5 * s),
            });
        }
    }
    ObservationSample::new(users, items, entries)
}
