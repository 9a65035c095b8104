//! Pointwise and ranking loss functions, and exact risk over fully known
//! matrices.
//!
//! All estimators and trainers in this crate consume per-entry losses
//! delta(u, i) through a [`LossEvaluator`], which precomputes per-user
//! rankings once so that batch evaluation of rank-based losses stays
//! O(U·I log I) overall.

use alloc::format;
use alloc::vec::Vec;

use crate::math;
use crate::matrix::{RatingMatrix, RatingScale};
use crate::{Error, Result};

/// The per-entry loss delta(u, i) to aggregate.
///
/// `Cg`, `DcgAt` and `PrecAt` carry the recommendation budget or rank
/// cutoff; it must satisfy 1 <= kappa <= I.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    Mae,
    Mse,
    /// 1 when the prediction rounds to the true rating, else 0.
    Accuracy,
    /// (I/kappa) * Yhat * Y over a binary recommendation matrix with
    /// exactly kappa ones per row.
    Cg {
        budget: usize,
    },
    /// (I / log2(rank + 1)) * Y with per-user ranks from predicted values.
    Dcg,
    /// DCG truncated to zero beyond the cutoff.
    DcgAt {
        cutoff: usize,
    },
    /// (I/kappa) * Y * 1{rank <= kappa}.
    PrecAt {
        cutoff: usize,
    },
}

impl LossKind {
    pub fn is_pointwise(&self) -> bool {
        matches!(self, LossKind::Mae | LossKind::Mse | LossKind::Accuracy)
    }

    pub fn is_ranking(&self) -> bool {
        !self.is_pointwise()
    }

    /// True for kinds whose delta depends on per-user ranks.
    fn needs_ranks(&self) -> bool {
        matches!(
            self,
            LossKind::Dcg | LossKind::DcgAt { .. } | LossKind::PrecAt { .. }
        )
    }

    pub fn validate(&self, items: usize) -> Result<()> {
        let kappa = match self {
            LossKind::Cg { budget } => *budget,
            LossKind::DcgAt { cutoff } | LossKind::PrecAt { cutoff } => *cutoff,
            _ => return Ok(()),
        };
        if kappa == 0 || kappa > items {
            return Err(Error::InvalidConfig {
                reason: format!("budget/cutoff {kappa} must lie in 1..={items}"),
            });
        }
        Ok(())
    }
}

impl core::fmt::Display for LossKind {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            LossKind::Mae => write!(f, "MAE"),
            LossKind::Mse => write!(f, "MSE"),
            LossKind::Accuracy => write!(f, "ACC"),
            LossKind::Cg { budget } => write!(f, "CG@{budget}"),
            LossKind::Dcg => write!(f, "DCG"),
            LossKind::DcgAt { cutoff } => write!(f, "DCG@{cutoff}"),
            LossKind::PrecAt { cutoff } => write!(f, "PREC@{cutoff}"),
        }
    }
}

/// Evaluates delta(u, i) against a fixed prediction matrix.
///
/// Construction validates the prediction matrix for the given kind (CG
/// requires a binary matrix with exactly kappa ones per row) and
/// precomputes ranks when the kind needs them.
pub struct LossEvaluator<'a> {
    pred: &'a RatingMatrix,
    kind: LossKind,
    scale: RatingScale,
    ranks: Option<Vec<u32>>,
}

impl<'a> LossEvaluator<'a> {
    pub fn new(pred: &'a RatingMatrix, kind: LossKind, scale: RatingScale) -> Result<Self> {
        kind.validate(pred.items())?;
        if let LossKind::Cg { budget } = kind {
            validate_recommendation(pred, budget)?;
        }
        let ranks = kind.needs_ranks().then(|| compute_ranks(pred));
        Ok(Self {
            pred,
            kind,
            scale,
            ranks,
        })
    }

    pub fn kind(&self) -> LossKind {
        self.kind
    }

    /// 1-based rank of item i in user u's predicted ordering; None for
    /// kinds that do not rank.
    pub fn rank(&self, user: usize, item: usize) -> Option<u32> {
        self.ranks
            .as_ref()
            .map(|r| r[user * self.pred.items() + item])
    }

    /// delta at (u, i) given the true rating there.
    pub fn loss(&self, user: usize, item: usize, truth: f64) -> Result<f64> {
        let yhat = self.pred.get(user, item)?;
        let items = self.pred.items() as f64;
        Ok(match self.kind {
            LossKind::Mae => (truth - yhat).abs(),
            LossKind::Mse => (truth - yhat) * (truth - yhat),
            LossKind::Accuracy => {
                if self.scale.round_to_scale(yhat) == truth {
                    1.0
                } else {
                    0.0
                }
            }
            LossKind::Cg { budget } => items / budget as f64 * yhat * truth,
            LossKind::Dcg => {
                let rank = self.rank(user, item).expect("ranks precomputed") as f64;
                items / math::log2(rank + 1.0) * truth
            }
            LossKind::DcgAt { cutoff } => {
                let rank = self.rank(user, item).expect("ranks precomputed");
                if rank as usize > cutoff {
                    0.0
                } else {
                    items / math::log2(rank as f64 + 1.0) * truth
                }
            }
            LossKind::PrecAt { cutoff } => {
                let rank = self.rank(user, item).expect("ranks precomputed");
                if rank as usize > cutoff {
                    0.0
                } else {
                    items / cutoff as f64 * truth
                }
            }
        })
    }
}

/// Per-user 1-based ranks: descending predicted value, ties broken by
/// ascending item index.
fn compute_ranks(pred: &RatingMatrix) -> Vec<u32> {
    let (users, items) = pred.dims();
    let mut ranks = alloc::vec![0u32; users * items];
    let mut order: Vec<usize> = Vec::with_capacity(items);
    for u in 0..users {
        let row = pred.row(u);
        order.clear();
        order.extend(0..items);
        order.sort_unstable_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
        for (pos, &i) in order.iter().enumerate() {
            ranks[u * items + i] = pos as u32 + 1;
        }
    }
    ranks
}

fn validate_recommendation(pred: &RatingMatrix, budget: usize) -> Result<()> {
    for u in 0..pred.users() {
        let mut ones = 0usize;
        for &v in pred.row(u) {
            if v == 1.0 {
                ones += 1;
            } else if v != 0.0 {
                return Err(Error::InvalidRecommendation {
                    reason: format!("non-binary value {v} in row {u}"),
                });
            }
        }
        if ones != budget {
            return Err(Error::InvalidRecommendation {
                reason: format!("row {u} recommends {ones} items, budget is {budget}"),
            });
        }
    }
    Ok(())
}

/// MAE, MSE or Accuracy at a single cell, default rating scale.
pub fn pointwise_loss(
    user: usize,
    item: usize,
    truth: &RatingMatrix,
    pred: &RatingMatrix,
    kind: LossKind,
) -> Result<f64> {
    if !kind.is_pointwise() {
        return Err(Error::InvalidConfig {
            reason: format!("{kind} is not a pointwise loss"),
        });
    }
    truth.same_dims(pred)?;
    let y = truth.get(user, item)?;
    LossEvaluator::new(pred, kind, RatingScale::default())?.loss(user, item, y)
}

/// CG, DCG, DCG@k or PREC@k at a single cell.
pub fn ranking_loss(
    user: usize,
    item: usize,
    truth: &RatingMatrix,
    pred: &RatingMatrix,
    kind: LossKind,
) -> Result<f64> {
    if !kind.is_ranking() {
        return Err(Error::InvalidConfig {
            reason: format!("{kind} is not a ranking loss"),
        });
    }
    truth.same_dims(pred)?;
    let y = truth.get(user, item)?;
    LossEvaluator::new(pred, kind, RatingScale::default())?.loss(user, item, y)
}

/// Average delta over all U·I cells of fully known matrices.
pub fn true_risk(truth: &RatingMatrix, pred: &RatingMatrix, kind: LossKind) -> Result<f64> {
    true_risk_with_scale(truth, pred, kind, RatingScale::default())
}

pub fn true_risk_with_scale(
    truth: &RatingMatrix,
    pred: &RatingMatrix,
    kind: LossKind,
    scale: RatingScale,
) -> Result<f64> {
    truth.same_dims(pred)?;
    let eval = LossEvaluator::new(pred, kind, scale)?;
    let mut sum = 0.0;
    for u in 0..truth.users() {
        for i in 0..truth.items() {
            sum += eval.loss(u, i, truth[(u, i)])?;
        }
    }
    Ok(sum / truth.cells() as f64)
}
