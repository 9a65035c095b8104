//! Domain types: rating matrices, observed-entry samples, propensities.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::math;
use crate::{Error, Result};

// ── Rating scale ──────────────────────────────────────────────────────

/// Inclusive integer rating scale, default 1..=5.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RatingScale {
    pub min: u32,
    pub max: u32,
}

impl Default for RatingScale {
    fn default() -> Self {
        Self { min: 1, max: 5 }
    }
}

impl RatingScale {
    pub fn new(min: u32, max: u32) -> Result<Self> {
        if min == 0 || max <= min {
            return Err(Error::InvalidConfig {
                reason: format!("rating scale {min}..={max} must satisfy 1 <= min < max"),
            });
        }
        Ok(Self { min, max })
    }

    /// Number of distinct rating values.
    pub fn len(&self) -> usize {
        (self.max - self.min + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// All scale values in ascending order.
    pub fn values(&self) -> impl Iterator<Item = u32> + '_ {
        self.min..=self.max
    }

    /// True when `value` is exactly one of the scale integers.
    pub fn contains(&self, value: f64) -> bool {
        if !(self.min as f64..=self.max as f64).contains(&value) {
            return false;
        }
        value == math::floor(value)
    }

    /// Index of an on-scale value in 0..len().
    pub fn index_of(&self, value: f64) -> Option<usize> {
        self.contains(value)
            .then_some((value - self.min as f64) as usize)
    }

    /// Nearest scale value: round half away from zero, then clamp.
    pub fn round_to_scale(&self, value: f64) -> f64 {
        math::round(value).clamp(self.min as f64, self.max as f64)
    }
}

// ── Rating matrix ─────────────────────────────────────────────────────

/// Dense row-major U x I matrix of ratings or predictions.
///
/// True ratings take integer values on a [`RatingScale`]; predictions may
/// be any real. Use [`RatingMatrix::validate_on_scale`] when a matrix is
/// meant to hold true ratings.
#[derive(Debug, Clone, PartialEq)]
pub struct RatingMatrix {
    users: usize,
    items: usize,
    values: Vec<f64>,
}

impl RatingMatrix {
    pub fn new(users: usize, items: usize, values: Vec<f64>) -> Result<Self> {
        check_dims(users, items)?;
        if values.len() != users * items {
            return Err(Error::DimensionMismatch {
                expected_users: users,
                expected_items: items,
                got_users: values.len() / items.max(1),
                got_items: items,
            });
        }
        Ok(Self {
            users,
            items,
            values,
        })
    }

    pub fn zeros(users: usize, items: usize) -> Result<Self> {
        Self::new(users, items, vec![0.0; users * items])
    }

    pub fn filled(users: usize, items: usize, value: f64) -> Result<Self> {
        Self::new(users, items, vec![value; users * items])
    }

    /// Builds from nested rows; every row must have the same length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let users = rows.len();
        let items = rows.first().map_or(0, Vec::len);
        check_dims(users, items)?;
        let mut values = Vec::with_capacity(users * items);
        for row in rows {
            if row.len() != items {
                return Err(Error::DimensionMismatch {
                    expected_users: users,
                    expected_items: items,
                    got_users: users,
                    got_items: row.len(),
                });
            }
            values.extend_from_slice(row);
        }
        Self::new(users, items, values)
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn items(&self) -> usize {
        self.items
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.users, self.items)
    }

    pub fn cells(&self) -> usize {
        self.users * self.items
    }

    pub fn get(&self, user: usize, item: usize) -> Result<f64> {
        self.check_index(user, item)?;
        Ok(self.values[user * self.items + item])
    }

    pub fn set(&mut self, user: usize, item: usize, value: f64) -> Result<()> {
        self.check_index(user, item)?;
        self.values[user * self.items + item] = value;
        Ok(())
    }

    pub fn row(&self, user: usize) -> &[f64] {
        &self.values[user * self.items..(user + 1) * self.items]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Errors unless every entry is an integer on `scale`.
    pub fn validate_on_scale(&self, scale: RatingScale) -> Result<()> {
        for &v in &self.values {
            if !scale.contains(v) {
                return Err(Error::OffScaleRating {
                    value: v,
                    min: scale.min,
                    max: scale.max,
                });
            }
        }
        Ok(())
    }

    pub fn same_dims(&self, other: &RatingMatrix) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::DimensionMismatch {
                expected_users: self.users,
                expected_items: self.items,
                got_users: other.users,
                got_items: other.items,
            });
        }
        Ok(())
    }

    fn check_index(&self, user: usize, item: usize) -> Result<()> {
        if user >= self.users || item >= self.items {
            return Err(Error::IndexOutOfRange {
                user,
                item,
                users: self.users,
                items: self.items,
            });
        }
        Ok(())
    }
}

impl core::ops::Index<(usize, usize)> for RatingMatrix {
    type Output = f64;

    fn index(&self, (user, item): (usize, usize)) -> &f64 {
        assert!(
            user < self.users && item < self.items,
            "matrix index out of range"
        );
        &self.values[user * self.items + item]
    }
}

impl core::ops::IndexMut<(usize, usize)> for RatingMatrix {
    fn index_mut(&mut self, (user, item): (usize, usize)) -> &mut f64 {
        assert!(
            user < self.users && item < self.items,
            "matrix index out of range"
        );
        &mut self.values[user * self.items + item]
    }
}

fn check_dims(users: usize, items: usize) -> Result<()> {
    if users == 0 || items == 0 {
        return Err(Error::InvalidConfig {
            reason: format!("matrix dimensions {users}x{items} must both be at least 1"),
        });
    }
    Ok(())
}

// ── Observation sample ────────────────────────────────────────────────

/// One revealed entry of the rating matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservedEntry {
    pub user: usize,
    pub item: usize,
    pub rating: f64,
}

/// The support of the reveal indicator matrix together with the rating
/// value at each revealed cell.
///
/// Estimators read true ratings only from here, never from a full rating
/// matrix, so the same code path serves real data where unrevealed
/// ratings are unknown.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSample {
    users: usize,
    items: usize,
    entries: Vec<ObservedEntry>,
}

impl ObservationSample {
    /// Validates index ranges and rejects duplicate (user, item) pairs.
    pub fn new(users: usize, items: usize, entries: Vec<ObservedEntry>) -> Result<Self> {
        check_dims(users, items)?;
        let mut seen = vec![false; users * items];
        for e in &entries {
            if e.user >= users || e.item >= items {
                return Err(Error::IndexOutOfRange {
                    user: e.user,
                    item: e.item,
                    users,
                    items,
                });
            }
            let cell = e.user * items + e.item;
            if seen[cell] {
                return Err(Error::DuplicateEntry {
                    user: e.user,
                    item: e.item,
                });
            }
            seen[cell] = true;
        }
        Ok(Self {
            users,
            items,
            entries,
        })
    }

    /// Sample in which every cell of `truth` is revealed.
    pub fn full(truth: &RatingMatrix) -> Self {
        let entries = (0..truth.users())
            .flat_map(|u| {
                (0..truth.items()).map(move |i| ObservedEntry {
                    user: u,
                    item: i,
                    rating: truth[(u, i)],
                })
            })
            .collect();
        Self {
            users: truth.users(),
            items: truth.items(),
            entries,
        }
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn items(&self) -> usize {
        self.items
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.users, self.items)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[ObservedEntry] {
        &self.entries
    }

    pub fn iter(&self) -> impl Iterator<Item = &ObservedEntry> {
        self.entries.iter()
    }

    /// Fraction of cells revealed.
    pub fn observed_fraction(&self) -> f64 {
        self.entries.len() as f64 / (self.users * self.items) as f64
    }

    /// 0/1 reveal indicator as a dense matrix.
    pub fn indicator(&self) -> RatingMatrix {
        let mut m = RatingMatrix::zeros(self.users, self.items).expect("dims validated");
        for e in &self.entries {
            m[(e.user, e.item)] = 1.0;
        }
        m
    }

    /// Errors unless every revealed rating matches `truth` at its cell.
    pub fn validate_against(&self, truth: &RatingMatrix) -> Result<()> {
        if (self.users, self.items) != truth.dims() {
            return Err(Error::DimensionMismatch {
                expected_users: self.users,
                expected_items: self.items,
                got_users: truth.users(),
                got_items: truth.items(),
            });
        }
        for e in &self.entries {
            let y = truth[(e.user, e.item)];
            if y != e.rating {
                return Err(Error::InvalidConfig {
                    reason: format!(
                        "revealed rating {} at ({}, {}) disagrees with ground truth {}",
                        e.rating, e.user, e.item, y
                    ),
                });
            }
        }
        Ok(())
    }
}

// ── Propensity matrix ─────────────────────────────────────────────────

/// Dense U x I matrix of marginal reveal probabilities.
///
/// Every entry lies in (0, 1]; zero propensities are rejected at
/// construction so inverse weighting is always defined.
#[derive(Debug, Clone, PartialEq)]
pub struct PropensityMatrix {
    users: usize,
    items: usize,
    values: Vec<f64>,
}

impl PropensityMatrix {
    pub fn new(users: usize, items: usize, values: Vec<f64>) -> Result<Self> {
        check_dims(users, items)?;
        if values.len() != users * items {
            return Err(Error::DimensionMismatch {
                expected_users: users,
                expected_items: items,
                got_users: values.len() / items.max(1),
                got_items: items,
            });
        }
        for (cell, &p) in values.iter().enumerate() {
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::InvalidPropensity {
                    user: cell / items,
                    item: cell % items,
                    value: p,
                });
            }
        }
        Ok(Self {
            users,
            items,
            values,
        })
    }

    /// Constant propensity p at every cell.
    pub fn uniform(users: usize, items: usize, p: f64) -> Result<Self> {
        Self::new(users, items, vec![p; users * items])
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn items(&self) -> usize {
        self.items
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.users, self.items)
    }

    pub fn get(&self, user: usize, item: usize) -> Result<f64> {
        if user >= self.users || item >= self.items {
            return Err(Error::IndexOutOfRange {
                user,
                item,
                users: self.users,
                items: self.items,
            });
        }
        Ok(self.values[user * self.items + item])
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Multiplies every propensity by `factor`, revalidating the range.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(
            self.users,
            self.items,
            self.values.iter().map(|p| p * factor).collect(),
        )
    }

    pub fn same_dims_as(&self, users: usize, items: usize) -> Result<()> {
        if (self.users, self.items) != (users, items) {
            return Err(Error::DimensionMismatch {
                expected_users: users,
                expected_items: items,
                got_users: self.users,
                got_items: self.items,
            });
        }
        Ok(())
    }
}

impl core::ops::Index<(usize, usize)> for PropensityMatrix {
    type Output = f64;

    fn index(&self, (user, item): (usize, usize)) -> &f64 {
        assert!(
            user < self.users && item < self.items,
            "propensity index out of range"
        );
        &self.values[user * self.items + item]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scale_rounding_clamps_and_rounds_half_away() {
        let s = RatingScale::default();
        assert_eq!(s.round_to_scale(2.5), 3.0);
        assert_eq!(s.round_to_scale(3.49), 3.0);
        assert_eq!(s.round_to_scale(7.2), 5.0);
        assert_eq!(s.round_to_scale(0.2), 1.0);
        assert_eq!(s.round_to_scale(-4.0), 1.0);
    }

    #[test]
    fn scale_membership_is_integer_only() {
        let s = RatingScale::default();
        assert!(s.contains(1.0));
        assert!(s.contains(5.0));
        assert!(!s.contains(5.5));
        assert!(!s.contains(0.0));
        assert!(!s.contains(6.0));
        assert_eq!(s.index_of(3.0), Some(2));
        assert_eq!(s.index_of(3.5), None);
    }

    #[test]
    fn matrix_rejects_wrong_value_count() {
        assert!(RatingMatrix::new(2, 3, vec![0.0; 5]).is_err());
        assert!(RatingMatrix::new(0, 3, vec![]).is_err());
    }

    #[test]
    fn matrix_indexing_is_row_major() {
        let m = RatingMatrix::new(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(m[(0, 0)], 1.0);
        assert_eq!(m[(0, 2)], 3.0);
        assert_eq!(m[(1, 0)], 4.0);
        assert_eq!(m.row(1), &[4.0, 5.0, 6.0]);
    }

    #[test]
    fn matrix_get_checks_bounds() {
        let m = RatingMatrix::zeros(2, 2).unwrap();
        assert!(matches!(m.get(2, 0), Err(Error::IndexOutOfRange { .. })));
        assert!(matches!(m.get(0, 2), Err(Error::IndexOutOfRange { .. })));
    }

    #[test]
    fn on_scale_validation() {
        let ok = RatingMatrix::new(1, 3, vec![1.0, 3.0, 5.0]).unwrap();
        assert!(ok.validate_on_scale(RatingScale::default()).is_ok());
        let bad = RatingMatrix::new(1, 3, vec![1.0, 3.5, 5.0]).unwrap();
        assert!(matches!(
            bad.validate_on_scale(RatingScale::default()),
            Err(Error::OffScaleRating { .. })
        ));
    }

    #[test]
    fn observations_reject_duplicates_and_bad_indices() {
        let dup = ObservationSample::new(
            2,
            2,
            vec![
                ObservedEntry {
                    user: 0,
                    item: 1,
                    rating: 3.0,
                },
                ObservedEntry {
                    user: 0,
                    item: 1,
                    rating: 3.0,
                },
            ],
        );
        assert!(matches!(
            dup,
            Err(Error::DuplicateEntry { user: 0, item: 1 })
        ));

        let oob = ObservationSample::new(
            2,
            2,
            vec![ObservedEntry {
                user: 2,
                item: 0,
                rating: 1.0,
            }],
        );
        assert!(matches!(oob, Err(Error::IndexOutOfRange { .. })));
    }

    #[test]
    fn full_sample_covers_every_cell() {
        let y = RatingMatrix::new(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let obs = ObservationSample::full(&y);
        assert_eq!(obs.len(), 4);
        assert!(obs.validate_against(&y).is_ok());
        assert_eq!(obs.indicator().values(), &[1.0; 4]);
        assert_eq!(obs.observed_fraction(), 1.0);
    }

    #[test]
    fn validate_against_catches_disagreement() {
        let y = RatingMatrix::new(1, 2, vec![4.0, 2.0]).unwrap();
        let obs = ObservationSample::new(
            1,
            2,
            vec![ObservedEntry {
                user: 0,
                item: 1,
                rating: 5.0,
            }],
        )
        .unwrap();
        assert!(obs.validate_against(&y).is_err());
    }

    #[test]
    fn propensities_must_lie_in_unit_interval() {
        assert!(PropensityMatrix::uniform(2, 2, 0.5).is_ok());
        assert!(PropensityMatrix::uniform(2, 2, 1.0).is_ok());
        assert!(matches!(
            PropensityMatrix::uniform(2, 2, 0.0),
            Err(Error::InvalidPropensity { .. })
        ));
        assert!(matches!(
            PropensityMatrix::uniform(2, 2, 1.2),
            Err(Error::InvalidPropensity { .. })
        ));
        let nan = PropensityMatrix::new(1, 1, vec![f64::NAN]);
        assert!(nan.is_err());
    }

    #[test]
    fn scaled_propensities_revalidate() {
        let p = PropensityMatrix::uniform(2, 2, 0.5).unwrap();
        let half = p.scaled(0.5).unwrap();
        assert_eq!(half[(0, 0)], 0.25);
        assert!(p.scaled(3.0).is_err());
    }
}
