//! Randomized invariants across the estimation stack.

use proptest::prelude::*;

use proprec::bounds::{erm_bound, ips_tail_bound, BoundInputs};
use proprec::estimators::{
    exact_expectation, ips_estimate, naive_estimate, snips_estimate, EstimatorKind,
};
use proprec::loss::{true_risk, LossEvaluator, LossKind};
use proprec::matrix::{
    ObservationSample, ObservedEntry, PropensityMatrix, RatingMatrix, RatingScale,
};
use proprec::propensity::{scale_for_cv, uniform_propensities, DEFAULT_PROPENSITY_FLOOR};
use proprec::synthdata::{quantile_assign, MarginalDistribution};

#[derive(Debug, Clone)]
struct Instance {
    truth: RatingMatrix,
    pred: RatingMatrix,
    props: PropensityMatrix,
    obs: ObservationSample,
}

fn instance(max_users: usize, max_items: usize) -> impl Strategy<Value = Instance> {
    (1..=max_users, 1..=max_items)
        .prop_flat_map(|(users, items)| {
            let n = users * items;
            (
                Just(users),
                Just(items),
                prop::collection::vec(1u32..=5u32, n),
                prop::collection::vec(0.0f64..=6.0, n),
                prop::collection::vec(0.05f64..=1.0, n),
                prop::collection::vec(any::<bool>(), n),
            )
        })
        .prop_map(|(users, items, ratings, pred, props, mut pattern)| {
            pattern[0] = true; // keep the sample non-empty
            let truth: Vec<f64> = ratings.iter().map(|&r| r as f64).collect();
            let entries: Vec<ObservedEntry> = pattern
                .iter()
                .enumerate()
                .filter(|(_, &seen)| seen)
                .map(|(cell, _)| ObservedEntry {
                    user: cell / items,
                    item: cell % items,
                    rating: truth[cell],
                })
                .collect();
            Instance {
                truth: RatingMatrix::new(users, items, truth).unwrap(),
                pred: RatingMatrix::new(users, items, pred).unwrap(),
                props: PropensityMatrix::new(users, items, props).unwrap(),
                obs: ObservationSample::new(users, items, entries).unwrap(),
            }
        })
}

fn pointwise_kind() -> impl Strategy<Value = LossKind> {
    prop_oneof![
        Just(LossKind::Mae),
        Just(LossKind::Mse),
        Just(LossKind::Accuracy)
    ]
}

proptest! {
    #[test]
    fn true_risk_is_invariant_under_joint_cell_permutation(
        (values, perm) in (2usize..=24).prop_flat_map(|n| (
            prop::collection::vec((1u32..=5u32, 0.0f64..=6.0), n),
            Just((0..n).collect::<Vec<usize>>()).prop_shuffle(),
        )),
        kind in pointwise_kind(),
    ) {
        let n = values.len();
        let truth: Vec<f64> = values.iter().map(|v| v.0 as f64).collect();
        let pred: Vec<f64> = values.iter().map(|v| v.1).collect();
        let permuted_truth: Vec<f64> = perm.iter().map(|&j| truth[j]).collect();
        let permuted_pred: Vec<f64> = perm.iter().map(|&j| pred[j]).collect();
        let a = true_risk(
            &RatingMatrix::new(1, n, truth).unwrap(),
            &RatingMatrix::new(1, n, pred).unwrap(),
            kind,
        ).unwrap();
        let b = true_risk(
            &RatingMatrix::new(1, n, permuted_truth).unwrap(),
            &RatingMatrix::new(1, n, permuted_pred).unwrap(),
            kind,
        ).unwrap();
        prop_assert!((a - b).abs() < 1e-10);
    }

    #[test]
    fn ranks_are_a_bijection_per_user(inst in instance(4, 6)) {
        let items = inst.pred.items();
        let eval = LossEvaluator::new(&inst.pred, LossKind::Dcg, RatingScale::default()).unwrap();
        for u in 0..inst.pred.users() {
            let mut seen = vec![false; items];
            for i in 0..items {
                let r = eval.rank(u, i).unwrap() as usize;
                prop_assert!((1..=items).contains(&r));
                prop_assert!(!seen[r - 1], "rank {r} repeated for user {u}");
                seen[r - 1] = true;
            }
        }
    }

    #[test]
    fn dcg_at_full_cutoff_matches_plain_dcg(inst in instance(4, 6)) {
        let items = inst.pred.items();
        let full = true_risk(&inst.truth, &inst.pred, LossKind::DcgAt { cutoff: items }).unwrap();
        let plain = true_risk(&inst.truth, &inst.pred, LossKind::Dcg).unwrap();
        prop_assert!((full - plain).abs() < 1e-12);
    }

    #[test]
    fn ips_under_matching_uniform_propensity_reduces_to_naive(
        inst in instance(4, 4),
        kind in pointwise_kind(),
    ) {
        let props = uniform_propensities(&inst.obs);
        let ips = ips_estimate(&inst.obs, &inst.pred, &props, kind).unwrap();
        let naive = naive_estimate(&inst.obs, &inst.pred, kind).unwrap();
        prop_assert!((ips.value - naive.value).abs() < 1e-10);
    }

    #[test]
    fn snips_matches_naive_under_any_uniform_propensity(
        inst in instance(4, 4),
        p in 0.05f64..=1.0,
        kind in pointwise_kind(),
    ) {
        let props = PropensityMatrix::uniform(inst.obs.users(), inst.obs.items(), p).unwrap();
        let snips = snips_estimate(&inst.obs, &inst.pred, &props, kind).unwrap();
        let naive = naive_estimate(&inst.obs, &inst.pred, kind).unwrap();
        prop_assert!((snips.value - naive.value).abs() < 1e-10);
    }

    #[test]
    fn shrinking_propensities_never_lowers_ips(
        inst in instance(4, 4),
        factor in 0.1f64..1.0,
        kind in pointwise_kind(),
    ) {
        let shrunk = inst.props.scaled(factor).unwrap();
        let base = ips_estimate(&inst.obs, &inst.pred, &inst.props, kind).unwrap();
        let inflated = ips_estimate(&inst.obs, &inst.pred, &shrunk, kind).unwrap();
        prop_assert!(inflated.value >= base.value - 1e-12);
    }

    #[test]
    fn reports_carry_counts_and_normalizers(inst in instance(4, 4)) {
        let cells = (inst.obs.users() * inst.obs.items()) as f64;
        let naive = naive_estimate(&inst.obs, &inst.pred, LossKind::Mae).unwrap();
        prop_assert_eq!(naive.estimator, EstimatorKind::Naive);
        prop_assert_eq!(naive.observed, inst.obs.len());
        prop_assert_eq!(naive.normalizer, inst.obs.len() as f64);

        let ips = ips_estimate(&inst.obs, &inst.pred, &inst.props, LossKind::Mae).unwrap();
        prop_assert_eq!(ips.estimator, EstimatorKind::Ips);
        prop_assert_eq!(ips.normalizer, cells);

        let snips = snips_estimate(&inst.obs, &inst.pred, &inst.props, LossKind::Mae).unwrap();
        let inv_sum: f64 = inst.obs.iter().map(|e| 1.0 / inst.props[(e.user, e.item)]).sum();
        prop_assert_eq!(snips.estimator, EstimatorKind::Snips);
        prop_assert!((snips.normalizer - inv_sum).abs() < 1e-9 * inv_sum.max(1.0));
    }

    #[test]
    fn tail_bound_widens_as_eta_shrinks(
        inst in instance(3, 3),
        (lo, hi) in (0.01f64..0.5, 0.5f64..0.99),
    ) {
        let tight = ips_tail_bound(&inst.truth, &inst.pred, &inst.props, LossKind::Mae, hi).unwrap();
        let wide = ips_tail_bound(&inst.truth, &inst.pred, &inst.props, LossKind::Mae, lo).unwrap();
        prop_assert!(wide >= tight - 1e-15);
    }

    #[test]
    fn erm_bound_widens_with_hypothesis_count(
        inst in instance(3, 3),
        small in 1usize..100,
        extra in 1usize..10_000,
    ) {
        let few = BoundInputs { delta_max: 4.0, eta: 0.05, hypothesis_count: small };
        let many = BoundInputs { delta_max: 4.0, eta: 0.05, hypothesis_count: small + extra };
        let a = erm_bound(1.0, &few, &inst.props).unwrap();
        let b = erm_bound(1.0, &many, &inst.props).unwrap();
        prop_assert!(b >= a - 1e-15);
    }

    #[test]
    fn cv_scaling_stays_within_floor_and_one(
        inst in instance(4, 4),
        factor in 0.01f64..=1.0,
    ) {
        let scaled = scale_for_cv(&inst.props, factor).unwrap();
        for &p in scaled.values() {
            prop_assert!((DEFAULT_PROPENSITY_FLOOR..=1.0).contains(&p));
        }
    }

    #[test]
    fn quantile_assignment_matches_floor_counts(
        values in prop::collection::vec(-10.0f64..=10.0, 1..200),
        raw in prop::collection::vec(0.01f64..=1.0, 5),
    ) {
        let total: f64 = raw.iter().sum();
        let mut p = [0.0; 5];
        for (slot, r) in p.iter_mut().zip(&raw) {
            *slot = r / total;
        }
        let sum_head: f64 = p[..4].iter().sum();
        p[4] = 1.0 - sum_head; // exact complement so validation passes
        let marginal = MarginalDistribution::new(p).unwrap();
        let assigned = quantile_assign(&values, &marginal);
        prop_assert_eq!(assigned.len(), values.len());
        let n = values.len() as f64;
        let mut counts = [0usize; 5];
        for &v in &assigned {
            prop_assert!((1.0..=5.0).contains(&v) && v.fract() == 0.0);
            counts[v as usize - 1] += 1;
        }
        let mut expected_head = 0;
        for r in 0..4 {
            let want = (p[r] * n + 1e-9).floor() as usize;
            prop_assert_eq!(counts[r], want);
            expected_head += want;
        }
        prop_assert_eq!(counts[4], values.len() - expected_head);
    }

    #[test]
    fn rounding_lands_on_scale_and_is_idempotent(value in -3.0f64..=9.0) {
        let scale = RatingScale::default();
        let rounded = scale.round_to_scale(value);
        prop_assert!(scale.contains(rounded));
        prop_assert_eq!(scale.round_to_scale(rounded), rounded);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn enumerated_ips_expectation_equals_true_risk(
        inst in instance(3, 3),
        kind in pointwise_kind(),
    ) {
        let moments = exact_expectation(
            &inst.truth,
            &inst.pred,
            &inst.props,
            &inst.props,
            kind,
            EstimatorKind::Ips,
        ).unwrap();
        let risk = true_risk(&inst.truth, &inst.pred, kind).unwrap();
        prop_assert!((moments.mean - risk).abs() < 1e-10, "mean {} risk {}", moments.mean, risk);
        prop_assert!(moments.variance >= 0.0);
        prop_assert_eq!(moments.undefined_mass, 0.0);
    }
}
