//! Desk-scale checks of the semi-synthetic generation chain.

use proprec::bounds::ips_tail_bound;
use proprec::estimators::ips_estimate;
use proprec::loss::{true_risk, LossKind};
use proprec::matrix::RatingMatrix;
use proprec::rng;
use proprec::synthdata::{
    make_predictor, observation_propensities, quantile_assign, sample_observations,
    MarginalDistribution, ObservationModelConfig, PredictorKind,
};

/// A 250x400 ground truth whose histogram follows the default marginal.
fn ground_truth() -> RatingMatrix {
    let (users, items) = (250, 400);
    let mut r = rng::from_seed(42);
    let raw: Vec<f64> = (0..users * items)
        .map(|_| rng::uniform_f64(&mut r))
        .collect();
    let values = quantile_assign(&raw, &MarginalDistribution::default());
    RatingMatrix::new(users, items, values).unwrap()
}

#[test]
fn observed_rating_marginal_matches_published_shares() {
    let truth = ground_truth();
    let config = ObservationModelConfig {
        alpha: 0.25,
        target_fraction: 0.05,
    };
    let props = observation_propensities(&truth, &config).unwrap();

    // analytic share of each rating among revealed entries
    let mut mass = [0.0f64; 5];
    for (&y, &p) in truth.values().iter().zip(props.values()) {
        mass[y as usize - 1] += p;
    }
    let total: f64 = mass.iter().sum();
    let published = [0.06, 0.10, 0.25, 0.42, 0.17];
    for (r, &want) in published.iter().enumerate() {
        let share = mass[r] / total;
        assert!(
            (share - want).abs() < 0.03,
            "rating {}: analytic share {share}, published {want}",
            r + 1
        );
    }

    // one sampled draw stays close to the analytic shares
    let obs = sample_observations(&truth, &props, 7).unwrap();
    let mut counts = [0usize; 5];
    for e in obs.iter() {
        counts[e.rating as usize - 1] += 1;
    }
    for (r, &count) in counts.iter().enumerate() {
        let share = count as f64 / obs.len() as f64;
        let analytic = mass[r] / total;
        assert!(
            (share - analytic).abs() < 0.03,
            "rating {}: sampled share {share}, analytic {analytic}",
            r + 1
        );
    }
}

#[test]
fn ips_error_is_certified_by_the_tail_bound() {
    let truth = ground_truth();
    let config = ObservationModelConfig {
        alpha: 0.25,
        target_fraction: 0.05,
    };
    let props = observation_propensities(&truth, &config).unwrap();
    let pred = make_predictor(PredictorKind::Rotate, &truth, 5).unwrap();
    let obs = sample_observations(&truth, &props, 12).unwrap();

    let estimate = ips_estimate(&obs, &pred, &props, LossKind::Mae).unwrap();
    let risk = true_risk(&truth, &pred, LossKind::Mae).unwrap();
    let bound = ips_tail_bound(&truth, &pred, &props, LossKind::Mae, 0.05).unwrap();

    let deviation = (estimate.value - risk).abs();
    assert!(
        deviation <= bound,
        "deviation {deviation} exceeded the bound {bound}"
    );
    // at this scale the draw should in fact land much closer than the bound
    assert!(deviation < 0.5, "deviation {deviation}");
}
