//! Batch experiment runners: the estimator comparison table, sweeps over
//! the bias severity alpha (estimation quality and learning quality),
//! robustness sweeps over the marginal-sample size behind the naive-Bayes
//! propensities, and a cross-validated training run on ingested data.
//!
//! Every runner is bit-reproducible from its spec. Randomness flows from
//! `spec.seed` through fixed stream offsets, so trials are independent of
//! execution order:
//!
//! * ground truth: streams 1 (partial ratings) and 2 (completion)
//! * predictor i: stream 100 + i
//! * observation pattern: 10e6 + param_slot * 1e5 + trial
//! * marginal MCAR sample: 20e6 + size_slot * 1e5 + trial
//! * training: 30e6 + param_slot * 1e5 + trial

use std::path::PathBuf;

use proprec::estimators::{
    ips_estimate_with, naive_estimate_with, snips_estimate_with, EstimatorKind,
};
use proprec::factorization::{cross_validate, train, TrainConfig, DEFAULT_LAMBDA_GRID};
use proprec::loss::{true_risk, LossEvaluator, LossKind};
use proprec::matrix::{ObservationSample, PropensityMatrix, RatingMatrix, RatingScale};
use proprec::propensity::{uniform_propensities, NaiveBayesPropensityModel};
use proprec::rng::{self, derive_seed};
use proprec::synthdata::{
    complete_and_adjust, make_predictor, observation_propensities, sample_observations,
    synthetic_partial, CompletionConfig, MarginalDistribution, ObservationModelConfig,
    PredictorKind,
};

use crate::model_io::save_model;
use crate::report::{summarize, ReportRow, SweepReport};
use crate::triplets::{ingest_triplets, TripletFormat};
use crate::{CliError, Result};

const ESTIMATORS: [EstimatorKind; 3] = [
    EstimatorKind::Naive,
    EstimatorKind::Ips,
    EstimatorKind::Snips,
];

// ── Seed streams ──────────────────────────────────────────────────────

const STREAM_PARTIAL: u64 = 1;
const STREAM_COMPLETION: u64 = 2;
const STREAM_PREDICTOR_BASE: u64 = 100;

fn sample_stream(param_slot: usize, trial: usize) -> u64 {
    10_000_000 + param_slot as u64 * 100_000 + trial as u64
}

fn mcar_stream(size_slot: usize, trial: usize) -> u64 {
    20_000_000 + size_slot as u64 * 100_000 + trial as u64
}

fn train_stream(param_slot: usize, trial: usize) -> u64 {
    30_000_000 + param_slot as u64 * 100_000 + trial as u64
}

// ── Spec ──────────────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    EstimatorTable,
    AlphaSweepEval,
    AlphaSweepLearn,
    RobustnessSweep,
    TrainReal,
}

impl std::fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            ExperimentKind::EstimatorTable => "estimator-table",
            ExperimentKind::AlphaSweepEval => "alpha-sweep-eval",
            ExperimentKind::AlphaSweepLearn => "alpha-sweep-learn",
            ExperimentKind::RobustnessSweep => "robustness-sweep",
            ExperimentKind::TrainReal => "train-real",
        };
        write!(f, "{name}")
    }
}

impl std::str::FromStr for ExperimentKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "estimator-table" => Ok(ExperimentKind::EstimatorTable),
            "alpha-sweep-eval" => Ok(ExperimentKind::AlphaSweepEval),
            "alpha-sweep-learn" => Ok(ExperimentKind::AlphaSweepLearn),
            "robustness-sweep" => Ok(ExperimentKind::RobustnessSweep),
            "train-real" => Ok(ExperimentKind::TrainReal),
            other => Err(format!("unknown experiment kind '{other}'")),
        }
    }
}

/// Everything a runner needs; [`ExperimentSpec::for_kind`] fills in the
/// documented defaults per kind (50 trials for estimation sweeps, 30 for
/// learning sweeps, desk-scale 200x300 matrix).
#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    pub users: usize,
    pub items: usize,
    /// Observation patterns per swept parameter value.
    pub trials: usize,
    /// Bias severities; estimator table and robustness use the first.
    pub alphas: Vec<f64>,
    pub target_fraction: f64,
    pub seed: u64,
    pub metrics: Vec<LossKind>,
    /// Marginal-sample sizes for the robustness sweep.
    pub mcar_sizes: Vec<usize>,
    /// Smoothing pseudo-count for naive-Bayes propensity fits.
    pub laplace: f64,
    pub rank: usize,
    pub lambda_grid: Vec<f64>,
    pub folds: usize,
    pub max_iterations: usize,
    /// Trained-model trials inside the robustness sweep.
    pub learn_trials: usize,
    /// Triplet file for `train-real`.
    pub input: Option<PathBuf>,
    pub input_format: TripletFormat,
    /// Where `train-real` persists its fitted model, if anywhere.
    pub model_out: Option<PathBuf>,
}

impl ExperimentSpec {
    pub fn for_kind(kind: ExperimentKind) -> Self {
        let (trials, alphas, metrics): (usize, Vec<f64>, Vec<LossKind>) = match kind {
            ExperimentKind::EstimatorTable => (
                50,
                vec![0.25],
                vec![LossKind::Mae, LossKind::DcgAt { cutoff: 50 }],
            ),
            ExperimentKind::AlphaSweepEval => {
                (50, vec![1.0, 0.5, 0.25, 0.125, 0.0625], vec![LossKind::Mae])
            }
            ExperimentKind::AlphaSweepLearn => {
                (30, vec![1.0, 0.5, 0.25, 0.125, 0.0625], vec![LossKind::Mse])
            }
            ExperimentKind::RobustnessSweep => (50, vec![0.25], vec![LossKind::Mse]),
            ExperimentKind::TrainReal => (1, vec![0.25], vec![LossKind::Mse]),
        };
        Self {
            kind,
            users: 200,
            items: 300,
            trials,
            alphas,
            target_fraction: 0.05,
            seed: 0,
            metrics,
            mcar_sizes: vec![100, 1000, 10_000],
            laplace: 1.0,
            rank: 20,
            lambda_grid: DEFAULT_LAMBDA_GRID.to_vec(),
            folds: 4,
            max_iterations: 500,
            learn_trials: 10,
            input: None,
            input_format: TripletFormat::Ml100kTsv,
            model_out: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 || self.learn_trials == 0 {
            return Err(CliError::invalid("trial counts must be at least 1"));
        }
        if self.users == 0 || self.items == 0 {
            return Err(CliError::invalid("matrix dimensions must be at least 1"));
        }
        if self.alphas.is_empty() {
            return Err(CliError::invalid("at least one alpha is required"));
        }
        for &a in &self.alphas {
            if !(a > 0.0 && a <= 1.0) {
                return Err(CliError::invalid(format!("alpha {a} must lie in (0, 1]")));
            }
        }
        if !(self.target_fraction > 0.0 && self.target_fraction <= 1.0) {
            return Err(CliError::invalid(format!(
                "target fraction {} must lie in (0, 1]",
                self.target_fraction
            )));
        }
        if self.metrics.is_empty() {
            return Err(CliError::invalid("at least one metric is required"));
        }
        if self.lambda_grid.is_empty() {
            return Err(CliError::invalid("the lambda grid must be non-empty"));
        }
        if self.rank == 0 {
            return Err(CliError::invalid("rank must be at least 1"));
        }
        if self.folds < 2 {
            return Err(CliError::invalid("cross-validation needs at least 2 folds"));
        }
        if self.kind == ExperimentKind::RobustnessSweep
            && (self.mcar_sizes.is_empty() || self.mcar_sizes.contains(&0))
        {
            return Err(CliError::invalid("marginal sample sizes must be positive"));
        }
        if self.kind == ExperimentKind::TrainReal && self.input.is_none() {
            return Err(CliError::invalid("train-real needs an input triplet file"));
        }
        Ok(())
    }
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<SweepReport> {
    match spec.kind {
        ExperimentKind::EstimatorTable => run_estimator_table(spec),
        ExperimentKind::AlphaSweepEval | ExperimentKind::AlphaSweepLearn => run_alpha_sweep(spec),
        ExperimentKind::RobustnessSweep => run_robustness_sweep(spec),
        ExperimentKind::TrainReal => run_train_real(spec),
    }
}

// ── Shared plumbing ───────────────────────────────────────────────────

/// Semi-synthetic ground truth: a sparse low-rank rating sample is
/// completed by unweighted factorization and reshaped to the default
/// skewed marginal, giving a fully known matrix with realistic structure.
pub fn build_ground_truth(users: usize, items: usize, seed: u64) -> Result<RatingMatrix> {
    let partial = synthetic_partial(users, items, 0.3, derive_seed(seed, STREAM_PARTIAL))?;
    let marginal = MarginalDistribution::default();
    let config = CompletionConfig {
        seed: derive_seed(seed, STREAM_COMPLETION),
        ..CompletionConfig::default()
    };
    Ok(complete_and_adjust(&partial, &marginal, &config)?)
}

struct PredictorSet {
    kinds: Vec<PredictorKind>,
    matrices: Vec<RatingMatrix>,
}

fn build_predictors(truth: &RatingMatrix, seed: u64) -> Result<PredictorSet> {
    let mut matrices = Vec::with_capacity(PredictorKind::ALL.len());
    for (idx, &kind) in PredictorKind::ALL.iter().enumerate() {
        matrices.push(make_predictor(
            kind,
            truth,
            derive_seed(seed, STREAM_PREDICTOR_BASE + idx as u64),
        )?);
    }
    Ok(PredictorSet {
        kinds: PredictorKind::ALL.to_vec(),
        matrices,
    })
}

/// Per metric: one ready evaluator and one exact true risk per predictor.
struct MetricEval<'a> {
    metric: LossKind,
    evals: Vec<LossEvaluator<'a>>,
    trues: Vec<f64>,
}

fn build_metric_evals<'a>(
    preds: &'a PredictorSet,
    truth: &RatingMatrix,
    metrics: &[LossKind],
) -> Result<Vec<MetricEval<'a>>> {
    let scale = RatingScale::default();
    metrics
        .iter()
        .map(|&metric| {
            let mut evals = Vec::with_capacity(preds.matrices.len());
            let mut trues = Vec::with_capacity(preds.matrices.len());
            for pm in &preds.matrices {
                evals.push(LossEvaluator::new(pm, metric, scale)?);
                trues.push(true_risk(truth, pm, metric)?);
            }
            Ok(MetricEval {
                metric,
                evals,
                trues,
            })
        })
        .collect()
}

fn estimate_value(
    est: EstimatorKind,
    obs: &ObservationSample,
    props: &PropensityMatrix,
    eval: &LossEvaluator<'_>,
) -> Result<f64> {
    Ok(match est {
        EstimatorKind::Naive => naive_estimate_with(obs, eval)?.value,
        EstimatorKind::Ips => ips_estimate_with(obs, props, eval)?.value,
        EstimatorKind::Snips => snips_estimate_with(obs, props, eval)?.value,
    })
}

/// `samples[metric][predictor][estimator]` -> per-trial estimate values.
type Samples = Vec<Vec<Vec<Vec<f64>>>>;

fn collect_estimates(
    truth: &RatingMatrix,
    props: &PropensityMatrix,
    metric_evals: &[MetricEval<'_>],
    trials: usize,
    param_slot: usize,
    seed: u64,
) -> Result<Samples> {
    let mut out: Samples = metric_evals
        .iter()
        .map(|me| vec![vec![Vec::with_capacity(trials); ESTIMATORS.len()]; me.evals.len()])
        .collect();
    for t in 0..trials {
        let obs = sample_observations(
            truth,
            props,
            derive_seed(seed, sample_stream(param_slot, t)),
        )?;
        for (m, me) in metric_evals.iter().enumerate() {
            for (p, eval) in me.evals.iter().enumerate() {
                for (e, &est) in ESTIMATORS.iter().enumerate() {
                    out[m][p][e].push(estimate_value(est, &obs, props, eval)?);
                }
            }
        }
    }
    Ok(out)
}

/// Rows for one swept parameter value: one row per (predictor, metric,
/// estimator) scored against the exact true value, plus, when `pooled`,
/// an `ALL` row per (metric, estimator) aggregating the estimation
/// errors over trials and predictors (mean/std describe the error, rmse
/// its quadratic mean).
fn estimate_rows(
    param: &str,
    preds: &PredictorSet,
    metric_evals: &[MetricEval<'_>],
    samples: &Samples,
    trials: usize,
    pooled: bool,
) -> Vec<ReportRow> {
    let mut rows = Vec::new();
    for (m, me) in metric_evals.iter().enumerate() {
        for (e, est) in ESTIMATORS.iter().enumerate() {
            for (p, kind) in preds.kinds.iter().enumerate() {
                let (mean, std, rmse) = summarize(&samples[m][p][e], Some(me.trues[p]));
                rows.push(ReportRow {
                    param: param.to_string(),
                    predictor: kind.to_string(),
                    estimator: est.to_string(),
                    metric: me.metric.to_string(),
                    true_value: Some(me.trues[p]),
                    rmse,
                    mean,
                    std,
                    trials,
                });
            }
            if pooled {
                let errors: Vec<f64> = (0..preds.kinds.len())
                    .flat_map(|p| samples[m][p][e].iter().map(move |v| v - me.trues[p]))
                    .collect();
                let (mean, std, rmse) = summarize(&errors, Some(0.0));
                rows.push(ReportRow {
                    param: param.to_string(),
                    predictor: "ALL".to_string(),
                    estimator: est.to_string(),
                    metric: me.metric.to_string(),
                    true_value: None,
                    rmse,
                    mean,
                    std,
                    trials,
                });
            }
        }
    }
    rows
}

/// `size` ratings drawn from uniformly random cells (with replacement),
/// i.e. an i.i.d. sample from the ground-truth marginal.
pub fn mcar_ratings(truth: &RatingMatrix, size: usize, seed: u64) -> Vec<f64> {
    let mut r = rng::from_seed(seed);
    (0..size)
        .map(|_| truth.values()[rng::index_below(&mut r, truth.cells())])
        .collect()
}

// ── Estimator table ───────────────────────────────────────────────────

/// Mean and spread of Naive, IPS and SNIPS against the exact true value
/// for each of the five synthetic predictors, at the first alpha.
pub fn run_estimator_table(spec: &ExperimentSpec) -> Result<SweepReport> {
    spec.validate()?;
    let alpha = spec.alphas[0];
    let truth = build_ground_truth(spec.users, spec.items, spec.seed)?;
    let props = observation_propensities(
        &truth,
        &ObservationModelConfig {
            alpha,
            target_fraction: spec.target_fraction,
        },
    )?;
    let preds = build_predictors(&truth, spec.seed)?;
    let metric_evals = build_metric_evals(&preds, &truth, &spec.metrics)?;
    let samples = collect_estimates(&truth, &props, &metric_evals, spec.trials, 0, spec.seed)?;
    let rows = estimate_rows(
        &alpha.to_string(),
        &preds,
        &metric_evals,
        &samples,
        spec.trials,
        false,
    );
    Ok(SweepReport { rows })
}

// ── Alpha sweeps ──────────────────────────────────────────────────────

/// Evaluation sweep: estimator accuracy per alpha, with pooled `ALL`
/// rows. Learning sweep: true risk of models trained with inverse
/// propensity weights versus uniform weights, per alpha.
pub fn run_alpha_sweep(spec: &ExperimentSpec) -> Result<SweepReport> {
    spec.validate()?;
    let truth = build_ground_truth(spec.users, spec.items, spec.seed)?;
    let mut rows = Vec::new();
    match spec.kind {
        ExperimentKind::AlphaSweepLearn => {
            for (a_idx, &alpha) in spec.alphas.iter().enumerate() {
                let props = observation_propensities(
                    &truth,
                    &ObservationModelConfig {
                        alpha,
                        target_fraction: spec.target_fraction,
                    },
                )?;
                let trials = learning_comparison(&truth, &props, spec, a_idx)?;
                rows.extend(learning_rows(&alpha.to_string(), spec, &trials));
            }
        }
        _ => {
            let preds = build_predictors(&truth, spec.seed)?;
            let metric_evals = build_metric_evals(&preds, &truth, &spec.metrics)?;
            for (a_idx, &alpha) in spec.alphas.iter().enumerate() {
                let props = observation_propensities(
                    &truth,
                    &ObservationModelConfig {
                        alpha,
                        target_fraction: spec.target_fraction,
                    },
                )?;
                let samples = collect_estimates(
                    &truth,
                    &props,
                    &metric_evals,
                    spec.trials,
                    a_idx,
                    spec.seed,
                )?;
                rows.extend(estimate_rows(
                    &alpha.to_string(),
                    &preds,
                    &metric_evals,
                    &samples,
                    spec.trials,
                    true,
                ));
            }
        }
    }
    Ok(SweepReport { rows })
}

/// One learning-sweep trial: the same observation sample trained twice,
/// once with the true propensities and once with uniform ones, each with
/// its own cross-validated lambda but a shared seed, scored by true risk.
#[derive(Debug, Clone, Copy)]
pub struct LearningTrial {
    pub weighted_risk: f64,
    pub uniform_risk: f64,
    pub weighted_lambda: f64,
    pub uniform_lambda: f64,
}

pub fn learning_comparison(
    truth: &RatingMatrix,
    props: &PropensityMatrix,
    spec: &ExperimentSpec,
    param_slot: usize,
) -> Result<Vec<LearningTrial>> {
    let metric = spec.metrics[0];
    let mut out = Vec::with_capacity(spec.trials);
    for t in 0..spec.trials {
        let obs = sample_observations(
            truth,
            props,
            derive_seed(spec.seed, sample_stream(param_slot, t)),
        )?;
        let train_seed = derive_seed(spec.seed, train_stream(param_slot, t));
        let (weighted_lambda, weighted_risk) =
            cv_train_true_risk(truth, &obs, props, spec, metric, train_seed)?;
        let uniform = uniform_propensities(&obs);
        let (uniform_lambda, uniform_risk) =
            cv_train_true_risk(truth, &obs, &uniform, spec, metric, train_seed)?;
        out.push(LearningTrial {
            weighted_risk,
            uniform_risk,
            weighted_lambda,
            uniform_lambda,
        });
    }
    Ok(out)
}

fn cv_train_true_risk(
    truth: &RatingMatrix,
    obs: &ObservationSample,
    props: &PropensityMatrix,
    spec: &ExperimentSpec,
    metric: LossKind,
    seed: u64,
) -> Result<(f64, f64)> {
    let mut base = TrainConfig::new(spec.lambda_grid[0], spec.rank);
    base.seed = seed;
    base.max_iterations = spec.max_iterations;
    let cv = cross_validate(
        obs,
        props,
        &spec.lambda_grid,
        &[spec.rank],
        spec.folds,
        &base,
    )?;
    let risk = true_risk(truth, &cv.outcome.model.predict(), metric)?;
    Ok((cv.best_lambda, risk))
}

fn learning_rows(param: &str, spec: &ExperimentSpec, trials: &[LearningTrial]) -> Vec<ReportRow> {
    let metric = spec.metrics[0].to_string();
    let weighted: Vec<f64> = trials.iter().map(|t| t.weighted_risk).collect();
    let uniform: Vec<f64> = trials.iter().map(|t| t.uniform_risk).collect();
    let wins: Vec<f64> = trials
        .iter()
        .map(|t| {
            if t.weighted_risk < t.uniform_risk {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    let row = |estimator: &str, values: &[f64]| {
        let (mean, std, _) = summarize(values, None);
        ReportRow {
            param: param.to_string(),
            predictor: "MF".to_string(),
            estimator: estimator.to_string(),
            metric: metric.clone(),
            true_value: None,
            rmse: None,
            mean,
            std,
            trials: trials.len(),
        }
    };
    vec![
        row("MF-IPS", &weighted),
        row("MF-UNIFORM", &uniform),
        row("WIN-RATE", &wins),
    ]
}

// ── Robustness sweep ──────────────────────────────────────────────────

/// Estimation quality under naive-Bayes propensities fitted from finite
/// marginal samples, against true-propensity and Naive references, plus
/// trained-model true risk per propensity source at each sample size.
pub fn run_robustness_sweep(spec: &ExperimentSpec) -> Result<SweepReport> {
    spec.validate()?;
    let alpha = spec.alphas[0];
    let truth = build_ground_truth(spec.users, spec.items, spec.seed)?;
    let props = observation_propensities(
        &truth,
        &ObservationModelConfig {
            alpha,
            target_fraction: spec.target_fraction,
        },
    )?;
    let preds = build_predictors(&truth, spec.seed)?;
    let metric_evals = build_metric_evals(&preds, &truth, &spec.metrics)?;
    let scale = RatingScale::default();

    // estimation part: pooled errors per (size, metric) for NB-weighted
    // IPS, with size-independent reference errors collected once
    let mut nb_errors = vec![vec![Vec::new(); metric_evals.len()]; spec.mcar_sizes.len()];
    let mut ref_ips_errors = vec![Vec::new(); metric_evals.len()];
    let mut ref_naive_errors = vec![Vec::new(); metric_evals.len()];
    for t in 0..spec.trials {
        let obs = sample_observations(&truth, &props, derive_seed(spec.seed, sample_stream(0, t)))?;
        for (m, me) in metric_evals.iter().enumerate() {
            for (p, eval) in me.evals.iter().enumerate() {
                ref_ips_errors[m].push(ips_estimate_with(&obs, &props, eval)?.value - me.trues[p]);
                ref_naive_errors[m].push(naive_estimate_with(&obs, eval)?.value - me.trues[p]);
            }
        }
        for (s_idx, &size) in spec.mcar_sizes.iter().enumerate() {
            let marginal_sample =
                mcar_ratings(&truth, size, derive_seed(spec.seed, mcar_stream(s_idx, t)));
            let nb = NaiveBayesPropensityModel::fit(&obs, &marginal_sample, spec.laplace, scale)?;
            let nb_props = nb.propensity_matrix(&obs)?.matrix;
            for (m, me) in metric_evals.iter().enumerate() {
                for (p, eval) in me.evals.iter().enumerate() {
                    nb_errors[s_idx][m]
                        .push(ips_estimate_with(&obs, &nb_props, eval)?.value - me.trues[p]);
                }
            }
        }
    }

    let mut rows = Vec::new();
    let pooled_row = |param: &str, estimator: &str, metric: &LossKind, errors: &[f64]| {
        let (mean, std, rmse) = summarize(errors, Some(0.0));
        ReportRow {
            param: param.to_string(),
            predictor: "ALL".to_string(),
            estimator: estimator.to_string(),
            metric: metric.to_string(),
            true_value: None,
            rmse,
            mean,
            std,
            trials: spec.trials,
        }
    };
    for (m, me) in metric_evals.iter().enumerate() {
        rows.push(pooled_row(
            "REF",
            "TRUE-IPS",
            &me.metric,
            &ref_ips_errors[m],
        ));
        rows.push(pooled_row("REF", "NAIVE", &me.metric, &ref_naive_errors[m]));
        for (s_idx, &size) in spec.mcar_sizes.iter().enumerate() {
            rows.push(pooled_row(
                &size.to_string(),
                "NB-IPS",
                &me.metric,
                &nb_errors[s_idx][m],
            ));
        }
    }

    // learning part: the uniform baseline ignores the marginal sample,
    // so its trials are computed once and reported at every size
    let metric = spec.metrics[0];
    let uniform_risks = learned_risks(&truth, &props, spec, PropsSource::Uniform)?;
    for (s_idx, &size) in spec.mcar_sizes.iter().enumerate() {
        let nb_risks = learned_risks(
            &truth,
            &props,
            spec,
            PropsSource::NaiveBayes { s_idx, size },
        )?;
        let model_row = |estimator: &str, values: &[f64]| {
            let (mean, std, _) = summarize(values, None);
            ReportRow {
                param: size.to_string(),
                predictor: "MF".to_string(),
                estimator: estimator.to_string(),
                metric: metric.to_string(),
                true_value: None,
                rmse: None,
                mean,
                std,
                trials: spec.learn_trials,
            }
        };
        rows.push(model_row("MF-NB", &nb_risks));
        rows.push(model_row("MF-UNIFORM", &uniform_risks));
    }
    Ok(SweepReport { rows })
}

enum PropsSource {
    Uniform,
    NaiveBayes { s_idx: usize, size: usize },
}

/// True risk of `learn_trials` trained models. Lambda is cross-validated
/// on the first trial and reused for the rest; the observation streams
/// are shared across sources so only the weighting differs.
fn learned_risks(
    truth: &RatingMatrix,
    props: &PropensityMatrix,
    spec: &ExperimentSpec,
    source: PropsSource,
) -> Result<Vec<f64>> {
    let metric = spec.metrics[0];
    let scale = RatingScale::default();
    let mut chosen_lambda: Option<f64> = None;
    let mut out = Vec::with_capacity(spec.learn_trials);
    for t in 0..spec.learn_trials {
        let obs = sample_observations(truth, props, derive_seed(spec.seed, sample_stream(1, t)))?;
        let train_props = match source {
            PropsSource::Uniform => uniform_propensities(&obs),
            PropsSource::NaiveBayes { s_idx, size } => {
                let marginal_sample = mcar_ratings(
                    truth,
                    size,
                    derive_seed(spec.seed, mcar_stream(s_idx, 50_000 + t)),
                );
                let nb =
                    NaiveBayesPropensityModel::fit(&obs, &marginal_sample, spec.laplace, scale)?;
                nb.propensity_matrix(&obs)?.matrix
            }
        };
        let seed = derive_seed(spec.seed, train_stream(1, t));
        let mut cfg = TrainConfig::new(spec.lambda_grid[0], spec.rank);
        cfg.seed = seed;
        cfg.max_iterations = spec.max_iterations;
        let model = match chosen_lambda {
            Some(lambda) => {
                cfg.lambda = lambda;
                train(&obs, &train_props, &cfg)?.model
            }
            None => {
                let cv = cross_validate(
                    &obs,
                    &train_props,
                    &spec.lambda_grid,
                    &[spec.rank],
                    spec.folds,
                    &cfg,
                )?;
                chosen_lambda = Some(cv.best_lambda);
                cv.outcome.model
            }
        };
        out.push(true_risk(truth, &model.predict(), metric)?);
    }
    Ok(out)
}

// ── Real-data training ────────────────────────────────────────────────

/// Ingests a triplet file, cross-validates lambda at the spec's rank
/// under uniform propensities (no observation model is known for real
/// logs), optionally persists the model, and reports the estimators on
/// the training observations.
pub fn run_train_real(spec: &ExperimentSpec) -> Result<SweepReport> {
    spec.validate()?;
    let input = spec.input.as_deref().expect("validated above");
    let (obs, _mapping) = ingest_triplets(input, spec.input_format)?;
    let props = uniform_propensities(&obs);
    let mut base = TrainConfig::new(spec.lambda_grid[0], spec.rank);
    base.seed = derive_seed(spec.seed, train_stream(0, 0));
    base.max_iterations = spec.max_iterations;
    let cv = cross_validate(
        &obs,
        &props,
        &spec.lambda_grid,
        &[spec.rank],
        spec.folds,
        &base,
    )?;
    if let Some(path) = &spec.model_out {
        save_model(path, &cv.outcome.model)?;
    }
    let pred = cv.outcome.model.predict();
    let mut rows = Vec::new();
    for &metric in &spec.metrics {
        let eval = LossEvaluator::new(&pred, metric, RatingScale::default())?;
        for est in ESTIMATORS {
            rows.push(ReportRow {
                param: "REAL".to_string(),
                predictor: "MF".to_string(),
                estimator: est.to_string(),
                metric: metric.to_string(),
                true_value: None,
                rmse: None,
                mean: estimate_value(est, &obs, &props, &eval)?,
                std: 0.0,
                trials: 1,
            });
        }
    }
    Ok(SweepReport { rows })
}

// ── Metric names ──────────────────────────────────────────────────────

/// Parses a metric name as printed in reports: `MAE`, `MSE`, `ACC`,
/// `DCG`, or `DCG@k` / `PREC@k` / `CG@k` with a positive cutoff.
pub fn parse_metric(s: &str) -> Result<LossKind> {
    let up = s.trim().to_ascii_uppercase();
    let parse_cutoff = |rest: &str| -> Result<usize> {
        rest.parse::<usize>()
            .ok()
            .filter(|&k| k >= 1)
            .ok_or_else(|| CliError::invalid(format!("bad cutoff in metric '{s}'")))
    };
    match up.as_str() {
        "MAE" => Ok(LossKind::Mae),
        "MSE" => Ok(LossKind::Mse),
        "ACC" | "ACCURACY" => Ok(LossKind::Accuracy),
        "DCG" => Ok(LossKind::Dcg),
        _ => {
            if let Some(rest) = up.strip_prefix("DCG@") {
                Ok(LossKind::DcgAt {
                    cutoff: parse_cutoff(rest)?,
                })
            } else if let Some(rest) = up.strip_prefix("PREC@") {
                Ok(LossKind::PrecAt {
                    cutoff: parse_cutoff(rest)?,
                })
            } else if let Some(rest) = up.strip_prefix("CG@") {
                Ok(LossKind::Cg {
                    budget: parse_cutoff(rest)?,
                })
            } else {
                Err(CliError::invalid(format!("unknown metric '{s}'")))
            }
        }
    }
}

pub fn parse_metric_list(s: &str) -> Result<Vec<LossKind>> {
    let metrics: Vec<LossKind> = s
        .split(',')
        .filter(|p| !p.trim().is_empty())
        .map(parse_metric)
        .collect::<Result<_>>()?;
    if metrics.is_empty() {
        return Err(CliError::invalid("empty metric list"));
    }
    Ok(metrics)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_spec(kind: ExperimentKind) -> ExperimentSpec {
        let mut spec = ExperimentSpec::for_kind(kind);
        spec.users = 10;
        spec.items = 12;
        spec.trials = 3;
        spec.alphas = vec![0.5];
        // small enough that k = target * cells / weighted-count stays
        // below 1 at alpha 0.5 under the default skewed marginal
        spec.target_fraction = 0.2;
        spec.metrics = vec![LossKind::Mae];
        spec.seed = 11;
        spec.rank = 2;
        spec.lambda_grid = vec![0.01, 1.0];
        spec.folds = 2;
        spec.max_iterations = 60;
        spec.learn_trials = 1;
        spec.mcar_sizes = vec![60];
        spec
    }

    #[test]
    fn metric_names_round_trip() {
        for name in ["MAE", "MSE", "ACC", "DCG", "DCG@50", "PREC@5", "CG@3"] {
            let kind = parse_metric(name).unwrap();
            let printed = kind.to_string();
            let expect = if name == "ACC" { "ACC" } else { name };
            assert_eq!(printed, expect);
        }
        assert!(parse_metric("NDCG").is_err());
        assert!(parse_metric("DCG@0").is_err());
        assert!(parse_metric("PREC@x").is_err());
        assert_eq!(parse_metric_list("mae, mse").unwrap().len(), 2);
        assert!(parse_metric_list(" ,").is_err());
    }

    #[test]
    fn experiment_kinds_round_trip() {
        for kind in [
            ExperimentKind::EstimatorTable,
            ExperimentKind::AlphaSweepEval,
            ExperimentKind::AlphaSweepLearn,
            ExperimentKind::RobustnessSweep,
            ExperimentKind::TrainReal,
        ] {
            let parsed: ExperimentKind = kind.to_string().parse().unwrap();
            assert_eq!(parsed, kind);
        }
        assert!("table".parse::<ExperimentKind>().is_err());
    }

    #[test]
    fn spec_validation_catches_bad_fields() {
        let mut spec = tiny_spec(ExperimentKind::EstimatorTable);
        spec.trials = 0;
        assert!(spec.validate().is_err());

        let mut spec = tiny_spec(ExperimentKind::EstimatorTable);
        spec.alphas = vec![1.5];
        assert!(spec.validate().is_err());

        let mut spec = tiny_spec(ExperimentKind::TrainReal);
        spec.input = None;
        assert!(spec.validate().is_err());

        let mut spec = tiny_spec(ExperimentKind::RobustnessSweep);
        spec.mcar_sizes = vec![0];
        assert!(spec.validate().is_err());
    }

    #[test]
    fn estimator_table_shape_and_determinism() {
        let spec = tiny_spec(ExperimentKind::EstimatorTable);
        let report = run_estimator_table(&spec).unwrap();
        // 5 predictors x 1 metric x 3 estimators
        assert_eq!(report.rows.len(), 15);
        for row in &report.rows {
            assert_eq!(row.param, "0.5");
            assert_eq!(row.trials, 3);
            assert!(row.true_value.unwrap() >= 0.0);
            assert!(row.rmse.unwrap() >= 0.0);
            assert!(row.std >= 0.0);
        }
        let again = run_estimator_table(&spec).unwrap();
        assert_eq!(report.to_csv(), again.to_csv());
    }

    #[test]
    fn eval_sweep_snips_equals_naive_without_bias() {
        let mut spec = tiny_spec(ExperimentKind::AlphaSweepEval);
        spec.alphas = vec![1.0, 0.5];
        // dyadic reveal probability at alpha 1 (all cells 0.25), so the
        // division by it is exact and the identity holds bitwise
        spec.target_fraction = 0.25;
        let report = run_alpha_sweep(&spec).unwrap();
        // per alpha: (5 predictors + ALL) x 3 estimators
        assert_eq!(report.rows.len(), 2 * 6 * 3);
        let rows_at_one: Vec<_> = report.rows.iter().filter(|r| r.param == "1").collect();
        for naive in rows_at_one.iter().filter(|r| r.estimator == "Naive") {
            let snips = rows_at_one
                .iter()
                .find(|r| r.estimator == "SNIPS" && r.predictor == naive.predictor)
                .unwrap();
            // uniform reveal probabilities cancel; the rows match bitwise
            assert_eq!(naive.mean, snips.mean);
            assert_eq!(naive.std, snips.std);
            assert_eq!(naive.rmse, snips.rmse);
        }
    }

    #[test]
    fn learning_sweep_reports_both_weightings() {
        let mut spec = tiny_spec(ExperimentKind::AlphaSweepLearn);
        spec.trials = 2;
        spec.metrics = vec![LossKind::Mse];
        let report = run_alpha_sweep(&spec).unwrap();
        assert_eq!(report.rows.len(), 3);
        let ips = report.find("MF", "MF-IPS", "MSE").unwrap();
        let uni = report.find("MF", "MF-UNIFORM", "MSE").unwrap();
        let win = report.find("MF", "WIN-RATE", "MSE").unwrap();
        assert!(ips.mean > 0.0 && uni.mean > 0.0);
        assert!((0.0..=1.0).contains(&win.mean));
        assert_eq!(ips.trials, 2);
    }

    #[test]
    fn robustness_sweep_emits_reference_and_sized_rows() {
        let mut spec = tiny_spec(ExperimentKind::RobustnessSweep);
        spec.trials = 2;
        spec.metrics = vec![LossKind::Mse];
        let report = run_robustness_sweep(&spec).unwrap();
        let names: Vec<(&str, &str)> = report
            .rows
            .iter()
            .map(|r| (r.param.as_str(), r.estimator.as_str()))
            .collect();
        assert!(names.contains(&("REF", "TRUE-IPS")));
        assert!(names.contains(&("REF", "NAIVE")));
        assert!(names.contains(&("60", "NB-IPS")));
        assert!(names.contains(&("60", "MF-NB")));
        assert!(names.contains(&("60", "MF-UNIFORM")));
        for row in &report.rows {
            assert!(row.std >= 0.0);
        }
    }

    #[test]
    fn mcar_ratings_are_on_scale_and_deterministic() {
        let truth = build_ground_truth(8, 9, 3).unwrap();
        let a = mcar_ratings(&truth, 40, 17);
        let b = mcar_ratings(&truth, 40, 17);
        assert_eq!(a, b);
        assert_eq!(a.len(), 40);
        assert!(a
            .iter()
            .all(|&r| (1.0..=5.0).contains(&r) && r.fract() == 0.0));
    }
}
