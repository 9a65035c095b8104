//! Batch front end. Subcommands compose into pipelines over plain text
//! files: ingest real triplets, build semi-synthetic ground truth,
//! derive propensities, sample observations, estimate, train, and run
//! the full sweep experiments.
//!
//! Every subcommand accepts `--seed`, `--out` and `--config`; explicit
//! flags override config keys, which override built-in defaults. Errors
//! print a single `error: ...` line to stderr and exit nonzero.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use proprec::estimators::{
    ips_estimate_with, naive_estimate_with, snips_estimate_with, EstimatorKind,
};
use proprec::factorization::{
    cross_validate, train, TrainConfig, TrainLoss, DEFAULT_LAMBDA_GRID, DEFAULT_RANK_GRID,
};
use proprec::loss::LossEvaluator;
use proprec::matrix::{ObservationSample, PropensityMatrix, RatingMatrix, RatingScale};
use proprec::propensity::uniform_propensities;
use proprec::synthdata::{
    complete_and_adjust, observation_propensities, sample_observations, CompletionConfig,
    MarginalDistribution, ObservationModelConfig,
};

use proprec_cli::config::{parse_comma_list, Config};
use proprec_cli::experiments::{parse_metric_list, run_experiment, ExperimentKind, ExperimentSpec};
use proprec_cli::matrix_io::{
    load_matrix, load_observations, load_propensities, save_matrix, save_observations,
    save_propensities,
};
use proprec_cli::model_io::{load_model, save_model};
use proprec_cli::report::{ReportRow, SweepReport};
use proprec_cli::triplets::{ingest_triplets, TripletFormat};
use proprec_cli::{CliError, Result};

#[derive(Parser)]
#[command(
    name = "proprec",
    version,
    about = "selection-bias-aware recommender evaluation and training"
)]
struct Cli {
    /// Master random seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Primary output path of the subcommand.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Flat key=value config file; flags take precedence over it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert a rating triplet file into the observation format.
    Ingest {
        #[arg(long)]
        input: Option<PathBuf>,
        /// ml100k-tsv or csv.
        #[arg(long)]
        format: Option<String>,
        /// Where to write the dense-id mapping, if anywhere.
        #[arg(long)]
        mapping: Option<PathBuf>,
    },
    /// Complete partial observations into a full ground-truth matrix.
    Complete {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        rank: Option<usize>,
        #[arg(long)]
        lambdas: Option<String>,
        #[arg(long)]
        holdout: Option<f64>,
        #[arg(long)]
        iters: Option<usize>,
    },
    /// Reveal probabilities for a ground truth under the bias model.
    Propensities {
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long)]
        alpha: Option<f64>,
        /// Expected revealed fraction of the matrix.
        #[arg(long)]
        target: Option<f64>,
    },
    /// Sample one observation pattern from per-cell propensities.
    Sample {
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long)]
        props: Option<PathBuf>,
    },
    /// Naive, IPS and SNIPS estimates for predictions on observations.
    Estimate {
        #[arg(long)]
        obs: Option<PathBuf>,
        /// Prediction matrix file; alternative to --model.
        #[arg(long)]
        pred: Option<PathBuf>,
        /// Factor model file; its full prediction matrix is scored.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Propensity file; uniform reveal rates when omitted.
        #[arg(long)]
        props: Option<PathBuf>,
        /// Comma-separated metric names, default MAE,MSE.
        #[arg(long)]
        metrics: Option<String>,
    },
    /// Train a factor model at fixed hyperparameters.
    Train {
        #[arg(long)]
        obs: Option<PathBuf>,
        #[arg(long)]
        props: Option<PathBuf>,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        rank: Option<usize>,
        /// mse or mae.
        #[arg(long)]
        loss: Option<String>,
        #[arg(long)]
        iters: Option<usize>,
    },
    /// Cross-validate hyperparameters, retrain on everything.
    Cv {
        #[arg(long)]
        obs: Option<PathBuf>,
        #[arg(long)]
        props: Option<PathBuf>,
        #[arg(long)]
        lambdas: Option<String>,
        #[arg(long)]
        ranks: Option<String>,
        #[arg(long)]
        folds: Option<usize>,
        #[arg(long)]
        iters: Option<usize>,
    },
    /// Run a configured experiment and write its CSV report.
    Sweep {
        /// estimator-table, alpha-sweep-eval, alpha-sweep-learn,
        /// robustness-sweep or train-real.
        #[arg(long)]
        kind: Option<String>,
        #[command(flatten)]
        args: SweepArgs,
    },
    /// Estimator comparison table (shorthand for the matching sweep).
    Table1 {
        #[command(flatten)]
        args: SweepArgs,
    },
    /// Robustness sweep over marginal-sample sizes.
    Robustness {
        #[command(flatten)]
        args: SweepArgs,
    },
    /// Materialize a model's full prediction matrix.
    Predict {
        #[arg(long)]
        model: Option<PathBuf>,
    },
}

#[derive(Args, Debug, Default)]
struct SweepArgs {
    #[arg(long)]
    users: Option<usize>,
    #[arg(long)]
    items: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
    /// Comma-separated bias severities in (0, 1].
    #[arg(long)]
    alphas: Option<String>,
    /// Expected revealed fraction of the matrix.
    #[arg(long)]
    target: Option<f64>,
    /// Comma-separated metric names.
    #[arg(long)]
    metrics: Option<String>,
    /// Comma-separated marginal-sample sizes (robustness sweep).
    #[arg(long)]
    mcar_sizes: Option<String>,
    /// Smoothing pseudo-count for naive-Bayes propensity fits.
    #[arg(long)]
    laplace: Option<f64>,
    #[arg(long)]
    rank: Option<usize>,
    #[arg(long)]
    lambdas: Option<String>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    learn_trials: Option<usize>,
    /// Triplet file for train-real.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Triplet format for train-real: ml100k-tsv or csv.
    #[arg(long)]
    format: Option<String>,
    /// Where train-real persists its fitted model.
    #[arg(long)]
    model_out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let config = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::empty(),
    };
    let seed = match cli.seed {
        Some(s) => s,
        None => config.parse("seed")?.unwrap_or(0),
    };
    let out = cli.out.or_else(|| config.get("out").map(PathBuf::from));

    match cli.command {
        Command::Ingest {
            input,
            format,
            mapping,
        } => {
            let input = require(input.or_else(|| path_key(&config, "input")), "--input")?;
            let format = triplet_format(format.or_else(|| string_key(&config, "format")))?;
            let out = require(out, "--out")?;
            let (obs, id_map) = ingest_triplets(&input, format)?;
            save_observations(&out, &obs)?;
            if let Some(path) = mapping.or_else(|| path_key(&config, "mapping")) {
                id_map.write(&path)?;
            }
            println!(
                "users={} items={} observations={}",
                obs.users(),
                obs.items(),
                obs.len()
            );
        }

        Command::Complete {
            input,
            rank,
            lambdas,
            holdout,
            iters,
        } => {
            let input = require(input.or_else(|| path_key(&config, "input")), "--input")?;
            let out = require(out, "--out")?;
            let partial = load_observations(&input)?;
            let marginal = marginal_from_config(&config)?;
            let mut cc = CompletionConfig {
                seed,
                ..CompletionConfig::default()
            };
            if let Some(r) = rank.or(config.parse("rank")?) {
                cc.rank = r;
            }
            if let Some(grid) = float_list(lambdas.as_deref(), &config, "lambdas")? {
                cc.lambda_grid = grid;
            }
            if let Some(h) = holdout.or(config.parse("holdout")?) {
                cc.holdout_fraction = h;
            }
            if let Some(n) = iters.or(config.parse("iters")?) {
                cc.max_iterations = n;
            }
            let truth = complete_and_adjust(&partial, &marginal, &cc)?;
            save_matrix(&out, &truth)?;
            println!("users={} items={}", truth.users(), truth.items());
        }

        Command::Propensities {
            truth,
            alpha,
            target,
        } => {
            let truth_path = require(truth.or_else(|| path_key(&config, "truth")), "--truth")?;
            let out = require(out, "--out")?;
            let truth = load_matrix(&truth_path)?;
            let model = ObservationModelConfig {
                alpha: alpha.or(config.parse("alpha")?).unwrap_or(0.25),
                target_fraction: target.or(config.parse("target")?).unwrap_or(0.05),
            };
            let props = observation_propensities(&truth, &model)?;
            save_propensities(&out, &props)?;
            println!("alpha={} target={}", model.alpha, model.target_fraction);
        }

        Command::Sample { truth, props } => {
            let truth_path = require(truth.or_else(|| path_key(&config, "truth")), "--truth")?;
            let props_path = require(props.or_else(|| path_key(&config, "props")), "--props")?;
            let out = require(out, "--out")?;
            let truth = load_matrix(&truth_path)?;
            let props = load_propensities(&props_path)?;
            let obs = sample_observations(&truth, &props, seed)?;
            save_observations(&out, &obs)?;
            println!("observations={}", obs.len());
        }

        Command::Estimate {
            obs,
            pred,
            model,
            props,
            metrics,
        } => {
            let obs_path = require(obs.or_else(|| path_key(&config, "obs")), "--obs")?;
            let obs = load_observations(&obs_path)?;
            let (predictor, pred) = prediction_source(pred, model, &config)?;
            if pred.dims() != obs.dims() {
                return Err(CliError::invalid(format!(
                    "predictions are {}x{} but observations are {}x{}",
                    pred.users(),
                    pred.items(),
                    obs.users(),
                    obs.items()
                )));
            }
            let props = match props.or_else(|| path_key(&config, "props")) {
                Some(path) => load_propensities(&path)?,
                None => uniform_propensities(&obs),
            };
            let metric_names = metrics.or_else(|| string_key(&config, "metrics"));
            let metrics = parse_metric_list(metric_names.as_deref().unwrap_or("MAE,MSE"))?;
            let mut rows = Vec::new();
            for metric in metrics {
                let eval = LossEvaluator::new(&pred, metric, RatingScale::default())?;
                for est in [
                    EstimatorKind::Naive,
                    EstimatorKind::Ips,
                    EstimatorKind::Snips,
                ] {
                    let value = estimate_one(est, &obs, &props, &eval)?;
                    println!("estimator={est} metric={metric} value={value:.16e}");
                    rows.push(ReportRow {
                        param: "-".to_string(),
                        predictor: predictor.to_string(),
                        estimator: est.to_string(),
                        metric: metric.to_string(),
                        true_value: None,
                        rmse: None,
                        mean: value,
                        std: 0.0,
                        trials: 1,
                    });
                }
            }
            if let Some(path) = out {
                SweepReport { rows }.write(&path)?;
            }
        }

        Command::Train {
            obs,
            props,
            lambda,
            rank,
            loss,
            iters,
        } => {
            let obs_path = require(obs.or_else(|| path_key(&config, "obs")), "--obs")?;
            let out = require(out, "--out")?;
            let obs = load_observations(&obs_path)?;
            let props = match props.or_else(|| path_key(&config, "props")) {
                Some(path) => load_propensities(&path)?,
                None => uniform_propensities(&obs),
            };
            let lambda = require(lambda.or(config.parse("lambda")?), "--lambda")?;
            let mut cfg = TrainConfig::new(lambda, rank.or(config.parse("rank")?).unwrap_or(20));
            cfg.seed = seed;
            cfg.loss = train_loss(loss.or_else(|| string_key(&config, "loss")))?;
            if let Some(n) = iters.or(config.parse("iters")?) {
                cfg.max_iterations = n;
            }
            let outcome = train(&obs, &props, &cfg)?;
            save_model(&out, &outcome.model)?;
            println!(
                "iterations={} objective={:.16e} converged={}",
                outcome.iterations, outcome.objective, outcome.converged
            );
        }

        Command::Cv {
            obs,
            props,
            lambdas,
            ranks,
            folds,
            iters,
        } => {
            let obs_path = require(obs.or_else(|| path_key(&config, "obs")), "--obs")?;
            let obs = load_observations(&obs_path)?;
            let props = match props.or_else(|| path_key(&config, "props")) {
                Some(path) => load_propensities(&path)?,
                None => uniform_propensities(&obs),
            };
            let lambda_grid = float_list(lambdas.as_deref(), &config, "lambdas")?
                .unwrap_or_else(|| DEFAULT_LAMBDA_GRID.to_vec());
            let rank_grid = match ranks.or_else(|| string_key(&config, "ranks")) {
                Some(s) => parse_comma_list::<usize>(&s)
                    .map_err(|item| CliError::invalid(format!("bad rank '{item}'")))?,
                None => DEFAULT_RANK_GRID.to_vec(),
            };
            let folds = folds.or(config.parse("folds")?).unwrap_or(4);
            let mut base = TrainConfig::new(
                lambda_grid.first().copied().unwrap_or(0.0),
                rank_grid.first().copied().unwrap_or(1),
            );
            base.seed = seed;
            if let Some(n) = iters.or(config.parse("iters")?) {
                base.max_iterations = n;
            }
            let cv = cross_validate(&obs, &props, &lambda_grid, &rank_grid, folds, &base)?;
            for c in &cv.candidates {
                println!(
                    "candidate lambda={} rank={} score={}",
                    c.lambda, c.rank, c.mean_score
                );
            }
            println!("train_scale={}", cv.train_scale);
            println!("validation_scale={}", cv.validation_scale);
            println!("best_lambda={}", cv.best_lambda);
            println!("best_rank={}", cv.best_rank);
            if let Some(path) = out {
                save_model(&path, &cv.outcome.model)?;
            }
        }

        Command::Sweep { kind, args } => {
            let kind = require(kind.or_else(|| string_key(&config, "kind")), "--kind")?
                .parse::<ExperimentKind>()
                .map_err(CliError::invalid)?;
            run_sweep(kind, &args, &config, seed, out)?;
        }

        Command::Table1 { args } => {
            run_sweep(ExperimentKind::EstimatorTable, &args, &config, seed, out)?;
        }

        Command::Robustness { args } => {
            run_sweep(ExperimentKind::RobustnessSweep, &args, &config, seed, out)?;
        }

        Command::Predict { model } => {
            let model_path = require(model.or_else(|| path_key(&config, "model")), "--model")?;
            let out = require(out, "--out")?;
            let model = load_model(&model_path)?;
            save_matrix(&out, &model.predict())?;
            println!(
                "users={} items={} rank={}",
                model.users(),
                model.items(),
                model.rank()
            );
        }
    }
    Ok(())
}

// ── Shared helpers ────────────────────────────────────────────────────

fn require<T>(value: Option<T>, what: &str) -> Result<T> {
    value.ok_or_else(|| CliError::invalid(format!("missing {what}")))
}

fn path_key(config: &Config, key: &str) -> Option<PathBuf> {
    config.get(key).map(PathBuf::from)
}

fn string_key(config: &Config, key: &str) -> Option<String> {
    config.get(key).map(str::to_string)
}

fn triplet_format(name: Option<String>) -> Result<TripletFormat> {
    match name {
        Some(s) => s.parse::<TripletFormat>().map_err(CliError::invalid),
        None => Ok(TripletFormat::Ml100kTsv),
    }
}

fn train_loss(name: Option<String>) -> Result<TrainLoss> {
    match name.as_deref() {
        None => Ok(TrainLoss::Mse),
        Some(s) if s.eq_ignore_ascii_case("mse") => Ok(TrainLoss::Mse),
        Some(s) if s.eq_ignore_ascii_case("mae") => Ok(TrainLoss::Mae),
        Some(other) => Err(CliError::invalid(format!(
            "unknown training loss '{other}', expected mse or mae"
        ))),
    }
}

fn float_list(flag: Option<&str>, config: &Config, key: &str) -> Result<Option<Vec<f64>>> {
    match flag {
        Some(s) => parse_comma_list::<f64>(s)
            .map(Some)
            .map_err(|item| CliError::invalid(format!("bad value '{item}' in {key}"))),
        None => config.parse_list::<f64>(key),
    }
}

fn marginal_from_config(config: &Config) -> Result<MarginalDistribution> {
    match config.get("marginal") {
        None => Ok(MarginalDistribution::default()),
        Some(s) => {
            let probs = parse_comma_list::<f64>(s).map_err(|item| {
                CliError::invalid(format!("bad probability '{item}' in marginal"))
            })?;
            let arr: [f64; 5] = probs.try_into().map_err(|v: Vec<f64>| {
                CliError::invalid(format!("marginal needs 5 probabilities, got {}", v.len()))
            })?;
            Ok(MarginalDistribution::new(arr)?)
        }
    }
}

fn prediction_source(
    pred: Option<PathBuf>,
    model: Option<PathBuf>,
    config: &Config,
) -> Result<(&'static str, RatingMatrix)> {
    let pred = pred.or_else(|| path_key(config, "pred"));
    let model = model.or_else(|| path_key(config, "model"));
    match (pred, model) {
        (Some(path), None) => Ok(("MATRIX", load_matrix(&path)?)),
        (None, Some(path)) => Ok(("MODEL", load_model(&path)?.predict())),
        _ => Err(CliError::invalid(
            "estimate needs exactly one of --pred or --model",
        )),
    }
}

fn estimate_one(
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

fn run_sweep(
    kind: ExperimentKind,
    args: &SweepArgs,
    config: &Config,
    seed: u64,
    out: Option<PathBuf>,
) -> Result<()> {
    let out = require(out, "--out")?;
    let spec = build_spec(kind, args, config, seed)?;
    let report = run_experiment(&spec)?;
    report.write(&out)?;
    println!("kind={kind} rows={}", report.rows.len());
    Ok(())
}

fn build_spec(
    kind: ExperimentKind,
    args: &SweepArgs,
    config: &Config,
    seed: u64,
) -> Result<ExperimentSpec> {
    let mut spec = ExperimentSpec::for_kind(kind);
    spec.seed = seed;
    spec.users = args.users.or(config.parse("users")?).unwrap_or(spec.users);
    spec.items = args.items.or(config.parse("items")?).unwrap_or(spec.items);
    spec.trials = args
        .trials
        .or(config.parse("trials")?)
        .unwrap_or(spec.trials);
    if let Some(alphas) = float_list(args.alphas.as_deref(), config, "alphas")? {
        spec.alphas = alphas;
    }
    spec.target_fraction = args
        .target
        .or(config.parse("target")?)
        .unwrap_or(spec.target_fraction);
    if let Some(names) = args
        .metrics
        .as_deref()
        .map(str::to_string)
        .or_else(|| string_key(config, "metrics"))
    {
        spec.metrics = parse_metric_list(&names)?;
    }
    if let Some(sizes) = args
        .mcar_sizes
        .as_deref()
        .map(str::to_string)
        .or_else(|| string_key(config, "mcar_sizes"))
    {
        spec.mcar_sizes = parse_comma_list::<usize>(&sizes)
            .map_err(|item| CliError::invalid(format!("bad sample size '{item}' in mcar_sizes")))?;
    }
    spec.laplace = args
        .laplace
        .or(config.parse("laplace")?)
        .unwrap_or(spec.laplace);
    spec.rank = args.rank.or(config.parse("rank")?).unwrap_or(spec.rank);
    if let Some(grid) = float_list(args.lambdas.as_deref(), config, "lambdas")? {
        spec.lambda_grid = grid;
    }
    spec.folds = args.folds.or(config.parse("folds")?).unwrap_or(spec.folds);
    spec.max_iterations = args
        .iters
        .or(config.parse("iters")?)
        .unwrap_or(spec.max_iterations);
    spec.learn_trials = args
        .learn_trials
        .or(config.parse("learn_trials")?)
        .unwrap_or(spec.learn_trials);
    spec.input = args.input.clone().or_else(|| path_key(config, "input"));
    if let Some(name) = args
        .format
        .as_deref()
        .map(str::to_string)
        .or_else(|| string_key(config, "format"))
    {
        spec.input_format = name.parse::<TripletFormat>().map_err(CliError::invalid)?;
    }
    spec.model_out = args
        .model_out
        .clone()
        .or_else(|| path_key(config, "model_out"));
    Ok(spec)
}
