//! Full-batch minimization: limited-memory quasi-Newton with Armijo
//! backtracking, plus plain gradient descent as a fallback.
//!
//! Written for exact reproducibility rather than raw speed. In
//! particular, every branch commutes with scaling the objective by a
//! power of two: the steepest-descent trial step is 1/|g| with no cap,
//! curvature pairs are accepted on a relative threshold, and the Armijo
//! test compares quantities that scale together. Training with uniform
//! weights 1/p therefore follows the bit-identical iterate trajectory of
//! an unweighted run with rescaled regularization whenever p is a power
//! of two; a capped or absolute-threshold variant would break that.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

/// c1 of the Armijo sufficient-decrease test.
const ARMIJO_C1: f64 = 1e-4;
/// Step shrink factor per backtrack.
const BACKTRACK_SHRINK: f64 = 0.5;
/// Backtracks before a line search gives up.
const MAX_BACKTRACKS: usize = 50;
/// Relative curvature threshold for accepting an update pair.
const CURVATURE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Limited-memory BFGS with the given history length.
    Lbfgs { memory: usize },
    /// Steepest descent with backtracking; step doubles after success.
    GradientDescent,
}

impl Default for Method {
    fn default() -> Self {
        Method::Lbfgs { memory: 10 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// Gradient max-norm fell below the tolerance.
    Converged,
    /// Iteration budget exhausted.
    MaxIterations,
    /// No acceptable step along the steepest direction; the iterate is
    /// the best point found.
    LineSearchStalled,
    /// Objective or gradient became non-finite; the returned iterate is
    /// the last one where both were finite.
    Diverged,
}

#[derive(Debug, Clone)]
pub struct OptimizeOutcome {
    pub theta: Vec<f64>,
    pub value: f64,
    /// Accepted descent steps taken.
    pub iterations: usize,
    pub stop: StopReason,
    /// Objective after initialization and after each accepted step;
    /// nonincreasing by the Armijo contract.
    pub trace: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct OptimizeConfig {
    pub method: Method,
    pub max_iterations: usize,
    /// Termination threshold on the gradient max-norm; must be > 0.
    pub tolerance: f64,
}

struct Pair {
    s: Vec<f64>,
    y: Vec<f64>,
    rho: f64,
}

/// Minimizes `f`, which must write the gradient at `theta` into its
/// second argument and return the objective value.
pub fn minimize<F>(mut f: F, theta0: Vec<f64>, config: &OptimizeConfig) -> OptimizeOutcome
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = theta0.len();
    let mut theta = theta0;
    let mut grad = vec![0.0; n];
    let mut fx = f(&theta, &mut grad);
    let mut trace = vec![fx];

    if !all_finite(fx, &grad) {
        return OptimizeOutcome {
            theta,
            value: fx,
            iterations: 0,
            stop: StopReason::Diverged,
            trace,
        };
    }

    let memory = match config.method {
        Method::Lbfgs { memory } => memory,
        Method::GradientDescent => 0,
    };
    let mut history: VecDeque<Pair> = VecDeque::new();
    let mut gd_step = 0.0;

    let mut theta_new = vec![0.0; n];
    let mut grad_new = vec![0.0; n];
    let mut iterations = 0;
    let mut stop = StopReason::MaxIterations;

    'outer: while iterations < config.max_iterations {
        if max_abs(&grad) < config.tolerance {
            stop = StopReason::Converged;
            break;
        }

        // Two attempts: the quasi-Newton direction, then, if its line
        // search stalls, steepest descent with cleared history.
        let mut accepted = false;
        for attempt in 0..2 {
            let steepest = history.is_empty() || attempt == 1;
            if attempt == 1 {
                history.clear();
            }
            let mut dir = if steepest {
                grad.iter().map(|g| -g).collect::<Vec<f64>>()
            } else {
                two_loop_direction(&grad, &history)
            };
            let mut slope = dot(&grad, &dir);
            if slope >= 0.0 {
                // not a descent direction; fall back to steepest
                history.clear();
                dir = grad.iter().map(|g| -g).collect();
                slope = dot(&grad, &dir);
            }
            if slope == 0.0 {
                stop = StopReason::Converged;
                break 'outer;
            }

            let mut t = initial_step(steepest, memory, gd_step, &grad);
            for _ in 0..MAX_BACKTRACKS {
                for j in 0..n {
                    theta_new[j] = theta[j] + t * dir[j];
                }
                let f_new = f(&theta_new, &mut grad_new);
                // NaN fails both comparisons, so a NaN trial is never
                // accepted. When the sufficient-decrease threshold is not
                // representable (slope or value overflow), fall back to
                // requiring strict decrease so runaway objectives still
                // make the progress that exposes their divergence.
                let threshold = fx + ARMIJO_C1 * t * slope;
                let accept = if threshold.is_finite() {
                    f_new <= threshold
                } else {
                    f_new < fx
                };
                if accept {
                    if !all_finite(f_new, &grad_new) || theta_new.iter().any(|x| !x.is_finite()) {
                        stop = StopReason::Diverged;
                        break 'outer;
                    }
                    if memory > 0 {
                        push_pair(&mut history, &theta, &theta_new, &grad, &grad_new, memory);
                    }
                    core::mem::swap(&mut theta, &mut theta_new);
                    core::mem::swap(&mut grad, &mut grad_new);
                    fx = f_new;
                    gd_step = t;
                    trace.push(fx);
                    iterations += 1;
                    accepted = true;
                    break;
                }
                t *= BACKTRACK_SHRINK;
            }
            if accepted {
                break;
            }
            if steepest {
                stop = StopReason::LineSearchStalled;
                break 'outer;
            }
        }
        debug_assert!(accepted, "attempt loop exits only by acceptance or break");
    }

    if stop == StopReason::MaxIterations && max_abs(&grad) < config.tolerance {
        stop = StopReason::Converged;
    }
    OptimizeOutcome {
        theta,
        value: fx,
        iterations,
        stop,
        trace,
    }
}

/// Trial step for a fresh line search. Steepest-descent steps start at
/// exactly 1/|g| (uncapped, for scale invariance); quasi-Newton steps at
/// the natural 1. Gradient descent reuses twice the last accepted step.
/// When the squared norm overflows, 1/max|g_j| stands in so the step
/// stays positive.
fn initial_step(steepest: bool, memory: usize, gd_step: f64, grad: &[f64]) -> f64 {
    if !steepest {
        return 1.0;
    }
    if memory == 0 && gd_step > 0.0 {
        return 2.0 * gd_step;
    }
    let norm = norm2(grad);
    if norm.is_finite() {
        1.0 / norm
    } else {
        1.0 / max_abs(grad)
    }
}

fn push_pair(
    history: &mut VecDeque<Pair>,
    theta: &[f64],
    theta_new: &[f64],
    grad: &[f64],
    grad_new: &[f64],
    memory: usize,
) {
    let s: Vec<f64> = theta_new.iter().zip(theta).map(|(a, b)| a - b).collect();
    let y: Vec<f64> = grad_new.iter().zip(grad).map(|(a, b)| a - b).collect();
    let sy = dot(&s, &y);
    if sy > CURVATURE_EPS * norm2(&s) * norm2(&y) {
        if history.len() == memory {
            history.pop_front();
        }
        history.push_back(Pair {
            s,
            y,
            rho: 1.0 / sy,
        });
    }
}

/// Standard two-loop recursion with the Barzilai-Borwein initial scaling
/// from the newest pair.
fn two_loop_direction(grad: &[f64], history: &VecDeque<Pair>) -> Vec<f64> {
    let mut q = grad.to_vec();
    let mut alphas = Vec::with_capacity(history.len());
    for pair in history.iter().rev() {
        let alpha = pair.rho * dot(&pair.s, &q);
        for (qj, yj) in q.iter_mut().zip(&pair.y) {
            *qj -= alpha * yj;
        }
        alphas.push(alpha);
    }
    let newest = history.back().expect("two-loop called with history");
    let gamma = dot(&newest.s, &newest.y) / dot(&newest.y, &newest.y);
    for qj in q.iter_mut() {
        *qj *= gamma;
    }
    for (pair, alpha) in history.iter().zip(alphas.iter().rev()) {
        let beta = pair.rho * dot(&pair.y, &q);
        for (qj, sj) in q.iter_mut().zip(&pair.s) {
            *qj += (alpha - beta) * sj;
        }
    }
    for qj in q.iter_mut() {
        *qj = -*qj;
    }
    q
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm2(v: &[f64]) -> f64 {
    crate::math::sqrt(dot(v, v))
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn all_finite(fx: f64, grad: &[f64]) -> bool {
    fx.is_finite() && grad.iter().all(|g| g.is_finite())
}
