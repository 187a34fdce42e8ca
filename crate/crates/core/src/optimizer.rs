//! Bound-constrained global minimizer: low-discrepancy sampling of the box
//! followed by clamped Nelder–Mead refinement from the best sampled points.

use std::f64::consts::TAU;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::problem::{expected_cut, ProblemError, ProblemGraph, ShotCounts};

/// Default window of local iterations over which the best value must keep improving.
pub const STALL_ITERATIONS: usize = 3;

const PRIMES: [u32; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

#[derive(Debug, Error, PartialEq)]
pub enum OptimizerError {
    #[error("invalid optimizer config: {0}")]
    Config(String),
    #[error("objective returned {value} at {params:?}")]
    NonFinite { params: Vec<f64>, value: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub bounds: Vec<(f64, f64)>,
    /// Points drawn in the global sampling stage.
    pub samples: usize,
    /// Nelder–Mead iterations allowed per local start.
    pub local_steps: usize,
    /// Number of best sampled points refined locally.
    pub starts: usize,
    /// Minimum improvement of the best value over `stall_window` local iterations.
    pub tolerance: f64,
    pub stall_window: usize,
    /// Hard cap on objective evaluations.
    pub max_iterations: usize,
    pub seed: u64,
}

impl OptimizerConfig {
    /// Defaults for `dims` rotation angles bounded in `[0, 2π]`.
    pub fn for_angles(dims: usize, seed: u64) -> Self {
        OptimizerConfig {
            bounds: vec![(0.0, TAU); dims],
            samples: 32,
            local_steps: 40,
            starts: 3,
            tolerance: 1e-3,
            stall_window: STALL_ITERATIONS,
            max_iterations: 50,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), OptimizerError> {
        let bad = |m: &str| Err(OptimizerError::Config(m.to_owned()));
        if self.bounds.is_empty() {
            return bad("bounds are empty");
        }
        if self.bounds.len() > PRIMES.len() {
            return bad("too many dimensions for the sampling sequence");
        }
        if self.bounds.iter().any(|&(lo, hi)| !(lo < hi && lo.is_finite() && hi.is_finite())) {
            return bad("every bound needs lo < hi");
        }
        if self.samples == 0 || self.local_steps == 0 || self.starts == 0 || self.stall_window == 0 {
            return bad("budgets must be at least 1");
        }
        if self.max_iterations == 0 {
            return bad("max_iterations must be at least 1");
        }
        if !(self.tolerance >= 0.0) {
            return bad("tolerance must be non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub params: Vec<f64>,
    pub value: f64,
    /// Time spent inside the objective.
    pub objective_s: f64,
    /// Optimizer bookkeeping since the previous evaluation returned.
    pub overhead_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Termination {
    Converged,
    Budget,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationTrace {
    pub evaluations: Vec<Evaluation>,
    pub best_params: Vec<f64>,
    pub best_value: f64,
    pub iterations: usize,
    pub terminated_by: Termination,
}

impl OptimizationTrace {
    /// Best value after each evaluation.
    pub fn best_so_far(&self) -> Vec<f64> {
        self.evaluations
            .iter()
            .scan(f64::INFINITY, |best, e| {
                *best = best.min(e.value);
                Some(*best)
            })
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("trace serializes")
    }
}

/// Radical inverse of `i` in `base`.
fn radical_inverse(mut i: u64, base: u32) -> f64 {
    let inv = 1.0 / base as f64;
    let (mut f, mut r) = (inv, 0.0);
    while i > 0 {
        r += f * (i % base as u64) as f64;
        i /= base as u64;
        f *= inv;
    }
    r
}

/// `count` points of a Halton sequence in `[0,1)^dims`, rotated by a random shift
/// so different seeds give different (still low-discrepancy) designs.
pub fn halton_points(count: usize, dims: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shift: Vec<f64> = (0..dims).map(|_| rng.gen::<f64>()).collect();
    (1..=count as u64)
        .map(|i| {
            (0..dims)
                .map(|d| (radical_inverse(i, PRIMES[d]) + shift[d]).fract())
                .collect()
        })
        .collect()
}

struct Budgeted<'a, F> {
    objective: &'a mut F,
    cfg: &'a OptimizerConfig,
    evals: Vec<Evaluation>,
    last_return: Instant,
}

enum Stop {
    /// Evaluation budget spent.
    Exhausted,
    Failed(OptimizerError),
}

impl<F: FnMut(&[f64]) -> f64> Budgeted<'_, F> {
    fn clamp(&self, x: &mut [f64]) {
        for (v, &(lo, hi)) in x.iter_mut().zip(&self.cfg.bounds) {
            *v = v.clamp(lo, hi);
        }
    }

    fn eval(&mut self, x: &[f64]) -> Result<f64, Stop> {
        if self.evals.len() >= self.cfg.max_iterations {
            return Err(Stop::Exhausted);
        }
        let start = Instant::now();
        let overhead = start.duration_since(self.last_return);
        let value = (self.objective)(x);
        self.last_return = Instant::now();
        if !value.is_finite() {
            return Err(Stop::Failed(OptimizerError::NonFinite {
                params: x.to_vec(),
                value,
            }));
        }
        self.evals.push(Evaluation {
            params: x.to_vec(),
            value,
            objective_s: (self.last_return - start).as_secs_f64(),
            overhead_s: overhead.as_secs_f64(),
        });
        Ok(value)
    }

    fn best(&self) -> f64 {
        self.evals.iter().map(|e| e.value).fold(f64::INFINITY, f64::min)
    }
}

/// Minimizes `objective` over the configured box.
///
/// Stage one evaluates `samples` low-discrepancy points. Stage two runs
/// Nelder–Mead from the best `starts` of them, clamping every trial point
/// into the box. The run stops once the overall best value has improved by
/// less than `tolerance` across the last `stall_window` local iterations, or when `max_iterations` evaluations have been spent.
pub fn minimize<F>(mut objective: F, cfg: &OptimizerConfig) -> Result<OptimizationTrace, OptimizerError>
where
    F: FnMut(&[f64]) -> f64,
{
    cfg.validate()?;
    let mut state = Budgeted {
        objective: &mut objective,
        cfg,
        evals: Vec::new(),
        last_return: Instant::now(),
    };
    let termination = match run_stages(&mut state) {
        Ok(t) => t,
        Err(Stop::Exhausted) => Termination::Budget,
        Err(Stop::Failed(e)) => return Err(e),
    };
    let evals = state.evals;
    let best = evals
        .iter()
        .min_by(|a, b| a.value.total_cmp(&b.value))
        .expect("at least one evaluation");
    Ok(OptimizationTrace {
        best_params: best.params.clone(),
        best_value: best.value,
        iterations: evals.len(),
        terminated_by: termination,
        evaluations: evals,
    })
}

fn run_stages<F: FnMut(&[f64]) -> f64>(state: &mut Budgeted<'_, F>) -> Result<Termination, Stop> {
    let cfg = state.cfg;
    let dims = cfg.bounds.len();
    for unit in halton_points(cfg.samples, dims, cfg.seed) {
        let x: Vec<f64> = unit
            .iter()
            .zip(&cfg.bounds)
            .map(|(u, &(lo, hi))| lo + u * (hi - lo))
            .collect();
        state.eval(&x)?;
    }

    let mut ranked: Vec<(Vec<f64>, f64)> = state.evals.iter().map(|e| (e.params.clone(), e.value)).collect();
    ranked.sort_by(|a, b| a.1.total_cmp(&b.1));
    let mut history = vec![state.best()];
    for (start, value) in ranked.into_iter().take(cfg.starts) {
        if nelder_mead(state, start, value, &mut history)? {
            return Ok(Termination::Converged);
        }
    }
    Ok(Termination::Budget)
}

/// One clamped Nelder–Mead descent. Returns `true` once the stall criterion fires.
fn nelder_mead<F: FnMut(&[f64]) -> f64>(
    state: &mut Budgeted<'_, F>,
    start: Vec<f64>,
    start_value: f64,
    history: &mut Vec<f64>,
) -> Result<bool, Stop> {
    let cfg = state.cfg;
    let dims = start.len();
    let mut simplex = vec![(start.clone(), start_value)];
    for d in 0..dims {
        let (lo, hi) = cfg.bounds[d];
        let step = 0.1 * (hi - lo);
        let mut x = start.clone();
        x[d] = if x[d] + step <= hi { x[d] + step } else { x[d] - step };
        state.clamp(&mut x);
        let v = state.eval(&x)?;
        simplex.push((x, v));
    }

    for _ in 0..cfg.local_steps {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let worst = simplex[dims].clone();
        let centroid: Vec<f64> = (0..dims)
            .map(|d| simplex[..dims].iter().map(|p| p.0[d]).sum::<f64>() / dims as f64)
            .collect();
        let toward = |coef: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&worst.0)
                .map(|(c, w)| c + coef * (c - w))
                .collect()
        };

        let mut reflected = toward(1.0);
        state.clamp(&mut reflected);
        let fr = state.eval(&reflected)?;
        if fr < simplex[0].1 {
            let mut expanded = toward(2.0);
            state.clamp(&mut expanded);
            let fe = state.eval(&expanded)?;
            simplex[dims] = if fe < fr { (expanded, fe) } else { (reflected, fr) };
        } else if fr < simplex[dims - 1].1 {
            simplex[dims] = (reflected, fr);
        } else {
            let coef = if fr < worst.1 { 0.5 } else { -0.5 };
            let mut contracted = toward(coef);
            state.clamp(&mut contracted);
            let fc = state.eval(&contracted)?;
            if fc < worst.1.min(fr) {
                simplex[dims] = (contracted, fc);
            } else {
                let best = simplex[0].0.clone();
                for p in simplex.iter_mut().skip(1) {
                    let mut x: Vec<f64> = best.iter().zip(&p.0).map(|(b, v)| b + 0.5 * (v - b)).collect();
                    state.clamp(&mut x);
                    let v = state.eval(&x)?;
                    *p = (x, v);
                }
            }
        }

        history.push(state.best());
        if history.len() > cfg.stall_window {
            let window_start = history[history.len() - 1 - cfg.stall_window];
            if window_start - state.best() < cfg.tolerance {
                return Ok(true);
            }
        }
    }
    Ok(false)
}

/// Minimization objective for Max-Cut: negative shot-averaged cut.
pub fn qaoa_objective(g: &ProblemGraph, counts: &ShotCounts) -> Result<f64, ProblemError> {
    Ok(-expected_cut(g, counts)?)
}
