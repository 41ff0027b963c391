//! Projected gradient descent on the nonnegative orthant with Armijo
//! backtracking along the projection arc.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{edge_count, EdgeWeights, MultilayerGraph};
use crate::objective::{HyperParams, Objective, ObjectiveEval};

/// Steps below this size end the solve as stalled.
pub const MIN_STEP: f64 = 1e-12;

/// Offset added to the layer mean so the starting graph is connected.
pub const LAYER_MEAN_OFFSET: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub enum InitMode {
    /// Mean of the layer adjacencies plus [`LAYER_MEAN_OFFSET`].
    LayerMean,
    /// Independent draws from `U[0, 1) + LAYER_MEAN_OFFSET`, seeded.
    Uniform,
    /// Caller-supplied weights (projected before use).
    Custom(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveConfig {
    pub max_iters: usize,
    /// Stop once `‖w - P(w - ∇F(w))‖₂` drops to this value.
    pub grad_tol: f64,
    pub initial_step: f64,
    pub backtrack_factor: f64,
    pub armijo_c: f64,
    pub init: InitMode,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            max_iters: 2000,
            grad_tol: 1e-5,
            initial_step: 1.0,
            backtrack_factor: 0.5,
            armijo_c: 1e-4,
            init: InitMode::LayerMean,
        }
    }
}

impl SolveConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::InvalidArgument(
                "max_iters must be at least 1".into(),
            ));
        }
        if self.grad_tol.is_nan() || self.grad_tol <= 0.0 {
            return Err(Error::InvalidArgument("grad_tol must be positive".into()));
        }
        if !(self.initial_step > 0.0 && self.initial_step.is_finite()) {
            return Err(Error::InvalidArgument(
                "initial_step must be positive".into(),
            ));
        }
        if !(self.backtrack_factor > 0.0 && self.backtrack_factor < 1.0) {
            return Err(Error::InvalidArgument(
                "backtrack_factor must lie in (0, 1)".into(),
            ));
        }
        if !(self.armijo_c > 0.0 && self.armijo_c < 1.0) {
            return Err(Error::InvalidArgument("armijo_c must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// Projected-gradient norm reached `grad_tol`.
    Converged,
    MaxIters,
    /// Backtracking shrank the step below [`MIN_STEP`].
    Stalled,
}

impl Termination {
    pub fn as_str(&self) -> &'static str {
        match self {
            Termination::Converged => "converged",
            Termination::MaxIters => "max_iters",
            Termination::Stalled => "stalled",
        }
    }
}

/// State of one accepted iterate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterRecord {
    pub iteration: usize,
    pub objective: f64,
    pub contrastive: f64,
    pub r_eff: f64,
    pub r_com: f64,
    /// Step size that produced this iterate (0 for the starting point).
    pub step: f64,
    pub pg_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveTrace {
    pub records: Vec<IterRecord>,
    pub termination: Termination,
}

impl SolveTrace {
    pub fn last(&self) -> Option<&IterRecord> {
        self.records.last()
    }
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub weights: EdgeWeights,
    pub trace: SolveTrace,
    /// Objective evaluation at `weights`.
    pub eval: ObjectiveEval,
}

/// Elementwise `max(x, 0)`.
pub fn project_nonnegative(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| v.max(0.0)).collect()
}

/// `‖w - P(w - g)‖₂`, zero exactly at KKT points of the orthant problem.
pub fn projected_gradient_norm(w: &[f64], grad: &[f64]) -> f64 {
    w.iter()
        .zip(grad)
        .map(|(&wi, &gi)| {
            let d = wi - (wi - gi).max(0.0);
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

fn initial_weights(g: &MultilayerGraph, init: &InitMode, seed: u64) -> Result<Vec<f64>> {
    let m = edge_count(g.n_nodes());
    let w = match init {
        InitMode::LayerMean => g
            .mean_weights()
            .into_vec()
            .into_iter()
            .map(|x| x + LAYER_MEAN_OFFSET)
            .collect(),
        InitMode::Uniform => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..m)
                .map(|_| rng.random::<f64>() + LAYER_MEAN_OFFSET)
                .collect()
        }
        InitMode::Custom(w) => {
            if w.len() != m || w.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "custom initialization needs {m} finite weights"
                )));
            }
            project_nonnegative(w)
        }
    };
    Ok(w)
}

fn record(iteration: usize, e: &ObjectiveEval, step: f64, pg_norm: f64) -> IterRecord {
    IterRecord {
        iteration,
        objective: e.value,
        contrastive: e.terms.contrastive,
        r_eff: e.terms.r_eff,
        r_com: e.terms.r_com,
        step,
        pg_norm,
    }
}

/// Minimizes the objective over nonnegative edge weights.
///
/// Each iteration tries `w⁺ = P(w - η∇F(w))` and accepts it once
/// `F(w⁺) ≤ F(w) + c ∇F(w)ᵀ(w⁺ - w)`, halving `η` (by `backtrack_factor`)
/// otherwise. The first trial step of an iteration is the previous accepted
/// step divided by `backtrack_factor`. `seed` only matters for
/// [`InitMode::Uniform`].
pub fn solve(
    g: &MultilayerGraph,
    h: &HyperParams,
    cfg: &SolveConfig,
    seed: u64,
) -> Result<Solution> {
    cfg.validate()?;
    let objective = Objective::new(g, *h)?;
    let n = g.n_nodes();
    let mut w = EdgeWeights::new(n, initial_weights(g, &cfg.init, seed)?)?;
    let mut current = objective.eval(&w)?;
    let mut records = Vec::new();
    let mut step = cfg.initial_step;
    let mut accepted_step = 0.0;

    let non_finite = |iteration: usize, records: &[IterRecord], termination| Error::NonFinite {
        iteration,
        trace: Box::new(SolveTrace {
            records: records.to_vec(),
            termination,
        }),
    };

    for iteration in 0..cfg.max_iters {
        if !current.is_finite() {
            return Err(non_finite(iteration, &records, Termination::Stalled));
        }
        let pg = projected_gradient_norm(w.as_slice(), &current.gradient);
        records.push(record(iteration, &current, accepted_step, pg));
        if pg <= cfg.grad_tol {
            return Ok(finish(w, current, records, Termination::Converged));
        }
        if iteration + 1 == cfg.max_iters {
            break;
        }

        let mut accepted = None;
        while step >= MIN_STEP {
            let trial: Vec<f64> = w
                .as_slice()
                .iter()
                .zip(&current.gradient)
                .map(|(&wi, &gi)| (wi - step * gi).max(0.0))
                .collect();
            let decrease: f64 = trial
                .iter()
                .zip(w.as_slice())
                .zip(&current.gradient)
                .map(|((&t, &wi), &gi)| gi * (t - wi))
                .sum();
            let trial = EdgeWeights::new(n, trial)?;
            let eval = objective.eval(&trial)?;
            if eval.value.is_finite() && eval.value <= current.value + cfg.armijo_c * decrease {
                accepted = Some((trial, eval));
                break;
            }
            step *= cfg.backtrack_factor;
        }
        match accepted {
            Some((trial, eval)) => {
                w = trial;
                current = eval;
                accepted_step = step;
                step /= cfg.backtrack_factor;
            }
            None => return Ok(finish(w, current, records, Termination::Stalled)),
        }
    }
    Ok(finish(w, current, records, Termination::MaxIters))
}

fn finish(
    weights: EdgeWeights,
    eval: ObjectiveEval,
    records: Vec<IterRecord>,
    termination: Termination,
) -> Solution {
    Solution {
        weights,
        trace: SolveTrace {
            records,
            termination,
        },
        eval,
    }
}
