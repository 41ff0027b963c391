//! The learning objective and its analytic gradient with respect to the edge
//! weights:
//!
//! ```text
//! F(w) = Σ_s J(L(w); layer s) + γ₁ Σ_{n>K} 1/λ_n + γ₂ Σ_{n≤K} λ_n²
//! ```
//!
//! `J` is the neighborhood contrastive loss. For node `i` with learned weights
//! `w_i·` and observed neighbors `N^s(i)`,
//!
//! ```text
//! J_i = Σ_{j∈N^s(i)} [ -w_ij + log Σ_{k≠i} exp(w_ik) ]
//! ```
//!
//! The spectral terms use `dλ_n/dw_{ij} = (u_{n,i} - u_{n,j})²`, which holds
//! for simple eigenvalues. Inside a degenerate group the per-eigenvalue
//! derivatives depend on the basis, but both regularizers only ever sum whole
//! groups (unless `λ_K = λ_{K+1}`), and that sum is basis independent.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::graph::{pairs, EdgeWeights, MultilayerGraph};
use crate::spectral::{eigendecompose, EigenDecomposition};

pub const DEFAULT_EIG_FLOOR: f64 = 1e-8;

/// Regularization weights and community count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperParams {
    /// Weight of the effective-resistance term.
    pub gamma1: f64,
    /// Weight of the community term.
    pub gamma2: f64,
    /// Number of communities `K`.
    pub k_communities: usize,
    /// Lower bound applied to eigenvalues before inverting them.
    pub eig_floor: f64,
}

impl HyperParams {
    pub fn new(gamma1: f64, gamma2: f64, k_communities: usize) -> Self {
        Self {
            gamma1,
            gamma2,
            k_communities,
            eig_floor: DEFAULT_EIG_FLOOR,
        }
    }

    pub fn validate(&self, n_nodes: usize) -> Result<()> {
        if !(self.gamma1 >= 0.0 && self.gamma1.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "gamma1 must be >= 0, got {}",
                self.gamma1
            )));
        }
        if !(self.gamma2 >= 0.0 && self.gamma2.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "gamma2 must be >= 0, got {}",
                self.gamma2
            )));
        }
        if self.k_communities == 0 || self.k_communities >= n_nodes {
            return Err(Error::InvalidArgument(format!(
                "need 1 <= K < N, got K={} with N={}",
                self.k_communities, n_nodes
            )));
        }
        if self.eig_floor.is_nan() || self.eig_floor <= 0.0 {
            return Err(Error::InvalidArgument("eig_floor must be positive".into()));
        }
        Ok(())
    }
}

/// Per-term values reported alongside the objective.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TermValues {
    pub contrastive: f64,
    pub r_eff: f64,
    pub r_com: f64,
}

/// A term value with its gradient over the edge-weight vector.
#[derive(Debug, Clone, PartialEq)]
pub struct TermEval {
    pub value: f64,
    pub gradient: Vec<f64>,
    /// Set when an eigenvalue counted by the resistance term fell below the
    /// floor, i.e. the graph is splitting into more than `K` pieces.
    pub near_disconnection: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveEval {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub terms: TermValues,
    pub near_disconnection: bool,
    /// Ascending Laplacian spectrum at the evaluation point.
    pub eigenvalues: DVector<f64>,
}

impl ObjectiveEval {
    pub fn is_finite(&self) -> bool {
        self.value.is_finite() && self.gradient.iter().all(|g| g.is_finite())
    }
}

/// Neighbor multiplicities summed over layers, precomputed once per graph.
#[derive(Debug, Clone)]
pub struct Contrastive {
    n: usize,
    /// `counts[(i, k)]` = number of layers where `k ∈ N^s(i)`.
    counts: DMatrix<f64>,
    /// `totals[i]` = Σ_s |N^s(i)|.
    totals: Vec<f64>,
}

impl Contrastive {
    pub fn new(g: &MultilayerGraph) -> Self {
        let n = g.n_nodes();
        let mut counts = DMatrix::zeros(n, n);
        let mut totals = vec![0.0; n];
        for layer in g.layers() {
            for (i, total) in totals.iter_mut().enumerate() {
                for &j in layer.neighbors(i) {
                    counts[(i, j)] += 1.0;
                }
                *total += layer.degree(i) as f64;
            }
        }
        Self { n, counts, totals }
    }

    pub fn eval(&self, w: &EdgeWeights) -> Result<TermEval> {
        check_size(self.n, w)?;
        let n = self.n;
        let adj = w.adjacency();
        let probs = softmax_rows(&adj);
        let mut value = 0.0;
        for i in 0..n {
            if self.totals[i] == 0.0 {
                continue;
            }
            let lse = log_sum_exp_row(&adj, i);
            let mut pulled = 0.0;
            for k in (0..n).filter(|&k| k != i) {
                pulled += self.counts[(i, k)] * adj[(i, k)];
            }
            value += self.totals[i] * lse - pulled;
        }
        // d/dw_ab of node a's row plus node b's row
        let gradient = pairs(n)
            .map(|(a, b)| {
                self.totals[a] * probs[(a, b)] - self.counts[(a, b)]
                    + self.totals[b] * probs[(b, a)]
                    - self.counts[(b, a)]
            })
            .collect();
        Ok(TermEval {
            value,
            gradient,
            near_disconnection: false,
        })
    }
}

fn check_size(n: usize, w: &EdgeWeights) -> Result<()> {
    if w.n_nodes() != n {
        return Err(Error::InvalidArgument(format!(
            "weights are for {} nodes, graph has {}",
            w.n_nodes(),
            n
        )));
    }
    Ok(())
}

fn log_sum_exp_row(adj: &DMatrix<f64>, i: usize) -> f64 {
    let n = adj.nrows();
    let others = (0..n).filter(|&k| k != i);
    let max = others
        .clone()
        .map(|k| adj[(i, k)])
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + others.map(|k| (adj[(i, k)] - max).exp()).sum::<f64>().ln()
}

/// Row-wise softmax of a weighted adjacency over off-diagonal entries:
/// `p_i(k) = exp(w_ik) / Σ_{k'≠i} exp(w_ik')`, with `p_i(i) = 0`.
pub fn softmax_rows(adj: &DMatrix<f64>) -> DMatrix<f64> {
    let n = adj.nrows();
    let mut p = DMatrix::zeros(n, n);
    for i in 0..n {
        let lse = log_sum_exp_row(adj, i);
        for k in (0..n).filter(|&k| k != i) {
            p[(i, k)] = (adj[(i, k)] - lse).exp();
        }
    }
    p
}

/// Gradient of `Σ_n c_n λ_n` over edge weights: `M_ii + M_jj - 2 M_ij` with
/// `M = U diag(c) Uᵀ`.
fn eigen_gradient(eig: &EigenDecomposition, coeff: impl Fn(usize, f64) -> f64) -> Vec<f64> {
    let m = eig.spectral_map(coeff);
    pairs(eig.n())
        .map(|(i, j)| m[(i, i)] + m[(j, j)] - 2.0 * m[(i, j)])
        .collect()
}

/// `Σ_{n>K} 1/max(λ_n, floor)` and its gradient.
pub fn r_eff_from(eig: &EigenDecomposition, k: usize, eig_floor: f64) -> TermEval {
    let lambdas = eig.eigenvalues();
    let value = lambdas
        .iter()
        .skip(k)
        .map(|&l| 1.0 / l.max(eig_floor))
        .sum();
    let near_disconnection = lambdas.iter().skip(k).any(|&l| l < eig_floor);
    let gradient = eigen_gradient(eig, |n, l| {
        if n >= k {
            -1.0 / (l.max(eig_floor) * l.max(eig_floor))
        } else {
            0.0
        }
    });
    TermEval {
        value,
        gradient,
        near_disconnection,
    }
}

/// `Σ_{n≤K} λ_n²` and its gradient.
pub fn r_com_from(eig: &EigenDecomposition, k: usize) -> TermEval {
    let value = eig.eigenvalues().iter().take(k).map(|l| l * l).sum();
    let gradient = eigen_gradient(eig, |n, l| if n < k { 2.0 * l } else { 0.0 });
    TermEval {
        value,
        gradient,
        near_disconnection: false,
    }
}

fn check_k(k: usize, n: usize) -> Result<()> {
    if k == 0 || k >= n {
        return Err(Error::InvalidArgument(format!(
            "need 1 <= K < N, got K={k} with N={n}"
        )));
    }
    Ok(())
}

/// Contrastive loss summed over all layers.
pub fn contrastive(w: &EdgeWeights, g: &MultilayerGraph) -> Result<TermEval> {
    Contrastive::new(g).eval(w)
}

/// Effective-resistance regularizer with the default eigenvalue floor.
pub fn r_eff(w: &EdgeWeights, k: usize) -> Result<TermEval> {
    check_k(k, w.n_nodes())?;
    Ok(r_eff_from(
        &eigendecompose(&w.laplacian())?,
        k,
        DEFAULT_EIG_FLOOR,
    ))
}

/// Community regularizer.
pub fn r_com(w: &EdgeWeights, k: usize) -> Result<TermEval> {
    check_k(k, w.n_nodes())?;
    Ok(r_com_from(&eigendecompose(&w.laplacian())?, k))
}

/// Full objective bound to one graph and one set of hyperparameters.
#[derive(Debug, Clone)]
pub struct Objective {
    contrastive: Contrastive,
    hyper: HyperParams,
}

impl Objective {
    pub fn new(g: &MultilayerGraph, hyper: HyperParams) -> Result<Self> {
        hyper.validate(g.n_nodes())?;
        Ok(Self {
            contrastive: Contrastive::new(g),
            hyper,
        })
    }

    pub fn hyper(&self) -> &HyperParams {
        &self.hyper
    }

    pub fn n_nodes(&self) -> usize {
        self.contrastive.n
    }

    pub fn eval(&self, w: &EdgeWeights) -> Result<ObjectiveEval> {
        let h = &self.hyper;
        let c = self.contrastive.eval(w)?;
        let eig = eigendecompose(&w.laplacian())?;
        let reff = r_eff_from(&eig, h.k_communities, h.eig_floor);
        let rcom = r_com_from(&eig, h.k_communities);
        let value = c.value + h.gamma1 * reff.value + h.gamma2 * rcom.value;
        let gradient = c
            .gradient
            .iter()
            .zip(&reff.gradient)
            .zip(&rcom.gradient)
            .map(|((gc, ge), gm)| gc + h.gamma1 * ge + h.gamma2 * gm)
            .collect();
        Ok(ObjectiveEval {
            value,
            gradient,
            terms: TermValues {
                contrastive: c.value,
                r_eff: reff.value,
                r_com: rcom.value,
            },
            near_disconnection: reff.near_disconnection,
            eigenvalues: eig.eigenvalues().clone(),
        })
    }
}

/// Evaluates the objective once.
pub fn objective(w: &EdgeWeights, g: &MultilayerGraph, h: &HyperParams) -> Result<ObjectiveEval> {
    Objective::new(g, *h)?.eval(w)
}
