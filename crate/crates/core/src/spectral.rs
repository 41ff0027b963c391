//! Dense symmetric eigendecomposition, Laplacian pseudoinverse and effective
//! resistance.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::graph::Laplacian;

/// Eigenvalues at or below this magnitude count as zero.
pub const ZERO_EIGENVALUE_TOL: f64 = 1e-10;

const MAX_SWEEPS_PER_ROW: usize = 1000;

/// Ascending eigenvalues with their orthonormal eigenvectors (as columns).
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<f64>,
}

impl EigenDecomposition {
    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    pub fn n(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Number of eigenvalues with magnitude `<= tol`.
    pub fn count_zero(&self, tol: f64) -> usize {
        self.eigenvalues.iter().filter(|l| l.abs() <= tol).count()
    }

    /// `U diag(f(λ)) Uᵀ`.
    pub fn spectral_map(&self, f: impl Fn(usize, f64) -> f64) -> DMatrix<f64> {
        let u = &self.eigenvectors;
        let mut scaled = u.clone();
        for (n, mut col) in scaled.column_iter_mut().enumerate() {
            col *= f(n, self.eigenvalues[n]);
        }
        scaled * u.transpose()
    }

    /// Moore-Penrose pseudoinverse: eigenvalues above `zero_tol` are inverted,
    /// the rest are dropped.
    pub fn pseudoinverse(&self, zero_tol: f64) -> DMatrix<f64> {
        self.spectral_map(|_, l| if l > zero_tol { 1.0 / l } else { 0.0 })
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        self.spectral_map(|_, l| l)
    }
}

/// Symmetric eigendecomposition of a Laplacian.
pub fn eigendecompose(l: &Laplacian) -> Result<EigenDecomposition> {
    eigendecompose_symmetric(l.matrix())
}

/// Symmetric eigendecomposition with eigenvalues sorted ascending. Eigenvalues
/// within [`ZERO_EIGENVALUE_TOL`] of zero are snapped to exactly zero.
pub fn eigendecompose_symmetric(m: &DMatrix<f64>) -> Result<EigenDecomposition> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(Error::InvalidArgument(format!(
            "eigendecomposition needs a square matrix, got {}x{}",
            n,
            m.ncols()
        )));
    }
    let failure = || Error::EigenFailure {
        n,
        max_abs: m.amax(),
    };
    if m.iter().any(|x| !x.is_finite()) {
        return Err(failure());
    }
    let eig = SymmetricEigen::try_new(m.clone(), f64::EPSILON, MAX_SWEEPS_PER_ROW * n.max(1))
        .ok_or_else(failure)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let eigenvalues = DVector::from_iterator(
        n,
        order.iter().map(|&k| {
            let l = eig.eigenvalues[k];
            if l.abs() <= ZERO_EIGENVALUE_TOL {
                0.0
            } else {
                l
            }
        }),
    );
    let mut eigenvectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        eigenvectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok(EigenDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

fn require_connected(eig: &EigenDecomposition) -> Result<()> {
    if eig.n() >= 2 && eig.eigenvalues[1] <= ZERO_EIGENVALUE_TOL {
        return Err(Error::Singular {
            lambda2: eig.eigenvalues[1],
        });
    }
    Ok(())
}

/// Pseudoinverse of a connected Laplacian, computed from its spectrum.
pub fn pseudoinverse(l: &Laplacian) -> Result<DMatrix<f64>> {
    let eig = eigendecompose(l)?;
    require_connected(&eig)?;
    Ok(eig.pseudoinverse(ZERO_EIGENVALUE_TOL))
}

/// Pseudoinverse via the rank-one shift `(L + 11ᵀ/N)⁻¹ - 11ᵀ/N`. Only valid
/// for connected graphs; kept as an independent route to cross-check
/// [`pseudoinverse`].
pub fn pseudoinverse_shifted(l: &Laplacian) -> Result<DMatrix<f64>> {
    let n = l.n();
    let shift = DMatrix::from_element(n, n, 1.0 / n as f64);
    let inv = (l.matrix() + &shift)
        .try_inverse()
        .ok_or(Error::Singular { lambda2: 0.0 })?;
    Ok(inv - shift)
}

fn quadratic_resistance(pinv: &DMatrix<f64>, i: usize, j: usize) -> f64 {
    pinv[(i, i)] + pinv[(j, j)] - pinv[(i, j)] - pinv[(j, i)]
}

fn check_pair(n: usize, i: usize, j: usize) -> Result<()> {
    if i == j || i >= n || j >= n {
        return Err(Error::InvalidArgument(format!(
            "effective resistance needs distinct nodes below {n}, got ({i}, {j})"
        )));
    }
    Ok(())
}

/// Effective resistance `(δ_i - δ_j)ᵀ L† (δ_i - δ_j)` between two nodes.
///
/// The graph may be disconnected as long as `i` and `j` share a component.
pub fn effective_resistance(l: &Laplacian, i: usize, j: usize) -> Result<f64> {
    check_pair(l.n(), i, j)?;
    let comps = l.components();
    if comps[i] != comps[j] {
        return Err(Error::InfiniteResistance(format!(
            "nodes {i} and {j} are in different components"
        )));
    }
    let eig = eigendecompose(l)?;
    Ok(quadratic_resistance(&eig.pseudoinverse(ZERO_EIGENVALUE_TOL), i, j).max(0.0))
}

/// All pairwise effective resistances of a connected graph.
pub fn effective_resistance_matrix(l: &Laplacian) -> Result<DMatrix<f64>> {
    let eig = eigendecompose(l)?;
    require_connected(&eig).map_err(|_| disconnected_total(&eig))?;
    let pinv = eig.pseudoinverse(ZERO_EIGENVALUE_TOL);
    let n = l.n();
    Ok(DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            0.0
        } else {
            quadratic_resistance(&pinv, i, j).max(0.0)
        }
    }))
}

fn disconnected_total(eig: &EigenDecomposition) -> Error {
    Error::InfiniteResistance(format!(
        "graph is disconnected (lambda_2 = {:.3e})",
        eig.eigenvalues[1]
    ))
}

/// Total effective resistance `N · Σ_{n≥2} 1/λ_n` of a connected graph.
pub fn total_effective_resistance(l: &Laplacian) -> Result<f64> {
    let eig = eigendecompose(l)?;
    total_effective_resistance_from(&eig)
}

pub fn total_effective_resistance_from(eig: &EigenDecomposition) -> Result<f64> {
    let n = eig.n();
    if n < 2 {
        return Ok(0.0);
    }
    require_connected(eig).map_err(|_| disconnected_total(eig))?;
    Ok(n as f64 * eig.eigenvalues.iter().skip(1).map(|l| 1.0 / l).sum::<f64>())
}
