//! Multilayer graph learning.
//!
//! Learns a single nonnegative edge-weight vector `w` (one weight per node
//! pair) whose Laplacian fuses the layers of a multilayer graph. The
//! objective combines a neighborhood contrastive loss against every layer,
//! an effective-resistance penalty on the upper spectrum and a penalty on the
//! `K` smallest Laplacian eigenvalues that pulls the graph toward `K`
//! communities. It is minimized by projected gradient descent; the result is
//! clustered spectrally and scored against ground truth.
//!
//! | Module | Contents |
//! |--------|----------|
//! | [`graph`] | edge-weight vectors, Laplacians, layers, kNN graphs |
//! | [`spectral`] | eigendecomposition, pseudoinverse, effective resistance |
//! | [`objective`] | loss terms and analytic gradients |
//! | [`optimizer`] | projected gradient descent |
//! | [`clustering`] | spectral clustering, k-means, metrics |
//! | [`baselines`] | layer fusion baselines |
//! | [`data`] | synthetic generator, text format |
//! | [`experiment`] | config-driven experiment runner used by the CLI |

pub mod baselines;
pub mod clustering;
pub mod data;
pub mod error;
pub mod experiment;
pub mod graph;
pub mod objective;
pub mod optimizer;
pub mod spectral;

pub use error::{Error, Result};
