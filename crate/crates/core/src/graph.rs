//! Graph data model: edge-weight vectors, Laplacians, layers and multilayer
//! containers.
//!
//! Edge weights of an `N`-node graph live in a vector of length `N(N-1)/2`
//! laid out in row-major upper-triangular order:
//!
//! ```text
//! (0,1) (0,2) ... (0,N-1) (1,2) ... (1,N-1) ... (N-2,N-1)
//! ```
//!
//! Every module shares [`edge_index`] / [`edge_pair`] for that layout.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Tolerance on positive off-diagonal entries when reading weights back out of
/// a Laplacian.
pub const OFF_DIAGONAL_TOL: f64 = 1e-9;

/// Number of unordered node pairs, `n(n-1)/2`.
pub fn edge_count(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

/// Position of the pair `(i, j)`, `i < j`, in an edge-weight vector.
pub fn edge_index(i: usize, j: usize, n: usize) -> Result<usize> {
    if i >= j || j >= n {
        return Err(Error::InvalidArgument(format!(
            "edge_index needs 0 <= i < j < n, got i={i}, j={j}, n={n}"
        )));
    }
    Ok(edge_index_unchecked(i, j, n))
}

#[inline]
pub(crate) fn edge_index_unchecked(i: usize, j: usize, n: usize) -> usize {
    i * n - i * (i + 1) / 2 + (j - i - 1)
}

/// Inverse of [`edge_index`]: the pair `(i, j)` stored at `index`.
pub fn edge_pair(index: usize, n: usize) -> Result<(usize, usize)> {
    if index >= edge_count(n) {
        return Err(Error::InvalidArgument(format!(
            "edge index {index} out of range for n={n}"
        )));
    }
    let mut rest = index;
    for i in 0..n {
        let row = n - i - 1;
        if rest < row {
            return Ok((i, i + 1 + rest));
        }
        rest -= row;
    }
    unreachable!("index bound checked above")
}

/// Iterates over all pairs `(i, j)`, `i < j`, in storage order.
pub fn pairs(n: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..n).flat_map(move |i| (i + 1..n).map(move |j| (i, j)))
}

/// Nonnegative upper-triangular edge weights of an `n`-node graph.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeWeights {
    n_nodes: usize,
    weights: Vec<f64>,
}

impl EdgeWeights {
    pub fn new(n_nodes: usize, weights: Vec<f64>) -> Result<Self> {
        if n_nodes == 0 {
            return Err(Error::InvalidArgument(
                "graph needs at least one node".into(),
            ));
        }
        if weights.len() != edge_count(n_nodes) {
            return Err(Error::InvalidArgument(format!(
                "expected {} edge weights for {} nodes, got {}",
                edge_count(n_nodes),
                n_nodes,
                weights.len()
            )));
        }
        if let Some((e, w)) = weights
            .iter()
            .enumerate()
            .find(|(_, w)| !w.is_finite() || **w < 0.0)
        {
            return Err(Error::InvalidArgument(format!(
                "edge weight {e} must be finite and nonnegative, got {w}"
            )));
        }
        Ok(Self { n_nodes, weights })
    }

    pub fn zeros(n_nodes: usize) -> Self {
        Self {
            n_nodes,
            weights: vec![0.0; edge_count(n_nodes)],
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.weights
    }

    /// Weight of the pair `{i, j}`; zero on the diagonal.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        match i.cmp(&j) {
            std::cmp::Ordering::Less => self.weights[edge_index_unchecked(i, j, self.n_nodes)],
            std::cmp::Ordering::Greater => self.weights[edge_index_unchecked(j, i, self.n_nodes)],
            std::cmp::Ordering::Equal => 0.0,
        }
    }

    /// Dense symmetric adjacency matrix with zero diagonal.
    pub fn adjacency(&self) -> DMatrix<f64> {
        let n = self.n_nodes;
        let mut a = DMatrix::zeros(n, n);
        for ((i, j), &w) in pairs(n).zip(&self.weights) {
            a[(i, j)] = w;
            a[(j, i)] = w;
        }
        a
    }

    pub fn laplacian(&self) -> Laplacian {
        Laplacian::from_weights(self)
    }
}

/// Combinatorial graph Laplacian `L = D - W`.
#[derive(Debug, Clone, PartialEq)]
pub struct Laplacian {
    matrix: DMatrix<f64>,
}

impl Laplacian {
    /// Applies the weight-to-Laplacian operator. Each diagonal entry is the
    /// negated sum of its row's off-diagonal entries, accumulated in column
    /// order.
    pub fn from_weights(w: &EdgeWeights) -> Self {
        let n = w.n_nodes();
        let mut m = DMatrix::zeros(n, n);
        for ((i, j), &wij) in pairs(n).zip(w.as_slice()) {
            m[(i, j)] = -wij;
            m[(j, i)] = -wij;
        }
        for i in 0..n {
            let mut off = 0.0;
            for j in 0..n {
                if j != i {
                    off += m[(i, j)];
                }
            }
            m[(i, i)] = -off;
        }
        Self { matrix: m }
    }

    /// Wraps a matrix after checking symmetry, sign pattern and zero row sums.
    pub fn from_matrix(matrix: DMatrix<f64>) -> Result<Self> {
        let n = matrix.nrows();
        if matrix.ncols() != n {
            return Err(Error::InvalidLaplacian(format!(
                "matrix is not square: {}x{}",
                n,
                matrix.ncols()
            )));
        }
        if matrix.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidLaplacian("non-finite entry".into()));
        }
        let row_tol = 1e-12 * n as f64 * matrix.amax().max(1.0);
        for i in 0..n {
            let mut row = 0.0;
            for j in 0..n {
                let v = matrix[(i, j)];
                row += v;
                if i != j && v != matrix[(j, i)] {
                    return Err(Error::InvalidLaplacian(format!(
                        "not symmetric at ({i}, {j})"
                    )));
                }
                if i != j && v > OFF_DIAGONAL_TOL {
                    return Err(Error::InvalidLaplacian(format!(
                        "positive off-diagonal {v} at ({i}, {j})"
                    )));
                }
            }
            if row.abs() > row_tol {
                return Err(Error::InvalidLaplacian(format!("row {i} sums to {row:e}")));
            }
        }
        Ok(Self { matrix })
    }

    /// Recovers the edge weights, clamping off-diagonals within
    /// [`OFF_DIAGONAL_TOL`] of zero.
    pub fn to_weights(&self) -> Result<EdgeWeights> {
        let n = self.n();
        let mut weights = Vec::with_capacity(edge_count(n));
        for (i, j) in pairs(n) {
            let v = self.matrix[(i, j)];
            if v > OFF_DIAGONAL_TOL {
                return Err(Error::InvalidLaplacian(format!(
                    "positive off-diagonal {v} at ({i}, {j})"
                )));
            }
            weights.push(if v > 0.0 { 0.0 } else { -v });
        }
        EdgeWeights::new(n, weights)
    }

    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.matrix
    }

    /// Dense adjacency `W = D - L`.
    pub fn adjacency(&self) -> DMatrix<f64> {
        let n = self.n();
        DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { -self.matrix[(i, j)] })
    }

    /// Connected-component label of every node, counting an edge wherever the
    /// off-diagonal entry is strictly negative.
    pub fn components(&self) -> Vec<usize> {
        let n = self.n();
        let mut comp = vec![usize::MAX; n];
        let mut next = 0;
        let mut stack = Vec::new();
        for start in 0..n {
            if comp[start] != usize::MAX {
                continue;
            }
            comp[start] = next;
            stack.push(start);
            while let Some(u) = stack.pop() {
                for v in 0..n {
                    if v != u && comp[v] == usize::MAX && self.matrix[(u, v)] < 0.0 {
                        comp[v] = next;
                        stack.push(v);
                    }
                }
            }
            next += 1;
        }
        comp
    }
}

/// One binary, undirected graph layer over a shared node set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layer {
    name: String,
    n_nodes: usize,
    adjacency: Vec<bool>,
    neighborhoods: Vec<Vec<usize>>,
}

impl Layer {
    /// Builds a layer from undirected edges. Each pair may be given in either
    /// orientation; repeats collapse.
    pub fn from_edges(
        name: impl Into<String>,
        n_nodes: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self> {
        let mut adjacency = vec![false; n_nodes * n_nodes];
        for (i, j) in edges {
            if i >= n_nodes || j >= n_nodes {
                return Err(Error::InvalidArgument(format!(
                    "edge ({i}, {j}) out of range for {n_nodes} nodes"
                )));
            }
            if i == j {
                return Err(Error::InvalidArgument(format!("self-loop at node {i}")));
            }
            adjacency[i * n_nodes + j] = true;
            adjacency[j * n_nodes + i] = true;
        }
        Ok(Self::from_mask(name.into(), n_nodes, adjacency))
    }

    /// Builds a layer from a dense 0/1 matrix. Weighted, asymmetric or
    /// self-looped input is rejected.
    pub fn from_adjacency(name: impl Into<String>, adjacency: &DMatrix<f64>) -> Result<Self> {
        let n = adjacency.nrows();
        if adjacency.ncols() != n {
            return Err(Error::InvalidArgument("adjacency must be square".into()));
        }
        let mut mask = vec![false; n * n];
        for i in 0..n {
            for j in 0..n {
                let v = adjacency[(i, j)];
                if v != 0.0 && v != 1.0 {
                    return Err(Error::InvalidArgument(format!(
                        "layers are binary; entry ({i}, {j}) is {v}"
                    )));
                }
                if v != adjacency[(j, i)] {
                    return Err(Error::InvalidArgument(format!(
                        "adjacency is not symmetric at ({i}, {j})"
                    )));
                }
                if i == j && v != 0.0 {
                    return Err(Error::InvalidArgument(format!("self-loop at node {i}")));
                }
                mask[i * n + j] = v == 1.0;
            }
        }
        Ok(Self::from_mask(name.into(), n, mask))
    }

    fn from_mask(name: String, n_nodes: usize, adjacency: Vec<bool>) -> Self {
        let neighborhoods = (0..n_nodes)
            .map(|i| {
                (0..n_nodes)
                    .filter(|&j| adjacency[i * n_nodes + j])
                    .collect()
            })
            .collect();
        Self {
            name,
            n_nodes,
            adjacency,
            neighborhoods,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adjacency[i * self.n_nodes + j]
    }

    /// Sorted neighbor list of node `i`.
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighborhoods[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighborhoods[i].len()
    }

    /// Edges `(i, j)` with `i < j`, in storage order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.neighborhoods
            .iter()
            .enumerate()
            .flat_map(|(i, nb)| nb.iter().filter(move |&&j| j > i).map(move |&j| (i, j)))
    }

    pub fn n_edges(&self) -> usize {
        self.neighborhoods.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn adjacency(&self) -> DMatrix<f64> {
        let n = self.n_nodes;
        DMatrix::from_fn(n, n, |i, j| if self.has_edge(i, j) { 1.0 } else { 0.0 })
    }

    pub fn degree_matrix(&self) -> DMatrix<f64> {
        let n = self.n_nodes;
        DMatrix::from_fn(
            n,
            n,
            |i, j| if i == j { self.degree(i) as f64 } else { 0.0 },
        )
    }

    /// Upper-triangular 0/1 weights of this layer.
    pub fn weights(&self) -> EdgeWeights {
        let n = self.n_nodes;
        let w = pairs(n)
            .map(|(i, j)| if self.has_edge(i, j) { 1.0 } else { 0.0 })
            .collect();
        EdgeWeights {
            n_nodes: n,
            weights: w,
        }
    }

    pub fn laplacian(&self) -> Laplacian {
        Laplacian::from_weights(&self.weights())
    }
}

/// Layers sharing a node set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MultilayerGraph {
    n_nodes: usize,
    layers: Vec<Layer>,
    node_ids: Option<Vec<String>>,
}

impl MultilayerGraph {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        let first = layers.first().ok_or_else(|| {
            Error::InvalidArgument("a multilayer graph needs at least one layer".into())
        })?;
        let n_nodes = first.n_nodes();
        if let Some(bad) = layers.iter().find(|l| l.n_nodes() != n_nodes) {
            return Err(Error::InvalidArgument(format!(
                "layer {:?} has {} nodes, expected {}",
                bad.name(),
                bad.n_nodes(),
                n_nodes
            )));
        }
        Ok(Self {
            n_nodes,
            layers,
            node_ids: None,
        })
    }

    pub fn with_node_ids(mut self, ids: Vec<String>) -> Result<Self> {
        if ids.len() != self.n_nodes {
            return Err(Error::InvalidArgument(format!(
                "{} node ids given for {} nodes",
                ids.len(),
                self.n_nodes
            )));
        }
        self.node_ids = Some(ids);
        Ok(self)
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn node_ids(&self) -> Option<&[String]> {
        self.node_ids.as_deref()
    }

    /// Entrywise mean of the layer adjacencies, as edge weights.
    pub fn mean_weights(&self) -> EdgeWeights {
        let mut acc = vec![0.0; edge_count(self.n_nodes)];
        for layer in &self.layers {
            for (i, j) in layer.edges() {
                acc[edge_index_unchecked(i, j, self.n_nodes)] += 1.0;
            }
        }
        let s = self.layers.len() as f64;
        acc.iter_mut().for_each(|x| *x /= s);
        EdgeWeights {
            n_nodes: self.n_nodes,
            weights: acc,
        }
    }
}

/// Symmetrized k-nearest-neighbor graph of the rows of `points`.
///
/// Each point links to its `k` nearest others by Euclidean distance (ties go
/// to the lower index); an edge is kept if either endpoint selected the other.
pub fn knn_layer(points: &DMatrix<f64>, k: usize) -> Result<Layer> {
    let m = points.nrows();
    if k == 0 || k >= m {
        return Err(Error::InvalidArgument(format!(
            "knn needs 1 <= k < number of points, got k={k} with {m} points"
        )));
    }
    let mut mask = vec![false; m * m];
    let mut order: Vec<(f64, usize)> = Vec::with_capacity(m - 1);
    for i in 0..m {
        order.clear();
        let pi = points.row(i);
        for j in (0..m).filter(|&j| j != i) {
            let d2 = (pi - points.row(j)).norm_squared();
            order.push((d2, j));
        }
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for &(_, j) in &order[..k] {
            mask[i * m + j] = true;
            mask[j * m + i] = true;
        }
    }
    Ok(Layer::from_mask("knn".into(), m, mask))
}
