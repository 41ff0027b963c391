//! Spectral clustering of a learned Laplacian and external clustering
//! metrics.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use pathfinding::kuhn_munkres::kuhn_munkres;
use pathfinding::matrix::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::Laplacian;
use crate::spectral::eigendecompose;

pub const KMEANS_RESTARTS: usize = 50;
pub const KMEANS_MAX_ITERS: usize = 300;

/// Cluster assignment of every node, with labels in `0..n_clusters`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterLabels {
    labels: Vec<usize>,
    n_clusters: usize,
}

impl ClusterLabels {
    /// `n_clusters` is taken as one past the largest label.
    pub fn new(labels: Vec<usize>) -> Self {
        let n_clusters = labels.iter().max().map_or(0, |m| m + 1);
        Self { labels, n_clusters }
    }

    pub fn with_clusters(labels: Vec<usize>, n_clusters: usize) -> Result<Self> {
        if let Some(bad) = labels.iter().find(|&&l| l >= n_clusters) {
            return Err(Error::InvalidArgument(format!(
                "label {bad} out of range for {n_clusters} clusters"
            )));
        }
        Ok(Self { labels, n_clusters })
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_clusters(&self) -> usize {
        self.n_clusters
    }

    /// Node indices sorted by label, stable within a label.
    pub fn ordering(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.labels.len()).collect();
        idx.sort_by_key(|&i| self.labels[i]);
        idx
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricReport {
    pub accuracy: f64,
    pub purity: f64,
    pub nmi: f64,
    pub rand_index: f64,
    pub adjusted_rand: f64,
}

#[derive(Debug, Clone)]
pub struct KMeansFit {
    pub labels: ClusterLabels,
    pub inertia: f64,
    pub centroids: DMatrix<f64>,
}

fn sq_dist(points: &DMatrix<f64>, i: usize, centroids: &DMatrix<f64>, c: usize) -> f64 {
    (0..points.ncols())
        .map(|d| {
            let x = points[(i, d)] - centroids[(c, d)];
            x * x
        })
        .sum()
}

fn plus_plus_init(points: &DMatrix<f64>, k: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let n = points.nrows();
    let mut centroids = DMatrix::zeros(k, points.ncols());
    let first = rng.random_range(0..n);
    centroids.set_row(0, &points.row(first));
    let mut best: Vec<f64> = (0..n).map(|i| sq_dist(points, i, &centroids, 0)).collect();
    for c in 1..k {
        let total: f64 = best.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &d) in best.iter().enumerate() {
                if target < d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centroids.set_row(c, &points.row(pick));
        for (i, b) in best.iter_mut().enumerate() {
            *b = b.min(sq_dist(points, i, &centroids, c));
        }
    }
    centroids
}

fn assign(points: &DMatrix<f64>, centroids: &DMatrix<f64>, labels: &mut [usize]) -> bool {
    let mut changed = false;
    for (i, label) in labels.iter_mut().enumerate() {
        let (c, _) = (0..centroids.nrows())
            .map(|c| (c, sq_dist(points, i, centroids, c)))
            .fold(
                (0, f64::INFINITY),
                |acc, x| if x.1 < acc.1 { x } else { acc },
            );
        if *label != c {
            *label = c;
            changed = true;
        }
    }
    changed
}

fn update_centroids(points: &DMatrix<f64>, labels: &mut [usize], centroids: &mut DMatrix<f64>) {
    let k = centroids.nrows();
    loop {
        let mut sizes = vec![0usize; k];
        centroids.fill(0.0);
        for (i, &l) in labels.iter().enumerate() {
            sizes[l] += 1;
            let mut row = centroids.row_mut(l);
            row += points.row(i);
        }
        let Some(empty) = sizes.iter().position(|&s| s == 0) else {
            for (c, &s) in sizes.iter().enumerate() {
                let mut row = centroids.row_mut(c);
                row /= s as f64;
            }
            return;
        };
        // hand the empty cluster the point farthest from its own centroid
        for (c, &s) in sizes.iter().enumerate() {
            if s > 0 {
                let mut row = centroids.row_mut(c);
                row /= s as f64;
            }
        }
        let far = (0..labels.len())
            .filter(|&i| sizes[labels[i]] > 1)
            .map(|i| (i, sq_dist(points, i, centroids, labels[i])))
            .fold((usize::MAX, f64::NEG_INFINITY), |acc, x| {
                if x.1 > acc.1 {
                    x
                } else {
                    acc
                }
            })
            .0;
        if far == usize::MAX {
            return;
        }
        labels[far] = empty;
    }
}

fn lloyd(points: &DMatrix<f64>, k: usize, rng: &mut ChaCha8Rng) -> KMeansFit {
    let mut centroids = plus_plus_init(points, k, rng);
    let mut labels = vec![usize::MAX; points.nrows()];
    for _ in 0..KMEANS_MAX_ITERS {
        if !assign(points, &centroids, &mut labels) {
            break;
        }
        update_centroids(points, &mut labels, &mut centroids);
    }
    let inertia = labels
        .iter()
        .enumerate()
        .map(|(i, &l)| sq_dist(points, i, &centroids, l))
        .sum();
    KMeansFit {
        labels: ClusterLabels {
            labels,
            n_clusters: k,
        },
        inertia,
        centroids,
    }
}

/// k-means on the rows of `points`: k-means++ seeding, Lloyd iterations,
/// best of [`KMEANS_RESTARTS`] restarts by inertia (ties keep the earliest
/// restart). Restart `r` draws from stream `r` of a generator seeded by `seed`.
pub fn kmeans(points: &DMatrix<f64>, k: usize, seed: u64) -> Result<KMeansFit> {
    let n = points.nrows();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!(
            "k-means needs 1 <= k <= {n} points, got k={k}"
        )));
    }
    let mut best: Option<KMeansFit> = None;
    for restart in 0..KMEANS_RESTARTS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(restart as u64);
        let fit = lloyd(points, k, &mut rng);
        if best.as_ref().is_none_or(|b| fit.inertia < b.inertia) {
            best = Some(fit);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Spectral embedding: the eigenvectors of the `k` smallest eigenvalues, one
/// row per node.
pub fn spectral_embedding(l: &Laplacian, k: usize) -> Result<DMatrix<f64>> {
    let n = l.n();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!(
            "spectral embedding needs 1 <= K <= {n}, got {k}"
        )));
    }
    let eig = eigendecompose(l)?;
    Ok(eig.eigenvectors().columns(0, k).into_owned())
}

/// Clusters a graph by running [`kmeans`] on its unnormalized spectral
/// embedding.
pub fn spectral_clustering(l: &Laplacian, k: usize, seed: u64) -> Result<ClusterLabels> {
    let embedding = spectral_embedding(l, k)?;
    Ok(kmeans(&embedding, k, seed)?.labels)
}

struct Contingency {
    /// `table[p][t]` counts nodes with predicted `p` and true `t`.
    table: Vec<Vec<u64>>,
    n: u64,
}

impl Contingency {
    fn new(pred: &[usize], truth: &[usize]) -> Self {
        let densify = |labels: &[usize]| {
            let mut ids = BTreeMap::new();
            let dense: Vec<usize> = labels
                .iter()
                .map(|l| {
                    let next = ids.len();
                    *ids.entry(*l).or_insert(next)
                })
                .collect();
            (dense, ids.len())
        };
        let (p, kp) = densify(pred);
        let (t, kt) = densify(truth);
        let mut table = vec![vec![0u64; kt]; kp];
        for (&a, &b) in p.iter().zip(&t) {
            table[a][b] += 1;
        }
        Self {
            table,
            n: pred.len() as u64,
        }
    }

    fn row_sums(&self) -> Vec<u64> {
        self.table.iter().map(|r| r.iter().sum()).collect()
    }

    fn col_sums(&self) -> Vec<u64> {
        let kt = self.table.first().map_or(0, Vec::len);
        (0..kt)
            .map(|t| self.table.iter().map(|r| r[t]).sum())
            .collect()
    }

    /// Largest diagonal after matching predicted to true labels one-to-one.
    fn matched(&self) -> u64 {
        let kp = self.table.len();
        let kt = self.table.first().map_or(0, Vec::len);
        if kp == 0 || kt == 0 {
            return 0;
        }
        let rows: Vec<Vec<i64>> = if kp <= kt {
            self.table
                .iter()
                .map(|r| r.iter().map(|&x| x as i64).collect())
                .collect()
        } else {
            (0..kt)
                .map(|t| self.table.iter().map(|r| r[t] as i64).collect())
                .collect()
        };
        let weights = Matrix::from_rows(rows).expect("rectangular contingency table");
        kuhn_munkres(&weights).0 as u64
    }
}

fn comb2(x: u64) -> f64 {
    let x = x as f64;
    x * (x - 1.0) / 2.0
}

fn entropy(counts: &[u64], n: f64) -> f64 {
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Scores predicted labels against ground truth.
///
/// NMI uses `I / sqrt(H_pred · H_true)` with natural logs; when either
/// labeling is a single cluster NMI is 1 if both are, else 0. ARI is 1 when
/// both labelings are trivial in the same way (the correction's denominator
/// vanishes).
pub fn evaluate(pred: &ClusterLabels, truth: &ClusterLabels) -> Result<MetricReport> {
    evaluate_slices(pred.as_slice(), truth.as_slice())
}

pub fn evaluate_slices(pred: &[usize], truth: &[usize]) -> Result<MetricReport> {
    if pred.len() != truth.len() {
        return Err(Error::InvalidArgument(format!(
            "label length mismatch: predicted {}, truth {}",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::InvalidArgument(
            "cannot evaluate empty labelings".into(),
        ));
    }
    let c = Contingency::new(pred, truth);
    let n = c.n as f64;
    let rows = c.row_sums();
    let cols = c.col_sums();

    let accuracy = c.matched() as f64 / n;
    let purity = c
        .table
        .iter()
        .map(|r| *r.iter().max().unwrap_or(&0))
        .sum::<u64>() as f64
        / n;

    let h_pred = entropy(&rows, n);
    let h_true = entropy(&cols, n);
    let mut mutual = 0.0;
    for (p, row) in c.table.iter().enumerate() {
        for (t, &nij) in row.iter().enumerate() {
            if nij > 0 {
                let nij = nij as f64;
                mutual += nij / n * (n * nij / (rows[p] as f64 * cols[t] as f64)).ln();
            }
        }
    }
    let nmi = if h_pred == 0.0 || h_true == 0.0 {
        if h_pred == h_true {
            1.0
        } else {
            0.0
        }
    } else {
        (mutual / (h_pred * h_true).sqrt()).clamp(0.0, 1.0)
    };

    let pairs = comb2(c.n);
    let sum_cells: f64 = c.table.iter().flatten().map(|&x| comb2(x)).sum();
    let sum_rows: f64 = rows.iter().map(|&x| comb2(x)).sum();
    let sum_cols: f64 = cols.iter().map(|&x| comb2(x)).sum();
    let rand_index = if pairs == 0.0 {
        1.0
    } else {
        // agreeing pairs: together in both, or apart in both
        (pairs + 2.0 * sum_cells - sum_rows - sum_cols) / pairs
    };
    let expected = if pairs == 0.0 {
        0.0
    } else {
        sum_rows * sum_cols / pairs
    };
    let max_index = 0.5 * (sum_rows + sum_cols);
    let adjusted_rand = if max_index == expected {
        1.0
    } else {
        (sum_cells - expected) / (max_index - expected)
    };

    Ok(MetricReport {
        accuracy,
        purity,
        nmi,
        rand_index,
        adjusted_rand,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::EdgeWeights;
    use approx::assert_abs_diff_eq;
    use nalgebra::dmatrix;

    fn same_partition(a: &[usize], b: &[usize]) -> bool {
        (0..a.len()).all(|i| (0..a.len()).all(|j| (a[i] == a[j]) == (b[i] == b[j])))
    }

    fn graph(n: usize, edges: &[(usize, usize)]) -> Laplacian {
        let mut w = vec![0.0; crate::graph::edge_count(n)];
        for &(i, j) in edges {
            w[crate::graph::edge_index(i, j, n).unwrap()] = 1.0;
        }
        EdgeWeights::new(n, w).unwrap().laplacian()
    }

    #[test]
    fn kmeans_separates_blobs() {
        let pts = dmatrix![0.0; 0.1; 10.0; 10.1];
        let fit = kmeans(&pts, 2, 7).unwrap();
        assert!(same_partition(fit.labels.as_slice(), &[0, 0, 1, 1]));
    }

    #[test]
    fn kmeans_k_equals_n() {
        let pts = dmatrix![0.0, 1.0; 2.0, 3.0; -1.0, 5.0];
        let fit = kmeans(&pts, 3, 0).unwrap();
        assert_eq!(fit.inertia, 0.0);
        let mut l = fit.labels.as_slice().to_vec();
        l.sort();
        assert_eq!(l, vec![0, 1, 2]);
    }

    #[test]
    fn kmeans_duplicates() {
        let pts = DMatrix::from_element(5, 2, 1.5);
        let fit = kmeans(&pts, 2, 3).unwrap();
        assert!(fit.labels.as_slice().iter().all(|&l| l < 2));
        assert_eq!(fit.labels.len(), 5);
        assert!(kmeans(&pts, 6, 0).is_err());
        assert!(kmeans(&pts, 0, 0).is_err());
    }

    #[test]
    fn kmeans_is_seed_deterministic() {
        let pts = DMatrix::from_fn(30, 2, |i, j| ((i * 31 + j * 17) % 13) as f64);
        let a = kmeans(&pts, 4, 11).unwrap();
        let b = kmeans(&pts, 4, 11).unwrap();
        assert_eq!(a.labels, b.labels);
        assert_eq!(a.inertia, b.inertia);
    }

    #[test]
    fn spectral_clustering_examples() {
        let l = graph(4, &[(0, 1), (2, 3)]);
        let labels = spectral_clustering(&l, 2, 0).unwrap();
        assert!(same_partition(labels.as_slice(), &[0, 0, 1, 1]));

        let complete = graph(4, &[(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]);
        assert_eq!(
            spectral_clustering(&complete, 1, 0).unwrap().as_slice(),
            &[0, 0, 0, 0]
        );

        let tris = graph(
            9,
            &[
                (0, 1),
                (1, 2),
                (0, 2),
                (3, 4),
                (4, 5),
                (3, 5),
                (6, 7),
                (7, 8),
                (6, 8),
            ],
        );
        let labels = spectral_clustering(&tris, 3, 5).unwrap();
        assert!(same_partition(
            labels.as_slice(),
            &[0, 0, 0, 1, 1, 1, 2, 2, 2]
        ));
    }

    #[test]
    fn metrics_identity_and_permutation() {
        let truth = [0, 0, 1, 1, 2, 2, 2];
        let m = evaluate_slices(&truth, &truth).unwrap();
        for v in [m.accuracy, m.purity, m.nmi, m.rand_index, m.adjusted_rand] {
            assert_abs_diff_eq!(v, 1.0, epsilon = 1e-12);
        }
        let permuted = [2, 2, 0, 0, 1, 1, 1];
        let m = evaluate_slices(&permuted, &truth).unwrap();
        assert_abs_diff_eq!(m.accuracy, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(m.nmi, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn metrics_trivial_prediction() {
        let m = evaluate_slices(&[0, 0, 0, 0], &[0, 0, 1, 1]).unwrap();
        assert_abs_diff_eq!(m.purity, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(m.accuracy, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(m.rand_index, 1.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(m.adjusted_rand, 0.0, epsilon = 1e-12);
        assert_eq!(m.nmi, 0.0);
    }

    #[test]
    fn metrics_more_predicted_than_true_clusters() {
        let m = evaluate_slices(&[0, 1, 2, 3], &[0, 0, 1, 1]).unwrap();
        assert_abs_diff_eq!(m.accuracy, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(m.purity, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn metrics_length_mismatch() {
        assert!(matches!(
            evaluate_slices(&[0, 1], &[0]),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn labels_validate_range() {
        assert!(ClusterLabels::with_clusters(vec![0, 2], 2).is_err());
        let l = ClusterLabels::with_clusters(vec![1, 0, 1], 2).unwrap();
        assert_eq!(l.ordering(), vec![1, 0, 2]);
        assert_eq!(ClusterLabels::new(vec![0, 3]).n_clusters(), 4);
    }
}
