//! Synthetic Gaussian-mixture multilayer datasets and the multilayer text
//! format.
//!
//! The text format is line oriented UTF-8; see `docs/FORMAT.md`.
//!
//! ```text
//! # comment
//! nodes 3
//! labels 0 0 1
//! layer work
//! edge 0 1
//! edge 1 2
//! ```

use std::collections::HashSet;
use std::f64::consts::TAU;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::clustering::ClusterLabels;
use crate::error::{Error, Result};
use crate::graph::{knn_layer, Layer, MultilayerGraph};

/// Parameters of the synthetic multilayer generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n_nodes: usize,
    pub n_layers: usize,
    pub n_clusters: usize,
    pub knn_k: usize,
    pub dim: usize,
    pub seed: u64,
    /// Radius of the circle the component means are placed on.
    pub mean_radius: f64,
    /// Range of the covariance eigenvalues.
    pub cov_eig_min: f64,
    pub cov_eig_max: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_nodes: 50,
            n_layers: 3,
            n_clusters: 5,
            knn_k: 20,
            dim: 2,
            seed: 0,
            mean_radius: 10.0,
            cov_eig_min: 0.5,
            cov_eig_max: 2.0,
        }
    }
}

impl SyntheticSpec {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::InvalidArgument(m));
        if self.n_layers == 0 {
            return fail("n_layers must be at least 1".into());
        }
        if self.n_clusters == 0 || self.n_clusters > self.n_nodes {
            return fail(format!(
                "need 1 <= n_clusters <= n_nodes, got {} clusters for {} nodes",
                self.n_clusters, self.n_nodes
            ));
        }
        if self.knn_k == 0 || self.knn_k >= self.n_nodes {
            return fail(format!(
                "need 1 <= knn_k < n_nodes, got knn_k={} with {} nodes",
                self.knn_k, self.n_nodes
            ));
        }
        if self.dim < 2 {
            return fail("dim must be at least 2".into());
        }
        if !(self.cov_eig_min > 0.0 && self.cov_eig_min <= self.cov_eig_max) {
            return fail("need 0 < cov_eig_min <= cov_eig_max".into());
        }
        if !(self.mean_radius >= 0.0 && self.mean_radius.is_finite()) {
            return fail("mean_radius must be finite and nonnegative".into());
        }
        Ok(())
    }

    /// Contiguous, near-equal cluster blocks: the first `N mod K` clusters get
    /// one extra node.
    pub fn truth(&self) -> ClusterLabels {
        let (n, k) = (self.n_nodes, self.n_clusters);
        let (base, extra) = (n / k, n % k);
        let labels = (0..k)
            .flat_map(|c| std::iter::repeat_n(c, base + usize::from(c < extra)))
            .collect();
        ClusterLabels::new(labels)
    }
}

/// A multilayer graph with optional ground-truth clusters.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledMultilayer {
    pub graph: MultilayerGraph,
    pub truth: Option<ClusterLabels>,
    pub provenance: String,
}

impl LabeledMultilayer {
    pub fn require_truth(&self) -> Result<&ClusterLabels> {
        self.truth
            .as_ref()
            .ok_or_else(|| Error::Data(format!("{} has no labels section", self.provenance)))
    }
}

/// Random rotation in `d` dimensions from the QR factor of a Gaussian matrix.
fn random_orthogonal(d: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for (j, mut col) in q.column_iter_mut().enumerate() {
        if r[(j, j)] < 0.0 {
            col.neg_mut();
        }
    }
    q
}

/// Draws every layer of a synthetic dataset.
///
/// Per layer: a rotation angle, one mean per component at a uniform angle on
/// the circle of radius `mean_radius` (first two coordinates), and one random
/// SPD covariance per component with eigenvalues uniform in
/// `[cov_eig_min, cov_eig_max]`. Node `i` is drawn from component `truth(i)`
/// in every layer, and each layer is the `knn_k`-nearest-neighbor graph of
/// its points.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<LabeledMultilayer> {
    spec.validate()?;
    let truth = spec.truth();
    let d = spec.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut layers = Vec::with_capacity(spec.n_layers);
    for s in 0..spec.n_layers {
        let rotation = rng.random::<f64>() * TAU;
        let components: Vec<(DVector<f64>, DMatrix<f64>)> = (0..spec.n_clusters)
            .map(|_| {
                let angle = rotation + rng.random::<f64>() * TAU;
                let mut mean = DVector::zeros(d);
                mean[0] = spec.mean_radius * angle.cos();
                mean[1] = spec.mean_radius * angle.sin();
                let q = random_orthogonal(d, &mut rng);
                let scales = DVector::from_fn(d, |_, _| {
                    rng.random_range(spec.cov_eig_min..=spec.cov_eig_max).sqrt()
                });
                // x = mean + Q diag(sqrt(eig)) z has covariance Q diag(eig) Qᵀ
                let factor = q * DMatrix::from_diagonal(&scales);
                (mean, factor)
            })
            .collect();
        let mut points = DMatrix::zeros(spec.n_nodes, d);
        for (i, &c) in truth.as_slice().iter().enumerate() {
            let z = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
            let (mean, factor) = &components[c];
            points.set_row(i, &(mean + factor * z).transpose());
        }
        layers.push(knn_layer(&points, spec.knn_k)?.with_name(format!("layer{s}")));
    }
    Ok(LabeledMultilayer {
        graph: MultilayerGraph::new(layers)?,
        truth: Some(truth),
        provenance: format!(
            "synthetic: N={} S={} K={} knn={} dim={} seed={}",
            spec.n_nodes, spec.n_layers, spec.n_clusters, spec.knn_k, spec.dim, spec.seed
        ),
    })
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn parse_count<'a>(
    line: usize,
    what: &str,
    tokens: impl Iterator<Item = &'a str>,
) -> Result<Vec<usize>> {
    tokens
        .map(|t| {
            t.parse::<usize>().map_err(|_| {
                parse_err(
                    line,
                    format!("{what}: expected a nonnegative integer, got {t:?}"),
                )
            })
        })
        .collect()
}

/// Layer name, edges in file order, and the set of edges seen so far.
type PendingLayer = (String, Vec<(usize, usize)>, HashSet<(usize, usize)>);

/// Parses the multilayer text format.
pub fn parse_multilayer(text: &str) -> Result<(MultilayerGraph, Option<ClusterLabels>)> {
    let mut n_nodes: Option<usize> = None;
    let mut ids: Option<Vec<String>> = None;
    let mut labels: Option<Vec<usize>> = None;
    let mut layers: Vec<PendingLayer> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let content = raw.split('#').next().unwrap_or("");
        let mut tokens = content.split_whitespace();
        let Some(keyword) = tokens.next() else {
            continue;
        };
        if keyword != "nodes" && n_nodes.is_none() {
            return Err(parse_err(
                line_no,
                "the first directive must be `nodes <N>`",
            ));
        }
        let n = n_nodes.unwrap_or(0);
        match keyword {
            "nodes" => {
                if n_nodes.is_some() {
                    return Err(parse_err(line_no, "duplicate `nodes` directive"));
                }
                let v = parse_count(line_no, "nodes", tokens)?;
                match v.as_slice() {
                    [count] if *count > 0 => n_nodes = Some(*count),
                    _ => return Err(parse_err(line_no, "expected `nodes <N>` with N >= 1")),
                }
            }
            "ids" => {
                if ids.is_some() || !layers.is_empty() {
                    return Err(parse_err(
                        line_no,
                        "`ids` must appear once, before any layer",
                    ));
                }
                let v: Vec<String> = tokens.map(str::to_owned).collect();
                if v.len() != n {
                    return Err(parse_err(
                        line_no,
                        format!("expected {n} ids, got {}", v.len()),
                    ));
                }
                ids = Some(v);
            }
            "labels" => {
                if labels.is_some() || !layers.is_empty() {
                    return Err(parse_err(
                        line_no,
                        "`labels` must appear once, before any layer",
                    ));
                }
                let v = parse_count(line_no, "labels", tokens)?;
                if v.len() != n {
                    return Err(parse_err(
                        line_no,
                        format!("expected {n} labels, got {}", v.len()),
                    ));
                }
                labels = Some(v);
            }
            "layer" => {
                let name = tokens
                    .next()
                    .ok_or_else(|| parse_err(line_no, "expected `layer <name>`"))?;
                if tokens.next().is_some() {
                    return Err(parse_err(line_no, "layer names are a single token"));
                }
                layers.push((name.to_owned(), Vec::new(), HashSet::new()));
            }
            "edge" => {
                let Some((_, edges, seen)) = layers.last_mut() else {
                    return Err(parse_err(line_no, "`edge` before any `layer`"));
                };
                let v = parse_count(line_no, "edge", tokens)?;
                let &[i, j] = v.as_slice() else {
                    return Err(parse_err(
                        line_no,
                        "expected `edge <i> <j>`; layers are unweighted",
                    ));
                };
                if j >= n || i >= n {
                    return Err(parse_err(
                        line_no,
                        format!("node id out of range for {n} nodes"),
                    ));
                }
                if i >= j {
                    return Err(parse_err(
                        line_no,
                        format!("edges are undirected and written with i < j, got {i} {j}"),
                    ));
                }
                if !seen.insert((i, j)) {
                    return Err(parse_err(line_no, format!("duplicate edge {i} {j}")));
                }
                edges.push((i, j));
            }
            other => return Err(parse_err(line_no, format!("unknown directive {other:?}"))),
        }
    }

    let n = n_nodes.ok_or_else(|| parse_err(0, "missing `nodes <N>` header"))?;
    if layers.is_empty() {
        return Err(parse_err(0, "no layers"));
    }
    let layers = layers
        .into_iter()
        .map(|(name, edges, _)| Layer::from_edges(name, n, edges))
        .collect::<Result<Vec<_>>>()?;
    let mut graph = MultilayerGraph::new(layers)?;
    if let Some(ids) = ids {
        graph = graph.with_node_ids(ids)?;
    }
    Ok((graph, labels.map(ClusterLabels::new)))
}

/// Canonical text form: header, optional ids and labels, then layers in order
/// with edges sorted.
pub fn to_text(g: &MultilayerGraph, truth: Option<&ClusterLabels>) -> Result<String> {
    let bad_token = |t: &str| t.is_empty() || t.contains('#') || t.chars().any(char::is_whitespace);
    let mut out = String::new();
    writeln!(out, "nodes {}", g.n_nodes()).unwrap();
    if let Some(ids) = g.node_ids() {
        if let Some(bad) = ids.iter().find(|t| bad_token(t)) {
            return Err(Error::InvalidArgument(format!(
                "node id {bad:?} cannot be written"
            )));
        }
        writeln!(out, "ids {}", ids.join(" ")).unwrap();
    }
    if let Some(t) = truth {
        if t.len() != g.n_nodes() {
            return Err(Error::InvalidArgument(format!(
                "{} labels for {} nodes",
                t.len(),
                g.n_nodes()
            )));
        }
        let joined: Vec<String> = t.as_slice().iter().map(usize::to_string).collect();
        writeln!(out, "labels {}", joined.join(" ")).unwrap();
    }
    for layer in g.layers() {
        if bad_token(layer.name()) {
            return Err(Error::InvalidArgument(format!(
                "layer name {:?} cannot be written",
                layer.name()
            )));
        }
        writeln!(out, "layer {}", layer.name()).unwrap();
        for (i, j) in layer.edges() {
            writeln!(out, "edge {i} {j}").unwrap();
        }
    }
    Ok(out)
}

pub fn load_multilayer(path: impl AsRef<Path>) -> Result<LabeledMultilayer> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let (graph, truth) = parse_multilayer(&text)?;
    Ok(LabeledMultilayer {
        graph,
        truth,
        provenance: format!("file: {}", path.display()),
    })
}

pub fn save_multilayer(data: &LabeledMultilayer, path: impl AsRef<Path>) -> Result<()> {
    let text = to_text(&data.graph, data.truth.as_ref())?;
    std::fs::write(path, text)?;
    Ok(())
}
