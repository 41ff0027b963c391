//! Declarative experiments: fuse or learn a representative graph for every
//! (method, grid point, seed), cluster it, score it and write the artifacts.
//!
//! Artifacts written to `output_dir`:
//!
//! * `results.csv`: one row per run, sorted by method, grid point, seed.
//! * `summary.json`: per-method mean and standard deviation over seeds, the
//!   full grid for the proposed method and the selected grid point.
//! * `adjacency_<method>.csv`: learned adjacency of the lowest seed (at the
//!   selected grid point), rows and columns ordered by ground-truth cluster.
//! * `trace_proposed_<seed>.csv`: optimizer trace at the selected grid point.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::Baseline;
use crate::clustering::{evaluate, spectral_clustering, ClusterLabels, MetricReport};
use crate::data::{generate_synthetic, load_multilayer, LabeledMultilayer, SyntheticSpec};
use crate::error::{Error, Result};
use crate::graph::Laplacian;
use crate::objective::{HyperParams, DEFAULT_EIG_FLOOR};
use crate::optimizer::{solve, InitMode, SolveConfig, SolveTrace};
use crate::spectral::eigendecompose;

pub const DEFAULT_GAMMA1_GRID: [f64; 3] = [0.01, 0.1, 1.0];
pub const DEFAULT_GAMMA2_GRID: [f64; 3] = [0.1, 1.0, 10.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    Proposed,
    Baseline(Baseline),
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Proposed => "proposed",
            Method::Baseline(b) => b.name(),
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        if s == "proposed" {
            return Ok(Method::Proposed);
        }
        s.parse::<Baseline>()
            .map(Method::Baseline)
            .map_err(|_| Error::Config(format!("unknown method {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum DatasetConfig {
    /// Regenerated for every run seed; the spec's own `seed` is ignored.
    Synthetic(SyntheticSpec),
    File {
        path: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperConfig {
    pub gamma1: Vec<f64>,
    pub gamma2: Vec<f64>,
    /// Defaults to the number of ground-truth clusters.
    pub k_communities: Option<usize>,
    pub eig_floor: f64,
}

impl Default for HyperConfig {
    fn default() -> Self {
        Self {
            gamma1: DEFAULT_GAMMA1_GRID.to_vec(),
            gamma2: DEFAULT_GAMMA2_GRID.to_vec(),
            k_communities: None,
            eig_floor: DEFAULT_EIG_FLOOR,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitChoice {
    LayerMean,
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub max_iters: usize,
    pub grad_tol: f64,
    pub initial_step: f64,
    pub backtrack_factor: f64,
    pub armijo_c: f64,
    pub init: InitChoice,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let d = SolveConfig::default();
        Self {
            max_iters: d.max_iters,
            grad_tol: d.grad_tol,
            initial_step: d.initial_step,
            backtrack_factor: d.backtrack_factor,
            armijo_c: d.armijo_c,
            init: InitChoice::LayerMean,
        }
    }
}

impl SolverConfig {
    pub fn to_solve_config(&self) -> SolveConfig {
        SolveConfig {
            max_iters: self.max_iters,
            grad_tol: self.grad_tol,
            initial_step: self.initial_step,
            backtrack_factor: self.backtrack_factor,
            armijo_c: self.armijo_c,
            init: match self.init {
                InitChoice::LayerMean => InitMode::LayerMean,
                InitChoice::Uniform => InitMode::Uniform,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    pub methods: Vec<String>,
    #[serde(default)]
    pub hyper: HyperConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Methods in run order, deduplicated.
    pub fn methods(&self) -> Result<Vec<Method>> {
        let mut out = self
            .methods
            .iter()
            .map(|m| Method::parse(m))
            .collect::<Result<Vec<_>>>()?;
        out.sort_by_key(|m| m.name());
        out.dedup();
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        let methods = self.methods()?;
        if methods.is_empty() {
            return Err(Error::Config("at least one method is required".into()));
        }
        for m in &methods {
            if let Method::Baseline(b) = m {
                if *b != Baseline::ArithmeticMean {
                    return Err(Error::Config(format!(
                        "method {:?} is a reserved identifier and is not implemented",
                        b.name()
                    )));
                }
            }
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if self.hyper.gamma1.is_empty() || self.hyper.gamma2.is_empty() {
            return Err(Error::Config("gamma grids must not be empty".into()));
        }
        if let Some(g) = self
            .hyper
            .gamma1
            .iter()
            .chain(&self.hyper.gamma2)
            .find(|g| !(**g >= 0.0 && g.is_finite()))
        {
            return Err(Error::Config(format!(
                "gamma values must be finite and >= 0, got {g}"
            )));
        }
        if self.hyper.eig_floor.is_nan() || self.hyper.eig_floor <= 0.0 {
            return Err(Error::Config("eig_floor must be positive".into()));
        }
        if self.hyper.k_communities == Some(0) {
            return Err(Error::Config("k_communities must be at least 1".into()));
        }
        self.solver
            .to_solve_config()
            .validate()
            .map_err(|e| Error::Config(format!("solver: {e}")))?;
        if let DatasetConfig::Synthetic(spec) = &self.dataset {
            spec.validate()
                .map_err(|e| Error::Config(format!("dataset: {e}")))?;
        }
        Ok(())
    }

    /// `(gamma1, gamma2)` pairs, `gamma1` varying slowest.
    pub fn grid(&self) -> Vec<(f64, f64)> {
        self.hyper
            .gamma1
            .iter()
            .flat_map(|&a| self.hyper.gamma2.iter().map(move |&b| (a, b)))
            .collect()
    }

    fn sorted_seeds(&self) -> Vec<u64> {
        let mut s = self.seeds.clone();
        s.sort_unstable();
        s.dedup();
        s
    }
}

/// One (method, grid point, seed) result.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub method: Method,
    /// Index into [`ExperimentConfig::grid`] for the proposed method.
    pub grid_index: Option<usize>,
    pub gamma1: Option<f64>,
    pub gamma2: Option<f64>,
    pub seed: u64,
    pub metrics: MetricReport,
    pub objective: Option<f64>,
    pub contrastive: Option<f64>,
    pub r_eff: Option<f64>,
    pub r_com: Option<f64>,
    pub iterations: Option<usize>,
    pub termination: Option<&'static str>,
    pub pg_norm: Option<f64>,
    pub lambda_k: f64,
    pub lambda_k_plus_1: f64,
    pub laplacian: Laplacian,
    pub trace: Option<SolveTrace>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stat {
    pub mean: f64,
    /// Sample standard deviation; zero for a single run.
    pub std: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodSummary {
    pub method: String,
    pub gamma1: Option<f64>,
    pub gamma2: Option<f64>,
    pub runs: usize,
    pub accuracy: Stat,
    pub purity: Stat,
    pub nmi: Stat,
    pub rand_index: Stat,
    pub adjusted_rand: Stat,
}

impl MethodSummary {
    fn of(records: &[&RunRecord]) -> Self {
        let stat = |f: fn(&MetricReport) -> f64| {
            Stat::of(&records.iter().map(|r| f(&r.metrics)).collect::<Vec<_>>())
        };
        let first = records[0];
        Self {
            method: first.method.name().to_owned(),
            gamma1: first.gamma1,
            gamma2: first.gamma2,
            runs: records.len(),
            accuracy: stat(|m| m.accuracy),
            purity: stat(|m| m.purity),
            nmi: stat(|m| m.nmi),
            rand_index: stat(|m| m.rand_index),
            adjusted_rand: stat(|m| m.adjusted_rand),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub dataset: String,
    pub n_nodes: usize,
    pub n_layers: usize,
    pub k_communities: usize,
    pub seeds: Vec<u64>,
    /// One entry per method; the proposed method at its selected grid point.
    pub methods: Vec<MethodSummary>,
    /// Every grid point of the proposed method, in grid order.
    pub grid: Vec<MethodSummary>,
    /// Index of the selected grid point (highest mean accuracy, first on ties).
    pub best_grid_index: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub records: Vec<RunRecord>,
    pub summary: Summary,
}

impl ExperimentOutput {
    pub fn method_summary(&self, name: &str) -> Option<&MethodSummary> {
        self.summary.methods.iter().find(|m| m.method == name)
    }
}

struct Job {
    method: Method,
    grid_index: Option<usize>,
    seed: u64,
}

fn dataset_for(cfg: &ExperimentConfig, seed: u64) -> Result<LabeledMultilayer> {
    match &cfg.dataset {
        DatasetConfig::Synthetic(spec) => generate_synthetic(&spec.clone().with_seed(seed)),
        DatasetConfig::File { path } => load_multilayer(path).map_err(|e| match e {
            Error::Io(io) => Error::Data(format!("cannot read {}: {io}", path.display())),
            other => other,
        }),
    }
}

fn run_job(
    job: &Job,
    data: &LabeledMultilayer,
    truth: &ClusterLabels,
    k: usize,
    cfg: &ExperimentConfig,
    grid: &[(f64, f64)],
) -> Result<RunRecord> {
    let g = &data.graph;
    let mut record = match job.method {
        Method::Proposed => {
            let gi = job.grid_index.expect("proposed jobs carry a grid index");
            let (gamma1, gamma2) = grid[gi];
            let hyper = HyperParams {
                gamma1,
                gamma2,
                k_communities: k,
                eig_floor: cfg.hyper.eig_floor,
            };
            let sol = solve(g, &hyper, &cfg.solver.to_solve_config(), job.seed)?;
            let last = *sol.trace.last().expect("trace has the starting point");
            RunRecord {
                method: job.method,
                grid_index: Some(gi),
                gamma1: Some(gamma1),
                gamma2: Some(gamma2),
                seed: job.seed,
                metrics: placeholder_metrics(),
                objective: Some(sol.eval.value),
                contrastive: Some(sol.eval.terms.contrastive),
                r_eff: Some(sol.eval.terms.r_eff),
                r_com: Some(sol.eval.terms.r_com),
                iterations: Some(sol.trace.records.len() - 1),
                termination: Some(sol.trace.termination.as_str()),
                pg_norm: Some(last.pg_norm),
                lambda_k: 0.0,
                lambda_k_plus_1: 0.0,
                laplacian: sol.weights.laplacian(),
                trace: Some(sol.trace),
            }
        }
        Method::Baseline(b) => RunRecord {
            method: job.method,
            grid_index: None,
            gamma1: None,
            gamma2: None,
            seed: job.seed,
            metrics: placeholder_metrics(),
            objective: None,
            contrastive: None,
            r_eff: None,
            r_com: None,
            iterations: None,
            termination: None,
            pg_norm: None,
            lambda_k: 0.0,
            lambda_k_plus_1: 0.0,
            laplacian: b.fuse(g)?,
            trace: None,
        },
    };
    let eig = eigendecompose(&record.laplacian)?;
    record.lambda_k = eig.eigenvalues()[k - 1];
    record.lambda_k_plus_1 = eig.eigenvalues().get(k).copied().unwrap_or(f64::NAN);
    let pred = spectral_clustering(&record.laplacian, k, job.seed)?;
    record.metrics = evaluate(&pred, truth)?;
    Ok(record)
}

fn placeholder_metrics() -> MetricReport {
    MetricReport {
        accuracy: 0.0,
        purity: 0.0,
        nmi: 0.0,
        rand_index: 0.0,
        adjusted_rand: 0.0,
    }
}

/// Runs every (method, grid point, seed) combination and returns the records
/// without touching the filesystem.
///
/// On a failed run the successful records are returned alongside the first
/// error so callers can still flush them.
pub fn execute(cfg: &ExperimentConfig) -> (Vec<RunRecord>, Option<Error>, Option<Summary>) {
    match execute_inner(cfg) {
        Ok((records, err, summary)) => (records, err, summary),
        Err(e) => (Vec::new(), Some(e), None),
    }
}

type Executed = (Vec<RunRecord>, Option<Error>, Option<Summary>);

fn execute_inner(cfg: &ExperimentConfig) -> Result<Executed> {
    cfg.validate()?;
    let methods = cfg.methods()?;
    let seeds = cfg.sorted_seeds();
    let grid = cfg.grid();

    // synthetic data differs per seed; a file is loaded once
    let datasets: Vec<LabeledMultilayer> = match &cfg.dataset {
        DatasetConfig::Synthetic(_) => seeds
            .iter()
            .map(|&s| dataset_for(cfg, s))
            .collect::<Result<_>>()?,
        DatasetConfig::File { .. } => vec![dataset_for(cfg, seeds[0])?],
    };
    let first = &datasets[0];
    let truth0 = first.require_truth()?;
    let k = cfg.hyper.k_communities.unwrap_or(truth0.n_clusters());
    let n = first.graph.n_nodes();
    if k >= n {
        return Err(Error::Config(format!(
            "k_communities={k} must be below the node count {n}"
        )));
    }

    let mut jobs = Vec::new();
    for &method in &methods {
        let grid_points: Vec<Option<usize>> = match method {
            Method::Proposed => (0..grid.len()).map(Some).collect(),
            Method::Baseline(_) => vec![None],
        };
        for gi in grid_points {
            for &seed in &seeds {
                jobs.push(Job {
                    method,
                    grid_index: gi,
                    seed,
                });
            }
        }
    }

    let results: Vec<Result<RunRecord>> = jobs
        .par_iter()
        .map(|job| {
            let data = match &cfg.dataset {
                DatasetConfig::Synthetic(_) => {
                    &datasets[seeds.binary_search(&job.seed).expect("seed listed")]
                }
                DatasetConfig::File { .. } => first,
            };
            let truth = data.require_truth()?;
            run_job(job, data, truth, k, cfg, &grid)
        })
        .collect();

    let mut records = Vec::with_capacity(results.len());
    let mut first_err = None;
    for r in results {
        match r {
            Ok(rec) => records.push(rec),
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    if first_err.is_some() {
        return Ok((records, first_err, None));
    }
    let summary = summarize(cfg, &methods, &seeds, &grid, first, k, &records);
    Ok((records, None, Some(summary)))
}

fn summarize(
    cfg: &ExperimentConfig,
    methods: &[Method],
    seeds: &[u64],
    grid: &[(f64, f64)],
    data: &LabeledMultilayer,
    k: usize,
    records: &[RunRecord],
) -> Summary {
    let mut grid_summaries = Vec::new();
    let mut best_grid_index = None;
    if methods.contains(&Method::Proposed) {
        for gi in 0..grid.len() {
            let rows: Vec<&RunRecord> = records
                .iter()
                .filter(|r| r.method == Method::Proposed && r.grid_index == Some(gi))
                .collect();
            grid_summaries.push(MethodSummary::of(&rows));
        }
        let mut best = 0;
        for (gi, s) in grid_summaries.iter().enumerate() {
            if s.accuracy.mean > grid_summaries[best].accuracy.mean {
                best = gi;
            }
        }
        best_grid_index = Some(best);
    }
    let method_summaries = methods
        .iter()
        .map(|m| match m {
            Method::Proposed => grid_summaries[best_grid_index.expect("proposed was run")].clone(),
            _ => {
                let rows: Vec<&RunRecord> = records.iter().filter(|r| r.method == *m).collect();
                MethodSummary::of(&rows)
            }
        })
        .collect();
    let dataset = match &cfg.dataset {
        DatasetConfig::Synthetic(spec) => format!(
            "synthetic: N={} S={} K={} knn={} dim={}",
            spec.n_nodes, spec.n_layers, spec.n_clusters, spec.knn_k, spec.dim
        ),
        DatasetConfig::File { .. } => data.provenance.clone(),
    };
    Summary {
        dataset,
        n_nodes: data.graph.n_nodes(),
        n_layers: data.graph.n_layers(),
        k_communities: k,
        seeds: seeds.to_vec(),
        methods: method_summaries,
        grid: grid_summaries,
        best_grid_index,
    }
}

pub const RESULTS_HEADER: [&str; 18] = [
    "method",
    "gamma1",
    "gamma2",
    "seed",
    "accuracy",
    "purity",
    "nmi",
    "rand_index",
    "adjusted_rand",
    "objective",
    "contrastive",
    "r_eff",
    "r_com",
    "iterations",
    "termination",
    "pg_norm",
    "lambda_k",
    "lambda_k_plus_1",
];

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn write_results(path: &Path, records: &[RunRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(RESULTS_HEADER).map_err(csv_err)?;
    for r in records {
        let m = &r.metrics;
        w.write_record([
            r.method.name().to_owned(),
            opt(r.gamma1),
            opt(r.gamma2),
            r.seed.to_string(),
            m.accuracy.to_string(),
            m.purity.to_string(),
            m.nmi.to_string(),
            m.rand_index.to_string(),
            m.adjusted_rand.to_string(),
            opt(r.objective),
            opt(r.contrastive),
            opt(r.r_eff),
            opt(r.r_com),
            opt(r.iterations),
            opt(r.termination),
            opt(r.pg_norm),
            r.lambda_k.to_string(),
            r.lambda_k_plus_1.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Data(format!("{other:?}")),
    }
}

fn write_adjacency(path: &Path, l: &Laplacian, order: &[usize]) -> Result<()> {
    let adj = l.adjacency();
    let mut out = String::from("node");
    for &j in order {
        write!(out, ",{j}").unwrap();
    }
    out.push('\n');
    for &i in order {
        write!(out, "{i}").unwrap();
        for &j in order {
            write!(out, ",{}", adj[(i, j)]).unwrap();
        }
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn write_trace(path: &Path, trace: &SolveTrace) -> Result<()> {
    let mut out = String::from("iteration,objective,contrastive,r_eff,r_com,step,pg_norm\n");
    for r in &trace.records {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.iteration, r.objective, r.contrastive, r.r_eff, r.r_com, r.step, r.pg_norm
        )
        .unwrap();
    }
    writeln!(out, "# termination: {}", trace.termination.as_str()).unwrap();
    std::fs::write(path, out)?;
    Ok(())
}

/// Runs the experiment and writes all artifacts. Successful rows are flushed
/// to `results.csv` even when a later run fails.
pub fn run(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let (records, err, summary) = execute(cfg);
    let dir = &cfg.output_dir;
    if !records.is_empty() || err.is_none() {
        std::fs::create_dir_all(dir)?;
        write_results(&dir.join("results.csv"), &records)?;
    }
    if let Some(e) = err {
        return Err(e);
    }
    let summary = summary.expect("summary exists when every run succeeded");
    std::fs::write(
        dir.join("summary.json"),
        serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n",
    )?;

    let lowest_seed = summary.seeds[0];
    let selected = |r: &&RunRecord| match r.method {
        Method::Proposed => r.grid_index == summary.best_grid_index,
        _ => true,
    };
    for rec in records.iter().filter(selected) {
        let order = match &cfg.dataset {
            DatasetConfig::Synthetic(spec) => spec.clone().with_seed(rec.seed).truth().ordering(),
            DatasetConfig::File { path } => load_multilayer(path)?.require_truth()?.ordering(),
        };
        if rec.seed == lowest_seed {
            write_adjacency(
                &dir.join(format!("adjacency_{}.csv", rec.method.name())),
                &rec.laplacian,
                &order,
            )?;
        }
        if let Some(trace) = &rec.trace {
            write_trace(
                &dir.join(format!("trace_{}_{}.csv", rec.method.name(), rec.seed)),
                trace,
            )?;
        }
    }
    Ok(ExperimentOutput { records, summary })
}
