use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mlgraph::baselines::arithmetic_mean;
use mlgraph::clustering::{evaluate_slices, spectral_clustering};
use mlgraph::data::{parse_multilayer, to_text};
use mlgraph::graph::{
    edge_count, edge_index, edge_pair, knn_layer, pairs, EdgeWeights, Laplacian, Layer,
    MultilayerGraph,
};
use mlgraph::objective::{contrastive, r_com, r_eff, softmax_rows, HyperParams, Objective};
use mlgraph::optimizer::{solve, InitMode, SolveConfig, Termination};
use mlgraph::spectral::{
    effective_resistance_matrix, eigendecompose, pseudoinverse, pseudoinverse_shifted,
};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Sparse nonnegative weights: roughly `zero_frac` of entries are exactly zero.
fn sparse_weights(r: &mut ChaCha8Rng, n: usize, zero_frac: f64) -> EdgeWeights {
    let w = (0..edge_count(n))
        .map(|_| {
            if r.random_bool(zero_frac) {
                0.0
            } else {
                r.random_range(0.0..3.0)
            }
        })
        .collect();
    EdgeWeights::new(n, w).unwrap()
}

fn connected_weights(r: &mut ChaCha8Rng, n: usize) -> EdgeWeights {
    let mut w = sparse_weights(r, n, 0.7).into_vec();
    for i in 1..n {
        let j = r.random_range(0..i);
        w[edge_index(j, i, n).unwrap()] = r.random_range(0.2..2.0);
    }
    EdgeWeights::new(n, w).unwrap()
}

fn random_layer(r: &mut ChaCha8Rng, name: &str, n: usize, p: f64) -> Layer {
    let edges: Vec<_> = pairs(n).filter(|_| r.random_bool(p)).collect();
    Layer::from_edges(name, n, edges).unwrap()
}

fn permute_weights(w: &EdgeWeights, perm: &[usize]) -> EdgeWeights {
    let n = w.n_nodes();
    let mut out = vec![0.0; w.len()];
    for (e, (i, j)) in pairs(n).enumerate() {
        let (a, b) = (perm[i].min(perm[j]), perm[i].max(perm[j]));
        out[edge_index(a, b, n).unwrap()] = w.as_slice()[e];
    }
    EdgeWeights::new(n, out).unwrap()
}

fn permute_layer(l: &Layer, perm: &[usize]) -> Layer {
    let edges: Vec<_> = l
        .edges()
        .map(|(i, j)| (perm[i].min(perm[j]), perm[i].max(perm[j])))
        .collect();
    Layer::from_edges(l.name(), l.n_nodes(), edges).unwrap()
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |a: f64, &x| a.max(x.abs()))
}

fn relative_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

/// Central differences of `f` over every coordinate of `w`.
fn numeric_gradient(w: &EdgeWeights, f: impl Fn(&EdgeWeights) -> f64) -> Vec<f64> {
    let h = 1e-6;
    (0..w.len())
        .map(|e| {
            let at = |d: f64| {
                let mut v = w.as_slice().to_vec();
                v[e] += d;
                f(&EdgeWeights::new(w.n_nodes(), v).unwrap())
            };
            (at(h) - at(-h)) / (2.0 * h)
        })
        .collect()
}

fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt();
    let scale: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    diff / scale.max(1e-12)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn laplacian_round_trip_is_bit_exact(n in 1usize..16, seed: u64) {
        let w = sparse_weights(&mut rng(seed), n, 0.4);
        let back = w.laplacian().to_weights().unwrap();
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(back.as_slice()), bits(w.as_slice()));
    }

    #[test]
    fn laplacian_rows_sum_to_zero(n in 1usize..16, seed: u64) {
        let w = sparse_weights(&mut rng(seed), n, 0.3);
        let l = w.laplacian();
        let m = l.matrix();
        for i in 0..n {
            let off: f64 = (0..n).filter(|&j| j != i).map(|j| m[(i, j)]).sum();
            prop_assert_eq!(m[(i, i)], -off);
            let row: f64 = m.row(i).iter().sum();
            prop_assert!(row.abs() <= 1e-12 * n as f64);
            for j in 0..n {
                prop_assert_eq!(m[(i, j)], m[(j, i)]);
                if i != j {
                    prop_assert!(m[(i, j)] <= 0.0);
                }
            }
        }
        prop_assert!(Laplacian::from_matrix(m.clone()).is_ok());
    }

    #[test]
    fn edge_index_is_a_bijection(n in 1usize..40) {
        let mut seen = vec![false; edge_count(n)];
        for (i, j) in pairs(n) {
            let e = edge_index(i, j, n).unwrap();
            prop_assert!(!seen[e]);
            seen[e] = true;
            prop_assert_eq!(edge_pair(e, n).unwrap(), (i, j));
        }
        prop_assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn knn_layer_is_symmetric_and_binary(n in 2usize..30, k_frac in 0.0f64..1.0, seed: u64) {
        let mut r = rng(seed);
        let k = 1 + ((n - 2) as f64 * k_frac) as usize;
        let points = DMatrix::from_fn(n, 2, |_, _| r.random_range(-5.0..5.0));
        let layer = knn_layer(&points, k).unwrap();
        let a = layer.adjacency();
        for i in 0..n {
            prop_assert_eq!(a[(i, i)], 0.0);
            prop_assert!(layer.degree(i) >= k);
            for j in 0..n {
                prop_assert!(a[(i, j)] == 0.0 || a[(i, j)] == 1.0);
                prop_assert_eq!(a[(i, j)], a[(j, i)]);
                prop_assert_eq!(layer.neighbors(i).contains(&j), layer.neighbors(j).contains(&i));
            }
        }
    }

    #[test]
    fn eigendecomposition_contract(n in 1usize..20, seed: u64) {
        let l = sparse_weights(&mut rng(seed), n, 0.5).laplacian();
        let eig = eigendecompose(&l).unwrap();
        let u = eig.eigenvectors();
        prop_assert!(max_abs(&(u.transpose() * u - DMatrix::identity(n, n))) <= 1e-8);
        let scale = max_abs(l.matrix()).max(1.0);
        prop_assert!(max_abs(&(l.matrix() - eig.reconstruct())) <= 1e-8 * scale);
        prop_assert!(eig.eigenvalues()[0] >= -1e-10);
        for p in eig.eigenvalues().as_slice().windows(2) {
            prop_assert!(p[0] <= p[1]);
        }
    }

    #[test]
    fn pseudoinverse_identities(n in 2usize..20, seed: u64) {
        let l = connected_weights(&mut rng(seed), n).laplacian();
        let p = pseudoinverse(&l).unwrap();
        let lm = l.matrix();
        prop_assert!(max_abs(&(lm * &p * lm - lm)) <= 1e-8 * max_abs(lm));
        prop_assert!(max_abs(&(&p * lm * &p - &p)) <= 1e-8 * max_abs(&p));
        let shifted = pseudoinverse_shifted(&l).unwrap();
        prop_assert!(max_abs(&(&p - shifted)) <= 1e-8 * max_abs(&p).max(1.0));
    }

    #[test]
    fn adding_weight_never_raises_resistance(n in 2usize..15, seed: u64, delta in 0.01f64..3.0) {
        let mut r = rng(seed);
        let w = connected_weights(&mut r, n);
        let before = effective_resistance_matrix(&w.laplacian()).unwrap();
        let mut v = w.as_slice().to_vec();
        let e = r.random_range(0..v.len());
        v[e] += delta;
        let after = effective_resistance_matrix(&EdgeWeights::new(n, v).unwrap().laplacian()).unwrap();
        for (a, b) in after.iter().zip(before.iter()) {
            prop_assert!(*a <= b + 1e-9 * b.abs().max(1.0));
        }
    }

    #[test]
    fn softmax_ignores_constant_shift(n in 2usize..15, seed: u64, c in -50.0f64..50.0) {
        let adj = sparse_weights(&mut rng(seed), n, 0.3).adjacency();
        let shifted = DMatrix::from_fn(n, n, |i, j| if i == j { adj[(i, j)] } else { adj[(i, j)] + c });
        let (p, q) = (softmax_rows(&adj), softmax_rows(&shifted));
        prop_assert!(max_abs(&(p - q)) <= 1e-12);
    }

    #[test]
    fn objective_terms_are_permutation_equivariant(n in 4usize..12, seed: u64) {
        let mut r = rng(seed);
        let w = connected_weights(&mut r, n);
        let g = MultilayerGraph::new(vec![
            random_layer(&mut r, "a", n, 0.4),
            random_layer(&mut r, "b", n, 0.3),
        ]).unwrap();
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut r);
        let pw = permute_weights(&w, &perm);
        let pg = MultilayerGraph::new(g.layers().iter().map(|l| permute_layer(l, &perm)).collect()).unwrap();
        let k = 1 + r.random_range(0..n - 1);
        prop_assert!(relative_gap(r_eff(&w, k).unwrap().value, r_eff(&pw, k).unwrap().value) <= 1e-9);
        prop_assert!(relative_gap(r_com(&w, k).unwrap().value, r_com(&pw, k).unwrap().value) <= 1e-9);
        prop_assert!(relative_gap(contrastive(&w, &g).unwrap().value, contrastive(&pw, &pg).unwrap().value) <= 1e-12);
        let am = arithmetic_mean(&g).to_weights().unwrap();
        prop_assert_eq!(permute_weights(&am, &perm), arithmetic_mean(&pg).to_weights().unwrap());
    }

    #[test]
    fn arithmetic_mean_is_a_laplacian(n in 2usize..15, s in 1usize..5, seed: u64) {
        let mut r = rng(seed);
        let layers = (0..s).map(|t| random_layer(&mut r, &format!("l{t}"), n, 0.3)).collect();
        let l = arithmetic_mean(&MultilayerGraph::new(layers).unwrap());
        prop_assert!(Laplacian::from_matrix(l.matrix().clone()).is_ok());
    }

    #[test]
    fn metrics_ignore_label_names(n in 2usize..40, seed: u64) {
        let mut r = rng(seed);
        let truth: Vec<usize> = (0..n).map(|_| r.random_range(0..4)).collect();
        let pred: Vec<usize> = (0..n).map(|_| r.random_range(0..4)).collect();
        let mut names: Vec<usize> = (0..4).collect();
        names.shuffle(&mut r);
        let renamed: Vec<usize> = pred.iter().map(|&p| names[p] + 10).collect();
        let (a, b) = (evaluate_slices(&pred, &truth).unwrap(), evaluate_slices(&renamed, &truth).unwrap());
        prop_assert!((a.accuracy - b.accuracy).abs() <= 1e-12);
        prop_assert!((a.purity - b.purity).abs() <= 1e-12);
        prop_assert!((a.nmi - b.nmi).abs() <= 1e-12);
        prop_assert!((a.rand_index - b.rand_index).abs() <= 1e-12);
        prop_assert!((a.adjusted_rand - b.adjusted_rand).abs() <= 1e-12);
        for v in [a.accuracy, a.purity, a.nmi, a.rand_index] {
            prop_assert!((0.0..=1.0 + 1e-12).contains(&v));
        }
        prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&a.adjusted_rand));
    }

    #[test]
    fn purity_is_at_least_inverse_cluster_count(k in 1usize..6, per in 1usize..8, seed: u64) {
        let mut r = rng(seed);
        let truth: Vec<usize> = (0..k * per).map(|i| i / per).collect();
        let pred: Vec<usize> = truth.iter().map(|_| r.random_range(0..k)).collect();
        prop_assert!(evaluate_slices(&pred, &truth).unwrap().purity >= 1.0 / k as f64 - 1e-12);
    }

    #[test]
    fn spectral_clustering_recovers_components(k in 1usize..5, seed: u64) {
        let mut r = rng(seed);
        let sizes: Vec<usize> = (0..k).map(|_| r.random_range(2..7)).collect();
        let n: usize = sizes.iter().sum();
        let mut nodes: Vec<usize> = (0..n).collect();
        nodes.shuffle(&mut r);
        let mut truth = vec![0; n];
        let mut w = vec![0.0; edge_count(n)];
        let mut start = 0;
        for (c, &s) in sizes.iter().enumerate() {
            let block = &nodes[start..start + s];
            let sub = connected_weights(&mut r, s);
            for (e, (a, b)) in pairs(s).enumerate() {
                let (i, j) = (block[a].min(block[b]), block[a].max(block[b]));
                w[edge_index(i, j, n).unwrap()] = sub.as_slice()[e];
            }
            for &v in block {
                truth[v] = c;
            }
            start += s;
        }
        let l = EdgeWeights::new(n, w).unwrap().laplacian();
        let pred = spectral_clustering(&l, k, seed).unwrap();
        prop_assert_eq!(evaluate_slices(pred.as_slice(), &truth).unwrap().accuracy, 1.0);
    }

    #[test]
    fn text_format_round_trip(n in 1usize..25, s in 1usize..4, seed: u64, with_ids: bool) {
        let mut r = rng(seed);
        let layers = (0..s).map(|t| random_layer(&mut r, &format!("rel{t}"), n, 0.3)).collect();
        let mut g = MultilayerGraph::new(layers).unwrap();
        if with_ids {
            g = g.with_node_ids((0..n).map(|i| format!("u{i}")).collect()).unwrap();
        }
        let text = to_text(&g, None).unwrap();
        let (back, truth) = parse_multilayer(&text).unwrap();
        prop_assert_eq!(&back, &g);
        prop_assert!(truth.is_none());
        prop_assert_eq!(to_text(&back, None).unwrap(), text);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn term_gradients_match_finite_differences(n in 4usize..10, seed: u64) {
        let mut r = rng(seed);
        let w: Vec<f64> = (0..edge_count(n)).map(|_| r.random_range(0.05..1.5)).collect();
        let w = EdgeWeights::new(n, w).unwrap();
        let k = 1 + r.random_range(0..n - 2);
        let lambdas = eigendecompose(&w.laplacian()).unwrap().eigenvalues().clone();
        prop_assume!((lambdas[k] - lambdas[k - 1]).abs() > 1e-3);
        let g = MultilayerGraph::new(vec![
            random_layer(&mut r, "a", n, 0.5),
            random_layer(&mut r, "b", n, 0.5),
        ]).unwrap();

        let c = contrastive(&w, &g).unwrap();
        let fd = numeric_gradient(&w, |v| contrastive(v, &g).unwrap().value);
        prop_assert!(relative_error(&c.gradient, &fd) <= 1e-5);

        let e = r_eff(&w, k).unwrap();
        let fd = numeric_gradient(&w, |v| r_eff(v, k).unwrap().value);
        prop_assert!(relative_error(&e.gradient, &fd) <= 1e-5);

        let m = r_com(&w, k).unwrap();
        let fd = numeric_gradient(&w, |v| r_com(v, k).unwrap().value);
        prop_assert!(relative_error(&m.gradient, &fd) <= 1e-5);

        let h = HyperParams::new(0.3, 0.7, k);
        let f = Objective::new(&g, h).unwrap();
        let full = f.eval(&w).unwrap();
        let combined: Vec<f64> = (0..w.len())
            .map(|i| c.gradient[i] + 0.3 * e.gradient[i] + 0.7 * m.gradient[i])
            .collect();
        prop_assert!(relative_error(&full.gradient, &combined) <= 1e-12);
    }

    #[test]
    fn solver_iterates_are_feasible_and_descending(n in 4usize..10, seed: u64, g1 in 0.0f64..1.0, g2 in 0.0f64..10.0) {
        let mut r = rng(seed);
        let g = MultilayerGraph::new(vec![
            random_layer(&mut r, "a", n, 0.5),
            random_layer(&mut r, "b", n, 0.3),
        ]).unwrap();
        let h = HyperParams::new(g1, g2, 2);
        let cfg = SolveConfig { max_iters: 200, init: InitMode::Uniform, ..SolveConfig::default() };
        let sol = solve(&g, &h, &cfg, seed).unwrap();
        prop_assert!(sol.weights.as_slice().iter().all(|&x| x >= 0.0));
        for p in sol.trace.records.windows(2) {
            prop_assert!(p[1].objective <= p[0].objective);
        }
        let again = solve(&g, &h, &cfg, seed).unwrap();
        prop_assert_eq!(&again.trace, &sol.trace);
        prop_assert_eq!(&again.weights, &sol.weights);
    }
}

#[test]
fn adjusted_rand_of_random_labelings_averages_zero() {
    let mut r = rng(11);
    let mut total = 0.0;
    for _ in 0..1000 {
        let truth: Vec<usize> = (0..60).map(|_| r.random_range(0..4)).collect();
        let pred: Vec<usize> = (0..60).map(|_| r.random_range(0..4)).collect();
        total += evaluate_slices(&pred, &truth).unwrap().adjusted_rand;
    }
    let mean = total / 1000.0;
    assert!(mean.abs() < 0.02, "mean ARI {mean}");
}

#[test]
fn complete_graph_gives_equal_weights() {
    let layer = Layer::from_edges("k5", 5, pairs(5)).unwrap();
    let g = MultilayerGraph::new(vec![layer]).unwrap();
    let sol = solve(
        &g,
        &HyperParams::new(0.0, 0.0, 1),
        &SolveConfig::default(),
        0,
    )
    .unwrap();
    assert_eq!(sol.trace.termination, Termination::Converged);
    assert!(sol.trace.last().unwrap().pg_norm <= 1e-5);
    let w = sol.weights.as_slice();
    let spread =
        w.iter().cloned().fold(f64::MIN, f64::max) - w.iter().cloned().fold(f64::MAX, f64::min);
    assert!(spread <= 1e-6, "spread {spread}");
}

#[test]
fn two_cliques_split_into_two_communities() {
    let edges: Vec<_> = pairs(10).filter(|&(i, j)| (i < 5) == (j < 5)).collect();
    let g = MultilayerGraph::new(vec![Layer::from_edges("cliques", 10, edges).unwrap()]).unwrap();
    let sol = solve(
        &g,
        &HyperParams::new(0.1, 10.0, 2),
        &SolveConfig::default(),
        0,
    )
    .unwrap();
    let eig = eigendecompose(&sol.weights.laplacian()).unwrap();
    assert!(eig.eigenvalues()[1] <= 1e-3);
    assert!(eig.eigenvalues()[2] >= 0.1);
}

#[test]
fn solver_fixed_point_returns_start_unchanged() {
    let mut r = rng(5);
    let g = MultilayerGraph::new(vec![
        random_layer(&mut r, "a", 8, 0.5),
        random_layer(&mut r, "b", 8, 0.5),
    ])
    .unwrap();
    let h = HyperParams::new(0.1, 1.0, 2);
    let first = solve(&g, &h, &SolveConfig::default(), 0).unwrap();
    assert_eq!(first.trace.termination, Termination::Converged);
    let start = first.weights.as_slice().to_vec();
    let cfg = SolveConfig {
        init: InitMode::Custom(start.clone()),
        ..SolveConfig::default()
    };
    let second = solve(&g, &h, &cfg, 0).unwrap();
    assert_eq!(second.weights.as_slice(), &start[..]);
    assert_eq!(second.trace.records.len(), 1);
    assert_eq!(second.trace.termination, Termination::Converged);
}

#[test]
fn layer_mean_start_is_connected() {
    let g = MultilayerGraph::new(vec![Layer::from_edges("empty", 6, []).unwrap()]).unwrap();
    let cfg = SolveConfig {
        max_iters: 1,
        grad_tol: 1e300,
        ..SolveConfig::default()
    };
    let sol = solve(&g, &HyperParams::new(1.0, 0.0, 1), &cfg, 0).unwrap();
    assert!(sol.weights.as_slice().iter().all(|&x| x > 0.0));
    assert!(
        eigendecompose(&sol.weights.laplacian())
            .unwrap()
            .eigenvalues()[1]
            > 0.0
    );
}
