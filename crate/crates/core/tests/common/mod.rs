//! Independent dense reference implementations used as test oracles. They
//! share no code paths with the library beyond plain data accessors.

#![allow(dead_code)]

use graphdistill::gnn::{GcnHyper, GcnModel, GnnError, LossWeights, TrainBundle};
use graphdistill::graph::TextGraph;
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Mat = Vec<Vec<f64>>;

/// `D^-1/2 (A + I) D^-1/2` as a dense matrix.
pub fn dense_norm_adj(n: usize, edges: &[(usize, usize)]) -> Mat {
    let mut a = vec![vec![0.0; n]; n];
    for (i, row) in a.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for &(u, v) in edges {
        if u != v {
            a[u][v] = 1.0;
            a[v][u] = 1.0;
        }
    }
    let deg: Vec<f64> = a.iter().map(|r| r.iter().sum()).collect();
    (0..n)
        .map(|i| (0..n).map(|j| a[i][j] / (deg[i] * deg[j]).sqrt()).collect())
        .collect()
}

pub fn matmul(a: &Mat, b: &Mat) -> Mat {
    let inner = b.len();
    let cols = if inner == 0 { 0 } else { b[0].len() };
    a.iter()
        .map(|row| {
            (0..cols)
                .map(|j| (0..inner).map(|k| row[k] * b[k][j]).sum())
                .collect()
        })
        .collect()
}

pub fn to_mat(m: &Array2<f64>) -> Mat {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

pub fn softmax(row: &[f64]) -> Vec<f64> {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = row.iter().map(|x| (x - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

pub fn shannon(p: &[f64]) -> f64 {
    p.iter().filter(|&&x| x > 0.0).map(|&x| -x * x.ln()).sum()
}

/// Two-layer GCN forward pass: returns `(H^f, Z)`.
pub fn dense_forward(adj: &Mat, x: &Mat, m: &GcnModel, mask: Option<&Array2<f64>>) -> (Mat, Mat) {
    let xw = matmul(x, &to_mat(&m.w0));
    let mut h1 = matmul(adj, &xw);
    for (i, row) in h1.iter_mut().enumerate() {
        for (j, h) in row.iter_mut().enumerate() {
            *h = (*h + m.b0[j]).max(0.0);
            if let Some(mask) = mask {
                *h *= mask[[i, j]];
            }
        }
    }
    let mut hf = matmul(&matmul(adj, &h1), &to_mat(&m.w1));
    for row in &mut hf {
        for (j, h) in row.iter_mut().enumerate() {
            *h += m.b1[j];
        }
    }
    let z = hf.iter().map(|r| softmax(r)).collect();
    (hf, z)
}

/// `(1 - a - b) L_S + a L_T + b L_F` with node means and per-dimension MSE.
pub fn dense_objective(hf: &Mat, z: &Mat, bundle: &TrainBundle) -> f64 {
    let n = bundle.node_ids.len() as f64;
    let w = bundle.weights;
    let mut ls = 0.0;
    let mut lt = 0.0;
    let mut lf = 0.0;
    for (k, (&v, &y)) in bundle.node_ids.iter().zip(&bundle.hard_labels).enumerate() {
        ls -= z[v][y].ln();
        if let Some(p) = &bundle.teacher_probs {
            lt -= p[k].iter().zip(&z[v]).map(|(p, q)| p * q.ln()).sum::<f64>();
        }
        if let Some(r) = &bundle.rationale_targets {
            let c = r[k].len() as f64;
            lf += r[k]
                .iter()
                .zip(&hf[v])
                .map(|(t, h)| (h - t).powi(2))
                .sum::<f64>()
                / c;
        }
    }
    (1.0 - w.alpha - w.beta) * ls / n + w.alpha * lt / n + w.beta * lf / n
}

/// Entropy change over `v`'s neighbors when every edge touching `v` is
/// removed, from two full forward passes.
pub fn brute_entropy_reduction(g: &TextGraph, m: &GcnModel, v: usize) -> f64 {
    let n = g.num_nodes();
    let x = to_mat(g.embeddings());
    let neighbors: Vec<usize> = g
        .edges()
        .iter()
        .filter_map(|&(a, b)| match (a == v, b == v) {
            (true, _) => Some(b),
            (_, true) => Some(a),
            _ => None,
        })
        .collect();
    let kept: Vec<(usize, usize)> = g
        .edges()
        .iter()
        .copied()
        .filter(|&(a, b)| a != v && b != v)
        .collect();
    let (_, z) = dense_forward(&dense_norm_adj(n, g.edges()), &x, m, None);
    let (_, z_cut) = dense_forward(&dense_norm_adj(n, &kept), &x, m, None);
    neighbors
        .iter()
        .map(|&u| shannon(&z_cut[u]) - shannon(&z[u]))
        .sum()
}

/// Rank score by counting: the number of entries that sort before `i`
/// under `(value, id)` with ids ascending on ties, divided by `n`.
pub fn counted_rank(values: &[f64], ids: &[usize], descending: bool) -> Vec<f64> {
    let n = values.len();
    (0..n)
        .map(|i| {
            let before = (0..n)
                .filter(|&j| {
                    let ahead = if descending {
                        values[j] > values[i]
                    } else {
                        values[j] < values[i]
                    };
                    ahead || (values[j] == values[i] && ids[j] < ids[i])
                })
                .count();
            before as f64 / n as f64
        })
        .collect()
}

/// Random graph with `n` nodes, Gaussian features and uniform labels.
pub fn random_graph(
    rng: &mut ChaCha8Rng,
    n: usize,
    d: usize,
    classes: usize,
    p_edge: f64,
) -> TextGraph {
    let mut edges = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            if rng.random::<f64>() < p_edge {
                edges.push((a, b));
            }
        }
    }
    let emb = Array2::from_shape_fn((n, d), |_| rng.random_range(-1.0..1.0));
    let labels = (0..n).map(|_| Some(rng.random_range(0..classes))).collect();
    let texts = (0..n).map(|v| Some(format!("node {v}"))).collect();
    let names = (0..classes).map(|c| format!("class_{c}")).collect();
    TextGraph::new(names, edges, emb, labels, texts).expect("valid random graph")
}

/// Model with uniform random weights and biases.
pub fn random_model(
    rng: &mut ChaCha8Rng,
    d: usize,
    hidden: usize,
    classes: usize,
    scale: f64,
) -> GcnModel {
    let mut u =
        |r: usize, c: usize| Array2::from_shape_fn((r, c), |_| rng.random_range(-scale..scale));
    let w0 = u(d, hidden);
    let b0 = u(1, hidden).row(0).to_owned();
    let w1 = u(hidden, classes);
    let b1: Array1<f64> = u(1, classes).row(0).to_owned();
    GcnModel::from_parts(
        w0,
        b0,
        w1,
        b1,
        GcnHyper {
            hidden,
            dropout: 0.5,
        },
    )
    .expect("shapes")
}

pub type Problem = (TextGraph, GcnModel, Option<Array2<f64>>, TrainBundle);

/// Small instance for gradient checks: graph with at most 6 nodes,
/// `d_emb = 4`, `hidden = 3`, 2 or 3 classes, optional dropout mask and a
/// bundle carrying all three loss terms.
pub fn random_problem(rng: &mut ChaCha8Rng) -> Result<Problem, GnnError> {
    let n = rng.random_range(2..=6);
    let classes = rng.random_range(2..=3);
    let g = random_graph(rng, n, 4, classes, 0.5);
    let model = random_model(rng, 4, 3, classes, 1.0);
    let mask = rng.random_bool(0.5).then(|| {
        Array2::from_shape_fn(
            (n, 3),
            |_| if rng.random_bool(0.3) { 0.0 } else { 1.0 / 0.7 },
        )
    });
    let mut nodes: Vec<usize> = (0..n).filter(|_| rng.random_bool(0.7)).collect();
    if nodes.is_empty() {
        nodes.push(0);
    }
    let labels = nodes.iter().map(|_| rng.random_range(0..classes)).collect();
    let probs = nodes
        .iter()
        .map(|_| {
            let raw: Vec<f64> = (0..classes).map(|_| rng.random_range(0.01..1.0)).collect();
            let s: f64 = raw.iter().sum();
            raw.iter().map(|x| x / s).collect()
        })
        .collect();
    let targets = nodes
        .iter()
        .map(|_| (0..classes).map(|_| rng.random_range(-2.0..2.0)).collect())
        .collect();
    let weights = LossWeights {
        alpha: rng.random_range(0.0..0.5),
        beta: rng.random_range(0.0..0.45),
        tau: 3.0,
    };
    let bundle = TrainBundle::new(nodes, labels, Some(probs), Some(targets), weights)?;
    Ok((g, model, mask, bundle))
}

/// Largest relative error between analytic gradients and central finite
/// differences of the dense objective.
pub fn max_fd_error(
    g: &TextGraph,
    model: &GcnModel,
    mask: Option<&Array2<f64>>,
    bundle: &TrainBundle,
    analytic: [Vec<f64>; 4],
    h: f64,
) -> f64 {
    let adj = dense_norm_adj(g.num_nodes(), g.edges());
    let x = to_mat(g.embeddings());
    let loss = |m: &GcnModel| {
        let (hf, z) = dense_forward(&adj, &x, m, mask);
        dense_objective(&hf, &z, bundle)
    };
    let mut worst = 0.0f64;
    for (block, a) in analytic.iter().enumerate() {
        for (i, &ai) in a.iter().enumerate() {
            let mut plus = model.clone();
            plus.params_mut()[block][i] += h;
            let mut minus = model.clone();
            minus.params_mut()[block][i] -= h;
            let numeric = (loss(&plus) - loss(&minus)) / (2.0 * h);
            let err = (ai - numeric).abs() / ai.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max(err);
        }
    }
    worst
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
