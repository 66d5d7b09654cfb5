//! Central finite-difference check of the analytic gradients of the full
//! distillation objective.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{objective, LossWeights, TrainBundle};
use super::model::{DropoutMask, GcnHyper, GcnModel, GraphInput};
use super::{NormAdj, Result};

/// Gradients smaller than this are compared in absolute terms.
pub const REL_ERR_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradcheckOptions {
    pub instances: usize,
    pub seed: u64,
    pub step: f64,
    pub tolerance: f64,
    pub d_emb: usize,
    pub hidden: usize,
    pub max_nodes: usize,
    /// Test hook: perturbs one analytic gradient entry before comparing.
    pub corrupt: bool,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        Self {
            instances: 20,
            seed: 0,
            step: 1e-4,
            tolerance: 1e-4,
            d_emb: 4,
            hidden: 3,
            max_nodes: 6,
            corrupt: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub instances: usize,
    pub max_rel_err_w0: f64,
    pub max_rel_err_b0: f64,
    pub max_rel_err_w1: f64,
    pub max_rel_err_b1: f64,
    pub max_rel_err: f64,
    pub tolerance: f64,
    pub passed: bool,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERR_FLOOR)
}

/// A random small problem: graph, model, dropout mask and full bundle.
#[derive(Debug, Clone)]
pub struct GradcheckInstance {
    pub input: GraphInput,
    pub model: GcnModel,
    pub mask: Option<DropoutMask>,
    pub bundle: TrainBundle,
}

fn uniform_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
}

pub fn random_instance(opts: &GradcheckOptions, rng: &mut ChaCha8Rng) -> GradcheckInstance {
    let n = rng.random_range(2..=opts.max_nodes.max(2));
    let classes = rng.random_range(2..=3);
    let mut lists = vec![Vec::new(); n];
    for a in 0..n {
        for b in a + 1..n {
            if rng.random::<f64>() < 0.5 {
                lists[a].push(b);
                lists[b].push(a);
            }
        }
    }
    for l in &mut lists {
        l.sort_unstable();
    }
    let adj = NormAdj::from_neighbor_lists(&lists);
    let features = uniform_matrix(n, opts.d_emb, rng);
    let input = GraphInput::new(adj, features).expect("matching shapes");

    let hyper = GcnHyper {
        hidden: opts.hidden,
        dropout: 0.3,
    };
    let model = GcnModel::from_parts(
        uniform_matrix(opts.d_emb, opts.hidden, rng),
        Array1::from_shape_fn(opts.hidden, |_| rng.random_range(-0.5..0.5)),
        uniform_matrix(opts.hidden, classes, rng),
        Array1::from_shape_fn(classes, |_| rng.random_range(-0.5..0.5)),
        hyper,
    )
    .expect("consistent shapes");
    let mask = rng.random_bool(0.5).then(|| {
        Array2::from_shape_fn((n, opts.hidden), |_| {
            if rng.random::<f64>() < hyper.dropout {
                0.0
            } else {
                1.0 / (1.0 - hyper.dropout)
            }
        })
    });

    let mut node_ids: Vec<usize> = (0..n).filter(|_| rng.random_bool(0.7)).collect();
    if node_ids.is_empty() {
        node_ids.push(rng.random_range(0..n));
    }
    let hard_labels = node_ids
        .iter()
        .map(|_| rng.random_range(0..classes))
        .collect();
    let probs = node_ids
        .iter()
        .map(|_| {
            let raw: Vec<f64> = (0..classes).map(|_| rng.random_range(0.01..1.0)).collect();
            let s: f64 = raw.iter().sum();
            raw.into_iter().map(|x| x / s).collect()
        })
        .collect();
    let targets = node_ids
        .iter()
        .map(|_| (0..classes).map(|_| rng.random_range(-2.0..2.0)).collect())
        .collect();
    let weights = LossWeights {
        alpha: rng.random_range(0.0..0.5),
        beta: rng.random_range(0.0..0.45),
        tau: 3.0,
    };
    let bundle = TrainBundle::new(node_ids, hard_labels, Some(probs), Some(targets), weights)
        .expect("valid random bundle");
    GradcheckInstance {
        input,
        model,
        mask,
        bundle,
    }
}

fn loss_at(inst: &GradcheckInstance, model: &GcnModel) -> Result<f64> {
    let pass = model.forward_masked(&inst.input, inst.mask.clone())?;
    Ok(objective(&pass.hf, &pass.z, &inst.bundle)?.total)
}

/// Per-parameter-block maximum relative error for one instance.
pub fn check_instance(inst: &GradcheckInstance, step: f64, corrupt: bool) -> Result<[f64; 4]> {
    let pass = inst.model.forward_masked(&inst.input, inst.mask.clone())?;
    let mut grads = inst.model.backward(&inst.input, &pass, &inst.bundle)?;
    if corrupt {
        grads.w0[[0, 0]] += 1e-2;
    }
    let analytic = [
        grads.w0.iter().copied().collect::<Vec<_>>(),
        grads.b0.to_vec(),
        grads.w1.iter().copied().collect(),
        grads.b1.to_vec(),
    ];
    let mut worst = [0.0f64; 4];
    for (block, block_grads) in analytic.iter().enumerate() {
        for (i, &a) in block_grads.iter().enumerate() {
            let mut plus = inst.model.clone();
            plus.params_mut()[block][i] += step;
            let mut minus = inst.model.clone();
            minus.params_mut()[block][i] -= step;
            let numeric = (loss_at(inst, &plus)? - loss_at(inst, &minus)?) / (2.0 * step);
            worst[block] = worst[block].max(relative_error(a, numeric));
        }
    }
    Ok(worst)
}

pub fn run_gradcheck(opts: &GradcheckOptions) -> Result<GradcheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut worst = [0.0f64; 4];
    for _ in 0..opts.instances {
        let inst = random_instance(opts, &mut rng);
        let errs = check_instance(&inst, opts.step, opts.corrupt)?;
        for (w, e) in worst.iter_mut().zip(errs) {
            *w = w.max(e);
        }
    }
    let max = worst.iter().copied().fold(0.0, f64::max);
    Ok(GradcheckReport {
        instances: opts.instances,
        max_rel_err_w0: worst[0],
        max_rel_err_b0: worst[1],
        max_rel_err_w1: worst[2],
        max_rel_err_b1: worst[3],
        max_rel_err: max,
        tolerance: opts.tolerance,
        passed: max < opts.tolerance,
    })
}
