use std::io::Write;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{objective, TrainBundle};
use super::model::{argmax_rows, GcnModel, Gradients, GraphInput, Mode};
use super::{GnnError, Result};
use crate::graph::NodeId;
use crate::optim::Adam;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub lr: f64,
    pub epochs: usize,
    pub patience: usize,
    /// L2 penalty added to weight-matrix gradients (biases exempt).
    pub weight_decay: f64,
    /// Seeds the dropout generator.
    pub seed: u64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            lr: 0.01,
            epochs: 300,
            patience: 30,
            weight_decay: 5e-4,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss_total: f64,
    pub loss_s: f64,
    pub loss_t: f64,
    pub loss_f: f64,
    pub val_acc: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were kept (1-based, 0 = initial parameters).
    pub best_epoch: usize,
    pub best_val_acc: f64,
}

impl History {
    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    /// `epoch,loss_total,loss_S,loss_T,loss_F,val_acc`
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "epoch,loss_total,loss_S,loss_T,loss_F,val_acc")?;
        for r in &self.epochs {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                r.epoch, r.loss_total, r.loss_s, r.loss_t, r.loss_f, r.val_acc
            )?;
        }
        Ok(())
    }
}

/// Nodes and ground-truth labels used for early stopping.
#[derive(Debug, Clone, Copy)]
pub struct Validation<'a> {
    pub nodes: &'a [NodeId],
    pub labels: &'a [usize],
}

/// Fraction of `nodes` whose row argmax equals the label.
pub fn accuracy(z: &Array2<f64>, nodes: &[NodeId], labels: &[usize]) -> f64 {
    if nodes.is_empty() {
        return 0.0;
    }
    let pred = argmax_rows(z);
    let hits = nodes
        .iter()
        .zip(labels)
        .filter(|(&v, &y)| pred[v] == y)
        .count();
    hits as f64 / nodes.len() as f64
}

/// Full-batch Adam with early stopping on validation accuracy. Returns the
/// parameters with the best validation accuracy (earliest on ties).
pub fn train(
    mut model: GcnModel,
    input: &GraphInput,
    bundle: &TrainBundle,
    val: Validation<'_>,
    opts: &TrainOptions,
) -> Result<(GcnModel, History)> {
    let mut history = History::default();
    if opts.epochs == 0 {
        return Ok((model, history));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let sizes = [
        model.w0.len(),
        model.b0.len(),
        model.w1.len(),
        model.b1.len(),
    ];
    let wd = opts.weight_decay;
    let mut adam = Adam::new(&sizes, opts.lr, vec![wd, 0.0, wd, 0.0]);
    let mut best = model.clone();
    let mut best_acc = f64::NEG_INFINITY;
    let mut since_best = 0;

    for epoch in 1..=opts.epochs {
        let pass = model.forward(input, Mode::Train(&mut rng))?;
        let losses = objective(&pass.hf, &pass.z, bundle)?;
        if !losses.total.is_finite() {
            return Err(GnnError::Diverged { epoch });
        }
        let grads = model.backward(input, &pass, bundle)?;
        step(&mut adam, &mut model, &grads);

        let z = model.predict(input)?;
        let val_acc = accuracy(&z, val.nodes, val.labels);
        history.epochs.push(EpochRecord {
            epoch,
            loss_total: losses.total,
            loss_s: losses.student,
            loss_t: losses.teacher,
            loss_f: losses.feature,
            val_acc,
        });

        if val.nodes.is_empty() || val_acc > best_acc {
            best_acc = val_acc;
            best = model.clone();
            history.best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= opts.patience {
                break;
            }
        }
    }
    history.best_val_acc = best_acc;
    Ok((best, history))
}

fn step(adam: &mut Adam, model: &mut GcnModel, grads: &Gradients) {
    let g = [
        grads.w0.as_slice().expect("standard layout"),
        grads.b0.as_slice().expect("standard layout"),
        grads.w1.as_slice().expect("standard layout"),
        grads.b1.as_slice().expect("standard layout"),
    ];
    adam.update(model.params_mut(), &g);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gnn::{GcnHyper, NormAdj};

    fn toy() -> (GraphInput, TrainBundle) {
        let adj = NormAdj::from_neighbor_lists(&[vec![1], vec![0], vec![3], vec![2]]);
        let x = ndarray::arr2(&[[1.0, 0.0], [0.9, 0.1], [0.0, 1.0], [0.1, 0.9]]);
        let input = GraphInput::new(adj, x).unwrap();
        let bundle = TrainBundle::hard_only(vec![0, 2], vec![0, 1]).unwrap();
        (input, bundle)
    }

    #[test]
    fn zero_epochs_returns_initial_model() {
        let (input, bundle) = toy();
        let m = GcnModel::new(2, 2, GcnHyper::default(), 3);
        let val = Validation {
            nodes: &[1, 3],
            labels: &[0, 1],
        };
        let opts = TrainOptions {
            epochs: 0,
            ..Default::default()
        };
        let (out, hist) = train(m.clone(), &input, &bundle, val, &opts).unwrap();
        assert_eq!(out, m);
        assert!(hist.is_empty());
    }

    #[test]
    fn learns_toy_problem_deterministically() {
        let (input, bundle) = toy();
        let m = GcnModel::new(
            2,
            2,
            GcnHyper {
                hidden: 8,
                dropout: 0.5,
            },
            3,
        );
        let val = Validation {
            nodes: &[1, 3],
            labels: &[0, 1],
        };
        let opts = TrainOptions {
            epochs: 100,
            seed: 4,
            ..Default::default()
        };
        let (a, ha) = train(m.clone(), &input, &bundle, val, &opts).unwrap();
        let (b, _) = train(m, &input, &bundle, val, &opts).unwrap();
        assert_eq!(a, b);
        assert_eq!(ha.best_val_acc, 1.0);
        let z = a.predict(&input).unwrap();
        assert_eq!(accuracy(&z, &[0, 1, 2, 3], &[0, 0, 1, 1]), 1.0);
    }

    #[test]
    fn history_csv_header() {
        let mut buf = Vec::new();
        let h = History {
            epochs: vec![EpochRecord {
                epoch: 1,
                loss_total: 0.5,
                loss_s: 0.5,
                loss_t: 0.0,
                loss_f: 0.0,
                val_acc: 1.0,
            }],
            ..Default::default()
        };
        h.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(
            s,
            "epoch,loss_total,loss_S,loss_T,loss_F,val_acc\n1,0.5,0.5,0,0,1\n"
        );
    }
}
