use std::collections::{HashMap, HashSet};

use ndarray::{Array1, Array2};

use super::{ActiveError, Result};
use crate::gnn::{entropy, softmax_rows, GcnModel, GraphInput, Mode};
use crate::graph::{NodeId, TextGraph};

/// Frozen model snapshot for neighbourhood entropy changes. Removing the
/// edges of `v` only alters `Â` rows within two hops of `v`, so the
/// ablated outputs of `N(v)` are recomputed locally from `X W0`.
pub struct EntropyContext<'m> {
    model: &'m GcnModel,
    xw0: Array2<f64>,
    z: Array2<f64>,
}

impl<'m> EntropyContext<'m> {
    pub fn new(model: &'m GcnModel, input: &GraphInput) -> Result<Self> {
        let xw0 = input.features.dot(&model.w0);
        let z = model.forward(input, Mode::Eval)?.z;
        Ok(Self { model, xw0, z })
    }

    /// Eval-mode probabilities on the intact graph.
    pub fn probs(&self) -> &Array2<f64> {
        &self.z
    }

    /// `Σ_{u∈N(v)} H(Z'[u]) − Σ_{u∈N(v)} H(Z[u])`, where `Z'` is the output
    /// after dropping every edge incident to `v` and renormalizing.
    pub fn entropy_reduction(&self, g: &TextGraph, v: NodeId) -> Result<f64> {
        let nv = g.neighbors(v)?;
        if nv.is_empty() {
            return Err(ActiveError::IsolatedNode(v));
        }
        let touched: HashSet<NodeId> = nv.iter().copied().collect();
        let deg_after = |x: NodeId| -> f64 {
            if x == v {
                0.0
            } else {
                (g.degree(x).expect("valid node") - touched.contains(&x) as usize) as f64
            }
        };
        // neighbours of x once v's edges are gone
        let nbrs_after = |x: NodeId| -> Vec<NodeId> {
            if x == v {
                Vec::new()
            } else {
                g.neighbors(x)
                    .expect("valid node")
                    .iter()
                    .copied()
                    .filter(|&u| u != v)
                    .collect()
            }
        };
        let weight =
            |a: NodeId, b: NodeId| 1.0 / ((deg_after(a) + 1.0) * (deg_after(b) + 1.0)).sqrt();

        let hidden = self.model.b0.len();
        let mut h1: HashMap<NodeId, Array1<f64>> = HashMap::new();
        let mut h1_after = |y: NodeId| -> Array1<f64> {
            h1.entry(y)
                .or_insert_with(|| {
                    let mut acc = self.xw0.row(y).to_owned() * weight(y, y);
                    for u in nbrs_after(y) {
                        acc.scaled_add(weight(y, u), &self.xw0.row(u));
                    }
                    debug_assert_eq!(acc.len(), hidden);
                    (acc + &self.model.b0).mapv(|x| x.max(0.0))
                })
                .clone()
        };

        let classes = self.model.b1.len();
        let mut hf = Array2::zeros((nv.len(), classes));
        for (i, &u) in nv.iter().enumerate() {
            let mut agg = h1_after(u) * weight(u, u);
            for y in nbrs_after(u) {
                agg.scaled_add(weight(u, y), &h1_after(y));
            }
            let out = agg.dot(&self.model.w1) + &self.model.b1;
            hf.row_mut(i).assign(&out);
        }
        let z_after = softmax_rows(&hf);

        let before: f64 = nv
            .iter()
            .map(|&u| entropy(self.z.row(u).as_slice().expect("standard layout")))
            .sum();
        let after: f64 = z_after
            .rows()
            .into_iter()
            .map(|r| entropy(r.as_slice().expect("standard layout")))
            .sum();
        Ok(after - before)
    }
}

pub fn entropy_reduction(
    model: &GcnModel,
    g: &TextGraph,
    input: &GraphInput,
    v: NodeId,
) -> Result<f64> {
    EntropyContext::new(model, input)?.entropy_reduction(g, v)
}
