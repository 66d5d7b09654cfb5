use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{output_grad, softmax_rows, TrainBundle};
use super::{GnnError, NormAdj, Result};
use crate::graph::TextGraph;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GcnHyper {
    pub hidden: usize,
    pub dropout: f64,
}

impl Default for GcnHyper {
    fn default() -> Self {
        Self {
            hidden: 64,
            dropout: 0.5,
        }
    }
}

/// Normalized adjacency and node features shared by every forward pass.
#[derive(Debug, Clone)]
pub struct GraphInput {
    pub adj: NormAdj,
    pub features: Array2<f64>,
}

impl GraphInput {
    pub fn new(adj: NormAdj, features: Array2<f64>) -> Result<Self> {
        if adj.num_nodes() != features.nrows() {
            return Err(GnnError::ShapeMismatch(format!(
                "adjacency over {} nodes, {} feature rows",
                adj.num_nodes(),
                features.nrows()
            )));
        }
        Ok(Self { adj, features })
    }

    pub fn from_graph(g: &TextGraph) -> Self {
        Self {
            adj: NormAdj::from_graph(g),
            features: g.embeddings().clone(),
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.features.nrows()
    }
}

/// Two-layer GCN: `H1 = ReLU(A X W0 + b0)`, `Hf = A H1 W1 + b1`,
/// `Z = softmax(Hf)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GcnModel {
    pub w0: Array2<f64>,
    pub b0: Array1<f64>,
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub hyper: GcnHyper,
    version: u64,
}

/// Dropout mask with inverted-dropout scaling already applied
/// (entries are 0 or `1 / (1 - rate)`).
pub type DropoutMask = Array2<f64>;

#[derive(Debug, Clone)]
pub struct ForwardCache {
    version: u64,
    train: bool,
    pre: Array2<f64>,
    ah1: Array2<f64>,
    mask: Option<DropoutMask>,
}

impl ForwardCache {
    pub fn mask(&self) -> Option<&DropoutMask> {
        self.mask.as_ref()
    }
}

#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub hf: Array2<f64>,
    pub z: Array2<f64>,
    pub cache: ForwardCache,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub w0: Array2<f64>,
    pub b0: Array1<f64>,
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
}

impl Gradients {
    pub fn max_abs(&self) -> f64 {
        self.w0
            .iter()
            .chain(self.b0.iter())
            .chain(self.w1.iter())
            .chain(self.b1.iter())
            .fold(0.0, |m, x| m.max(x.abs()))
    }
}

pub enum Mode<'a> {
    Eval,
    /// Dropout drawn from the given generator.
    Train(&'a mut ChaCha8Rng),
}

fn xavier_uniform(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-bound..bound))
}

impl GcnModel {
    /// Xavier-uniform weights and zero biases from `seed`.
    pub fn new(d_emb: usize, classes: usize, hyper: GcnHyper, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w0 = xavier_uniform(d_emb, hyper.hidden, &mut rng);
        let w1 = xavier_uniform(hyper.hidden, classes, &mut rng);
        Self::from_parts(
            w0,
            Array1::zeros(hyper.hidden),
            w1,
            Array1::zeros(classes),
            hyper,
        )
        .expect("consistent shapes")
    }

    pub fn from_parts(
        w0: Array2<f64>,
        b0: Array1<f64>,
        w1: Array2<f64>,
        b1: Array1<f64>,
        hyper: GcnHyper,
    ) -> Result<Self> {
        if w0.ncols() != b0.len() || w1.nrows() != w0.ncols() || w1.ncols() != b1.len() {
            return Err(GnnError::ShapeMismatch(format!(
                "W0 {:?}, b0 {}, W1 {:?}, b1 {}",
                w0.dim(),
                b0.len(),
                w1.dim(),
                b1.len()
            )));
        }
        if !(0.0..1.0).contains(&hyper.dropout) {
            return Err(GnnError::ShapeMismatch(format!(
                "dropout rate {} outside [0, 1)",
                hyper.dropout
            )));
        }
        let all_finite = w0
            .iter()
            .chain(b0.iter())
            .chain(w1.iter())
            .chain(b1.iter())
            .all(|x| x.is_finite());
        if !all_finite {
            return Err(GnnError::NonFiniteInput("model parameters".into()));
        }
        let hyper = GcnHyper {
            hidden: w0.ncols(),
            ..hyper
        };
        Ok(Self {
            w0,
            b0,
            w1,
            b1,
            hyper,
            version: 0,
        })
    }

    pub fn d_emb(&self) -> usize {
        self.w0.nrows()
    }

    pub fn num_classes(&self) -> usize {
        self.w1.ncols()
    }

    /// Monotone counter bumped by every parameter update.
    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn num_params(&self) -> usize {
        self.w0.len() + self.b0.len() + self.w1.len() + self.b1.len()
    }

    /// Mutable access to every parameter; invalidates outstanding caches.
    pub fn params_mut(&mut self) -> [&mut [f64]; 4] {
        self.version += 1;
        [
            self.w0.as_slice_mut().expect("standard layout"),
            self.b0.as_slice_mut().expect("standard layout"),
            self.w1.as_slice_mut().expect("standard layout"),
            self.b1.as_slice_mut().expect("standard layout"),
        ]
    }

    fn check_input(&self, input: &GraphInput) -> Result<()> {
        if input.features.ncols() != self.d_emb() {
            return Err(GnnError::ShapeMismatch(format!(
                "features have {} columns, model expects {}",
                input.features.ncols(),
                self.d_emb()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, input: &GraphInput, mode: Mode<'_>) -> Result<ForwardPass> {
        let mask = match mode {
            Mode::Eval => None,
            Mode::Train(rng) => Some(self.sample_mask(input.num_nodes(), rng)),
        };
        let train = mask.is_some();
        self.forward_inner(input, mask, train)
    }

    /// Train-mode forward with a fixed dropout mask (`None` = no dropout).
    pub fn forward_masked(
        &self,
        input: &GraphInput,
        mask: Option<DropoutMask>,
    ) -> Result<ForwardPass> {
        if let Some(m) = &mask {
            if m.dim() != (input.num_nodes(), self.hyper.hidden) {
                return Err(GnnError::ShapeMismatch(format!(
                    "dropout mask {:?}",
                    m.dim()
                )));
            }
        }
        self.forward_inner(input, mask, true)
    }

    fn sample_mask(&self, n: usize, rng: &mut ChaCha8Rng) -> DropoutMask {
        let rate = self.hyper.dropout;
        let keep = 1.0 / (1.0 - rate);
        Array2::from_shape_fn((n, self.hyper.hidden), |_| {
            if rate > 0.0 && rng.random::<f64>() < rate {
                0.0
            } else {
                keep
            }
        })
    }

    fn forward_inner(
        &self,
        input: &GraphInput,
        mask: Option<DropoutMask>,
        train: bool,
    ) -> Result<ForwardPass> {
        self.check_input(input)?;
        let xw = input.features.dot(&self.w0);
        let pre = input.adj.matmul(xw.view()) + &self.b0;
        let mut h1 = pre.mapv(|x| x.max(0.0));
        if let Some(m) = &mask {
            h1 *= m;
        }
        let ah1 = input.adj.matmul(h1.view());
        let hf = ah1.dot(&self.w1) + &self.b1;
        let z = softmax_rows(&hf);
        Ok(ForwardPass {
            hf,
            z,
            cache: ForwardCache {
                version: self.version,
                train,
                pre,
                ah1,
                mask,
            },
        })
    }

    /// Analytic gradients of the bundle objective. Requires a train-mode
    /// cache produced by the current parameters.
    pub fn backward(
        &self,
        input: &GraphInput,
        pass: &ForwardPass,
        bundle: &TrainBundle,
    ) -> Result<Gradients> {
        let cache = &pass.cache;
        if !cache.train || cache.version != self.version {
            return Err(GnnError::StaleCache);
        }
        let g_out = output_grad(&pass.hf, &pass.z, bundle)?;
        let w1 = cache.ah1.t().dot(&g_out);
        let b1 = g_out.sum_axis(Axis(0));
        // A is symmetric, so A^T G = A G
        let d_h1 = input.adj.matmul(g_out.view()).dot(&self.w1.t());
        let mut d_pre = d_h1;
        if let Some(m) = &cache.mask {
            d_pre *= m;
        }
        d_pre.zip_mut_with(&cache.pre, |d, &p| {
            if p <= 0.0 {
                *d = 0.0;
            }
        });
        let b0 = d_pre.sum_axis(Axis(0));
        let w0 = input.features.t().dot(&input.adj.matmul(d_pre.view()));
        Ok(Gradients { w0, b0, w1, b1 })
    }

    /// Eval-mode class probabilities.
    pub fn predict(&self, input: &GraphInput) -> Result<Array2<f64>> {
        Ok(self.forward(input, Mode::Eval)?.z)
    }
}

/// Row argmax with ties broken toward the lowest index.
pub fn argmax_rows(z: &Array2<f64>) -> Vec<usize> {
    z.rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            for (j, &x) in row.iter().enumerate() {
                if x > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}
