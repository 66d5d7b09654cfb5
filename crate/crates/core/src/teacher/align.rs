//! Maps rationale embeddings into the student's C-dimensional output space.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Result, TeacherError};
use crate::gnn::softmax_rows;
use crate::optim::Adam;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlignHyper {
    pub hidden: usize,
    pub lr: f64,
    pub epochs: usize,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for AlignHyper {
    fn default() -> Self {
        Self {
            hidden: 64,
            lr: 0.01,
            epochs: 200,
            weight_decay: 5e-4,
            seed: 0,
        }
    }
}

/// `ReLU(r W_a + b_a) W_b + b_b`, output left pre-softmax.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignMlp {
    pub w_a: Array2<f64>,
    pub b_a: Array1<f64>,
    pub w_b: Array2<f64>,
    pub b_b: Array1<f64>,
    /// Identifies the labeled set the MLP was fitted on.
    pub trained_on: String,
}

fn xavier(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let a = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-a..a))
}

impl AlignMlp {
    pub fn new(d_emb: usize, hidden: usize, classes: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w_a = xavier(d_emb, hidden, &mut rng);
        let w_b = xavier(hidden, classes, &mut rng);
        Self {
            w_a,
            b_a: Array1::zeros(hidden),
            w_b,
            b_b: Array1::zeros(classes),
            trained_on: String::new(),
        }
    }

    pub fn d_emb(&self) -> usize {
        self.w_a.nrows()
    }

    pub fn num_classes(&self) -> usize {
        self.w_b.ncols()
    }

    fn hidden(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        (x.dot(&self.w_a) + &self.b_a).mapv(|v| v.max(0.0))
    }

    /// Pre-softmax outputs for each row of `x`.
    pub fn forward(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.d_emb() {
            return Err(TeacherError::DimMismatch {
                expected: self.d_emb(),
                found: x.ncols(),
            });
        }
        Ok(self.hidden(x).dot(&self.w_b) + &self.b_b)
    }
}

/// Full-batch Adam on mean cross-entropy. `epochs = 0` returns the
/// initialization.
pub fn train_align_mlp(
    x: ArrayView2<'_, f64>,
    labels: &[usize],
    classes: usize,
    hyper: &AlignHyper,
) -> Result<AlignMlp> {
    let n = x.nrows();
    if labels.len() != n {
        return Err(TeacherError::DimMismatch {
            expected: n,
            found: labels.len(),
        });
    }
    if n < classes {
        return Err(TeacherError::InsufficientData {
            needed: classes,
            found: n,
        });
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
        return Err(TeacherError::DimMismatch {
            expected: classes,
            found: bad + 1,
        });
    }
    let mut mlp = AlignMlp::new(x.ncols(), hyper.hidden, classes, hyper.seed);
    mlp.trained_on = labels_fingerprint(labels);
    let sizes = [mlp.w_a.len(), mlp.b_a.len(), mlp.w_b.len(), mlp.b_b.len()];
    let wd = hyper.weight_decay;
    let mut adam = Adam::new(&sizes, hyper.lr, vec![wd, 0.0, wd, 0.0]);

    for epoch in 1..=hyper.epochs {
        let h = mlp.hidden(x);
        let out = h.dot(&mlp.w_b) + &mlp.b_b;
        let mut g = softmax_rows(&out);
        let mut loss = 0.0;
        for (i, &y) in labels.iter().enumerate() {
            loss -= g[[i, y]].max(1e-12).ln();
            g[[i, y]] -= 1.0;
        }
        if !loss.is_finite() {
            return Err(TeacherError::Diverged { epoch });
        }
        g /= n as f64;
        let dw_b = h.t().dot(&g);
        let db_b = g.sum_axis(Axis(0));
        let mut dh = g.dot(&mlp.w_b.t());
        dh.zip_mut_with(&h, |d, &a| {
            if a <= 0.0 {
                *d = 0.0
            }
        });
        let dw_a = x.t().dot(&dh);
        let db_a = dh.sum_axis(Axis(0));
        let grads = [
            dw_a.as_slice().expect("standard layout"),
            db_a.as_slice().expect("standard layout"),
            dw_b.as_slice().expect("standard layout"),
            db_b.as_slice().expect("standard layout"),
        ];
        adam.update(
            [
                mlp.w_a.as_slice_mut().expect("standard layout"),
                mlp.b_a.as_slice_mut().expect("standard layout"),
                mlp.w_b.as_slice_mut().expect("standard layout"),
                mlp.b_b.as_slice_mut().expect("standard layout"),
            ],
            &grads,
        );
    }
    Ok(mlp)
}

fn labels_fingerprint(labels: &[usize]) -> String {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    for y in labels {
        h.update((*y as u64).to_le_bytes());
    }
    h.finalize()[..8]
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub fn align_rationale(mlp: &AlignMlp, r: ArrayView1<'_, f64>) -> Result<Vec<f64>> {
    let row = r.insert_axis(Axis(0));
    Ok(mlp.forward(row)?.row(0).to_vec())
}

/// Per-chunk max over `classes` contiguous chunks; the last chunk absorbs
/// the remainder.
pub fn max_pool_align(r: &[f64], classes: usize) -> Result<Vec<f64>> {
    if classes == 0 || r.len() < classes {
        return Err(TeacherError::DimTooSmall {
            dim: r.len(),
            classes,
        });
    }
    let width = r.len() / classes;
    Ok((0..classes)
        .map(|c| {
            let end = if c + 1 == classes {
                r.len()
            } else {
                (c + 1) * width
            };
            r[c * width..end]
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect())
}
