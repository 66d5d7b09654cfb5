//! Distillation objective: hard-label cross-entropy, soft-label
//! cross-entropy against the temperature-scaled teacher distribution, and
//! MSE between the student's final-layer output and aligned rationale
//! embeddings.

use std::collections::HashSet;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{GnnError, Result};
use crate::graph::NodeId;

/// Lower clamp applied to probabilities before taking logs.
pub const LOG_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub tau: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            alpha: 0.3,
            beta: 0.1,
            tau: 3.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.beta >= 0.0 && self.alpha + self.beta < 1.0) {
            return Err(GnnError::BadWeights {
                alpha: self.alpha,
                beta: self.beta,
            });
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(GnnError::NonFiniteInput(format!(
                "temperature {}",
                self.tau
            )));
        }
        Ok(())
    }

    pub fn student_coef(&self) -> f64 {
        1.0 - self.alpha - self.beta
    }
}

/// Supervision for one training run over the node set `V_S`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainBundle {
    pub node_ids: Vec<NodeId>,
    pub hard_labels: Vec<usize>,
    /// Temperature-scaled teacher distribution per node.
    pub teacher_probs: Option<Vec<Vec<f64>>>,
    /// Aligned rationale embedding per node, same width as the output layer.
    pub rationale_targets: Option<Vec<Vec<f64>>>,
    pub weights: LossWeights,
}

impl TrainBundle {
    pub fn new(
        node_ids: Vec<NodeId>,
        hard_labels: Vec<usize>,
        teacher_probs: Option<Vec<Vec<f64>>>,
        rationale_targets: Option<Vec<Vec<f64>>>,
        weights: LossWeights,
    ) -> Result<Self> {
        weights.validate()?;
        let n = node_ids.len();
        if hard_labels.len() != n {
            return Err(GnnError::ShapeMismatch(format!(
                "{} nodes but {} hard labels",
                n,
                hard_labels.len()
            )));
        }
        let distinct: HashSet<_> = node_ids.iter().collect();
        if distinct.len() != n {
            return Err(GnnError::InvalidBundle("duplicate node ids".into()));
        }
        if let Some(probs) = &teacher_probs {
            if probs.len() != n {
                return Err(GnnError::ShapeMismatch(format!(
                    "{} nodes but {} teacher distributions",
                    n,
                    probs.len()
                )));
            }
            for (v, p) in node_ids.iter().zip(probs) {
                let sum: f64 = p.iter().sum();
                if (sum - 1.0).abs() > 1e-6 || p.iter().any(|x| x.is_nan() || *x < 0.0) {
                    return Err(GnnError::InvalidBundle(format!(
                        "teacher distribution of node {v} sums to {sum}"
                    )));
                }
            }
        }
        if let Some(targets) = &rationale_targets {
            if targets.len() != n {
                return Err(GnnError::ShapeMismatch(format!(
                    "{} nodes but {} rationale targets",
                    n,
                    targets.len()
                )));
            }
        }
        Ok(Self {
            node_ids,
            hard_labels,
            teacher_probs,
            rationale_targets,
            weights,
        })
    }

    /// Bundle with hard labels only and `alpha = beta = 0`.
    pub fn hard_only(node_ids: Vec<NodeId>, hard_labels: Vec<usize>) -> Result<Self> {
        Self::new(
            node_ids,
            hard_labels,
            None,
            None,
            LossWeights {
                alpha: 0.0,
                beta: 0.0,
                tau: 1.0,
            },
        )
    }

    pub fn len(&self) -> usize {
        self.node_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.node_ids.is_empty()
    }
}

/// Temperature softmax `exp(l_j / tau) / sum_c exp(l_c / tau)`, max-shifted.
pub fn teacher_distribution(logits: &[f64], tau: f64) -> Result<Vec<f64>> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(GnnError::NonFiniteInput(format!("temperature {tau}")));
    }
    if logits.is_empty() || logits.iter().any(|x| !x.is_finite()) {
        return Err(GnnError::NonFiniteInput(format!("logits {logits:?}")));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| ((l - max) / tau).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / sum).collect())
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|x| (x - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|x| x / sum);
    }
    out
}

fn check_rows(m: &Array2<f64>, bundle: &TrainBundle) -> Result<()> {
    if let Some(&v) = bundle.node_ids.iter().find(|&&v| v >= m.nrows()) {
        return Err(GnnError::ShapeMismatch(format!(
            "bundle node {v} outside a {}-row output",
            m.nrows()
        )));
    }
    Ok(())
}

fn ln_clamped(x: f64) -> f64 {
    x.max(LOG_EPS).ln()
}

/// Mean hard-label cross-entropy over the bundle.
pub fn loss_student(z: &Array2<f64>, bundle: &TrainBundle) -> Result<f64> {
    check_rows(z, bundle)?;
    if bundle.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for (&v, &y) in bundle.node_ids.iter().zip(&bundle.hard_labels) {
        if y >= z.ncols() {
            return Err(GnnError::ShapeMismatch(format!(
                "label {y} of node {v} outside {} classes",
                z.ncols()
            )));
        }
        total -= ln_clamped(z[[v, y]]);
    }
    Ok(total / bundle.len() as f64)
}

/// Mean soft-label cross-entropy against the teacher distribution.
/// Terms with zero teacher mass contribute exactly 0.
pub fn loss_teacher(z: &Array2<f64>, bundle: &TrainBundle) -> Result<f64> {
    check_rows(z, bundle)?;
    let probs = bundle
        .teacher_probs
        .as_ref()
        .ok_or(GnnError::MissingTeacherProbs)?;
    if bundle.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for (&v, p) in bundle.node_ids.iter().zip(probs) {
        if p.len() != z.ncols() {
            return Err(GnnError::DimMismatch {
                expected: z.ncols(),
                found: p.len(),
            });
        }
        for (j, &pj) in p.iter().enumerate() {
            if pj > 0.0 {
                total -= pj * ln_clamped(z[[v, j]]);
            }
        }
    }
    Ok(total / bundle.len() as f64)
}

/// Node mean of the per-dimension mean squared difference between `hf`
/// rows and rationale targets.
pub fn loss_feature(hf: &Array2<f64>, bundle: &TrainBundle) -> Result<f64> {
    check_rows(hf, bundle)?;
    let targets = bundle
        .rationale_targets
        .as_ref()
        .ok_or(GnnError::MissingRationaleTarget)?;
    if bundle.is_empty() {
        return Ok(0.0);
    }
    let c = hf.ncols();
    let mut total = 0.0;
    for (&v, r) in bundle.node_ids.iter().zip(targets) {
        if r.len() != c {
            return Err(GnnError::DimMismatch {
                expected: c,
                found: r.len(),
            });
        }
        let sq: f64 = hf.row(v).iter().zip(r).map(|(h, t)| (h - t).powi(2)).sum();
        total += sq / c as f64;
    }
    Ok(total / bundle.len() as f64)
}

/// `(1 - alpha - beta) * ls + alpha * lt + beta * lf`.
pub fn loss_total(ls: f64, lt: f64, lf: f64, alpha: f64, beta: f64) -> Result<f64> {
    LossWeights {
        alpha,
        beta,
        tau: 1.0,
    }
    .validate()?;
    Ok((1.0 - alpha - beta) * ls + alpha * lt + beta * lf)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub student: f64,
    pub teacher: f64,
    pub feature: f64,
}

/// Evaluates every available term. Teacher and feature terms are required
/// only when their weight is positive; otherwise a missing term reads as 0.
pub fn objective(hf: &Array2<f64>, z: &Array2<f64>, bundle: &TrainBundle) -> Result<LossBreakdown> {
    let w = bundle.weights;
    let student = loss_student(z, bundle)?;
    let teacher = match (&bundle.teacher_probs, w.alpha > 0.0) {
        (Some(_), _) | (None, true) => loss_teacher(z, bundle)?,
        (None, false) => 0.0,
    };
    let feature = match (&bundle.rationale_targets, w.beta > 0.0) {
        (Some(_), _) | (None, true) => loss_feature(hf, bundle)?,
        (None, false) => 0.0,
    };
    Ok(LossBreakdown {
        total: loss_total(student, teacher, feature, w.alpha, w.beta)?,
        student,
        teacher,
        feature,
    })
}

/// Gradient of the total objective with respect to the final-layer output
/// `hf`. Rows outside the bundle are zero. The log clamp is treated as
/// inactive.
pub fn output_grad(hf: &Array2<f64>, z: &Array2<f64>, bundle: &TrainBundle) -> Result<Array2<f64>> {
    check_rows(z, bundle)?;
    let w = bundle.weights;
    let mut grad = Array2::zeros(hf.raw_dim());
    if bundle.is_empty() {
        return Ok(grad);
    }
    let inv_n = 1.0 / bundle.len() as f64;
    let c = hf.ncols();
    let probs = if w.alpha > 0.0 {
        Some(
            bundle
                .teacher_probs
                .as_ref()
                .ok_or(GnnError::MissingTeacherProbs)?,
        )
    } else {
        None
    };
    let targets = if w.beta > 0.0 {
        Some(
            bundle
                .rationale_targets
                .as_ref()
                .ok_or(GnnError::MissingRationaleTarget)?,
        )
    } else {
        None
    };
    for (k, (&v, &y)) in bundle.node_ids.iter().zip(&bundle.hard_labels).enumerate() {
        let mut row = grad.row_mut(v);
        let zr = z.row(v);
        // d(-log z_y)/dh = z - onehot(y)
        for j in 0..c {
            let onehot = if j == y { 1.0 } else { 0.0 };
            row[j] += w.student_coef() * (zr[j] - onehot) * inv_n;
        }
        if let Some(probs) = probs {
            let p = &probs[k];
            if p.len() != c {
                return Err(GnnError::DimMismatch {
                    expected: c,
                    found: p.len(),
                });
            }
            let mass: f64 = p.iter().sum();
            for j in 0..c {
                row[j] += w.alpha * (mass * zr[j] - p[j]) * inv_n;
            }
        }
        if let Some(targets) = targets {
            let r = &targets[k];
            if r.len() != c {
                return Err(GnnError::DimMismatch {
                    expected: c,
                    found: r.len(),
                });
            }
            for j in 0..c {
                row[j] += w.beta * 2.0 * (hf[[v, j]] - r[j]) * inv_n / c as f64;
            }
        }
    }
    Ok(grad)
}

/// Shannon entropy in nats; `0 ln 0 = 0`.
pub fn entropy(p: &[f64]) -> f64 {
    -p.iter()
        .filter(|&&x| x > 0.0)
        .map(|x| x * x.ln())
        .sum::<f64>()
}
