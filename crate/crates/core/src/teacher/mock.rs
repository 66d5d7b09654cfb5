//! Offline teachers that answer from ground truth, optionally corrupted as a
//! function of each node's homophily and degree.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::client::{PromptKind, TeacherClient, TeacherRequest, TransportError};
use crate::graph::{NodeId, TextGraph};

/// Renders a confidence vector as `"answer": "...", "confidence": ...`
/// pairs, most confident first. Zero-confidence classes are omitted.
pub fn format_guesses(class_names: &[String], confidences: &[f64]) -> String {
    let mut order: Vec<usize> = (0..confidences.len())
        .filter(|&c| confidences[c] > 0.0)
        .collect();
    order.sort_by(|&a, &b| confidences[b].total_cmp(&confidences[a]).then(a.cmp(&b)));
    order
        .iter()
        .map(|&c| {
            format!(
                "\"answer\": \"{}\", \"confidence\": {}",
                class_names[c], confidences[c]
            )
        })
        .collect::<Vec<_>>()
        .join(", ")
}

pub const FINAL_ANSWER_MARKER: &str = "Final answer:";

pub fn mock_rationale(class_name: &str) -> String {
    format!(
        "The terminology and the cited works are typical of {class_name}. \
         Step by step: the stated problem, the methods used and the neighbouring \
         literature all fall within {class_name}. {FINAL_ANSWER_MARKER} {class_name}"
    )
}

/// `top` on `answer`, the remainder spread evenly over the other classes.
fn peaked(classes: usize, answer: usize, top: f64) -> Vec<f64> {
    if classes == 1 {
        return vec![1.0];
    }
    let rest = (1.0 - top) / (classes - 1) as f64;
    (0..classes)
        .map(|c| if c == answer { top } else { rest })
        .collect()
}

/// Always answers the ground-truth label with confidence 0.9.
pub struct OracleTeacher {
    name: String,
    labels: Vec<Option<usize>>,
    class_names: Vec<String>,
}

impl OracleTeacher {
    pub const CONFIDENCE: f64 = 0.9;

    pub fn from_graph(g: &TextGraph) -> Self {
        Self {
            name: "mock:oracle".into(),
            labels: g.labels().to_vec(),
            class_names: g.class_names().to_vec(),
        }
    }

    pub fn confidences(&self, v: NodeId) -> Option<Vec<f64>> {
        let label = self.labels.get(v).copied().flatten()?;
        Some(peaked(self.class_names.len(), label, Self::CONFIDENCE))
    }
}

impl TeacherClient for OracleTeacher {
    fn name(&self) -> &str {
        &self.name
    }

    fn complete(&self, req: &TeacherRequest<'_>) -> Result<String, TransportError> {
        let label = self
            .labels
            .get(req.node_id)
            .copied()
            .flatten()
            .ok_or_else(|| {
                TransportError::Fatal(format!("oracle has no label for node {}", req.node_id))
            })?;
        Ok(match req.kind {
            PromptKind::Logits => format_guesses(
                &self.class_names,
                &peaked(self.class_names.len(), label, Self::CONFIDENCE),
            ),
            PromptKind::Rationale => mock_rationale(&self.class_names[label]),
        })
    }
}

/// Teacher accuracy per structural bucket, lowest bucket first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseProfile {
    pub hr_accuracy: [f64; 3],
    /// When set, each degree bucket shifts accuracy by its deviation from the
    /// mean of the three, so homophily bucket averages are kept.
    #[serde(default)]
    pub degree_accuracy: Option<[f64; 3]>,
    /// Confidence placed on the (possibly wrong) answer.
    pub confidence: f64,
}

impl Default for NoiseProfile {
    fn default() -> Self {
        Self {
            hr_accuracy: [0.40, 0.60, 0.75],
            degree_accuracy: Some([0.40, 0.60, 0.75]),
            confidence: 0.7,
        }
    }
}

/// Ranks `values` descending (id ascending on ties) and cuts the ranking into
/// thirds: 2 = head (highest), 1 = middle, 0 = tail (lowest).
pub fn tertile_buckets(values: &[f64]) -> Vec<usize> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let mut bucket = vec![0; n];
    for (pos, &v) in order.iter().enumerate() {
        bucket[v] = 2 - (3 * pos / n).min(2);
    }
    bucket
}

/// Answers correctly with a probability set by the node's ground-truth
/// homophily bucket (and optionally degree bucket). Draws are keyed by node
/// id, so answers do not depend on query order.
pub struct NoisyTeacher {
    name: String,
    labels: Vec<Option<usize>>,
    class_names: Vec<String>,
    accuracy: Vec<f64>,
    confidence: f64,
    seed: u64,
}

impl NoisyTeacher {
    pub fn from_graph(g: &TextGraph, profile: &NoiseProfile, seed: u64) -> Self {
        let n = g.num_nodes();
        // unlabeled nodes never match anyone
        let truth: Vec<usize> = (0..n)
            .map(|v| g.label(v).unwrap_or(usize::MAX - v))
            .collect();
        let hr: Vec<f64> = (0..n)
            .map(|v| g.homophily_ratio(v, &truth).expect("valid node"))
            .collect();
        let hr_bucket = tertile_buckets(&hr);
        let deg: Vec<f64> = (0..n)
            .map(|v| g.degree(v).expect("valid node") as f64)
            .collect();
        let deg_bucket = tertile_buckets(&deg);
        let accuracy = (0..n)
            .map(|v| {
                let a = profile.hr_accuracy[hr_bucket[v]];
                match profile.degree_accuracy {
                    Some(d) => {
                        let mean = d.iter().sum::<f64>() / 3.0;
                        (a + d[deg_bucket[v]] - mean).clamp(0.0, 1.0)
                    }
                    None => a,
                }
            })
            .collect();
        Self {
            name: format!("mock:noisy:{seed}"),
            labels: g.labels().to_vec(),
            class_names: g.class_names().to_vec(),
            accuracy,
            confidence: profile.confidence,
            seed,
        }
    }

    /// Probability that the answer for `v` is correct.
    pub fn expected_accuracy(&self, v: NodeId) -> f64 {
        self.accuracy[v]
    }

    pub fn answer_for(&self, v: NodeId) -> usize {
        let classes = self.class_names.len();
        let mut rng =
            ChaCha8Rng::seed_from_u64(self.seed ^ (v as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let u: f64 = rng.random();
        match self.labels[v] {
            Some(truth) if u < self.accuracy[v] || classes == 1 => truth,
            Some(truth) => {
                let other = rng.random_range(0..classes - 1);
                if other >= truth {
                    other + 1
                } else {
                    other
                }
            }
            None => rng.random_range(0..classes),
        }
    }
}

impl TeacherClient for NoisyTeacher {
    fn name(&self) -> &str {
        &self.name
    }

    fn complete(&self, req: &TeacherRequest<'_>) -> Result<String, TransportError> {
        if req.node_id >= self.labels.len() {
            return Err(TransportError::Fatal(format!(
                "unknown node {}",
                req.node_id
            )));
        }
        let answer = self.answer_for(req.node_id);
        Ok(match req.kind {
            PromptKind::Logits => format_guesses(
                &self.class_names,
                &peaked(self.class_names.len(), answer, self.confidence),
            ),
            PromptKind::Rationale => mock_rationale(&self.class_names[answer]),
        })
    }
}
