use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Result, TextGraph};

/// Planted-partition generator: `num_classes` blocks of `nodes_per_class`
/// nodes, each pair connected with probability `p_in` inside a block and
/// `p_out` across blocks.
///
/// Class `c` features are `separation * e_(c mod emb_dim)` plus isotropic
/// Gaussian noise with standard deviation `noise`. Values are rounded to f32
/// so a written and reloaded dataset is identical in memory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlantedPartition {
    pub num_classes: usize,
    pub nodes_per_class: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub separation: f64,
    pub emb_dim: usize,
    pub noise: f64,
    pub seed: u64,
}

impl Default for PlantedPartition {
    fn default() -> Self {
        Self {
            num_classes: 3,
            nodes_per_class: 60,
            p_in: 0.2,
            p_out: 0.02,
            separation: 1.0,
            emb_dim: 8,
            noise: 4.0,
            seed: 0,
        }
    }
}

impl PlantedPartition {
    /// Sparser 600-node graph with weaker features, used for the
    /// noisy-teacher comparisons.
    pub fn noisy_benchmark() -> Self {
        Self {
            nodes_per_class: 200,
            p_in: 0.04,
            p_out: 0.006,
            noise: 5.0,
            seed: 1,
            ..Self::default()
        }
    }

    pub fn generate(&self) -> Result<TextGraph> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let n = self.num_classes * self.nodes_per_class;
        let labels: Vec<usize> = (0..n).map(|v| v / self.nodes_per_class).collect();

        let mut edges = Vec::new();
        for a in 0..n {
            for b in a + 1..n {
                let p = if labels[a] == labels[b] {
                    self.p_in
                } else {
                    self.p_out
                };
                if rng.random::<f64>() < p {
                    edges.push((a, b));
                }
            }
        }

        let mut emb = Array2::zeros((n, self.emb_dim));
        for (v, mut row) in emb.rows_mut().into_iter().enumerate() {
            for (d, x) in row.iter_mut().enumerate() {
                let z: f64 = StandardNormal.sample(&mut rng);
                let mean = if d == labels[v] % self.emb_dim {
                    self.separation
                } else {
                    0.0
                };
                *x = (mean + self.noise * z) as f32 as f64;
            }
        }

        let class_names = (0..self.num_classes)
            .map(|c| format!("topic_{c}"))
            .collect();
        let texts = (0..n)
            .map(|v| {
                Some(format!(
                    "Synthetic document {v} drawn from a planted community."
                ))
            })
            .collect();
        TextGraph::new(
            class_names,
            edges,
            emb,
            labels.into_iter().map(Some).collect(),
            texts,
        )
        .map(|g| g.with_encoder(Some("planted-partition-gaussian".into())))
    }
}
