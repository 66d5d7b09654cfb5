use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{GraphError, NodeId, Result, SplitFile, TextGraph};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self {
            train: 0.6,
            val: 0.2,
            test: 0.2,
        }
    }
}

/// Train/validation/test partition plus the few-shot labeled set drawn
/// from the training pool.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_pool: Vec<NodeId>,
    pub val: Vec<NodeId>,
    pub test: Vec<NodeId>,
    /// `shots` nodes per class, ordered by class then draw order.
    pub labeled: Vec<NodeId>,
    pub shots: usize,
    pub seed: u64,
}

impl SplitSpec {
    /// Training-pool nodes that are not in the labeled set.
    pub fn unlabeled_pool(&self) -> Vec<NodeId> {
        let labeled: std::collections::HashSet<_> = self.labeled.iter().collect();
        self.train_pool
            .iter()
            .copied()
            .filter(|v| !labeled.contains(v))
            .collect()
    }
}

/// Shuffles all node ids with ChaCha8 seeded from `seed` (Fisher-Yates via
/// `SliceRandom::shuffle`); the first `floor(val * n)` become validation,
/// the next `floor(test * n)` test, the rest the training pool.
pub fn make_split(
    g: &TextGraph,
    shots: usize,
    fractions: SplitFractions,
    seed: u64,
) -> Result<SplitSpec> {
    let n = g.num_nodes();
    if !(fractions.val >= 0.0 && fractions.test >= 0.0 && fractions.val + fractions.test < 1.0) {
        return Err(GraphError::Invalid(format!(
            "bad split fractions {fractions:?}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ids: Vec<NodeId> = (0..n).collect();
    ids.shuffle(&mut rng);
    let n_val = (fractions.val * n as f64).floor() as usize;
    let n_test = (fractions.test * n as f64).floor() as usize;
    let val = ids[..n_val].to_vec();
    let test = ids[n_val..n_val + n_test].to_vec();
    let train_pool = ids[n_val + n_test..].to_vec();
    draw_labeled(g, train_pool, val, test, shots, seed)
}

/// Uses fixed pools (from `splits.json`) and only draws the labeled set.
pub fn make_split_from_pools(
    g: &TextGraph,
    pools: &SplitFile,
    shots: usize,
    seed: u64,
) -> Result<SplitSpec> {
    let n = g.num_nodes();
    let mut seen = vec![false; n];
    for &v in pools.train_pool.iter().chain(&pools.val).chain(&pools.test) {
        if v >= n {
            return Err(GraphError::InvalidNode(v));
        }
        if std::mem::replace(&mut seen[v], true) {
            return Err(GraphError::Invalid(format!(
                "node {v} appears in more than one split"
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train_pool = pools.train_pool.clone();
    train_pool.shuffle(&mut rng);
    draw_labeled(
        g,
        train_pool,
        pools.val.clone(),
        pools.test.clone(),
        shots,
        seed,
    )
}

fn draw_labeled(
    g: &TextGraph,
    train_pool: Vec<NodeId>,
    val: Vec<NodeId>,
    test: Vec<NodeId>,
    shots: usize,
    seed: u64,
) -> Result<SplitSpec> {
    if shots == 0 {
        return Err(GraphError::Invalid("shots must be >= 1".into()));
    }
    let mut labeled = Vec::with_capacity(shots * g.num_classes());
    for class in 0..g.num_classes() {
        let candidates: Vec<NodeId> = train_pool
            .iter()
            .copied()
            .filter(|&v| g.label(v) == Some(class))
            .collect();
        if candidates.len() < shots {
            return Err(GraphError::InsufficientClassSupport {
                class,
                available: candidates.len(),
                needed: shots,
            });
        }
        labeled.extend_from_slice(&candidates[..shots]);
    }
    let mut train_pool = train_pool;
    let mut val = val;
    let mut test = test;
    train_pool.sort_unstable();
    val.sort_unstable();
    test.sort_unstable();
    Ok(SplitSpec {
        train_pool,
        val,
        test,
        labeled,
        shots,
        seed,
    })
}
