//! Rationale text to embedding. The in-process encoders are deterministic
//! stand-ins; real sentence embeddings come from the offline tool through
//! the pending/embeddings file exchange.

use std::collections::{HashMap, HashSet};
use std::fs::{self, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::mock::FINAL_ANSWER_MARKER;
use super::parse::fold_name;
use super::{Result, TeacherError};
use crate::graph::{NodeId, TextGraph};

pub const PENDING_FILE: &str = "rationales_pending.jsonl";
pub const RATIONALE_EMBEDDINGS_FILE: &str = "rationale_embeddings.f32le";
pub const RATIONALE_INDEX_FILE: &str = "index.json";

pub trait RationaleEncoder: Send + Sync {
    /// `Ok(None)` means the embedding will be produced out of process.
    fn encode(&self, node_id: NodeId, text: &str) -> Result<Option<Vec<f64>>>;
}

/// Standard-normal vector seeded by the SHA-256 of the text.
#[derive(Debug, Clone)]
pub struct HashGaussianEncoder {
    pub dim: usize,
}

impl HashGaussianEncoder {
    pub fn embed(&self, text: &str) -> Vec<f64> {
        let digest = Sha256::digest(text.as_bytes());
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&digest);
        let mut rng = ChaCha8Rng::from_seed(seed);
        (0..self.dim)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect()
    }
}

impl RationaleEncoder for HashGaussianEncoder {
    fn encode(&self, _node_id: NodeId, text: &str) -> Result<Option<Vec<f64>>> {
        Ok(Some(self.embed(text)))
    }
}

/// Maps a mock rationale to the mean feature vector of the class it names
/// after the final-answer marker, plus text-seeded Gaussian noise with
/// per-vector norm about `noise` times the prototype norm. Text that names no
/// class falls back to a pure hash embedding.
pub struct PrototypeEncoder {
    prototypes: Vec<Option<Vec<f64>>>,
    folded_names: Vec<String>,
    noise: f64,
    hash: HashGaussianEncoder,
}

impl PrototypeEncoder {
    pub fn from_graph(g: &TextGraph, noise: f64) -> Self {
        Self {
            prototypes: (0..g.num_classes()).map(|c| g.class_prototype(c)).collect(),
            folded_names: g.class_names().iter().map(|c| fold_name(c)).collect(),
            noise,
            hash: HashGaussianEncoder { dim: g.emb_dim() },
        }
    }

    fn named_class(&self, text: &str) -> Option<usize> {
        let tail = &text[text.rfind(FINAL_ANSWER_MARKER)? + FINAL_ANSWER_MARKER.len()..];
        let folded = fold_name(tail);
        self.folded_names.iter().position(|c| *c == folded)
    }
}

impl RationaleEncoder for PrototypeEncoder {
    fn encode(&self, _node_id: NodeId, text: &str) -> Result<Option<Vec<f64>>> {
        let jitter = self.hash.embed(text);
        let proto = self
            .named_class(text)
            .and_then(|c| self.prototypes[c].as_ref());
        Ok(Some(match proto {
            Some(p) => {
                let norm = p.iter().map(|v| v * v).sum::<f64>().sqrt();
                let k = self.noise * norm / (p.len().max(1) as f64).sqrt();
                p.iter().zip(&jitter).map(|(p, j)| p + k * j).collect()
            }
            None => jitter,
        }))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendingRationale {
    pub node_id: NodeId,
    pub rationale_text: String,
}

/// File exchange with the offline embedding tool: unknown rationales are
/// appended to `rationales_pending.jsonl`; embedded ones are read from
/// `rationale_embeddings.f32le` via `index.json` (node id -> row).
pub struct ExternalEncoder {
    dir: PathBuf,
    dim: usize,
    index: HashMap<NodeId, usize>,
    rows: Vec<f32>,
    pending: Mutex<HashSet<NodeId>>,
}

impl ExternalEncoder {
    pub fn open(dir: impl AsRef<Path>, dim: usize) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        let index_path = dir.join(RATIONALE_INDEX_FILE);
        let emb_path = dir.join(RATIONALE_EMBEDDINGS_FILE);
        let (index, rows) = if index_path.is_file() && emb_path.is_file() {
            let raw: HashMap<String, usize> =
                serde_json::from_str(&fs::read_to_string(&index_path)?)?;
            let mut index = HashMap::with_capacity(raw.len());
            for (k, row) in raw {
                let id = k.parse().map_err(|_| {
                    TeacherError::Exchange(format!("non-numeric node id {k:?} in index.json"))
                })?;
                index.insert(id, row);
            }
            let bytes = fs::read(&emb_path)?;
            if bytes.len() % (4 * dim) != 0 {
                return Err(TeacherError::Exchange(format!(
                    "{} bytes is not a whole number of {dim}-dim rows",
                    bytes.len()
                )));
            }
            let rows: Vec<f32> = bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            let n_rows = rows.len() / dim;
            if let Some((id, row)) = index.iter().find(|(_, &r)| r >= n_rows) {
                return Err(TeacherError::Exchange(format!(
                    "node {id} maps to row {row}, file has {n_rows} rows"
                )));
            }
            (index, rows)
        } else {
            (HashMap::new(), Vec::new())
        };
        let mut pending = HashSet::new();
        let pending_path = dir.join(PENDING_FILE);
        if pending_path.is_file() {
            for line in BufReader::new(fs::File::open(&pending_path)?).lines() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let rec: PendingRationale = serde_json::from_str(&line)?;
                pending.insert(rec.node_id);
            }
        }
        Ok(Self {
            dir,
            dim,
            index,
            rows,
            pending: Mutex::new(pending),
        })
    }

    pub fn lookup(&self, node_id: NodeId) -> Option<Vec<f64>> {
        let row = *self.index.get(&node_id)?;
        Some(
            self.rows[row * self.dim..(row + 1) * self.dim]
                .iter()
                .map(|&x| x as f64)
                .collect(),
        )
    }
}

impl RationaleEncoder for ExternalEncoder {
    fn encode(&self, node_id: NodeId, text: &str) -> Result<Option<Vec<f64>>> {
        if let Some(v) = self.lookup(node_id) {
            return Ok(Some(v));
        }
        let mut pending = self.pending.lock().expect("pending lock");
        if pending.insert(node_id) {
            let mut f = OpenOptions::new()
                .create(true)
                .append(true)
                .open(self.dir.join(PENDING_FILE))?;
            let rec = PendingRationale {
                node_id,
                rationale_text: text.to_owned(),
            };
            writeln!(f, "{}", serde_json::to_string(&rec)?)?;
        }
        Ok(None)
    }
}
