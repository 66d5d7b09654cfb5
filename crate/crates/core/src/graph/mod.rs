//! Text-attributed graph storage, dataset IO, splits and structural metrics.

mod io;
mod split;
mod synth;

use std::collections::HashSet;
use std::path::PathBuf;

use ndarray::Array2;

pub use io::{load_dataset, write_dataset, DatasetMeta, NodeRecord, SplitFile};
pub use split::{make_split, make_split_from_pools, SplitFractions, SplitSpec};
pub use synth::PlantedPartition;

/// Node identifier; always an index in `0..num_nodes`.
pub type NodeId = usize;

#[derive(Debug, thiserror::Error)]
pub enum GraphError {
    #[error("missing dataset file {0}")]
    MissingFile(PathBuf),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("node {node} has label {label}, outside [0, {num_classes})")]
    BadLabel {
        node: NodeId,
        label: i64,
        num_classes: usize,
    },
    #[error("edge ({src}, {dst}) references a node outside [0, {num_nodes})")]
    DanglingEdge {
        src: usize,
        dst: usize,
        num_nodes: usize,
    },
    #[error("invalid node id {0}")]
    InvalidNode(NodeId),
    #[error("class {class} has {available} labeled candidates, {needed} shots requested")]
    InsufficientClassSupport {
        class: usize,
        available: usize,
        needed: usize,
    },
    #[error("invalid dataset: {0}")]
    Invalid(String),
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = GraphError> = std::result::Result<T, E>;

/// Immutable undirected text-attributed graph.
///
/// Self-loops are never stored; they are added only when the adjacency is
/// normalized for message passing.
#[derive(Debug, Clone)]
pub struct TextGraph {
    class_names: Vec<String>,
    edges: Vec<(NodeId, NodeId)>,
    neighbors: Vec<Vec<NodeId>>,
    embeddings: Array2<f64>,
    labels: Vec<Option<usize>>,
    raw_text: Vec<Option<String>>,
    encoder: Option<String>,
}

impl TextGraph {
    /// Builds and validates a graph. Edges are symmetrized: `(a, b)` and
    /// `(b, a)` are the same edge, later repeats and self-loops are dropped.
    pub fn new(
        class_names: Vec<String>,
        edges: Vec<(NodeId, NodeId)>,
        embeddings: Array2<f64>,
        labels: Vec<Option<usize>>,
        raw_text: Vec<Option<String>>,
    ) -> Result<Self> {
        let num_nodes = embeddings.nrows();
        if class_names.is_empty() {
            return Err(GraphError::Invalid("no classes".into()));
        }
        let distinct: HashSet<&str> = class_names.iter().map(String::as_str).collect();
        if distinct.len() != class_names.len() {
            return Err(GraphError::Invalid("class names are not distinct".into()));
        }
        if embeddings.ncols() == 0 {
            return Err(GraphError::ShapeMismatch("embedding dimension is 0".into()));
        }
        if labels.len() != num_nodes || raw_text.len() != num_nodes {
            return Err(GraphError::ShapeMismatch(format!(
                "{} embedding rows, {} labels, {} texts",
                num_nodes,
                labels.len(),
                raw_text.len()
            )));
        }
        if let Some((idx, _)) = embeddings.iter().enumerate().find(|(_, x)| !x.is_finite()) {
            return Err(GraphError::Invalid(format!(
                "non-finite embedding value at node {}",
                idx / embeddings.ncols()
            )));
        }
        let num_classes = class_names.len();
        for (node, label) in labels.iter().enumerate() {
            if let Some(l) = *label {
                if l >= num_classes {
                    return Err(GraphError::BadLabel {
                        node,
                        label: l as i64,
                        num_classes,
                    });
                }
            }
        }

        let mut seen = HashSet::new();
        let mut kept = Vec::with_capacity(edges.len());
        let mut neighbors = vec![Vec::new(); num_nodes];
        for (src, dst) in edges {
            if src >= num_nodes || dst >= num_nodes {
                return Err(GraphError::DanglingEdge {
                    src,
                    dst,
                    num_nodes,
                });
            }
            if src == dst {
                log::debug!("dropping self-loop on node {src}");
                continue;
            }
            if !seen.insert((src.min(dst), src.max(dst))) {
                continue;
            }
            kept.push((src, dst));
            neighbors[src].push(dst);
            neighbors[dst].push(src);
        }
        for list in &mut neighbors {
            list.sort_unstable();
        }

        Ok(Self {
            class_names,
            edges: kept,
            neighbors,
            embeddings,
            labels,
            raw_text,
            encoder: None,
        })
    }

    pub fn with_encoder(mut self, encoder: Option<String>) -> Self {
        self.encoder = encoder;
        self
    }

    pub fn num_nodes(&self) -> usize {
        self.embeddings.nrows()
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn emb_dim(&self) -> usize {
        self.embeddings.ncols()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    /// Undirected edges in ingest order.
    pub fn edges(&self) -> &[(NodeId, NodeId)] {
        &self.edges
    }

    pub fn embeddings(&self) -> &Array2<f64> {
        &self.embeddings
    }

    pub fn labels(&self) -> &[Option<usize>] {
        &self.labels
    }

    pub fn label(&self, v: NodeId) -> Option<usize> {
        self.labels.get(v).copied().flatten()
    }

    pub fn text(&self, v: NodeId) -> Option<&str> {
        self.raw_text.get(v).and_then(|t| t.as_deref())
    }

    pub fn encoder(&self) -> Option<&str> {
        self.encoder.as_deref()
    }

    /// Sorted neighbor list of `v`.
    pub fn neighbors(&self, v: NodeId) -> Result<&[NodeId]> {
        self.neighbors
            .get(v)
            .map(Vec::as_slice)
            .ok_or(GraphError::InvalidNode(v))
    }

    pub fn degree(&self, v: NodeId) -> Result<usize> {
        self.neighbors(v).map(<[_]>::len)
    }

    /// Fraction of `v`'s neighbors whose label under `label_source` equals
    /// `v`'s label. Isolated nodes score 0.
    pub fn homophily_ratio(&self, v: NodeId, label_source: &[usize]) -> Result<f64> {
        let nbrs = self.neighbors(v)?;
        if label_source.len() != self.num_nodes() {
            return Err(GraphError::ShapeMismatch(format!(
                "label source has {} entries for {} nodes",
                label_source.len(),
                self.num_nodes()
            )));
        }
        if nbrs.is_empty() {
            return Ok(0.0);
        }
        let own = label_source[v];
        let same = nbrs.iter().filter(|&&u| label_source[u] == own).count();
        Ok(same as f64 / nbrs.len() as f64)
    }

    /// Ground-truth labels for every node, or `None` if any node is unlabeled.
    pub fn full_labels(&self) -> Option<Vec<usize>> {
        self.labels.iter().copied().collect()
    }

    /// Mean embedding of all nodes with ground-truth label `class`.
    pub fn class_prototype(&self, class: usize) -> Option<Vec<f64>> {
        let members: Vec<usize> = (0..self.num_nodes())
            .filter(|&v| self.label(v) == Some(class))
            .collect();
        if members.is_empty() {
            return None;
        }
        let mut proto = vec![0.0; self.emb_dim()];
        for &v in &members {
            for (p, x) in proto.iter_mut().zip(self.embeddings.row(v)) {
                *p += x;
            }
        }
        let n = members.len() as f64;
        proto.iter_mut().for_each(|p| *p /= n);
        Some(proto)
    }
}
