//! Everything between the student and the LLM: prompt rendering, the
//! teacher clients (HTTP and mocks), response parsing, the JSONL cache and
//! rationale alignment.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::graph::NodeId;

pub mod align;
pub mod cache;
pub mod client;
pub mod encoder;
pub mod mock;
pub mod parse;
pub mod prompt;
pub mod query;

pub use align::{align_rationale, max_pool_align, train_align_mlp, AlignHyper, AlignMlp};
pub use cache::{TeacherCache, CACHE_FILE};
pub use client::{
    HttpTeacher, HttpTeacherConfig, PromptKind, TeacherClient, TeacherRequest, TransportError,
};
pub use encoder::{ExternalEncoder, HashGaussianEncoder, PrototypeEncoder, RationaleEncoder};
pub use mock::{NoiseProfile, NoisyTeacher, OracleTeacher};
pub use parse::{confidences_to_logits, parse_confidences};
pub use prompt::{render_prompts, PromptConfig, RenderedPrompts};
pub use query::{QueryPolicy, Teacher};

#[derive(Debug, thiserror::Error)]
pub enum TeacherError {
    #[error("node text is empty")]
    EmptyText,
    #[error("invalid prompt template: {0}")]
    Template(String),
    #[error("unusable teacher response: {0}")]
    ResponseInvalid(String),
    #[error("teacher unavailable for node {node}: {reason}")]
    Unavailable { node: NodeId, reason: String },
    #[error("teacher query budget of {cap} exhausted")]
    BudgetExhausted { cap: usize },
    #[error("node {node} has no text to send to the teacher")]
    MissingText { node: NodeId },
    #[error("expected dimension {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },
    #[error("cannot max-pool {dim} dimensions into {classes} classes")]
    DimTooSmall { dim: usize, classes: usize },
    #[error("alignment MLP diverged at epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("need at least {needed} labeled embeddings, got {found}")]
    InsufficientData { needed: usize, found: usize },
    #[error("{count} rationale embeddings pending in {path}; run the embedding tool and retry")]
    EmbeddingsPending { count: usize, path: PathBuf },
    #[error("rationale embedding exchange: {0}")]
    Exchange(String),
    #[error("corrupt cache line {line} in {path}: {msg}")]
    CorruptCache {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = TeacherError> = std::result::Result<T, E>;

/// Parsed teacher output for one node, as stored in the cache.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeacherRecord {
    pub node_id: NodeId,
    pub prompt_hash: String,
    pub answer: usize,
    pub confidences: Vec<f64>,
    pub rationale_text: String,
    /// `None` until the external encoder has embedded the rationale.
    pub rationale_embedding: Option<Vec<f64>>,
    pub teacher_name: String,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
}
