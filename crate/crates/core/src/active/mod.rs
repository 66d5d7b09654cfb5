//! Graph-LLM active learning: rank scores over the unlabeled pool,
//! neighbourhood entropy change and the budgeted per-class selection loop.

mod entropy;
mod score;
mod select;

pub use entropy::{entropy_reduction, EntropyContext};
pub use score::{candidate_set, rank_score, score_entropy, score_gl, score_total, Order, ScoreRow};
pub use select::{
    extend_for_coverage, run_active_loop, select_stage, stage_scores, ActiveConfig, ActiveOutcome,
    AlMode, Pick, Selection, SelectionLogEntry, SelectionState,
};

use crate::gnn::GnnError;
use crate::graph::{GraphError, NodeId};
use crate::teacher::TeacherError;

#[derive(Debug, thiserror::Error)]
pub enum ActiveError {
    #[error("unlabeled pool is empty")]
    EmptyPool,
    #[error("node {0} has no neighbours")]
    IsolatedNode(NodeId),
    #[error("no selectable candidates remain")]
    NoCandidates,
    #[error("invalid active-learning config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Gnn(#[from] GnnError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Teacher(#[from] TeacherError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = ActiveError> = std::result::Result<T, E>;
