//! Two-layer GCN student with hand-written backpropagation, the
//! distillation objective and its training loop.

mod adjacency;
mod checkpoint;
pub mod gradcheck;
pub mod loss;
mod model;
mod train;

pub use adjacency::NormAdj;
pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use loss::{
    entropy, loss_feature, loss_student, loss_teacher, loss_total, objective, softmax_rows,
    teacher_distribution, LossBreakdown, LossWeights, TrainBundle,
};
pub use model::{
    argmax_rows, DropoutMask, ForwardCache, ForwardPass, GcnHyper, GcnModel, Gradients, GraphInput,
    Mode,
};
pub use train::{accuracy, train, EpochRecord, History, TrainOptions, Validation};

#[derive(Debug, thiserror::Error)]
pub enum GnnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite input: {0}")]
    NonFiniteInput(String),
    #[error("loss weights alpha={alpha}, beta={beta} need alpha, beta >= 0 and alpha + beta < 1")]
    BadWeights { alpha: f64, beta: f64 },
    #[error("teacher distributions missing from the training bundle")]
    MissingTeacherProbs,
    #[error("rationale targets missing from the training bundle")]
    MissingRationaleTarget,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },
    #[error("invalid training bundle: {0}")]
    InvalidBundle(String),
    #[error("forward cache is stale or was not produced in train mode")]
    StaleCache,
    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("bad checkpoint: {0}")]
    BadCheckpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = GnnError> = std::result::Result<T, E>;
