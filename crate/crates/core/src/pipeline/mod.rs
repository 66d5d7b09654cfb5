//! End-to-end runs: configuration, per-seed training with optional teacher
//! distillation and active selection, evaluation and report files.

mod config;
mod prelim;
mod run;

pub use config::{Ablations, AlignMode, RunConfig, TeacherConfig, TeacherKind, TrainingConfig};
pub use prelim::{prelim_analysis, Bucket, BucketMetric, PrelimReport};
pub use run::{
    baseline_config, build_teacher, evaluate, mean_and_std, method_label, preview_stage, run,
    run_with_graph, RunReport, SeedReport, StagePreview, Student, HISTORY_FILE, MODEL_FILE,
    REPORT_FILE, SELECTION_LOG_FILE, TABLE_FILE,
};

pub use crate::gnn::gradcheck::{run_gradcheck, GradcheckOptions, GradcheckReport};

use crate::active::ActiveError;
use crate::gnn::GnnError;
use crate::graph::{GraphError, NodeId};
use crate::teacher::TeacherError;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("node {0} has no ground-truth label")]
    UnlabeledNode(NodeId),
    #[error("seed {seed}, {stage}: {source}")]
    AtSeed {
        seed: u64,
        stage: &'static str,
        #[source]
        source: Box<PipelineError>,
    },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Gnn(#[from] GnnError),
    #[error(transparent)]
    Teacher(#[from] TeacherError),
    #[error(transparent)]
    Active(#[from] ActiveError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = PipelineError> = std::result::Result<T, E>;

trait AtSeed<T> {
    fn at(self, seed: u64, stage: &'static str) -> Result<T>;
}

impl<T, E: Into<PipelineError>> AtSeed<T> for std::result::Result<T, E> {
    fn at(self, seed: u64, stage: &'static str) -> Result<T> {
        self.map_err(|e| PipelineError::AtSeed {
            seed,
            stage,
            source: Box::new(e.into()),
        })
    }
}
