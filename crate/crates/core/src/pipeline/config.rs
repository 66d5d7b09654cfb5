use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{PipelineError, Result};
use crate::active::{ActiveConfig, AlMode};
use crate::gnn::{GcnHyper, LossWeights, TrainOptions};
use crate::graph::SplitFractions;
use crate::teacher::{AlignHyper, NoiseProfile, QueryPolicy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TeacherKind {
    Http,
    Oracle,
    Noisy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TeacherConfig {
    pub kind: TeacherKind,
    pub endpoint: Option<String>,
    pub model_name: Option<String>,
    /// Environment variable holding the bearer token.
    pub token_env: Option<String>,
    pub timeout_secs: u64,
    pub noise_profile: Option<NoiseProfile>,
    /// Seeds the noisy teacher's per-node draws; independent of run seeds.
    pub noise_seed: u64,
    /// Jitter added to mock rationale embeddings.
    pub mock_embedding_noise: f64,
    pub k_guesses: Option<usize>,
    pub max_attempts: usize,
    pub backoff_ms: u64,
    pub max_queries: Option<usize>,
    pub in_flight: usize,
}

impl Default for TeacherConfig {
    fn default() -> Self {
        let policy = QueryPolicy::default();
        Self {
            kind: TeacherKind::Oracle,
            endpoint: None,
            model_name: None,
            token_env: Some("GRAPHDISTILL_TEACHER_TOKEN".into()),
            timeout_secs: 60,
            noise_profile: None,
            noise_seed: 0,
            mock_embedding_noise: 0.1,
            k_guesses: None,
            max_attempts: policy.max_attempts,
            backoff_ms: policy.backoff_ms,
            max_queries: policy.max_queries,
            in_flight: policy.in_flight,
        }
    }
}

impl TeacherConfig {
    pub fn policy(&self) -> QueryPolicy {
        QueryPolicy {
            max_attempts: self.max_attempts,
            backoff_ms: self.backoff_ms,
            max_queries: self.max_queries,
            in_flight: self.in_flight,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlignMode {
    Mlp,
    MaxPool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Ablations {
    pub use_soft_labels: bool,
    pub use_rationales: bool,
    pub use_al: bool,
    pub al_mode: AlMode,
    pub align: Option<AlignMode>,
}

impl Default for Ablations {
    fn default() -> Self {
        Self {
            use_soft_labels: true,
            use_rationales: true,
            use_al: true,
            al_mode: AlMode::GraphLlm,
            align: Some(AlignMode::Mlp),
        }
    }
}

impl Ablations {
    pub fn none() -> Self {
        Self {
            use_soft_labels: false,
            use_rationales: false,
            use_al: false,
            ..Self::default()
        }
    }

    pub fn needs_teacher(&self) -> bool {
        self.use_soft_labels || self.use_rationales || self.use_al
    }
}

/// Student backbone and optimizer settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub hidden: usize,
    pub dropout: f64,
    pub lr: f64,
    pub epochs: usize,
    pub patience: usize,
    pub weight_decay: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        let h = GcnHyper::default();
        let o = TrainOptions::default();
        Self {
            hidden: h.hidden,
            dropout: h.dropout,
            lr: o.lr,
            epochs: o.epochs,
            patience: o.patience,
            weight_decay: o.weight_decay,
        }
    }
}

impl TrainingConfig {
    pub fn hyper(&self) -> GcnHyper {
        GcnHyper {
            hidden: self.hidden,
            dropout: self.dropout,
        }
    }

    pub fn options(&self, seed: u64) -> TrainOptions {
        TrainOptions {
            lr: self.lr,
            epochs: self.epochs,
            patience: self.patience,
            weight_decay: self.weight_decay,
            seed,
        }
    }
}

/// One JSON document describing a full experiment. Missing fields take
/// their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub dataset_dir: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    /// Defaults to `teacher_cache.jsonl` in the output directory.
    pub cache_path: Option<PathBuf>,
    pub shots: usize,
    pub seeds: Vec<u64>,
    pub alpha: f64,
    pub beta: f64,
    pub tau: f64,
    pub budget_per_class: usize,
    pub stage_size: usize,
    pub candidate_factor: usize,
    pub split: SplitFractions,
    pub teacher: TeacherConfig,
    pub ablations: Ablations,
    pub training: TrainingConfig,
    pub align_mlp: AlignHyper,
}

impl Default for RunConfig {
    fn default() -> Self {
        let w = LossWeights::default();
        let a = ActiveConfig::default();
        Self {
            dataset_dir: None,
            output_dir: None,
            cache_path: None,
            shots: 3,
            seeds: vec![0, 1, 2],
            alpha: w.alpha,
            beta: w.beta,
            tau: w.tau,
            budget_per_class: a.budget_per_class,
            stage_size: a.stage_size,
            candidate_factor: a.candidate_factor,
            split: SplitFractions::default(),
            teacher: TeacherConfig::default(),
            ablations: Ablations::default(),
            training: TrainingConfig::default(),
            align_mlp: AlignHyper::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(PipelineError::InvalidConfig(m.to_owned()));
        if !(self.alpha >= 0.0 && self.beta >= 0.0 && self.alpha + self.beta < 1.0) {
            return bad("need alpha, beta >= 0 and alpha + beta < 1");
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return bad("tau must be positive");
        }
        if self.shots == 0 {
            return bad("shots must be >= 1");
        }
        if self.seeds.is_empty() {
            return bad("seeds must be non-empty");
        }
        if self.budget_per_class == 0 || self.stage_size == 0 || self.candidate_factor == 0 {
            return bad("budget, stage size and candidate factor must be >= 1");
        }
        if self.ablations.use_rationales && self.ablations.align.is_none() {
            return bad("rationales require an align mode");
        }
        if !(0.0..1.0).contains(&self.training.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        if self.training.hidden == 0 || self.align_mlp.hidden == 0 {
            return bad("hidden sizes must be >= 1");
        }
        if self.ablations.needs_teacher() && self.teacher.kind == TeacherKind::Http {
            if self.teacher.endpoint.is_none() || self.teacher.model_name.is_none() {
                return bad("http teacher needs endpoint and model_name");
            }
            if self.ablations.use_rationales && self.dataset_dir.is_none() {
                return bad("http teacher with rationales needs dataset_dir for embeddings");
            }
        }
        Ok(())
    }

    /// Loss weights with disabled terms zeroed.
    pub fn loss_weights(&self) -> LossWeights {
        LossWeights {
            alpha: if self.ablations.use_soft_labels {
                self.alpha
            } else {
                0.0
            },
            beta: if self.ablations.use_rationales {
                self.beta
            } else {
                0.0
            },
            tau: self.tau,
        }
    }

    pub fn active(&self, seed: u64) -> ActiveConfig {
        ActiveConfig {
            budget_per_class: self.budget_per_class,
            stage_size: self.stage_size,
            mode: self.ablations.al_mode,
            candidate_factor: self.candidate_factor,
            seed,
        }
    }

    /// SHA-256 of the JSON encoding with the output locations blanked.
    pub fn fingerprint(&self) -> String {
        let mut c = self.clone();
        c.output_dir = None;
        c.cache_path = None;
        let json = serde_json::to_string(&c).expect("config serializes");
        Sha256::digest(json.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}
