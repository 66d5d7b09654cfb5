use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{AlignMode, RunConfig, TeacherKind};
use super::{AtSeed, PipelineError, Result};
use crate::active::{
    run_active_loop, select_stage, stage_scores, ActiveError, Pick, ScoreRow, SelectionLogEntry,
    SelectionState,
};
use crate::gnn::{
    argmax_rows, save_checkpoint, teacher_distribution, train, GcnModel, GraphInput, History,
    TrainBundle, Validation,
};
use crate::graph::{
    load_dataset, make_split, make_split_from_pools, NodeId, SplitFile, SplitSpec, TextGraph,
};
use crate::teacher::encoder::PENDING_FILE;
use crate::teacher::prompt::{DEFAULT_LOGITS_TEMPLATE, DEFAULT_RATIONALE_TEMPLATE};
use crate::teacher::{
    align_rationale, confidences_to_logits, max_pool_align, train_align_mlp, AlignHyper, AlignMlp,
    ExternalEncoder, HttpTeacher, HttpTeacherConfig, NoisyTeacher, OracleTeacher, PromptConfig,
    PrototypeEncoder, RationaleEncoder, Teacher, TeacherCache, TeacherClient, TeacherError,
    CACHE_FILE,
};

pub const REPORT_FILE: &str = "report.json";
pub const TABLE_FILE: &str = "table.txt";
pub const HISTORY_FILE: &str = "history.csv";
pub const SELECTION_LOG_FILE: &str = "selection_log.jsonl";
pub const MODEL_FILE: &str = "model.gdck";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedReport {
    pub seed: u64,
    pub test_accuracy: f64,
    pub best_val_accuracy: f64,
    pub best_epoch: usize,
    pub labeled: usize,
    pub selected: usize,
    /// `None` when active learning is off.
    pub budget_met: Option<bool>,
    /// Fresh teacher queries made while running this seed.
    pub teacher_queries: usize,
    pub selection_log: Vec<SelectionLogEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub method: String,
    pub config: RunConfig,
    pub config_fingerprint: String,
    /// How teacher confidences become distillation logits.
    pub logit_transform: String,
    pub std_kind: String,
    pub seeds: Vec<SeedReport>,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    pub teacher_queries: usize,
}

impl RunReport {
    /// `Method | n-shot` table with accuracies in percent as `mean±(std)`.
    pub fn table(&self) -> String {
        let head = format!("{}-shot", self.config.shots);
        let cell = format!(
            "{:.2}±({:.2})",
            100.0 * self.mean_accuracy,
            100.0 * self.std_accuracy
        );
        let w0 = self.method.chars().count().max("Method".len());
        let w1 = cell.chars().count().max(head.len());
        format!(
            "{:<w0$} | {:<w1$}\n{}-+-{}\n{:<w0$} | {:<w1$}\n",
            "Method",
            head,
            "-".repeat(w0),
            "-".repeat(w1),
            self.method,
            cell,
        )
    }
}

/// Arithmetic mean and population standard deviation.
pub fn mean_and_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn method_label(cfg: &RunConfig) -> String {
    let a = &cfg.ablations;
    if !a.needs_teacher() {
        return "GCN".into();
    }
    let mut parts = Vec::new();
    if a.use_soft_labels {
        parts.push("soft labels".to_string());
    }
    if a.use_rationales {
        let how = match a.align {
            Some(AlignMode::MaxPool) => "max-pool",
            _ => "mlp",
        };
        parts.push(format!("rationales/{how}"));
    }
    if a.use_al {
        let mode = serde_json::to_value(a.al_mode).expect("mode serializes");
        parts.push(format!("AL/{}", mode.as_str().unwrap_or("?")));
    }
    format!("GCN + LLM ({})", parts.join(", "))
}

/// The same run with every teacher-dependent component off.
pub fn baseline_config(cfg: &RunConfig) -> RunConfig {
    RunConfig {
        ablations: super::Ablations::none(),
        ..cfg.clone()
    }
}

/// Fraction of `nodes` whose argmax prediction (lowest class on ties)
/// matches the ground truth.
pub fn evaluate(
    model: &GcnModel,
    input: &GraphInput,
    g: &TextGraph,
    nodes: &[NodeId],
) -> Result<f64> {
    let labels = nodes
        .iter()
        .map(|&v| g.label(v).ok_or(PipelineError::UnlabeledNode(v)))
        .collect::<Result<Vec<_>>>()?;
    if nodes.is_empty() {
        return Ok(0.0);
    }
    let pred = argmax_rows(&model.predict(input)?);
    let hits = nodes
        .iter()
        .zip(&labels)
        .filter(|(&v, &y)| pred[v] == y)
        .count();
    Ok(hits as f64 / nodes.len() as f64)
}

/// Builds the configured teacher, or `None` when no ablation needs one.
pub fn build_teacher(cfg: &RunConfig, g: &TextGraph) -> Result<Option<Teacher>> {
    if !cfg.ablations.needs_teacher() {
        return Ok(None);
    }
    let t = &cfg.teacher;
    let (client, encoder): (Box<dyn TeacherClient>, Box<dyn RationaleEncoder>) = match t.kind {
        TeacherKind::Http => {
            let client = HttpTeacher::new(HttpTeacherConfig {
                endpoint: t.endpoint.clone().unwrap_or_default(),
                model_name: t.model_name.clone().unwrap_or_default(),
                token_env: t.token_env.clone(),
                timeout_secs: t.timeout_secs,
            });
            let dir = cfg.dataset_dir.as_ref().ok_or_else(|| {
                PipelineError::InvalidConfig("http teacher needs dataset_dir".into())
            })?;
            (
                Box::new(client),
                Box::new(ExternalEncoder::open(dir, g.emb_dim())?),
            )
        }
        TeacherKind::Oracle => (
            Box::new(OracleTeacher::from_graph(g)),
            Box::new(PrototypeEncoder::from_graph(g, t.mock_embedding_noise)),
        ),
        TeacherKind::Noisy => {
            let profile = t.noise_profile.clone().unwrap_or_default();
            (
                Box::new(NoisyTeacher::from_graph(g, &profile, t.noise_seed)),
                Box::new(PrototypeEncoder::from_graph(g, t.mock_embedding_noise)),
            )
        }
    };
    let cache = match cache_path(cfg) {
        Some(p) => TeacherCache::open(p)?,
        None => TeacherCache::in_memory(),
    };
    let names = g.class_names().to_vec();
    let prompts = match t.k_guesses {
        Some(k) => PromptConfig::with_templates(
            names,
            k,
            DEFAULT_LOGITS_TEMPLATE.into(),
            DEFAULT_RATIONALE_TEMPLATE.into(),
        )?,
        None => PromptConfig::new(names)?,
    };
    Ok(Some(Teacher::new(
        client,
        encoder,
        cache,
        prompts,
        t.policy(),
    )))
}

fn cache_path(cfg: &RunConfig) -> Option<PathBuf> {
    cfg.cache_path
        .clone()
        .or_else(|| cfg.output_dir.as_ref().map(|d| d.join(CACHE_FILE)))
}

enum Aligner {
    Off,
    Mlp(Box<AlignMlp>),
    MaxPool,
}

/// Trains students for one seed: the teacher terms are filled for every
/// training node from the (cached) teacher.
pub struct Student<'a> {
    cfg: &'a RunConfig,
    g: &'a TextGraph,
    input: &'a GraphInput,
    teacher: Option<&'a Teacher>,
    aligner: Aligner,
    seed: u64,
    val_nodes: Vec<NodeId>,
    val_labels: Vec<usize>,
    pending_path: Option<PathBuf>,
}

impl<'a> Student<'a> {
    pub fn new(
        cfg: &'a RunConfig,
        g: &'a TextGraph,
        input: &'a GraphInput,
        split: &SplitSpec,
        teacher: Option<&'a Teacher>,
    ) -> Result<Self> {
        let weights = cfg.loss_weights();
        let aligner = if weights.beta > 0.0 {
            match cfg.ablations.align {
                Some(AlignMode::MaxPool) => Aligner::MaxPool,
                _ => {
                    let labels: Vec<usize> = split
                        .labeled
                        .iter()
                        .map(|&v| g.label(v).ok_or(PipelineError::UnlabeledNode(v)))
                        .collect::<Result<_>>()?;
                    let x = g.embeddings().select(ndarray::Axis(0), &split.labeled);
                    let hyper = AlignHyper {
                        seed: split.seed,
                        ..cfg.align_mlp
                    };
                    Aligner::Mlp(Box::new(train_align_mlp(
                        x.view(),
                        &labels,
                        g.num_classes(),
                        &hyper,
                    )?))
                }
            }
        } else {
            Aligner::Off
        };
        let (val_nodes, val_labels): (Vec<_>, Vec<_>) = split
            .val
            .iter()
            .filter_map(|&v| g.label(v).map(|y| (v, y)))
            .unzip();
        Ok(Self {
            cfg,
            g,
            input,
            teacher,
            aligner,
            seed: split.seed,
            val_nodes,
            val_labels,
            pending_path: cfg.dataset_dir.as_ref().map(|d| d.join(PENDING_FILE)),
        })
    }

    pub fn bundle(&self, nodes: &[NodeId], labels: &[usize]) -> Result<TrainBundle, ActiveError> {
        let weights = self.cfg.loss_weights();
        let mut probs = None;
        let mut targets = None;
        if weights.alpha > 0.0 || weights.beta > 0.0 {
            let teacher = self.teacher.expect("teacher present when its terms are on");
            let records = teacher
                .query_many(self.g, nodes)
                .into_iter()
                .collect::<Result<Vec<_>, _>>()?;
            if weights.alpha > 0.0 {
                probs = Some(
                    records
                        .iter()
                        .map(|r| {
                            teacher_distribution(
                                &confidences_to_logits(&r.confidences),
                                weights.tau,
                            )
                        })
                        .collect::<Result<Vec<_>, _>>()?,
                );
            }
            if weights.beta > 0.0 {
                let pending = records
                    .iter()
                    .filter(|r| r.rationale_embedding.is_none())
                    .count();
                if pending > 0 {
                    return Err(TeacherError::EmbeddingsPending {
                        count: pending,
                        path: self.pending_path.clone().unwrap_or_default(),
                    }
                    .into());
                }
                let mut out = Vec::with_capacity(records.len());
                for r in &records {
                    let emb = r.rationale_embedding.as_ref().expect("checked above");
                    out.push(match &self.aligner {
                        Aligner::Mlp(m) => align_rationale(m, ndarray::ArrayView1::from(emb))?,
                        Aligner::MaxPool => max_pool_align(emb, self.g.num_classes())?,
                        Aligner::Off => unreachable!("aligner built when beta > 0"),
                    });
                }
                targets = Some(out);
            }
        }
        Ok(TrainBundle::new(
            nodes.to_vec(),
            labels.to_vec(),
            probs,
            targets,
            weights,
        )?)
    }

    /// Fresh initialization from the seed, then early-stopped training.
    pub fn fit(
        &self,
        nodes: &[NodeId],
        labels: &[usize],
    ) -> Result<(GcnModel, History), ActiveError> {
        let bundle = self.bundle(nodes, labels)?;
        let model = GcnModel::new(
            self.g.emb_dim(),
            self.g.num_classes(),
            self.cfg.training.hyper(),
            self.seed,
        );
        let val = Validation {
            nodes: &self.val_nodes,
            labels: &self.val_labels,
        };
        Ok(train(
            model,
            self.input,
            &bundle,
            val,
            &self.cfg.training.options(self.seed),
        )?)
    }
}

fn split_for(
    cfg: &RunConfig,
    g: &TextGraph,
    pools: Option<&SplitFile>,
    seed: u64,
) -> Result<SplitSpec> {
    Ok(match pools {
        Some(p) => make_split_from_pools(g, p, cfg.shots, seed)?,
        None => make_split(g, cfg.shots, cfg.split, seed)?,
    })
}

/// Loads `dataset_dir` (and its `splits.json`, if any) and runs every seed.
pub fn run(cfg: &RunConfig) -> Result<RunReport> {
    let dir = cfg
        .dataset_dir
        .as_ref()
        .ok_or_else(|| PipelineError::InvalidConfig("dataset_dir is required".into()))?;
    let g = load_dataset(dir)?;
    let pools = SplitFile::load(dir)?;
    run_with_graph(cfg, &g, pools.as_ref())
}

pub fn run_with_graph(
    cfg: &RunConfig,
    g: &TextGraph,
    pools: Option<&SplitFile>,
) -> Result<RunReport> {
    cfg.validate()?;
    let input = GraphInput::from_graph(g);
    if let Some(dir) = &cfg.output_dir {
        fs::create_dir_all(dir)?;
    }
    let teacher = build_teacher(cfg, g)?;
    let mut seeds = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        seeds.push(run_seed(cfg, g, &input, pools, teacher.as_ref(), seed)?);
    }
    let accs: Vec<f64> = seeds.iter().map(|s| s.test_accuracy).collect();
    let (mean, std) = mean_and_std(&accs);
    let report = RunReport {
        method: method_label(cfg),
        config: cfg.clone(),
        config_fingerprint: cfg.fingerprint(),
        logit_transform: "l = ln(max(confidence, 1e-6))".into(),
        std_kind: "population".into(),
        teacher_queries: seeds.iter().map(|s| s.teacher_queries).sum(),
        seeds,
        mean_accuracy: mean,
        std_accuracy: std,
    };
    if let Some(dir) = &cfg.output_dir {
        fs::write(
            dir.join(REPORT_FILE),
            serde_json::to_string_pretty(&report)? + "\n",
        )?;
        fs::write(dir.join(TABLE_FILE), report.table())?;
    }
    Ok(report)
}

fn run_seed(
    cfg: &RunConfig,
    g: &TextGraph,
    input: &GraphInput,
    pools: Option<&SplitFile>,
    teacher: Option<&Teacher>,
    seed: u64,
) -> Result<SeedReport> {
    let queries_before = teacher.map_or(0, Teacher::fresh_queries);
    let split = split_for(cfg, g, pools, seed).at(seed, "split")?;
    let seed_dir = cfg
        .output_dir
        .as_ref()
        .map(|d| d.join(format!("seed_{seed}")));
    if let Some(d) = &seed_dir {
        fs::create_dir_all(d).at(seed, "output")?;
    }
    let student = Student::new(cfg, g, input, &split, teacher).at(seed, "alignment")?;

    let (model, history, state, log) = if cfg.ablations.use_al {
        let teacher = teacher.expect("teacher built when active learning is on");
        let mut file = match &seed_dir {
            Some(d) => Some(BufWriter::new(
                File::create(d.join(SELECTION_LOG_FILE)).at(seed, "output")?,
            )),
            None => None,
        };
        let out = run_active_loop(
            g,
            input,
            &split,
            teacher,
            &cfg.active(seed),
            |nodes, labels| student.fit(nodes, labels),
            file.as_mut().map(|f| f as &mut dyn Write),
        )
        .at(seed, "active learning")?;
        if let Some(f) = file.as_mut() {
            f.flush().at(seed, "output")?;
        }
        (
            out.model,
            out.history,
            Some((out.state, out.budget_met)),
            out.log,
        )
    } else {
        let (nodes, labels) = labeled_set(g, &split).at(seed, "training")?;
        let (model, history) = student.fit(&nodes, &labels).at(seed, "training")?;
        if let Some(d) = &seed_dir {
            File::create(d.join(SELECTION_LOG_FILE)).at(seed, "output")?;
        }
        (model, history, None, Vec::new())
    };

    let test_accuracy = evaluate(&model, input, g, &split.test).at(seed, "evaluation")?;
    if let Some(d) = &seed_dir {
        write_seed_outputs(d, &model, &history).at(seed, "output")?;
    }
    Ok(SeedReport {
        seed,
        test_accuracy,
        best_val_accuracy: history.best_val_acc,
        best_epoch: history.best_epoch,
        labeled: split.labeled.len(),
        selected: state.as_ref().map_or(0, |(s, _)| s.selected.len()),
        budget_met: state.as_ref().map(|(_, met)| *met),
        teacher_queries: teacher.map_or(0, Teacher::fresh_queries) - queries_before,
        selection_log: log,
    })
}

fn labeled_set(g: &TextGraph, split: &SplitSpec) -> Result<(Vec<NodeId>, Vec<usize>)> {
    let labels = split
        .labeled
        .iter()
        .map(|&v| g.label(v).ok_or(PipelineError::UnlabeledNode(v)))
        .collect::<Result<Vec<_>>>()?;
    Ok((split.labeled.clone(), labels))
}

fn write_seed_outputs(dir: &Path, model: &GcnModel, history: &History) -> Result<()> {
    let mut h = BufWriter::new(File::create(dir.join(HISTORY_FILE))?);
    history.write_csv(&mut h)?;
    h.flush()?;
    let mut m = BufWriter::new(File::create(dir.join(MODEL_FILE))?);
    save_checkpoint(model, &mut m)?;
    m.flush()?;
    Ok(())
}

/// Scores and picks of the first selection stage for one seed, without
/// querying the teacher for the picks.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StagePreview {
    pub seed: u64,
    pub candidates: Vec<ScoreRow>,
    pub picks: Vec<PreviewPick>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PreviewPick {
    pub node_id: NodeId,
    pub pseudo_class: usize,
    pub budget_class: usize,
    pub s_total: f64,
}

pub fn preview_stage(
    cfg: &RunConfig,
    g: &TextGraph,
    pools: Option<&SplitFile>,
    seed: u64,
) -> Result<StagePreview> {
    cfg.validate()?;
    let input = GraphInput::from_graph(g);
    let teacher = build_teacher(cfg, g)?;
    let split = split_for(cfg, g, pools, seed)?;
    let student = Student::new(cfg, g, &input, &split, teacher.as_ref())?;
    let (nodes, labels) = labeled_set(g, &split)?;
    let (model, _) = student.fit(&nodes, &labels)?;
    let acfg = cfg.active(seed);
    let state = SelectionState {
        labeled: split.labeled.clone(),
        selected: Vec::new(),
        excluded: Vec::new(),
        budget_per_class: acfg.budget_per_class,
        stage_size: acfg.effective_stage_size(),
        stages: 0,
    };
    let quota: Vec<usize> = state
        .remaining(g.num_classes())
        .iter()
        .map(|&r| r.min(state.stage_size))
        .collect();
    let pool = split.unlabeled_pool();
    let mut rng = rand::SeedableRng::seed_from_u64(seed);
    let (rows, gnn_labels) = stage_scores(&model, g, &input, &pool, &quota, &acfg, &mut rng)?;
    let picks: Vec<Pick> = select_stage(&rows, &gnn_labels, &quota)?;
    let mut candidates: Vec<ScoreRow> = rows.iter().filter(|r| r.candidate).cloned().collect();
    candidates.sort_by(|a, b| b.s_total.total_cmp(&a.s_total).then(a.node.cmp(&b.node)));
    Ok(StagePreview {
        seed,
        candidates,
        picks: picks
            .iter()
            .map(|p| PreviewPick {
                node_id: p.node,
                pseudo_class: p.pseudo_class,
                budget_class: p.budget_class,
                s_total: rows[p.row].s_total,
            })
            .collect(),
    })
}
