use std::collections::HashSet;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::entropy::EntropyContext;
use super::score::{by_score, candidate_set, score_entropy, score_gl, ScoreRow};
use super::{ActiveError, Result};
use crate::gnn::{argmax_rows, GcnModel, GraphInput, History};
use crate::graph::{NodeId, SplitSpec, TextGraph};
use crate::teacher::{Teacher, TeacherError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlMode {
    /// Iterative selection by `s_gl + s_e`.
    GraphLlm,
    /// Iterative, uniformly random within each pseudo-class.
    Random,
    /// A single Graph-LLM stage taking the whole budget.
    AllAtOnce,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActiveConfig {
    /// Teacher-labeled nodes per class (`B`).
    pub budget_per_class: usize,
    /// Picks per class per stage (`b`).
    pub stage_size: usize,
    pub mode: AlMode,
    /// Candidate set size is `candidate_factor * b * C`.
    pub candidate_factor: usize,
    /// Seeds random-mode draws.
    pub seed: u64,
}

impl Default for ActiveConfig {
    fn default() -> Self {
        Self {
            budget_per_class: 3,
            stage_size: 1,
            mode: AlMode::GraphLlm,
            candidate_factor: 10,
            seed: 0,
        }
    }
}

impl ActiveConfig {
    pub fn validate(&self) -> Result<()> {
        if self.budget_per_class == 0 || self.stage_size == 0 || self.candidate_factor == 0 {
            return Err(ActiveError::InvalidConfig(
                "budget, stage size and candidate factor must be >= 1".into(),
            ));
        }
        Ok(())
    }

    pub fn effective_stage_size(&self) -> usize {
        match self.mode {
            AlMode::AllAtOnce => self.budget_per_class,
            _ => self.stage_size,
        }
    }
}

/// A stage pick before the teacher has answered.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pick {
    /// Index into the score table.
    pub row: usize,
    pub node: NodeId,
    pub pseudo_class: usize,
    /// Class whose budget the pick is charged to. Differs from
    /// `pseudo_class` only when no candidate carries the charged class.
    pub budget_class: usize,
}

/// Per class `c`, the top `quota[c]` candidates of pseudo-class `c` by
/// `s_total` (node id ascending on ties). A class with quota but no
/// candidate of its own pseudo-class draws the best remaining candidates
/// of any class instead.
pub fn select_stage(rows: &[ScoreRow], gnn_labels: &[usize], quota: &[usize]) -> Result<Vec<Pick>> {
    let mut order: Vec<usize> = (0..rows.len()).filter(|&k| rows[k].candidate).collect();
    order.sort_by(|&a, &b| by_score(rows, a, b, |r| r.s_total));
    let mut taken = vec![false; rows.len()];
    let mut picks = Vec::new();
    let mut orphans = Vec::new();
    for (c, &q) in quota.iter().enumerate() {
        if q == 0 {
            continue;
        }
        let mut own = order
            .iter()
            .copied()
            .filter(|&k| gnn_labels[rows[k].node] == c)
            .peekable();
        if own.peek().is_none() {
            orphans.push(c);
            continue;
        }
        for k in own.take(q) {
            taken[k] = true;
            picks.push(pick(rows, gnn_labels, k, c));
        }
    }
    for c in orphans {
        let fill: Vec<usize> = order
            .iter()
            .copied()
            .filter(|&k| !taken[k])
            .take(quota[c])
            .collect();
        for k in fill {
            taken[k] = true;
            picks.push(pick(rows, gnn_labels, k, c));
        }
    }
    if picks.is_empty() {
        return Err(ActiveError::NoCandidates);
    }
    Ok(picks)
}

fn pick(rows: &[ScoreRow], gnn_labels: &[usize], k: usize, budget_class: usize) -> Pick {
    let node = rows[k].node;
    Pick {
        row: k,
        node,
        pseudo_class: gnn_labels[node],
        budget_class,
    }
}

/// Adds, for each class with quota and no member in `candidates`, the
/// top-`quota[c]` non-isolated rows of that pseudo-class by `s_gl`.
pub fn extend_for_coverage(
    rows: &[ScoreRow],
    candidates: &mut Vec<usize>,
    gnn_labels: &[usize],
    quota: &[usize],
) {
    let present: HashSet<usize> = candidates
        .iter()
        .map(|&k| gnn_labels[rows[k].node])
        .collect();
    let in_set: HashSet<usize> = candidates.iter().copied().collect();
    for (c, &q) in quota.iter().enumerate() {
        if q == 0 || present.contains(&c) {
            continue;
        }
        let mut own: Vec<usize> = (0..rows.len())
            .filter(|&k| {
                rows[k].degree > 0 && gnn_labels[rows[k].node] == c && !in_set.contains(&k)
            })
            .collect();
        own.sort_by(|&a, &b| by_score(rows, a, b, |r| r.s_gl));
        candidates.extend(own.into_iter().take(q));
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub node: NodeId,
    pub teacher_answer: usize,
    /// 1-based stage index.
    pub stage: usize,
    pub pseudo_class: usize,
    pub budget_class: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionState {
    pub labeled: Vec<NodeId>,
    pub selected: Vec<Selection>,
    /// Nodes dropped after an unusable teacher response.
    pub excluded: Vec<NodeId>,
    pub budget_per_class: usize,
    pub stage_size: usize,
    pub stages: usize,
}

impl SelectionState {
    /// `V_S` with hard labels: ground truth for the labeled set, teacher
    /// answers for selections.
    pub fn training_set(&self, g: &TextGraph) -> (Vec<NodeId>, Vec<usize>) {
        let mut nodes = Vec::new();
        let mut labels = Vec::new();
        for &v in &self.labeled {
            nodes.push(v);
            labels.push(g.label(v).expect("labeled node"));
        }
        for s in &self.selected {
            nodes.push(s.node);
            labels.push(s.teacher_answer);
        }
        (nodes, labels)
    }

    pub fn remaining(&self, classes: usize) -> Vec<usize> {
        let mut left = vec![self.budget_per_class; classes];
        for s in &self.selected {
            left[s.budget_class] -= 1;
        }
        left
    }
}

/// One line of `selection_log.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionLogEntry {
    pub stage: usize,
    pub node_id: NodeId,
    pub pseudo_class_at_selection: usize,
    pub teacher_answer: usize,
    pub s_gl: f64,
    pub s_e: f64,
    pub s_total: f64,
    pub p: f64,
    pub hr: f64,
    pub degree: usize,
    pub budget_class: usize,
}

pub struct ActiveOutcome {
    pub model: GcnModel,
    pub history: History,
    pub state: SelectionState,
    pub log: Vec<SelectionLogEntry>,
    /// False when the pool ran dry before `B * C` selections.
    pub budget_met: bool,
}

/// Builds the stage score table for `pool` under `model`.
pub fn stage_scores(
    model: &GcnModel,
    g: &TextGraph,
    input: &GraphInput,
    pool: &[NodeId],
    quota: &[usize],
    cfg: &ActiveConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<ScoreRow>, Vec<usize>)> {
    let ctx = EntropyContext::new(model, input)?;
    let gnn_labels = argmax_rows(ctx.probs());
    let mut rows = score_gl(ctx.probs(), g, &gnn_labels, pool)?;
    match cfg.mode {
        AlMode::Random => {
            for r in rows.iter_mut() {
                r.candidate = r.degree > 0;
                r.s_e = 0.0;
                r.s_total = rng.random();
            }
        }
        AlMode::GraphLlm | AlMode::AllAtOnce => {
            let cap = cfg.candidate_factor * cfg.effective_stage_size() * g.num_classes();
            let mut cands = candidate_set(&rows, cap);
            extend_for_coverage(&rows, &mut cands, &gnn_labels, quota);
            score_entropy(&mut rows, &cands, &ctx, g)?;
        }
    }
    Ok((rows, gnn_labels))
}

/// Iterative selection: fit on `V_S`, score `V_u`, pick up to `b` nodes per
/// pseudo-class, label them with the teacher, repeat until `B * C` nodes
/// are selected or the pool is exhausted, then fit once more. In random
/// mode `s_total` holds the random priority.
///
/// `fit` trains a student on the given nodes and hard labels. Log entries
/// are written to `log` as soon as each pick is labeled.
pub fn run_active_loop<F>(
    g: &TextGraph,
    input: &GraphInput,
    split: &SplitSpec,
    teacher: &Teacher,
    cfg: &ActiveConfig,
    mut fit: F,
    mut log: Option<&mut dyn Write>,
) -> Result<ActiveOutcome>
where
    F: FnMut(&[NodeId], &[usize]) -> Result<(GcnModel, History)>,
{
    cfg.validate()?;
    let classes = g.num_classes();
    let b = cfg.effective_stage_size();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut state = SelectionState {
        labeled: split.labeled.clone(),
        selected: Vec::new(),
        excluded: Vec::new(),
        budget_per_class: cfg.budget_per_class,
        stage_size: b,
        stages: 0,
    };
    let mut entries = Vec::new();
    let unlabeled = split.unlabeled_pool();

    loop {
        let remaining = state.remaining(classes);
        if remaining.iter().all(|&r| r == 0) {
            break;
        }
        let gone: HashSet<NodeId> = state
            .selected
            .iter()
            .map(|s| s.node)
            .chain(state.excluded.iter().copied())
            .collect();
        let pool: Vec<NodeId> = unlabeled
            .iter()
            .copied()
            .filter(|v| !gone.contains(v))
            .collect();
        if pool.is_empty() {
            break;
        }
        let (nodes, labels) = state.training_set(g);
        let (model, _) = fit(&nodes, &labels)?;
        let stage = state.stages + 1;
        let mut quota: Vec<usize> = remaining.iter().map(|&r| r.min(b)).collect();
        let (mut rows, gnn_labels) = stage_scores(&model, g, input, &pool, &quota, cfg, &mut rng)?;

        let excluded_before = state.excluded.len();
        let mut any = false;
        loop {
            let picks = match select_stage(&rows, &gnn_labels, &quota) {
                Ok(p) => p,
                Err(ActiveError::NoCandidates) => break,
                Err(e) => return Err(e),
            };
            let ids: Vec<NodeId> = picks.iter().map(|p| p.node).collect();
            let answers = teacher.query_many(g, &ids);
            let mut failed = false;
            for (pk, res) in picks.iter().zip(answers) {
                rows[pk.row].candidate = false;
                match res {
                    Ok(rec) => {
                        any = true;
                        quota[pk.budget_class] -= 1;
                        state.selected.push(Selection {
                            node: pk.node,
                            teacher_answer: rec.answer,
                            stage,
                            pseudo_class: pk.pseudo_class,
                            budget_class: pk.budget_class,
                        });
                        let r = &rows[pk.row];
                        let entry = SelectionLogEntry {
                            stage,
                            node_id: pk.node,
                            pseudo_class_at_selection: pk.pseudo_class,
                            teacher_answer: rec.answer,
                            s_gl: r.s_gl,
                            s_e: r.s_e,
                            s_total: r.s_total,
                            p: r.p,
                            hr: r.hr,
                            degree: r.degree,
                            budget_class: pk.budget_class,
                        };
                        if let Some(w) = log.as_deref_mut() {
                            serde_json::to_writer(&mut *w, &entry)?;
                            writeln!(w)?;
                        }
                        entries.push(entry);
                    }
                    Err(TeacherError::ResponseInvalid(msg)) => {
                        log::warn!("excluding node {}: {msg}", pk.node);
                        state.excluded.push(pk.node);
                        failed = true;
                    }
                    Err(e) => {
                        if let Some(w) = log.as_deref_mut() {
                            w.flush()?;
                        }
                        return Err(e.into());
                    }
                }
            }
            if !failed || quota.iter().all(|&q| q == 0) {
                break;
            }
        }
        state.stages = stage;
        if !any && state.excluded.len() == excluded_before {
            break;
        }
    }

    let budget_met = state.selected.len() == cfg.budget_per_class * classes;
    if !budget_met {
        log::warn!(
            "pool exhausted after {} of {} selections",
            state.selected.len(),
            cfg.budget_per_class * classes
        );
    }
    let (nodes, labels) = state.training_set(g);
    let (model, history) = fit(&nodes, &labels)?;
    Ok(ActiveOutcome {
        model,
        history,
        state,
        log: entries,
        budget_met,
    })
}
