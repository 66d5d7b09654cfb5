use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::entropy::EntropyContext;
use super::{ActiveError, Result};
use crate::graph::{NodeId, TextGraph};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Order {
    Ascending,
    Descending,
}

/// Normalized ranks: after sorting by value in `order` (node id ascending
/// on ties), rank `i` scores `i / n`. `ids[k]` is the node behind
/// `values[k]`; scores come back aligned with the input.
pub fn rank_score(values: &[f64], ids: &[NodeId], order: Order) -> Result<Vec<f64>> {
    let n = values.len();
    if n == 0 {
        return Err(ActiveError::EmptyPool);
    }
    assert_eq!(n, ids.len(), "one id per value");
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| {
        let by_value = match order {
            Order::Ascending => values[a].total_cmp(&values[b]),
            Order::Descending => values[b].total_cmp(&values[a]),
        };
        by_value.then(ids[a].cmp(&ids[b]))
    });
    let mut scores = vec![0.0; n];
    for (rank, &k) in idx.iter().enumerate() {
        scores[k] = rank as f64 / n as f64;
    }
    Ok(scores)
}

/// One row of the per-stage score table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub node: NodeId,
    /// Max class probability.
    pub p: f64,
    /// Homophily under the student's pseudo-labels.
    pub hr: f64,
    pub degree: usize,
    pub rs_p: f64,
    pub rs_hr: f64,
    pub rs_d: f64,
    pub s_gl: f64,
    /// Raw neighbourhood entropy change; `None` outside the candidate set.
    pub entropy_delta: Option<f64>,
    pub s_e: f64,
    pub s_total: f64,
    pub candidate: bool,
}

/// Confidence (descending), pseudo-label homophily and degree (both
/// ascending) rank scores over `pool`, summed into `s_gl`.
pub fn score_gl(
    z: &Array2<f64>,
    g: &TextGraph,
    gnn_labels: &[usize],
    pool: &[NodeId],
) -> Result<Vec<ScoreRow>> {
    let p: Vec<f64> = pool
        .iter()
        .map(|&v| z.row(v).iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect();
    let hr = pool
        .iter()
        .map(|&v| g.homophily_ratio(v, gnn_labels))
        .collect::<Result<Vec<_>, _>>()?;
    let degree = pool
        .iter()
        .map(|&v| g.degree(v))
        .collect::<Result<Vec<_>, _>>()?;
    let deg_f: Vec<f64> = degree.iter().map(|&d| d as f64).collect();
    let rs_p = rank_score(&p, pool, Order::Descending)?;
    let rs_hr = rank_score(&hr, pool, Order::Ascending)?;
    let rs_d = rank_score(&deg_f, pool, Order::Ascending)?;
    Ok((0..pool.len())
        .map(|k| {
            let s_gl = rs_p[k] + rs_hr[k] + rs_d[k];
            ScoreRow {
                node: pool[k],
                p: p[k],
                hr: hr[k],
                degree: degree[k],
                rs_p: rs_p[k],
                rs_hr: rs_hr[k],
                rs_d: rs_d[k],
                s_gl,
                entropy_delta: None,
                s_e: 0.0,
                s_total: s_gl,
                candidate: false,
            }
        })
        .collect())
}

/// The `cap` non-isolated rows with the highest `s_gl` (node id ascending
/// on ties), as indices into `rows`.
pub fn candidate_set(rows: &[ScoreRow], cap: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..rows.len()).filter(|&k| rows[k].degree > 0).collect();
    idx.sort_by(|&a, &b| by_score(rows, a, b, |r| r.s_gl));
    idx.truncate(cap);
    idx
}

pub(crate) fn by_score(
    rows: &[ScoreRow],
    a: usize,
    b: usize,
    key: impl Fn(&ScoreRow) -> f64,
) -> std::cmp::Ordering {
    key(&rows[b])
        .total_cmp(&key(&rows[a]))
        .then(rows[a].node.cmp(&rows[b].node))
}

/// Computes entropy changes for the rows at `candidates`, ranks them
/// ascending over the candidate set into `s_e`, and marks them as
/// candidates. Every other row keeps `s_e = 0` and `candidate = false`.
pub fn score_entropy(
    rows: &mut [ScoreRow],
    candidates: &[usize],
    ctx: &EntropyContext<'_>,
    g: &TextGraph,
) -> Result<()> {
    for r in rows.iter_mut() {
        r.entropy_delta = None;
        r.s_e = 0.0;
        r.s_total = r.s_gl;
        r.candidate = false;
    }
    if candidates.is_empty() {
        return Ok(());
    }
    let deltas = candidates
        .iter()
        .map(|&k| ctx.entropy_reduction(g, rows[k].node))
        .collect::<Result<Vec<_>>>()?;
    let ids: Vec<NodeId> = candidates.iter().map(|&k| rows[k].node).collect();
    let s_e = rank_score(&deltas, &ids, Order::Ascending)?;
    for (j, &k) in candidates.iter().enumerate() {
        let r = &mut rows[k];
        r.entropy_delta = Some(deltas[j]);
        r.s_e = s_e[j];
        r.s_total = r.s_gl + r.s_e;
        r.candidate = true;
    }
    Ok(())
}

/// `s_e` and `s_total` over the top-`cap` candidates by `s_gl`.
pub fn score_total(
    rows: &mut [ScoreRow],
    ctx: &EntropyContext<'_>,
    g: &TextGraph,
    cap: usize,
) -> Result<()> {
    let candidates = candidate_set(rows, cap);
    score_entropy(rows, &candidates, ctx, g)
}
