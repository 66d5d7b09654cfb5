use serde::{Deserialize, Serialize};

use super::{PipelineError, Result};
use crate::graph::{NodeId, TextGraph};
use crate::teacher::{Teacher, TeacherError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BucketMetric {
    Degree,
    Homophily,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bucket {
    /// `head`, `middle` or `tail`.
    pub name: String,
    pub nodes: Vec<NodeId>,
    pub metric_min: f64,
    pub metric_max: f64,
    pub correct: usize,
    /// Nodes whose teacher response could not be parsed (counted wrong).
    pub invalid: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrelimReport {
    pub metric: BucketMetric,
    pub requested_bucket_size: usize,
    pub bucket_size: usize,
    pub clipped: bool,
    /// Head (highest metric) first.
    pub buckets: Vec<Bucket>,
}

impl PrelimReport {
    /// Accuracies ordered tail, middle, head.
    pub fn ascending_accuracies(&self) -> Vec<f64> {
        self.buckets.iter().rev().map(|b| b.accuracy).collect()
    }
}

/// Teacher accuracy against ground truth on the head, middle and tail of
/// the nodes sorted by `metric` descending (node id ascending on ties).
/// Homophily uses ground-truth labels.
pub fn prelim_analysis(
    g: &TextGraph,
    teacher: &Teacher,
    metric: BucketMetric,
    bucket_size: usize,
) -> Result<PrelimReport> {
    let truth = g.full_labels().ok_or_else(|| {
        PipelineError::InvalidConfig("bucket analysis needs labels on every node".into())
    })?;
    let n = g.num_nodes();
    let size = bucket_size.min(n / 3);
    let clipped = size < bucket_size;
    if clipped {
        log::warn!("bucket size {bucket_size} clipped to {size} for {n} nodes");
    }
    let values = (0..n)
        .map(|v| match metric {
            BucketMetric::Degree => g.degree(v).map(|d| d as f64),
            BucketMetric::Homophily => g.homophily_ratio(v, &truth),
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut order: Vec<NodeId> = (0..n).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));

    let mid = (n - size) / 2;
    let ranges = [("head", 0), ("middle", mid), ("tail", n - size)];
    let mut buckets = Vec::with_capacity(3);
    for (name, start) in ranges {
        let nodes = order[start..start + size].to_vec();
        let answers = teacher.query_many(g, &nodes);
        let mut correct = 0;
        let mut invalid = 0;
        for (&v, res) in nodes.iter().zip(answers) {
            match res {
                Ok(rec) => correct += usize::from(rec.answer == truth[v]),
                Err(TeacherError::ResponseInvalid(_)) => invalid += 1,
                Err(e) => return Err(e.into()),
            }
        }
        let vals = nodes.iter().map(|&v| values[v]);
        buckets.push(Bucket {
            name: name.into(),
            metric_min: vals.clone().fold(f64::INFINITY, f64::min),
            metric_max: vals.fold(f64::NEG_INFINITY, f64::max),
            accuracy: if size == 0 {
                0.0
            } else {
                correct as f64 / size as f64
            },
            nodes,
            correct,
            invalid,
        });
    }
    Ok(PrelimReport {
        metric,
        requested_bucket_size: bucket_size,
        bucket_size: size,
        clipped,
        buckets,
    })
}
