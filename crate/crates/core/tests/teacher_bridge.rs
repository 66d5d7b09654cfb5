use std::collections::VecDeque;
use std::sync::Mutex;

use graphdistill::graph::PlantedPartition;
use graphdistill::graph::{NodeId, TextGraph};
use graphdistill::teacher::client::{PromptKind, TeacherRequest, TransportError};
use graphdistill::teacher::mock::{format_guesses, mock_rationale};
use graphdistill::teacher::{
    HashGaussianEncoder, HttpTeacher, HttpTeacherConfig, NoiseProfile, NoisyTeacher, OracleTeacher,
    PromptConfig, QueryPolicy, Teacher, TeacherCache, TeacherClient, TeacherError,
};
use ndarray::Array2;

fn names() -> Vec<String> {
    ["Databases", "Machine Learning", "Theory"]
        .map(String::from)
        .to_vec()
}

fn fixture() -> TextGraph {
    let texts = vec![
        Some("Query optimization for column stores.".to_owned()),
        Some("Gradient descent with momentum.".to_owned()),
        Some("Lower bounds for sorting networks.".to_owned()),
        None,
        Some("Transaction isolation levels.".to_owned()),
    ];
    TextGraph::new(
        names(),
        vec![(0, 1), (1, 2), (2, 4)],
        Array2::from_shape_fn((5, 4), |(i, j)| (i * 4 + j) as f64 / 10.0),
        vec![Some(0), Some(1), Some(2), Some(0), Some(0)],
        texts,
    )
    .unwrap()
}

/// Logits replies are taken from `script` in order, then a well-formed
/// default. Rationale replies are fixed.
struct Scripted {
    script: Mutex<VecDeque<Result<String, TransportError>>>,
    rationale: String,
}

impl Scripted {
    fn new(script: Vec<Result<String, TransportError>>) -> Self {
        Self {
            script: Mutex::new(script.into()),
            rationale: mock_rationale("Theory"),
        }
    }
}

impl TeacherClient for Scripted {
    fn name(&self) -> &str {
        "scripted"
    }

    fn complete(&self, req: &TeacherRequest<'_>) -> Result<String, TransportError> {
        match req.kind {
            PromptKind::Logits => self
                .script
                .lock()
                .unwrap()
                .pop_front()
                .unwrap_or_else(|| Ok(format_guesses(&names(), &[0.1, 0.2, 0.7]))),
            PromptKind::Rationale => Ok(self.rationale.clone()),
        }
    }
}

fn policy() -> QueryPolicy {
    QueryPolicy {
        backoff_ms: 0,
        ..QueryPolicy::default()
    }
}

fn teacher(
    client: impl TeacherClient + 'static,
    cache: TeacherCache,
    policy: QueryPolicy,
) -> Teacher {
    Teacher::new(
        Box::new(client),
        Box::new(HashGaussianEncoder { dim: 4 }),
        cache,
        PromptConfig::new(names()).unwrap(),
        policy,
    )
}

#[test]
fn well_formed_reply_becomes_a_record() {
    let t = teacher(Scripted::new(vec![]), TeacherCache::in_memory(), policy());
    let rec = t.query(&fixture(), 2).unwrap();
    assert_eq!(rec.answer, 2);
    assert_eq!(rec.confidences, vec![0.1, 0.2, 0.7]);
    assert_eq!(rec.teacher_name, "scripted");
    assert_eq!(rec.rationale_embedding.as_ref().map(Vec::len), Some(4));
    assert_eq!(t.client_calls(), 2);
}

#[test]
fn transient_failures_are_retried() {
    let script = vec![
        Err(TransportError::Transient("429".into())),
        Err(TransportError::Transient("timeout".into())),
    ];
    let t = teacher(Scripted::new(script), TeacherCache::in_memory(), policy());
    assert_eq!(t.query(&fixture(), 0).unwrap().answer, 2);
    assert_eq!(t.client_calls(), 4);
}

#[test]
fn three_malformed_replies_are_invalid() {
    let script = vec![
        Ok("no idea".into()),
        Ok("\"answer\": \"Biology\"".into()),
        Ok(String::new()),
    ];
    let t = teacher(Scripted::new(script), TeacherCache::in_memory(), policy());
    let err = t.query(&fixture(), 0).unwrap_err();
    assert!(matches!(err, TeacherError::ResponseInvalid(_)), "{err}");
    assert_eq!(t.client_calls(), 3);
    assert_eq!(t.cache().len(), 0);
}

#[test]
fn persistent_transient_failure_is_unavailable() {
    let script = (0..3)
        .map(|_| Err(TransportError::Transient("503".into())))
        .collect();
    let t = teacher(Scripted::new(script), TeacherCache::in_memory(), policy());
    let err = t.query(&fixture(), 1).unwrap_err();
    assert!(
        matches!(err, TeacherError::Unavailable { node: 1, .. }),
        "{err}"
    );
}

#[test]
fn fatal_failure_is_not_retried() {
    let script = vec![Err(TransportError::Fatal("401".into()))];
    let t = teacher(Scripted::new(script), TeacherCache::in_memory(), policy());
    assert!(matches!(
        t.query(&fixture(), 1),
        Err(TeacherError::Unavailable { .. })
    ));
    assert_eq!(t.client_calls(), 1);
}

#[test]
fn empty_rationale_is_invalid() {
    let mut client = Scripted::new(vec![]);
    client.rationale = "   ".into();
    let t = teacher(client, TeacherCache::in_memory(), policy());
    assert!(matches!(
        t.query(&fixture(), 0),
        Err(TeacherError::ResponseInvalid(_))
    ));
}

#[test]
fn node_without_text_is_rejected() {
    let t = teacher(Scripted::new(vec![]), TeacherCache::in_memory(), policy());
    assert!(matches!(
        t.query(&fixture(), 3),
        Err(TeacherError::MissingText { node: 3 })
    ));
    assert_eq!(t.client_calls(), 0);
}

#[test]
fn cached_queries_make_no_calls() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cache.jsonl");
    let g = fixture();
    let first = {
        let t = teacher(
            Scripted::new(vec![]),
            TeacherCache::open(&path).unwrap(),
            policy(),
        );
        let rec = t.query(&g, 1).unwrap();
        let again = t.query(&g, 1).unwrap();
        assert_eq!(rec, again);
        assert_eq!(t.client_calls(), 2);
        assert_eq!(t.fresh_queries(), 1);
        rec
    };
    let t = teacher(
        Scripted::new(vec![]),
        TeacherCache::open(&path).unwrap(),
        policy(),
    );
    assert_eq!(t.query(&g, 1).unwrap(), first);
    assert_eq!(t.client_calls(), 0);
    assert_eq!(t.fresh_queries(), 0);
}

#[test]
fn query_budget_caps_fresh_queries_only() {
    let capped = QueryPolicy {
        max_queries: Some(2),
        ..policy()
    };
    let t = teacher(Scripted::new(vec![]), TeacherCache::in_memory(), capped);
    let g = fixture();
    t.query(&g, 0).unwrap();
    t.query(&g, 1).unwrap();
    assert!(matches!(
        t.query(&g, 2),
        Err(TeacherError::BudgetExhausted { cap: 2 })
    ));
    assert!(t.query(&g, 0).is_ok());
}

#[test]
fn query_many_keeps_input_order() {
    let g = PlantedPartition::default().generate().unwrap();
    let t = Teacher::new(
        Box::new(OracleTeacher::from_graph(&g)),
        Box::new(HashGaussianEncoder { dim: 4 }),
        TeacherCache::in_memory(),
        PromptConfig::new(g.class_names().to_vec()).unwrap(),
        QueryPolicy {
            in_flight: 8,
            ..policy()
        },
    );
    let nodes: Vec<NodeId> = (0..g.num_nodes()).rev().step_by(3).collect();
    let out = t.query_many(&g, &nodes);
    for (&v, rec) in nodes.iter().zip(out) {
        let rec = rec.unwrap();
        assert_eq!(rec.node_id, v);
        assert_eq!(Some(rec.answer), g.label(v));
    }
}

#[test]
fn noisy_teacher_tracks_homophily_buckets() {
    let g = PlantedPartition::noisy_benchmark().generate().unwrap();
    let profile = NoiseProfile::default();
    let noisy = NoisyTeacher::from_graph(&g, &profile, 3);
    let truth = g.full_labels().unwrap();
    let hr: Vec<f64> = (0..g.num_nodes())
        .map(|v| g.homophily_ratio(v, &truth).unwrap())
        .collect();
    let mut order: Vec<NodeId> = (0..g.num_nodes()).collect();
    order.sort_by(|&a, &b| hr[a].total_cmp(&hr[b]).then(a.cmp(&b)));
    let third = order.len() / 3;
    let acc: Vec<f64> = order
        .chunks(third)
        .take(3)
        .map(|c| {
            c.iter()
                .filter(|&&v| noisy.answer_for(v) == truth[v])
                .count() as f64
                / c.len() as f64
        })
        .collect();
    assert!(acc[0] < acc[1] && acc[1] < acc[2], "{acc:?}");
    for (a, t) in acc.iter().zip(profile.hr_accuracy) {
        assert!((a - t).abs() < 0.08, "{acc:?}");
    }
    // draws are keyed by node, not by query order
    assert_eq!(noisy.answer_for(17), noisy.answer_for(17));
}

/// Needs `GRAPHDISTILL_LIVE_ENDPOINT` and `GRAPHDISTILL_LIVE_MODEL`; the
/// token is read from `GRAPHDISTILL_TEACHER_TOKEN`.
#[test]
#[ignore]
fn live_endpoint_smoke() {
    let endpoint = std::env::var("GRAPHDISTILL_LIVE_ENDPOINT").expect("endpoint");
    let model = std::env::var("GRAPHDISTILL_LIVE_MODEL").expect("model");
    let cfg = HttpTeacherConfig {
        endpoint,
        model_name: model,
        token_env: Some("GRAPHDISTILL_TEACHER_TOKEN".into()),
        timeout_secs: 60,
    };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cache.jsonl");
    let g = fixture();
    let nodes = [0, 1, 2];
    let cold = teacher(
        HttpTeacher::new(cfg.clone()),
        TeacherCache::open(&path).unwrap(),
        QueryPolicy::default(),
    );
    for r in cold.query_many(&g, &nodes) {
        r.unwrap();
    }
    let warm = teacher(
        HttpTeacher::new(cfg),
        TeacherCache::open(&path).unwrap(),
        QueryPolicy::default(),
    );
    for r in warm.query_many(&g, &nodes) {
        r.unwrap();
    }
    assert_eq!(warm.client_calls(), 0);
}
