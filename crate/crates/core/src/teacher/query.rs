use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::cache::TeacherCache;
use super::client::{PromptKind, TeacherClient, TeacherRequest, TransportError};
use super::encoder::RationaleEncoder;
use super::parse::parse_confidences;
use super::prompt::PromptConfig;
use super::{Result, TeacherError, TeacherRecord};
use crate::graph::{NodeId, TextGraph};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QueryPolicy {
    /// Total attempts per node, counting the first.
    pub max_attempts: usize,
    /// Sleep before retry `k` is `backoff_ms * 2^(k-1)`.
    pub backoff_ms: u64,
    /// Cap on fresh (non-cached) node queries.
    pub max_queries: Option<usize>,
    /// Concurrent requests in `query_many`.
    pub in_flight: usize,
}

impl Default for QueryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            backoff_ms: 500,
            max_queries: None,
            in_flight: 4,
        }
    }
}

/// A teacher client wrapped with prompts, cache, retry policy and a
/// rationale encoder.
pub struct Teacher {
    client: Box<dyn TeacherClient>,
    encoder: Box<dyn RationaleEncoder>,
    cache: TeacherCache,
    prompts: PromptConfig,
    policy: QueryPolicy,
    fresh: AtomicUsize,
    calls: AtomicUsize,
}

enum Failure {
    Transient(String),
    Invalid(String),
}

impl Teacher {
    pub fn new(
        client: Box<dyn TeacherClient>,
        encoder: Box<dyn RationaleEncoder>,
        cache: TeacherCache,
        prompts: PromptConfig,
        policy: QueryPolicy,
    ) -> Self {
        Self {
            client,
            encoder,
            cache,
            prompts,
            policy,
            fresh: AtomicUsize::new(0),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn name(&self) -> &str {
        self.client.name()
    }

    pub fn prompts(&self) -> &PromptConfig {
        &self.prompts
    }

    pub fn cache(&self) -> &TeacherCache {
        &self.cache
    }

    /// Nodes answered by the client rather than the cache.
    pub fn fresh_queries(&self) -> usize {
        self.fresh.load(Ordering::SeqCst)
    }

    /// Raw client invocations, retries included.
    pub fn client_calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn query(&self, g: &TextGraph, v: NodeId) -> Result<TeacherRecord> {
        let text = g
            .text(v)
            .filter(|t| !t.trim().is_empty())
            .ok_or(TeacherError::MissingText { node: v })?;
        let rendered = self.prompts.render(text)?;
        let hash = rendered.hash();

        if let Some(mut rec) = self.cache.get(self.name(), &hash) {
            rec.node_id = v;
            if rec.rationale_embedding.is_none() {
                rec.rationale_embedding = self.encoder.encode(v, &rec.rationale_text)?;
                if rec.rationale_embedding.is_some() {
                    self.cache.insert(rec.clone())?;
                }
            }
            return Ok(rec);
        }

        if let Some(cap) = self.policy.max_queries {
            self.fresh
                .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |n| {
                    (n < cap).then_some(n + 1)
                })
                .map_err(|_| TeacherError::BudgetExhausted { cap })?;
        } else {
            self.fresh.fetch_add(1, Ordering::SeqCst);
        }

        let attempts = self.policy.max_attempts.max(1);
        let mut last = None;
        for attempt in 0..attempts {
            if attempt > 0 {
                let ms = self
                    .policy
                    .backoff_ms
                    .saturating_mul(1 << (attempt - 1).min(16));
                thread::sleep(Duration::from_millis(ms));
            }
            match self.attempt(v, &rendered.logits, &rendered.rationale) {
                Ok((answer, confidences, rationale_text)) => {
                    let rationale_embedding = self.encoder.encode(v, &rationale_text)?;
                    let rec = TeacherRecord {
                        node_id: v,
                        prompt_hash: hash,
                        answer,
                        confidences,
                        rationale_text,
                        rationale_embedding,
                        teacher_name: self.name().to_owned(),
                        timestamp: SystemTime::now()
                            .duration_since(UNIX_EPOCH)
                            .map_or(0, |d| d.as_secs()),
                    };
                    self.cache.insert(rec.clone())?;
                    return Ok(rec);
                }
                Err(Ok(fail)) => {
                    log::debug!("teacher attempt {} for node {v} failed", attempt + 1);
                    last = Some(fail);
                }
                Err(Err(fatal)) => {
                    return Err(TeacherError::Unavailable {
                        node: v,
                        reason: fatal,
                    })
                }
            }
        }
        Err(match last {
            Some(Failure::Invalid(msg)) => TeacherError::ResponseInvalid(msg),
            Some(Failure::Transient(reason)) => TeacherError::Unavailable { node: v, reason },
            None => unreachable!("at least one attempt"),
        })
    }

    /// One round trip for both prompts. `Err(Err(_))` is fatal.
    fn attempt(
        &self,
        v: NodeId,
        logits_prompt: &str,
        rationale_prompt: &str,
    ) -> std::result::Result<(usize, Vec<f64>, String), std::result::Result<Failure, String>> {
        let call = |kind, prompt| {
            self.calls.fetch_add(1, Ordering::SeqCst);
            self.client
                .complete(&TeacherRequest {
                    node_id: v,
                    kind,
                    prompt,
                })
                .map_err(|e| match e {
                    TransportError::Transient(m) => Ok(Failure::Transient(m)),
                    TransportError::Fatal(m) => Err(m),
                })
        };
        let raw = call(PromptKind::Logits, logits_prompt)?;
        let (answer, confidences) = parse_confidences(&raw, self.prompts.class_names())
            .map_err(|e| Ok(Failure::Invalid(e.to_string())))?;
        let rationale = call(PromptKind::Rationale, rationale_prompt)?;
        if rationale.trim().is_empty() {
            return Err(Ok(Failure::Invalid("empty rationale".into())));
        }
        Ok((answer, confidences, rationale))
    }

    /// Queries `nodes` with at most `in_flight` concurrent requests. Results
    /// come back in input order.
    pub fn query_many(&self, g: &TextGraph, nodes: &[NodeId]) -> Vec<Result<TeacherRecord>> {
        let workers = self.policy.in_flight.clamp(1, nodes.len().max(1));
        if workers == 1 {
            return nodes.iter().map(|&v| self.query(g, v)).collect();
        }
        let next = AtomicUsize::new(0);
        let slots: Vec<Mutex<Option<Result<TeacherRecord>>>> =
            nodes.iter().map(|_| Mutex::new(None)).collect();
        thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    if i >= nodes.len() {
                        break;
                    }
                    let out = self.query(g, nodes[i]);
                    *slots[i].lock().expect("slot lock") = Some(out);
                });
            }
        });
        slots
            .into_iter()
            .map(|m| m.into_inner().expect("slot lock").expect("filled"))
            .collect()
    }
}
