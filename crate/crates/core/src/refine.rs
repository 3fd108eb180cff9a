//! The refinement loop: a programmer proposes edits against the current
//! graph, the interpreter applies them, for a fixed number of rounds.

use std::collections::{HashMap, HashSet};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::edit::{apply_edits_against, derive_edits, validate_insertion_units, EditActions, EditError, EditTuple, RejectedUnit};
use crate::generator::Instance;
use crate::graph::{NormalizationPolicy, SceneGraph, Triple};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProgrammerError {
    #[error("programmer unavailable: {0}")]
    Unavailable(String),
    #[error("programmer protocol error: {0}")]
    Protocol(String),
}

impl From<EditError> for ProgrammerError {
    fn from(e: EditError) -> Self {
        ProgrammerError::Protocol(e.to_string())
    }
}

/// Edits proposed for one step, plus insertion units that failed validation.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Proposal {
    pub actions: EditActions,
    pub rejected: Vec<RejectedUnit>,
}

impl From<EditActions> for Proposal {
    fn from(actions: EditActions) -> Self {
        Self {
            actions,
            rejected: Vec::new(),
        }
    }
}

/// Proposes delete flags and insertions for the current graph.
pub trait Programmer: Send + Sync {
    /// `step` is the zero-based refinement round.
    fn propose(&self, id: &str, caption: &str, graph: &SceneGraph, step: usize) -> Result<Proposal, ProgrammerError>;
}

/// Never proposes anything.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoopProgrammer;

impl Programmer for NoopProgrammer {
    fn propose(&self, _id: &str, _caption: &str, graph: &SceneGraph, _step: usize) -> Result<Proposal, ProgrammerError> {
        Ok(EditActions::keep_all(graph.len()).into())
    }
}

/// Proposes the exact diff to a known gold graph.
#[derive(Debug, Clone, Default)]
pub struct OracleProgrammer {
    gold: HashMap<String, SceneGraph>,
}

impl OracleProgrammer {
    pub fn new(gold: HashMap<String, SceneGraph>) -> Self {
        Self { gold }
    }

    pub fn from_instances(instances: &[Instance]) -> Self {
        Self::new(
            instances
                .iter()
                .filter_map(|i| i.gold_graph.clone().map(|g| (i.id.clone(), g)))
                .collect(),
        )
    }
}

impl Programmer for OracleProgrammer {
    fn propose(&self, id: &str, _caption: &str, graph: &SceneGraph, _step: usize) -> Result<Proposal, ProgrammerError> {
        let gold = self
            .gold
            .get(id)
            .ok_or_else(|| ProgrammerError::Protocol(format!("no gold graph for {id}")))?;
        Ok(derive_edits(graph, gold).into())
    }
}

/// Replays recorded edit sets. Step `t` of instance `id` uses the `t`-th
/// recorded tuple for that id; deletions are matched by value against the
/// current graph. Steps without a record propose nothing.
#[derive(Debug, Clone, Default)]
pub struct ReplayProgrammer {
    steps: HashMap<String, Vec<(Vec<Triple>, Vec<Triple>)>>,
}

impl ReplayProgrammer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, id: impl Into<String>, deletions: Vec<Triple>, insertions: Vec<Triple>) {
        self.steps.entry(id.into()).or_default().push((deletions, insertions));
    }

    pub fn from_tuples<'a>(tuples: impl IntoIterator<Item = &'a EditTuple>) -> Self {
        let mut replay = Self::new();
        for t in tuples {
            replay.push(t.id.clone(), t.delete_gt.clone(), t.insert_gt.clone());
        }
        replay
    }
}

impl Programmer for ReplayProgrammer {
    fn propose(&self, id: &str, _caption: &str, graph: &SceneGraph, step: usize) -> Result<Proposal, ProgrammerError> {
        Ok(match self.steps.get(id).and_then(|s| s.get(step)) {
            Some((del, ins)) => EditActions::from_sets(graph, del, ins.clone()).into(),
            None => EditActions::keep_all(graph.len()).into(),
        })
    }
}

/// Words ignored by the caption-support test.
pub const DEFAULT_STOPWORDS: &[&str] = &[
    "a", "an", "the", "of", "in", "on", "at", "to", "for", "with", "and", "or", "by", "from", "is", "are",
    "be", "it", "its", "this", "that", "some", "there",
];

/// Deterministic non-neural programmer. Flags triples that duplicate an
/// earlier triple under normalization, and triples whose subject and object
/// share no content token with the caption. Never inserts.
#[derive(Debug, Clone)]
pub struct HeuristicProgrammer {
    policy: NormalizationPolicy,
    stopwords: HashSet<String>,
}

impl Default for HeuristicProgrammer {
    fn default() -> Self {
        Self::new(NormalizationPolicy::default())
    }
}

fn content_tokens<'a>(text: &'a str, stopwords: &'a HashSet<String>) -> impl Iterator<Item = String> + 'a {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .filter(move |w| !stopwords.contains(w))
}

// "bags" in a triple should be supported by "bag" in the caption and vice versa
fn stem(word: &str) -> &str {
    if word.len() > 3 {
        word.strip_suffix("es")
            .filter(|w| w.ends_with(['s', 'x', 'h']))
            .or_else(|| word.strip_suffix('s').filter(|w| !w.ends_with('s')))
            .unwrap_or(word)
    } else {
        word
    }
}

impl HeuristicProgrammer {
    pub fn new(policy: NormalizationPolicy) -> Self {
        Self {
            policy,
            stopwords: DEFAULT_STOPWORDS.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn with_stopwords<I: IntoIterator<Item = S>, S: Into<String>>(mut self, words: I) -> Self {
        self.stopwords = words.into_iter().map(Into::into).collect();
        self
    }

    /// Whether any content token of the triple's subject or object occurs in
    /// the caption. Entities made only of stopwords count as supported.
    pub fn supported(&self, triple: &Triple, caption_vocab: &HashSet<String>) -> bool {
        let entity_tokens: Vec<String> = [triple.subject(), triple.object()]
            .iter()
            .flat_map(|f| content_tokens(f, &self.stopwords))
            .collect();
        entity_tokens.is_empty() || entity_tokens.iter().any(|t| caption_vocab.contains(stem(t)))
    }

    pub fn edits(&self, graph: &SceneGraph, caption: &str) -> EditActions {
        let vocab: HashSet<String> = content_tokens(caption, &self.stopwords)
            .map(|w| stem(&w).to_string())
            .collect();
        let mut seen = HashSet::new();
        let delete_flags = graph
            .iter()
            .map(|t| {
                let key = t.normalized(&self.policy).unwrap_or_else(|| t.clone());
                let duplicate = !seen.insert(key);
                duplicate || !self.supported(t, &vocab)
            })
            .collect();
        EditActions {
            delete_flags,
            insertions: Vec::new(),
        }
    }
}

impl Programmer for HeuristicProgrammer {
    fn propose(&self, _id: &str, caption: &str, graph: &SceneGraph, _step: usize) -> Result<Proposal, ProgrammerError> {
        Ok(self.edits(graph, caption).into())
    }
}

/// Request body of `POST /v1/edits`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditRequest {
    pub id: String,
    pub caption: String,
    pub graph: Vec<Triple>,
}

/// Response body of `POST /v1/edits`. Insert units stay untyped so that
/// malformed ones can be rejected individually.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditResponse {
    pub delete: Vec<bool>,
    pub insert: Vec<Vec<String>>,
}

/// Body of `GET /v1/health`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HealthResponse {
    pub status: String,
    pub mode: String,
}

/// Client for a programmer service speaking the `/v1/edits` protocol.
pub struct RemoteProgrammer {
    endpoint: String,
    agent: ureq::Agent,
    policy: NormalizationPolicy,
    max_attempts: usize,
    backoff: Duration,
}

impl RemoteProgrammer {
    pub fn new(endpoint: impl Into<String>) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(60)))
            .http_status_as_error(false)
            .build()
            .new_agent();
        Self {
            endpoint: endpoint.into().trim_end_matches('/').to_string(),
            agent,
            policy: NormalizationPolicy::default(),
            max_attempts: 3,
            backoff: Duration::from_millis(100),
        }
    }

    /// Total attempts per request (at least 1) and the initial backoff,
    /// doubled after each failed attempt.
    pub fn with_retries(mut self, max_attempts: usize, backoff: Duration) -> Self {
        self.max_attempts = max_attempts.max(1);
        self.backoff = backoff;
        self
    }

    pub fn with_policy(mut self, policy: NormalizationPolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    pub fn health(&self) -> Result<HealthResponse, ProgrammerError> {
        let url = format!("{}/v1/health", self.endpoint);
        let mut resp = self
            .agent
            .get(&url)
            .call()
            .map_err(|e| ProgrammerError::Unavailable(e.to_string()))?;
        resp.body_mut()
            .read_json()
            .map_err(|e| ProgrammerError::Protocol(e.to_string()))
    }

    fn post_once(&self, request: &EditRequest) -> Result<EditResponse, Attempt> {
        let url = format!("{}/v1/edits", self.endpoint);
        let mut resp = self
            .agent
            .post(&url)
            .send_json(request)
            .map_err(|e| Attempt::Retry(e.to_string()))?;
        let status = resp.status().as_u16();
        let body = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| Attempt::Retry(e.to_string()))?;
        match status {
            200..=299 => serde_json::from_str(&body)
                .map_err(|e| Attempt::Fatal(ProgrammerError::Protocol(format!("bad response body: {e}")))),
            500..=599 => Err(Attempt::Retry(format!("HTTP {status}: {body}"))),
            _ => Err(Attempt::Fatal(ProgrammerError::Protocol(format!("HTTP {status}: {body}")))),
        }
    }

    fn request(&self, request: &EditRequest) -> Result<EditResponse, ProgrammerError> {
        let mut wait = self.backoff;
        let mut last = String::new();
        for attempt in 1..=self.max_attempts {
            match self.post_once(request) {
                Ok(r) => return Ok(r),
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retry(msg)) => {
                    log::warn!("programmer request {} attempt {attempt} failed: {msg}", request.id);
                    last = msg;
                    if attempt < self.max_attempts {
                        thread::sleep(wait);
                        wait *= 2;
                    }
                }
            }
        }
        Err(ProgrammerError::Unavailable(format!(
            "{} after {} attempts: {last}",
            self.endpoint, self.max_attempts
        )))
    }
}

enum Attempt {
    Retry(String),
    Fatal(ProgrammerError),
}

impl Programmer for RemoteProgrammer {
    fn propose(&self, id: &str, caption: &str, graph: &SceneGraph, _step: usize) -> Result<Proposal, ProgrammerError> {
        let request = EditRequest {
            id: id.to_string(),
            caption: caption.to_string(),
            graph: graph.iter().cloned().collect(),
        };
        let response = self.request(&request)?;
        if response.delete.len() != graph.len() {
            return Err(ProgrammerError::Protocol(format!(
                "{} delete flags for a graph of {} triples",
                response.delete.len(),
                graph.len()
            )));
        }
        let (accepted, rejected) = validate_insertion_units(&response.insert);
        let mut insertions: Vec<Triple> = Vec::new();
        for t in accepted {
            match t.normalized(&self.policy) {
                Some(n) if !insertions.contains(&n) => insertions.push(n),
                Some(_) => {}
                None => log::debug!("dropping insertion {t} that normalizes to nothing"),
            }
        }
        Ok(Proposal {
            actions: EditActions {
                delete_flags: response.delete,
                insertions,
            },
            rejected,
        })
    }
}

/// Settings of the refinement loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementConfig {
    /// Number of refinement rounds.
    pub iterations: usize,
    /// Stop as soon as a round changes nothing.
    pub stop_on_empty_edits: bool,
    pub record_trace: bool,
}

impl Default for RefinementConfig {
    fn default() -> Self {
        Self {
            iterations: 2,
            stop_on_empty_edits: true,
            record_trace: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub step: usize,
    pub graph: String,
    pub deletes_proposed: usize,
    pub deletes_applied: usize,
    pub inserts_proposed: usize,
    pub inserts_accepted: usize,
    pub inserts_rejected: usize,
    pub elapsed_ms: f64,
}

/// Per-step snapshots; step 0 is the initial graph.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RefinementTrace {
    pub steps: Vec<TraceStep>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum RefineStatus {
    Complete,
    /// The programmer failed at `step`; the graph is the last good state.
    Degraded { step: usize, error: String, unavailable: bool },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Refinement {
    pub graph: SceneGraph,
    pub trace: RefinementTrace,
    pub status: RefineStatus,
    pub steps_run: usize,
}

impl Refinement {
    pub fn is_complete(&self) -> bool {
        self.status == RefineStatus::Complete
    }
}

/// Runs `cfg.iterations` rounds of propose-then-apply starting from `y0`.
///
/// A programmer failure does not discard progress: the result carries the
/// last successfully edited graph and a [`RefineStatus::Degraded`] marker.
pub fn refine(inst: &Instance, y0: &SceneGraph, cfg: &RefinementConfig, programmer: &dyn Programmer) -> Refinement {
    let mut graph = y0.clone();
    let mut trace = RefinementTrace::default();
    if cfg.record_trace {
        trace.steps.push(TraceStep {
            step: 0,
            graph: y0.to_flat(),
            deletes_proposed: 0,
            deletes_applied: 0,
            inserts_proposed: 0,
            inserts_accepted: 0,
            inserts_rejected: 0,
            elapsed_ms: 0.0,
        });
    }
    let mut steps_run = 0;
    for step in 0..cfg.iterations {
        let started = Instant::now();
        let result = programmer
            .propose(&inst.id, &inst.caption, &graph, step)
            .and_then(|p| {
                let (next, stats) = apply_edits_against(&graph, &p.actions, None)?;
                Ok((p, next, stats))
            });
        let (proposal, next, stats) = match result {
            Ok(r) => r,
            Err(e) => {
                log::error!("refinement of {} stopped at step {step}: {e}", inst.id);
                return Refinement {
                    graph,
                    trace,
                    status: RefineStatus::Degraded {
                        step,
                        unavailable: matches!(e, ProgrammerError::Unavailable(_)),
                        error: e.to_string(),
                    },
                    steps_run,
                };
            }
        };
        graph = next;
        steps_run += 1;
        if cfg.record_trace {
            trace.steps.push(TraceStep {
                step: step + 1,
                graph: graph.to_flat(),
                deletes_proposed: proposal.actions.delete_count(),
                deletes_applied: stats.deletes_applied,
                inserts_proposed: proposal.actions.insertions.len() + proposal.rejected.len(),
                inserts_accepted: stats.inserts_added,
                inserts_rejected: proposal.rejected.len(),
                elapsed_ms: started.elapsed().as_secs_f64() * 1e3,
            });
        }
        if cfg.stop_on_empty_edits && stats.applied() == 0 {
            break;
        }
    }
    Refinement {
        graph,
        trace,
        status: RefineStatus::Complete,
        steps_run,
    }
}

/// Collects trace records from concurrent refinements, in completion order.
#[derive(Debug, Default)]
pub struct TraceSink {
    records: Mutex<Vec<(String, RefinementTrace)>>,
}

impl TraceSink {
    pub fn push(&self, id: &str, trace: RefinementTrace) {
        self.records.lock().unwrap().push((id.to_string(), trace));
    }

    pub fn into_records(self) -> Vec<(String, RefinementTrace)> {
        self.records.into_inner().unwrap()
    }
}
