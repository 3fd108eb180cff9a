//! Graph similarity: SPICE (exact + synonym triple matching) and the
//! embedding-based SoftSPICE / Bi-SoftSPICE scores.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{NormalizationPolicy, SceneGraph, Triple};

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("lexicon {path}: {source}")]
    LexiconIo {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("embedding provider: {0}")]
    Embedding(String),
}

/// Synonym classes over entity strings. Overlapping classes are merged on
/// load, so membership is an equivalence relation.
#[derive(Debug, Clone, Default)]
pub struct SynonymLexicon {
    class_of: HashMap<String, usize>,
    classes: usize,
}

impl SynonymLexicon {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn from_classes<I, C, S>(classes: I) -> Self
    where
        I: IntoIterator<Item = C>,
        C: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Self::from_classes_with(classes, &NormalizationPolicy::default())
    }

    pub fn from_classes_with<I, C, S>(classes: I, policy: &NormalizationPolicy) -> Self
    where
        I: IntoIterator<Item = C>,
        C: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        // union-find over class ids
        let mut parent: Vec<usize> = Vec::new();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        let mut raw: HashMap<String, usize> = HashMap::new();
        for class in classes {
            let id = parent.len();
            parent.push(id);
            for member in class {
                let m = policy.normalize(member.as_ref());
                if m.is_empty() {
                    continue;
                }
                match raw.get(&m) {
                    Some(&other) => {
                        let (a, b) = (find(&mut parent, other), find(&mut parent, id));
                        parent[a] = b;
                    }
                    None => {
                        raw.insert(m, id);
                    }
                }
            }
        }
        let mut dense: HashMap<usize, usize> = HashMap::new();
        let mut class_of = HashMap::with_capacity(raw.len());
        for (member, id) in raw {
            let root = find(&mut parent, id);
            let next = dense.len();
            let c = *dense.entry(root).or_insert(next);
            class_of.insert(member, c);
        }
        Self {
            classes: dense.len(),
            class_of,
        }
    }

    /// Reads a lexicon file: one class per line, members tab-separated.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, MetricError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| MetricError::LexiconIo {
            path: path.display().to_string(),
            source,
        })?;
        Ok(Self::parse(&text))
    }

    pub fn parse(text: &str) -> Self {
        Self::from_classes(
            text.lines()
                .filter(|l| !l.trim().is_empty())
                .map(|l| l.split('\t').collect::<Vec<_>>()),
        )
    }

    pub fn class_count(&self) -> usize {
        self.classes
    }

    /// Equal strings always match; otherwise both must share a class.
    pub fn matches(&self, a: &str, b: &str) -> bool {
        a == b
            || matches!(
                (self.class_of.get(a), self.class_of.get(b)),
                (Some(x), Some(y)) if x == y
            )
    }

    /// Subject and object match up to synonymy; the relation must be equal.
    pub fn triples_match(&self, pred: &Triple, gold: &Triple) -> bool {
        pred.relation() == gold.relation()
            && self.matches(pred.subject(), gold.subject())
            && self.matches(pred.object(), gold.object())
    }
}

/// Precision, recall and F1 of a predicted graph against a gold graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpiceScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// `(pred index, gold index)` pairs of the maximum matching.
    pub matched_pairs: Vec<(usize, usize)>,
}

pub fn harmonic_mean(a: f64, b: f64) -> f64 {
    if a + b == 0.0 {
        0.0
    } else {
        2.0 * a * b / (a + b)
    }
}

/// Maximum bipartite matching via augmenting paths; `owner[gold] = pred`.
fn maximum_matching(adjacency: &[Vec<usize>], right: usize) -> Vec<Option<usize>> {
    fn augment(u: usize, adj: &[Vec<usize>], seen: &mut [bool], owner: &mut [Option<usize>]) -> bool {
        for &v in &adj[u] {
            if seen[v] {
                continue;
            }
            seen[v] = true;
            if owner[v].is_none_or(|w| augment(w, adj, seen, owner)) {
                owner[v] = Some(u);
                return true;
            }
        }
        false
    }
    let mut owner = vec![None; right];
    for u in 0..adjacency.len() {
        let mut seen = vec![false; right];
        augment(u, adjacency, &mut seen, &mut owner);
    }
    owner
}

/// SPICE: F1 over a maximum one-to-one matching of predicted and gold
/// triples. Two empty graphs score 1; exactly one empty graph scores 0.
pub fn spice(pred: &SceneGraph, gold: &SceneGraph, lex: &SynonymLexicon) -> SpiceScore {
    match (pred.is_empty(), gold.is_empty()) {
        (true, true) => {
            return SpiceScore {
                precision: 1.0,
                recall: 1.0,
                f1: 1.0,
                matched_pairs: Vec::new(),
            }
        }
        (true, false) | (false, true) => {
            return SpiceScore {
                precision: 0.0,
                recall: 0.0,
                f1: 0.0,
                matched_pairs: Vec::new(),
            }
        }
        _ => {}
    }
    let adjacency: Vec<Vec<usize>> = pred
        .iter()
        .map(|p| {
            gold.iter()
                .enumerate()
                .filter(|(_, g)| lex.triples_match(p, g))
                .map(|(j, _)| j)
                .collect()
        })
        .collect();
    let owner = maximum_matching(&adjacency, gold.len());
    let mut matched_pairs: Vec<(usize, usize)> = owner
        .iter()
        .enumerate()
        .filter_map(|(j, o)| o.map(|i| (i, j)))
        .collect();
    matched_pairs.sort_unstable();
    let m = matched_pairs.len() as f64;
    let precision = m / pred.len() as f64;
    let recall = m / gold.len() as f64;
    SpiceScore {
        precision,
        recall,
        f1: harmonic_mean(precision, recall),
        matched_pairs,
    }
}

/// Maps a phrase to a vector. Non-empty phrases map to unit vectors.
pub trait EmbeddingPort: Send + Sync {
    fn dim(&self) -> usize;

    fn embed(&self, phrase: &str) -> Result<Vec<f64>, MetricError>;

    fn embed_all(&self, phrases: &[String]) -> Result<Vec<Vec<f64>>, MetricError> {
        phrases.iter().map(|p| self.embed(p)).collect()
    }
}

pub const DEFAULT_EMBEDDING_DIM: usize = 2048;

/// Bag-of-tokens embedding: lowercase whitespace tokens hashed with 64-bit
/// FNV-1a into a fixed number of buckets, counted, then L2-normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashedBagEmbedder {
    dim: usize,
}

impl Default for HashedBagEmbedder {
    fn default() -> Self {
        Self::new(DEFAULT_EMBEDDING_DIM)
    }
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

impl HashedBagEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self { dim }
    }

    pub fn bucket(&self, token: &str) -> usize {
        (fnv1a64(token.as_bytes()) % self.dim as u64) as usize
    }

    fn vector(&self, phrase: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        for tok in phrase.split_whitespace() {
            v[self.bucket(&tok.to_lowercase())] += 1.0;
        }
        normalize_in_place(&mut v);
        v
    }
}

impl EmbeddingPort for HashedBagEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, phrase: &str) -> Result<Vec<f64>, MetricError> {
        Ok(self.vector(phrase))
    }
}

pub fn default_embedder() -> HashedBagEmbedder {
    HashedBagEmbedder::default()
}

fn normalize_in_place(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}

/// Cosine similarity; 0 when either vector is zero.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Directed SoftSPICE: the mean, over triples of `src`, of the best cosine
/// similarity to any triple of `dst`, with negative similarities clamped
/// to 0. Identical phrases score exactly 1.
pub fn soft_spice_directed(src: &SceneGraph, dst: &SceneGraph, emb: &dyn EmbeddingPort) -> Result<f64, MetricError> {
    match (src.is_empty(), dst.is_empty()) {
        (true, true) => return Ok(1.0),
        (true, false) | (false, true) => return Ok(0.0),
        _ => {}
    }
    let src_phrases: Vec<String> = src.iter().map(Triple::phrase).collect();
    let dst_phrases: Vec<String> = dst.iter().map(Triple::phrase).collect();
    let src_vecs = emb.embed_all(&src_phrases)?;
    let dst_vecs = emb.embed_all(&dst_phrases)?;
    let total: f64 = src_phrases
        .iter()
        .zip(&src_vecs)
        .map(|(sp, sv)| {
            dst_phrases
                .iter()
                .zip(&dst_vecs)
                .map(|(dp, dv)| {
                    if sp == dp && sv.iter().any(|&x| x != 0.0) {
                        1.0
                    } else {
                        cosine(sv, dv).clamp(0.0, 1.0)
                    }
                })
                .fold(0.0, f64::max)
        })
        .sum();
    Ok(total / src.len() as f64)
}

/// Harmonic mean of the two SoftSPICE directions.
pub fn bsspice(g1: &SceneGraph, g2: &SceneGraph, emb: &dyn EmbeddingPort) -> Result<f64, MetricError> {
    let forward = soft_spice_directed(g1, g2, emb)?;
    let backward = soft_spice_directed(g2, g1, emb)?;
    Ok(harmonic_mean(forward, backward))
}

/// All graph scores for one prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub soft_forward: f64,
    pub soft_backward: f64,
    pub bsspice: f64,
    pub matched_pairs: Vec<(Triple, Triple)>,
}

pub fn score(
    pred: &SceneGraph,
    gold: &SceneGraph,
    lex: &SynonymLexicon,
    emb: &dyn EmbeddingPort,
) -> Result<ScoreReport, MetricError> {
    let s = spice(pred, gold, lex);
    let soft_forward = soft_spice_directed(pred, gold, emb)?;
    let soft_backward = soft_spice_directed(gold, pred, emb)?;
    let matched_pairs = s
        .matched_pairs
        .iter()
        .map(|&(i, j)| (pred.get(i).cloned().unwrap(), gold.get(j).cloned().unwrap()))
        .collect();
    Ok(ScoreReport {
        precision: s.precision,
        recall: s.recall,
        f1: s.f1,
        soft_forward,
        soft_backward,
        bsspice: harmonic_mean(soft_forward, soft_backward),
        matched_pairs,
    })
}

/// Embeddings served over HTTP: `POST {endpoint}/v1/embed` with
/// `{"phrases": [...]}` answering `{"vectors": [[...], ...]}`. Vectors are
/// re-normalized locally and cached per phrase.
pub struct RemoteEmbedder {
    endpoint: String,
    dim: usize,
    agent: ureq::Agent,
    cache: Mutex<HashMap<String, Vec<f64>>>,
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    phrases: &'a [String],
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f64>>,
}

impl RemoteEmbedder {
    pub fn new(endpoint: impl Into<String>, dim: usize) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(30)))
            .build()
            .new_agent();
        Self {
            endpoint: endpoint.into().trim_end_matches('/').to_string(),
            dim,
            agent,
            cache: Mutex::new(HashMap::new()),
        }
    }

    fn fetch(&self, phrases: &[String]) -> Result<Vec<Vec<f64>>, MetricError> {
        let url = format!("{}/v1/embed", self.endpoint);
        let resp: EmbedResponse = self
            .agent
            .post(&url)
            .send_json(EmbedRequest { phrases })
            .map_err(|e| MetricError::Embedding(e.to_string()))?
            .body_mut()
            .read_json()
            .map_err(|e| MetricError::Embedding(e.to_string()))?;
        if resp.vectors.len() != phrases.len() {
            return Err(MetricError::Embedding(format!(
                "{} vectors for {} phrases",
                resp.vectors.len(),
                phrases.len()
            )));
        }
        resp.vectors
            .into_iter()
            .map(|mut v| {
                if v.len() != self.dim {
                    return Err(MetricError::Embedding(format!(
                        "vector of dimension {}, expected {}",
                        v.len(),
                        self.dim
                    )));
                }
                normalize_in_place(&mut v);
                Ok(v)
            })
            .collect()
    }
}

impl EmbeddingPort for RemoteEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, phrase: &str) -> Result<Vec<f64>, MetricError> {
        self.embed_all(&[phrase.to_string()]).map(|mut v| v.remove(0))
    }

    fn embed_all(&self, phrases: &[String]) -> Result<Vec<Vec<f64>>, MetricError> {
        let missing: Vec<String> = {
            let cache = self.cache.lock().unwrap();
            let mut m: Vec<String> = phrases.iter().filter(|p| !cache.contains_key(*p)).cloned().collect();
            m.dedup();
            m
        };
        if !missing.is_empty() {
            let vectors = self.fetch(&missing)?;
            let mut cache = self.cache.lock().unwrap();
            cache.extend(missing.into_iter().zip(vectors));
        }
        let cache = self.cache.lock().unwrap();
        Ok(phrases.iter().map(|p| cache[p].clone()).collect())
    }
}
