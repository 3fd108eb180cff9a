//! TF-IDF vectors for caption retrieval and diversity sampling.

use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TfidfError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("k must be at least 1")]
    ZeroK,
    #[error("cannot select {k} documents from a corpus of {n}")]
    TooMany { k: usize, n: usize },
}

/// Lowercased alphanumeric tokens.
pub fn terms(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Sparse, L2-normalized vector keyed by term id.
pub type SparseVector = BTreeMap<usize, f64>;

/// Vocabulary and smoothed inverse document frequencies of a corpus:
/// `idf(t) = ln((N + 1) / (df(t) + 1)) + 1`.
#[derive(Debug, Clone)]
pub struct TfidfIndex {
    vocab: HashMap<String, usize>,
    idf: Vec<f64>,
    docs: Vec<SparseVector>,
}

fn normalize(v: &mut SparseVector) {
    let norm = v.values().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.values_mut().for_each(|x| *x /= norm);
    }
}

pub fn sparse_dot(a: &SparseVector, b: &SparseVector) -> f64 {
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    small.iter().filter_map(|(k, x)| large.get(k).map(|y| x * y)).sum()
}

impl TfidfIndex {
    pub fn fit<S: AsRef<str>>(corpus: &[S]) -> Self {
        let tokenized: Vec<Vec<String>> = corpus.iter().map(|d| terms(d.as_ref())).collect();
        let mut vocab: HashMap<String, usize> = HashMap::new();
        let mut df: Vec<usize> = Vec::new();
        for doc in &tokenized {
            let mut seen = std::collections::HashSet::new();
            for term in doc {
                let next = vocab.len();
                let id = *vocab.entry(term.clone()).or_insert(next);
                if id == df.len() {
                    df.push(0);
                }
                if seen.insert(id) {
                    df[id] += 1;
                }
            }
        }
        let n = corpus.len() as f64;
        let idf = df.iter().map(|&d| ((n + 1.0) / (d as f64 + 1.0)).ln() + 1.0).collect();
        let mut index = Self {
            vocab,
            idf,
            docs: Vec::new(),
        };
        index.docs = tokenized.iter().map(|d| index.vectorize_terms(d)).collect();
        index
    }

    fn vectorize_terms(&self, terms: &[String]) -> SparseVector {
        let mut v = SparseVector::new();
        for t in terms {
            if let Some(&id) = self.vocab.get(t) {
                *v.entry(id).or_default() += 1.0;
            }
        }
        for (id, x) in v.iter_mut() {
            *x *= self.idf[*id];
        }
        normalize(&mut v);
        v
    }

    /// Vector of an arbitrary text; terms outside the vocabulary are ignored.
    pub fn vectorize(&self, text: &str) -> SparseVector {
        self.vectorize_terms(&terms(text))
    }

    pub fn doc(&self, i: usize) -> &SparseVector {
        &self.docs[i]
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn idf(&self, term: &str) -> Option<f64> {
        self.vocab.get(term).map(|&i| self.idf[i])
    }

    /// Cosine similarity of `query` to every document.
    pub fn similarities(&self, query: &str) -> Vec<f64> {
        let q = self.vectorize(query);
        self.docs.iter().map(|d| sparse_dot(&q, d)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Retrieved {
    pub index: usize,
    pub score: f64,
}

/// The `k` documents most similar to `query`, best first; equal scores keep
/// corpus order.
pub fn tfidf_retrieve<S: AsRef<str>>(query: &str, corpus: &[S], k: usize) -> Result<Vec<Retrieved>, TfidfError> {
    if corpus.is_empty() {
        return Err(TfidfError::EmptyCorpus);
    }
    if k == 0 {
        return Err(TfidfError::ZeroK);
    }
    let index = TfidfIndex::fit(corpus);
    Ok(rank(&index.similarities(query), k))
}

fn rank(scores: &[f64], k: usize) -> Vec<Retrieved> {
    let mut ranked: Vec<Retrieved> = scores
        .iter()
        .enumerate()
        .map(|(index, &score)| Retrieved { index, score })
        .collect();
    ranked.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.index.cmp(&b.index)));
    ranked.truncate(k);
    ranked
}

/// Greedy farthest-point selection under cosine distance. Starts from a
/// seeded random document, then repeatedly adds the document whose nearest
/// selected neighbour is farthest away (lowest index on ties).
pub fn select_diverse<S: AsRef<str>>(corpus: &[S], k: usize, seed: u64) -> Result<Vec<usize>, TfidfError> {
    if k > corpus.len() {
        return Err(TfidfError::TooMany { k, n: corpus.len() });
    }
    if k == 0 {
        return Ok(Vec::new());
    }
    let index = TfidfIndex::fit(corpus);
    let n = corpus.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let first = rng.random_range(0..n);
    let mut selected = vec![first];
    let mut chosen = vec![false; n];
    chosen[first] = true;
    // distance from each document to its nearest selected document
    let mut nearest: Vec<f64> = (0..n)
        .map(|i| 1.0 - sparse_dot(index.doc(i), index.doc(first)))
        .collect();
    while selected.len() < k {
        let next = (0..n)
            .filter(|&i| !chosen[i])
            .fold(None::<usize>, |best, i| match best {
                Some(b) if nearest[b] >= nearest[i] => Some(b),
                _ => Some(i),
            })
            .expect("k <= n");
        chosen[next] = true;
        selected.push(next);
        for i in 0..n {
            let d = 1.0 - sparse_dot(index.doc(i), index.doc(next));
            if d < nearest[i] {
                nearest[i] = d;
            }
        }
    }
    Ok(selected)
}
