//! Python bindings: graph codec, edits, corruption and metrics.
//!
//! ```python
//! import sgr
//! g = sgr.SceneGraph.parse("( cat , on , mat ) , ( dog , on , mat )")
//! gold = sgr.SceneGraph([("cat", "on", "mat")])
//! flags, inserts = sgr.derive_edits(g, gold)
//! assert sgr.apply_edits(g, flags, inserts) == gold
//! ```

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use sgr_core::edit::{self, CorruptionConfig, EditActions, InsertionPool};
use sgr_core::eval::{lexdiv, rank, tfidf};
use sgr_core::graph::{self, NormalizationPolicy, ParseMode, Triple};
use sgr_core::metrics::{self, SynonymLexicon};
use sgr_core::refine::HeuristicProgrammer;

type TripleTuple = (String, String, String);

fn value_err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_triple((s, r, o): TripleTuple) -> PyResult<Triple> {
    Triple::new(s, r, o).map_err(value_err)
}

fn to_tuple(t: &Triple) -> TripleTuple {
    (t.subject().to_string(), t.relation().to_string(), t.object().to_string())
}

/// An insertion-ordered set of (subject, relation, object) triples.
#[pyclass(name = "SceneGraph", eq, from_py_object)]
#[derive(Clone, PartialEq)]
struct PySceneGraph {
    inner: graph::SceneGraph,
}

impl From<graph::SceneGraph> for PySceneGraph {
    fn from(inner: graph::SceneGraph) -> Self {
        Self { inner }
    }
}

#[pymethods]
impl PySceneGraph {
    #[new]
    #[pyo3(signature = (triples=None))]
    fn new(triples: Option<Vec<TripleTuple>>) -> PyResult<Self> {
        let inner = triples
            .unwrap_or_default()
            .into_iter()
            .map(to_triple)
            .collect::<PyResult<graph::SceneGraph>>()?;
        Ok(inner.into())
    }

    /// Parses a flattened graph. Strict parsing raises ValueError on the
    /// first malformed unit; lenient parsing sets such units aside.
    #[staticmethod]
    #[pyo3(signature = (text, lenient=false))]
    fn parse(text: &str, lenient: bool) -> PyResult<Self> {
        let mode = if lenient { ParseMode::Lenient } else { ParseMode::Strict };
        graph::parse_graph(text, mode).map(Into::into).map_err(value_err)
    }

    fn to_flat(&self) -> String {
        self.inner.to_flat()
    }

    fn triples(&self) -> Vec<TripleTuple> {
        self.inner.iter().map(to_tuple).collect()
    }

    #[getter]
    fn malformed_units(&self) -> Vec<String> {
        self.inner.malformed_units().to_vec()
    }

    /// Set equality, ignoring order.
    fn same_triples(&self, other: &PySceneGraph) -> bool {
        self.inner.same_triples(&other.inner)
    }

    /// Copy under the default normalization policy.
    fn canonicalize(&self) -> Self {
        graph::canonicalize(&self.inner, &NormalizationPolicy::default()).into()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __contains__(&self, t: TripleTuple) -> PyResult<bool> {
        Ok(self.inner.contains(&to_triple(t)?))
    }

    fn __str__(&self) -> String {
        self.inner.to_flat()
    }

    fn __repr__(&self) -> String {
        format!("SceneGraph.parse({:?})", self.inner.to_flat())
    }
}

#[pyclass(get_all, frozen, skip_from_py_object)]
#[derive(Clone)]
struct SpiceScore {
    precision: f64,
    recall: f64,
    f1: f64,
}

#[pymethods]
impl SpiceScore {
    fn __repr__(&self) -> String {
        format!("SpiceScore(precision={}, recall={}, f1={})", self.precision, self.recall, self.f1)
    }
}

#[pyfunction]
fn serialize_graph(triples: Vec<TripleTuple>) -> PyResult<String> {
    let g = triples.into_iter().map(to_triple).collect::<PyResult<graph::SceneGraph>>()?;
    Ok(graph::serialize_graph(&g))
}

#[pyfunction]
fn split_sentences(caption: &str) -> Vec<String> {
    sgr_core::split_sentences(caption)
}

/// Union of per-sentence graphs, first occurrence wins.
#[pyfunction]
fn merge_graphs(graphs: Vec<PySceneGraph>) -> PySceneGraph {
    let gs: Vec<graph::SceneGraph> = graphs.into_iter().map(|g| g.inner).collect();
    sgr_core::merge_graphs(&gs, &NormalizationPolicy::default()).into()
}

/// Delete flags aligned to `initial` and triples to insert.
#[pyfunction]
fn derive_edits(initial: &PySceneGraph, gold: &PySceneGraph) -> (Vec<bool>, Vec<TripleTuple>) {
    let a = edit::derive_edits(&initial.inner, &gold.inner);
    (a.delete_flags, a.insertions.iter().map(to_tuple).collect())
}

#[pyfunction]
fn apply_edits(graph: &PySceneGraph, delete_flags: Vec<bool>, insertions: Vec<TripleTuple>) -> PyResult<PySceneGraph> {
    let actions = EditActions {
        delete_flags,
        insertions: insertions.into_iter().map(to_triple).collect::<PyResult<_>>()?,
    };
    edit::apply_edits(&graph.inner, &actions).map(Into::into).map_err(value_err)
}

/// Flags the heuristic programmer would raise on `graph` for `caption`.
#[pyfunction]
fn heuristic_edits(graph: &PySceneGraph, caption: &str) -> Vec<bool> {
    HeuristicProgrammer::default().edits(&graph.inner, caption).delete_flags
}

#[pyfunction]
#[pyo3(signature = (gold, n_variants=15, delete_fraction=1.0/3.0, insert_fraction=1.0/3.0, seed=0, pool=None, perturb=false))]
fn corrupt(
    gold: &PySceneGraph,
    n_variants: usize,
    delete_fraction: f64,
    insert_fraction: f64,
    seed: u64,
    pool: Option<Vec<PySceneGraph>>,
    perturb: bool,
) -> PyResult<Vec<PySceneGraph>> {
    let cfg = CorruptionConfig {
        n_variants,
        delete_fraction,
        insert_fraction,
        insertion_pool: if perturb { InsertionPool::Perturb } else { InsertionPool::Corpus },
        seed,
    };
    let pool: Option<Vec<graph::SceneGraph>> = pool.map(|p| p.into_iter().map(|g| g.inner).collect());
    edit::corrupt(&gold.inner, &cfg, pool.as_deref())
        .map(|vs| vs.into_iter().map(Into::into).collect())
        .map_err(value_err)
}

/// SPICE against `gold`; `synonyms` is a list of synonym classes.
#[pyfunction]
#[pyo3(signature = (pred, gold, synonyms=None))]
fn spice(pred: &PySceneGraph, gold: &PySceneGraph, synonyms: Option<Vec<Vec<String>>>) -> SpiceScore {
    let lex = synonyms.map_or_else(SynonymLexicon::empty, SynonymLexicon::from_classes);
    let s = metrics::spice(&pred.inner, &gold.inner, &lex);
    SpiceScore {
        precision: s.precision,
        recall: s.recall,
        f1: s.f1,
    }
}

/// Bidirectional soft SPICE with the built-in hashed embedder.
#[pyfunction]
fn bsspice(a: &PySceneGraph, b: &PySceneGraph) -> PyResult<f64> {
    metrics::bsspice(&a.inner, &b.inner, &metrics::default_embedder()).map_err(value_err)
}

#[pyfunction]
fn kendall_tau_b(metric: Vec<f64>, reference: Vec<f64>) -> PyResult<f64> {
    let p = rank::RankedPair::new(metric, reference).map_err(value_err)?;
    rank::kendall_tau_b(&p).map_err(value_err)
}

#[pyfunction]
fn spearman_rho(metric: Vec<f64>, reference: Vec<f64>) -> PyResult<f64> {
    let p = rank::RankedPair::new(metric, reference).map_err(value_err)?;
    rank::spearman_rho(&p).map_err(value_err)
}

#[pyfunction]
#[pyo3(signature = (text, window=lexdiv::DEFAULT_MATTR_WINDOW))]
fn mattr(text: &str, window: usize) -> PyResult<f64> {
    lexdiv::mattr(&lexdiv::tokenize(text), window).map_err(value_err)
}

#[pyfunction]
#[pyo3(signature = (text, threshold=lexdiv::DEFAULT_MTLD_THRESHOLD))]
fn mtld(text: &str, threshold: f64) -> PyResult<f64> {
    lexdiv::mtld(&lexdiv::tokenize(text), threshold).map_err(value_err)
}

/// `(index, score)` of the `k` captions most similar to `query`.
#[pyfunction]
fn tfidf_retrieve(query: &str, corpus: Vec<String>, k: usize) -> PyResult<Vec<(usize, f64)>> {
    tfidf::tfidf_retrieve(query, &corpus, k)
        .map(|hits| hits.into_iter().map(|h| (h.index, h.score)).collect())
        .map_err(value_err)
}

#[pyfunction]
#[pyo3(signature = (corpus, k, seed=0))]
fn select_diverse(corpus: Vec<String>, k: usize, seed: u64) -> PyResult<Vec<usize>> {
    tfidf::select_diverse(&corpus, k, seed).map_err(value_err)
}

#[pymodule]
fn sgr(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySceneGraph>()?;
    m.add_class::<SpiceScore>()?;
    m.add_function(wrap_pyfunction!(serialize_graph, m)?)?;
    m.add_function(wrap_pyfunction!(split_sentences, m)?)?;
    m.add_function(wrap_pyfunction!(merge_graphs, m)?)?;
    m.add_function(wrap_pyfunction!(derive_edits, m)?)?;
    m.add_function(wrap_pyfunction!(apply_edits, m)?)?;
    m.add_function(wrap_pyfunction!(heuristic_edits, m)?)?;
    m.add_function(wrap_pyfunction!(corrupt, m)?)?;
    m.add_function(wrap_pyfunction!(spice, m)?)?;
    m.add_function(wrap_pyfunction!(bsspice, m)?)?;
    m.add_function(wrap_pyfunction!(kendall_tau_b, m)?)?;
    m.add_function(wrap_pyfunction!(spearman_rho, m)?)?;
    m.add_function(wrap_pyfunction!(mattr, m)?)?;
    m.add_function(wrap_pyfunction!(mtld, m)?)?;
    m.add_function(wrap_pyfunction!(tfidf_retrieve, m)?)?;
    m.add_function(wrap_pyfunction!(select_diverse, m)?)?;
    m.add("__version__", sgr_core::VERSION)?;
    Ok(())
}
