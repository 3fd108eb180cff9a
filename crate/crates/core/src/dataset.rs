//! On-disk formats: instance, edit-tuple, D-FOIL and error-annotation
//! JSONL files, plus the per-directory dataset manifest.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::edit::{corrupt, CorruptionConfig, EditError, EditTuple};
use crate::eval::{DFoilItem, ErrorAnnotation};
use crate::generator::{generate_initial, split_sentences, GeneratorError, Instance, SentenceParser};
use crate::graph::{canonicalize, parse_graph, parse_lenient, NormalizationPolicy, ParseMode, SceneGraph, StrictParseError, Triple};

pub const FORMAT_VERSION: &str = "1.0";
pub const MANIFEST_FILE: &str = "manifest.json";

/// A problem with one line of an input file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    /// One-based line number.
    pub line: usize,
    pub message: String,
}

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

fn join_diagnostics(d: &[Diagnostic]) -> String {
    d.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("{} invalid line(s): {}", .0.len(), join_diagnostics(.0))]
    Invalid(Vec<Diagnostic>),
    #[error("unsupported format version {0:?} (this reader handles {FORMAT_VERSION})")]
    UnsupportedVersion(String),
    #[error("manifest mismatch: {0}")]
    Manifest(String),
    #[error("instance {0} has no gold graph")]
    MissingGold(String),
    #[error("instance {id}: {source}")]
    Edit {
        id: String,
        #[source]
        source: EditError,
    },
    #[error(transparent)]
    Generator(#[from] GeneratorError),
    #[error("edit row {id} does not reproduce its target graph")]
    Verification { id: String },
    #[error("serialization: {0}")]
    Json(#[from] serde_json::Error),
}

fn read_file(path: &Path) -> Result<String, DatasetError> {
    fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Options shared by the JSONL readers.
#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    /// Stop at the first bad line instead of collecting every diagnostic.
    pub fail_fast: bool,
    pub policy: NormalizationPolicy,
}

/// Parses each non-blank line with `parse`, collecting diagnostics.
fn parse_lines<T>(
    text: &str,
    opts: &LoadOptions,
    mut parse: impl FnMut(usize, &str) -> Result<T, String>,
) -> Result<Vec<T>, DatasetError> {
    let mut out = Vec::new();
    let mut diagnostics = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match parse(i + 1, line) {
            Ok(v) => out.push(v),
            Err(message) => {
                diagnostics.push(Diagnostic { line: i + 1, message });
                if opts.fail_fast {
                    break;
                }
            }
        }
    }
    if diagnostics.is_empty() {
        Ok(out)
    } else {
        Err(DatasetError::Invalid(diagnostics))
    }
}

fn json_line<T: DeserializeOwned>(line: &str) -> Result<T, String> {
    serde_json::from_str(line).map_err(|e| format!("malformed record: {e}"))
}

fn strict_graph(text: &str, field: &str, policy: &NormalizationPolicy) -> Result<SceneGraph, String> {
    parse_graph(text, ParseMode::Strict)
        .map(|g| canonicalize(&g, policy))
        .map_err(|e: StrictParseError| format!("{field}: {e}"))
}

fn check_unique(seen: &mut HashMap<String, usize>, id: &str, line: usize) -> Result<(), String> {
    match seen.insert(id.to_string(), line) {
        Some(first) => {
            seen.insert(id.to_string(), first);
            Err(format!("DuplicateId {id:?} on lines {first} and {line}"))
        }
        None => Ok(()),
    }
}

/// One line of an instance file.
/// Sentence graphs are parser output and load leniently; gold graphs are strict.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub id: String,
    pub caption: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sentences: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sentence_graphs: Option<Vec<String>>,
}

impl InstanceRecord {
    pub fn into_instance(self, policy: &NormalizationPolicy) -> Result<Instance, String> {
        let sentences = self.sentences.unwrap_or_else(|| split_sentences(&self.caption));
        let gold_graph = self.graph.as_deref().map(|g| strict_graph(g, "graph", policy)).transpose()?;
        let sentence_graphs = match self.sentence_graphs {
            None => None,
            Some(raw) => {
                if raw.len() != sentences.len() {
                    return Err(format!(
                        "{} sentence graphs for {} sentences",
                        raw.len(),
                        sentences.len()
                    ));
                }
                Some(
                    raw.iter()
                        .map(|g| canonicalize(&parse_lenient(g), policy))
                        .collect(),
                )
            }
        };
        Ok(Instance {
            id: self.id,
            caption: self.caption,
            sentences,
            sentence_graphs,
            gold_graph,
        })
    }
}

impl From<&Instance> for InstanceRecord {
    fn from(inst: &Instance) -> Self {
        Self {
            id: inst.id.clone(),
            caption: inst.caption.clone(),
            sentences: Some(inst.sentences.clone()),
            graph: inst.gold_graph.as_ref().map(SceneGraph::to_flat),
            sentence_graphs: inst
                .sentence_graphs
                .as_ref()
                .map(|gs| gs.iter().map(SceneGraph::to_flat).collect()),
        }
    }
}

pub fn parse_instances(text: &str, opts: &LoadOptions) -> Result<Vec<Instance>, DatasetError> {
    let mut seen = HashMap::new();
    parse_lines(text, opts, |line, raw| {
        let rec: InstanceRecord = json_line(raw)?;
        check_unique(&mut seen, &rec.id, line)?;
        rec.into_instance(&opts.policy)
    })
}

/// Loads an instance JSONL file. Graphs are parsed strictly and
/// canonicalized; missing sentences are produced by the splitter.
pub fn load_instances(path: impl AsRef<Path>, opts: &LoadOptions) -> Result<Vec<Instance>, DatasetError> {
    parse_instances(&read_file(path.as_ref())?, opts)
}

pub fn write_jsonl<T: Serialize>(mut w: impl Write, rows: impl IntoIterator<Item = T>) -> Result<(), DatasetError> {
    for row in rows {
        serde_json::to_writer(&mut w, &row)?;
        w.write_all(b"\n").map_err(|source| DatasetError::Io {
            path: "<output>".into(),
            source,
        })?;
    }
    Ok(())
}

pub fn write_instances(w: impl Write, instances: &[Instance]) -> Result<(), DatasetError> {
    write_jsonl(w, instances.iter().map(InstanceRecord::from))
}

/// A `{"id", "graph"}` row, e.g. a prediction. Other fields are ignored.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphRecord {
    pub id: String,
    pub graph: String,
}

/// Reads graph rows. Predictions are usually read with
/// [`ParseMode::Lenient`] so a malformed unit does not reject the whole row.
pub fn parse_graph_records(text: &str, opts: &LoadOptions, mode: ParseMode) -> Result<Vec<(String, SceneGraph)>, DatasetError> {
    let mut seen = HashMap::new();
    parse_lines(text, opts, |line, raw| {
        let r: GraphRecord = json_line(raw)?;
        check_unique(&mut seen, &r.id, line)?;
        let g = match mode {
            ParseMode::Strict => strict_graph(&r.graph, "graph", &opts.policy)?,
            ParseMode::Lenient => canonicalize(&parse_lenient(&r.graph), &opts.policy),
        };
        Ok((r.id, g))
    })
}

pub fn load_graph_records(path: impl AsRef<Path>, opts: &LoadOptions, mode: ParseMode) -> Result<Vec<(String, SceneGraph)>, DatasetError> {
    parse_graph_records(&read_file(path.as_ref())?, opts, mode)
}

/// One line of an edit-supervision file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditTupleRecord {
    pub id: String,
    pub caption: String,
    pub initial_graph: String,
    pub delete: Vec<String>,
    pub insert: Vec<String>,
}

impl From<&EditTuple> for EditTupleRecord {
    fn from(t: &EditTuple) -> Self {
        Self {
            id: t.id.clone(),
            caption: t.caption.clone(),
            initial_graph: t.initial_graph.to_flat(),
            delete: t.delete_gt.iter().map(Triple::to_string).collect(),
            insert: t.insert_gt.iter().map(Triple::to_string).collect(),
        }
    }
}

fn strict_unit(text: &str, field: &str) -> Result<Triple, String> {
    let g = parse_graph(text, ParseMode::Strict).map_err(|e| format!("{field}: {e}"))?;
    match g.len() {
        1 => Ok(g.get(0).cloned().expect("one triple")),
        n => Err(format!("{field}: expected one unit, found {n}")),
    }
}

impl EditTupleRecord {
    pub fn into_tuple(self) -> Result<EditTuple, String> {
        let initial_graph = parse_graph(&self.initial_graph, ParseMode::Strict).map_err(|e| format!("initial_graph: {e}"))?;
        let units = |v: &[String], field: &str| -> Result<Vec<Triple>, String> {
            v.iter()
                .enumerate()
                .map(|(i, u)| strict_unit(u, &format!("{field}[{i}]")))
                .collect()
        };
        let tuple = EditTuple {
            id: self.id,
            caption: self.caption,
            delete_gt: units(&self.delete, "delete")?,
            insert_gt: units(&self.insert, "insert")?,
            initial_graph,
        };
        if !tuple.is_consistent() {
            return Err("delete must be a subset of initial_graph and insert disjoint from it".into());
        }
        Ok(tuple)
    }
}

pub fn parse_edit_tuples(text: &str, opts: &LoadOptions) -> Result<Vec<EditTuple>, DatasetError> {
    parse_lines(text, opts, |_, raw| json_line::<EditTupleRecord>(raw)?.into_tuple())
}

pub fn load_edit_tuples(path: impl AsRef<Path>, opts: &LoadOptions) -> Result<Vec<EditTuple>, DatasetError> {
    parse_edit_tuples(&read_file(path.as_ref())?, opts)
}

pub fn write_edit_tuples(w: impl Write, rows: &[EditTuple]) -> Result<(), DatasetError> {
    write_jsonl(w, rows.iter().map(EditTupleRecord::from))
}

/// Builds edit-supervision rows. For every instance: one row derived from
/// the merged per-sentence graph when sentence graphs are available (id
/// suffix `#merged`), then `cfg.n_variants` rows derived from corrupted gold
/// graphs (`#v0`, `#v1`, ...). Corpus distractors come from the gold graphs
/// of the whole input.
///
/// Every hundredth row is re-checked by applying its edits.
pub fn build_edit_dataset(
    instances: &[Instance],
    cfg: &CorruptionConfig,
    parser: Option<&dyn SentenceParser>,
    policy: &NormalizationPolicy,
) -> Result<Vec<EditTuple>, DatasetError> {
    let pool: Vec<SceneGraph> = instances.iter().filter_map(|i| i.gold_graph.clone()).collect();
    let mut rows = Vec::new();
    for inst in instances {
        let gold = inst
            .gold_graph
            .as_ref()
            .ok_or_else(|| DatasetError::MissingGold(inst.id.clone()))?;
        if inst.sentence_graphs.is_some() || parser.is_some() {
            match generate_initial(inst, parser, policy) {
                Ok(merged) => rows.push(EditTuple::new(format!("{}#merged", inst.id), &inst.caption, &merged.graph, gold)),
                Err(GeneratorError::MissingSentenceGraphs(_)) => {}
                Err(e) => return Err(e.into()),
            }
        }
        let variants = corrupt(gold, cfg, Some(&pool)).map_err(|source| DatasetError::Edit {
            id: inst.id.clone(),
            source,
        })?;
        for (v, initial) in variants.iter().enumerate() {
            rows.push(EditTuple::new(format!("{}#v{v}", inst.id), &inst.caption, initial, gold));
        }
    }
    let golds: HashMap<&str, &SceneGraph> = instances
        .iter()
        .filter_map(|i| i.gold_graph.as_ref().map(|g| (i.id.as_str(), g)))
        .collect();
    for row in rows.iter().step_by(100) {
        let base = row.id.rsplit_once('#').map_or(row.id.as_str(), |(b, _)| b);
        if !row.target().same_triples(golds[base]) {
            return Err(DatasetError::Verification { id: row.id.clone() });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DFoilRecord {
    id: String,
    hallucinated_graph: String,
    corrected_graph: String,
    reference_graph: String,
}

pub fn parse_dfoil(text: &str, opts: &LoadOptions) -> Result<Vec<DFoilItem>, DatasetError> {
    let mut seen = HashMap::new();
    parse_lines(text, opts, |line, raw| {
        let r: DFoilRecord = json_line(raw)?;
        check_unique(&mut seen, &r.id, line)?;
        Ok(DFoilItem {
            hallucinated: strict_graph(&r.hallucinated_graph, "hallucinated_graph", &opts.policy)?,
            corrected: strict_graph(&r.corrected_graph, "corrected_graph", &opts.policy)?,
            reference: strict_graph(&r.reference_graph, "reference_graph", &opts.policy)?,
            id: r.id,
        })
    })
}

pub fn load_dfoil(path: impl AsRef<Path>, opts: &LoadOptions) -> Result<Vec<DFoilItem>, DatasetError> {
    parse_dfoil(&read_file(path.as_ref())?, opts)
}

pub fn write_dfoil(w: impl Write, items: &[DFoilItem]) -> Result<(), DatasetError> {
    write_jsonl(
        w,
        items.iter().map(|i| DFoilRecord {
            id: i.id.clone(),
            hallucinated_graph: i.hallucinated.to_flat(),
            corrected_graph: i.corrected.to_flat(),
            reference_graph: i.reference.to_flat(),
        }),
    )
}

pub fn parse_error_annotations(text: &str, opts: &LoadOptions) -> Result<Vec<ErrorAnnotation>, DatasetError> {
    parse_lines(text, opts, |_, raw| json_line(raw))
}

pub fn load_error_annotations(path: impl AsRef<Path>, opts: &LoadOptions) -> Result<Vec<ErrorAnnotation>, DatasetError> {
    parse_error_annotations(&read_file(path.as_ref())?, opts)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitInfo {
    pub file: String,
    pub count: usize,
}

/// `manifest.json` of a dataset directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub format_version: String,
    pub policy: String,
    pub splits: BTreeMap<String, SplitInfo>,
}

fn count_records(text: &str) -> usize {
    text.lines().filter(|l| !l.trim().is_empty()).count()
}

impl DatasetManifest {
    pub fn new(name: impl Into<String>, policy: &NormalizationPolicy) -> Self {
        Self {
            name: name.into(),
            format_version: FORMAT_VERSION.to_string(),
            policy: policy.id(),
            splits: BTreeMap::new(),
        }
    }

    /// Records a split by counting the records of its file in `dir`.
    pub fn add_split(&mut self, dir: &Path, label: &str, file: &str) -> Result<(), DatasetError> {
        let count = count_records(&read_file(&dir.join(file))?);
        self.splits.insert(
            label.to_string(),
            SplitInfo {
                file: file.to_string(),
                count,
            },
        );
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> Result<(), DatasetError> {
        let path = dir.join(MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(&path, text).map_err(|source| DatasetError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    /// Reads and verifies a manifest: the major version must match and every
    /// split's count must equal its file's record count.
    pub fn read(dir: &Path) -> Result<Self, DatasetError> {
        let manifest: Self = serde_json::from_str(&read_file(&dir.join(MANIFEST_FILE))?)?;
        let major = |v: &str| v.split('.').next().unwrap_or("").to_string();
        if major(&manifest.format_version) != major(FORMAT_VERSION) {
            return Err(DatasetError::UnsupportedVersion(manifest.format_version));
        }
        for (label, split) in &manifest.splits {
            let actual = count_records(&read_file(&dir.join(&split.file))?);
            if actual != split.count {
                return Err(DatasetError::Manifest(format!(
                    "split {label}: manifest says {} records, {} has {actual}",
                    split.count, split.file
                )));
            }
        }
        Ok(manifest)
    }
}
