//! Initial graph construction: sentence splitting and the exact-name merge
//! of per-sentence graphs.

use std::collections::HashMap;
use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use crate::graph::{canonicalize, parse_graph, NormalizationPolicy, ParseMode, SceneGraph, Triple};

/// One caption with its optional per-sentence and gold graphs.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub id: String,
    pub caption: String,
    pub sentences: Vec<String>,
    pub sentence_graphs: Option<Vec<SceneGraph>>,
    pub gold_graph: Option<SceneGraph>,
}

impl Instance {
    /// Builds an instance whose sentences come from [`split_sentences`].
    pub fn new(id: impl Into<String>, caption: impl Into<String>) -> Self {
        let caption = caption.into();
        let sentences = split_sentences(&caption);
        Self {
            id: id.into(),
            caption,
            sentences,
            sentence_graphs: None,
            gold_graph: None,
        }
    }

    pub fn with_gold(mut self, gold: SceneGraph) -> Self {
        self.gold_graph = Some(gold);
        self
    }

    pub fn with_sentence_graphs(mut self, graphs: Vec<SceneGraph>) -> Self {
        self.sentence_graphs = Some(graphs);
        self
    }
}

// Tokens that end in '.' without ending a sentence. Compared lowercase and
// without the trailing period.
const ABBREVIATIONS: &[&str] = &[
    "approx", "e.g", "i.e", "etc", "vs", "mr", "mrs", "ms", "dr", "prof", "st", "no", "fig",
    "ca", "cf", "jr", "sr", "inc", "ltd", "co", "mt", "ft",
];

fn is_terminator(c: char) -> bool {
    matches!(c, '.' | '!' | '?')
}

fn is_closer(c: char) -> bool {
    matches!(c, '"' | '\'' | ')' | ']' | '\u{201d}' | '\u{2019}')
}

/// Rule-based sentence segmentation.
///
/// A run of `.`, `!` or `?` (plus closing quotes or brackets) ends a
/// sentence when it is followed by whitespace and then something that does
/// not start with a lowercase letter or digit. A period after a known
/// abbreviation never ends a sentence. Pieces are trimmed; nothing else is
/// dropped.
pub fn split_sentences(caption: &str) -> Vec<String> {
    let chars: Vec<(usize, char)> = caption.char_indices().collect();
    let mut sentences = Vec::new();
    let mut start = 0usize;
    let mut i = 0usize;
    while i < chars.len() {
        let (_, c) = chars[i];
        if !is_terminator(c) {
            i += 1;
            continue;
        }
        let term_pos = i;
        let mut j = i;
        while j < chars.len() && (is_terminator(chars[j].1) || is_closer(chars[j].1)) {
            j += 1;
        }
        let end_byte = chars.get(j).map_or(caption.len(), |&(b, _)| b);
        if j < chars.len() && !chars[j].1.is_whitespace() {
            // "3.5", "e.g.x": no break inside a token
            i = j;
            continue;
        }
        let mut k = j;
        while k < chars.len() && chars[k].1.is_whitespace() {
            k += 1;
        }
        let next = chars.get(k).map(|&(_, c)| c);
        let continues_lowercase = next.is_some_and(|n| n.is_lowercase() || n.is_ascii_digit());
        let abbreviation = c == '.'
            && j == term_pos + 1
            && ABBREVIATIONS.contains(&last_word(&caption[..chars[term_pos].0]).to_lowercase().as_str());
        if next.is_some() && (continues_lowercase || abbreviation) {
            i = j;
            continue;
        }
        let piece = caption[start..end_byte].trim();
        if !piece.is_empty() {
            sentences.push(piece.to_string());
        }
        start = end_byte;
        i = j;
    }
    let tail = caption[start..].trim();
    if !tail.is_empty() {
        sentences.push(tail.to_string());
    }
    sentences
}

fn last_word(prefix: &str) -> &str {
    let word = prefix.rsplit(char::is_whitespace).next().unwrap_or("");
    word.trim_start_matches(|c: char| !c.is_alphanumeric())
}

/// Unions per-sentence graphs after canonicalization. Nodes with identical
/// names are the same node, so repeated triples collapse to their first
/// occurrence.
pub fn merge_graphs(graphs: &[SceneGraph], policy: &NormalizationPolicy) -> SceneGraph {
    merge_with_provenance(graphs, policy).graph
}

/// Merged graph plus, for each triple, the index of the first sentence
/// graph that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedGraph {
    pub graph: SceneGraph,
    pub provenance: Vec<usize>,
}

impl GeneratedGraph {
    pub fn source_of(&self, triple: &Triple) -> Option<usize> {
        self.graph.index_of(triple).map(|i| self.provenance[i])
    }
}

pub fn merge_with_provenance(graphs: &[SceneGraph], policy: &NormalizationPolicy) -> GeneratedGraph {
    let mut graph = SceneGraph::new();
    let mut provenance = Vec::new();
    let mut malformed = Vec::new();
    for (sentence, g) in graphs.iter().enumerate() {
        let c = canonicalize(g, policy);
        malformed.extend(c.malformed_units().iter().cloned());
        for t in c.iter() {
            if graph.insert(t.clone()) {
                provenance.push(sentence);
            }
        }
    }
    GeneratedGraph {
        graph: graph.with_malformed_units(malformed),
        provenance,
    }
}

#[derive(Debug, Error)]
pub enum GeneratorError {
    #[error("instance {0}: no sentence graphs and no sentence parser configured")]
    MissingSentenceGraphs(String),
    #[error("instance {id}: {got} sentence graphs for {expected} sentences")]
    SentenceCountMismatch {
        id: String,
        expected: usize,
        got: usize,
    },
    #[error("sentence parser: {0}")]
    Parser(String),
}

/// Source of per-sentence graphs for instances that do not carry them.
pub trait SentenceParser: Send + Sync {
    fn parse_sentences(&self, id: &str, sentences: &[String]) -> Result<Vec<SceneGraph>, GeneratorError>;
}

/// Serves per-sentence graphs from a JSONL fixture of
/// `{"id": ..., "sentence_graphs": ["( ... )", ...]}` records.
#[derive(Debug, Clone, Default)]
pub struct FileSentenceParser {
    graphs: HashMap<String, Vec<SceneGraph>>,
}

#[derive(Deserialize)]
struct SentenceGraphRecord {
    id: String,
    sentence_graphs: Vec<String>,
}

impl FileSentenceParser {
    pub fn from_map(graphs: HashMap<String, Vec<SceneGraph>>) -> Self {
        Self { graphs }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, GeneratorError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| GeneratorError::Parser(format!("{}: {e}", path.display())))?;
        Self::from_jsonl(&text)
    }

    pub fn from_jsonl(text: &str) -> Result<Self, GeneratorError> {
        let mut graphs = HashMap::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec: SentenceGraphRecord = serde_json::from_str(line)
                .map_err(|e| GeneratorError::Parser(format!("line {}: {e}", n + 1)))?;
            // sentence-level parses are noisy; keep what parses
            let parsed = rec
                .sentence_graphs
                .iter()
                .map(|s| parse_graph(s, ParseMode::Lenient).unwrap_or_default())
                .collect();
            graphs.insert(rec.id, parsed);
        }
        Ok(Self { graphs })
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }
}

impl SentenceParser for FileSentenceParser {
    fn parse_sentences(&self, id: &str, _sentences: &[String]) -> Result<Vec<SceneGraph>, GeneratorError> {
        self.graphs
            .get(id)
            .cloned()
            .ok_or_else(|| GeneratorError::MissingSentenceGraphs(id.to_string()))
    }
}

/// Produces the initial graph for `inst`, preferring its own sentence graphs
/// over the parser port.
pub fn generate_initial(
    inst: &Instance,
    parser: Option<&dyn SentenceParser>,
    policy: &NormalizationPolicy,
) -> Result<GeneratedGraph, GeneratorError> {
    let graphs = match (&inst.sentence_graphs, parser) {
        (Some(gs), _) => {
            if gs.len() != inst.sentences.len() {
                return Err(GeneratorError::SentenceCountMismatch {
                    id: inst.id.clone(),
                    expected: inst.sentences.len(),
                    got: gs.len(),
                });
            }
            gs.clone()
        }
        (None, Some(p)) => p.parse_sentences(&inst.id, &inst.sentences)?,
        (None, None) => return Err(GeneratorError::MissingSentenceGraphs(inst.id.clone())),
    };
    Ok(merge_with_provenance(&graphs, policy))
}
