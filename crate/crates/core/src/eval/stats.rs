//! Corpus statistics and discourse-error tallies.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::generator::Instance;

/// Presence flags for the four discourse-level error categories of one
/// parsed graph. Each category counts once per instance however often it
/// occurs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorAnnotation {
    pub id: String,
    #[serde(rename = "cross")]
    pub cross_sentence_coreference: bool,
    #[serde(rename = "long")]
    pub long_range_dependency: bool,
    #[serde(rename = "implicit")]
    pub implicit_inference: bool,
    #[serde(rename = "coherence")]
    pub graph_coherence: bool,
}

/// Percentage of instances flagged per category.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ErrorRates {
    pub instances: usize,
    pub cross: f64,
    pub long: f64,
    pub implicit: f64,
    pub coherence: f64,
}

pub fn error_rates(annotations: &[ErrorAnnotation]) -> ErrorRates {
    let n = annotations.len();
    if n == 0 {
        return ErrorRates::default();
    }
    let pct = |f: fn(&ErrorAnnotation) -> bool| 100.0 * annotations.iter().filter(|a| f(a)).count() as f64 / n as f64;
    ErrorRates {
        instances: n,
        cross: pct(|a| a.cross_sentence_coreference),
        long: pct(|a| a.long_range_dependency),
        implicit: pct(|a| a.implicit_inference),
        coherence: pct(|a| a.graph_coherence),
    }
}

/// Per-instance averages over a corpus of gold graphs.
///
/// * `avg_len`: whitespace tokens per caption
/// * `avg_trp`: triples per graph
/// * `avg_obj`: distinct entities per graph, i.e. subjects and objects of
///   relation triples plus subjects of attribute triples
/// * `avg_rel`: distinct relations per graph, attribute relations excluded
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CorpusStats {
    pub instances: usize,
    pub avg_len: f64,
    pub avg_trp: f64,
    pub avg_obj: f64,
    pub avg_rel: f64,
    pub total_trp: usize,
}

/// Statistics over the instances that carry a gold graph; the rest are
/// skipped.
pub fn corpus_stats(instances: &[Instance]) -> CorpusStats {
    let graphs: Vec<(&Instance, &crate::graph::SceneGraph)> = instances
        .iter()
        .filter_map(|i| i.gold_graph.as_ref().map(|g| (i, g)))
        .collect();
    let n = graphs.len();
    if n == 0 {
        return CorpusStats::default();
    }
    let (mut len, mut trp, mut obj, mut rel) = (0usize, 0usize, 0usize, 0usize);
    for (inst, g) in &graphs {
        len += inst.caption.split_whitespace().count();
        trp += g.len();
        let mut entities = HashSet::new();
        let mut relations = HashSet::new();
        for t in g.iter() {
            entities.insert(t.subject());
            if !t.is_attribute() {
                entities.insert(t.object());
                relations.insert(t.relation());
            }
        }
        obj += entities.len();
        rel += relations.len();
    }
    let mean = |x: usize| x as f64 / n as f64;
    CorpusStats {
        instances: n,
        avg_len: mean(len),
        avg_trp: mean(trp),
        avg_obj: mean(obj),
        avg_rel: mean(rel),
        total_trp: trp,
    }
}

impl CorpusStats {
    pub const HEADER: [&'static str; 5] = ["Avg Len", "Avg Trp", "Avg Obj", "Avg Rel", "Total Trp"];

    pub fn row(&self) -> [String; 5] {
        [
            format!("{:.2}", self.avg_len),
            format!("{:.2}", self.avg_trp),
            format!("{:.2}", self.avg_obj),
            format!("{:.2}", self.avg_rel),
            self.total_trp.to_string(),
        ]
    }
}

impl fmt::Display for CorpusStats {
    /// Aligned two-line table: header, then values.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let row = self.row();
        let widths: Vec<usize> = Self::HEADER.iter().zip(&row).map(|(h, v)| h.len().max(v.len())).collect();
        let line = |cells: Vec<&str>| {
            cells
                .iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c:>w$}"))
                .collect::<Vec<_>>()
                .join(" | ")
        };
        writeln!(f, "{}", line(Self::HEADER.to_vec()))?;
        write!(f, "{}", line(row.iter().map(String::as_str).collect()))
    }
}
