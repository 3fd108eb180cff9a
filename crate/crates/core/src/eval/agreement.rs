//! Preference agreement and D-FOIL hallucination discrimination.
//!
//! Both count a decision as correct only when the preferred side scores
//! strictly higher. Ties are counted as incorrect and reported separately.

use serde::{Deserialize, Serialize};

use crate::graph::SceneGraph;
use crate::metrics::{bsspice, spice, EmbeddingPort, MetricError, SynonymLexicon};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Agreement {
    pub accuracy: f64,
    pub correct: usize,
    pub ties: usize,
    pub total: usize,
}

impl Agreement {
    fn from_counts(correct: usize, ties: usize, total: usize) -> Self {
        Self {
            accuracy: if total == 0 { 0.0 } else { correct as f64 / total as f64 },
            correct,
            ties,
            total,
        }
    }
}

/// Fraction of `(winner score, loser score)` pairs where the metric prefers
/// the human-preferred item.
pub fn pairwise_agreement(preferences: &[(f64, f64)]) -> Agreement {
    let correct = preferences.iter().filter(|(w, l)| w > l).count();
    let ties = preferences.iter().filter(|(w, l)| w == l).count();
    Agreement::from_counts(correct, ties, preferences.len())
}

/// A hallucinated caption, its minimally corrected version and the
/// reference, all as graphs.
#[derive(Debug, Clone, PartialEq)]
pub struct DFoilItem {
    pub id: String,
    pub hallucinated: SceneGraph,
    pub corrected: SceneGraph,
    pub reference: SceneGraph,
}

/// Graph metric used to judge D-FOIL items.
pub enum GraphScorer<'a> {
    Spice(&'a SynonymLexicon),
    Bsspice(&'a dyn EmbeddingPort),
}

impl GraphScorer<'_> {
    pub fn score(&self, candidate: &SceneGraph, reference: &SceneGraph) -> Result<f64, MetricError> {
        match self {
            GraphScorer::Spice(lex) => Ok(spice(candidate, reference, lex).f1),
            GraphScorer::Bsspice(emb) => bsspice(candidate, reference, *emb),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            GraphScorer::Spice(_) => "spice",
            GraphScorer::Bsspice(_) => "bsspice",
        }
    }
}

/// An item is correct when the corrected graph scores strictly higher
/// against the reference than the hallucinated one.
pub fn dfoil_accuracy(items: &[DFoilItem], scorer: &GraphScorer<'_>) -> Result<Agreement, MetricError> {
    let preferences = items
        .iter()
        .map(|item| {
            Ok((
                scorer.score(&item.corrected, &item.reference)?,
                scorer.score(&item.hallucinated, &item.reference)?,
            ))
        })
        .collect::<Result<Vec<_>, MetricError>>()?;
    Ok(pairwise_agreement(&preferences))
}
