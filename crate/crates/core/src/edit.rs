//! Edit actions over scene graphs: derivation of ground-truth edits,
//! synthetic corruption of gold graphs, insertion validation, and the
//! delete-then-insert interpreter.

use std::collections::HashSet;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{parse_lenient, unit_arity, SceneGraph, Triple};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EditError {
    #[error("edit actions carry {flags} delete flags for a graph of {triples} triples")]
    FlagLengthMismatch { flags: usize, triples: usize },
    #[error("cannot corrupt an empty gold graph")]
    EmptyGold,
    #[error("corpus insertion requested but the distractor pool is empty")]
    EmptyPool,
    #[error("invalid corruption config: {0}")]
    InvalidConfig(String),
}

/// Per-triple delete flags aligned with a graph, plus triples to insert.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EditActions {
    /// `true` = DELETE, `false` = KEEP, index-aligned with the graph.
    pub delete_flags: Vec<bool>,
    pub insertions: Vec<Triple>,
}

impl EditActions {
    /// Keeps every triple of a graph with `len` triples and inserts nothing.
    pub fn keep_all(len: usize) -> Self {
        Self {
            delete_flags: vec![false; len],
            insertions: Vec::new(),
        }
    }

    /// Builds flags by looking up each triple of `graph` in `deletions`.
    pub fn from_sets<'a>(
        graph: &SceneGraph,
        deletions: impl IntoIterator<Item = &'a Triple>,
        insertions: Vec<Triple>,
    ) -> Self {
        let deletions: HashSet<&Triple> = deletions.into_iter().collect();
        Self {
            delete_flags: graph.iter().map(|t| deletions.contains(t)).collect(),
            insertions,
        }
    }

    pub fn delete_count(&self) -> usize {
        self.delete_flags.iter().filter(|&&d| d).count()
    }

    pub fn is_empty(&self) -> bool {
        self.delete_count() == 0 && self.insertions.is_empty()
    }

    /// The triples of `graph` flagged for deletion.
    pub fn deleted_triples<'g>(&self, graph: &'g SceneGraph) -> Vec<&'g Triple> {
        graph
            .iter()
            .zip(&self.delete_flags)
            .filter_map(|(t, &d)| d.then_some(t))
            .collect()
    }
}

/// One row of edit supervision: a caption, an initial graph, and the
/// triples to delete from / insert into it to reach the gold graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EditTuple {
    pub id: String,
    pub caption: String,
    pub initial_graph: SceneGraph,
    pub delete_gt: Vec<Triple>,
    pub insert_gt: Vec<Triple>,
}

impl EditTuple {
    pub fn new(id: impl Into<String>, caption: impl Into<String>, initial: &SceneGraph, gold: &SceneGraph) -> Self {
        let actions = derive_edits(initial, gold);
        Self {
            id: id.into(),
            caption: caption.into(),
            delete_gt: actions.deleted_triples(initial).into_iter().cloned().collect(),
            insert_gt: actions.insertions,
            initial_graph: initial.clone(),
        }
    }

    /// The tuple's edits as actions aligned to its initial graph.
    pub fn actions(&self) -> EditActions {
        EditActions::from_sets(&self.initial_graph, &self.delete_gt, self.insert_gt.clone())
    }

    /// Reconstructs the target graph by applying the tuple's own edits.
    pub fn target(&self) -> SceneGraph {
        apply_edits(&self.initial_graph, &self.actions()).expect("actions are aligned by construction")
    }

    /// Checks `delete_gt ⊆ initial` and `insert_gt ∩ initial = ∅`.
    pub fn is_consistent(&self) -> bool {
        self.delete_gt.iter().all(|t| self.initial_graph.contains(t))
            && self.insert_gt.iter().all(|t| !self.initial_graph.contains(t))
    }
}

/// Ground-truth edits turning `initial` into `gold`: delete what gold lacks,
/// insert what initial lacks. Triples in both are never touched.
pub fn derive_edits(initial: &SceneGraph, gold: &SceneGraph) -> EditActions {
    EditActions {
        delete_flags: initial.iter().map(|t| !gold.contains(t)).collect(),
        insertions: gold.iter().filter(|t| !initial.contains(t)).cloned().collect(),
    }
}

/// Counts from one interpreter step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ApplyStats {
    pub deletes_applied: usize,
    pub deletes_skipped: usize,
    pub inserts_added: usize,
    pub inserts_redundant: usize,
}

impl ApplyStats {
    /// Number of edits that changed the graph.
    pub fn applied(&self) -> usize {
        self.deletes_applied + self.inserts_added
    }
}

/// Removes flagged triples, then unions the insertions into the survivors.
pub fn apply_edits(g: &SceneGraph, a: &EditActions) -> Result<SceneGraph, EditError> {
    apply_edits_against(g, a, None).map(|(graph, _)| graph)
}

/// Like [`apply_edits`], but when `basis` is given the flags are understood
/// relative to that snapshot: a flagged triple whose value at the same index
/// in `g` differs is stale and is skipped with a warning.
pub fn apply_edits_against(
    g: &SceneGraph,
    a: &EditActions,
    basis: Option<&SceneGraph>,
) -> Result<(SceneGraph, ApplyStats), EditError> {
    let expected = basis.map_or(g.len(), SceneGraph::len);
    if a.delete_flags.len() != expected {
        return Err(EditError::FlagLengthMismatch {
            flags: a.delete_flags.len(),
            triples: expected,
        });
    }
    let mut stats = ApplyStats::default();
    let mut doomed = vec![false; g.len()];
    for (i, &flag) in a.delete_flags.iter().enumerate() {
        if !flag {
            continue;
        }
        match basis {
            None => {
                doomed[i] = true;
                stats.deletes_applied += 1;
            }
            Some(b) => {
                let wanted = b.get(i).expect("flag count checked");
                if g.get(i) == Some(wanted) {
                    doomed[i] = true;
                    stats.deletes_applied += 1;
                } else {
                    log::warn!("skipping stale delete of {wanted} at index {i}");
                    stats.deletes_skipped += 1;
                }
            }
        }
    }
    let mut out: SceneGraph = g
        .iter()
        .zip(&doomed)
        .filter_map(|(t, &d)| (!d).then(|| t.clone()))
        .collect();
    for t in &a.insertions {
        if out.insert(t.clone()) {
            stats.inserts_added += 1;
        } else {
            stats.inserts_redundant += 1;
        }
    }
    // a delete followed by re-insertion of the same triple is a no-op
    let reinserted = a
        .insertions
        .iter()
        .filter(|t| g.index_of(t).is_some_and(|i| doomed[i]))
        .collect::<HashSet<_>>()
        .len();
    stats.deletes_applied -= reinserted;
    stats.inserts_added -= reinserted;
    Ok((out, stats))
}

/// A unit that could not become a triple.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectedUnit {
    pub raw: String,
    pub reason: String,
}

/// Splits decoder output into well-formed triples and rejected units.
pub fn validate_insertions(raw: &str) -> (Vec<Triple>, Vec<RejectedUnit>) {
    let parsed = parse_lenient(raw);
    let accepted = parsed.iter().cloned().collect();
    let rejected = parsed
        .malformed_units()
        .iter()
        .map(|u| RejectedUnit {
            raw: u.clone(),
            reason: malformed_reason(u),
        })
        .collect();
    (accepted, rejected)
}

fn malformed_reason(unit: &str) -> String {
    match (unit.starts_with('('), unit.ends_with(')')) {
        (true, true) => {
            let body = &unit[1..unit.len() - 1];
            let arity = unit_arity(body);
            if arity == 3 {
                "empty field".to_string()
            } else {
                format!("arity {arity}, expected 3")
            }
        }
        (true, false) => "incomplete unit".to_string(),
        _ => "text outside any unit".to_string(),
    }
}

/// Validates insertion units that arrive as field arrays (the wire format).
pub fn validate_insertion_units(units: &[Vec<String>]) -> (Vec<Triple>, Vec<RejectedUnit>) {
    let mut accepted = Vec::new();
    let mut rejected = Vec::new();
    for unit in units {
        let raw = format!("( {} )", unit.join(" , "));
        if unit.len() != 3 {
            rejected.push(RejectedUnit {
                raw,
                reason: format!("arity {}, expected 3", unit.len()),
            });
            continue;
        }
        match Triple::new(&unit[0], &unit[1], &unit[2]) {
            Ok(t) => accepted.push(t),
            Err(e) => rejected.push(RejectedUnit {
                raw,
                reason: e.to_string(),
            }),
        }
    }
    (accepted, rejected)
}

/// Where insertion distractors come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InsertionPool {
    /// Triples drawn from other graphs in the corpus.
    Corpus,
    /// Gold triples with one field swapped for another corpus string.
    Perturb,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorruptionConfig {
    pub n_variants: usize,
    pub delete_fraction: f64,
    pub insert_fraction: f64,
    pub insertion_pool: InsertionPool,
    pub seed: u64,
}

impl Default for CorruptionConfig {
    fn default() -> Self {
        Self {
            n_variants: 15,
            delete_fraction: 1.0 / 3.0,
            insert_fraction: 1.0 / 3.0,
            insertion_pool: InsertionPool::Corpus,
            seed: 0,
        }
    }
}

impl CorruptionConfig {
    pub fn validate(&self) -> Result<(), EditError> {
        if self.n_variants == 0 {
            return Err(EditError::InvalidConfig("n_variants must be at least 1".into()));
        }
        for (name, v) in [("delete_fraction", self.delete_fraction), ("insert_fraction", self.insert_fraction)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(EditError::InvalidConfig(format!("{name} {v} outside [0, 1]")));
            }
        }
        Ok(())
    }

    /// Generator for one variant. Each variant has its own stream so any
    /// variant can be reproduced on its own.
    pub fn variant_rng(&self, variant: usize) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed ^ variant as u64)
    }
}

/// Produces `cfg.n_variants` corrupted copies of `gold`. Each variant drops
/// `round(delete_fraction * |gold|)` random gold triples and adds
/// `round(insert_fraction * |gold|)` distractors that are not in gold (fewer
/// if the pool runs out).
pub fn corrupt(gold: &SceneGraph, cfg: &CorruptionConfig, pool: Option<&[SceneGraph]>) -> Result<Vec<SceneGraph>, EditError> {
    cfg.validate()?;
    if gold.is_empty() {
        return Err(EditError::EmptyGold);
    }
    let n = gold.len();
    let n_delete = (cfg.delete_fraction * n as f64).round() as usize;
    let n_insert = (cfg.insert_fraction * n as f64).round() as usize;

    let distractors: Vec<Triple> = match cfg.insertion_pool {
        InsertionPool::Corpus if n_insert > 0 => {
            let mut seen = HashSet::new();
            let all: Vec<Triple> = pool
                .unwrap_or_default()
                .iter()
                .flat_map(|g| g.iter())
                .filter(|t| !gold.contains(t) && seen.insert(*t))
                .cloned()
                .collect();
            if all.is_empty() {
                return Err(EditError::EmptyPool);
            }
            all
        }
        _ => Vec::new(),
    };
    let vocab = PerturbVocabulary::new(gold, pool.unwrap_or_default());

    (0..cfg.n_variants)
        .map(|v| {
            let mut rng = cfg.variant_rng(v);
            let mut dropped = vec![false; n];
            for i in sample(&mut rng, n, n_delete.min(n)) {
                dropped[i] = true;
            }
            let mut kept: Vec<Triple> = gold
                .iter()
                .zip(&dropped)
                .filter_map(|(t, &d)| (!d).then(|| t.clone()))
                .collect();
            let extra = match cfg.insertion_pool {
                InsertionPool::Corpus => sample(&mut rng, distractors.len(), n_insert.min(distractors.len()))
                    .into_iter()
                    .map(|i| distractors[i].clone())
                    .collect(),
                InsertionPool::Perturb => vocab.perturbations(gold, n_insert, &mut rng),
            };
            for t in extra {
                let at = rng.random_range(0..=kept.len());
                kept.insert(at, t);
            }
            Ok(kept.into_iter().collect())
        })
        .collect()
}

struct PerturbVocabulary {
    entities: Vec<String>,
    relations: Vec<String>,
}

impl PerturbVocabulary {
    fn new(gold: &SceneGraph, pool: &[SceneGraph]) -> Self {
        let mut entities = indexmap::IndexSet::new();
        let mut relations = indexmap::IndexSet::new();
        for t in std::iter::once(gold).chain(pool).flat_map(|g| g.iter()) {
            entities.insert(t.subject().to_string());
            entities.insert(t.object().to_string());
            relations.insert(t.relation().to_string());
        }
        Self {
            entities: entities.into_iter().collect(),
            relations: relations.into_iter().collect(),
        }
    }

    fn perturbations(&self, gold: &SceneGraph, count: usize, rng: &mut ChaCha8Rng) -> Vec<Triple> {
        let mut out: Vec<Triple> = Vec::with_capacity(count);
        let max_attempts = 50 * count.max(1);
        for _ in 0..max_attempts {
            if out.len() == count {
                break;
            }
            let base = gold.get(rng.random_range(0..gold.len())).expect("non-empty gold");
            let slot = rng.random_range(0..3);
            let source = if slot == 1 { &self.relations } else { &self.entities };
            let replacement = &source[rng.random_range(0..source.len())];
            let [s, r, o] = base.fields();
            let candidate = match slot {
                0 => Triple::new(replacement, r, o),
                1 => Triple::new(s, replacement, o),
                _ => Triple::new(s, r, replacement),
            }
            .expect("fields come from valid triples");
            if !gold.contains(&candidate) && !out.contains(&candidate) {
                out.push(candidate);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{parse_graph, ParseMode};

    fn g(text: &str) -> SceneGraph {
        parse_graph(text, ParseMode::Strict).unwrap()
    }

    fn t(s: &str, r: &str, o: &str) -> Triple {
        Triple::new(s, r, o).unwrap()
    }

    #[test]
    fn derive_set_difference() {
        let initial = g("( a , r , b ) , ( c , s , d )");
        let gold = g("( a , r , b ) , ( e , t , f )");
        let a = derive_edits(&initial, &gold);
        assert_eq!(a.delete_flags, vec![false, true]);
        assert_eq!(a.insertions, vec![t("e", "t", "f")]);
        assert!(apply_edits(&initial, &a).unwrap().same_triples(&gold));
    }

    #[test]
    fn derive_identity() {
        let x = g("( a , r , b ) , ( c , s , d )");
        let a = derive_edits(&x, &x);
        assert!(a.is_empty());
        assert_eq!(a.delete_flags.len(), 2);
    }

    #[test]
    fn delete_then_reinsert() {
        let x = g("( a , r , b )");
        let a = EditActions {
            delete_flags: vec![true],
            insertions: vec![t("a", "r", "b")],
        };
        let (out, stats) = apply_edits_against(&x, &a, None).unwrap();
        assert_eq!(out, x);
        assert_eq!(stats.applied(), 0);
    }

    #[test]
    fn keep_all_is_identity() {
        let x = g("( a , r , b ) , ( c , s , d )");
        assert_eq!(apply_edits(&x, &EditActions::keep_all(2)).unwrap(), x);
    }

    #[test]
    fn flag_length_mismatch() {
        let x = g("( a , r , b )");
        assert_eq!(
            apply_edits(&x, &EditActions::keep_all(2)),
            Err(EditError::FlagLengthMismatch { flags: 2, triples: 1 })
        );
    }

    #[test]
    fn stale_deletes_are_skipped() {
        let basis = g("( a , r , b ) , ( c , s , d )");
        let current = g("( c , s , d ) , ( a , r , b )");
        let a = EditActions {
            delete_flags: vec![true, false],
            insertions: vec![],
        };
        let (out, stats) = apply_edits_against(&current, &a, Some(&basis)).unwrap();
        assert_eq!(out, current);
        assert_eq!(stats.deletes_skipped, 1);
    }

    #[test]
    fn validate_examples() {
        let (ok, bad) = validate_insertions("( sky , is , hazy )");
        assert_eq!(ok, vec![t("sky", "is", "hazy")]);
        assert!(bad.is_empty());

        let (ok, bad) = validate_insertions("( image )");
        assert!(ok.is_empty());
        assert_eq!(bad.len(), 1);
        assert_eq!(bad[0].raw, "( image )");
        assert!(bad[0].reason.starts_with("arity 1"));

        assert_eq!(validate_insertions(""), (vec![], vec![]));

        let (_, bad) = validate_insertions("( a , b , c ) , ( d , e");
        assert_eq!(bad[0].reason, "incomplete unit");
    }

    #[test]
    fn validate_wire_units() {
        let units = vec![
            vec!["a".to_string(), "b".to_string(), "c".to_string()],
            vec!["a".to_string(), "b".to_string()],
            vec!["a".to_string(), "".to_string(), "c".to_string()],
        ];
        let (ok, bad) = validate_insertion_units(&units);
        assert_eq!(ok, vec![t("a", "b", "c")]);
        assert_eq!(bad.len(), 2);
    }

    fn gold20() -> SceneGraph {
        (0..20).map(|i| t(&format!("e{i}"), "near", &format!("o{i}"))).collect()
    }

    fn pool() -> Vec<SceneGraph> {
        vec![(0..30).map(|i| t(&format!("x{i}"), "on", "y")).collect()]
    }

    #[test]
    fn zero_fractions_copy_gold() {
        let cfg = CorruptionConfig {
            n_variants: 3,
            delete_fraction: 0.0,
            insert_fraction: 0.0,
            ..Default::default()
        };
        let out = corrupt(&gold20(), &cfg, None).unwrap();
        assert_eq!(out, vec![gold20(); 3]);
    }

    #[test]
    fn one_third_of_twenty_deletes_seven() {
        let cfg = CorruptionConfig {
            n_variants: 4,
            insert_fraction: 0.0,
            ..Default::default()
        };
        for v in corrupt(&gold20(), &cfg, None).unwrap() {
            assert_eq!(v.len(), 13);
            assert!(v.iter().all(|t| gold20().contains(t)));
        }
    }

    #[test]
    fn corpus_insertions_are_distractors() {
        let gold = gold20();
        let cfg = CorruptionConfig::default();
        let out = corrupt(&gold, &cfg, Some(&pool())).unwrap();
        assert_eq!(out.len(), 15);
        for v in &out {
            let foreign = v.iter().filter(|t| !gold.contains(t)).count();
            assert_eq!(foreign, 7);
            assert_eq!(v.len(), 20);
        }
        assert_ne!(out[0], out[1]);
    }

    #[test]
    fn corruption_is_deterministic_per_variant() {
        let cfg = CorruptionConfig { seed: 42, ..Default::default() };
        let a = corrupt(&gold20(), &cfg, Some(&pool())).unwrap();
        let b = corrupt(&gold20(), &cfg, Some(&pool())).unwrap();
        assert_eq!(a, b);
        let serialized: Vec<String> = a.iter().map(SceneGraph::to_flat).collect();
        let again: Vec<String> = b.iter().map(SceneGraph::to_flat).collect();
        assert_eq!(serialized, again);
        let other = corrupt(&gold20(), &CorruptionConfig { seed: 43, ..cfg }, Some(&pool())).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn perturb_mode_swaps_one_field() {
        let gold = gold20();
        let cfg = CorruptionConfig {
            insertion_pool: InsertionPool::Perturb,
            delete_fraction: 0.0,
            ..Default::default()
        };
        for v in corrupt(&gold, &cfg, None).unwrap() {
            let foreign: Vec<_> = v.iter().filter(|t| !gold.contains(t)).collect();
            assert_eq!(foreign.len(), 7);
            for f in foreign {
                let closest = gold
                    .iter()
                    .map(|gt| gt.fields().iter().zip(f.fields()).filter(|(a, b)| *a == b).count())
                    .max()
                    .unwrap();
                assert_eq!(closest, 2);
            }
        }
    }

    #[test]
    fn corruption_errors() {
        let cfg = CorruptionConfig::default();
        assert_eq!(corrupt(&SceneGraph::new(), &cfg, None), Err(EditError::EmptyGold));
        assert_eq!(corrupt(&gold20(), &cfg, None), Err(EditError::EmptyPool));
        assert_eq!(corrupt(&gold20(), &cfg, Some(&[])), Err(EditError::EmptyPool));
        let bad = CorruptionConfig { delete_fraction: 1.5, ..Default::default() };
        assert!(matches!(corrupt(&gold20(), &bad, None), Err(EditError::InvalidConfig(_))));
        let bad = CorruptionConfig { n_variants: 0, ..Default::default() };
        assert!(matches!(corrupt(&gold20(), &bad, None), Err(EditError::InvalidConfig(_))));
    }

    #[test]
    fn edit_tuple_reconstructs_gold() {
        let initial = g("( a , r , b ) , ( c , s , d )");
        let gold = g("( a , r , b ) , ( e , t , f )");
        let tuple = EditTuple::new("i", "cap", &initial, &gold);
        assert_eq!(tuple.delete_gt, vec![t("c", "s", "d")]);
        assert_eq!(tuple.insert_gt, vec![t("e", "t", "f")]);
        assert!(tuple.is_consistent());
        assert!(tuple.target().same_triples(&gold));
    }
}
