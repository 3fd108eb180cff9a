//! Triple and scene-graph value types, normalization, and the flattened
//! text codec.
//!
//! A flattened graph looks like `( man , wear , hat ) , ( hat , is , red )`.
//! Serialization always emits single spaces around every delimiter; parsing
//! accepts any amount of whitespace where the serializer puts one space.

use std::fmt;

use indexmap::IndexSet;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Relations that mark a triple as an attribute assignment `(entity, is, value)`.
pub const ATTRIBUTE_RELATIONS: [&str; 2] = ["is", "has_attribute"];

const VERB_PREFIX: &str = "v:";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TripleError {
    #[error("{slot} is empty")]
    EmptyField { slot: &'static str },
    #[error("{slot} {value:?} contains a reserved delimiter")]
    ReservedCharacter { slot: &'static str, value: String },
}

/// A `(subject, relation, object)` unit. Attribute triples put the value in
/// the object slot.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triple {
    subject: String,
    relation: String,
    object: String,
}

fn check_field(slot: &'static str, value: &str) -> Result<String, TripleError> {
    let value = value.trim();
    if value.is_empty() {
        return Err(TripleError::EmptyField { slot });
    }
    if value.contains(['(', ')', ',']) {
        return Err(TripleError::ReservedCharacter {
            slot,
            value: value.to_string(),
        });
    }
    Ok(value.to_string())
}

impl Triple {
    pub fn new(
        subject: impl AsRef<str>,
        relation: impl AsRef<str>,
        object: impl AsRef<str>,
    ) -> Result<Self, TripleError> {
        Ok(Self {
            subject: check_field("subject", subject.as_ref())?,
            relation: check_field("relation", relation.as_ref())?,
            object: check_field("object", object.as_ref())?,
        })
    }

    pub fn subject(&self) -> &str {
        &self.subject
    }

    pub fn relation(&self) -> &str {
        &self.relation
    }

    pub fn object(&self) -> &str {
        &self.object
    }

    pub fn is_attribute(&self) -> bool {
        ATTRIBUTE_RELATIONS.contains(&self.relation.as_str())
    }

    /// The space-joined phrase used for embedding-based similarity.
    pub fn phrase(&self) -> String {
        format!("{} {} {}", self.subject, self.relation, self.object)
    }

    /// Applies `policy` to every field. Returns `None` when a field
    /// normalizes to nothing (e.g. a bare `v:`).
    pub fn normalized(&self, policy: &NormalizationPolicy) -> Option<Triple> {
        Triple::new(
            policy.normalize(&self.subject),
            policy.normalize(&self.relation),
            policy.normalize(&self.object),
        )
        .ok()
    }

    pub fn fields(&self) -> [&str; 3] {
        [&self.subject, &self.relation, &self.object]
    }
}

impl fmt::Display for Triple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "( {} , {} , {} )", self.subject, self.relation, self.object)
    }
}

// Triples travel as `[s, r, o]` arrays on the wire.
impl Serialize for Triple {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.fields().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Triple {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let [s, r, o] = <[String; 3]>::deserialize(deserializer)?;
        Triple::new(s, r, o).map_err(serde::de::Error::custom)
    }
}

/// String normalization applied to every triple field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormalizationPolicy {
    pub lowercase: bool,
    pub collapse_whitespace: bool,
    /// Removes a leading `v:` verb marker.
    pub strip_verb_prefix: bool,
}

impl Default for NormalizationPolicy {
    fn default() -> Self {
        Self {
            lowercase: true,
            collapse_whitespace: true,
            strip_verb_prefix: true,
        }
    }
}

impl NormalizationPolicy {
    /// Leaves strings untouched apart from trimming.
    pub const fn identity() -> Self {
        Self {
            lowercase: false,
            collapse_whitespace: false,
            strip_verb_prefix: false,
        }
    }

    /// Stable identifier recorded in dataset manifests.
    pub fn id(&self) -> String {
        let flag = |on: bool| if on { '1' } else { '0' };
        format!(
            "lc{}-ws{}-vp{}",
            flag(self.lowercase),
            flag(self.collapse_whitespace),
            flag(self.strip_verb_prefix)
        )
    }

    pub fn normalize(&self, s: &str) -> String {
        let mut out = if self.lowercase {
            s.to_lowercase()
        } else {
            s.to_string()
        };
        let mut view = out.trim();
        if self.strip_verb_prefix {
            while let Some(rest) = view.strip_prefix(VERB_PREFIX) {
                view = rest.trim_start();
            }
        }
        out = if self.collapse_whitespace {
            view.split_whitespace().collect::<Vec<_>>().join(" ")
        } else {
            view.to_string()
        };
        out
    }
}

/// An insertion-ordered, duplicate-free set of triples plus any units that
/// lenient parsing could not turn into triples.
#[derive(Debug, Clone, Default)]
pub struct SceneGraph {
    triples: IndexSet<Triple>,
    malformed_units: Vec<String>,
}

impl PartialEq for SceneGraph {
    /// Ordered comparison: same triples in the same order, same malformed units.
    fn eq(&self, other: &Self) -> bool {
        self.triples.len() == other.triples.len()
            && self.triples.iter().eq(other.triples.iter())
            && self.malformed_units == other.malformed_units
    }
}

impl Eq for SceneGraph {}

impl FromIterator<Triple> for SceneGraph {
    fn from_iter<I: IntoIterator<Item = Triple>>(iter: I) -> Self {
        Self {
            triples: iter.into_iter().collect(),
            malformed_units: Vec::new(),
        }
    }
}

impl<'a> IntoIterator for &'a SceneGraph {
    type Item = &'a Triple;
    type IntoIter = indexmap::set::Iter<'a, Triple>;

    fn into_iter(self) -> Self::IntoIter {
        self.triples.iter()
    }
}

impl SceneGraph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a triple unless an equal one is already present.
    pub fn insert(&mut self, triple: Triple) -> bool {
        self.triples.insert(triple)
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn contains(&self, triple: &Triple) -> bool {
        self.triples.contains(triple)
    }

    pub fn get(&self, index: usize) -> Option<&Triple> {
        self.triples.get_index(index)
    }

    pub fn index_of(&self, triple: &Triple) -> Option<usize> {
        self.triples.get_index_of(triple)
    }

    pub fn iter(&self) -> indexmap::set::Iter<'_, Triple> {
        self.triples.iter()
    }

    pub fn triples(&self) -> &indexmap::set::Slice<Triple> {
        self.triples.as_slice()
    }

    pub fn malformed_units(&self) -> &[String] {
        &self.malformed_units
    }

    pub fn with_malformed_units(mut self, units: Vec<String>) -> Self {
        self.malformed_units = units;
        self
    }

    /// Set equality over triples, ignoring order and malformed units.
    pub fn same_triples(&self, other: &SceneGraph) -> bool {
        self.len() == other.len() && self.iter().all(|t| other.contains(t))
    }

    pub fn to_flat(&self) -> String {
        serialize_graph(self)
    }
}

impl fmt::Display for SceneGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, t) in self.triples.iter().enumerate() {
            if i > 0 {
                f.write_str(" , ")?;
            }
            write!(f, "{t}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseMode {
    Strict,
    Lenient,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("graph parse error at byte {position} (unit {unit}): {reason}")]
pub struct StrictParseError {
    /// Byte offset into the input.
    pub position: usize,
    /// Zero-based index of the unit being parsed.
    pub unit: usize,
    pub reason: String,
}

pub fn serialize_graph(g: &SceneGraph) -> String {
    g.to_string()
}

/// Parses a flattened graph.
///
/// Strict mode rejects anything outside the grammar, including units whose
/// arity is not three. Lenient mode never fails: bad units are collected in
/// [`SceneGraph::malformed_units`].
pub fn parse_graph(text: &str, mode: ParseMode) -> Result<SceneGraph, StrictParseError> {
    match mode {
        ParseMode::Strict => parse_strict(text),
        ParseMode::Lenient => Ok(parse_lenient(text)),
    }
}

pub fn parse_lenient(text: &str) -> SceneGraph {
    let mut graph = SceneGraph::new();
    let mut malformed = Vec::new();
    for piece in scan_units(text) {
        match piece {
            Piece::Unit { raw, body } => match unit_triple(body) {
                Some(t) => {
                    graph.insert(t);
                }
                None => malformed.push(raw.trim().to_string()),
            },
            Piece::Unterminated(raw) | Piece::Stray(raw) => malformed.push(raw.trim().to_string()),
        }
    }
    graph.malformed_units = malformed;
    graph
}

enum Piece<'a> {
    Unit { raw: &'a str, body: &'a str },
    Unterminated(&'a str),
    Stray(&'a str),
}

fn flush_stray<'a>(text: &'a str, pieces: &mut Vec<Piece<'a>>, start: Option<usize>, end: usize) {
    if let Some(s) = start {
        let raw = text[s..end].trim_matches(|c: char| c == ',' || c.is_whitespace());
        if !raw.is_empty() {
            pieces.push(Piece::Stray(raw));
        }
    }
}

fn scan_units(text: &str) -> Vec<Piece<'_>> {
    let mut pieces = Vec::new();
    let mut open: Option<usize> = None;
    let mut stray_start: Option<usize> = None;
    for (i, c) in text.char_indices() {
        match (c, open) {
            ('(', Some(start)) => {
                pieces.push(Piece::Unterminated(&text[start..i]));
                open = Some(i);
            }
            ('(', None) => {
                flush_stray(text, &mut pieces, stray_start.take(), i);
                open = Some(i);
            }
            (')', Some(start)) => {
                pieces.push(Piece::Unit {
                    raw: &text[start..=i],
                    body: &text[start + 1..i],
                });
                open = None;
            }
            (_, None) => {
                if stray_start.is_none() && !(c == ',' || c.is_whitespace()) {
                    stray_start = Some(i);
                }
            }
            _ => {}
        }
    }
    if let Some(start) = open {
        pieces.push(Piece::Unterminated(&text[start..]));
    }
    flush_stray(text, &mut pieces, stray_start, text.len());
    pieces
}

fn collapse(field: &str) -> String {
    field.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn unit_triple(body: &str) -> Option<Triple> {
    let fields: Vec<String> = body.split(',').map(collapse).collect();
    match fields.as_slice() {
        [s, r, o] => Triple::new(s, r, o).ok(),
        _ => None,
    }
}

/// Arity of a unit body, for diagnostics.
pub(crate) fn unit_arity(body: &str) -> usize {
    body.split(',').filter(|f| !f.trim().is_empty()).count()
}

struct StrictParser<'a> {
    text: &'a str,
    pos: usize,
    unit: usize,
}

impl<'a> StrictParser<'a> {
    fn err(&self, position: usize, reason: impl Into<String>) -> StrictParseError {
        StrictParseError {
            position,
            unit: self.unit,
            reason: reason.into(),
        }
    }

    fn skip_ws(&mut self) {
        let rest = &self.text[self.pos..];
        self.pos += rest.len() - rest.trim_start().len();
    }

    fn peek(&self) -> Option<char> {
        self.text[self.pos..].chars().next()
    }

    fn unit(&mut self) -> Result<Triple, StrictParseError> {
        let start = self.pos;
        if self.peek() != Some('(') {
            return Err(self.err(self.pos, "expected '('"));
        }
        self.pos += 1;
        let mut fields = Vec::new();
        loop {
            let field_start = self.pos;
            let rest = &self.text[self.pos..];
            let end = rest.find([',', ')', '(']).ok_or_else(|| {
                self.err(start, "unterminated unit")
            })?;
            let field = collapse(&rest[..end]);
            if field.is_empty() {
                return Err(self.err(field_start, "empty field"));
            }
            fields.push(field);
            self.pos += end;
            match self.peek() {
                Some(',') => self.pos += 1,
                Some(')') => {
                    self.pos += 1;
                    break;
                }
                _ => return Err(self.err(self.pos, "unexpected '(' inside unit")),
            }
        }
        if fields.len() != 3 {
            return Err(self.err(
                start,
                format!("unit has {} fields, expected 3", fields.len()),
            ));
        }
        Triple::new(&fields[0], &fields[1], &fields[2]).map_err(|e| self.err(start, e.to_string()))
    }
}

fn parse_strict(text: &str) -> Result<SceneGraph, StrictParseError> {
    let mut p = StrictParser {
        text,
        pos: 0,
        unit: 0,
    };
    let mut graph = SceneGraph::new();
    p.skip_ws();
    if p.pos == text.len() {
        return Ok(graph);
    }
    loop {
        let t = p.unit()?;
        graph.insert(t);
        p.unit += 1;
        p.skip_ws();
        match p.peek() {
            None => return Ok(graph),
            Some(',') => {
                p.pos += 1;
                p.skip_ws();
                if p.peek().is_none() {
                    return Err(p.err(p.pos, "trailing ','"));
                }
            }
            Some(_) => return Err(p.err(p.pos, "expected ',' between units")),
        }
    }
}

/// Normalizes every field and removes duplicates, keeping the first
/// occurrence. Triples whose fields normalize to nothing are moved to the
/// malformed units.
pub fn canonicalize(g: &SceneGraph, policy: &NormalizationPolicy) -> SceneGraph {
    let mut out = SceneGraph::new();
    let mut malformed = g.malformed_units.clone();
    for t in g.iter() {
        match t.normalized(policy) {
            Some(n) => {
                out.insert(n);
            }
            None => malformed.push(t.to_string()),
        }
    }
    out.malformed_units = malformed;
    out
}
