//! Discourse-level scene graph toolkit.
//!
//! Builds an initial graph by merging per-sentence parses, refines it with
//! triple-level delete/insert edits, synthesizes edit supervision from gold
//! graphs, and scores graphs and captions.
//!
//! ```
//! use sgr_core::graph::{parse_graph, ParseMode};
//! use sgr_core::edit::{apply_edits, derive_edits};
//!
//! let initial = parse_graph("( cat , on , mat ) , ( dog , on , mat )", ParseMode::Strict).unwrap();
//! let gold = parse_graph("( cat , on , mat ) , ( mat , under , window )", ParseMode::Strict).unwrap();
//! let edits = derive_edits(&initial, &gold);
//! assert_eq!(edits.delete_flags, vec![false, true]);
//! assert!(apply_edits(&initial, &edits).unwrap().same_triples(&gold));
//! ```

/// Version of this crate, recorded in run metadata.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub mod dataset;
pub mod edit;
pub mod eval;
pub mod generator;
pub mod graph;
pub mod metrics;
pub mod refine;

pub use edit::{apply_edits, corrupt, derive_edits, validate_insertions, CorruptionConfig, EditActions, EditError, EditTuple};
pub use generator::{generate_initial, merge_graphs, split_sentences, Instance};
pub use graph::{canonicalize, parse_graph, serialize_graph, NormalizationPolicy, ParseMode, SceneGraph, StrictParseError, Triple};
pub use metrics::{bsspice, default_embedder, soft_spice_directed, spice, EmbeddingPort, ScoreReport, SynonymLexicon};
pub use refine::{refine, Programmer, ProgrammerError, RefineStatus, Refinement, RefinementConfig, RefinementTrace};
