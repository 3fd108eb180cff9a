//! Downstream evaluation utilities.

pub mod agreement;
pub mod lexdiv;
pub mod rank;
pub mod stats;
pub mod tfidf;

pub use agreement::{dfoil_accuracy, pairwise_agreement, Agreement, DFoilItem, GraphScorer};
pub use lexdiv::{corpus_tokens, mattr, mtld, tokenize, LexDivError, DEFAULT_MATTR_WINDOW, DEFAULT_MTLD_THRESHOLD};
pub use rank::{kendall_tau_b, spearman_rho, RankError, RankedPair};
pub use stats::{corpus_stats, error_rates, CorpusStats, ErrorAnnotation, ErrorRates};
pub use tfidf::{select_diverse, tfidf_retrieve, Retrieved, TfidfError, TfidfIndex};
