//! Length-robust lexical diversity: moving-average type/token ratio (MATTR)
//! and the measure of textual lexical diversity (MTLD).

use std::collections::{HashMap, HashSet};

use thiserror::Error;

pub const DEFAULT_MATTR_WINDOW: usize = 50;
pub const DEFAULT_MTLD_THRESHOLD: f64 = 0.72;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LexDivError {
    #[error("no tokens")]
    EmptyInput,
    #[error("window must be at least 1")]
    InvalidWindow,
    #[error("threshold {0} outside (0, 1)")]
    InvalidThreshold(f64),
    #[error("no factors in either direction")]
    DegenerateInput,
}

/// Lowercased whitespace tokens with surrounding punctuation removed.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase())
        .filter(|w| !w.is_empty())
        .collect()
}

/// Tokens of several texts concatenated into one stream.
pub fn corpus_tokens<S: AsRef<str>>(texts: &[S]) -> Vec<String> {
    texts.iter().flat_map(|t| tokenize(t.as_ref())).collect()
}

pub fn ttr<S: AsRef<str>>(tokens: &[S]) -> f64 {
    let types: HashSet<&str> = tokens.iter().map(AsRef::as_ref).collect();
    types.len() as f64 / tokens.len() as f64
}

/// Mean type/token ratio over every window of `window` consecutive tokens.
/// Inputs shorter than the window get their plain TTR.
pub fn mattr<S: AsRef<str>>(tokens: &[S], window: usize) -> Result<f64, LexDivError> {
    if window == 0 {
        return Err(LexDivError::InvalidWindow);
    }
    if tokens.is_empty() {
        return Err(LexDivError::EmptyInput);
    }
    if tokens.len() < window {
        return Ok(ttr(tokens));
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in &tokens[..window] {
        *counts.entry(t.as_ref()).or_default() += 1;
    }
    let mut type_sum = counts.len();
    for i in window..tokens.len() {
        let out = tokens[i - window].as_ref();
        let c = counts.get_mut(out).expect("token in window");
        *c -= 1;
        if *c == 0 {
            counts.remove(out);
        }
        *counts.entry(tokens[i].as_ref()).or_default() += 1;
        type_sum += counts.len();
    }
    let windows = tokens.len() - window + 1;
    Ok(type_sum as f64 / (windows * window) as f64)
}

/// Factor count of one MTLD pass. A factor ends whenever the running TTR
/// falls below the threshold; the trailing partial segment contributes
/// `(1 - ttr) / (1 - threshold)`.
pub fn mtld_factors<S: AsRef<str>>(tokens: impl Iterator<Item = S>, threshold: f64) -> f64 {
    let mut factors = 0.0;
    let mut types: HashSet<String> = HashSet::new();
    let mut count = 0usize;
    for t in tokens {
        types.insert(t.as_ref().to_string());
        count += 1;
        if (types.len() as f64) / (count as f64) < threshold {
            factors += 1.0;
            types.clear();
            count = 0;
        }
    }
    if count > 0 {
        let ttr = types.len() as f64 / count as f64;
        factors += (1.0 - ttr) / (1.0 - threshold);
    }
    factors
}

/// Mean of the forward and backward MTLD passes. A direction with zero
/// factors is left out of the mean; if both have none the input is
/// degenerate.
pub fn mtld<S: AsRef<str>>(tokens: &[S], threshold: f64) -> Result<f64, LexDivError> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(LexDivError::InvalidThreshold(threshold));
    }
    if tokens.is_empty() {
        return Err(LexDivError::EmptyInput);
    }
    let n = tokens.len() as f64;
    let passes: Vec<f64> = [
        mtld_factors(tokens.iter().map(AsRef::as_ref), threshold),
        mtld_factors(tokens.iter().rev().map(AsRef::as_ref), threshold),
    ]
    .into_iter()
    .filter(|&f| f > 0.0)
    .map(|f| n / f)
    .collect();
    if passes.is_empty() {
        return Err(LexDivError::DegenerateInput);
    }
    Ok(passes.iter().sum::<f64>() / passes.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<&str> {
        s.split_whitespace().collect()
    }

    #[test]
    fn mattr_examples() {
        assert_eq!(mattr(&toks("a b a b"), 2).unwrap(), 1.0);
        assert_eq!(mattr(&toks("a a a a"), 2).unwrap(), 0.5);
        assert_eq!(mattr(&toks("a b c d e"), 3).unwrap(), 1.0);
        // windows "a a b" and "a b b": 2/3 each
        assert!((mattr(&toks("a a b b"), 3).unwrap() - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn mattr_short_input_is_ttr() {
        assert_eq!(mattr(&toks("a a b"), 50).unwrap(), 2.0 / 3.0);
    }

    #[test]
    fn mattr_errors() {
        assert_eq!(mattr::<&str>(&[], 2), Err(LexDivError::EmptyInput));
        assert_eq!(mattr(&toks("a"), 0), Err(LexDivError::InvalidWindow));
    }

    #[test]
    fn mtld_repeated_token() {
        // running TTR is 1/2 at every second token: 3 full factors, no remainder
        assert_eq!(mtld_factors(toks("a a a a a a").into_iter(), 0.72), 3.0);
        assert_eq!(mtld(&toks("a a a a a a"), 0.72).unwrap(), 2.0);
    }

    #[test]
    fn mtld_partial_factor_only() {
        // TTR ends at 10/12 without crossing 0.72: factor = (1 - 5/6) / 0.28
        let t = toks("a b c d e f g h i j a b");
        let f = mtld_factors(t.iter(), 0.72);
        assert!((f - (1.0 / 6.0) / 0.28).abs() < 1e-12);
        assert!((mtld(&t, 0.72).unwrap() - 20.16).abs() < 1e-9);
    }

    #[test]
    fn mtld_all_distinct_is_degenerate() {
        assert_eq!(mtld(&toks("a b c d"), 0.72), Err(LexDivError::DegenerateInput));
    }

    #[test]
    fn mtld_errors() {
        assert_eq!(mtld::<&str>(&[], 0.72), Err(LexDivError::EmptyInput));
        assert_eq!(mtld(&toks("a"), 1.0), Err(LexDivError::InvalidThreshold(1.0)));
    }

    #[test]
    fn tokenizer_strips_punctuation() {
        assert_eq!(tokenize("The cat, the MAT."), vec!["the", "cat", "the", "mat"]);
        assert_eq!(corpus_tokens(&["a b.", "C"]), vec!["a", "b", "c"]);
    }
}
