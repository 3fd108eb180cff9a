//! Rank correlation between metric scores and reference judgements.

use std::cmp::Ordering;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RankError {
    #[error("score lists differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least 2 observations, got {0}")]
    TooShort(usize),
    #[error("non-finite score at position {0}")]
    NonFinite(usize),
    #[error("{0} scores are constant; correlation is undefined")]
    DegenerateInput(&'static str),
}

/// Metric scores paired with reference scores for the same items.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedPair {
    metric: Vec<f64>,
    reference: Vec<f64>,
}

impl RankedPair {
    pub fn new(metric: Vec<f64>, reference: Vec<f64>) -> Result<Self, RankError> {
        if metric.len() != reference.len() {
            return Err(RankError::LengthMismatch(metric.len(), reference.len()));
        }
        if metric.len() < 2 {
            return Err(RankError::TooShort(metric.len()));
        }
        if let Some(i) = metric
            .iter()
            .zip(&reference)
            .position(|(a, b)| !a.is_finite() || !b.is_finite())
        {
            return Err(RankError::NonFinite(i));
        }
        Ok(Self { metric, reference })
    }

    pub fn metric(&self) -> &[f64] {
        &self.metric
    }

    pub fn reference(&self) -> &[f64] {
        &self.reference
    }

    pub fn len(&self) -> usize {
        self.metric.len()
    }

    pub fn is_empty(&self) -> bool {
        self.metric.is_empty()
    }
}

fn cmp(a: &f64, b: &f64) -> Ordering {
    a.partial_cmp(b).expect("finite scores")
}

/// Number of tied pairs implied by sorted runs of equal values.
fn tied_pairs<T: PartialEq>(sorted: &[T]) -> u64 {
    sorted
        .chunk_by(|a, b| a == b)
        .map(|run| {
            let t = run.len() as u64;
            t * (t - 1) / 2
        })
        .sum()
}

/// Sorts `v` in place, returning the number of inversions removed.
fn merge_sort_swaps(v: &mut [f64], buf: &mut Vec<f64>) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = merge_sort_swaps(&mut v[..mid], buf) + merge_sort_swaps(&mut v[mid..], buf);
    buf.clear();
    let (mut i, mut j) = (0, mid);
    while i < mid && j < n {
        if v[j] < v[i] {
            swaps += (mid - i) as u64;
            buf.push(v[j]);
            j += 1;
        } else {
            buf.push(v[i]);
            i += 1;
        }
    }
    buf.extend_from_slice(&v[i..mid]);
    buf.extend_from_slice(&v[j..n]);
    v.copy_from_slice(buf);
    swaps
}

/// Kendall's tau-b in O(n log n) (Knight's algorithm).
///
/// `tau_b = (C - D) / sqrt((n0 - n1) (n0 - n2))` where `n1` and `n2` count
/// pairs tied in the metric and reference scores respectively.
pub fn kendall_tau_b(pairs: &RankedPair) -> Result<f64, RankError> {
    let n = pairs.len();
    let mut joint: Vec<(f64, f64)> = pairs.metric.iter().copied().zip(pairs.reference.iter().copied()).collect();
    joint.sort_by(|a, b| cmp(&a.0, &b.0).then_with(|| cmp(&a.1, &b.1)));

    let n0 = (n as u64) * (n as u64 - 1) / 2;
    let metric_sorted: Vec<f64> = joint.iter().map(|p| p.0).collect();
    let n1 = tied_pairs(&metric_sorted);
    let n3 = tied_pairs(&joint);

    let mut ys: Vec<f64> = joint.iter().map(|p| p.1).collect();
    let swaps = merge_sort_swaps(&mut ys, &mut Vec::with_capacity(n));
    let n2 = tied_pairs(&ys);

    if n1 == n0 {
        return Err(RankError::DegenerateInput("metric"));
    }
    if n2 == n0 {
        return Err(RankError::DegenerateInput("reference"));
    }
    let numerator = n0 as f64 - n1 as f64 - n2 as f64 + n3 as f64 - 2.0 * swaps as f64;
    let denominator = ((n0 - n1) as f64 * (n0 - n2) as f64).sqrt();
    Ok((numerator / denominator).clamp(-1.0, 1.0))
}

/// Ranks starting at 1, ties receiving the mean of the ranks they span.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| cmp(&values[a], &values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start..end hold ranks start+1..=end
        let rank = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    (sxx > 0.0 && syy > 0.0).then(|| (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman's rho: Pearson correlation of average-rank vectors.
pub fn spearman_rho(pairs: &RankedPair) -> Result<f64, RankError> {
    let rx = average_ranks(&pairs.metric);
    let ry = average_ranks(&pairs.reference);
    if rx.iter().all(|&r| r == rx[0]) {
        return Err(RankError::DegenerateInput("metric"));
    }
    if ry.iter().all(|&r| r == ry[0]) {
        return Err(RankError::DegenerateInput("reference"));
    }
    Ok(pearson(&rx, &ry).expect("non-constant ranks"))
}
