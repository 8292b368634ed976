//! Ranking construction and NDCG evaluation with both ground-truth
//! relevance definitions.

use ndarray::Array2;
use rayon::prelude::*;

use crate::counts::SparseCountMatrix;
use crate::error::{Error, Result};

const LN_2: f64 = std::f64::consts::LN_2;
// Above this relevance, 2^rel is too close to overflow for direct sums.
const DIRECT_GAIN_LIMIT: f64 = 1000.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RelevanceKind {
    /// Raw held-out counts: heavier listeners weigh more.
    A,
    /// Thresholded indicator `1[y_test >= s]`.
    B,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RelevanceSpec {
    pub kind: RelevanceKind,
    /// Only read for kind B. `s = 0` (and `s = 1`) reduce to binary
    /// relevance on the test support, the classic binary NDCG.
    pub threshold: u64,
}

impl RelevanceSpec {
    pub fn rel_a() -> Self {
        Self {
            kind: RelevanceKind::A,
            threshold: 0,
        }
    }

    pub fn rel_b(threshold: u64) -> Self {
        Self {
            kind: RelevanceKind::B,
            threshold,
        }
    }

    pub fn relevance(&self, y_test: u64) -> f64 {
        match self.kind {
            RelevanceKind::A => y_test as f64,
            RelevanceKind::B => {
                if y_test >= self.threshold.max(1) {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Rank unconsumed items by decreasing score (ties by ascending index),
/// then append the consumed items in ascending index order.
pub fn rank_items(scores: &[f64], consumed: &[bool]) -> Vec<usize> {
    debug_assert_eq!(scores.len(), consumed.len());
    let mut fresh: Vec<usize> = (0..scores.len()).filter(|&i| !consumed[i]).collect();
    fresh.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    fresh.extend((0..scores.len()).filter(|&i| consumed[i]));
    fresh
}

fn log2_discount(rank: usize) -> f64 {
    ((rank + 1) as f64).log2()
}

/// `ln(2^rel - 1)` for positive relevance, stable for large `rel`.
fn log_gain(rel: f64) -> f64 {
    if rel > 50.0 {
        rel * LN_2 + (-((-rel).exp2())).ln_1p()
    } else {
        (rel.exp2() - 1.0).ln()
    }
}

fn log_dcg(ranking: &[usize], relevance: &[f64]) -> f64 {
    let mut max_term = f64::NEG_INFINITY;
    let mut terms = Vec::new();
    for (pos, &item) in ranking.iter().enumerate() {
        let rel = relevance[item];
        if rel > 0.0 {
            let t = log_gain(rel) - log2_discount(pos + 1).ln();
            max_term = max_term.max(t);
            terms.push(t);
        }
    }
    if terms.is_empty() {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = terms.iter().map(|t| (t - max_term).exp()).sum();
    max_term + sum.ln()
}

/// Discounted cumulative gain `sum_i (2^rel(i) - 1) / log2(rank(i) + 1)`
/// with 1-based ranks; zero-relevance items contribute nothing.
///
/// Relevances large enough to overflow `2^rel` are summed through a
/// log-space guard; if even that cannot represent the value, an error is
/// returned.
pub fn dcg(ranking: &[usize], relevance: &[f64]) -> Result<f64> {
    let max_rel = ranking
        .iter()
        .map(|&i| relevance[i])
        .fold(0.0f64, f64::max);
    let value = if max_rel <= DIRECT_GAIN_LIMIT {
        let mut acc = 0.0;
        for (pos, &item) in ranking.iter().enumerate() {
            let rel = relevance[item];
            if rel > 0.0 {
                acc += (rel.exp2() - 1.0) / log2_discount(pos + 1);
            }
        }
        acc
    } else {
        log_dcg(ranking, relevance).exp()
    };
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::domain(
            "dcg",
            format!("gain overflow with max relevance {max_rel}"),
        ))
    }
}

fn ideal_ranking(relevance: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..relevance.len()).collect();
    idx.sort_by(|&a, &b| relevance[b].total_cmp(&relevance[a]).then(a.cmp(&b)));
    idx
}

/// `DCG / IDCG` where the ideal ranking lists items by decreasing
/// relevance. Errors when every relevance is zero (the ratio is undefined;
/// callers exclude such users from averages).
pub fn ndcg(ranking: &[usize], relevance: &[f64]) -> Result<f64> {
    if !relevance.iter().any(|&r| r > 0.0) {
        return Err(Error::InvalidArgument(
            "ndcg undefined for all-zero relevance".into(),
        ));
    }
    let ideal = ideal_ranking(relevance);
    let max_rel = relevance.iter().copied().fold(0.0f64, f64::max);
    let value = if max_rel <= DIRECT_GAIN_LIMIT {
        dcg(ranking, relevance)? / dcg(&ideal, relevance)?
    } else {
        (log_dcg(ranking, relevance) - log_dcg(&ideal, relevance)).exp()
    };
    Ok(value.clamp(0.0, 1.0))
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    /// Mean NDCG over users with positive total test relevance.
    pub mean_ndcg: f64,
    pub evaluated_users: usize,
    /// Users with all-zero test relevance, excluded from the mean.
    pub excluded_users: usize,
    pub per_user: Vec<Option<f64>>,
}

/// Per-user NDCG averaged over eligible users.
///
/// Rankings come from the score rows with train-consumed items placed at
/// the end; relevance comes from the test counts under `spec`.
pub fn evaluate(
    scores: &Array2<f64>,
    y_train: &SparseCountMatrix,
    y_test: &SparseCountMatrix,
    spec: &RelevanceSpec,
) -> Result<EvalReport> {
    let (n_users, n_items) = scores.dim();
    if y_train.n_users() != n_users
        || y_train.n_items() != n_items
        || y_test.n_users() != n_users
        || y_test.n_items() != n_items
    {
        return Err(Error::InvalidArgument(format!(
            "frame mismatch: scores {}x{}, train {}x{}, test {}x{}",
            n_users,
            n_items,
            y_train.n_users(),
            y_train.n_items(),
            y_test.n_users(),
            y_test.n_items()
        )));
    }
    let per_user: Vec<Result<Option<f64>>> = (0..n_users)
        .into_par_iter()
        .map(|u| {
            let mut consumed = vec![false; n_items];
            for t in y_train.row(u) {
                consumed[t.item] = true;
            }
            let mut relevance = vec![0.0; n_items];
            for t in y_test.row(u) {
                relevance[t.item] = spec.relevance(t.count);
            }
            if !relevance.iter().any(|&r| r > 0.0) {
                return Ok(None);
            }
            let row = scores.row(u);
            let row = row.to_slice().expect("standard layout");
            let ranking = rank_items(row, &consumed);
            ndcg(&ranking, &relevance).map(Some)
        })
        .collect();

    let mut total = 0.0;
    let mut evaluated = 0usize;
    let mut excluded = 0usize;
    let mut values = Vec::with_capacity(n_users);
    for r in per_user {
        let v = r?;
        match v {
            Some(x) => {
                total += x;
                evaluated += 1;
            }
            None => excluded += 1,
        }
        values.push(v);
    }
    if evaluated == 0 {
        return Err(Error::InvalidArgument(
            "no eligible users: every test row has zero relevance".into(),
        ));
    }
    Ok(EvalReport {
        mean_ndcg: total / evaluated as f64,
        evaluated_users: evaluated,
        excluded_users: excluded,
        per_user: values,
    })
}
