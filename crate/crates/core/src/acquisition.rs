//! Acquisition functions: random, entropy, k-center greedy and SVM min-margin.
//!
//! Every function returns exactly `budget` distinct indices drawn from the
//! unlabeled pool, in selection order. Ties are always broken toward the
//! lower pool index.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use ndarray::{ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::data::PoolState;
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Random,
    Entropy,
    Kcenter,
    SvmMinMargin,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Random, Method::Entropy, Method::Kcenter, Method::SvmMinMargin];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Random => "random",
            Method::Entropy => "entropy",
            Method::Kcenter => "kcenter",
            Method::SvmMinMargin => "svm_min_margin",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unsupported method: {s}")))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AcquisitionRequest<'a> {
    pub pool: &'a PoolState,
    pub budget: usize,
    pub method: Method,
    pub seed: u64,
}

impl AcquisitionRequest<'_> {
    fn check_budget(&self) -> Result<()> {
        let available = self.pool.unlabeled().len();
        if self.budget > available {
            return Err(Error::BudgetExceedsPool { budget: self.budget, available });
        }
        Ok(())
    }
}

/// Chosen indices in selection order with the score each had when chosen.
/// Random selection carries no scores.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScoredSelection {
    pub chosen: Vec<usize>,
    pub scores: Vec<f64>,
}

pub fn acquire_random(request: &AcquisitionRequest<'_>, rng: &mut Rng) -> Result<ScoredSelection> {
    request.check_budget()?;
    let pool = request.pool.unlabeled();
    let picks = rand::seq::index::sample(rng, pool.len(), request.budget);
    Ok(ScoredSelection { chosen: picks.into_iter().map(|i| pool[i]).collect(), scores: Vec::new() })
}

/// Shannon entropy (natural log) of one distribution, with `0 ln 0 = 0`.
pub fn entropy(row: &[f64]) -> f64 {
    -row.iter().filter(|&&p| p > 0.0).map(|&p| p * p.ln()).sum::<f64>()
}

fn check_distribution(row: usize, values: &[f64]) -> Result<()> {
    if let Some(&v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(Error::InvalidDistribution { row, reason: format!("entry {v} is not a finite nonnegative number") });
    }
    let sum: f64 = values.iter().sum();
    if (sum - 1.0).abs() > 1e-6 {
        return Err(Error::InvalidDistribution { row, reason: format!("sums to {sum}") });
    }
    Ok(())
}

fn check_rows(values: &ArrayView2<'_, f64>, request: &AcquisitionRequest<'_>) -> Result<()> {
    let m = request.pool.unlabeled().len();
    if values.nrows() != m {
        return Err(Error::DimensionMismatch { expected: m, got: values.nrows() });
    }
    Ok(())
}

/// Picks the `budget` rows of highest entropy. `proba` has one row per
/// unlabeled index, in pool order.
pub fn acquire_entropy(proba: ArrayView2<'_, f64>, request: &AcquisitionRequest<'_>) -> Result<ScoredSelection> {
    request.check_budget()?;
    check_rows(&proba, request)?;
    let mut scores = Vec::with_capacity(proba.nrows());
    for (r, row) in proba.outer_iter().enumerate() {
        let row = row.to_vec();
        check_distribution(r, &row)?;
        scores.push(entropy(&row));
    }
    Ok(select_ranked(&scores, request.pool.unlabeled(), request.budget, Direction::Highest))
}

/// Distance to the nearest one-vs-rest boundary, `min_k |f_k(x)|`.
pub fn min_margin_score(values: &[f64]) -> f64 {
    values.iter().map(|v| v.abs()).fold(f64::INFINITY, f64::min)
}

/// Picks the `budget` rows closest to any one-vs-rest decision boundary.
pub fn acquire_svm_min_margin(
    decision_values: ArrayView2<'_, f64>,
    num_classes: usize,
    request: &AcquisitionRequest<'_>,
) -> Result<ScoredSelection> {
    request.check_budget()?;
    check_rows(&decision_values, request)?;
    if decision_values.ncols() != num_classes {
        return Err(Error::DimensionMismatch { expected: num_classes, got: decision_values.ncols() });
    }
    let scores: Vec<f64> = decision_values.outer_iter().map(|row| min_margin_score(&row.to_vec())).collect();
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::NonFinite("svm decision values"));
    }
    Ok(select_ranked(&scores, request.pool.unlabeled(), request.budget, Direction::Lowest))
}

/// Farthest-first traversal seeded with the labeled set as centers.
///
/// `embeddings` has one row per pool index (labeled and unlabeled). Each
/// step picks the unlabeled point farthest from its nearest center and makes
/// it a center; the returned score is that distance.
pub fn acquire_kcenter_greedy(
    embeddings: ArrayView2<'_, f64>,
    request: &AcquisitionRequest<'_>,
) -> Result<ScoredSelection> {
    request.check_budget()?;
    let pool = request.pool;
    if pool.labeled().is_empty() {
        return Err(Error::EmptyLabeledSet);
    }
    if embeddings.nrows() != pool.len() {
        return Err(Error::DimensionMismatch { expected: pool.len(), got: embeddings.nrows() });
    }
    let candidates = pool.unlabeled();
    let mut mindist = vec![f64::INFINITY; candidates.len()];
    for &c in pool.labeled() {
        update_mindist(&embeddings, candidates, &mut mindist, c);
    }
    let mut taken = vec![false; candidates.len()];
    let mut out = ScoredSelection { chosen: Vec::with_capacity(request.budget), scores: Vec::with_capacity(request.budget) };
    for _ in 0..request.budget {
        let mut best: Option<usize> = None;
        for (slot, &d) in mindist.iter().enumerate() {
            if taken[slot] {
                continue;
            }
            // strict comparison keeps the lowest index on ties
            if best.is_none_or(|b| d > mindist[b]) {
                best = Some(slot);
            }
        }
        let slot = best.expect("budget <= |D_U|");
        taken[slot] = true;
        out.chosen.push(candidates[slot]);
        out.scores.push(mindist[slot]);
        update_mindist(&embeddings, candidates, &mut mindist, candidates[slot]);
    }
    Ok(out)
}

fn update_mindist(embeddings: &ArrayView2<'_, f64>, candidates: &[usize], mindist: &mut [f64], center: usize) {
    let c = embeddings.row(center);
    for (slot, &i) in candidates.iter().enumerate() {
        let d = euclidean(embeddings.row(i), c);
        if d < mindist[slot] {
            mindist[slot] = d;
        }
    }
}

fn euclidean(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Covering radius: largest distance from an unlabeled point to its nearest
/// point in `centers`.
pub fn covering_radius(embeddings: ArrayView2<'_, f64>, points: &[usize], centers: &[usize]) -> f64 {
    points
        .iter()
        .map(|&i| {
            centers
                .iter()
                .map(|&c| euclidean(embeddings.row(i), embeddings.row(c)))
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Direction {
    Highest,
    Lowest,
}

/// Top (or bottom) `k` rows by score, ties to the lower pool index, returned
/// in rank order.
fn select_ranked(scores: &[f64], pool_index: &[usize], k: usize, dir: Direction) -> ScoredSelection {
    let cmp = |a: &usize, b: &usize| -> Ordering {
        let primary = match dir {
            Direction::Highest => scores[*b].total_cmp(&scores[*a]),
            Direction::Lowest => scores[*a].total_cmp(&scores[*b]),
        };
        primary.then(pool_index[*a].cmp(&pool_index[*b]))
    };
    let mut rows: Vec<usize> = (0..scores.len()).collect();
    if k == 0 {
        return ScoredSelection::default();
    }
    if k < rows.len() {
        rows.select_nth_unstable_by(k - 1, cmp);
        rows.truncate(k);
    }
    rows.sort_unstable_by(cmp);
    ScoredSelection {
        chosen: rows.iter().map(|&r| pool_index[r]).collect(),
        scores: rows.iter().map(|&r| scores[r]).collect(),
    }
}
