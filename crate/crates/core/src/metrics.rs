//! Ranking metrics for highly unbalanced two-class problems.
//!
//! Observations are ranked by decreasing score. Tied scores are resolved in
//! expectation over uniformly random orderings within each tie block, so
//! every metric here is a deterministic function of the scores.
//!
//! For a tie block occupying ranks `s+1 ..= s+g` that holds `a` of the
//! actives, with `A` actives ranked strictly above it, an active in the block
//! is equally likely to sit at each within-block position `r`. Given `r`,
//! the other `a-1` block actives fill the remaining `g-1` slots uniformly,
//! so the expected hit count at rank `s+r` is
//! `A + 1 + (r-1)(a-1)/(g-1)`. Because the rank is fixed once `r` is, the
//! expected precision is that count divided by `s+r`; averaging over `r`
//! and summing over the block's actives gives its exact contribution to
//! average precision.

use crate::seed;
use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Shortlist length conventionally used for initial enhancement.
pub const DEFAULT_IE_SHORTLIST: usize = 300;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("no observations")]
    Empty,
    #[error("{scores} scores but {labels} labels")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("label {0} at position {1} is not 0 or 1")]
    BadLabel(u8, usize),
    #[error("score at position {0} is not finite")]
    NonFinite(usize),
    #[error("no actives: average precision is undefined")]
    NoActives,
    #[error("shortlist length {n} outside 1..={n_obs}")]
    ShortlistOutOfRange { n: usize, n_obs: usize },
    #[error("degenerate class counts: {n_active} actives among {n_obs}")]
    DegenerateCounts { n_obs: usize, n_active: usize },
    #[error("need at least one permutation")]
    NoSamples,
    #[error("quantile level {0} outside (0, 1)")]
    BadLevel(f64),
}

/// Scores paired with 0/1 labels. Higher scores rank first.
#[derive(Debug, Clone, Copy)]
pub struct RankedScores<'a> {
    scores: &'a [f64],
    labels: &'a [u8],
}

impl<'a> RankedScores<'a> {
    pub fn new(scores: &'a [f64], labels: &'a [u8]) -> Result<Self, MetricsError> {
        if scores.len() != labels.len() {
            return Err(MetricsError::LengthMismatch {
                scores: scores.len(),
                labels: labels.len(),
            });
        }
        if scores.is_empty() {
            return Err(MetricsError::Empty);
        }
        if let Some(i) = labels.iter().position(|&y| y > 1) {
            return Err(MetricsError::BadLabel(labels[i], i));
        }
        if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
            return Err(MetricsError::NonFinite(i));
        }
        Ok(RankedScores { scores, labels })
    }

    pub fn n_obs(&self) -> usize {
        self.scores.len()
    }

    pub fn n_active(&self) -> usize {
        self.labels.iter().filter(|&&y| y == 1).count()
    }

    pub fn scores(&self) -> &[f64] {
        self.scores
    }

    pub fn labels(&self) -> &[u8] {
        self.labels
    }

    /// Tie blocks in rank order.
    pub fn tie_blocks(&self) -> Vec<TieBlock> {
        let mut order: Vec<usize> = (0..self.scores.len()).collect();
        order.sort_by(|&i, &j| self.scores[j].total_cmp(&self.scores[i]).then(i.cmp(&j)));
        let mut blocks = Vec::new();
        let mut start = 0;
        let mut actives_before = 0;
        while start < order.len() {
            let score = self.scores[order[start]];
            let mut end = start + 1;
            while end < order.len() && self.scores[order[end]] == score {
                end += 1;
            }
            let actives = order[start..end]
                .iter()
                .filter(|&&i| self.labels[i] == 1)
                .count();
            blocks.push(TieBlock {
                start,
                len: end - start,
                actives,
                actives_before,
                members: order[start..end].to_vec(),
            });
            actives_before += actives;
            start = end;
        }
        blocks
    }
}

/// A maximal run of equal scores in the ranked list.
#[derive(Debug, Clone, PartialEq)]
pub struct TieBlock {
    /// Number of observations ranked strictly above the block.
    pub start: usize,
    pub len: usize,
    pub actives: usize,
    pub actives_before: usize,
    /// Observation indices in the block.
    pub members: Vec<usize>,
}

/// Expected number of hits `H(n)` for `n = 1..=N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HitCurve {
    pub hits: Vec<f64>,
    pub n_obs: usize,
    pub n_active: usize,
}

impl HitCurve {
    /// `H(n)`, with `H(0) = 0`.
    pub fn at(&self, n: usize) -> f64 {
        if n == 0 {
            0.0
        } else {
            self.hits[n - 1]
        }
    }

    /// Precision `h(n) = H(n) / n`.
    pub fn precision(&self, n: usize) -> f64 {
        self.at(n) / n as f64
    }
}

pub fn hit_curve(ranked: &RankedScores<'_>) -> Result<HitCurve, MetricsError> {
    let m = ranked.n_active();
    if m == 0 {
        return Err(MetricsError::NoActives);
    }
    let mut hits = Vec::with_capacity(ranked.n_obs());
    for b in ranked.tie_blocks() {
        for r in 1..=b.len {
            hits.push(b.actives_before as f64 + b.actives as f64 * r as f64 / b.len as f64);
        }
    }
    // Remove rounding drift so H(N) = M exactly.
    if let Some(last) = hits.last_mut() {
        *last = m as f64;
    }
    Ok(HitCurve {
        hits,
        n_obs: ranked.n_obs(),
        n_active: m,
    })
}

/// Average precision, exact in expectation over within-tie orderings.
pub fn ave_p(ranked: &RankedScores<'_>) -> Result<f64, MetricsError> {
    let m = ranked.n_active();
    if m == 0 {
        return Err(MetricsError::NoActives);
    }
    let mut total = 0.0;
    for b in ranked.tie_blocks() {
        if b.actives == 0 {
            continue;
        }
        total += block_contribution(&b);
    }
    Ok(total / m as f64)
}

fn block_contribution(b: &TieBlock) -> f64 {
    let a = b.actives as f64;
    let g = b.len as f64;
    let base = b.actives_before as f64 + 1.0;
    let slope = if b.len > 1 { (a - 1.0) / (g - 1.0) } else { 0.0 };
    let mut sum = 0.0;
    for r in 1..=b.len {
        let expected_hits = base + (r - 1) as f64 * slope;
        sum += expected_hits / (b.start + r) as f64;
    }
    a * sum / g
}

/// Convenience wrapper over raw slices.
pub fn ave_p_of(scores: &[f64], labels: &[u8]) -> Result<f64, MetricsError> {
    ave_p(&RankedScores::new(scores, labels)?)
}

/// Average precision of an untied ranking given the 1-based ranks of the
/// actives in increasing order.
pub fn ave_p_from_positions(positions: &[usize]) -> f64 {
    let m = positions.len() as f64;
    positions
        .iter()
        .enumerate()
        .map(|(k, &t)| (k + 1) as f64 / t as f64)
        .sum::<f64>()
        / m
}

/// Initial enhancement `h(n) / (M/N)` at shortlist length `n`.
pub fn initial_enhancement(ranked: &RankedScores<'_>, n: usize) -> Result<f64, MetricsError> {
    let n_obs = ranked.n_obs();
    if n == 0 || n > n_obs {
        return Err(MetricsError::ShortlistOutOfRange { n, n_obs });
    }
    let curve = hit_curve(ranked)?;
    Ok(curve.precision(n) * n_obs as f64 / curve.n_active as f64)
}

/// Expected 1-based ranks (rank 1 = highest score); tied scores share the
/// mean of the ranks they span.
pub fn expected_ranks(scores: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[j].total_cmp(&scores[i]).then(i.cmp(&j)));
    let mut ranks = vec![0.0; scores.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        let mean_rank = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = mean_rank;
        }
        start = end;
    }
    ranks
}

/// Reference distribution of average precision under uniformly random,
/// untied rankings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullCalibration {
    pub samples: Vec<f64>,
    pub a_median: f64,
    pub a_quantile: f64,
    pub alpha: f64,
    pub n_obs: usize,
    pub n_active: usize,
    pub seed: u64,
}

impl NullCalibration {
    /// Builds a calibration from precomputed samples.
    pub fn from_samples(
        samples: Vec<f64>,
        alpha: f64,
        n_obs: usize,
        n_active: usize,
        seed: u64,
    ) -> Result<Self, MetricsError> {
        if samples.is_empty() {
            return Err(MetricsError::NoSamples);
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(MetricsError::BadLevel(alpha));
        }
        let mut sorted = samples.clone();
        sorted.sort_by(f64::total_cmp);
        Ok(NullCalibration {
            a_median: order_statistic(&sorted, 0.5),
            a_quantile: order_statistic(&sorted, alpha),
            samples,
            alpha,
            n_obs,
            n_active,
            seed,
        })
    }

    /// Thresholds only, for callers that inject known values.
    pub fn from_thresholds(a_median: f64, a_quantile: f64, alpha: f64) -> Self {
        NullCalibration {
            samples: Vec::new(),
            a_median,
            a_quantile,
            alpha,
            n_obs: 0,
            n_active: 0,
            seed: 0,
        }
    }

    /// Whether `value` lies strictly inside the central band between the
    /// `(1-level)/2` and `(1+level)/2` empirical quantiles.
    pub fn within_central_band(&self, value: f64, level: f64) -> bool {
        let mut sorted = self.samples.clone();
        sorted.sort_by(f64::total_cmp);
        let lo = order_statistic(&sorted, (1.0 - level) / 2.0);
        let hi = order_statistic(&sorted, (1.0 + level) / 2.0);
        value >= lo && value <= hi
    }
}

/// Empirical quantile as the order statistic at 1-based index `ceil(level*B)`.
pub fn order_statistic(sorted: &[f64], level: f64) -> f64 {
    let b = sorted.len();
    // 1e-9 guards against products such as 0.95 * 1000 landing just above
    // an integer.
    let k = ((level * b as f64) - 1e-9).ceil().max(1.0) as usize;
    sorted[k.min(b) - 1]
}

pub fn null_calibration(
    n_obs: usize,
    n_active: usize,
    permutations: usize,
    alpha: f64,
    seed_value: u64,
) -> Result<NullCalibration, MetricsError> {
    if n_active == 0 || n_active >= n_obs {
        return Err(MetricsError::DegenerateCounts { n_obs, n_active });
    }
    if permutations == 0 {
        return Err(MetricsError::NoSamples);
    }
    let samples: Vec<f64> = (0..permutations)
        .into_par_iter()
        .map(|b| {
            let mut rng = seed::rng(seed::mix(seed_value, b as u64));
            let mut positions: Vec<usize> = index::sample(&mut rng, n_obs, n_active)
                .into_iter()
                .map(|p| p + 1)
                .collect();
            positions.sort_unstable();
            ave_p_from_positions(&positions)
        })
        .collect();
    NullCalibration::from_samples(samples, alpha, n_obs, n_active, seed_value)
}
