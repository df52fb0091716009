//! Phalanx formation.
//!
//! Initial groups of variables are screened against the null distribution
//! of the assessment measure, merged greedily while a pair of groups ranks
//! better in one model than as a two-model ensemble, and the resulting
//! candidates are screened again. All model fits go through an
//! [`Evaluator`] and are memoised in an [`EvalCache`], so a variable set is
//! fitted at most once per run and a run with `d` initial groups costs at
//! most `d^2` fits.
//!
//! Every stage first computes all fits it needs (in parallel), then takes
//! its decisions from the complete set of results. Outcomes therefore do
//! not depend on scheduling.
//!
//! Notation used in reports: `a_i` is the assessment of group `i` alone,
//! `a_ij` that of one model on the union of groups `i` and `j`, and
//! `a_ens` that of the average of the two groups' probability vectors.

use crate::dataset::{Dataset, GroupingPlan};
use crate::forest::{EvalRecord, ForestConfig, ForestEvaluator, Mtry, FORMATION_TREES};
use crate::metrics::{self, MetricsError, NullCalibration};
use crate::seed;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

pub type EvaluatorError = Box<dyn std::error::Error + Send + Sync>;

#[derive(Debug, Error)]
pub enum FormationError {
    #[error("evaluator failed on variable set {set:?}: {source}")]
    Evaluator {
        set: Vec<usize>,
        #[source]
        source: EvaluatorError,
    },
    #[error("probability vectors differ in length ({left} vs {right})")]
    LengthMismatch { left: usize, right: usize },
    #[error("no groups to form phalanxes from")]
    NoGroups,
    #[error("invalid formation config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Anything that fits a probability-ranking model to a variable subset and
/// reports out-of-bag probabilities with their assessment.
pub trait Evaluator: Sync {
    fn labels(&self) -> &[u8];

    fn evaluate(&self, variable_set: &[usize]) -> Result<EvalRecord, EvaluatorError>;

    /// Assessment of the two-model ensemble; no new fit.
    fn ensemble_score(&self, a: &EvalRecord, b: &EvalRecord) -> Result<f64, FormationError> {
        ensemble_score(a, b, self.labels())
    }
}

/// Average precision of the averaged out-of-bag probabilities of two fits.
pub fn ensemble_score(a: &EvalRecord, b: &EvalRecord, labels: &[u8]) -> Result<f64, FormationError> {
    if a.oob_probs.len() != b.oob_probs.len() {
        return Err(FormationError::LengthMismatch {
            left: a.oob_probs.len(),
            right: b.oob_probs.len(),
        });
    }
    let averaged: Vec<f64> = a
        .oob_probs
        .iter()
        .zip(&b.oob_probs)
        .map(|(x, y)| (x + y) / 2.0)
        .collect();
    Ok(metrics::ave_p_of(&averaged, labels)?)
}

fn canonical(set: &[usize]) -> Vec<usize> {
    let mut s = set.to_vec();
    s.sort_unstable();
    s.dedup();
    s
}

fn union(a: &[usize], b: &[usize]) -> Vec<usize> {
    let mut u = a.to_vec();
    u.extend_from_slice(b);
    canonical(&u)
}

/// Memoised evaluator results keyed by sorted variable set.
#[derive(Debug, Default, Clone)]
pub struct EvalCache {
    records: BTreeMap<Vec<usize>, EvalRecord>,
    fit_counter: usize,
}

impl EvalCache {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of evaluator fits performed (one per distinct set).
    pub fn fit_counter(&self) -> usize {
        self.fit_counter
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, set: &[usize]) -> Option<&EvalRecord> {
        self.records.get(&canonical(set))
    }

    fn record(&self, set: &[usize]) -> &EvalRecord {
        self.get(set).expect("record ensured before use")
    }

    /// Evaluates every set not yet cached, in parallel, and inserts the
    /// results in key order.
    pub fn ensure(&mut self, evaluator: &dyn Evaluator, sets: &[Vec<usize>]) -> Result<(), FormationError> {
        let mut missing: Vec<Vec<usize>> = sets
            .iter()
            .map(|s| canonical(s))
            .filter(|s| !self.records.contains_key(s))
            .collect();
        missing.sort();
        missing.dedup();
        let results: Vec<Result<EvalRecord, EvaluatorError>> =
            missing.par_iter().map(|s| evaluator.evaluate(s)).collect();
        for (set, result) in missing.into_iter().zip(results) {
            let record = result.map_err(|source| FormationError::Evaluator {
                set: set.clone(),
                source,
            })?;
            self.fit_counter += 1;
            self.records.insert(set, record);
        }
        Ok(())
    }

    pub fn records(&self) -> impl Iterator<Item = &EvalRecord> {
        self.records.values()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FormationConfig {
    /// Quantile level of the null distribution used as the bar.
    pub alpha: f64,
    /// Number of random rankings in the null distribution.
    pub permutations: usize,
    pub formation_trees: usize,
    pub mtry: Mtry,
    pub min_node_size: usize,
    /// The null distribution uses `mix(seed, 0)`; forest fits use
    /// `mix(seed, 1)` as their base seed.
    pub seed: u64,
}

impl FormationConfig {
    pub fn new(seed: u64) -> Self {
        FormationConfig {
            alpha: 0.95,
            permutations: 1000,
            formation_trees: FORMATION_TREES,
            mtry: Mtry::Auto,
            min_node_size: 1,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), FormationError> {
        if !(0.5..1.0).contains(&self.alpha) {
            return Err(FormationError::BadConfig(format!(
                "alpha {} outside [0.5, 1)",
                self.alpha
            )));
        }
        if self.permutations == 0 {
            return Err(FormationError::BadConfig("permutations must be >= 1".into()));
        }
        if self.formation_trees == 0 {
            return Err(FormationError::BadConfig("formation_trees must be >= 1".into()));
        }
        Ok(())
    }

    pub fn forest_config(&self) -> ForestConfig {
        ForestConfig {
            n_trees: self.formation_trees,
            mtry: self.mtry,
            min_node_size: self.min_node_size,
            seed: seed::mix(self.seed, 1),
        }
    }
}

/// Pairwise values consulted while screening or merging.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairValues {
    pub i: usize,
    pub j: usize,
    /// One model on the union; absent when the stage does not consult it.
    pub a_joint: Option<f64>,
    pub a_ensemble: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupOutcome {
    pub group: Vec<usize>,
    pub a_single: f64,
    /// `a_i >= a_alpha`.
    pub strong_alone: bool,
    /// First `j` with `a_median + a_ij - a_j >= a_alpha`.
    pub joint_witness: Option<usize>,
    /// First `j` with `a_median + a_ens(i,j) - a_j >= a_alpha`.
    pub ensemble_witness: Option<usize>,
    pub survived: bool,
    /// Kept only because nothing else survived.
    pub fallback: bool,
}

impl GroupOutcome {
    pub fn passed(&self) -> bool {
        self.strong_alone || self.joint_witness.is_some() || self.ensemble_witness.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreeningReport {
    pub a_median: f64,
    pub a_quantile: f64,
    pub joint_test_applied: bool,
    pub groups: Vec<GroupOutcome>,
    pub pairs: Vec<PairValues>,
}

impl ScreeningReport {
    pub fn survivors(&self) -> Vec<Vec<usize>> {
        self.groups
            .iter()
            .filter(|g| g.survived)
            .map(|g| g.group.clone())
            .collect()
    }
}

/// Which screening tests to apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScreeningTests {
    pub joint: bool,
    pub ensemble: bool,
}

impl ScreeningTests {
    /// Alone, joint-model and ensemble tests (initial screening).
    pub const INITIAL: Self = ScreeningTests {
        joint: true,
        ensemble: true,
    };
    /// Alone and ensemble tests (candidate screening).
    pub const PHALANX: Self = ScreeningTests {
        joint: false,
        ensemble: true,
    };
}

fn screen(
    groups: &[Vec<usize>],
    evaluator: &dyn Evaluator,
    calib: &NullCalibration,
    cache: &mut EvalCache,
    tests: ScreeningTests,
) -> Result<(Vec<Vec<usize>>, ScreeningReport), FormationError> {
    if groups.is_empty() {
        return Err(FormationError::NoGroups);
    }
    let groups: Vec<Vec<usize>> = groups.iter().map(|g| canonical(g)).collect();
    let d = groups.len();
    let mut needed: Vec<Vec<usize>> = groups.clone();
    if tests.joint {
        for i in 0..d {
            for j in i + 1..d {
                needed.push(union(&groups[i], &groups[j]));
            }
        }
    }
    cache.ensure(evaluator, &needed)?;

    let single: Vec<f64> = groups.iter().map(|g| cache.record(g).assessment).collect();
    let mut pairs = Vec::new();
    let mut joint = vec![vec![f64::NAN; d]; d];
    let mut ens = vec![vec![f64::NAN; d]; d];
    for i in 0..d {
        for j in i + 1..d {
            let a_joint = if tests.joint {
                Some(cache.record(&union(&groups[i], &groups[j])).assessment)
            } else {
                None
            };
            let a_ensemble = if tests.ensemble {
                evaluator.ensemble_score(cache.record(&groups[i]), cache.record(&groups[j]))?
            } else {
                f64::NAN
            };
            if let Some(v) = a_joint {
                joint[i][j] = v;
                joint[j][i] = v;
            }
            ens[i][j] = a_ensemble;
            ens[j][i] = a_ensemble;
            pairs.push(PairValues {
                i,
                j,
                a_joint,
                a_ensemble,
            });
        }
    }

    let (a_med, a_q) = (calib.a_median, calib.a_quantile);
    let mut outcomes: Vec<GroupOutcome> = (0..d)
        .map(|i| {
            let others = (0..d).filter(|&j| j != i);
            let joint_witness = if tests.joint {
                others.clone().find(|&j| a_med + joint[i][j] - single[j] >= a_q)
            } else {
                None
            };
            let ensemble_witness = if tests.ensemble {
                others.clone().find(|&j| a_med + ens[i][j] - single[j] >= a_q)
            } else {
                None
            };
            let mut o = GroupOutcome {
                group: groups[i].clone(),
                a_single: single[i],
                strong_alone: single[i] >= a_q,
                joint_witness,
                ensemble_witness,
                survived: false,
                fallback: false,
            };
            o.survived = o.passed();
            o
        })
        .collect();

    if !outcomes.iter().any(|o| o.survived) {
        let best = (0..d)
            .fold(0, |b, i| if single[i] > single[b] { i } else { b });
        outcomes[best].survived = true;
        outcomes[best].fallback = true;
    }

    let report = ScreeningReport {
        a_median: a_med,
        a_quantile: a_q,
        joint_test_applied: tests.joint,
        groups: outcomes,
        pairs,
    };
    Ok((report.survivors(), report))
}

/// Screens initial groups: a group survives if it is strong alone, improves
/// another group inside one model, or improves another group as a
/// two-model ensemble. If nothing survives the best single group is kept.
pub fn screen_groups(
    groups: &[Vec<usize>],
    evaluator: &dyn Evaluator,
    calib: &NullCalibration,
    cache: &mut EvalCache,
) -> Result<(Vec<Vec<usize>>, ScreeningReport), FormationError> {
    screen(groups, evaluator, calib, cache, ScreeningTests::INITIAL)
}

/// Screening with a chosen subset of the pairwise tests.
pub fn screen_groups_with(
    groups: &[Vec<usize>],
    evaluator: &dyn Evaluator,
    calib: &NullCalibration,
    cache: &mut EvalCache,
    tests: ScreeningTests,
) -> Result<(Vec<Vec<usize>>, ScreeningReport), FormationError> {
    screen(groups, evaluator, calib, cache, tests)
}

/// Screens candidate phalanxes: kept if strong alone or strong in a
/// two-model ensemble. The joint-model test is not applied here since the
/// merge step already searched every pair.
pub fn screen_phalanxes(
    candidates: &[Vec<usize>],
    evaluator: &dyn Evaluator,
    calib: &NullCalibration,
    cache: &mut EvalCache,
) -> Result<(Vec<Vec<usize>>, ScreeningReport), FormationError> {
    screen(candidates, evaluator, calib, cache, ScreeningTests::PHALANX)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRatio {
    pub left: Vec<usize>,
    pub right: Vec<usize>,
    pub a_joint: f64,
    pub a_ensemble: f64,
    /// `a_ensemble / a_joint`; below 1 favours one model on the union.
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeEvent {
    pub left: Vec<usize>,
    pub right: Vec<usize>,
    pub a_joint: f64,
    pub a_ensemble: f64,
    pub ratio: f64,
    pub merged: Vec<usize>,
    /// Every ratio examined in this iteration.
    pub candidates: Vec<PairRatio>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MergeTrace {
    pub events: Vec<MergeEvent>,
    /// Pairwise ratios among the groups left at termination.
    pub final_ratios: Vec<PairRatio>,
}

fn ratio_of(a_ensemble: f64, a_joint: f64) -> f64 {
    if a_joint > 0.0 {
        a_ensemble / a_joint
    } else {
        f64::INFINITY
    }
}

/// Greedy merging: repeatedly join the pair with the smallest
/// `a_ens / a_joint` while that ratio is below 1. Ties go to the
/// lexicographically smallest pair of sorted groups.
pub fn hierarchical_merge(
    survivors: &[Vec<usize>],
    evaluator: &dyn Evaluator,
    cache: &mut EvalCache,
) -> Result<(Vec<Vec<usize>>, MergeTrace), FormationError> {
    if survivors.is_empty() {
        return Err(FormationError::NoGroups);
    }
    let mut groups: Vec<Vec<usize>> = survivors.iter().map(|g| canonical(g)).collect();
    groups.sort();
    let mut trace = MergeTrace::default();
    loop {
        if groups.len() < 2 {
            break;
        }
        let mut needed = groups.clone();
        for i in 0..groups.len() {
            for j in i + 1..groups.len() {
                needed.push(union(&groups[i], &groups[j]));
            }
        }
        cache.ensure(evaluator, &needed)?;

        let mut ratios: Vec<PairRatio> = Vec::new();
        let mut best: Option<(usize, usize, usize)> = None;
        for i in 0..groups.len() {
            for j in i + 1..groups.len() {
                let a_joint = cache.record(&union(&groups[i], &groups[j])).assessment;
                let a_ensemble =
                    evaluator.ensemble_score(cache.record(&groups[i]), cache.record(&groups[j]))?;
                let ratio = ratio_of(a_ensemble, a_joint);
                if best.is_none_or(|(_, _, k)| ratio < ratios[k].ratio) {
                    best = Some((i, j, ratios.len()));
                }
                ratios.push(PairRatio {
                    left: groups[i].clone(),
                    right: groups[j].clone(),
                    a_joint,
                    a_ensemble,
                    ratio,
                });
            }
        }
        let (i, j, k) = best.expect("at least one pair");
        if ratios[k].ratio >= 1.0 || ratios[k].ratio.is_nan() {
            trace.final_ratios = ratios;
            break;
        }
        let merged = union(&groups[i], &groups[j]);
        let chosen = ratios[k].clone();
        trace.events.push(MergeEvent {
            left: chosen.left,
            right: chosen.right,
            a_joint: chosen.a_joint,
            a_ensemble: chosen.a_ensemble,
            ratio: chosen.ratio,
            merged: merged.clone(),
            candidates: ratios,
        });
        groups.remove(j);
        groups.remove(i);
        groups.push(merged);
        groups.sort();
    }
    Ok((groups, trace))
}

/// Stage sizes `D >= d >= s >= c >= p`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageCounts {
    pub variables: usize,
    pub initial_groups: usize,
    pub survivors: usize,
    pub candidates: usize,
    pub phalanxes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormationResult {
    pub phalanxes: Vec<Vec<usize>>,
    pub initial_screening: ScreeningReport,
    pub merge_trace: MergeTrace,
    pub phalanx_screening: ScreeningReport,
    pub fit_counter: usize,
    pub counts: StageCounts,
    pub a_median: f64,
    pub a_quantile: f64,
}

/// Runs screening, merging and candidate screening with one shared cache.
pub fn form_with_evaluator(
    groups: &[Vec<usize>],
    n_variables: usize,
    evaluator: &dyn Evaluator,
    calib: &NullCalibration,
) -> Result<FormationResult, FormationError> {
    let mut cache = EvalCache::new();
    let (survivors, initial_screening) = screen_groups(groups, evaluator, calib, &mut cache)?;
    let (candidates, merge_trace) = hierarchical_merge(&survivors, evaluator, &mut cache)?;
    let (phalanxes, phalanx_screening) = screen_phalanxes(&candidates, evaluator, calib, &mut cache)?;
    let counts = StageCounts {
        variables: n_variables,
        initial_groups: groups.len(),
        survivors: survivors.len(),
        candidates: candidates.len(),
        phalanxes: phalanxes.len(),
    };
    log::info!(
        "formation: D={} d={} s={} c={} p={} fits={}",
        counts.variables,
        counts.initial_groups,
        counts.survivors,
        counts.candidates,
        counts.phalanxes,
        cache.fit_counter()
    );
    Ok(FormationResult {
        phalanxes,
        initial_screening,
        merge_trace,
        phalanx_screening,
        fit_counter: cache.fit_counter(),
        counts,
        a_median: calib.a_median,
        a_quantile: calib.a_quantile,
    })
}

/// Forms phalanxes on a dataset with forest evaluators and a null
/// calibration computed for the dataset's class counts.
pub fn form_phalanxes(
    ds: &Dataset,
    plan: &GroupingPlan,
    config: &FormationConfig,
) -> Result<FormationResult, FormationError> {
    config.validate()?;
    let calib = metrics::null_calibration(
        ds.n_obs(),
        ds.n_active(),
        config.permutations,
        config.alpha,
        seed::mix(config.seed, 0),
    )?;
    let evaluator = ForestEvaluator::new(ds, config.forest_config());
    form_with_evaluator(plan.groups(), ds.n_vars(), &evaluator, &calib)
}
