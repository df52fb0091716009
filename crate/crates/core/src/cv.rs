//! Balanced k-fold cross-validation with repeats, and the diversity map of
//! per-phalanx ranks of the actives.
//!
//! Repeat `r` draws its folds with seed `mix_path(seed, [r])`; the models
//! trained for fold `f` of that repeat use `mix_path(seed, [r, f])`. Two
//! pipelines cross-validated with the same seed therefore see identical
//! folds, which makes per-repeat comparisons paired.

use crate::dataset::{Dataset, DatasetError, GroupingPlan};
use crate::ensemble::{fit_epx, EpxModel, ModelError};
use crate::forest::{self, ForestConfig, ForestError};
use crate::formation::{form_phalanxes, FormationConfig, FormationError};
use crate::metrics::{self, expected_ranks, MetricsError, RankedScores, DEFAULT_IE_SHORTLIST};
use crate::seed;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_FOLDS: usize = 10;
pub const DEFAULT_REPEATS: usize = 16;

#[derive(Debug, Error)]
pub enum CvError {
    #[error("need at least 2 folds, got {0}")]
    TooFewFolds(usize),
    #[error("{k} folds requested for {n_obs} observations")]
    TooManyFolds { k: usize, n_obs: usize },
    #[error("no active observations")]
    NoActives,
    #[error("repeat count must be positive")]
    NoRepeats,
    #[error("repeat {repeat}, fold {fold}: training split has a single class")]
    DegenerateTraining { repeat: usize, fold: usize },
    #[error("repeat {0} is out of range")]
    BadRepeat(usize),
    #[error("cross-validation result has no per-phalanx probabilities for {expected} phalanxes")]
    MembersUnavailable { expected: usize },
    #[error("results cover different observations or repeats")]
    Incompatible,
    #[error(transparent)]
    Forest(#[from] ForestError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Formation(#[from] FormationError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Fold ids are 1-based.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    folds: Vec<usize>,
    k: usize,
    seed: u64,
}

impl FoldAssignment {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn fold_ids(&self) -> &[usize] {
        &self.folds
    }

    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.folds.len()).filter(|&i| self.folds[i] == fold).collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.folds.len()).filter(|&i| self.folds[i] != fold).collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.folds {
            sizes[f - 1] += 1;
        }
        sizes
    }

    pub fn active_counts(&self, labels: &[u8]) -> Vec<usize> {
        let mut counts = vec![0; self.k];
        for (&f, &y) in self.folds.iter().zip(labels) {
            counts[f - 1] += usize::from(y);
        }
        counts
    }
}

/// Actives are shuffled and dealt round-robin into the folds; the shuffled
/// inactives continue the deal where the actives stopped, which keeps both
/// fold sizes and fold active counts within one of each other.
pub fn balanced_folds(labels: &[u8], k: usize, seed_value: u64) -> Result<FoldAssignment, CvError> {
    if k < 2 {
        return Err(CvError::TooFewFolds(k));
    }
    if k > labels.len() {
        return Err(CvError::TooManyFolds { k, n_obs: labels.len() });
    }
    let mut actives: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == 1).collect();
    let mut inactives: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] != 1).collect();
    if actives.is_empty() {
        return Err(CvError::NoActives);
    }
    let mut rng = seed::rng(seed_value);
    actives.shuffle(&mut rng);
    inactives.shuffle(&mut rng);
    let mut folds = vec![0; labels.len()];
    for (pos, &i) in actives.iter().chain(&inactives).enumerate() {
        folds[i] = pos % k + 1;
    }
    Ok(FoldAssignment {
        folds,
        k,
        seed: seed_value,
    })
}

/// What is trained on each training split. The `seed` fields of the
/// embedded configurations are replaced by per-fold seeds.
#[derive(Debug, Clone)]
pub enum Pipeline {
    /// Phalanxes fixed in advance (formed once on the full data).
    FixedPhalanxes {
        phalanxes: Vec<Vec<usize>>,
        forest: ForestConfig,
    },
    /// Phalanx formation rerun on every training split.
    Reformation {
        plan: GroupingPlan,
        formation: FormationConfig,
        forest: ForestConfig,
    },
    /// One forest on all variables.
    PlainForest { forest: ForestConfig },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CvConfig {
    pub k: usize,
    pub repeats: usize,
    /// Shortlist length for initial enhancement, capped at the number of
    /// observations.
    pub ie_shortlist: usize,
    pub seed: u64,
}

impl CvConfig {
    pub fn new(seed: u64) -> Self {
        CvConfig {
            k: DEFAULT_FOLDS,
            repeats: DEFAULT_REPEATS,
            ie_shortlist: DEFAULT_IE_SHORTLIST,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub k: usize,
    pub seed: u64,
    pub ie_shortlist: usize,
    pub labels: Vec<u8>,
    /// `probabilities[r][i]`: cross-validated estimate for observation `i`
    /// in repeat `r`.
    pub probabilities: Vec<Vec<f64>>,
    /// `members[r][m][i]` for fixed-phalanx pipelines.
    pub members: Option<Vec<Vec<Vec<f64>>>>,
    pub ave_p: Vec<f64>,
    pub ie: Vec<f64>,
}

impl CvResult {
    pub fn repeats(&self) -> usize {
        self.probabilities.len()
    }

    pub fn mean_ave_p(&self) -> f64 {
        mean(&self.ave_p)
    }

    pub fn mean_ie(&self) -> f64 {
        mean(&self.ie)
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Number of repeats in which `ours` has strictly larger AveP than
/// `baseline`. Both results must come from the same folds.
pub fn win_count(ours: &CvResult, baseline: &CvResult) -> Result<usize, CvError> {
    if ours.labels != baseline.labels || ours.repeats() != baseline.repeats() {
        return Err(CvError::Incompatible);
    }
    Ok(ours.ave_p.iter().zip(&baseline.ave_p).filter(|(a, b)| a > b).count())
}

struct FoldOutput {
    test: Vec<usize>,
    probabilities: Vec<f64>,
    members: Option<Vec<Vec<f64>>>,
}

fn run_fold(
    ds: &Dataset,
    pipeline: &Pipeline,
    folds: &FoldAssignment,
    repeat: usize,
    fold: usize,
    fold_seed: u64,
) -> Result<FoldOutput, CvError> {
    let train_idx = folds.train_indices(fold);
    let test = folds.test_indices(fold);
    let train = ds.subset(&train_idx).map_err(|e| match e {
        DatasetError::SingleClass { .. } => CvError::DegenerateTraining { repeat, fold },
        other => CvError::Model(ModelError::Features(other.to_string())),
    })?;
    let x = ds.rows(&test);
    let fit_members = |phalanxes: &[Vec<usize>], forest_cfg: &ForestConfig, s: u64| -> Result<EpxModel, CvError> {
        let cfg = ForestConfig { seed: s, ..*forest_cfg };
        Ok(fit_epx(&train, phalanxes, &cfg)?)
    };
    let (probabilities, members) = match pipeline {
        Pipeline::PlainForest { forest: cfg } => {
            let all: Vec<usize> = (0..ds.n_vars()).collect();
            let cfg = ForestConfig { seed: fold_seed, ..*cfg };
            let f = forest::fit(&train, &all, &cfg)?;
            (f.predict_proba(&x)?, None)
        }
        Pipeline::FixedPhalanxes { phalanxes, forest } => {
            let model = fit_members(phalanxes, forest, fold_seed)?;
            let members = model.member_predictions(&x)?;
            (average(&members, test.len()), Some(members))
        }
        Pipeline::Reformation {
            plan,
            formation,
            forest,
        } => {
            let fcfg = FormationConfig {
                seed: seed::mix(fold_seed, 0),
                ..*formation
            };
            let formed = form_phalanxes(&train, plan, &fcfg)?;
            let model = fit_members(&formed.phalanxes, forest, seed::mix(fold_seed, 1))?;
            (average(&model.member_predictions(&x)?, test.len()), None)
        }
    };
    Ok(FoldOutput {
        test,
        probabilities,
        members,
    })
}

/// Same arithmetic as [`crate::ensemble::predict_epx`].
fn average(members: &[Vec<f64>], n: usize) -> Vec<f64> {
    let p = members.len() as f64;
    (0..n).map(|i| members.iter().map(|m| m[i]).sum::<f64>() / p).collect()
}

/// Runs `repeats` rounds of balanced k-fold cross-validation. Every
/// (repeat, fold) pair is trained independently and in parallel.
pub fn cross_validate(ds: &Dataset, pipeline: &Pipeline, config: &CvConfig) -> Result<CvResult, CvError> {
    if config.repeats == 0 {
        return Err(CvError::NoRepeats);
    }
    let n = ds.n_obs();
    let assignments: Vec<FoldAssignment> = (0..config.repeats)
        .map(|r| balanced_folds(ds.labels(), config.k, seed::mix_path(config.seed, &[r as u64])))
        .collect::<Result<_, _>>()?;
    let jobs: Vec<(usize, usize)> = (0..config.repeats)
        .flat_map(|r| (1..=config.k).map(move |f| (r, f)))
        .collect();
    let outputs: Vec<FoldOutput> = jobs
        .par_iter()
        .map(|&(r, f)| {
            let fold_seed = seed::mix_path(config.seed, &[r as u64, f as u64]);
            run_fold(ds, pipeline, &assignments[r], r, f, fold_seed)
        })
        .collect::<Result<_, _>>()?;

    let n_members = match pipeline {
        Pipeline::FixedPhalanxes { phalanxes, .. } => Some(phalanxes.len()),
        _ => None,
    };
    let mut probabilities = vec![vec![f64::NAN; n]; config.repeats];
    let mut members = n_members.map(|p| vec![vec![vec![f64::NAN; n]; p]; config.repeats]);
    for (&(r, _), out) in jobs.iter().zip(outputs) {
        for (t, &i) in out.test.iter().enumerate() {
            probabilities[r][i] = out.probabilities[t];
        }
        if let (Some(all), Some(fold_members)) = (members.as_mut(), out.members) {
            for (m, vals) in fold_members.iter().enumerate() {
                for (t, &i) in out.test.iter().enumerate() {
                    all[r][m][i] = vals[t];
                }
            }
        }
    }
    let shortlist = config.ie_shortlist.min(n);
    let mut ave_p = Vec::with_capacity(config.repeats);
    let mut ie = Vec::with_capacity(config.repeats);
    for probs in &probabilities {
        let ranked = RankedScores::new(probs, ds.labels())?;
        ave_p.push(metrics::ave_p(&ranked)?);
        ie.push(metrics::initial_enhancement(&ranked, shortlist)?);
    }
    Ok(CvResult {
        k: config.k,
        seed: config.seed,
        ie_shortlist: shortlist,
        labels: ds.labels().to_vec(),
        probabilities,
        members,
        ave_p,
        ie,
    })
}

/// Ranks of the actives under each phalanx, the ensemble and optionally a
/// baseline. Rank 1 is the highest estimate; ties share expected ranks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiversityMap {
    pub columns: Vec<String>,
    /// Observation indices of the actives, best ensemble rank first.
    pub rows: Vec<usize>,
    /// `ranks[row][column]`.
    pub ranks: Vec<Vec<f64>>,
    /// AveP of each column's full ranking.
    pub ave_p: Vec<f64>,
    pub ensemble_column: usize,
}

impl DiversityMap {
    pub fn column(&self, c: usize) -> Vec<f64> {
        self.ranks.iter().map(|r| r[c]).collect()
    }
}

/// Builds the diversity map from the cross-validated estimates of one
/// repeat of a fixed-phalanx pipeline.
pub fn diversity_map(
    ds: &Dataset,
    model: &EpxModel,
    cv: &CvResult,
    repeat: usize,
    baseline: Option<(&str, &CvResult)>,
) -> Result<DiversityMap, CvError> {
    if repeat >= cv.repeats() {
        return Err(CvError::BadRepeat(repeat));
    }
    if cv.labels != ds.labels() {
        return Err(CvError::Incompatible);
    }
    let members = cv
        .members
        .as_ref()
        .map(|m| &m[repeat])
        .filter(|m| m.len() == model.len())
        .ok_or(CvError::MembersUnavailable { expected: model.len() })?;
    let mut columns: Vec<String> = (1..=model.len()).map(|k| format!("PX-{k}")).collect();
    let mut scores: Vec<&[f64]> = members.iter().map(Vec::as_slice).collect();
    columns.push("EPX".to_string());
    scores.push(&cv.probabilities[repeat]);
    let ensemble_column = model.len();
    if let Some((name, base)) = baseline {
        if base.labels != cv.labels || repeat >= base.repeats() {
            return Err(CvError::Incompatible);
        }
        columns.push(name.to_string());
        scores.push(&base.probabilities[repeat]);
    }
    let ranks: Vec<Vec<f64>> = scores.iter().map(|s| expected_ranks(s)).collect();
    let ave_p = scores
        .iter()
        .map(|s| metrics::ave_p_of(s, ds.labels()))
        .collect::<Result<Vec<_>, _>>()?;
    let mut rows: Vec<usize> = (0..ds.n_obs()).filter(|&i| ds.labels()[i] == 1).collect();
    rows.sort_by(|&a, &b| {
        ranks[ensemble_column][a]
            .total_cmp(&ranks[ensemble_column][b])
            .then(a.cmp(&b))
    });
    Ok(DiversityMap {
        columns,
        ranks: rows.iter().map(|&i| ranks.iter().map(|col| col[i]).collect()).collect(),
        rows,
        ave_p,
        ensemble_column,
    })
}
