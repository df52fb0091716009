//! Random-forest base classifier restricted to a subset of variables.
//!
//! Defaults follow the usual classification-forest conventions:
//! `mtry = floor(sqrt(|subset|))`, terminal nodes of size 1, bootstrap of
//! size `n_obs` drawn with replacement. Tree `t` is grown from the stream
//! `mix(config.seed, t)`, so a forest is a pure function of its inputs no
//! matter how many threads grow it.

mod tree;

pub use tree::{best_split, weighted_gini, Node, SplitChoice, Tree};

use crate::dataset::{Dataset, FeatureMatrix};
use crate::metrics::{self, MetricsError};
use crate::seed;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tree::GrowParams;

pub const FINAL_TREES: usize = 500;
pub const FORMATION_TREES: usize = 150;

#[derive(Debug, Error, PartialEq)]
pub enum ForestError {
    #[error("empty variable subset")]
    EmptySubset,
    #[error("variable {var} out of range ({n_vars} variables)")]
    VariableOutOfRange { var: usize, n_vars: usize },
    #[error("training labels hold a single class")]
    SingleClass,
    #[error("need at least one tree")]
    NoTrees,
    #[error("mtry must be at least 1")]
    BadMtry,
    #[error("feature matrix has {found} columns, forest needs at least {needed}")]
    DimensionMismatch { needed: usize, found: usize },
    #[error("forest has no in-bag record for {0} observations")]
    NoInbagRecord(usize),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mtry {
    /// `floor(sqrt(subset size))`, at least 1.
    Auto,
    /// Fixed count, capped at the subset size.
    Fixed(usize),
}

impl Mtry {
    pub fn resolve(self, subset_len: usize) -> usize {
        match self {
            Mtry::Auto => ((subset_len as f64).sqrt().floor() as usize).max(1),
            Mtry::Fixed(m) => m.min(subset_len),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub mtry: Mtry,
    pub min_node_size: usize,
    pub seed: u64,
}

impl ForestConfig {
    /// 500 trees, used for final ensemble members.
    pub fn final_model(seed: u64) -> Self {
        ForestConfig {
            n_trees: FINAL_TREES,
            mtry: Mtry::Auto,
            min_node_size: 1,
            seed,
        }
    }

    /// 150 trees, used while forming phalanxes.
    pub fn formation(seed: u64) -> Self {
        ForestConfig {
            n_trees: FORMATION_TREES,
            ..Self::final_model(seed)
        }
    }

    pub fn with_trees(mut self, n_trees: usize) -> Self {
        self.n_trees = n_trees;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    trees: Vec<Tree>,
    variable_subset: Vec<usize>,
    /// Training prevalence, the OOB fallback.
    prevalence: f64,
    /// Per-tree in-bag counts; only kept in memory.
    #[serde(skip)]
    inbag: Vec<Vec<u32>>,
}

fn check_subset(ds: &Dataset, subset: &[usize]) -> Result<Vec<usize>, ForestError> {
    if subset.is_empty() {
        return Err(ForestError::EmptySubset);
    }
    let mut s = subset.to_vec();
    s.sort_unstable();
    s.dedup();
    if let Some(&var) = s.iter().find(|&&v| v >= ds.n_vars()) {
        return Err(ForestError::VariableOutOfRange {
            var,
            n_vars: ds.n_vars(),
        });
    }
    Ok(s)
}

/// Grows a forest on `ds` using only the variables in `subset`.
pub fn fit(ds: &Dataset, subset: &[usize], config: &ForestConfig) -> Result<Forest, ForestError> {
    let subset = check_subset(ds, subset)?;
    if config.n_trees == 0 {
        return Err(ForestError::NoTrees);
    }
    if config.mtry == Mtry::Fixed(0) {
        return Err(ForestError::BadMtry);
    }
    let m = ds.n_active();
    if m == 0 || m == ds.n_obs() {
        return Err(ForestError::SingleClass);
    }
    let params = GrowParams {
        subset: &subset,
        mtry: config.mtry.resolve(subset.len()),
        min_node_size: config.min_node_size.max(1),
    };
    let grown: Vec<(Tree, Vec<u32>)> = (0..config.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = seed::rng(seed::mix(config.seed, t as u64));
            tree::grow_tree(ds, &params, &mut rng)
        })
        .collect();
    let (trees, inbag) = grown.into_iter().unzip();
    Ok(Forest {
        trees,
        variable_subset: subset,
        prevalence: ds.prevalence(),
        inbag,
    })
}

impl Forest {
    /// Assembles a forest from prebuilt trees (no in-bag record).
    pub fn from_trees(trees: Vec<Tree>, variable_subset: Vec<usize>, prevalence: f64) -> Self {
        Forest {
            trees,
            variable_subset,
            prevalence,
            inbag: Vec::new(),
        }
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn variable_subset(&self) -> &[usize] {
        &self.variable_subset
    }

    pub fn prevalence(&self) -> f64 {
        self.prevalence
    }

    pub fn inbag(&self) -> &[Vec<u32>] {
        &self.inbag
    }

    /// Smallest number of columns a prediction matrix must have.
    pub fn required_columns(&self) -> usize {
        self.variable_subset.last().map_or(0, |&v| v + 1)
    }

    /// Mean over trees of the leaf class-1 proportion, for every row.
    pub fn predict_proba(&self, x: &FeatureMatrix) -> Result<Vec<f64>, ForestError> {
        if x.n_cols < self.required_columns() {
            return Err(ForestError::DimensionMismatch {
                needed: self.required_columns(),
                found: x.n_cols,
            });
        }
        let n_trees = self.trees.len() as f64;
        Ok((0..x.n_rows)
            .into_par_iter()
            .map(|i| {
                let row = x.row(i);
                self.trees.iter().map(|t| t.predict(|v| row[v])).sum::<f64>() / n_trees
            })
            .collect())
    }

    /// Out-of-bag probability of class 1 for every training observation;
    /// observations in-bag for every tree get the training prevalence.
    pub fn oob_probabilities(&self, ds: &Dataset) -> Result<Vec<f64>, ForestError> {
        let n = ds.n_obs();
        if self.inbag.len() != self.trees.len() || self.inbag.iter().any(|b| b.len() != n) {
            return Err(ForestError::NoInbagRecord(n));
        }
        Ok((0..n)
            .into_par_iter()
            .map(|i| {
                let mut sum = 0.0;
                let mut count = 0usize;
                for (tree, inbag) in self.trees.iter().zip(&self.inbag) {
                    if inbag[i] == 0 {
                        sum += tree.predict(|v| ds.value(i, v));
                        count += 1;
                    }
                }
                if count == 0 {
                    self.prevalence
                } else {
                    sum / count as f64
                }
            })
            .collect())
    }
}

/// Fitted result for one variable set: out-of-bag probabilities and their
/// average precision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub variable_set: Vec<usize>,
    pub oob_probs: Vec<f64>,
    pub assessment: f64,
}

/// Fits a forest on `variable_set` and scores its out-of-bag probabilities.
pub fn evaluate(ds: &Dataset, variable_set: &[usize], config: &ForestConfig) -> Result<EvalRecord, ForestError> {
    let forest = fit(ds, variable_set, config)?;
    let oob_probs = forest.oob_probabilities(ds)?;
    let assessment = metrics::ave_p_of(&oob_probs, ds.labels())?;
    Ok(EvalRecord {
        variable_set: forest.variable_subset,
        oob_probs,
        assessment,
    })
}

/// Forest-backed evaluator used during phalanx formation. Each variable set
/// is fitted with its own seed, `mix_set(config.seed, set)`.
#[derive(Debug, Clone)]
pub struct ForestEvaluator<'a> {
    dataset: &'a Dataset,
    config: ForestConfig,
}

impl<'a> ForestEvaluator<'a> {
    pub fn new(dataset: &'a Dataset, config: ForestConfig) -> Self {
        ForestEvaluator { dataset, config }
    }

    pub fn config(&self) -> &ForestConfig {
        &self.config
    }
}

impl crate::formation::Evaluator for ForestEvaluator<'_> {
    fn labels(&self) -> &[u8] {
        self.dataset.labels()
    }

    fn evaluate(&self, variable_set: &[usize]) -> Result<EvalRecord, crate::formation::EvaluatorError> {
        let config = ForestConfig {
            seed: seed::mix_set(self.config.seed, variable_set),
            ..self.config
        };
        evaluate(self.dataset, variable_set, &config).map_err(|e| e.to_string().into())
    }
}
