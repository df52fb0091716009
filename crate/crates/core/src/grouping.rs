//! Data-adaptive initial groups: Jaccard dissimilarity between binary
//! variables and agglomerative Ward clustering of the variables.
//!
//! Ward linkage is applied through the Lance-Williams recurrence
//!
//! ```text
//! d(k, i+j) = ((n_i + n_k) d(k,i) + (n_j + n_k) d(k,j) - n_k d(i,j)) / (n_i + n_j + n_k)
//! ```
//!
//! directly on the supplied dissimilarities ([`WardVariant::Raw`], the
//! classic `hclust(method = "ward")` behaviour). [`WardVariant::Squared`]
//! squares the input first and reports square-rooted heights.

use crate::dataset::{
    group_by_names, Dataset, DatasetError, GroupingPlan, NameRule, PlanProvenance, VariableKind,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GroupingError {
    #[error("columns differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("value {0} is not binary")]
    NotBinary(f64),
    #[error("both columns are all zero; Jaccard distance undefined")]
    ZeroUnion,
    #[error("cluster count {k} outside 1..={n}")]
    BadClusterCount { k: usize, n: usize },
    #[error("dissimilarity matrix: {0}")]
    BadMatrix(String),
    #[error("no binary columns to cluster")]
    NoBinaryColumns,
}

impl From<GroupingError> for DatasetError {
    fn from(e: GroupingError) -> Self {
        DatasetError::BadPlan(e.to_string())
    }
}

/// `1 - |both 1| / |either 1|`.
pub fn jaccard_distance(xi: &[f64], xj: &[f64]) -> Result<f64, GroupingError> {
    if xi.len() != xj.len() {
        return Err(GroupingError::LengthMismatch(xi.len(), xj.len()));
    }
    let mut both = 0usize;
    let mut either = 0usize;
    for (&a, &b) in xi.iter().zip(xj) {
        for v in [a, b] {
            if v != 0.0 && v != 1.0 {
                return Err(GroupingError::NotBinary(v));
            }
        }
        let (a, b) = (a == 1.0, b == 1.0);
        both += usize::from(a && b);
        either += usize::from(a || b);
    }
    if either == 0 {
        return Err(GroupingError::ZeroUnion);
    }
    Ok(1.0 - both as f64 / either as f64)
}

/// Symmetric dissimilarity matrix with zero diagonal, stored densely.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DissimilarityMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DissimilarityMatrix {
    pub fn from_full(n: usize, data: Vec<f64>) -> Result<Self, GroupingError> {
        if data.len() != n * n {
            return Err(GroupingError::BadMatrix(format!(
                "{} entries for a {n}x{n} matrix",
                data.len()
            )));
        }
        for i in 0..n {
            if data[i * n + i] != 0.0 {
                return Err(GroupingError::BadMatrix(format!("nonzero diagonal at {i}")));
            }
            for j in 0..i {
                let (a, b) = (data[i * n + j], data[j * n + i]);
                if a != b || !a.is_finite() || a < 0.0 {
                    return Err(GroupingError::BadMatrix(format!(
                        "entries ({i},{j}) and ({j},{i}) are {a} and {b}"
                    )));
                }
            }
        }
        Ok(DissimilarityMatrix { n, data })
    }

    /// Builds from a function of the lower triangle.
    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self, GroupingError> {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..i {
                let v = f(i, j);
                data[i * n + j] = v;
                data[j * n + i] = v;
            }
        }
        Self::from_full(n, data)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }
}

/// Jaccard distances among the given binary columns of a dataset.
pub fn jaccard_matrix(ds: &Dataset, columns: &[usize]) -> Result<DissimilarityMatrix, GroupingError> {
    let n = columns.len();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..i)
                .map(|j| jaccard_distance(ds.column(columns[i]), ds.column(columns[j])))
                .collect::<Result<Vec<f64>, _>>()
        })
        .collect::<Result<_, _>>()?;
    DissimilarityMatrix::from_fn(n, |i, j| rows[i][j])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WardVariant {
    /// Recurrence on the dissimilarities as given.
    #[default]
    Raw,
    /// Recurrence on squared dissimilarities; heights reported as roots.
    Squared,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agglomeration {
    /// Cluster ids: leaves are `0..n`, the cluster made at step `s` is `n + s`.
    pub left: usize,
    pub right: usize,
    pub height: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub n_leaves: usize,
    pub merges: Vec<Agglomeration>,
}

struct Cluster {
    id: usize,
    members: Vec<usize>,
}

/// Runs the agglomeration until `k` clusters remain. Returns the clusters
/// (sorted members, ordered by smallest member) and the merges performed.
fn agglomerate(
    dist: &DissimilarityMatrix,
    k: usize,
    variant: WardVariant,
) -> Result<(Vec<Vec<usize>>, Dendrogram), GroupingError> {
    let n = dist.len();
    if k == 0 || k > n {
        return Err(GroupingError::BadClusterCount { k, n });
    }
    let mut d: Vec<f64> = dist.data.clone();
    if variant == WardVariant::Squared {
        d.iter_mut().for_each(|v| *v *= *v);
    }
    let mut slots: Vec<Option<Cluster>> = (0..n)
        .map(|i| {
            Some(Cluster {
                id: i,
                members: vec![i],
            })
        })
        .collect();
    let mut merges = Vec::new();
    for step in 0..n - k {
        let active: Vec<usize> = (0..n).filter(|&s| slots[s].is_some()).collect();
        let mut best: Option<(f64, (usize, usize), usize, usize)> = None;
        for (x, &a) in active.iter().enumerate() {
            for &b in &active[x + 1..] {
                let v = d[a * n + b];
                let (ia, ib) = (slots[a].as_ref().unwrap().id, slots[b].as_ref().unwrap().id);
                let key = (ia.min(ib), ia.max(ib));
                let better = match best {
                    None => true,
                    Some((bv, bkey, _, _)) => v < bv || (v == bv && key < bkey),
                };
                if better {
                    best = Some((v, key, a, b));
                }
            }
        }
        let (height, (left, right), a, b) = best.expect("two active clusters");
        let na = slots[a].as_ref().unwrap().members.len() as f64;
        let nb = slots[b].as_ref().unwrap().members.len() as f64;
        for &c in &active {
            if c == a || c == b {
                continue;
            }
            let nc = slots[c].as_ref().unwrap().members.len() as f64;
            let v = ((na + nc) * d[c * n + a] + (nb + nc) * d[c * n + b] - nc * d[a * n + b])
                / (na + nb + nc);
            d[c * n + a] = v;
            d[a * n + c] = v;
        }
        let cb = slots[b].take().unwrap();
        let ca = slots[a].as_mut().unwrap();
        ca.members.extend(cb.members);
        ca.members.sort_unstable();
        ca.id = n + step;
        merges.push(Agglomeration {
            left,
            right,
            height: match variant {
                WardVariant::Raw => height,
                WardVariant::Squared => height.max(0.0).sqrt(),
            },
            size: ca.members.len(),
        });
    }
    let mut groups: Vec<Vec<usize>> = slots.into_iter().flatten().map(|c| c.members).collect();
    groups.sort();
    Ok((groups, Dendrogram { n_leaves: n, merges }))
}

/// Ward clustering cut to exactly `k` clusters. Indices in the plan are
/// matrix positions.
pub fn ward_cluster(dist: &DissimilarityMatrix, k: usize, variant: WardVariant) -> Result<GroupingPlan, GroupingError> {
    let (groups, _) = agglomerate(dist, k, variant)?;
    Ok(GroupingPlan::new(groups, dist.len(), PlanProvenance::Clusters).expect("clusters partition"))
}

/// Full dendrogram (`n - 1` merges).
pub fn ward_dendrogram(dist: &DissimilarityMatrix, variant: WardVariant) -> Result<Dendrogram, GroupingError> {
    if dist.is_empty() {
        return Err(GroupingError::BadClusterCount { k: 1, n: 0 });
    }
    Ok(agglomerate(dist, 1, variant)?.1)
}

/// Clusters the binary columns of a dataset into `k` groups (default: the
/// number of name-based groups among them); continuous columns are appended
/// as singletons.
pub fn cluster_groups(
    ds: &Dataset,
    k: Option<usize>,
    variant: WardVariant,
    rule: &dyn NameRule,
) -> Result<GroupingPlan, GroupingError> {
    let binary: Vec<usize> = (0..ds.n_vars())
        .filter(|&j| ds.columns()[j].kind == VariableKind::Binary)
        .collect();
    if binary.is_empty() {
        return Err(GroupingError::NoBinaryColumns);
    }
    let k = match k {
        Some(k) => k,
        None => {
            let by_name = group_by_names(ds, rule);
            by_name
                .groups()
                .iter()
                .filter(|g| g.iter().any(|j| binary.contains(j)))
                .count()
        }
    };
    let dist = jaccard_matrix(ds, &binary)?;
    let (groups, _) = agglomerate(&dist, k, variant)?;
    let mut groups: Vec<Vec<usize>> = groups
        .into_iter()
        .map(|g| g.into_iter().map(|p| binary[p]).collect())
        .collect();
    groups.extend(
        (0..ds.n_vars())
            .filter(|&j| ds.columns()[j].kind == VariableKind::Continuous)
            .map(|j| vec![j]),
    );
    Ok(GroupingPlan::new(groups, ds.n_vars(), PlanProvenance::Clusters).expect("clusters partition"))
}
