use super::{Dataset, DatasetError, VariableKind};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeSet, HashMap};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlanProvenance {
    Singletons,
    Names,
    Clusters,
    Explicit,
}

/// Ordered partition of (a subset of) the variable indices into initial
/// groups. Each group is stored sorted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupingPlan {
    groups: Vec<Vec<usize>>,
    provenance: PlanProvenance,
}

impl GroupingPlan {
    pub fn new(
        groups: Vec<Vec<usize>>,
        n_vars: usize,
        provenance: PlanProvenance,
    ) -> Result<Self, DatasetError> {
        if groups.is_empty() {
            return Err(DatasetError::BadPlan("no groups".into()));
        }
        let mut seen = BTreeSet::new();
        let mut sorted = Vec::with_capacity(groups.len());
        for (g, members) in groups.into_iter().enumerate() {
            if members.is_empty() {
                return Err(DatasetError::BadPlan(format!("group {g} is empty")));
            }
            let mut members = members;
            members.sort_unstable();
            for &v in &members {
                if v >= n_vars {
                    return Err(DatasetError::BadPlan(format!(
                        "group {g} references variable {v} but only {n_vars} exist"
                    )));
                }
                if !seen.insert(v) {
                    return Err(DatasetError::BadPlan(format!(
                        "variable {v} appears in more than one group"
                    )));
                }
            }
            sorted.push(members);
        }
        Ok(GroupingPlan {
            groups: sorted,
            provenance,
        })
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn provenance(&self) -> PlanProvenance {
        self.provenance
    }

    pub fn n_grouped(&self) -> usize {
        self.groups.iter().map(Vec::len).sum()
    }
}

/// Maps a variable name to its group key.
pub trait NameRule: Send + Sync {
    fn key(&self, name: &str) -> String;
}

/// Replaces every maximal run of ASCII digits with `#`, so `AR_01_AR` and
/// `AR_07_AR` share the key `AR_#_AR`.
#[derive(Debug, Clone, Copy, Default)]
pub struct DigitPlaceholder;

impl NameRule for DigitPlaceholder {
    fn key(&self, name: &str) -> String {
        let mut out = String::with_capacity(name.len());
        let mut in_run = false;
        for ch in name.chars() {
            if ch.is_ascii_digit() {
                if !in_run {
                    out.push('#');
                    in_run = true;
                }
            } else {
                out.push(ch);
                in_run = false;
            }
        }
        out
    }
}

impl<F> NameRule for F
where
    F: Fn(&str) -> String + Send + Sync,
{
    fn key(&self, name: &str) -> String {
        self(name)
    }
}

/// Groups all columns by name key, in order of first appearance.
pub fn group_by_names(ds: &Dataset, rule: &dyn NameRule) -> GroupingPlan {
    let all: Vec<usize> = (0..ds.n_vars()).collect();
    let groups = group_indices_by_key(ds, &all, rule);
    GroupingPlan::new(groups, ds.n_vars(), PlanProvenance::Names)
        .expect("name grouping is a partition")
}

fn group_indices_by_key(ds: &Dataset, idx: &[usize], rule: &dyn NameRule) -> Vec<Vec<usize>> {
    let mut order: Vec<String> = Vec::new();
    let mut by_key: HashMap<String, Vec<usize>> = HashMap::new();
    for &j in idx {
        let key = rule.key(&ds.columns()[j].name);
        by_key
            .entry(key.clone())
            .or_insert_with(|| {
                order.push(key);
                Vec::new()
            })
            .push(j);
    }
    order
        .into_iter()
        .map(|k| by_key.remove(&k).unwrap_or_default())
        .collect()
}

pub fn singleton_groups(ds: &Dataset) -> GroupingPlan {
    GroupingPlan::new(
        (0..ds.n_vars()).map(|j| vec![j]).collect(),
        ds.n_vars(),
        PlanProvenance::Singletons,
    )
    .expect("singletons are a partition")
}

/// Continuous-only data gets singleton groups; otherwise binary columns are
/// grouped by name and continuous columns stay singletons.
pub fn default_plan(ds: &Dataset, rule: &dyn NameRule) -> GroupingPlan {
    let binary: Vec<usize> = (0..ds.n_vars())
        .filter(|&j| ds.columns()[j].kind == VariableKind::Binary)
        .collect();
    if binary.is_empty() {
        return singleton_groups(ds);
    }
    let mut groups = group_indices_by_key(ds, &binary, rule);
    groups.extend(
        (0..ds.n_vars())
            .filter(|&j| ds.columns()[j].kind == VariableKind::Continuous)
            .map(|j| vec![j]),
    );
    GroupingPlan::new(groups, ds.n_vars(), PlanProvenance::Names)
        .expect("name grouping is a partition")
}

/// Reads a plan file: one group per line, variable names separated by
/// commas. Blank lines and `#` comments are skipped.
pub fn read_plan(path: &Path, ds: &Dataset) -> Result<GroupingPlan, DatasetError> {
    let text = std::fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_plan(&text, ds)
}

pub(crate) fn parse_plan(text: &str, ds: &Dataset) -> Result<GroupingPlan, DatasetError> {
    let mut groups = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut g = Vec::new();
        for name in line.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            g.push(
                ds.index_of(name)
                    .ok_or_else(|| DatasetError::MissingColumn(name.to_string()))?,
            );
        }
        groups.push(g);
    }
    GroupingPlan::new(groups, ds.n_vars(), PlanProvenance::Explicit)
}

pub fn write_plan(path: &Path, plan_groups: &[Vec<usize>], ds: &Dataset) -> Result<(), DatasetError> {
    std::fs::write(path, format_plan(plan_groups, ds)).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub(crate) fn format_plan(groups: &[Vec<usize>], ds: &Dataset) -> String {
    let mut out = String::new();
    for g in groups {
        let names: Vec<&str> = g.iter().map(|&j| ds.columns()[j].name.as_str()).collect();
        out.push_str(&names.join(","));
        out.push('\n');
    }
    out
}
