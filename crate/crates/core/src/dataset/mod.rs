//! Two-class datasets with named binary or continuous descriptor variables.
//!
//! A [`Dataset`] is validated once at construction and immutable afterwards.
//! Features are stored column-major because tree growth scans one variable
//! at a time.

mod csv_io;
mod grouping_plan;
mod synth;

pub use csv_io::{load_csv, parse_kind_hints, read_kind_hints, write_csv, LoadOptions};
pub use grouping_plan::{
    default_plan, group_by_names, read_plan, singleton_groups, write_plan, DigitPlaceholder,
    GroupingPlan, NameRule, PlanProvenance,
};
pub use synth::{synth_generate, SynthData, SynthKind, SynthSpec, SynthTruth};

use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("label column `{0}` not found in header")]
    MissingLabelColumn(String),
    #[error("column `{0}` not found in header")]
    MissingColumn(String),
    #[error("row {row}: expected {expected} fields, found {found}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("row {row}, column `{column}`: cannot parse `{value}` as a number")]
    BadValue {
        row: usize,
        column: String,
        value: String,
    },
    #[error("row {row}: label `{value}` is not 0 or 1")]
    BadLabel { row: usize, value: String },
    #[error("labels must contain both classes (found {actives} actives among {n_obs} observations)")]
    SingleClass { n_obs: usize, actives: usize },
    #[error("column `{column}` is tagged binary but holds value {value} at row {row}")]
    NotBinary {
        column: String,
        row: usize,
        value: f64,
    },
    #[error("column `{0}` is constant")]
    ConstantColumn(String),
    #[error("every feature column is constant")]
    AllConstant,
    #[error("duplicate variable name `{0}`")]
    DuplicateName(String),
    #[error("empty variable name at column {0}")]
    EmptyName(usize),
    #[error("column `{column}` has {found} values, expected {expected}")]
    LengthMismatch {
        column: String,
        expected: usize,
        found: usize,
    },
    #[error("dataset has no observations")]
    Empty,
    #[error("bad kind hint: {0}")]
    BadHint(String),
    #[error("invalid grouping plan: {0}")]
    BadPlan(String),
    #[error("infeasible synthetic spec: {0}")]
    InfeasibleSpec(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VariableKind {
    Binary,
    Continuous,
}

impl VariableKind {
    pub fn as_str(self) -> &'static str {
        match self {
            VariableKind::Binary => "binary",
            VariableKind::Continuous => "continuous",
        }
    }
}

impl std::str::FromStr for VariableKind {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "binary" | "bin" => Ok(VariableKind::Binary),
            "continuous" | "cont" | "numeric" => Ok(VariableKind::Continuous),
            other => Err(DatasetError::BadHint(format!("unknown kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariableMeta {
    pub name: String,
    pub kind: VariableKind,
    /// Position of the column in the source file's feature columns, before
    /// constant columns were removed.
    pub original_index: usize,
}

/// Validated two-class dataset. Label 1 marks the rare (active) class.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    label_name: String,
    labels: Vec<u8>,
    features: Vec<Vec<f64>>,
    columns: Vec<VariableMeta>,
    ids: Option<Vec<String>>,
}

impl Dataset {
    /// Builds a dataset from column-major features, rejecting constant
    /// columns. Use [`Dataset::from_columns_dropping_constant`] to drop them.
    pub fn new(
        labels: Vec<u8>,
        features: Vec<Vec<f64>>,
        columns: Vec<VariableMeta>,
    ) -> Result<Self, DatasetError> {
        let ds = Dataset {
            label_name: "y".to_string(),
            labels,
            features,
            columns,
            ids: None,
        };
        ds.validate()?;
        Ok(ds)
    }

    /// Builds a dataset after removing constant columns; returns the names
    /// of the removed columns alongside.
    pub fn from_columns_dropping_constant(
        labels: Vec<u8>,
        features: Vec<Vec<f64>>,
        columns: Vec<VariableMeta>,
    ) -> Result<(Self, Vec<String>), DatasetError> {
        if features.len() != columns.len() {
            return Err(DatasetError::BadPlan(format!(
                "{} feature columns but {} metadata entries",
                features.len(),
                columns.len()
            )));
        }
        let mut kept_f = Vec::with_capacity(features.len());
        let mut kept_c = Vec::with_capacity(columns.len());
        let mut dropped = Vec::new();
        for (values, meta) in features.into_iter().zip(columns) {
            if is_constant(&values) {
                dropped.push(meta.name);
            } else {
                kept_f.push(values);
                kept_c.push(meta);
            }
        }
        if kept_f.is_empty() {
            return Err(DatasetError::AllConstant);
        }
        Ok((Dataset::new(labels, kept_f, kept_c)?, dropped))
    }

    pub fn with_ids(mut self, ids: Vec<String>) -> Result<Self, DatasetError> {
        if ids.len() != self.labels.len() {
            return Err(DatasetError::LengthMismatch {
                column: "id".into(),
                expected: self.labels.len(),
                found: ids.len(),
            });
        }
        self.ids = Some(ids);
        Ok(self)
    }

    pub fn with_label_name(mut self, name: impl Into<String>) -> Self {
        self.label_name = name.into();
        self
    }

    fn validate(&self) -> Result<(), DatasetError> {
        let n = self.labels.len();
        if n == 0 {
            return Err(DatasetError::Empty);
        }
        if let Some(row) = self.labels.iter().position(|&y| y > 1) {
            return Err(DatasetError::BadLabel {
                row,
                value: self.labels[row].to_string(),
            });
        }
        let actives = self.n_active();
        if actives == 0 || actives == n {
            return Err(DatasetError::SingleClass { n_obs: n, actives });
        }
        if self.features.len() != self.columns.len() {
            return Err(DatasetError::BadPlan(format!(
                "{} feature columns but {} metadata entries",
                self.features.len(),
                self.columns.len()
            )));
        }
        if self.features.is_empty() {
            return Err(DatasetError::AllConstant);
        }
        let mut seen = HashSet::new();
        for (j, (values, meta)) in self.features.iter().zip(&self.columns).enumerate() {
            if meta.name.is_empty() {
                return Err(DatasetError::EmptyName(j));
            }
            if !seen.insert(meta.name.as_str()) {
                return Err(DatasetError::DuplicateName(meta.name.clone()));
            }
            if values.len() != n {
                return Err(DatasetError::LengthMismatch {
                    column: meta.name.clone(),
                    expected: n,
                    found: values.len(),
                });
            }
            if meta.kind == VariableKind::Binary {
                if let Some((row, &value)) = values
                    .iter()
                    .enumerate()
                    .find(|(_, &v)| v != 0.0 && v != 1.0)
                {
                    return Err(DatasetError::NotBinary {
                        column: meta.name.clone(),
                        row,
                        value,
                    });
                }
            }
            if is_constant(values) {
                return Err(DatasetError::ConstantColumn(meta.name.clone()));
            }
        }
        Ok(())
    }

    pub fn n_obs(&self) -> usize {
        self.labels.len()
    }

    /// Number of rare-class observations (M).
    pub fn n_active(&self) -> usize {
        self.labels.iter().filter(|&&y| y == 1).count()
    }

    pub fn n_vars(&self) -> usize {
        self.columns.len()
    }

    pub fn prevalence(&self) -> f64 {
        self.n_active() as f64 / self.n_obs() as f64
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn label_name(&self) -> &str {
        &self.label_name
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.features[j]
    }

    pub fn features(&self) -> &[Vec<f64>] {
        &self.features
    }

    pub fn columns(&self) -> &[VariableMeta] {
        &self.columns
    }

    pub fn ids(&self) -> Option<&[String]> {
        self.ids.as_deref()
    }

    pub fn names(&self) -> Vec<&str> {
        self.columns.iter().map(|c| c.name.as_str()).collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.features[col][row]
    }

    /// Row-major copy of the selected observations.
    pub fn rows(&self, idx: &[usize]) -> FeatureMatrix {
        let d = self.n_vars();
        let mut data = Vec::with_capacity(idx.len() * d);
        for &i in idx {
            data.extend(self.features.iter().map(|col| col[i]));
        }
        FeatureMatrix {
            n_rows: idx.len(),
            n_cols: d,
            data,
        }
    }

    pub fn to_matrix(&self) -> FeatureMatrix {
        let all: Vec<usize> = (0..self.n_obs()).collect();
        self.rows(&all)
    }

    /// Dataset restricted to the given observations, with the same columns.
    /// Columns that become constant in the subset are kept so that variable
    /// indices stay aligned with the parent.
    pub fn subset(&self, idx: &[usize]) -> Result<Self, DatasetError> {
        let labels: Vec<u8> = idx.iter().map(|&i| self.labels[i]).collect();
        let actives = labels.iter().filter(|&&y| y == 1).count();
        if actives == 0 || actives == labels.len() {
            return Err(DatasetError::SingleClass {
                n_obs: labels.len(),
                actives,
            });
        }
        Ok(Dataset {
            label_name: self.label_name.clone(),
            labels,
            features: self
                .features
                .iter()
                .map(|col| idx.iter().map(|&i| col[i]).collect())
                .collect(),
            columns: self.columns.clone(),
            ids: self
                .ids
                .as_ref()
                .map(|ids| idx.iter().map(|&i| ids[i].clone()).collect()),
        })
    }

    /// Same features with replaced labels (used for permutation checks).
    pub fn with_labels(&self, labels: Vec<u8>) -> Result<Self, DatasetError> {
        let mut ds = self.clone();
        ds.labels = labels;
        if ds.labels.len() != self.labels.len() {
            return Err(DatasetError::LengthMismatch {
                column: self.label_name.clone(),
                expected: self.labels.len(),
                found: ds.labels.len(),
            });
        }
        let actives = ds.n_active();
        if ds.labels.iter().any(|&y| y > 1) || actives == 0 || actives == ds.n_obs() {
            return Err(DatasetError::SingleClass {
                n_obs: ds.n_obs(),
                actives,
            });
        }
        Ok(ds)
    }
}

fn is_constant(values: &[f64]) -> bool {
    match values.first() {
        None => true,
        Some(&first) => values.iter().all(|&v| v == first),
    }
}

/// Dense row-major matrix used for prediction inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub n_rows: usize,
    pub n_cols: usize,
    pub data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(n_rows: usize, n_cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), n_rows * n_cols, "matrix data length");
        FeatureMatrix {
            n_rows,
            n_cols,
            data,
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }
}
