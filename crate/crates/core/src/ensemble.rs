//! Final ensemble of phalanxes: one forest per phalanx, probabilities
//! averaged without weights.

use crate::dataset::{Dataset, FeatureMatrix};
use crate::forest::{self, Forest, ForestConfig, ForestError};
use crate::formation::{FormationResult, StageCounts};
use crate::seed;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::path::Path;
use thiserror::Error;

/// Version written to and required from model files.
pub const MODEL_FORMAT_VERSION: u32 = 1;
const FORMAT_NAME: &str = "epx-model";

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("no phalanxes")]
    NoPhalanxes,
    #[error("phalanx {0} is empty")]
    EmptyPhalanx(usize),
    #[error("variable {0} appears in more than one phalanx")]
    Overlap(usize),
    #[error("phalanx {phalanx} references variable {var}, dataset has {n_vars}")]
    BadIndex {
        phalanx: usize,
        var: usize,
        n_vars: usize,
    },
    #[error(transparent)]
    Forest(#[from] ForestError),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse model file: {0}")]
    Parse(String),
    #[error("unsupported model format version {found} (this build reads version {expected})")]
    UnsupportedVersion { found: u64, expected: u32 },
    #[error("feature table lacks column `{0}` required by the model")]
    MissingFeature(String),
    #[error("feature table: {0}")]
    Features(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainMeta {
    pub n_obs: usize,
    pub n_active: usize,
    pub prevalence: f64,
    pub forest: ForestConfig,
}

/// Summary of the formation run that produced the phalanxes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormationAudit {
    pub counts: StageCounts,
    pub fit_counter: usize,
    pub a_median: f64,
    pub a_quantile: f64,
    pub merges: usize,
}

impl From<&FormationResult> for FormationAudit {
    fn from(r: &FormationResult) -> Self {
        FormationAudit {
            counts: r.counts,
            fit_counter: r.fit_counter,
            a_median: r.a_median,
            a_quantile: r.a_quantile,
            merges: r.merge_trace.events.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpxModel {
    format: String,
    format_version: u32,
    /// Training columns, in the order forests index them.
    feature_names: Vec<String>,
    phalanxes: Vec<Vec<usize>>,
    phalanx_names: Vec<Vec<String>>,
    train: TrainMeta,
    formation: Option<FormationAudit>,
    forests: Vec<Forest>,
}

pub(crate) fn validate_phalanxes(phalanxes: &[Vec<usize>], n_vars: usize) -> Result<Vec<Vec<usize>>, ModelError> {
    if phalanxes.is_empty() {
        return Err(ModelError::NoPhalanxes);
    }
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(phalanxes.len());
    for (k, px) in phalanxes.iter().enumerate() {
        if px.is_empty() {
            return Err(ModelError::EmptyPhalanx(k));
        }
        let mut px = px.clone();
        px.sort_unstable();
        for &v in &px {
            if v >= n_vars {
                return Err(ModelError::BadIndex {
                    phalanx: k,
                    var: v,
                    n_vars,
                });
            }
            if !seen.insert(v) {
                return Err(ModelError::Overlap(v));
            }
        }
        out.push(px);
    }
    Ok(out)
}

/// Fits one forest per phalanx; phalanx `k` uses seed `mix(config.seed, k)`.
pub fn fit_epx(ds: &Dataset, phalanxes: &[Vec<usize>], config: &ForestConfig) -> Result<EpxModel, ModelError> {
    let phalanxes = validate_phalanxes(phalanxes, ds.n_vars())?;
    let forests = phalanxes
        .iter()
        .enumerate()
        .map(|(k, px)| {
            let cfg = ForestConfig {
                seed: seed::mix(config.seed, k as u64),
                ..*config
            };
            forest::fit(ds, px, &cfg)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let names = ds.names();
    Ok(EpxModel {
        format: FORMAT_NAME.to_string(),
        format_version: MODEL_FORMAT_VERSION,
        feature_names: names.iter().map(|s| s.to_string()).collect(),
        phalanx_names: phalanxes
            .iter()
            .map(|px| px.iter().map(|&v| names[v].to_string()).collect())
            .collect(),
        phalanxes,
        train: TrainMeta {
            n_obs: ds.n_obs(),
            n_active: ds.n_active(),
            prevalence: ds.prevalence(),
            forest: *config,
        },
        formation: None,
        forests,
    })
}

impl EpxModel {
    pub fn with_formation(mut self, audit: FormationAudit) -> Self {
        self.formation = Some(audit);
        self
    }

    pub fn phalanxes(&self) -> &[Vec<usize>] {
        &self.phalanxes
    }

    pub fn phalanx_names(&self) -> &[Vec<String>] {
        &self.phalanx_names
    }

    pub fn forests(&self) -> &[Forest] {
        &self.forests
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn train_meta(&self) -> &TrainMeta {
        &self.train
    }

    pub fn formation(&self) -> Option<&FormationAudit> {
        self.formation.as_ref()
    }

    pub fn len(&self) -> usize {
        self.forests.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forests.is_empty()
    }

    /// Per-member probabilities, one vector per phalanx.
    pub fn member_predictions(&self, x: &FeatureMatrix) -> Result<Vec<Vec<f64>>, ModelError> {
        Ok(self
            .forests
            .iter()
            .map(|f| f.predict_proba(x))
            .collect::<Result<Vec<_>, _>>()?)
    }

    /// Columns the phalanxes use, by name.
    pub fn used_features(&self) -> Vec<&str> {
        let mut used: Vec<usize> = self.phalanxes.iter().flatten().copied().collect();
        used.sort_unstable();
        used.iter().map(|&v| self.feature_names[v].as_str()).collect()
    }

    /// Builds a prediction matrix in training column order from a table with
    /// named columns. Columns the model never reads may be absent.
    pub fn align_features(&self, header: &[String], rows: &[Vec<f64>]) -> Result<FeatureMatrix, ModelError> {
        let d = self.feature_names.len();
        let mut source = vec![None; d];
        for name in self.used_features() {
            let pos = header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| ModelError::MissingFeature(name.to_string()))?;
            let j = self
                .feature_names
                .iter()
                .position(|f| f == name)
                .expect("used feature is a training column");
            source[j] = Some(pos);
        }
        let mut data = Vec::with_capacity(rows.len() * d);
        for (r, row) in rows.iter().enumerate() {
            if row.len() != header.len() {
                return Err(ModelError::Features(format!(
                    "row {} has {} values, header has {}",
                    r + 1,
                    row.len(),
                    header.len()
                )));
            }
            data.extend(source.iter().map(|s| s.map_or(f64::NAN, |p| row[p])));
        }
        Ok(FeatureMatrix::new(rows.len(), d, data))
    }
}

/// Unweighted mean of the member forests' probabilities.
pub fn predict_epx(model: &EpxModel, x: &FeatureMatrix) -> Result<Vec<f64>, ModelError> {
    let members = model.member_predictions(x)?;
    let p = members.len() as f64;
    Ok((0..x.n_rows)
        .map(|i| members.iter().map(|m| m[i]).sum::<f64>() / p)
        .collect())
}

pub fn to_json(model: &EpxModel) -> String {
    serde_json::to_string(model).expect("model serialises")
}

pub fn from_json(text: &str) -> Result<EpxModel, ModelError> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| ModelError::Parse(e.to_string()))?;
    match value.get("format").and_then(|v| v.as_str()) {
        Some(FORMAT_NAME) => {}
        _ => return Err(ModelError::Parse(format!("missing `format: {FORMAT_NAME}` marker"))),
    }
    let version = value
        .get("format_version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| ModelError::Parse("missing format_version".into()))?;
    if version != u64::from(MODEL_FORMAT_VERSION) {
        return Err(ModelError::UnsupportedVersion {
            found: version,
            expected: MODEL_FORMAT_VERSION,
        });
    }
    let model: EpxModel = serde_json::from_value(value).map_err(|e| ModelError::Parse(e.to_string()))?;
    if model.forests.len() != model.phalanxes.len() {
        return Err(ModelError::Parse("forest and phalanx counts differ".into()));
    }
    validate_phalanxes(&model.phalanxes, model.feature_names.len())?;
    Ok(model)
}

pub fn save_model(model: &EpxModel, path: &Path) -> Result<(), ModelError> {
    std::fs::write(path, to_json(model)).map_err(|source| ModelError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_model(path: &Path) -> Result<EpxModel, ModelError> {
    let text = std::fs::read_to_string(path).map_err(|source| ModelError::Io {
        path: path.display().to_string(),
        source,
    })?;
    from_json(&text)
}
