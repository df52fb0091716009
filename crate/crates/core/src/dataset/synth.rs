//! Planted-signal generator with several independent mechanisms of activity.
//!
//! Labels are drawn first: exactly `round(n_obs * active_fraction)` actives
//! at random positions, dealt round-robin to the informative blocks. Each
//! block's variables are elevated only for the actives of its own mechanism,
//! so every block explains a disjoint subset of the actives.

use super::{Dataset, DatasetError, VariableKind, VariableMeta};
use crate::seed;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SynthKind {
    Binary,
    Continuous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_obs: usize,
    pub active_fraction: f64,
    /// Variables per informative block.
    pub block_size: usize,
    /// Effect strength of each informative block; its length is the number
    /// of blocks. Binary: probability of a 1 for the block's own actives is
    /// `base_rate + s * (1 - base_rate)`. Continuous: mean shift of `s`
    /// standard deviations.
    pub block_strengths: Vec<f64>,
    pub n_noise: usize,
    /// Noise variables are named in families of this size.
    pub noise_group_size: usize,
    /// Probability of a 1 for any binary variable outside its mechanism.
    pub base_rate: f64,
    pub kind: SynthKind,
}

impl SynthSpec {
    /// Binary blocks that all share one strength.
    pub fn binary(
        n_obs: usize,
        active_fraction: f64,
        n_blocks: usize,
        block_size: usize,
        n_noise: usize,
        strength: f64,
    ) -> Self {
        SynthSpec {
            n_obs,
            active_fraction,
            block_size,
            block_strengths: vec![strength; n_blocks],
            n_noise,
            noise_group_size: block_size.max(1),
            base_rate: 0.1,
            kind: SynthKind::Binary,
        }
    }

    pub fn n_blocks(&self) -> usize {
        self.block_strengths.len()
    }

    pub fn n_active(&self) -> usize {
        (self.n_obs as f64 * self.active_fraction).round() as usize
    }
}

/// Ground truth recorded alongside a synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthTruth {
    /// Column indices of each informative block.
    pub blocks: Vec<Vec<usize>>,
    /// Column indices of the noise variables.
    pub noise: Vec<usize>,
    /// For every observation, the block whose mechanism made it active.
    pub mechanism: Vec<Option<usize>>,
}

#[derive(Debug, Clone)]
pub struct SynthData {
    pub dataset: Dataset,
    pub truth: SynthTruth,
}

fn letters(mut i: usize) -> String {
    let mut out = Vec::new();
    loop {
        out.push(b'A' + (i % 26) as u8);
        if i < 26 {
            break;
        }
        i = i / 26 - 1;
    }
    out.reverse();
    String::from_utf8(out).expect("ascii")
}

fn standard_normal<R: Rng>(rng: &mut R) -> f64 {
    // Box-Muller; u1 in (0, 1] keeps the log finite.
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

pub fn synth_generate(spec: &SynthSpec, seed_value: u64) -> Result<SynthData, DatasetError> {
    let n = spec.n_obs;
    let m = spec.n_active();
    if n < 2 {
        return Err(DatasetError::InfeasibleSpec("need at least 2 observations".into()));
    }
    if m == 0 {
        return Err(DatasetError::InfeasibleSpec(format!(
            "{} x {} rounds to zero actives",
            n, spec.active_fraction
        )));
    }
    if m >= n {
        return Err(DatasetError::InfeasibleSpec("no inactive observations".into()));
    }
    let n_blocks = spec.n_blocks();
    if n_blocks * spec.block_size + spec.n_noise == 0 {
        return Err(DatasetError::InfeasibleSpec("no variables".into()));
    }
    if !(0.0..1.0).contains(&spec.base_rate) || spec.base_rate == 0.0 {
        return Err(DatasetError::InfeasibleSpec("base_rate must lie in (0, 1)".into()));
    }
    if spec.kind == SynthKind::Binary && spec.block_strengths.iter().any(|s| !(0.0..=1.0).contains(s)) {
        return Err(DatasetError::InfeasibleSpec(
            "binary block strengths must lie in [0, 1]".into(),
        ));
    }

    let mut label_rng = seed::rng(seed::mix(seed_value, 0));
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut label_rng);
    let mut labels = vec![0u8; n];
    let mut mechanism = vec![None; n];
    for (k, &i) in order[..m].iter().enumerate() {
        labels[i] = 1;
        if n_blocks > 0 {
            mechanism[i] = Some(k % n_blocks);
        }
    }

    let mut features = Vec::new();
    let mut columns = Vec::new();
    let mut blocks = Vec::new();
    let mut noise = Vec::new();

    let mut push_column = |name: String, block: Option<usize>, features: &mut Vec<Vec<f64>>| {
        let j = features.len();
        let mut rng = seed::rng(seed::mix(seed::mix(seed_value, 1), j as u64));
        let strength = block.map(|b| spec.block_strengths[b]).unwrap_or(0.0);
        let mut values: Vec<f64> = (0..n)
            .map(|i| {
                let elevated = block.is_some() && mechanism[i] == block;
                match spec.kind {
                    SynthKind::Binary => {
                        let p = if elevated {
                            spec.base_rate + strength * (1.0 - spec.base_rate)
                        } else {
                            spec.base_rate
                        };
                        if rng.gen::<f64>() < p {
                            1.0
                        } else {
                            0.0
                        }
                    }
                    SynthKind::Continuous => {
                        let z = standard_normal(&mut rng);
                        if elevated {
                            z + strength
                        } else {
                            z
                        }
                    }
                }
            })
            .collect();
        if values.iter().all(|&v| v == values[0]) {
            // keep every planted column usable; flip one deterministic cell
            let i = (j * 7919) % n;
            values[i] = match spec.kind {
                SynthKind::Binary => 1.0 - values[i],
                SynthKind::Continuous => values[i] + 1.0,
            };
        }
        features.push(values);
        columns.push(VariableMeta {
            name,
            kind: match spec.kind {
                SynthKind::Binary => VariableKind::Binary,
                SynthKind::Continuous => VariableKind::Continuous,
            },
            original_index: j,
        });
        j
    };

    for b in 0..n_blocks {
        let tag = letters(b);
        let block: Vec<usize> = (0..spec.block_size)
            .map(|v| push_column(format!("SIG{tag}_{:02}", v + 1), Some(b), &mut features))
            .collect();
        blocks.push(block);
    }
    let group = spec.noise_group_size.max(1);
    for v in 0..spec.n_noise {
        let tag = letters(v / group);
        noise.push(push_column(
            format!("NOI{tag}_{:02}", v % group + 1),
            None,
            &mut features,
        ));
    }

    let dataset = Dataset::new(labels, features, columns)?;
    Ok(SynthData {
        dataset,
        truth: SynthTruth {
            blocks,
            noise,
            mechanism,
        },
    })
}
