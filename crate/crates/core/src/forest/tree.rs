//! Classification trees grown on a bootstrap sample with Gini splits.

use crate::dataset::{Dataset, VariableKind};
use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    /// Observations with `x[var] <= threshold` go left.
    #[serde(rename = "s")]
    Split {
        var: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    /// In-bag class counts (bootstrap multiplicity included).
    #[serde(rename = "l")]
    Leaf { n0: u32, n1: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    /// Builds a tree from explicit nodes; node 0 is the root.
    pub fn from_nodes(nodes: Vec<Node>) -> Self {
        assert!(!nodes.is_empty(), "a tree needs a root");
        Tree { nodes }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn leaf_for(&self, value: impl Fn(usize) -> f64) -> (u32, u32) {
        let mut k = 0;
        loop {
            match self.nodes[k] {
                Node::Split {
                    var,
                    threshold,
                    left,
                    right,
                } => k = if value(var) <= threshold { left } else { right },
                Node::Leaf { n0, n1 } => return (n0, n1),
            }
        }
    }

    /// Class-1 proportion of the leaf reached by the given observation.
    pub fn predict(&self, value: impl Fn(usize) -> f64) -> f64 {
        let (n0, n1) = self.leaf_for(value);
        let total = n0 + n1;
        if total == 0 {
            0.0
        } else {
            n1 as f64 / total as f64
        }
    }

    pub fn split_vars(&self) -> impl Iterator<Item = usize> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            Node::Split { var, .. } => Some(*var),
            Node::Leaf { .. } => None,
        })
    }

    pub fn max_var(&self) -> Option<usize> {
        self.split_vars().max()
    }
}

/// Best split found for one node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitChoice {
    pub var: usize,
    pub threshold: f64,
    pub decrease: f64,
}

/// Weighted Gini impurity `n * (1 - p0^2 - p1^2)` of a node with counts.
pub fn weighted_gini(n0: f64, n1: f64) -> f64 {
    let n = n0 + n1;
    if n == 0.0 {
        0.0
    } else {
        n - (n0 * n0 + n1 * n1) / n
    }
}

const MIN_DECREASE: f64 = 1e-10;

/// Best Gini split among `candidates` (ascending variable order) for the
/// samples in `rows`. Ties keep the first split met: lowest variable, then
/// lowest threshold. Returns `None` when no split strictly reduces impurity.
pub fn best_split(
    ds: &Dataset,
    rows: &[usize],
    candidates: &[usize],
    scratch: &mut Vec<(f64, u8)>,
) -> Option<SplitChoice> {
    let labels = ds.labels();
    let n1_total = rows.iter().filter(|&&i| labels[i] == 1).count() as f64;
    let n0_total = rows.len() as f64 - n1_total;
    let parent = weighted_gini(n0_total, n1_total);
    let mut best: Option<SplitChoice> = None;
    let mut consider = |var: usize, threshold: f64, l0: f64, l1: f64| {
        let decrease = parent - weighted_gini(l0, l1) - weighted_gini(n0_total - l0, n1_total - l1);
        if decrease > MIN_DECREASE && best.is_none_or(|b| decrease > b.decrease) {
            best = Some(SplitChoice {
                var,
                threshold,
                decrease,
            });
        }
    };
    for &var in candidates {
        let col = ds.column(var);
        match ds.columns()[var].kind {
            VariableKind::Binary => {
                let mut l0 = 0.0;
                let mut l1 = 0.0;
                for &i in rows {
                    if col[i] == 0.0 {
                        if labels[i] == 1 {
                            l1 += 1.0;
                        } else {
                            l0 += 1.0;
                        }
                    }
                }
                let left = l0 + l1;
                if left > 0.0 && left < rows.len() as f64 {
                    consider(var, 0.5, l0, l1);
                }
            }
            VariableKind::Continuous => {
                scratch.clear();
                scratch.extend(rows.iter().map(|&i| (col[i], labels[i])));
                scratch.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
                let mut l0 = 0.0;
                let mut l1 = 0.0;
                for k in 0..scratch.len() - 1 {
                    if scratch[k].1 == 1 {
                        l1 += 1.0;
                    } else {
                        l0 += 1.0;
                    }
                    let (lo, hi) = (scratch[k].0, scratch[k + 1].0);
                    if lo < hi {
                        let mid = lo + (hi - lo) / 2.0;
                        let threshold = if mid < hi { mid } else { lo };
                        consider(var, threshold, l0, l1);
                    }
                }
            }
        }
    }
    best
}

pub(crate) struct GrowParams<'a> {
    pub subset: &'a [usize],
    pub mtry: usize,
    pub min_node_size: usize,
}

/// Grows one tree on a with-replacement bootstrap of size `n_obs`.
/// Returns the tree and the per-observation in-bag counts.
pub(crate) fn grow_tree<R: Rng>(ds: &Dataset, params: &GrowParams<'_>, rng: &mut R) -> (Tree, Vec<u32>) {
    let n = ds.n_obs();
    let mut inbag = vec![0u32; n];
    let mut sample: Vec<usize> = Vec::with_capacity(n);
    for _ in 0..n {
        let i = rng.gen_range(0..n);
        inbag[i] += 1;
        sample.push(i);
    }
    sample.sort_unstable();

    let labels = ds.labels();
    let mut nodes: Vec<Node> = vec![Node::Leaf { n0: 0, n1: 0 }];
    let mut stack: Vec<(usize, Vec<usize>)> = vec![(0, sample)];
    let mut scratch = Vec::new();
    let mut candidates = Vec::with_capacity(params.mtry);
    while let Some((slot, rows)) = stack.pop() {
        let n1 = rows.iter().filter(|&&i| labels[i] == 1).count() as u32;
        let n0 = rows.len() as u32 - n1;
        let leaf = Node::Leaf { n0, n1 };
        if n0 == 0 || n1 == 0 || rows.len() <= params.min_node_size {
            nodes[slot] = leaf;
            continue;
        }
        candidates.clear();
        candidates.extend(
            index::sample(rng, params.subset.len(), params.mtry)
                .into_iter()
                .map(|k| params.subset[k]),
        );
        candidates.sort_unstable();
        let Some(split) = best_split(ds, &rows, &candidates, &mut scratch) else {
            nodes[slot] = leaf;
            continue;
        };
        let col = ds.column(split.var);
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
            rows.into_iter().partition(|&i| col[i] <= split.threshold);
        let left = nodes.len();
        let right = left + 1;
        nodes.push(Node::Leaf { n0: 0, n1: 0 });
        nodes.push(Node::Leaf { n0: 0, n1: 0 });
        nodes[slot] = Node::Split {
            var: split.var,
            threshold: split.threshold,
            left,
            right,
        };
        stack.push((right, right_rows));
        stack.push((left, left_rows));
    }
    (Tree { nodes }, inbag)
}
