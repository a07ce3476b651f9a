//! Random forest of axis-aligned Gini trees.

use rand::seq::index::sample;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{argmax, binary_classes, check_lengths, common_dim, encode, Prediction};
use crate::error::{Error, Result};
use crate::features::FeatureVector;
use crate::rng::seeded;
use crate::rules::ClassLabel;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RfHyper {
    pub n_trees: usize,
    /// `None` grows trees until leaves are pure or unsplittable.
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    /// Features examined per split; `None` means `ceil(sqrt(dim))`.
    pub features_per_split: Option<usize>,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for RfHyper {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: None,
            min_leaf: 1,
            features_per_split: None,
            bootstrap: true,
            seed: 1,
        }
    }
}

/// Tree nodes in a flat arena; node 0 is the root.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "lowercase")]
pub enum Node {
    Leaf {
        counts: [usize; 2],
    },
    Split {
        feature: usize,
        /// Instances with `x[feature] <= threshold` go left.
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    fn leaf_counts(&self, x: &[f64]) -> [usize; 2] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { counts } => return *counts,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn vote(&self, x: &[f64]) -> usize {
        let c = self.leaf_counts(x);
        argmax(&[c[0] as f64, c[1] as f64])
    }

    pub fn depth(&self) -> usize {
        let mut deepest = 0;
        let mut stack = vec![(0usize, 0usize)];
        while let Some((i, d)) = stack.pop() {
            deepest = deepest.max(d);
            if let Node::Split { left, right, .. } = &self.nodes[i] {
                stack.push((*left, d + 1));
                stack.push((*right, d + 1));
            }
        }
        deepest
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RfModel {
    pub trees: Vec<Tree>,
    pub classes: [ClassLabel; 2],
    pub dim: usize,
    pub hyper: RfHyper,
}

/// Gini impurity of a two-class count vector.
pub fn gini(counts: [usize; 2]) -> f64 {
    let n = (counts[0] + counts[1]) as f64;
    if n == 0.0 {
        return 0.0;
    }
    let p = counts[0] as f64 / n;
    1.0 - p * p - (1.0 - p) * (1.0 - p)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SplitChoice {
    pub feature: usize,
    pub threshold: f64,
    /// Size-weighted Gini impurity of the two children.
    pub weighted_impurity: f64,
    pub gain: f64,
}

/// Best split of the rows `idx` over `features` (examined in the given
/// order). Thresholds are midpoints between consecutive distinct values.
/// Ties in gain go to the earlier feature, then the lower threshold.
pub fn best_split(
    x: &[Vec<f64>],
    y: &[usize],
    idx: &[usize],
    features: &[usize],
    min_leaf: usize,
) -> Option<SplitChoice> {
    let n = idx.len();
    let mut total = [0usize; 2];
    for &i in idx {
        total[y[i]] += 1;
    }
    let parent = gini(total);
    let mut best: Option<SplitChoice> = None;
    let mut sorted: Vec<(f64, usize)> = Vec::with_capacity(n);
    for &f in features {
        sorted.clear();
        sorted.extend(idx.iter().map(|&i| (x[i][f], y[i])));
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut left = [0usize; 2];
        for k in 0..n.saturating_sub(1) {
            left[sorted[k].1] += 1;
            let (a, b) = (sorted[k].0, sorted[k + 1].0);
            if a == b {
                continue;
            }
            let n_left = k + 1;
            if n_left < min_leaf || n - n_left < min_leaf {
                continue;
            }
            let right = [total[0] - left[0], total[1] - left[1]];
            let weighted = (n_left as f64 * gini(left) + (n - n_left) as f64 * gini(right)) / n as f64;
            let gain = parent - weighted;
            if best.as_ref().map_or(true, |s| gain > s.gain) {
                let mut threshold = a + (b - a) / 2.0;
                if threshold >= b {
                    threshold = a;
                }
                best = Some(SplitChoice {
                    feature: f,
                    threshold,
                    weighted_impurity: weighted,
                    gain,
                });
            }
        }
    }
    best
}

struct Grower<'a> {
    x: &'a [Vec<f64>],
    y: &'a [usize],
    dim: usize,
    hyper: &'a RfHyper,
    mtry: usize,
    rng: crate::rng::Rng,
    nodes: Vec<Node>,
}

impl Grower<'_> {
    /// Grow a tree over the rows `root` with an explicit work stack, so that
    /// unlimited depth cannot overflow the call stack.
    fn grow(&mut self, root: Vec<usize>) {
        self.nodes.push(Node::Leaf { counts: [0, 0] });
        let mut stack = vec![(0usize, root, 0usize)];
        while let Some((me, idx, depth)) = stack.pop() {
            let mut counts = [0usize; 2];
            for &i in &idx {
                counts[self.y[i]] += 1;
            }
            self.nodes[me] = Node::Leaf { counts };
            let at_limit = self.hyper.max_depth.is_some_and(|d| depth >= d);
            let pure = counts[0] == 0 || counts[1] == 0;
            if pure || at_limit || idx.len() < 2 * self.hyper.min_leaf {
                continue;
            }
            let mut chosen: Vec<usize> = if self.mtry >= self.dim {
                (0..self.dim).collect()
            } else {
                sample(&mut self.rng, self.dim, self.mtry).into_vec()
            };
            chosen.sort_unstable();
            let mut split = best_split(self.x, self.y, &idx, &chosen, self.hyper.min_leaf);
            if split.is_none() && chosen.len() < self.dim {
                // Every sampled feature was constant here; fall back to the rest.
                let rest: Vec<usize> = (0..self.dim).filter(|f| chosen.binary_search(f).is_err()).collect();
                split = best_split(self.x, self.y, &idx, &rest, self.hyper.min_leaf);
            }
            let Some(split) = split else { continue };
            let (l, r): (Vec<usize>, Vec<usize>) =
                idx.iter().partition(|&&i| self.x[i][split.feature] <= split.threshold);
            let left = self.nodes.len();
            let right = left + 1;
            self.nodes.push(Node::Leaf { counts: [0, 0] });
            self.nodes.push(Node::Leaf { counts: [0, 0] });
            self.nodes[me] = Node::Split {
                feature: split.feature,
                threshold: split.threshold,
                left,
                right,
            };
            stack.push((right, r, depth + 1));
            stack.push((left, l, depth + 1));
        }
    }
}

pub fn train_rf(features: &[FeatureVector], labels: &[ClassLabel], hyper: &RfHyper) -> Result<RfModel> {
    check_lengths(features.len(), labels.len())?;
    if hyper.n_trees == 0 || hyper.min_leaf == 0 || hyper.features_per_split == Some(0) {
        return Err(Error::InvalidConfig(
            "random forest needs n_trees, min_leaf and features_per_split of at least 1".into(),
        ));
    }
    let classes = binary_classes(labels)?;
    let dim = common_dim(features)?;
    if dim == 0 {
        return Err(Error::InvalidInput("random forest needs at least one feature".into()));
    }
    let x: Vec<Vec<f64>> = features.iter().map(FeatureVector::to_dense).collect();
    let y = encode(labels, &classes);
    let mtry = hyper
        .features_per_split
        .unwrap_or_else(|| (dim as f64).sqrt().ceil() as usize)
        .min(dim);
    let n = x.len();

    let trees = (0..hyper.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = seeded(hyper.seed ^ t as u64);
            let idx: Vec<usize> = if hyper.bootstrap {
                (0..n).map(|_| rng.gen_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            let mut g = Grower {
                x: &x,
                y: &y,
                dim,
                hyper,
                mtry,
                rng,
                nodes: Vec::new(),
            };
            g.grow(idx);
            Tree { nodes: g.nodes }
        })
        .collect();
    Ok(RfModel {
        trees,
        classes,
        dim,
        hyper: hyper.clone(),
    })
}

impl RfModel {
    /// Vote fractions per class; ties go to the lower class index.
    pub fn predict(&self, x: &FeatureVector) -> Result<Prediction> {
        if x.dim() != self.dim {
            return Err(Error::InvalidInput(format!(
                "feature dimension {} does not match the model's {}",
                x.dim(),
                self.dim
            )));
        }
        x.validate()?;
        let dense = x.to_dense();
        let mut votes = [0usize; 2];
        for t in &self.trees {
            votes[t.vote(&dense)] += 1;
        }
        let n = self.trees.len() as f64;
        let scores = vec![votes[0] as f64 / n, votes[1] as f64 / n];
        Ok(Prediction {
            label: self.classes[argmax(&scores)].clone(),
            scores,
        })
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.trees.is_empty() {
            return Err(Error::ModelFormat("forest has no trees".into()));
        }
        for t in &self.trees {
            for node in &t.nodes {
                match node {
                    Node::Leaf { counts } if counts[0] + counts[1] == 0 => {
                        return Err(Error::ModelFormat("empty leaf".into()));
                    }
                    Node::Split {
                        feature,
                        threshold,
                        left,
                        right,
                    } if *feature >= self.dim
                        || !threshold.is_finite()
                        || *left >= t.nodes.len()
                        || *right >= t.nodes.len() =>
                    {
                        return Err(Error::ModelFormat("malformed split node".into()));
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }
}
