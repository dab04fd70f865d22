use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::{stats, Error, Result};

/// Tunable training parameters. `lambda` is the L2 penalty on leaf values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub max_depth: usize,
    pub learning_rate: f64,
    pub gamma: f64,
    pub min_child_weight: f64,
    pub n_estimators: usize,
    pub lambda: f64,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Self {
            max_depth: 6,
            learning_rate: 0.3,
            gamma: 0.0,
            min_child_weight: 1.0,
            n_estimators: 100,
            lambda: 1.0,
        }
    }
}

impl Hyperparameters {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidHyperparameter(msg));
        if self.max_depth < 1 {
            return bad(format!("max_depth must be >= 1, got {}", self.max_depth));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return bad(format!("learning_rate must lie in (0, 1], got {}", self.learning_rate));
        }
        if !(self.gamma >= 0.0) || !self.gamma.is_finite() {
            return bad(format!("gamma must be >= 0, got {}", self.gamma));
        }
        if !(self.min_child_weight >= 0.0) || !self.min_child_weight.is_finite() {
            return bad(format!("min_child_weight must be >= 0, got {}", self.min_child_weight));
        }
        if self.n_estimators < 1 {
            return bad(format!("n_estimators must be >= 1, got {}", self.n_estimators));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return bad(format!("lambda must be >= 0, got {}", self.lambda));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum NodeKind {
    /// Rows with `x[feature] < threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub kind: NodeKind,
    /// Number of training rows that reached the node.
    pub cover: f64,
}

impl Node {
    pub fn leaf(value: f64, cover: f64) -> Self {
        Self {
            kind: NodeKind::Leaf { value },
            cover,
        }
    }

    pub fn split(feature: usize, threshold: f64, left: usize, right: usize, cover: f64) -> Self {
        Self {
            kind: NodeKind::Split {
                feature,
                threshold,
                left,
                right,
            },
            cover,
        }
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self.kind, NodeKind::Leaf { .. })
    }
}

/// Binary tree stored as an arena with the root at index 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn single_leaf(value: f64, cover: f64) -> Self {
        Self {
            nodes: alloc::vec![Node::leaf(value, cover)],
        }
    }

    /// Index of the leaf `x` routes to.
    pub fn leaf_index(&self, x: &[f64]) -> usize {
        let mut i = 0;
        loop {
            match self.nodes[i].kind {
                NodeKind::Leaf { .. } => return i,
                NodeKind::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] < threshold { left } else { right },
            }
        }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        match self.nodes[self.leaf_index(x)].kind {
            NodeKind::Leaf { value } => value,
            NodeKind::Split { .. } => unreachable!("leaf_index returns a leaf"),
        }
    }

    /// Number of edges on the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        fn go(t: &Tree, i: usize) -> usize {
            match t.nodes[i].kind {
                NodeKind::Leaf { .. } => 0,
                NodeKind::Split { left, right, .. } => 1 + go(t, left).max(go(t, right)),
            }
        }
        go(self, 0)
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_leaf()).count()
    }

    /// Features used by at least one split.
    pub fn split_features(&self) -> impl Iterator<Item = usize> + '_ {
        self.nodes.iter().filter_map(|n| match n.kind {
            NodeKind::Split { feature, .. } => Some(feature),
            NodeKind::Leaf { .. } => None,
        })
    }

    /// Cover-weighted mean leaf value.
    pub fn expected_value(&self) -> f64 {
        fn go(t: &Tree, i: usize) -> f64 {
            let node = &t.nodes[i];
            match node.kind {
                NodeKind::Leaf { value } => value,
                NodeKind::Split { left, right, .. } => {
                    (t.nodes[left].cover * go(t, left) + t.nodes[right].cover * go(t, right)) / node.cover
                }
            }
        }
        go(self, 0)
    }

    /// Checks child indices, positive covers, finite leaves and cover additivity.
    pub fn validate(&self, n_features: usize) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::MissingCover(0));
        }
        for (i, node) in self.nodes.iter().enumerate() {
            if !(node.cover > 0.0) || !node.cover.is_finite() {
                return Err(Error::MissingCover(i));
            }
            match node.kind {
                NodeKind::Leaf { value } => {
                    if !value.is_finite() {
                        return Err(Error::NonFiniteInput(value));
                    }
                }
                NodeKind::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    if feature >= n_features {
                        return Err(Error::UnknownFeature(feature));
                    }
                    if left <= i || right <= i || left >= self.nodes.len() || right >= self.nodes.len() {
                        return Err(Error::DegenerateData(format!("node {i} has invalid children")));
                    }
                    if threshold.is_nan() {
                        return Err(Error::NonFiniteInput(threshold));
                    }
                    let sum = self.nodes[left].cover + self.nodes[right].cover;
                    if (sum - node.cover).abs() > 1e-9 * node.cover.max(1.0) {
                        return Err(Error::DegenerateData(format!(
                            "node {i} cover {} != children {}",
                            node.cover, sum
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Additive tree model on the log-odds scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeEnsemble {
    pub trees: Vec<Tree>,
    pub base_score: f64,
    pub hyperparameters: Hyperparameters,
    pub feature_names: Vec<String>,
}

impl TreeEnsemble {
    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    fn check(&self, x: &[f64], row: usize) -> Result<()> {
        if x.len() != self.n_features() {
            return Err(Error::LengthMismatch {
                left: x.len(),
                right: self.n_features(),
            });
        }
        if let Some(feature) = x.iter().position(|v| v.is_nan()) {
            return Err(Error::NaNFeature { row, feature });
        }
        Ok(())
    }

    /// `base_score` plus the routed leaf value of every tree.
    pub fn predict_margin(&self, x: &[f64]) -> Result<f64> {
        self.check(x, 0)?;
        Ok(self.margin_unchecked(x))
    }

    pub(crate) fn margin_unchecked(&self, x: &[f64]) -> f64 {
        self.base_score + self.trees.iter().map(|t| t.predict(x)).sum::<f64>()
    }

    pub fn predict_proba(&self, x: &[f64]) -> Result<f64> {
        self.predict_margin(x).map(stats::sigmoid)
    }

    /// Class 1 iff the predicted probability exceeds 0.5.
    pub fn classify(&self, x: &[f64]) -> Result<u8> {
        self.predict_margin(x).map(|m| u8::from(m > 0.0))
    }

    pub fn predict_margins(&self, x: &crate::Matrix) -> Result<Vec<f64>> {
        x.iter_rows()
            .enumerate()
            .map(|(i, row)| {
                self.check(row, i)?;
                Ok(self.margin_unchecked(row))
            })
            .collect()
    }

    pub fn classify_all(&self, x: &crate::Matrix) -> Result<Vec<u8>> {
        Ok(self
            .predict_margins(x)?
            .into_iter()
            .map(|m| u8::from(m > 0.0))
            .collect())
    }

    /// Expected margin under the cover-weighted path distribution.
    pub fn expected_margin(&self) -> f64 {
        self.base_score + self.trees.iter().map(Tree::expected_value).sum::<f64>()
    }

    pub fn validate(&self) -> Result<()> {
        self.hyperparameters.validate()?;
        if !self.base_score.is_finite() {
            return Err(Error::NonFiniteInput(self.base_score));
        }
        self.trees.iter().try_for_each(|t| t.validate(self.n_features()))
    }
}
