//! Self-describing JSON for tree ensembles. Trees are nested node objects;
//! floats are written in shortest round-trip form so reloading is exact.

use std::path::Path;

use iqp_core::gbdt::{Hyperparameters, Node, NodeKind, Tree, TreeEnsemble};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FORMAT: &str = "iqp-gbdt-json";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum JsonNode {
    Split {
        feature: usize,
        threshold: f64,
        cover: f64,
        left: Box<JsonNode>,
        right: Box<JsonNode>,
    },
    Leaf {
        leaf: f64,
        cover: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDocument {
    pub format: String,
    pub version: u32,
    pub base_score: f64,
    pub hyperparameters: Hyperparameters,
    pub feature_names: Vec<String>,
    pub trees: Vec<JsonNode>,
}

fn to_json(tree: &Tree, i: usize) -> JsonNode {
    let node = tree.nodes[i];
    match node.kind {
        NodeKind::Leaf { value } => JsonNode::Leaf {
            leaf: value,
            cover: node.cover,
        },
        NodeKind::Split {
            feature,
            threshold,
            left,
            right,
        } => JsonNode::Split {
            feature,
            threshold,
            cover: node.cover,
            left: Box::new(to_json(tree, left)),
            right: Box::new(to_json(tree, right)),
        },
    }
}

/// Rebuilds the arena breadth-first, the order the trainer grows trees in.
fn from_json(root: &JsonNode) -> Tree {
    let mut nodes = Vec::new();
    let mut queue = std::collections::VecDeque::from([(root, None::<(usize, bool)>)]);
    while let Some((node, parent)) = queue.pop_front() {
        let at = nodes.len();
        match node {
            JsonNode::Leaf { leaf, cover } => nodes.push(Node::leaf(*leaf, *cover)),
            JsonNode::Split {
                feature,
                threshold,
                cover,
                left,
                right,
            } => {
                nodes.push(Node::split(*feature, *threshold, usize::MAX, usize::MAX, *cover));
                queue.push_back((left, Some((at, true))));
                queue.push_back((right, Some((at, false))));
            }
        }
        if let Some((p, is_left)) = parent {
            if let NodeKind::Split { left, right, .. } = &mut nodes[p].kind {
                *(if is_left { left } else { right }) = at;
            }
        }
    }
    Tree { nodes }
}

impl ModelDocument {
    pub fn from_ensemble(e: &TreeEnsemble) -> Self {
        Self {
            format: FORMAT.into(),
            version: VERSION,
            base_score: e.base_score,
            hyperparameters: e.hyperparameters,
            feature_names: e.feature_names.clone(),
            trees: e.trees.iter().map(|t| to_json(t, 0)).collect(),
        }
    }

    pub fn into_ensemble(self) -> Result<TreeEnsemble> {
        if self.format != FORMAT || self.version != VERSION {
            return Err(Error::format(
                "<model>",
                format!("unsupported model format {} v{}", self.format, self.version),
            ));
        }
        let trees = self.trees.iter().map(from_json).collect();
        let e = TreeEnsemble {
            trees,
            base_score: self.base_score,
            hyperparameters: self.hyperparameters,
            feature_names: self.feature_names,
        };
        e.validate()?;
        Ok(e)
    }
}

pub fn to_string(e: &TreeEnsemble) -> String {
    let mut s = serde_json::to_string_pretty(&ModelDocument::from_ensemble(e)).expect("model serializes");
    s.push('\n');
    s
}

pub fn from_str(s: &str) -> Result<TreeEnsemble> {
    let doc: ModelDocument = serde_json::from_str(s).map_err(|e| Error::format("<model>", e))?;
    doc.into_ensemble()
}

pub fn load(path: &Path) -> Result<TreeEnsemble> {
    let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_str(&s).map_err(|e| match e {
        Error::Format { message, .. } => Error::format(path, message),
        e => e,
    })
}
