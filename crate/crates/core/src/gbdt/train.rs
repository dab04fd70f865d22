use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::tree::{Hyperparameters, Node, Tree, TreeEnsemble};
use crate::{stats, Error, Matrix, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainOptions {
    /// Replaces the training-set log-odds as the initial margin.
    pub base_score: Option<f64>,
    /// Column names stored on the model; defaults to `f0, f1, ...`.
    pub feature_names: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fitted {
    pub ensemble: TreeEnsemble,
    /// Mean logistic loss on the training rows before the first tree and
    /// after each boosting round.
    pub loss_history: Vec<f64>,
}

/// Mean negative log-likelihood of labels `y` under margins `m`.
pub fn logistic_loss(margins: &[f64], y: &[u8]) -> f64 {
    let total: f64 = margins
        .iter()
        .zip(y)
        .map(|(&m, &t)| {
            // log(1 + e^m) - t*m, evaluated stably
            let softplus = if m > 0.0 {
                m + libm::log1p(libm::exp(-m))
            } else {
                libm::log1p(libm::exp(m))
            };
            softplus - f64::from(t) * m
        })
        .sum();
    total / margins.len() as f64
}

/// Trains with the default options. `seed` is accepted for interface
/// stability; exact greedy training has no random component.
pub fn train(x: &Matrix, y: &[u8], hp: &Hyperparameters, seed: u64) -> Result<TreeEnsemble> {
    let _ = seed;
    fit(x, y, hp, &TrainOptions::default()).map(|f| f.ensemble)
}

pub fn fit(x: &Matrix, y: &[u8], hp: &Hyperparameters, options: &TrainOptions) -> Result<Fitted> {
    hp.validate()?;
    let n = x.rows();
    if n != y.len() {
        return Err(Error::LengthMismatch {
            left: n,
            right: y.len(),
        });
    }
    if n < 2 {
        return Err(Error::TooFewRows { needed: 2, got: n });
    }
    if let Some(bad) = y.iter().find(|&&v| v > 1) {
        return Err(Error::InvalidHyperparameter(alloc::format!(
            "label {bad} is not binary"
        )));
    }
    for (i, row) in x.iter_rows().enumerate() {
        if let Some(feature) = row.iter().position(|v| v.is_nan()) {
            return Err(Error::NaNFeature { row: i, feature });
        }
    }
    let positives = y.iter().filter(|&&v| v == 1).count();
    let base_score = match options.base_score {
        Some(b) => b,
        None => {
            if positives == 0 || positives == n {
                return Err(Error::SingleClassTraining);
            }
            let p = positives as f64 / n as f64;
            libm::log(p / (1.0 - p))
        }
    };
    let feature_names = match &options.feature_names {
        Some(names) if names.len() == x.cols() => names.clone(),
        Some(names) => {
            return Err(Error::LengthMismatch {
                left: names.len(),
                right: x.cols(),
            })
        }
        None => (0..x.cols()).map(|j| alloc::format!("f{j}")).collect(),
    };

    let sorted = presort(x);
    let mut margins = vec![base_score; n];
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    let mut loss_history = Vec::with_capacity(hp.n_estimators + 1);
    loss_history.push(logistic_loss(&margins, y));
    let mut trees = Vec::with_capacity(hp.n_estimators);
    for _ in 0..hp.n_estimators {
        for i in 0..n {
            let p = stats::sigmoid(margins[i]);
            grad[i] = p - f64::from(y[i]);
            hess[i] = p * (1.0 - p);
        }
        let (tree, leaf_of) = grow_tree(x, &sorted, &grad, &hess, hp);
        for i in 0..n {
            if let crate::gbdt::NodeKind::Leaf { value } = tree.nodes[leaf_of[i]].kind {
                margins[i] += value;
            }
        }
        loss_history.push(logistic_loss(&margins, y));
        trees.push(tree);
    }
    Ok(Fitted {
        ensemble: TreeEnsemble {
            trees,
            base_score,
            hyperparameters: *hp,
            feature_names,
        },
        loss_history,
    })
}

/// Row indices per feature, ascending by value then by index.
fn presort(x: &Matrix) -> Vec<Vec<usize>> {
    (0..x.cols())
        .map(|j| {
            let mut idx: Vec<usize> = (0..x.rows()).collect();
            idx.sort_by(|&a, &b| x.get(a, j).total_cmp(&x.get(b, j)).then(a.cmp(&b)));
            idx
        })
        .collect()
}

/// Split-gain score term `G^2 / (H + lambda)`.
fn score(g: f64, h: f64, lambda: f64) -> f64 {
    let d = h + lambda;
    if d > 0.0 {
        g * g / d
    } else {
        0.0
    }
}

/// Loss reduction of a split, net of `gamma`.
pub(crate) fn split_gain(gl: f64, hl: f64, gr: f64, hr: f64, lambda: f64, gamma: f64) -> f64 {
    0.5 * (score(gl, hl, lambda) + score(gr, hr, lambda) - score(gl + gr, hl + hr, lambda)) - gamma
}

/// `true` when `gain` beats `best` by more than rounding noise. Candidates
/// are visited in (feature, threshold) order, so near-ties keep the earlier one.
pub(crate) fn improves(gain: f64, best: f64) -> bool {
    gain > best + 1e-12 * best.abs().max(1.0)
}

/// Threshold strictly above `lo` and at most `hi`.
pub(crate) fn midpoint(lo: f64, hi: f64) -> f64 {
    let m = lo + (hi - lo) / 2.0;
    if m > lo && m <= hi {
        m
    } else {
        hi
    }
}

#[derive(Clone, Copy)]
struct Stats {
    g: f64,
    h: f64,
    count: usize,
}

#[derive(Clone, Copy)]
struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
}

struct Open {
    node: usize,
    depth: usize,
    total: Stats,
}

fn leaf_value(s: Stats, hp: &Hyperparameters) -> f64 {
    let d = s.h + hp.lambda;
    if d > 0.0 {
        -hp.learning_rate * s.g / d
    } else {
        0.0
    }
}

/// Grows one tree level by level with exact greedy splits. Returns the tree
/// and the leaf each training row lands in.
fn grow_tree(
    x: &Matrix,
    sorted: &[Vec<usize>],
    grad: &[f64],
    hess: &[f64],
    hp: &Hyperparameters,
) -> (Tree, Vec<usize>) {
    const NONE: usize = usize::MAX;
    let n = x.rows();
    let total = Stats {
        g: grad.iter().sum(),
        h: hess.iter().sum(),
        count: n,
    };
    let mut nodes = vec![Node::leaf(0.0, n as f64)];
    let mut leaf_of = vec![0usize; n];
    // slot in `open` for every row still in an expandable node
    let mut slot = vec![0usize; n];
    let mut open = vec![Open {
        node: 0,
        depth: 0,
        total,
    }];

    while !open.is_empty() {
        let mut best: Vec<Option<Candidate>> = vec![None; open.len()];
        let expandable: Vec<bool> = open
            .iter()
            .map(|o| o.depth < hp.max_depth && o.total.count >= 2)
            .collect();
        if expandable.iter().any(|e| *e) {
            let mut left = vec![
                Stats {
                    g: 0.0,
                    h: 0.0,
                    count: 0
                };
                open.len()
            ];
            let mut last: Vec<f64> = vec![f64::NAN; open.len()];
            for (feature, order) in sorted.iter().enumerate() {
                left.iter_mut().for_each(|s| {
                    *s = Stats {
                        g: 0.0,
                        h: 0.0,
                        count: 0,
                    }
                });
                last.iter_mut().for_each(|v| *v = f64::NAN);
                for &i in order {
                    let s = slot[i];
                    if s == NONE || !expandable[s] {
                        continue;
                    }
                    let v = x.get(i, feature);
                    let l = left[s];
                    if l.count > 0 && v > last[s] {
                        let t = open[s].total;
                        let (gr, hr) = (t.g - l.g, t.h - l.h);
                        if l.h >= hp.min_child_weight && hr >= hp.min_child_weight {
                            let gain = split_gain(l.g, l.h, gr, hr, hp.lambda, hp.gamma);
                            if gain > 0.0 && best[s].is_none_or(|b| improves(gain, b.gain)) {
                                best[s] = Some(Candidate {
                                    gain,
                                    feature,
                                    threshold: midpoint(last[s], v),
                                });
                            }
                        }
                    }
                    left[s].g += grad[i];
                    left[s].h += hess[i];
                    left[s].count += 1;
                    last[s] = v;
                }
            }
        }

        // Materialize children; rows of unsplit nodes are finished.
        let mut next_open = Vec::new();
        let mut remap = vec![NONE; open.len() * 2];
        for (s, o) in open.iter().enumerate() {
            match best[s] {
                Some(c) => {
                    let l = nodes.len();
                    nodes.push(Node::leaf(0.0, 0.0));
                    nodes.push(Node::leaf(0.0, 0.0));
                    nodes[o.node] = Node::split(c.feature, c.threshold, l, l + 1, o.total.count as f64);
                    remap[2 * s] = next_open.len();
                    next_open.push(Open {
                        node: l,
                        depth: o.depth + 1,
                        total: Stats {
                            g: 0.0,
                            h: 0.0,
                            count: 0,
                        },
                    });
                    remap[2 * s + 1] = next_open.len();
                    next_open.push(Open {
                        node: l + 1,
                        depth: o.depth + 1,
                        total: Stats {
                            g: 0.0,
                            h: 0.0,
                            count: 0,
                        },
                    });
                }
                None => {
                    nodes[o.node] = Node::leaf(leaf_value(o.total, hp), o.total.count as f64);
                }
            }
        }
        for i in 0..n {
            let s = slot[i];
            if s == NONE {
                continue;
            }
            match best[s] {
                Some(c) => {
                    let child = if x.get(i, c.feature) < c.threshold {
                        2 * s
                    } else {
                        2 * s + 1
                    };
                    let ns = remap[child];
                    let t = &mut next_open[ns].total;
                    t.g += grad[i];
                    t.h += hess[i];
                    t.count += 1;
                    slot[i] = ns;
                }
                None => {
                    leaf_of[i] = open[s].node;
                    slot[i] = NONE;
                }
            }
        }
        for o in &next_open {
            nodes[o.node].cover = o.total.count as f64;
        }
        open = next_open;
    }
    (Tree { nodes }, leaf_of)
}

/// Exhaustive split oracle used by the tests: every feature, every midpoint,
/// partition sums recomputed from scratch.
#[cfg(test)]
pub(crate) fn brute_best_split(
    x: &Matrix,
    grad: &[f64],
    hess: &[f64],
    hp: &Hyperparameters,
) -> Option<(usize, f64, f64)> {
    let mut best: Option<(usize, f64, f64)> = None;
    for f in 0..x.cols() {
        let vals = stats::sorted(&x.column(f));
        let mut distinct = vals.clone();
        distinct.dedup();
        for w in distinct.windows(2) {
            let t = midpoint(w[0], w[1]);
            let (mut gl, mut hl, mut gr, mut hr) = (0.0, 0.0, 0.0, 0.0);
            for i in 0..x.rows() {
                if x.get(i, f) < t {
                    gl += grad[i];
                    hl += hess[i];
                } else {
                    gr += grad[i];
                    hr += hess[i];
                }
            }
            if hl < hp.min_child_weight || hr < hp.min_child_weight {
                continue;
            }
            let gain = split_gain(gl, hl, gr, hr, hp.lambda, hp.gamma);
            if gain > 0.0 && best.is_none_or(|b| improves(gain, b.2)) {
                best = Some((f, t, gain));
            }
        }
    }
    best
}
