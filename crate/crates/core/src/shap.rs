//! Exact path-dependent Shapley attributions for [`TreeEnsemble`]s.
//!
//! Unknown features are integrated out by following both children of a split
//! in proportion to their training cover. [`tree_shap`] runs the polynomial
//! path algorithm; [`brute_shap`] enumerates every feature subset and exists
//! as an independent oracle.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::gbdt::{NodeKind, Tree, TreeEnsemble};
use crate::{Error, Matrix, Result};

/// Attributions of a single instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Attribution {
    pub phi: Vec<f64>,
    pub base_value: f64,
}

#[derive(Debug, Clone, Copy)]
struct PathElement {
    feature: Option<usize>,
    zero_fraction: f64,
    one_fraction: f64,
    weight: f64,
}

fn extend_path(path: &mut Vec<PathElement>, zero_fraction: f64, one_fraction: f64, feature: Option<usize>) {
    let depth = path.len();
    path.push(PathElement {
        feature,
        zero_fraction,
        one_fraction,
        weight: if depth == 0 { 1.0 } else { 0.0 },
    });
    let denom = (depth + 1) as f64;
    for i in (0..depth).rev() {
        path[i + 1].weight += one_fraction * path[i].weight * (i + 1) as f64 / denom;
        path[i].weight = zero_fraction * path[i].weight * (depth - i) as f64 / denom;
    }
}

fn unwind_path(path: &mut Vec<PathElement>, index: usize) {
    let depth = path.len() - 1;
    let one = path[index].one_fraction;
    let zero = path[index].zero_fraction;
    let mut next = path[depth].weight;
    let denom = (depth + 1) as f64;
    for i in (0..depth).rev() {
        if one != 0.0 {
            let tmp = path[i].weight;
            path[i].weight = next * denom / ((i + 1) as f64 * one);
            next = tmp - path[i].weight * zero * (depth - i) as f64 / denom;
        } else {
            path[i].weight = path[i].weight * denom / (zero * (depth - i) as f64);
        }
    }
    for i in index..depth {
        path[i].feature = path[i + 1].feature;
        path[i].zero_fraction = path[i + 1].zero_fraction;
        path[i].one_fraction = path[i + 1].one_fraction;
    }
    path.pop();
}

/// Total permutation weight of the path with element `index` removed.
fn unwound_sum(path: &[PathElement], index: usize) -> f64 {
    let depth = path.len() - 1;
    let one = path[index].one_fraction;
    let zero = path[index].zero_fraction;
    let mut next = path[depth].weight;
    let denom = (depth + 1) as f64;
    let mut total = 0.0;
    for i in (0..depth).rev() {
        if one != 0.0 {
            let tmp = next * denom / ((i + 1) as f64 * one);
            total += tmp;
            next = path[i].weight - tmp * zero * (depth - i) as f64 / denom;
        } else {
            total += path[i].weight / zero / ((depth - i) as f64 / denom);
        }
    }
    total
}

#[allow(clippy::too_many_arguments)]
fn recurse(
    tree: &Tree,
    x: &[f64],
    phi: &mut [f64],
    node: usize,
    mut path: Vec<PathElement>,
    zero_fraction: f64,
    one_fraction: f64,
    feature: Option<usize>,
) {
    extend_path(&mut path, zero_fraction, one_fraction, feature);
    let n = &tree.nodes[node];
    match n.kind {
        NodeKind::Leaf { value } => {
            for i in 1..path.len() {
                let w = unwound_sum(&path, i);
                let e = path[i];
                if let Some(f) = e.feature {
                    phi[f] += w * (e.one_fraction - e.zero_fraction) * value;
                }
            }
        }
        NodeKind::Split {
            feature: split,
            threshold,
            left,
            right,
        } => {
            let (hot, cold) = if x[split] < threshold {
                (left, right)
            } else {
                (right, left)
            };
            let mut incoming_zero = 1.0;
            let mut incoming_one = 1.0;
            if let Some(k) = (1..path.len()).find(|&k| path[k].feature == Some(split)) {
                incoming_zero = path[k].zero_fraction;
                incoming_one = path[k].one_fraction;
                unwind_path(&mut path, k);
            }
            let hot_frac = tree.nodes[hot].cover / n.cover;
            let cold_frac = tree.nodes[cold].cover / n.cover;
            recurse(
                tree,
                x,
                phi,
                hot,
                path.clone(),
                incoming_zero * hot_frac,
                incoming_one,
                Some(split),
            );
            recurse(tree, x, phi, cold, path, incoming_zero * cold_frac, 0.0, Some(split));
        }
    }
}

fn check_covers(ensemble: &TreeEnsemble) -> Result<()> {
    for tree in &ensemble.trees {
        if let Some(i) = tree.nodes.iter().position(|n| !(n.cover > 0.0) || !n.cover.is_finite()) {
            return Err(Error::MissingCover(i));
        }
    }
    Ok(())
}

fn check_instance(ensemble: &TreeEnsemble, x: &[f64]) -> Result<()> {
    if x.len() != ensemble.n_features() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: ensemble.n_features(),
        });
    }
    if let Some(feature) = x.iter().position(|v| v.is_nan()) {
        return Err(Error::NaNFeature { row: 0, feature });
    }
    Ok(())
}

/// Adds one tree's attributions for `x` into `phi`.
pub fn tree_shap_single(tree: &Tree, x: &[f64], phi: &mut [f64]) {
    recurse(tree, x, phi, 0, Vec::with_capacity(tree.depth() + 2), 1.0, 1.0, None);
}

/// Exact path-dependent SHAP values of `x` in log-odds units.
/// `base_value + sum(phi)` equals the ensemble margin.
pub fn tree_shap(ensemble: &TreeEnsemble, x: &[f64]) -> Result<Attribution> {
    check_covers(ensemble)?;
    check_instance(ensemble, x)?;
    let mut phi = vec![0.0; ensemble.n_features()];
    for tree in &ensemble.trees {
        tree_shap_single(tree, x, &mut phi);
    }
    Ok(Attribution {
        phi,
        base_value: ensemble.expected_margin(),
    })
}

pub const BRUTE_MAX_FEATURES: usize = 15;

/// Conditional expectation of a tree's output given the features in `known`
/// (bit mask), integrating the rest out by cover.
fn conditional_expectation(tree: &Tree, x: &[f64], known: u32, node: usize) -> f64 {
    let n = &tree.nodes[node];
    match n.kind {
        NodeKind::Leaf { value } => value,
        NodeKind::Split {
            feature,
            threshold,
            left,
            right,
        } => {
            if known & (1 << feature) != 0 {
                let next = if x[feature] < threshold { left } else { right };
                conditional_expectation(tree, x, known, next)
            } else {
                let l = &tree.nodes[left];
                let r = &tree.nodes[right];
                (l.cover * conditional_expectation(tree, x, known, left)
                    + r.cover * conditional_expectation(tree, x, known, right))
                    / n.cover
            }
        }
    }
}

/// Shapley values by explicit enumeration of all `2^d` coalitions.
pub fn brute_shap(ensemble: &TreeEnsemble, x: &[f64]) -> Result<Attribution> {
    let d = ensemble.n_features();
    if d > BRUTE_MAX_FEATURES {
        return Err(Error::TooManyFeatures {
            max: BRUTE_MAX_FEATURES,
            got: d,
        });
    }
    check_covers(ensemble)?;
    check_instance(ensemble, x)?;
    let value = |mask: u32| -> f64 {
        ensemble.base_score
            + ensemble
                .trees
                .iter()
                .map(|t| conditional_expectation(t, x, mask, 0))
                .sum::<f64>()
    };
    let coalitions = 1u32 << d;
    let values: Vec<f64> = (0..coalitions).map(value).collect();
    // |S|! (d - |S| - 1)! / d!
    let mut fact = vec![1.0f64; d + 1];
    for i in 1..=d {
        fact[i] = fact[i - 1] * i as f64;
    }
    let mut phi = vec![0.0; d];
    for (i, p) in phi.iter_mut().enumerate() {
        let bit = 1u32 << i;
        for mask in 0..coalitions {
            if mask & bit != 0 {
                continue;
            }
            let s = mask.count_ones() as usize;
            let w = fact[s] * fact[d - s - 1] / fact[d];
            *p += w * (values[(mask | bit) as usize] - values[mask as usize]);
        }
    }
    Ok(Attribution {
        phi,
        base_value: values[0],
    })
}

/// Attributions for a set of instances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapMatrix {
    pub geoids: Vec<String>,
    pub feature_names: Vec<String>,
    /// Row per instance, column per feature.
    pub values: Matrix,
    pub base_value: f64,
    pub margins: Vec<f64>,
    pub tag: String,
}

impl ShapMatrix {
    /// Largest `|base_value + sum(phi) - margin|` over all rows.
    pub fn max_local_accuracy_error(&self) -> f64 {
        self.values
            .iter_rows()
            .zip(&self.margins)
            .map(|(phi, m)| (self.base_value + phi.iter().sum::<f64>() - m).abs())
            .fold(0.0, f64::max)
    }
}

pub fn explain(ensemble: &TreeEnsemble, x: &Matrix, geoids: &[String], tag: &str) -> Result<ShapMatrix> {
    if geoids.len() != x.rows() {
        return Err(Error::LengthMismatch {
            left: geoids.len(),
            right: x.rows(),
        });
    }
    let mut values = Matrix::zeros(0, ensemble.n_features());
    let mut margins = Vec::with_capacity(x.rows());
    let mut base_value = ensemble.expected_margin();
    for row in x.iter_rows() {
        let a = tree_shap(ensemble, row)?;
        base_value = a.base_value;
        values.push_row(&a.phi)?;
        margins.push(ensemble.predict_margin(row)?);
    }
    Ok(ShapMatrix {
        geoids: geoids.to_vec(),
        feature_names: ensemble.feature_names.clone(),
        values,
        base_value,
        margins,
        tag: tag.into(),
    })
}

/// Test rows whose 0.5-threshold prediction matches the label, in order.
pub fn select_analysis_set(ensemble: &TreeEnsemble, x: &Matrix, y: &[u8]) -> Result<Vec<usize>> {
    if x.rows() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.rows(),
            right: y.len(),
        });
    }
    if x.is_empty() {
        return Err(Error::EmptyInput);
    }
    let pred = ensemble.classify_all(x)?;
    let keep: Vec<usize> = (0..y.len()).filter(|&i| pred[i] == y[i]).collect();
    if keep.is_empty() {
        return Err(Error::NoCorrectInstances);
    }
    Ok(keep)
}

/// Mean absolute attribution per feature.
pub fn global_importance(shap: &ShapMatrix) -> Result<Vec<f64>> {
    mean_abs(&shap.values)
}

pub fn mean_abs(values: &Matrix) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::EmptyMatrix);
    }
    let n = values.rows() as f64;
    Ok((0..values.cols())
        .map(|j| values.iter_rows().map(|r| r[j].abs()).sum::<f64>() / n)
        .collect())
}

/// (feature value, attribution) pairs for one feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DependenceSeries {
    pub feature: usize,
    pub x: Vec<f64>,
    pub shap: Vec<f64>,
}

/// Pairs sorted ascending by feature value; equal values keep row order.
pub fn dependence_series(shap: &ShapMatrix, x: &Matrix, feature: usize) -> Result<DependenceSeries> {
    if feature >= shap.values.cols() || feature >= x.cols() {
        return Err(Error::UnknownFeature(feature));
    }
    if x.rows() != shap.values.rows() {
        return Err(Error::LengthMismatch {
            left: x.rows(),
            right: shap.values.rows(),
        });
    }
    let mut order: Vec<usize> = (0..x.rows()).collect();
    order.sort_by(|&a, &b| x.get(a, feature).total_cmp(&x.get(b, feature)));
    Ok(DependenceSeries {
        feature,
        x: order.iter().map(|&i| x.get(i, feature)).collect(),
        shap: order.iter().map(|&i| shap.values.get(i, feature)).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gbdt::{Hyperparameters, Node};
    use alloc::format;
    use alloc::string::ToString;

    fn ensemble(trees: Vec<Tree>, d: usize, base: f64) -> TreeEnsemble {
        TreeEnsemble {
            trees,
            base_score: base,
            hyperparameters: Hyperparameters::default(),
            feature_names: (0..d).map(|i| format!("f{i}")).collect(),
        }
    }

    #[test]
    fn single_leaf_has_no_attribution() {
        let e = ensemble(vec![Tree::single_leaf(0.7, 5.0)], 3, 0.2);
        for f in [tree_shap, brute_shap] {
            let a = f(&e, &[1.0, 2.0, 3.0]).unwrap();
            assert_eq!(a.phi, [0.0, 0.0, 0.0]);
            assert!((a.base_value - 0.9).abs() < 1e-15);
        }
    }

    #[test]
    fn stump_hand_value() {
        let (a, b) = (-1.25, 2.5);
        let t = Tree {
            nodes: vec![Node::split(1, 0.5, 1, 2, 4.0), Node::leaf(a, 3.0), Node::leaf(b, 1.0)],
        };
        let e = ensemble(vec![t], 3, 0.0);
        let x = [0.0, 1.0, 0.0];
        let want = b - (3.0 * a + b) / 4.0;
        for f in [tree_shap, brute_shap] {
            let attr = f(&e, &x).unwrap();
            assert!((attr.phi[1] - want).abs() < 1e-14);
            assert_eq!(attr.phi[0], 0.0);
            assert_eq!(attr.phi[2], 0.0);
        }
    }

    #[test]
    fn unused_feature_gets_exact_zero() {
        let t = Tree {
            nodes: vec![
                Node::split(0, 1.0, 1, 2, 10.0),
                Node::split(0, 0.0, 3, 4, 6.0),
                Node::leaf(2.0, 4.0),
                Node::leaf(-1.0, 2.0),
                Node::leaf(0.5, 4.0),
            ],
        };
        let e = ensemble(vec![t], 3, 0.0);
        let x = [0.5, 9.0, -9.0];
        let a = tree_shap(&e, &x).unwrap();
        assert_eq!(a.phi[1], 0.0);
        assert_eq!(a.phi[2], 0.0);
        let m = e.predict_margin(&x).unwrap();
        assert!((a.phi[0] - (m - a.base_value)).abs() < 1e-14);
    }

    #[test]
    fn symmetric_tree_symmetric_attribution() {
        // f0 at the root, f1 below on both sides, covers symmetric under swap
        let t = Tree {
            nodes: vec![
                Node::split(0, 0.5, 1, 2, 8.0),
                Node::split(1, 0.5, 3, 4, 4.0),
                Node::split(1, 0.5, 5, 6, 4.0),
                Node::leaf(0.0, 2.0),
                Node::leaf(1.0, 2.0),
                Node::leaf(1.0, 2.0),
                Node::leaf(3.0, 2.0),
            ],
        };
        let e = ensemble(vec![t], 2, 0.0);
        for x in [[1.0, 1.0], [0.0, 0.0]] {
            let a = tree_shap(&e, &x).unwrap();
            assert!((a.phi[0] - a.phi[1]).abs() < 1e-14);
        }
    }

    #[test]
    fn repeated_feature_on_path() {
        let t = Tree {
            nodes: vec![
                Node::split(0, 5.0, 1, 2, 20.0),
                Node::split(1, 1.0, 3, 4, 12.0),
                Node::leaf(4.0, 8.0),
                Node::split(0, 2.0, 5, 6, 7.0),
                Node::leaf(-2.0, 5.0),
                Node::leaf(1.0, 3.0),
                Node::leaf(-3.0, 4.0),
            ],
        };
        let e = ensemble(vec![t], 2, 0.1);
        for x in [[0.0, 0.0], [3.0, 0.0], [3.0, 2.0], [7.0, 0.0]] {
            let fast = tree_shap(&e, &x).unwrap();
            let slow = brute_shap(&e, &x).unwrap();
            for (a, b) in fast.phi.iter().zip(&slow.phi) {
                assert!((a - b).abs() < 1e-12);
            }
            assert!((fast.base_value - slow.base_value).abs() < 1e-12);
        }
    }

    #[test]
    fn too_many_features_for_brute_force() {
        let e = ensemble(vec![], 16, 0.0);
        assert_eq!(
            brute_shap(&e, &[0.0; 16]).unwrap_err(),
            Error::TooManyFeatures { max: 15, got: 16 }
        );
    }

    #[test]
    fn zero_cover_rejected() {
        let t = Tree {
            nodes: vec![
                Node::split(0, 0.5, 1, 2, 1.0),
                Node::leaf(0.0, 1.0),
                Node::leaf(1.0, 0.0),
            ],
        };
        let e = ensemble(vec![t], 1, 0.0);
        assert_eq!(tree_shap(&e, &[0.0]).unwrap_err(), Error::MissingCover(2));
    }

    fn shap_matrix(rows: &[[f64; 2]]) -> ShapMatrix {
        ShapMatrix {
            geoids: (0..rows.len()).map(|i| i.to_string()).collect(),
            feature_names: vec!["a".into(), "b".into()],
            values: Matrix::from_rows(2, rows).unwrap(),
            base_value: 0.0,
            margins: vec![0.0; rows.len()],
            tag: "t".into(),
        }
    }

    #[test]
    fn importance_cases() {
        assert_eq!(global_importance(&shap_matrix(&[[0.0, 0.0]; 3])).unwrap(), [0.0, 0.0]);
        assert_eq!(global_importance(&shap_matrix(&[[-0.3, 2.0]])).unwrap(), [0.3, 2.0]);
        assert_eq!(
            global_importance(&shap_matrix(&[[1.0, -1.0], [3.0, 1.0]])).unwrap(),
            [2.0, 1.0]
        );
        assert_eq!(global_importance(&shap_matrix(&[])).unwrap_err(), Error::EmptyMatrix);
    }

    #[test]
    fn dependence_sorted_and_permuted() {
        let s = shap_matrix(&[[0.1, 0.0], [0.2, 0.0], [0.3, 0.0], [0.4, 0.0]]);
        let x = Matrix::from_rows(2, [[3.0, 1.0], [1.0, 1.0], [2.0, 1.0], [1.0, 1.0]]).unwrap();
        let d = dependence_series(&s, &x, 0).unwrap();
        assert_eq!(d.x, [1.0, 1.0, 2.0, 3.0]);
        assert_eq!(d.shap, [0.2, 0.4, 0.3, 0.1]);
        let c = dependence_series(&s, &x, 1).unwrap();
        assert!(c.x.iter().all(|v| *v == 1.0));
        assert_eq!(c.shap, [0.0; 4]);
        assert_eq!(dependence_series(&s, &x, 5).unwrap_err(), Error::UnknownFeature(5));
    }

    fn stump_model(flip: bool) -> TreeEnsemble {
        let (l, r) = if flip { (1.0, -1.0) } else { (-1.0, 1.0) };
        let t = Tree {
            nodes: vec![Node::split(0, 0.5, 1, 2, 10.0), Node::leaf(l, 5.0), Node::leaf(r, 5.0)],
        };
        ensemble(vec![t], 1, 0.0)
    }

    #[test]
    fn analysis_set_selection() {
        let x = Matrix::from_rows(1, (0..10).map(|i| [f64::from(u8::from(i % 2 == 0))])).unwrap();
        let y: Vec<u8> = (0..10).map(|i| u8::from(i % 2 == 0)).collect();
        assert_eq!(
            select_analysis_set(&stump_model(false), &x, &y).unwrap(),
            (0..10).collect::<Vec<_>>()
        );
        assert_eq!(
            select_analysis_set(&stump_model(true), &x, &y).unwrap_err(),
            Error::NoCorrectInstances
        );
        // corrupt three labels: rows 1, 4, 7 become wrong
        let mut y2 = y.clone();
        for i in [1, 4, 7] {
            y2[i] = 1 - y2[i];
        }
        let pred = stump_model(false).classify_all(&x).unwrap();
        let expected: Vec<usize> = (0..10).filter(|&i| pred[i] == y2[i]).collect();
        let got = select_analysis_set(&stump_model(false), &x, &y2).unwrap();
        assert_eq!(got.len(), 7);
        assert_eq!(got, expected);
    }
}
