//! SMOTE oversampling of the minority hazard class.

use alloc::vec::Vec;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{seed, Error, Matrix, Result};

pub const DEFAULT_NEIGHBORS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SmoteConfig {
    pub k: usize,
    /// Randomly drop majority rows down to the minority count instead of
    /// oversampling.
    pub undersample: bool,
}

impl Default for SmoteConfig {
    fn default() -> Self {
        Self {
            k: DEFAULT_NEIGHBORS,
            undersample: false,
        }
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Indices of the `k` nearest other rows of every row (Euclidean, ties by index).
fn neighbors(rows: &Matrix, k: usize) -> Vec<Vec<usize>> {
    (0..rows.rows())
        .map(|i| {
            let mut cand: Vec<(f64, usize)> = (0..rows.rows())
                .filter(|&j| j != i)
                .map(|j| (sq_dist(rows.row(i), rows.row(j)), j))
                .collect();
            cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            cand.into_iter().take(k).map(|(_, j)| j).collect()
        })
        .collect()
}

/// Generates `n_new` synthetic rows, each `x + u * (nn - x)` for a random
/// minority row `x`, one of its `k` nearest minority neighbours `nn`, and
/// `u ~ U[0, 1]`. `k` is clipped to `minority.rows() - 1`.
pub fn smote_synthesize(minority: &Matrix, k: usize, n_new: usize, seed: u64) -> Result<Matrix> {
    let m = minority.rows();
    if m < 2 {
        return Err(Error::TooFewMinority(m));
    }
    if k == 0 {
        return Err(Error::InvalidHyperparameter("SMOTE needs k >= 1".into()));
    }
    let k = k.min(m - 1);
    let nn = neighbors(minority, k);
    let mut rng = seed::rng(seed);
    let mut out = Matrix::zeros(0, minority.cols());
    let mut row = alloc::vec![0.0; minority.cols()];
    for _ in 0..n_new {
        let i = rng.random_range(0..m);
        let j = nn[i][rng.random_range(0..k)];
        let u: f64 = rng.random();
        let (a, b) = (minority.row(i), minority.row(j));
        for (r, (x, y)) in row.iter_mut().zip(a.iter().zip(b)) {
            *r = x + u * (y - x);
        }
        out.push_row(&row)?;
    }
    Ok(out)
}

/// Training rows after class balancing.
#[derive(Debug, Clone, PartialEq)]
pub struct BalancedSet {
    pub x: Matrix,
    pub y: Vec<u8>,
    pub synthetic: Vec<bool>,
    /// Rows per class after balancing, indexed by label.
    pub counts: [usize; 2],
}

impl BalancedSet {
    pub fn synthetic_count(&self) -> usize {
        self.synthetic.iter().filter(|s| **s).count()
    }
}

fn class_counts(y: &[u8]) -> [usize; 2] {
    let ones = y.iter().filter(|&&v| v == 1).count();
    [y.len() - ones, ones]
}

/// Brings both classes to the same size. Original rows keep their order and
/// values; synthetic rows are appended after them.
pub fn balance_training(x: &Matrix, y: &[u8], seed: u64, config: SmoteConfig) -> Result<BalancedSet> {
    if x.rows() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.rows(),
            right: y.len(),
        });
    }
    let counts = class_counts(y);
    if counts[0] == 0 || counts[1] == 0 {
        return Err(Error::SingleClass);
    }
    let minority_label = u8::from(counts[1] < counts[0]);
    let (min_n, maj_n) = if minority_label == 1 {
        (counts[1], counts[0])
    } else {
        (counts[0], counts[1])
    };
    if min_n == maj_n {
        return Ok(BalancedSet {
            x: x.clone(),
            y: y.to_vec(),
            synthetic: alloc::vec![false; y.len()],
            counts,
        });
    }

    if config.undersample {
        let majority: Vec<usize> = (0..y.len()).filter(|&i| y[i] != minority_label).collect();
        let mut rng = seed::rng(seed);
        let mut keep: Vec<usize> = index::sample(&mut rng, majority.len(), min_n)
            .into_iter()
            .map(|p| majority[p])
            .collect();
        keep.extend((0..y.len()).filter(|&i| y[i] == minority_label));
        keep.sort_unstable();
        return Ok(BalancedSet {
            x: x.select_rows(&keep),
            y: keep.iter().map(|&i| y[i]).collect(),
            synthetic: alloc::vec![false; keep.len()],
            counts: [min_n, min_n],
        });
    }

    let minority_idx: Vec<usize> = (0..y.len()).filter(|&i| y[i] == minority_label).collect();
    let synth = smote_synthesize(&x.select_rows(&minority_idx), config.k, maj_n - min_n, seed)?;
    let mut bx = x.clone();
    for row in synth.iter_rows() {
        bx.push_row(row)?;
    }
    let mut by = y.to_vec();
    by.extend(core::iter::repeat_n(minority_label, synth.rows()));
    let mut synthetic = alloc::vec![false; y.len()];
    synthetic.extend(core::iter::repeat_n(true, synth.rows()));
    Ok(BalancedSet {
        x: bx,
        y: by,
        synthetic,
        counts: [maj_n, maj_n],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Distance from `p` to the segment `a`-`b` in 2-D.
    fn seg_dist(p: &[f64], a: &[f64], b: &[f64]) -> f64 {
        let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
        let len2 = dx * dx + dy * dy;
        let t = if len2 == 0.0 {
            0.0
        } else {
            (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0)
        };
        let (cx, cy) = (a[0] + t * dx, a[1] + t * dy);
        libm::sqrt((p[0] - cx) * (p[0] - cx) + (p[1] - cy) * (p[1] - cy))
    }

    #[test]
    fn identical_minority_rows_reproduce() {
        let m = Matrix::from_rows(2, [[1.5, -2.0]; 3]).unwrap();
        let s = smote_synthesize(&m, 5, 10, 1).unwrap();
        assert!(s.iter_rows().all(|r| r == [1.5, -2.0]));
    }

    #[test]
    fn one_d_synthetic_in_hull() {
        let m = Matrix::from_rows(1, [[0.0], [1.0]]).unwrap();
        let s = smote_synthesize(&m, 1, 50, 2).unwrap();
        assert!(s.as_slice().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn synthetic_points_on_triangle_edges() {
        let pts = [[0.0, 0.0], [2.0, 0.0], [0.0, 2.0]];
        let m = Matrix::from_rows(2, pts).unwrap();
        let s = smote_synthesize(&m, 2, 100, 3).unwrap();
        assert_eq!(s.rows(), 100);
        for r in s.iter_rows() {
            let best = [(0, 1), (0, 2), (1, 2)]
                .iter()
                .map(|&(a, b)| seg_dist(r, &pts[a], &pts[b]))
                .fold(f64::INFINITY, f64::min);
            assert!(best < 1e-9);
        }
    }

    #[test]
    fn too_few_minority() {
        let m = Matrix::from_rows(1, [[0.0]]).unwrap();
        assert_eq!(smote_synthesize(&m, 5, 3, 0), Err(Error::TooFewMinority(1)));
    }

    fn imbalanced(n0: usize, n1: usize) -> (Matrix, Vec<u8>) {
        let rows = (0..n0 + n1).map(|i| [i as f64, (i * 7 % 13) as f64]);
        let y = (0..n0 + n1).map(|i| u8::from(i >= n0)).collect();
        (Matrix::from_rows(2, rows).unwrap(), y)
    }

    #[test]
    fn oversamples_to_parity() {
        let (x, y) = imbalanced(80, 20);
        let b = balance_training(&x, &y, 7, SmoteConfig::default()).unwrap();
        assert_eq!(b.counts, [80, 80]);
        assert_eq!(b.y.len(), 160);
        assert_eq!(b.synthetic_count(), 60);
        assert_eq!(b.y.iter().filter(|v| **v == 1).count(), 80);
        // originals untouched
        for i in 0..100 {
            assert_eq!(b.x.row(i), x.row(i));
            assert!(!b.synthetic[i]);
        }
    }

    #[test]
    fn balanced_input_unchanged() {
        let (x, y) = imbalanced(50, 50);
        let b = balance_training(&x, &y, 7, SmoteConfig::default()).unwrap();
        assert_eq!(b.x, x);
        assert_eq!(b.synthetic_count(), 0);
    }

    #[test]
    fn synthetic_rows_within_minority_bounds() {
        let (x, y) = imbalanced(70, 12);
        let b = balance_training(&x, &y, 9, SmoteConfig::default()).unwrap();
        let minority: Vec<&[f64]> = x
            .iter_rows()
            .zip(&y)
            .filter(|(_, l)| **l == 1)
            .map(|(r, _)| r)
            .collect();
        for j in 0..2 {
            let lo = minority.iter().map(|r| r[j]).fold(f64::INFINITY, f64::min);
            let hi = minority.iter().map(|r| r[j]).fold(f64::NEG_INFINITY, f64::max);
            for (r, s) in b.x.iter_rows().zip(&b.synthetic) {
                if *s {
                    assert!(r[j] >= lo && r[j] <= hi);
                }
            }
        }
    }

    #[test]
    fn single_class_rejected() {
        let x = Matrix::from_rows(1, [[0.0], [1.0]]).unwrap();
        assert_eq!(
            balance_training(&x, &[1, 1], 0, SmoteConfig::default()),
            Err(Error::SingleClass)
        );
    }

    #[test]
    fn undersampling_switch() {
        let (x, y) = imbalanced(30, 10);
        let cfg = SmoteConfig {
            undersample: true,
            ..SmoteConfig::default()
        };
        let b = balance_training(&x, &y, 5, cfg).unwrap();
        assert_eq!(b.counts, [10, 10]);
        assert_eq!(b.y.len(), 20);
        assert_eq!(b.synthetic_count(), 0);
        for r in b.x.iter_rows() {
            assert!(x.iter_rows().any(|o| o == r));
        }
    }

    proptest! {
        #[test]
        fn synthetic_rows_lie_on_minority_segments(
            pts in proptest::collection::vec((-50.0f64..50.0, -50.0f64..50.0), 2..8),
            k in 1usize..6,
            seed in any::<u64>(),
        ) {
            let m = Matrix::from_rows(2, pts.iter().map(|(a, b)| [*a, *b])).unwrap();
            let s = smote_synthesize(&m, k, 20, seed).unwrap();
            for r in s.iter_rows() {
                let mut best = f64::INFINITY;
                for a in 0..m.rows() {
                    for b in 0..m.rows() {
                        best = best.min(seg_dist(r, m.row(a), m.row(b)));
                    }
                }
                prop_assert!(best < 1e-9);
            }
        }
    }
}
