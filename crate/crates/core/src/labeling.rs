//! Binary hazard labels from two-cluster k-means on standardized
//! (heat_days, pm25_days).

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::tract::{hazard_matrix, TractRecord};
use crate::{seed, stats, Error, Matrix, Result};

pub const KMEANS_TOLERANCE: f64 = 1e-6;
pub const KMEANS_MAX_ITER: usize = 300;

/// Per-column mean and population standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub means: Vec<f64>,
    pub std_devs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Standardized {
    pub values: Matrix,
    pub params: Standardization,
    pub warnings: Vec<String>,
}

/// Centres every column and divides by its population standard deviation.
/// Zero-variance columns become all zeros and produce a warning.
pub fn standardize(columns: &Matrix) -> Result<Standardized> {
    if columns.is_empty() {
        return Err(Error::EmptyInput);
    }
    if columns.rows() < 2 {
        return Err(Error::TooFewRows {
            needed: 2,
            got: columns.rows(),
        });
    }
    let mut values = Matrix::zeros(columns.rows(), columns.cols());
    let mut means = Vec::with_capacity(columns.cols());
    let mut std_devs = Vec::with_capacity(columns.cols());
    let mut warnings = Vec::new();
    for j in 0..columns.cols() {
        let col = columns.column(j);
        let m = stats::mean(&col);
        let s = stats::std_dev(&col);
        means.push(m);
        std_devs.push(s);
        if s == 0.0 {
            warnings.push(format!("column {j} has zero variance; standardized to zeros"));
            continue;
        }
        for (i, v) in col.iter().enumerate() {
            values.set(i, j, (v - m) / s);
        }
    }
    Ok(Standardized {
        values,
        params: Standardization { means, std_devs },
        warnings,
    })
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    libm::sqrt(sq_dist(a, b))
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit {
    /// Cluster index (0 or 1) per point.
    pub assignments: Vec<usize>,
    pub centroids: [Vec<f64>; 2],
    pub iterations: usize,
    /// Within-cluster SSE after each assignment step.
    pub sse_history: Vec<f64>,
}

/// Two-cluster k-means: k-means++ seeding followed by Lloyd iterations until
/// the largest centroid shift drops below [`KMEANS_TOLERANCE`] or
/// [`KMEANS_MAX_ITER`] is reached.
pub fn kmeans_two(points: &Matrix, seed: u64) -> Result<KMeansFit> {
    let n = points.rows();
    if n < 2 {
        return Err(Error::TooFewRows { needed: 2, got: n });
    }
    if (1..n).all(|i| points.row(i) == points.row(0)) {
        return Err(Error::DegenerateData("all points identical".into()));
    }
    let mut rng = seed::rng(seed);

    let first = rng.random_range(0..n);
    let d2: Vec<f64> = points.iter_rows().map(|p| sq_dist(p, points.row(first))).collect();
    let total: f64 = d2.iter().sum();
    let target = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut second = None;
    for (i, w) in d2.iter().enumerate() {
        acc += w;
        if *w > 0.0 && acc > target {
            second = Some(i);
            break;
        }
    }
    // Rounding can leave `acc` a hair below `target`; fall back to the last
    // point with positive weight.
    let second = second.unwrap_or_else(|| d2.iter().rposition(|w| *w > 0.0).expect("distinct points"));
    let mut centroids = [points.row(first).to_vec(), points.row(second).to_vec()];

    let mut assignments = vec![0usize; n];
    let mut sse_history = Vec::new();
    let mut iterations = 0;
    while iterations < KMEANS_MAX_ITER {
        iterations += 1;
        let mut sse = 0.0;
        for (i, p) in points.iter_rows().enumerate() {
            let d0 = sq_dist(p, &centroids[0]);
            let d1 = sq_dist(p, &centroids[1]);
            assignments[i] = usize::from(d1 < d0);
            sse += d0.min(d1);
        }
        sse_history.push(sse);

        let mut next = [vec![0.0; points.cols()], vec![0.0; points.cols()]];
        let mut counts = [0usize; 2];
        for (p, &a) in points.iter_rows().zip(&assignments) {
            counts[a] += 1;
            for (c, v) in next[a].iter_mut().zip(p) {
                *c += v;
            }
        }
        for k in 0..2 {
            if counts[k] == 0 {
                // Re-seed an empty cluster at the point farthest from the other centroid.
                let other = &next[1 - k];
                let scale = counts[1 - k] as f64;
                let mut best = (0, f64::NEG_INFINITY);
                for (i, p) in points.iter_rows().enumerate() {
                    let d = p
                        .iter()
                        .zip(other)
                        .map(|(x, s)| (x - s / scale) * (x - s / scale))
                        .sum::<f64>();
                    if d > best.1 {
                        best = (i, d);
                    }
                }
                next[k] = points.row(best.0).to_vec();
                counts[k] = 1;
            } else {
                let c = counts[k] as f64;
                next[k].iter_mut().for_each(|v| *v /= c);
            }
        }
        let shift = dist(&next[0], &centroids[0]).max(dist(&next[1], &centroids[1]));
        centroids = next;
        if shift < KMEANS_TOLERANCE {
            break;
        }
    }
    // Final assignment against the converged centroids.
    for (i, p) in points.iter_rows().enumerate() {
        assignments[i] = usize::from(sq_dist(p, &centroids[1]) < sq_dist(p, &centroids[0]));
    }
    Ok(KMeansFit {
        assignments,
        centroids,
        iterations,
        sse_history,
    })
}

/// Mean silhouette over all points. Points in singleton clusters score 0,
/// and a point with `a = b = 0` scores 0.
pub fn silhouette(points: &Matrix, assignments: &[usize]) -> Result<f64> {
    let n = points.rows();
    if assignments.len() != n {
        return Err(Error::LengthMismatch {
            left: assignments.len(),
            right: n,
        });
    }
    let k = assignments.iter().copied().max().map_or(0, |m| m + 1);
    let mut sizes = vec![0usize; k];
    for &a in assignments {
        sizes[a] += 1;
    }
    if sizes.iter().filter(|&&s| s > 0).count() < 2 {
        return Err(Error::DegenerateData("silhouette needs two nonempty clusters".into()));
    }
    let mut total = 0.0;
    let mut sums = vec![0.0; k];
    for i in 0..n {
        let own = assignments[i];
        if sizes[own] == 1 {
            continue;
        }
        sums.iter_mut().for_each(|s| *s = 0.0);
        for j in 0..n {
            if i != j {
                sums[assignments[j]] += dist(points.row(i), points.row(j));
            }
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != own && sizes[c] > 0)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let m = a.max(b);
        if m > 0.0 {
            total += (b - a) / m;
        }
    }
    Ok(total / n as f64)
}

/// Outcome of hazard labelling for one city.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HazardLabeling {
    pub geoids: Vec<String>,
    /// 1 = high hazard.
    pub labels: Vec<u8>,
    /// Standardized centroids indexed by label.
    pub centroids: [Vec<f64>; 2],
    pub silhouette: f64,
    pub standardization: Standardization,
    pub warnings: Vec<String>,
}

/// Standardize, cluster, then call the cluster whose centroid has the larger
/// coordinate sum "high hazard".
pub fn label_hazards(hazards: &Matrix, seed: u64) -> Result<(Vec<u8>, [Vec<f64>; 2], f64, Standardized)> {
    let std = standardize(hazards)?;
    let fit = kmeans_two(&std.values, seed)?;
    let sum0: f64 = fit.centroids[0].iter().sum();
    let sum1: f64 = fit.centroids[1].iter().sum();
    let high = usize::from(sum1 > sum0);
    let labels: Vec<u8> = fit.assignments.iter().map(|&a| u8::from(a == high)).collect();
    let sil = silhouette(&std.values, &fit.assignments)?;
    let [c0, c1] = fit.centroids;
    let centroids = if high == 1 { [c0, c1] } else { [c1, c0] };
    Ok((labels, centroids, sil, std))
}

pub fn assign_hazard_labels(records: &[TractRecord], seed: u64) -> Result<HazardLabeling> {
    if records.is_empty() {
        return Err(Error::EmptyInput);
    }
    let (labels, centroids, silhouette, std) = label_hazards(&hazard_matrix(records), seed)?;
    Ok(HazardLabeling {
        geoids: records.iter().map(|r| r.geoid.clone()).collect(),
        labels,
        centroids,
        silhouette,
        standardization: std.params,
        warnings: std.warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tract::sample_record;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn col(v: &[f64]) -> Matrix {
        Matrix::from_rows(1, v.iter().map(|x| [*x])).unwrap()
    }

    fn blobs(seed: u64) -> (Matrix, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        let mut truth = Vec::new();
        for i in 0..40 {
            let c = if i % 2 == 0 { -5.0 } else { 5.0 };
            // Box-Muller keeps the test free of extra dependencies.
            let u1: f64 = rng.random::<f64>().max(1e-12);
            let u2: f64 = rng.random();
            let r = libm::sqrt(-2.0 * libm::log(u1)) * 0.1;
            let t = 2.0 * core::f64::consts::PI * u2;
            rows.push([c + r * libm::cos(t), c + r * libm::sin(t)]);
            truth.push(i % 2);
        }
        (Matrix::from_rows(2, rows).unwrap(), truth)
    }

    #[test]
    fn standardize_two_points() {
        let s = standardize(&col(&[1.0, 3.0])).unwrap();
        assert_eq!(s.values.column(0), [-1.0, 1.0]);
    }

    #[test]
    fn standardize_constant_column_warns() {
        let s = standardize(&col(&[5.0, 5.0, 5.0])).unwrap();
        assert_eq!(s.values.column(0), [0.0, 0.0, 0.0]);
        assert_eq!(s.warnings.len(), 1);
    }

    #[test]
    fn standardize_three_points() {
        let s = standardize(&col(&[0.0, 1.0, 2.0])).unwrap();
        let e = libm::sqrt(1.5);
        for (got, want) in s.values.column(0).iter().zip([-e, 0.0, e]) {
            assert!((got - want).abs() < 1e-12);
        }
        let v = s.values.column(0);
        assert!(stats::mean(&v).abs() < 1e-9);
        assert!((stats::std_dev(&v) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn standardize_empty() {
        assert_eq!(standardize(&Matrix::zeros(0, 2)).unwrap_err(), Error::EmptyInput);
    }

    #[test]
    fn kmeans_recovers_blobs() {
        let (pts, truth) = blobs(3);
        for seed in 0..5 {
            let fit = kmeans_two(&pts, seed).unwrap();
            let same = fit.assignments.iter().zip(&truth).all(|(a, t)| a == t);
            let flipped = fit.assignments.iter().zip(&truth).all(|(a, t)| *a != *t);
            assert!(same || flipped);
        }
    }

    #[test]
    fn kmeans_two_points_are_centroids() {
        let pts = Matrix::from_rows(2, [[0.0, 0.0], [10.0, 10.0]]).unwrap();
        let fit = kmeans_two(&pts, 9).unwrap();
        let mut cs = fit.centroids.clone();
        cs.sort_by(|a, b| a[0].total_cmp(&b[0]));
        assert_eq!(cs, [vec![0.0, 0.0], vec![10.0, 10.0]]);
    }

    /// Best 2-partition of a 1-D set by exhaustive enumeration.
    fn best_partition(xs: &[f64]) -> Vec<usize> {
        let n = xs.len();
        let mut best = (f64::INFINITY, vec![]);
        for mask in 1..(1u32 << n) - 1 {
            let assign: Vec<usize> = (0..n).map(|i| ((mask >> i) & 1) as usize).collect();
            let mut sse = 0.0;
            for k in 0..2 {
                let members: Vec<f64> = (0..n).filter(|&i| assign[i] == k).map(|i| xs[i]).collect();
                let m = stats::mean(&members);
                sse += members.iter().map(|x| (x - m) * (x - m)).sum::<f64>();
            }
            if sse < best.0 {
                best = (sse, assign);
            }
        }
        best.1
    }

    #[test]
    fn kmeans_matches_enumeration_in_1d() {
        let xs = [0.0, 1.0, 9.0, 10.0];
        let oracle = best_partition(&xs);
        for seed in 0..20 {
            let fit = kmeans_two(&col(&xs), seed).unwrap();
            let same = fit.assignments == oracle;
            let flipped = fit.assignments.iter().zip(&oracle).all(|(a, b)| a != b);
            assert!(same || flipped, "seed {seed}: {:?}", fit.assignments);
        }
    }

    #[test]
    fn kmeans_sse_never_increases() {
        let (pts, _) = blobs(11);
        for seed in 0..10 {
            let fit = kmeans_two(&pts, seed).unwrap();
            for w in fit.sse_history.windows(2) {
                assert!(w[1] <= w[0] + 1e-12);
            }
        }
    }

    #[test]
    fn kmeans_identical_points_rejected() {
        let pts = Matrix::from_rows(2, [[1.0, 1.0]; 4]).unwrap();
        assert!(matches!(kmeans_two(&pts, 0), Err(Error::DegenerateData(_))));
    }

    #[test]
    fn kmeans_is_deterministic() {
        let (pts, _) = blobs(5);
        assert_eq!(kmeans_two(&pts, 42).unwrap(), kmeans_two(&pts, 42).unwrap());
    }

    /// Silhouette straight from the definition, without shared sums.
    fn silhouette_oracle(xs: &[f64], assign: &[usize]) -> f64 {
        let n = xs.len();
        let mut total = 0.0;
        for i in 0..n {
            let same: Vec<f64> = (0..n)
                .filter(|&j| j != i && assign[j] == assign[i])
                .map(|j| (xs[i] - xs[j]).abs())
                .collect();
            let other: Vec<f64> = (0..n)
                .filter(|&j| assign[j] != assign[i])
                .map(|j| (xs[i] - xs[j]).abs())
                .collect();
            if same.is_empty() {
                continue;
            }
            let a = stats::mean(&same);
            let b = stats::mean(&other);
            if a.max(b) > 0.0 {
                total += (b - a) / a.max(b);
            }
        }
        total / n as f64
    }

    #[test]
    fn silhouette_hand_values() {
        let xs = [0.0, 1.0, 9.0, 10.0];
        let assign = [0, 0, 1, 1];
        let s = silhouette(&col(&xs), &assign).unwrap();
        // (8.5/9.5 + 7.5/8.5) / 2
        let hand = (8.5 / 9.5 + 7.5 / 8.5) / 2.0;
        assert!((s - hand).abs() < 1e-12);
        assert!((s - 0.888).abs() < 1e-3);
        assert!((s - silhouette_oracle(&xs, &assign)).abs() < 1e-12);
    }

    #[test]
    fn silhouette_tight_blobs() {
        let (pts, truth) = blobs(8);
        let s = silhouette(&pts, &truth).unwrap();
        assert!(s > 0.9);
    }

    #[test]
    fn silhouette_coincident_points_zero() {
        let pts = Matrix::from_rows(2, [[3.0, 3.0]; 4]).unwrap();
        assert_eq!(silhouette(&pts, &[0, 1, 0, 1]).unwrap(), 0.0);
    }

    fn records(hazards: &[(f64, f64)]) -> Vec<TractRecord> {
        hazards
            .iter()
            .enumerate()
            .map(|(i, (h, p))| {
                let mut r = sample_record(&format!("g{i}"));
                r.heat_days = *h;
                r.pm25_days = *p;
                r
            })
            .collect()
    }

    #[test]
    fn higher_cluster_gets_label_one() {
        let recs = records(&[(2.0, 0.0), (3.0, 1.0), (40.0, 9.0), (45.0, 10.0)]);
        for seed in 0..10 {
            let l = assign_hazard_labels(&recs, seed).unwrap();
            assert_eq!(l.labels, [0, 0, 1, 1]);
            assert!(l.centroids[1].iter().sum::<f64>() > l.centroids[0].iter().sum::<f64>());
            assert!((-1.0..=1.0).contains(&l.silhouette));
        }
    }

    #[test]
    fn labels_follow_rows_under_permutation() {
        let pts = [(2.0, 0.0), (3.0, 1.0), (40.0, 9.0), (45.0, 10.0)];
        let rev: Vec<_> = pts.iter().rev().copied().collect();
        let a = assign_hazard_labels(&records(&pts), 4).unwrap();
        let b = assign_hazard_labels(&records(&rev), 4).unwrap();
        let mut b_labels = b.labels.clone();
        b_labels.reverse();
        assert_eq!(a.labels, b_labels);
    }

    #[test]
    fn negated_geometry_flips_labels() {
        let pts = [(2.0, 0.0), (3.0, 1.0), (40.0, 9.0), (45.0, 10.0)];
        let m = Matrix::from_rows(2, pts.iter().map(|(a, b)| [*a, *b])).unwrap();
        let neg = Matrix::from_rows(2, pts.iter().map(|(a, b)| [-*a, -*b])).unwrap();
        let (l, ..) = label_hazards(&m, 1).unwrap();
        let (ln, ..) = label_hazards(&neg, 1).unwrap();
        assert!(l.iter().zip(&ln).all(|(a, b)| a != b));
    }
}
