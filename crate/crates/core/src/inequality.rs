//! Spatial inequality of provision scores and income-group disparities.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::{stats, Error, Result};

/// `sigma / sqrt(mu * (1 - mu))` with the population standard deviation.
/// Defined only for means strictly inside (0, 1).
pub fn inequality_index(values: &[f64]) -> Result<f64> {
    if values.len() < 2 {
        return Err(Error::TooFewValues {
            needed: 2,
            got: values.len(),
        });
    }
    let mu = stats::mean(values);
    if !(mu > 0.0 && mu < 1.0) {
        return Err(Error::MeanOutOfRange(mu));
    }
    Ok(stats::std_dev(values) / libm::sqrt(mu * (1.0 - mu)))
}

/// Indices below the median (`lower`) and at or above it (`upper`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MedianSplit {
    pub lower: Vec<usize>,
    pub upper: Vec<usize>,
    pub warnings: Vec<String>,
}

fn median_split(values: &[(usize, f64)]) -> Result<MedianSplit> {
    if values.len() < 2 {
        return Err(Error::TooFewValues {
            needed: 2,
            got: values.len(),
        });
    }
    let v: Vec<f64> = values.iter().map(|p| p.1).collect();
    let m = stats::median(&v);
    let (lower, upper): (Vec<(usize, f64)>, Vec<(usize, f64)>) = values.iter().partition(|p| p.1 < m);
    let mut warnings = Vec::new();
    if lower.is_empty() {
        warnings.push(String::from("all values tie at the median; lower group is empty"));
    }
    Ok(MedianSplit {
        lower: lower.into_iter().map(|p| p.0).collect(),
        upper: upper.into_iter().map(|p| p.0).collect(),
        warnings,
    })
}

/// `lower` = worse provisioned (score below the median), `upper` = better.
pub fn split_by_provision_median(scores: &[f64]) -> Result<MedianSplit> {
    let pairs: Vec<(usize, f64)> = scores.iter().copied().enumerate().collect();
    median_split(&pairs)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IncomeSplit {
    pub low: Vec<usize>,
    pub high: Vec<usize>,
    /// Tracts skipped for lacking an income value.
    pub dropped: usize,
    pub warnings: Vec<String>,
}

/// Splits tracts at the median of the incomes that are present.
pub fn split_by_income_median(incomes: &[Option<f64>]) -> Result<IncomeSplit> {
    let pairs: Vec<(usize, f64)> = incomes
        .iter()
        .enumerate()
        .filter_map(|(i, v)| v.map(|v| (i, v)))
        .collect();
    let dropped = incomes.len() - pairs.len();
    let s = median_split(&pairs)?;
    Ok(IncomeSplit {
        low: s.lower,
        high: s.upper,
        dropped,
        warnings: s.warnings,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IncomeGap {
    pub better_median: f64,
    pub worse_median: f64,
    /// `(better - worse) / worse`.
    pub gap: f64,
}

/// Relative gap between the median incomes of the two groups.
pub fn relative_gap(better: &[f64], worse: &[f64]) -> Result<IncomeGap> {
    if better.is_empty() {
        return Err(Error::EmptyGroup("better provisioned"));
    }
    if worse.is_empty() {
        return Err(Error::EmptyGroup("worse provisioned"));
    }
    let better_median = stats::median(better);
    let worse_median = stats::median(worse);
    if worse_median == 0.0 {
        return Err(Error::ZeroWorseMedian);
    }
    Ok(IncomeGap {
        better_median,
        worse_median,
        gap: (better_median - worse_median) / worse_median,
    })
}

/// Median-income gap between better- and worse-provisioned tracts. Tracts
/// without income are left out of both medians.
pub fn group_income_gap(scores: &[f64], incomes: &[Option<f64>]) -> Result<IncomeGap> {
    if scores.len() != incomes.len() {
        return Err(Error::LengthMismatch {
            left: scores.len(),
            right: incomes.len(),
        });
    }
    let split = split_by_provision_median(scores)?;
    let pick = |idx: &[usize]| -> Vec<f64> { idx.iter().filter_map(|&i| incomes[i]).collect() };
    relative_gap(&pick(&split.upper), &pick(&split.lower))
}

/// Right-continuous empirical CDF.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ecdf {
    sorted: Vec<f64>,
}

impl Ecdf {
    pub fn new(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyInput);
        }
        if let Some(v) = values.iter().find(|v| v.is_nan()) {
            return Err(Error::NonFiniteInput(*v));
        }
        Ok(Self {
            sorted: stats::sorted(values),
        })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    /// Share of values `<= x`.
    pub fn eval(&self, x: f64) -> f64 {
        self.sorted.partition_point(|&v| v <= x) as f64 / self.sorted.len() as f64
    }

    /// Distinct values with the CDF just after each jump.
    pub fn steps(&self) -> Vec<(f64, f64)> {
        let mut out: Vec<(f64, f64)> = Vec::new();
        let n = self.sorted.len() as f64;
        for (i, &v) in self.sorted.iter().enumerate() {
            let f = (i + 1) as f64 / n;
            match out.last_mut() {
                Some(last) if last.0 == v => last.1 = f,
                _ => out.push((v, f)),
            }
        }
        out
    }
}

pub fn ecdf(values: &[f64]) -> Result<Ecdf> {
    Ecdf::new(values)
}

/// `integral_0^1 |F_low(x) - F_high(x)| dx`, exact over the merged jump points.
pub fn ecdf_area_gap(low: &[f64], high: &[f64]) -> Result<f64> {
    if low.is_empty() {
        return Err(Error::EmptyGroup("low"));
    }
    if high.is_empty() {
        return Err(Error::EmptyGroup("high"));
    }
    let a = Ecdf::new(low)?;
    let b = Ecdf::new(high)?;
    let mut grid: Vec<f64> = low.iter().chain(high).map(|v| v.clamp(0.0, 1.0)).collect();
    grid.push(0.0);
    grid.push(1.0);
    let mut grid = stats::sorted(&grid);
    grid.dedup();
    let area = grid
        .windows(2)
        .map(|w| (w[1] - w[0]) * (a.eval(w[0]) - b.eval(w[0])).abs())
        .sum();
    Ok(area)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuintileBins {
    /// Level 1 (lowest) to 5 per value.
    pub levels: Vec<u8>,
    pub cuts: [f64; 4],
    pub warnings: Vec<String>,
}

/// Five levels split at the 20/40/60/80th percentiles (linear
/// interpolation). Bins are closed on the right: a value equal to a cut
/// stays in the lower level.
pub fn quintile_bins(values: &[f64]) -> Result<QuintileBins> {
    if values.len() < 5 {
        return Err(Error::TooFewValues {
            needed: 5,
            got: values.len(),
        });
    }
    let sorted = stats::sorted(values);
    let cuts = [0.2, 0.4, 0.6, 0.8].map(|p| stats::quantile_sorted(&sorted, p));
    let levels = values
        .iter()
        .map(|v| 1 + cuts.iter().filter(|c| v > c).count() as u8)
        .collect();
    let mut warnings = Vec::new();
    if sorted.first() == sorted.last() {
        warnings.push(String::from("all values equal; every tract in level 1"));
    }
    Ok(QuintileBins { levels, cuts, warnings })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupIncome {
    pub better_median: Option<f64>,
    pub worse_median: Option<f64>,
    pub gap: Option<f64>,
    pub better_n: usize,
    pub worse_n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncomeGroups {
    pub low_n: usize,
    pub high_n: usize,
    pub low_median_provision: Option<f64>,
    pub high_median_provision: Option<f64>,
    pub ecdf_area_gap: Option<f64>,
}

/// City-level inequality summary. Fields that cannot be computed (e.g. a
/// degenerate mean) are `None` with an explanation in `warnings`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InequalityReport {
    pub inequality_index: Option<f64>,
    pub mean_provision: f64,
    pub group_income: GroupIncome,
    pub income_groups: IncomeGroups,
    pub dropped_missing_income: usize,
    pub warnings: Vec<String>,
}

/// Full report for one city's quality scores and tract incomes.
pub fn inequality_report(scores: &[f64], incomes: &[Option<f64>]) -> Result<InequalityReport> {
    use alloc::format;
    if scores.len() != incomes.len() {
        return Err(Error::LengthMismatch {
            left: scores.len(),
            right: incomes.len(),
        });
    }
    let mut warnings = Vec::new();
    let index = match inequality_index(scores) {
        Ok(i) => Some(i),
        Err(e) => {
            warnings.push(format!("inequality index unavailable: {e}"));
            None
        }
    };

    let split = split_by_provision_median(scores)?;
    warnings.extend(split.warnings.iter().map(|w| format!("provision split: {w}")));
    let pick = |idx: &[usize]| -> Vec<f64> { idx.iter().filter_map(|&i| incomes[i]).collect() };
    let better = pick(&split.upper);
    let worse = pick(&split.lower);
    let gap = match relative_gap(&better, &worse) {
        Ok(g) => Some(g),
        Err(e) => {
            warnings.push(format!("income gap unavailable: {e}"));
            None
        }
    };
    let group_income = GroupIncome {
        better_median: gap.map(|g| g.better_median),
        worse_median: gap.map(|g| g.worse_median),
        gap: gap.map(|g| g.gap),
        better_n: better.len(),
        worse_n: worse.len(),
    };

    let dropped = incomes.iter().filter(|v| v.is_none()).count();
    let income_groups = match split_by_income_median(incomes) {
        Ok(s) => {
            warnings.extend(s.warnings.iter().map(|w| format!("income split: {w}")));
            let low: Vec<f64> = s.low.iter().map(|&i| scores[i]).collect();
            let high: Vec<f64> = s.high.iter().map(|&i| scores[i]).collect();
            let area = match ecdf_area_gap(&low, &high) {
                Ok(a) => Some(a),
                Err(e) => {
                    warnings.push(format!("ecdf gap unavailable: {e}"));
                    None
                }
            };
            IncomeGroups {
                low_n: low.len(),
                high_n: high.len(),
                low_median_provision: (!low.is_empty()).then(|| stats::median(&low)),
                high_median_provision: (!high.is_empty()).then(|| stats::median(&high)),
                ecdf_area_gap: area,
            }
        }
        Err(e) => {
            warnings.push(format!("income split unavailable: {e}"));
            IncomeGroups {
                low_n: 0,
                high_n: 0,
                low_median_provision: None,
                high_median_provision: None,
                ecdf_area_gap: None,
            }
        }
    };

    Ok(InequalityReport {
        inequality_index: index,
        mean_provision: stats::mean(scores),
        group_income,
        income_groups,
        dropped_missing_income: dropped,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use alloc::vec::Vec;
    use proptest::prelude::*;

    #[test]
    fn index_cases() {
        assert_eq!(inequality_index(&[0.5; 4]).unwrap(), 0.0);
        assert!((inequality_index(&[0.0, 0.0, 1.0, 1.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((inequality_index(&[0.2, 0.8]).unwrap() - 0.6).abs() < 1e-12);
    }

    #[test]
    fn index_rejects_bad_mean() {
        assert!(matches!(inequality_index(&[1.0, 1.0]), Err(Error::MeanOutOfRange(_))));
        assert!(matches!(inequality_index(&[0.0, 0.0]), Err(Error::MeanOutOfRange(_))));
        assert!(matches!(inequality_index(&[0.4]), Err(Error::TooFewValues { .. })));
    }

    #[test]
    fn provision_split_cases() {
        let s = split_by_provision_median(&[0.1, 0.9]).unwrap();
        assert_eq!((s.lower, s.upper), (vec![0], vec![1]));
        let s = split_by_provision_median(&[0.4; 3]).unwrap();
        assert!(s.lower.is_empty());
        assert_eq!(s.upper, [0, 1, 2]);
        assert_eq!(s.warnings.len(), 1);
        let s = split_by_provision_median(&[0.3, 0.1, 0.4, 0.2]).unwrap();
        assert_eq!((s.lower, s.upper), (vec![1, 3], vec![0, 2]));
    }

    #[test]
    fn income_split_cases() {
        let s = split_by_income_median(&[Some(30_000.0), None, Some(90_000.0)]).unwrap();
        assert_eq!((s.low, s.high, s.dropped), (vec![0], vec![2], 1));
        let s = split_by_income_median(&[Some(5.0); 4]).unwrap();
        assert!(s.low.is_empty());
        assert_eq!(s.warnings.len(), 1);
        let s = split_by_income_median(&[Some(10.0), Some(40.0), Some(20.0), Some(30.0)]).unwrap();
        assert_eq!((s.low, s.high), (vec![0, 2], vec![1, 3]));
        assert!(split_by_income_median(&[Some(1.0), None]).is_err());
    }

    #[test]
    fn income_gap_cases() {
        let inc = [Some(50.0), Some(60.0), Some(50.0), Some(60.0)];
        let g = group_income_gap(&[0.1, 0.2, 0.8, 0.9], &inc).unwrap();
        assert_eq!(g.gap, 0.0);
        let g = relative_gap(&[127_000.0], &[100_000.0]).unwrap();
        assert!((g.gap - 0.27).abs() < 1e-12);
        let g = relative_gap(&[50_000.0], &[40_000.0]).unwrap();
        assert!((g.gap - 0.25).abs() < 1e-15);
        assert_eq!(
            relative_gap(&[], &[1.0]).unwrap_err(),
            Error::EmptyGroup("better provisioned")
        );
        assert_eq!(relative_gap(&[1.0], &[0.0]).unwrap_err(), Error::ZeroWorseMedian);
    }

    #[test]
    fn ecdf_steps_and_eval() {
        let e = ecdf(&[0.3, 0.1, 0.3]).unwrap();
        assert_eq!(e.eval(0.0), 0.0);
        assert!((e.eval(0.1) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(e.eval(0.3), 1.0);
        assert_eq!(e.steps().len(), 2);
    }

    #[test]
    fn ecdf_gap_cases() {
        assert_eq!(ecdf_area_gap(&[0.2, 0.5], &[0.5, 0.2]).unwrap(), 0.0);
        assert_eq!(ecdf_area_gap(&[0.0], &[1.0]).unwrap(), 1.0);
        assert!((ecdf_area_gap(&[0.2, 0.4], &[0.6, 0.8]).unwrap() - 0.4).abs() < 1e-12);
        assert_eq!(ecdf_area_gap(&[], &[0.5]).unwrap_err(), Error::EmptyGroup("low"));
    }

    #[test]
    fn quintiles_of_one_to_ten() {
        let v: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_eq!(quintile_bins(&v).unwrap().levels, [1, 1, 2, 2, 3, 3, 4, 4, 5, 5]);
    }

    #[test]
    fn quintiles_degenerate() {
        let q = quintile_bins(&[0.7; 6]).unwrap();
        assert!(q.levels.iter().all(|l| *l == 1));
        assert_eq!(q.warnings.len(), 1);
        assert!(quintile_bins(&[1.0; 4]).is_err());
    }

    #[test]
    fn report_with_missing_income() {
        let scores = [1.0, 0.0, 0.5, 0.25, 0.75];
        let inc = [Some(90.0), Some(30.0), None, Some(40.0), Some(80.0)];
        let r = inequality_report(&scores, &inc).unwrap();
        assert_eq!(r.dropped_missing_income, 1);
        assert_eq!(r.income_groups.low_n + r.income_groups.high_n, 4);
        assert!(r.inequality_index.unwrap() > 0.0);
        assert!(r.group_income.gap.unwrap() > 0.0);
    }

    /// Brute-force area: midpoint rule on a fine grid.
    fn area_by_sampling(a: &[f64], b: &[f64]) -> f64 {
        let (ea, eb) = (ecdf(a).unwrap(), ecdf(b).unwrap());
        let n = 200_000;
        (0..n)
            .map(|i| {
                let x = (i as f64 + 0.5) / n as f64;
                (ea.eval(x) - eb.eval(x)).abs()
            })
            .sum::<f64>()
            / n as f64
    }

    proptest! {
        #[test]
        fn area_symmetric_and_bounded(
            a in proptest::collection::vec(0.0f64..=1.0, 1..20),
            b in proptest::collection::vec(0.0f64..=1.0, 1..20),
        ) {
            let ab = ecdf_area_gap(&a, &b).unwrap();
            let ba = ecdf_area_gap(&b, &a).unwrap();
            prop_assert!((ab - ba).abs() < 1e-12);
            prop_assert!((0.0..=1.0 + 1e-12).contains(&ab));
            prop_assert!((ab - area_by_sampling(&a, &b)).abs() < 1e-3);
        }

        #[test]
        fn non_crossing_area_is_mean_gap(
            a in proptest::collection::vec(0.0f64..0.5, 1..15),
            b in proptest::collection::vec(0.5f64..=1.0, 1..15),
        ) {
            let area = ecdf_area_gap(&a, &b).unwrap();
            let gap = (stats::mean(&a) - stats::mean(&b)).abs();
            prop_assert!((area - gap).abs() < 1e-12);
        }

        #[test]
        fn index_permutation_invariant(mut v in proptest::collection::vec(0.01f64..0.99, 2..30)) {
            let a = inequality_index(&v).unwrap();
            v.reverse();
            let b = inequality_index(&v).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&a));
        }

        #[test]
        fn splits_partition(v in proptest::collection::vec(0.0f64..1.0, 2..40)) {
            let s = split_by_provision_median(&v).unwrap();
            let mut all: Vec<usize> = s.lower.iter().chain(&s.upper).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..v.len()).collect::<Vec<_>>());
        }

        #[test]
        fn quintiles_monotone(mut v in proptest::collection::vec(-10.0f64..10.0, 5..40)) {
            v.sort_by(f64::total_cmp);
            let q = quintile_bins(&v).unwrap();
            prop_assert!(q.levels.windows(2).all(|w| w[0] <= w[1]));
        }
    }
}
