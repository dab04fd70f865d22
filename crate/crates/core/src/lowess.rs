//! Locally weighted linear regression (LOWESS) with tricube neighbourhood
//! weights and bisquare robustness passes, plus bootstrap percentile bands.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{seed, stats, Error, Result};

pub const MIN_POINTS: usize = 10;
const RESIDUAL_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LowessConfig {
    /// Share of points in every local neighbourhood.
    pub frac: f64,
    pub robust_iters: usize,
}

impl Default for LowessConfig {
    fn default() -> Self {
        Self {
            frac: 0.6,
            robust_iters: 1,
        }
    }
}

/// Pointwise percentile envelope on a curve's grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// Smoothed values at the distinct observed x, ascending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedCurve {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub band: Option<Band>,
}

fn tricube(u: f64) -> f64 {
    if u >= 1.0 {
        0.0
    } else {
        let t = 1.0 - u * u * u;
        t * t * t
    }
}

fn bisquare(u: f64) -> f64 {
    if u.abs() >= 1.0 {
        0.0
    } else {
        let t = 1.0 - u * u;
        t * t
    }
}

/// Data sorted by x together with per-point robustness weights.
struct Smoother {
    x: Vec<f64>,
    y: Vec<f64>,
    robustness: Vec<f64>,
    span: usize,
}

impl Smoother {
    fn new(x: &[f64], y: &[f64], frac: f64) -> Self {
        let mut order: Vec<usize> = (0..x.len()).collect();
        order.sort_by(|&a, &b| x[a].total_cmp(&x[b]).then(a.cmp(&b)));
        let n = x.len();
        let span = (libm::ceil(frac * n as f64) as usize).clamp(2.min(n), n);
        Self {
            x: order.iter().map(|&i| x[i]).collect(),
            y: order.iter().map(|&i| y[i]).collect(),
            robustness: vec![1.0; n],
            span,
        }
    }

    /// Contiguous window of the `span` points nearest to `x0`.
    fn window(&self, x0: f64) -> (usize, usize) {
        let n = self.x.len();
        let mut lo = self.x.partition_point(|&v| v < x0);
        let mut hi = lo;
        while hi - lo < self.span {
            if hi == n || (lo > 0 && x0 - self.x[lo - 1] <= self.x[hi] - x0) {
                lo -= 1;
            } else {
                hi += 1;
            }
        }
        (lo, hi)
    }

    fn fit_at(&self, x0: f64) -> f64 {
        let (lo, hi) = self.window(x0);
        let h = (x0 - self.x[lo]).max(self.x[hi - 1] - x0);
        if h <= 0.0 {
            // every neighbour sits on x0: average all tied points
            let a = self.x.partition_point(|&v| v < x0);
            let b = self.x.partition_point(|&v| v <= x0);
            return weighted_mean(&self.y[a..b], &self.robustness[a..b]);
        }
        let xs = &self.x[lo..hi];
        let ys = &self.y[lo..hi];
        let rw = &self.robustness[lo..hi];
        let w: Vec<f64> = xs
            .iter()
            .zip(rw)
            .map(|(&xi, &r)| tricube((xi - x0).abs() / h) * r)
            .collect();
        let sw: f64 = w.iter().sum();
        if sw <= 0.0 {
            return weighted_mean(ys, rw);
        }
        let xbar = w.iter().zip(xs).map(|(a, b)| a * b).sum::<f64>() / sw;
        let ybar = w.iter().zip(ys).map(|(a, b)| a * b).sum::<f64>() / sw;
        let mut sxx = 0.0;
        let mut sxy = 0.0;
        for ((wi, xi), yi) in w.iter().zip(xs).zip(ys) {
            sxx += wi * (xi - xbar) * (xi - xbar);
            sxy += wi * (xi - xbar) * (yi - ybar);
        }
        // all weight on a single x: no slope is identifiable
        if sxx <= 1e-12 * h * h * sw {
            return ybar;
        }
        ybar + sxy / sxx * (x0 - xbar)
    }

    fn fit_data(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.x.len());
        for (i, &x0) in self.x.iter().enumerate() {
            if i > 0 && self.x[i - 1] == x0 {
                let prev = out[i - 1];
                out.push(prev);
            } else {
                out.push(self.fit_at(x0));
            }
        }
        out
    }

    /// Runs the robustness passes, leaving the final weights in place.
    /// Residuals below `RESIDUAL_FLOOR` times the mean `|y|` count as exact.
    fn robustify(&mut self, iters: usize) {
        for _ in 0..iters {
            let fitted = self.fit_data();
            let floor = RESIDUAL_FLOOR * stats::mean(&self.y.iter().map(|v| v.abs()).collect::<Vec<_>>());
            let resid: Vec<f64> = self
                .y
                .iter()
                .zip(&fitted)
                .map(|(y, f)| if (y - f).abs() <= floor { 0.0 } else { y - f })
                .collect();
            let abs: Vec<f64> = resid.iter().map(|r| r.abs()).collect();
            let s = stats::median(&abs);
            if s > 0.0 {
                for (w, r) in self.robustness.iter_mut().zip(&resid) {
                    *w = bisquare(r / (6.0 * s));
                }
            } else {
                // limit of the bisquare as the scale goes to zero
                for (w, r) in self.robustness.iter_mut().zip(&abs) {
                    *w = if *r == 0.0 { 1.0 } else { 0.0 };
                }
            }
        }
    }
}

fn weighted_mean(y: &[f64], w: &[f64]) -> f64 {
    let sw: f64 = w.iter().sum();
    if sw > 0.0 {
        y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw
    } else {
        stats::mean(y)
    }
}

fn check(x: &[f64], y: &[f64], frac: f64) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.len() < MIN_POINTS {
        return Err(Error::TooFewPoints {
            needed: MIN_POINTS,
            got: x.len(),
        });
    }
    if !(frac > 0.0 && frac <= 1.0) {
        return Err(Error::InvalidFraction(frac));
    }
    if let Some(v) = x.iter().chain(y).find(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput(*v));
    }
    Ok(())
}

fn distinct_sorted(x: &[f64]) -> Vec<f64> {
    let mut grid = stats::sorted(x);
    grid.dedup();
    grid
}

/// Smooths `y` against `x`, evaluated at each distinct `x`.
pub fn lowess_fit(x: &[f64], y: &[f64], config: &LowessConfig) -> Result<FittedCurve> {
    check(x, y, config.frac)?;
    let grid = distinct_sorted(x);
    let fitted = lowess_predict_unchecked(x, y, config, &grid);
    Ok(FittedCurve {
        x: grid,
        y: fitted,
        band: None,
    })
}

/// Fits on `(x, y)` and evaluates the local regression at `query`.
pub fn lowess_predict(x: &[f64], y: &[f64], config: &LowessConfig, query: &[f64]) -> Result<Vec<f64>> {
    check(x, y, config.frac)?;
    Ok(lowess_predict_unchecked(x, y, config, query))
}

fn lowess_predict_unchecked(x: &[f64], y: &[f64], config: &LowessConfig, query: &[f64]) -> Vec<f64> {
    let mut s = Smoother::new(x, y, config.frac);
    s.robustify(config.robust_iters);
    query.iter().map(|&q| s.fit_at(q)).collect()
}

/// `replicates` refits on resamples drawn with replacement, each evaluated
/// on `grid`. Replicate `b` uses its own stream derived from `seed`.
pub fn bootstrap_replicates(
    x: &[f64],
    y: &[f64],
    config: &LowessConfig,
    grid: &[f64],
    replicates: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    check(x, y, config.frac)?;
    Ok((0..replicates)
        .map(|b| bootstrap_replicate(x, y, config, grid, seed::derive(seed, b as u64)))
        .collect())
}

/// One bootstrap refit; exposed so callers can spread replicates over threads.
pub fn bootstrap_replicate(x: &[f64], y: &[f64], config: &LowessConfig, grid: &[f64], seed: u64) -> Vec<f64> {
    let n = x.len();
    let mut rng = seed::rng(seed);
    let mut rx = Vec::with_capacity(n);
    let mut ry = Vec::with_capacity(n);
    for _ in 0..n {
        let i = rng.random_range(0..n);
        rx.push(x[i]);
        ry.push(y[i]);
    }
    lowess_predict_unchecked(&rx, &ry, config, grid)
}

/// Pointwise `(1 - level) / 2` and `(1 + level) / 2` percentiles.
pub fn band_from_replicates(replicates: &[Vec<f64>], level: f64) -> Result<Band> {
    let first = replicates.first().ok_or(Error::EmptyInput)?;
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidFraction(level));
    }
    let lo_p = (1.0 - level) / 2.0;
    let hi_p = 1.0 - lo_p;
    let mut lower = Vec::with_capacity(first.len());
    let mut upper = Vec::with_capacity(first.len());
    for j in 0..first.len() {
        let column: Vec<f64> = replicates.iter().map(|r| r[j]).collect();
        let sorted = stats::sorted(&column);
        lower.push(stats::quantile_sorted(&sorted, lo_p));
        upper.push(stats::quantile_sorted(&sorted, hi_p));
    }
    Ok(Band { lower, upper })
}

/// Percentile bootstrap band on the distinct-x grid of [`lowess_fit`].
pub fn bootstrap_band(
    x: &[f64],
    y: &[f64],
    config: &LowessConfig,
    replicates: usize,
    level: f64,
    seed: u64,
) -> Result<Band> {
    let grid = distinct_sorted(x);
    let reps = bootstrap_replicates(x, y, config, &grid, replicates, seed)?;
    band_from_replicates(&reps, level)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use rand::Rng;

    fn cfg(frac: f64, robust_iters: usize) -> LowessConfig {
        LowessConfig { frac, robust_iters }
    }

    #[test]
    fn reproduces_a_line() {
        let x: Vec<f64> = (0..25).map(|i| f64::from(i) * 0.7 - 3.0).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        for frac in [0.1, 0.3, 0.6, 1.0] {
            let c = lowess_fit(&x, &y, &cfg(frac, 2)).unwrap();
            for (xi, yi) in c.x.iter().zip(&c.y) {
                assert!((yi - (2.0 * xi + 1.0)).abs() < 1e-9, "frac {frac}");
            }
        }
    }

    #[test]
    fn constant_stays_constant() {
        let x: Vec<f64> = (0..15).map(f64::from).collect();
        let c = lowess_fit(&x, &[4.25; 15], &cfg(0.5, 1)).unwrap();
        assert!(c.y.iter().all(|v| (v - 4.25).abs() < 1e-12));
    }

    /// Reference errors from an independent LOWESS implementation
    /// (statsmodels 0.14, same frac and iteration count).
    #[test]
    fn sine_matches_reference_smoother() {
        let n = 200;
        let x: Vec<f64> = (0..n)
            .map(|i| 2.0 * core::f64::consts::PI * i as f64 / (n - 1) as f64)
            .collect();
        let y: Vec<f64> = x.iter().map(|v| libm::sin(*v)).collect();
        for (iters, full, interior) in [
            (0, 0.07327347705288284, 0.06310691961178883),
            (1, 0.07347868036704015, 0.06376777792243937),
        ] {
            let c = lowess_fit(&x, &y, &cfg(0.3, iters)).unwrap();
            let err: Vec<f64> = c.x.iter().zip(&c.y).map(|(a, b)| (libm::sin(*a) - b).abs()).collect();
            let max = |e: &[f64]| e.iter().copied().fold(0.0, f64::max);
            assert!((max(&err) - full).abs() < 1e-9);
            assert!((max(&err[20..180]) - interior).abs() < 1e-9);
        }
    }

    #[test]
    fn outlier_matches_reference_smoother() {
        let x: Vec<f64> = (0..30).map(f64::from).collect();
        let mut y: Vec<f64> = x.iter().map(|v| 0.5 * v).collect();
        y[15] = 200.0;
        let plain = lowess_fit(&x, &y, &cfg(0.4, 0)).unwrap();
        assert!((plain.y[14] - 34.33616796783497).abs() < 1e-9);
        assert!((plain.y[16] - 35.33616796783495).abs() < 1e-9);
    }

    #[test]
    fn too_few_points() {
        let x = [0.0; 9];
        assert_eq!(
            lowess_fit(&x, &x, &LowessConfig::default()).unwrap_err(),
            Error::TooFewPoints { needed: 10, got: 9 }
        );
    }

    #[test]
    fn bad_fraction() {
        let x: Vec<f64> = (0..12).map(f64::from).collect();
        assert!(matches!(
            lowess_fit(&x, &x, &cfg(0.0, 0)),
            Err(Error::InvalidFraction(_))
        ));
        assert!(matches!(
            lowess_fit(&x, &x, &cfg(1.5, 0)),
            Err(Error::InvalidFraction(_))
        ));
    }

    #[test]
    fn stacked_x_falls_back_to_local_mean() {
        // nine copies at 0 and one point far away: the span-2 window around 0
        // holds only x = 0
        let mut x = vec![0.0; 9];
        x.push(10.0);
        let mut y: Vec<f64> = (0..9).map(f64::from).collect();
        y.push(100.0);
        let c = lowess_fit(&x, &y, &cfg(0.2, 0)).unwrap();
        assert!((c.y[0] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn robustness_damps_outlier() {
        let x: Vec<f64> = (0..30).map(f64::from).collect();
        let mut y: Vec<f64> = x.iter().map(|v| 0.5 * v).collect();
        y[15] = 200.0;
        let plain = lowess_fit(&x, &y, &cfg(0.4, 0)).unwrap();
        let robust = lowess_fit(&x, &y, &cfg(0.4, 3)).unwrap();
        let e_plain = (plain.y[14] - 7.0).abs();
        let e_robust = (robust.y[14] - 7.0).abs();
        assert!(e_robust < e_plain);
        assert!(e_robust < 0.5);
    }

    #[test]
    fn duplication_leaves_fit_unchanged() {
        let mut rng = seed::rng(3);
        let x: Vec<f64> = (0..40).map(|_| rng.random_range(0.0..10.0)).collect();
        let y: Vec<f64> = x.iter().map(|v| libm::sin(*v) + rng.random_range(-0.2..0.2)).collect();
        let x2: Vec<f64> = x.iter().chain(&x).copied().collect();
        let y2: Vec<f64> = y.iter().chain(&y).copied().collect();
        for frac in [0.25, 0.33, 0.6] {
            let a = lowess_fit(&x, &y, &cfg(frac, 1)).unwrap();
            let b = lowess_fit(&x2, &y2, &cfg(frac, 1)).unwrap();
            assert_eq!(a.x, b.x);
            for (p, q) in a.y.iter().zip(&b.y) {
                assert!((p - q).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn zero_noise_band_collapses() {
        let x: Vec<f64> = (0..30).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|v| 3.0 - 0.25 * v).collect();
        let band = bootstrap_band(&x, &y, &LowessConfig::default(), 200, 0.95, 1).unwrap();
        for (lo, hi) in band.lower.iter().zip(&band.upper) {
            assert!(hi - lo < 1e-6);
        }
    }

    fn noisy_line(n: usize, seed_: u64) -> (Vec<f64>, Vec<f64>) {
        let mut rng = seed::rng(seed_);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..10.0)).collect();
        let y: Vec<f64> = x.iter().map(|v| 0.8 * v - 2.0 + rng.random_range(-1.0..1.0)).collect();
        (x, y)
    }

    #[test]
    fn estimate_inside_replicate_range() {
        let (x, y) = noisy_line(80, 4);
        let config = LowessConfig::default();
        let curve = lowess_fit(&x, &y, &config).unwrap();
        let reps = bootstrap_replicates(&x, &y, &config, &curve.x, 200, 9).unwrap();
        for (j, est) in curve.y.iter().enumerate() {
            let lo = reps.iter().map(|r| r[j]).fold(f64::INFINITY, f64::min);
            let hi = reps.iter().map(|r| r[j]).fold(f64::NEG_INFINITY, f64::max);
            assert!(*est >= lo && *est <= hi);
        }
    }

    #[test]
    fn more_replicates_do_not_widen_band() {
        let (x, y) = noisy_line(80, 5);
        let config = LowessConfig::default();
        let width = |b: usize| {
            let band = bootstrap_band(&x, &y, &config, b, 0.95, 11).unwrap();
            let w: Vec<f64> = band.lower.iter().zip(&band.upper).map(|(l, u)| u - l).collect();
            stats::median(&w)
        };
        assert!(width(200) <= 1.2 * width(50));
    }

    #[test]
    fn band_is_deterministic() {
        let (x, y) = noisy_line(40, 6);
        let config = LowessConfig::default();
        assert_eq!(
            bootstrap_band(&x, &y, &config, 30, 0.95, 2).unwrap(),
            bootstrap_band(&x, &y, &config, 30, 0.95, 2).unwrap()
        );
    }
}
