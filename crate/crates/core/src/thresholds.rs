//! Optimal-quantity thresholds read off smoothed SHAP dependence curves.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::lowess::{band_from_replicates, bootstrap_replicates, lowess_fit, FittedCurve, LowessConfig};
use crate::shap::DependenceSeries;
use crate::{Error, Result};

/// Shape of a feature's contribution to the high-hazard class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Pattern {
    /// Contribution turns from negative to positive once.
    CrossesUpward,
    /// Falls from the low end to a negative high end without turning up.
    Decreasing,
    AlwaysNegative,
    AlwaysPositive,
    /// Several upward crossings, or one that does not stay positive.
    Mixed,
}

impl Pattern {
    pub fn as_str(self) -> &'static str {
        match self {
            Pattern::CrossesUpward => "crosses_upward",
            Pattern::Decreasing => "decreasing",
            Pattern::AlwaysNegative => "always_negative",
            Pattern::AlwaysPositive => "always_positive",
            Pattern::Mixed => "mixed",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            Pattern::CrossesUpward,
            Pattern::Decreasing,
            Pattern::AlwaysNegative,
            Pattern::AlwaysPositive,
            Pattern::Mixed,
        ]
        .into_iter()
        .find(|p| p.as_str() == s)
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdEntry {
    pub feature: usize,
    pub pattern: Pattern,
    /// Optimal level in feature units.
    pub threshold: f64,
    pub crossings: Vec<f64>,
    pub note: String,
}

/// Per-feature entries in feature order.
pub type ThresholdProfile = Vec<ThresholdEntry>;

/// x positions where the curve goes from negative to non-negative, linearly
/// interpolated between neighbouring grid points.
pub fn find_upward_crossings(curve: &FittedCurve) -> Vec<f64> {
    let mut out = Vec::new();
    for i in 1..curve.y.len() {
        let (y0, y1) = (curve.y[i - 1], curve.y[i]);
        if y0 < 0.0 && y1 >= 0.0 {
            let (x0, x1) = (curve.x[i - 1], curve.x[i]);
            out.push(x0 + (0.0 - y0) * (x1 - x0) / (y1 - y0));
        }
    }
    out
}

/// Applies the pattern rules to a fitted curve. `range` is the observed
/// (min, max) of the feature and supplies the fallback thresholds.
pub fn classify_and_threshold(feature: usize, curve: &FittedCurve, range: (f64, f64)) -> ThresholdEntry {
    let (min, max) = range;
    let crossings = find_upward_crossings(curve);
    let first = curve.y.first().copied().unwrap_or(0.0);
    let last = curve.y.last().copied().unwrap_or(0.0);
    let entry = |pattern, threshold, note: &str| ThresholdEntry {
        feature,
        pattern,
        threshold,
        crossings: crossings.clone(),
        note: note.into(),
    };
    match crossings.len() {
        0 => {
            if last < first && last < 0.0 {
                entry(
                    Pattern::Decreasing,
                    max,
                    "no upward crossing; decreasing trend, maximum used",
                )
            } else if curve.y.iter().all(|v| *v <= 0.0) {
                entry(Pattern::AlwaysNegative, max, "curve never positive; maximum used")
            } else {
                entry(
                    Pattern::AlwaysPositive,
                    min,
                    "curve never negative; minimum used (extension beyond the crossing/maximum rules)",
                )
            }
        }
        1 if last >= 0.0 => entry(Pattern::CrossesUpward, crossings[0], "single upward crossing"),
        1 => entry(
            Pattern::Mixed,
            crossings[0],
            "warning: upward crossing does not persist; crossing used",
        ),
        _ => entry(
            Pattern::Mixed,
            crossings[0],
            "warning: multiple upward crossings; first used",
        ),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdConfig {
    pub lowess: LowessConfig,
    /// Bootstrap replicates for the confidence band; 0 skips the band.
    pub bootstrap: usize,
    pub level: f64,
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        Self {
            lowess: LowessConfig::default(),
            bootstrap: 200,
            level: 0.95,
        }
    }
}

/// Smooths a dependence series, attaches a bootstrap band and derives the
/// threshold entry.
pub fn derive_threshold(
    series: &DependenceSeries,
    range: (f64, f64),
    config: &ThresholdConfig,
    seed: u64,
) -> Result<(FittedCurve, ThresholdEntry)> {
    if !(range.0 <= range.1) {
        return Err(Error::NonFiniteInput(range.0));
    }
    let mut curve = lowess_fit(&series.x, &series.shap, &config.lowess)?;
    if config.bootstrap > 0 {
        let reps = bootstrap_replicates(
            &series.x,
            &series.shap,
            &config.lowess,
            &curve.x,
            config.bootstrap,
            seed,
        )?;
        curve.band = Some(band_from_replicates(&reps, config.level)?);
    }
    let entry = classify_and_threshold(series.feature, &curve, range);
    Ok((curve, entry))
}
