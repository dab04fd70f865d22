//! Quality- and quantity-based provision scores.
//!
//! Quality: `1 - minmax(sum_f w_f * |x_f - t_f|)` with softmax-normalized
//! SHAP weights and per-feature optimal levels. Quantity: the same formula
//! with equal weights and the city maximum as every optimal level.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::{Error, Matrix, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    pub raw: Vec<f64>,
    pub normalized: Vec<f64>,
}

/// `exp(w_i) / sum_j exp(w_j)`, shifted by the maximum before exponentiating.
pub fn softmax_weights(raw: &[f64]) -> Result<WeightVector> {
    if raw.is_empty() {
        return Err(Error::EmptyInput);
    }
    if let Some(v) = raw.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput(*v));
    }
    let max = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = raw.iter().map(|v| libm::exp(v - max)).collect();
    let total: f64 = exps.iter().sum();
    Ok(WeightVector {
        raw: raw.to_vec(),
        normalized: exps.iter().map(|e| e / total).collect(),
    })
}

/// Per-column min and max.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinMaxScaler {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl MinMaxScaler {
    pub fn fit(x: &Matrix) -> Result<Self> {
        if x.is_empty() {
            return Err(Error::EmptyInput);
        }
        let mut min = vec![f64::INFINITY; x.cols()];
        let mut max = vec![f64::NEG_INFINITY; x.cols()];
        for row in x.iter_rows() {
            for (j, v) in row.iter().enumerate() {
                min[j] = min[j].min(*v);
                max[j] = max[j].max(*v);
            }
        }
        Ok(Self { min, max })
    }

    /// Maps `v` of column `j` into [0, 1]; constant columns map to 0.
    pub fn transform_value(&self, j: usize, v: f64) -> f64 {
        let span = self.max[j] - self.min[j];
        if span > 0.0 {
            (v - self.min[j]) / span
        } else {
            0.0
        }
    }

    pub fn transform(&self, x: &Matrix) -> Matrix {
        let mut out = x.clone();
        for i in 0..x.rows() {
            for j in 0..x.cols() {
                out.set(i, j, self.transform_value(j, x.get(i, j)));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scaled {
    pub values: Matrix,
    pub scaler: MinMaxScaler,
    pub warnings: Vec<String>,
}

pub fn feature_scale(x: &Matrix) -> Result<Scaled> {
    let scaler = MinMaxScaler::fit(x)?;
    let warnings = (0..x.cols())
        .filter(|&j| scaler.max[j] == scaler.min[j])
        .map(|j| format!("feature {j} is constant; scaled to zeros"))
        .collect();
    Ok(Scaled {
        values: scaler.transform(x),
        scaler,
        warnings,
    })
}

/// Feature space in which deviations from the optimal level are measured.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeviationSpace {
    /// Per-city min-max scaled features (thresholds scaled alike).
    #[default]
    Scaled,
    /// Features in their recorded units.
    Raw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProvisionScores {
    /// `1 - minmax(deviation)`; 1 is best.
    pub scores: Vec<f64>,
    /// Weighted deviation before normalization.
    pub deviation: Vec<f64>,
    pub warnings: Vec<String>,
}

/// Min-max normalizes `deviation` and flips it. A city with no spread in
/// deviation scores 1 everywhere.
pub fn flip_normalize(deviation: Vec<f64>) -> ProvisionScores {
    let lo = deviation.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = deviation.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut warnings = Vec::new();
    let scores = if hi > lo {
        deviation
            .iter()
            .map(|y| (1.0 - (y - lo) / (hi - lo)).clamp(0.0, 1.0))
            .collect()
    } else {
        warnings.push(String::from("all tracts share one deviation; every score set to 1"));
        vec![1.0; deviation.len()]
    };
    ProvisionScores {
        scores,
        deviation,
        warnings,
    }
}

/// `sum_f w_f * |x_f - t_f|` per row.
pub fn weighted_deviation(x: &Matrix, thresholds: &[f64], weights: &[f64]) -> Result<Vec<f64>> {
    if thresholds.len() < x.cols() {
        return Err(Error::MissingThreshold(thresholds.len()));
    }
    if weights.len() < x.cols() {
        return Err(Error::MissingWeight(weights.len()));
    }
    if let Some(j) = thresholds.iter().position(|t| !t.is_finite()) {
        return Err(Error::MissingThreshold(j));
    }
    if let Some(j) = weights.iter().position(|w| !w.is_finite()) {
        return Err(Error::MissingWeight(j));
    }
    Ok(x.iter_rows()
        .map(|row| {
            row.iter()
                .zip(thresholds)
                .zip(weights)
                .map(|((v, t), w)| w * (v - t).abs())
                .sum()
        })
        .collect())
}

fn provision(x: &Matrix, thresholds: &[f64], weights: &[f64], space: DeviationSpace) -> Result<ProvisionScores> {
    if x.is_empty() {
        return Err(Error::EmptyInput);
    }
    let deviation = match space {
        DeviationSpace::Raw => weighted_deviation(x, thresholds, weights)?,
        DeviationSpace::Scaled => {
            if thresholds.len() < x.cols() {
                return Err(Error::MissingThreshold(thresholds.len()));
            }
            let scaled = feature_scale(x)?;
            let t: Vec<f64> = thresholds
                .iter()
                .take(x.cols())
                .enumerate()
                .map(|(j, t)| scaled.scaler.transform_value(j, *t))
                .collect();
            let mut out = flip_normalize(weighted_deviation(&scaled.values, &t, weights)?);
            let mut warnings = scaled.warnings;
            warnings.append(&mut out.warnings);
            out.warnings = warnings;
            return Ok(out);
        }
    };
    Ok(flip_normalize(deviation))
}

/// Quality provision of every row of `x` given optimal levels `thresholds`
/// (feature units) and weights.
pub fn quality_provision(
    x: &Matrix,
    thresholds: &[f64],
    weights: &WeightVector,
    space: DeviationSpace,
) -> Result<ProvisionScores> {
    provision(x, thresholds, &weights.normalized, space)
}

/// Quantity provision: equal weights, optimal level = city maximum.
pub fn quantity_provision(x: &Matrix, space: DeviationSpace) -> Result<ProvisionScores> {
    let scaler = MinMaxScaler::fit(x)?;
    let weights = vec![1.0 / x.cols() as f64; x.cols()];
    provision(x, &scaler.max, &weights, space)
}
