//! Census tract records and the feature matrix handed to the model.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::{Error, Matrix, Result};

/// The six infrastructure features, in matrix column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Feature {
    Road,
    Rail,
    HouseAge,
    Park,
    Walkability,
    PoiDensity,
}

pub const N_FEATURES: usize = 6;

impl Feature {
    pub const ALL: [Feature; N_FEATURES] = [
        Feature::Road,
        Feature::Rail,
        Feature::HouseAge,
        Feature::Park,
        Feature::Walkability,
        Feature::PoiDensity,
    ];

    /// Column name in the tract CSV.
    pub fn column(self) -> &'static str {
        match self {
            Feature::Road => "road_pct",
            Feature::Rail => "rail_pct",
            Feature::HouseAge => "house_age_pct",
            Feature::Park => "park_pct",
            Feature::Walkability => "walkability",
            Feature::PoiDensity => "poi_density",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn from_column(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.column() == name)
    }

    /// Closed valid range. Percent features are stored on a 0-100 scale.
    pub fn bounds(self) -> (f64, f64) {
        match self {
            Feature::Road | Feature::Rail | Feature::HouseAge | Feature::Park => (0.0, 100.0),
            Feature::Walkability => (1.0, 20.0),
            Feature::PoiDensity => (0.0, f64::INFINITY),
        }
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.column())
    }
}

/// One census tract of one city.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TractRecord {
    pub geoid: String,
    pub city: String,
    pub road_pct: f64,
    pub rail_pct: f64,
    pub house_age_pct: f64,
    pub park_pct: f64,
    pub walkability: f64,
    pub poi_density: f64,
    pub heat_days: f64,
    pub pm25_days: f64,
    pub median_income: Option<f64>,
}

impl TractRecord {
    pub fn features(&self) -> [f64; N_FEATURES] {
        [
            self.road_pct,
            self.rail_pct,
            self.house_age_pct,
            self.park_pct,
            self.walkability,
            self.poi_density,
        ]
    }

    pub fn feature(&self, f: Feature) -> f64 {
        self.features()[f.index()]
    }

    pub fn hazards(&self) -> [f64; 2] {
        [self.heat_days, self.pm25_days]
    }

    /// Checks value ranges. `row` is only used to locate errors.
    pub fn validate(&self, row: usize) -> Result<()> {
        let out_of_range = |column: &str, value: f64, bound: String| Error::OutOfRange {
            row,
            column: column.to_string(),
            value,
            bound,
        };
        for f in Feature::ALL {
            let v = self.feature(f);
            let (lo, hi) = f.bounds();
            if !v.is_finite() || v < lo || v > hi {
                let bound = if hi.is_finite() {
                    format!("[{lo}, {hi}]")
                } else {
                    format!(">= {lo} and finite")
                };
                return Err(out_of_range(f.column(), v, bound));
            }
        }
        for (column, v) in [("heat_days", self.heat_days), ("pm25_days", self.pm25_days)] {
            if !v.is_finite() || v < 0.0 {
                return Err(out_of_range(column, v, ">= 0 and finite".into()));
            }
        }
        if let Some(v) = self.median_income {
            if !v.is_finite() || v < 0.0 {
                return Err(out_of_range("median_income", v, ">= 0 and finite".into()));
            }
        }
        Ok(())
    }
}

/// Validates every record and rejects repeated geoids.
pub fn validate_records(records: &[TractRecord]) -> Result<()> {
    let mut seen = BTreeSet::new();
    for (i, r) in records.iter().enumerate() {
        r.validate(i + 1)?;
        if !seen.insert(r.geoid.as_str()) {
            return Err(Error::DuplicateGeoid(r.geoid.clone()));
        }
    }
    Ok(())
}

/// Tract-by-feature values with the geoid of every row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub names: Vec<String>,
    pub geoids: Vec<String>,
    pub values: Matrix,
}

impl FeatureMatrix {
    pub fn rows(&self) -> usize {
        self.values.rows()
    }
}

pub fn feature_matrix(records: &[TractRecord]) -> Result<FeatureMatrix> {
    if records.is_empty() {
        return Err(Error::EmptyInput);
    }
    let values = Matrix::from_rows(N_FEATURES, records.iter().map(|r| r.features()))?;
    Ok(FeatureMatrix {
        names: Feature::ALL.iter().map(|f| f.column().to_string()).collect(),
        geoids: records.iter().map(|r| r.geoid.clone()).collect(),
        values,
    })
}

/// `n x 2` matrix of (heat_days, pm25_days).
pub fn hazard_matrix(records: &[TractRecord]) -> Matrix {
    Matrix::from_rows(2, records.iter().map(|r| r.hazards())).expect("two hazard columns")
}

#[cfg(test)]
pub(crate) fn sample_record(geoid: &str) -> TractRecord {
    TractRecord {
        geoid: geoid.to_string(),
        city: "testville".to_string(),
        road_pct: 12.5,
        rail_pct: 3.0,
        house_age_pct: 40.0,
        park_pct: 55.0,
        walkability: 9.5,
        poi_density: 812.5,
        heat_days: 4.0,
        pm25_days: 1.5,
        median_income: Some(52_000.0),
    }
}
