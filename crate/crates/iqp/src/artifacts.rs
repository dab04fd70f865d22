//! Flat CSV/JSON artifacts written by the pipeline stages and read back by
//! downstream stages.

use std::path::{Path, PathBuf};

use iqp_core::gbdt::{Confusion, Hyperparameters, Trial};
use iqp_core::inequality::{Ecdf, InequalityReport};
use iqp_core::lowess::FittedCurve;
use iqp_core::shap::{DependenceSeries, ShapMatrix};
use iqp_core::thresholds::{Pattern, ThresholdEntry};
use iqp_core::tract::Feature;
use iqp_core::Matrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const LABELS: &str = "labels.csv";
pub const TRAINING: &str = "training.json";
pub const MODEL: &str = "model.json";
pub const SHAP: &str = "shap.csv";
pub const WEIGHTS: &str = "weights.csv";
pub const DEPENDENCE: &str = "dependence.csv";
pub const THRESHOLDS: &str = "thresholds.csv";
pub const PROVISION: &str = "provision.csv";
pub const INEQUALITY: &str = "inequality.json";
pub const ECDF: &str = "ecdf.csv";

/// Renders rows to CSV bytes.
pub fn csv_bytes<I, R>(header: &[&str], rows: I) -> Vec<u8>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(r.into_iter().collect::<Vec<_>>())
            .expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

pub fn json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(value).expect("artifact serializes");
    v.push(b'\n');
    v
}

/// Reads an upstream artifact; a missing file is reported as such.
pub fn read_upstream(path: &Path) -> Result<String> {
    match std::fs::read_to_string(path) {
        Ok(s) => Ok(s),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(Error::MissingUpstreamArtifact(path.to_path_buf())),
        Err(e) => Err(Error::io(path, e)),
    }
}

struct Table {
    path: PathBuf,
    header: Vec<String>,
    rows: Vec<csv::StringRecord>,
}

impl Table {
    fn read(path: &Path, expected: Option<&[&str]>) -> Result<Self> {
        let text = read_upstream(path)?;
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let header: Vec<String> = rdr
            .headers()
            .map_err(|e| Error::format(path, e))?
            .iter()
            .map(String::from)
            .collect();
        if let Some(exp) = expected {
            if header != exp {
                return Err(Error::format(path, format!("unexpected header {header:?}")));
            }
        }
        let rows = rdr
            .records()
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::format(path, e))?;
        Ok(Self {
            path: path.to_path_buf(),
            header,
            rows,
        })
    }

    fn num(&self, row: usize, col: usize) -> Result<f64> {
        let cell = self.rows[row].get(col).unwrap_or("");
        cell.parse()
            .map_err(|_| Error::format(&self.path, format!("row {}: bad number {cell:?}", row + 1)))
    }

    fn text(&self, row: usize, col: usize) -> &str {
        self.rows[row].get(col).unwrap_or("")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Labels {
    pub geoids: Vec<String>,
    pub labels: Vec<u8>,
    pub silhouette: f64,
}

const LABELS_HEADER: [&str; 3] = ["geoid", "label", "silhouette"];

pub fn labels_csv(l: &Labels) -> Vec<u8> {
    csv_bytes(
        &LABELS_HEADER,
        l.geoids
            .iter()
            .zip(&l.labels)
            .map(|(g, y)| [g.clone(), y.to_string(), l.silhouette.to_string()]),
    )
}

pub fn read_labels(path: &Path) -> Result<Labels> {
    let t = Table::read(path, Some(&LABELS_HEADER))?;
    let mut out = Labels {
        geoids: Vec::new(),
        labels: Vec::new(),
        silhouette: f64::NAN,
    };
    for i in 0..t.rows.len() {
        out.geoids.push(t.text(i, 0).into());
        out.labels.push(match t.text(i, 1) {
            "0" => 0,
            "1" => 1,
            other => return Err(Error::format(path, format!("row {}: bad label {other:?}", i + 1))),
        });
        out.silhouette = t.num(i, 2)?;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub train_geoids: Vec<String>,
    pub test_geoids: Vec<String>,
    pub synthetic_rows: usize,
    pub best: Hyperparameters,
    pub best_cv_f1: f64,
    pub test_f1: f64,
    pub test_confusion: Confusion,
    pub final_training_loss: f64,
    pub trials: Vec<Trial>,
}

pub fn read_training(path: &Path) -> Result<TrainingReport> {
    serde_json::from_str(&read_upstream(path)?).map_err(|e| Error::format(path, e))
}

fn shap_header(names: &[String]) -> Vec<String> {
    let mut h = vec!["geoid".to_string()];
    h.extend(names.iter().cloned());
    h.push("base_value".into());
    h.push("margin".into());
    h
}

pub fn shap_csv(s: &ShapMatrix) -> Vec<u8> {
    let header = shap_header(&s.feature_names);
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    csv_bytes(
        &header,
        s.values.iter_rows().enumerate().map(|(i, phi)| {
            let mut r = vec![s.geoids[i].clone()];
            r.extend(phi.iter().map(f64::to_string));
            r.push(s.base_value.to_string());
            r.push(s.margins[i].to_string());
            r
        }),
    )
}

pub fn read_shap(path: &Path, tag: &str) -> Result<ShapMatrix> {
    let t = Table::read(path, None)?;
    let n = t.header.len();
    if n < 4 || t.header[0] != "geoid" || t.header[n - 2] != "base_value" || t.header[n - 1] != "margin" {
        return Err(Error::format(path, "not a shap table"));
    }
    let names: Vec<String> = t.header[1..n - 2].to_vec();
    let mut values = Matrix::zeros(0, names.len());
    let mut geoids = Vec::new();
    let mut margins = Vec::new();
    let mut base_value = f64::NAN;
    for i in 0..t.rows.len() {
        geoids.push(t.text(i, 0).to_string());
        let phi = (1..n - 2).map(|j| t.num(i, j)).collect::<Result<Vec<_>>>()?;
        values.push_row(&phi)?;
        base_value = t.num(i, n - 2)?;
        margins.push(t.num(i, n - 1)?);
    }
    Ok(ShapMatrix {
        geoids,
        feature_names: names,
        values,
        base_value,
        margins,
        tag: tag.into(),
    })
}

const WEIGHTS_HEADER: [&str; 3] = ["feature", "importance", "weight"];

pub fn weights_csv(names: &[String], importance: &[f64], weights: &[f64]) -> Vec<u8> {
    csv_bytes(
        &WEIGHTS_HEADER,
        names
            .iter()
            .zip(importance)
            .zip(weights)
            .map(|((n, i), w)| [n.clone(), i.to_string(), w.to_string()]),
    )
}

/// `(feature, importance, weight)` rows.
pub fn read_weights(path: &Path) -> Result<Vec<(String, f64, f64)>> {
    let t = Table::read(path, Some(&WEIGHTS_HEADER))?;
    (0..t.rows.len())
        .map(|i| Ok((t.text(i, 0).to_string(), t.num(i, 1)?, t.num(i, 2)?)))
        .collect()
}

const DEPENDENCE_HEADER: [&str; 6] = ["feature", "x", "shap", "fitted", "band_lo", "band_hi"];

/// Rows of one feature's dependence export. `series` is sorted by x and
/// every x sits on the curve grid.
pub fn dependence_rows(name: &str, series: &DependenceSeries, curve: &FittedCurve) -> Vec<[String; 6]> {
    series
        .x
        .iter()
        .zip(&series.shap)
        .map(|(&x, &phi)| {
            let g = curve.x.partition_point(|&v| v < x);
            let (lo, hi) = match &curve.band {
                Some(b) => (b.lower[g].to_string(), b.upper[g].to_string()),
                None => (String::new(), String::new()),
            };
            [
                name.to_string(),
                x.to_string(),
                phi.to_string(),
                curve.y[g].to_string(),
                lo,
                hi,
            ]
        })
        .collect()
}

pub fn dependence_csv(rows: impl IntoIterator<Item = [String; 6]>) -> Vec<u8> {
    csv_bytes(&DEPENDENCE_HEADER, rows)
}

const THRESHOLDS_HEADER: [&str; 6] = [
    "city",
    "feature",
    "pattern",
    "threshold",
    "n_crossings",
    "band_coverage_note",
];

/// Band value at `t`, linearly interpolated on the curve grid.
fn band_at(curve: &FittedCurve, t: f64) -> Option<(f64, f64)> {
    let b = curve.band.as_ref()?;
    let g = curve.x.partition_point(|&v| v < t);
    if g < curve.x.len() && curve.x[g] == t || g == 0 {
        let g = g.min(curve.x.len() - 1);
        return Some((b.lower[g], b.upper[g]));
    }
    if g == curve.x.len() {
        return Some((b.lower[g - 1], b.upper[g - 1]));
    }
    let w = (t - curve.x[g - 1]) / (curve.x[g] - curve.x[g - 1]);
    let lerp = |v: &[f64]| v[g - 1] + w * (v[g] - v[g - 1]);
    Some((lerp(&b.lower), lerp(&b.upper)))
}

/// Describes the band at the threshold and carries the classification note.
pub fn coverage_note(entry: &ThresholdEntry, curve: &FittedCurve) -> String {
    let band = match band_at(curve, entry.threshold) {
        Some((lo, hi)) => {
            let verdict = if lo <= 0.0 && hi >= 0.0 {
                "covers 0"
            } else {
                "excludes 0"
            };
            format!("band at threshold [{lo:.6}, {hi:.6}] {verdict}")
        }
        None => "no band".to_string(),
    };
    if entry.note.is_empty() {
        band
    } else {
        format!("{band}; {}", entry.note)
    }
}

pub fn thresholds_csv(city: &str, rows: &[(ThresholdEntry, String)]) -> Vec<u8> {
    csv_bytes(
        &THRESHOLDS_HEADER,
        rows.iter().map(|(e, note)| {
            let name = Feature::from_index(e.feature).map_or_else(|| e.feature.to_string(), |f| f.column().to_string());
            [
                city.to_string(),
                name,
                e.pattern.as_str().to_string(),
                e.threshold.to_string(),
                e.crossings.len().to_string(),
                note.clone(),
            ]
        }),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdRow {
    pub feature: Feature,
    pub pattern: Pattern,
    pub threshold: f64,
    pub n_crossings: usize,
}

pub fn read_thresholds(path: &Path) -> Result<Vec<ThresholdRow>> {
    let t = Table::read(path, Some(&THRESHOLDS_HEADER))?;
    (0..t.rows.len())
        .map(|i| {
            let bad = |m: String| Error::format(path, format!("row {}: {m}", i + 1));
            Ok(ThresholdRow {
                feature: Feature::from_column(t.text(i, 1))
                    .ok_or_else(|| bad(format!("unknown feature {:?}", t.text(i, 1))))?,
                pattern: Pattern::parse(t.text(i, 2))
                    .ok_or_else(|| bad(format!("unknown pattern {:?}", t.text(i, 2))))?,
                threshold: t.num(i, 3)?,
                n_crossings: t.text(i, 4).parse().map_err(|_| bad("bad crossing count".into()))?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProvisionRow {
    pub geoid: String,
    pub quality: f64,
    pub quantity: f64,
    pub raw_deviation: f64,
    pub quality_quintile: u8,
    pub quantity_quintile: u8,
}

const PROVISION_HEADER: [&str; 6] = [
    "geoid",
    "quality_provision",
    "quantity_provision",
    "raw_deviation",
    "quality_quintile",
    "quantity_quintile",
];

pub fn provision_csv(rows: &[ProvisionRow]) -> Vec<u8> {
    csv_bytes(
        &PROVISION_HEADER,
        rows.iter().map(|r| {
            [
                r.geoid.clone(),
                r.quality.to_string(),
                r.quantity.to_string(),
                r.raw_deviation.to_string(),
                r.quality_quintile.to_string(),
                r.quantity_quintile.to_string(),
            ]
        }),
    )
}

pub fn read_provision(path: &Path) -> Result<Vec<ProvisionRow>> {
    let t = Table::read(path, Some(&PROVISION_HEADER))?;
    (0..t.rows.len())
        .map(|i| {
            let level = |c: usize| {
                t.text(i, c)
                    .parse::<u8>()
                    .map_err(|_| Error::format(path, format!("row {}: bad quintile", i + 1)))
            };
            Ok(ProvisionRow {
                geoid: t.text(i, 0).into(),
                quality: t.num(i, 1)?,
                quantity: t.num(i, 2)?,
                raw_deviation: t.num(i, 3)?,
                quality_quintile: level(4)?,
                quantity_quintile: level(5)?,
            })
        })
        .collect()
}

pub fn ecdf_csv(groups: &[(&str, &Ecdf)]) -> Vec<u8> {
    csv_bytes(
        &["group", "x", "F(x)"],
        groups.iter().flat_map(|(g, e)| {
            e.steps()
                .into_iter()
                .map(move |(x, f)| [g.to_string(), x.to_string(), f.to_string()])
        }),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupIncomeJson {
    pub better_median: Option<f64>,
    pub worse_median: Option<f64>,
    pub gap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncomeGroupsJson {
    pub low_n: usize,
    pub high_n: usize,
    pub ecdf_area_gap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InequalityJson {
    pub inequality_index: Option<f64>,
    pub group_income: GroupIncomeJson,
    pub income_groups: IncomeGroupsJson,
    pub dropped_missing_income: usize,
}

impl From<&InequalityReport> for InequalityJson {
    fn from(r: &InequalityReport) -> Self {
        Self {
            inequality_index: r.inequality_index,
            group_income: GroupIncomeJson {
                better_median: r.group_income.better_median,
                worse_median: r.group_income.worse_median,
                gap: r.group_income.gap,
            },
            income_groups: IncomeGroupsJson {
                low_n: r.income_groups.low_n,
                high_n: r.income_groups.high_n,
                ecdf_area_gap: r.income_groups.ecdf_area_gap,
            },
            dropped_missing_income: r.dropped_missing_income,
        }
    }
}

pub fn read_inequality(path: &Path) -> Result<InequalityJson> {
    serde_json::from_str(&read_upstream(path)?).map_err(|e| Error::format(path, e))
}
