//! TOML run configuration.

use std::path::{Path, PathBuf};

use iqp_core::gbdt::{IntRange, Range, SearchSpace};
use iqp_core::lowess::LowessConfig;
use iqp_core::provision::DeviationSpace;
use iqp_core::resample::SmoteConfig;
use iqp_core::thresholds::ThresholdConfig;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CityInput {
    pub name: String,
    pub input: PathBuf,
}

/// Per-field replacements for the default search space.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchOverrides {
    pub max_depth: Option<IntRange>,
    pub learning_rate: Option<Range>,
    pub gamma: Option<Range>,
    pub min_child_weight: Option<IntRange>,
    pub n_estimators: Option<IntRange>,
}

impl SearchOverrides {
    pub fn apply(&self, mut s: SearchSpace) -> SearchSpace {
        s.max_depth = self.max_depth.unwrap_or(s.max_depth);
        s.learning_rate = self.learning_rate.unwrap_or(s.learning_rate);
        s.gamma = self.gamma.unwrap_or(s.gamma);
        s.min_child_weight = self.min_child_weight.unwrap_or(s.min_child_weight);
        s.n_estimators = self.n_estimators.unwrap_or(s.n_estimators);
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    /// Share of tracts in the training part of the stratified split.
    pub train_fraction: f64,
    pub n_iter: usize,
    pub folds: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            train_fraction: 0.8,
            n_iter: 50,
            folds: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmoteSection {
    pub enabled: bool,
    pub k: usize,
    pub undersample: bool,
}

impl Default for SmoteSection {
    fn default() -> Self {
        Self {
            enabled: true,
            k: 5,
            undersample: false,
        }
    }
}

impl SmoteSection {
    pub fn config(&self) -> Option<SmoteConfig> {
        self.enabled.then_some(SmoteConfig {
            k: self.k,
            undersample: self.undersample,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LowessSection {
    pub frac: f64,
    pub robust_iters: usize,
    pub bootstrap: usize,
    pub level: f64,
}

impl Default for LowessSection {
    fn default() -> Self {
        let t = ThresholdConfig::default();
        Self {
            frac: t.lowess.frac,
            robust_iters: t.lowess.robust_iters,
            bootstrap: t.bootstrap,
            level: t.level,
        }
    }
}

impl LowessSection {
    pub fn threshold_config(&self) -> ThresholdConfig {
        ThresholdConfig {
            lowess: LowessConfig {
                frac: self.frac,
                robust_iters: self.robust_iters,
            },
            bootstrap: self.bootstrap,
            level: self.level,
        }
    }
}

/// Which test rows feed attributions, weights and thresholds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnalysisSet {
    /// Correctly classified test tracts.
    #[default]
    Correct,
    /// Every test tract.
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    pub cities: Vec<CityInput>,
    #[serde(default)]
    pub training: TrainingConfig,
    #[serde(default)]
    pub search: SearchOverrides,
    #[serde(default)]
    pub smote: SmoteSection,
    #[serde(default)]
    pub lowess: LowessSection,
    #[serde(default)]
    pub units: DeviationSpace,
    #[serde(default)]
    pub analysis_set: AnalysisSet,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl RunConfig {
    /// Config for one city with every default.
    pub fn single(city: &str, input: impl Into<PathBuf>, seed: u64, out: impl Into<PathBuf>) -> Self {
        Self {
            seed,
            out: out.into(),
            cities: vec![CityInput {
                name: city.into(),
                input: input.into(),
            }],
            training: TrainingConfig::default(),
            search: SearchOverrides::default(),
            smote: SmoteSection::default(),
            lowess: LowessSection::default(),
            units: DeviationSpace::default(),
            analysis_set: AnalysisSet::default(),
        }
    }

    pub fn from_toml(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a config file; relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&s)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for c in &mut cfg.cities {
            if c.input.is_relative() {
                c.input = base.join(&c.input);
            }
        }
        if cfg.out.is_relative() {
            cfg.out = base.join(&cfg.out);
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn search_space(&self) -> SearchSpace {
        self.search.apply(SearchSpace::default())
    }

    pub fn city(&self, name: &str) -> Result<&CityInput> {
        self.cities
            .iter()
            .find(|c| c.name == name)
            .ok_or_else(|| Error::Config(format!("unknown city `{name}`")))
    }

    /// Static checks; input files must exist.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.cities.is_empty() {
            return bad("no cities configured".into());
        }
        for (i, c) in self.cities.iter().enumerate() {
            let ok_name =
                !c.name.is_empty() && c.name.chars().all(|ch| ch.is_ascii_alphanumeric() || "-_".contains(ch));
            if !ok_name {
                return bad(format!("city name `{}` must be non-empty [A-Za-z0-9_-]", c.name));
            }
            if self.cities[..i].iter().any(|o| o.name == c.name) {
                return bad(format!("city `{}` listed twice", c.name));
            }
            if !c.input.is_file() {
                return bad(format!("input for `{}` not found: {}", c.name, c.input.display()));
            }
        }
        let t = &self.training;
        if !(t.train_fraction > 0.0 && t.train_fraction < 1.0) {
            return bad(format!("train_fraction {} outside (0, 1)", t.train_fraction));
        }
        if t.n_iter == 0 || t.folds < 2 {
            return bad("n_iter must be >= 1 and folds >= 2".into());
        }
        self.search_space()
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        let l = &self.lowess;
        if !(l.frac > 0.0 && l.frac <= 1.0) {
            return bad(format!("lowess frac {} outside (0, 1]", l.frac));
        }
        if !(l.level > 0.0 && l.level < 1.0) {
            return bad(format!("band level {} outside (0, 1)", l.level));
        }
        if self.smote.enabled && self.smote.k == 0 {
            return bad("smote k must be >= 1".into());
        }
        Ok(())
    }
}
