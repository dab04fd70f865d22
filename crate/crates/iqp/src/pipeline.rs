//! Per-city stage runner. Every stage reads its inputs from the city's
//! artifact directory, so single stages and full runs share one code path.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use iqp_core::gbdt::{self, cross_validate, finish_search, fit, CvConfig, TrainOptions, Trial};
use iqp_core::inequality::{ecdf, inequality_report, quintile_bins, split_by_income_median};
use iqp_core::labeling;
use iqp_core::provision::{quality_provision, quantity_provision, softmax_weights};
use iqp_core::resample::balance_training;
use iqp_core::seed::derive;
use iqp_core::shap::{dependence_series, explain, global_importance, select_analysis_set};
use iqp_core::thresholds::derive_threshold;
use iqp_core::tract::{feature_matrix, Feature, FeatureMatrix, TractRecord, N_FEATURES};
use rayon::prelude::*;

use crate::artifacts::{self as art, Labels, ProvisionRow, TrainingReport};
use crate::config::{AnalysisSet, CityInput, RunConfig};
use crate::error::{Error, Result};
use crate::ingest::load_tracts;
use crate::manifest::{sha256_hex, stage_seed, CityEntry, Manifest};
use crate::model_io;

/// Largest tolerated `|base + sum(phi) - margin|`.
pub const LOCAL_ACCURACY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Label,
    Train,
    Explain,
    Thresholds,
    Provision,
    Inequality,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::Label,
        Stage::Train,
        Stage::Explain,
        Stage::Thresholds,
        Stage::Provision,
        Stage::Inequality,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Label => "label",
            Stage::Train => "train",
            Stage::Explain => "explain",
            Stage::Thresholds => "thresholds",
            Stage::Provision => "provision",
            Stage::Inequality => "inequality",
        }
    }
}

#[derive(Debug, Default)]
struct Output {
    files: Vec<(&'static str, Vec<u8>)>,
    seeds: Vec<(&'static str, u64)>,
    metrics: Vec<(&'static str, f64)>,
    warnings: Vec<String>,
}

struct City<'a> {
    cfg: &'a RunConfig,
    input: &'a CityInput,
    dir: PathBuf,
}

impl City<'_> {
    fn name(&self) -> &str {
        &self.input.name
    }

    fn seed(&self, stage: &'static str, out: &mut Output) -> u64 {
        let s = stage_seed(self.cfg.seed, stage, self.name());
        out.seeds.push((stage, s));
        s
    }

    fn path(&self, file: &str) -> PathBuf {
        self.dir.join(file)
    }

    fn records(&self) -> Result<Vec<TractRecord>> {
        load_tracts(&self.input.input, self.name())
    }
}

/// Row index of every geoid in `records`.
fn index_of(records: &[TractRecord]) -> HashMap<&str, usize> {
    records.iter().enumerate().map(|(i, r)| (r.geoid.as_str(), i)).collect()
}

fn lookup(index: &HashMap<&str, usize>, geoids: &[String], source: &Path) -> Result<Vec<usize>> {
    geoids
        .iter()
        .map(|g| {
            index
                .get(g.as_str())
                .copied()
                .ok_or_else(|| Error::format(source, format!("geoid `{g}` not in the input table")))
        })
        .collect()
}

fn labels_for(city: &City, records: &[TractRecord]) -> Result<Vec<u8>> {
    let path = city.path(art::LABELS);
    let labels = art::read_labels(&path)?;
    if labels.geoids.len() != records.len() || labels.geoids.iter().zip(records).any(|(g, r)| *g != r.geoid) {
        return Err(Error::format(
            path,
            "labels do not match the input table; rerun the label stage",
        ));
    }
    Ok(labels.labels)
}

fn stage_label(city: &City, out: &mut Output) -> Result<()> {
    let records = city.records()?;
    let seed = city.seed("label", out);
    let lab = labeling::assign_hazard_labels(&records, seed)?;
    out.metrics.push(("silhouette", lab.silhouette));
    out.metrics.push((
        "high_hazard_share",
        lab.labels.iter().map(|&l| f64::from(l)).sum::<f64>() / lab.labels.len() as f64,
    ));
    out.warnings.extend(lab.warnings);
    out.files.push((
        art::LABELS,
        art::labels_csv(&Labels {
            geoids: lab.geoids,
            labels: lab.labels,
            silhouette: lab.silhouette,
        }),
    ));
    Ok(())
}

fn stage_train(city: &City, out: &mut Output) -> Result<()> {
    let records = city.records()?;
    let y = labels_for(city, &records)?;
    let fm = feature_matrix(&records)?;
    let cfg = city.cfg;
    let split_seed = city.seed("split", out);
    let balance_seed = city.seed("balance", out);
    let tune_seed = city.seed("tune", out);

    let split = gbdt::split_train_test(&y, cfg.training.train_fraction, split_seed)?;
    let x_train = fm.values.select_rows(&split.train);
    let y_train: Vec<u8> = split.train.iter().map(|&i| y[i]).collect();
    let x_test = fm.values.select_rows(&split.test);
    let y_test: Vec<u8> = split.test.iter().map(|&i| y[i]).collect();

    let smote = cfg.smote.config();
    let cv = CvConfig {
        folds: cfg.training.folds,
        smote,
    };
    let candidates = cfg
        .search_space()
        .candidates(cfg.training.n_iter, derive(tune_seed, 0))?;
    let cv_seed = derive(tune_seed, 1);
    let trials = candidates
        .into_par_iter()
        .map(|hp| {
            cross_validate(&x_train, &y_train, &hp, &cv, cv_seed).map(|o| Trial {
                hyperparameters: hp,
                mean_f1: o.mean_f1,
            })
        })
        .collect::<iqp_core::Result<Vec<_>>>()?;
    let search = finish_search(trials)?;

    let (bx, by, synthetic) = match smote {
        Some(s) => {
            let b = balance_training(&x_train, &y_train, balance_seed, s)?;
            let n = b.synthetic_count();
            (b.x, b.y, n)
        }
        None => (x_train, y_train, 0),
    };
    let fitted = fit(
        &bx,
        &by,
        &search.best,
        &TrainOptions {
            base_score: None,
            feature_names: Some(fm.names.clone()),
        },
    )?;
    let pred = fitted.ensemble.classify_all(&x_test)?;
    let test_f1 = gbdt::f1(&y_test, &pred)?;
    out.metrics.push(("best_cv_f1", search.best_score));
    out.metrics.push(("test_f1", test_f1));

    let report = TrainingReport {
        train_geoids: split.train.iter().map(|&i| fm.geoids[i].clone()).collect(),
        test_geoids: split.test.iter().map(|&i| fm.geoids[i].clone()).collect(),
        synthetic_rows: synthetic,
        best: search.best,
        best_cv_f1: search.best_score,
        test_f1,
        test_confusion: gbdt::confusion(&y_test, &pred)?,
        final_training_loss: fitted.loss_history.last().copied().unwrap_or(f64::NAN),
        trials: search.trials,
    };
    out.files
        .push((art::MODEL, model_io::to_string(&fitted.ensemble).into_bytes()));
    out.files.push((art::TRAINING, art::json_bytes(&report)));
    Ok(())
}

fn stage_explain(city: &City, out: &mut Output) -> Result<()> {
    let records = city.records()?;
    let y = labels_for(city, &records)?;
    let ensemble = model_io::load(&city.path(art::MODEL)).map_err(|e| match e {
        Error::Io { ref source, .. } if source.kind() == std::io::ErrorKind::NotFound => {
            Error::MissingUpstreamArtifact(city.path(art::MODEL))
        }
        e => e,
    })?;
    let training_path = city.path(art::TRAINING);
    let training = art::read_training(&training_path)?;
    let fm = feature_matrix(&records)?;
    let test = lookup(&index_of(&records), &training.test_geoids, &training_path)?;
    let x_test = fm.values.select_rows(&test);
    let y_test: Vec<u8> = test.iter().map(|&i| y[i]).collect();

    let (rows, tag) = match city.cfg.analysis_set {
        AnalysisSet::Correct => (select_analysis_set(&ensemble, &x_test, &y_test)?, "correct_test"),
        AnalysisSet::Full => ((0..test.len()).collect(), "full_test"),
    };
    let x = x_test.select_rows(&rows);
    let geoids: Vec<String> = rows.iter().map(|&r| fm.geoids[test[r]].clone()).collect();
    let shap = explain(&ensemble, &x, &geoids, tag)?;
    let err = shap.max_local_accuracy_error();
    out.metrics.push(("max_local_accuracy_error", err));
    out.metrics.push(("analysis_rows", rows.len() as f64));
    if !(err < LOCAL_ACCURACY_TOL) {
        return Err(Error::LocalAccuracy(err));
    }
    let importance = global_importance(&shap)?;
    let weights = softmax_weights(&importance)?;
    out.files.push((art::SHAP, art::shap_csv(&shap)));
    out.files.push((
        art::WEIGHTS,
        art::weights_csv(&fm.names, &importance, &weights.normalized),
    ));
    Ok(())
}

/// Observed (min, max) of every feature over the whole city.
pub fn feature_ranges(fm: &FeatureMatrix) -> Vec<(f64, f64)> {
    (0..fm.values.cols())
        .map(|j| {
            fm.values
                .iter_rows()
                .map(|r| r[j])
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
        })
        .collect()
}

fn stage_thresholds(city: &City, out: &mut Output) -> Result<()> {
    let records = city.records()?;
    let fm = feature_matrix(&records)?;
    let shap_path = city.path(art::SHAP);
    let shap = art::read_shap(&shap_path, "analysis")?;
    if shap.feature_names != fm.names {
        return Err(Error::format(&shap_path, "feature columns differ from the input table"));
    }
    let rows = lookup(&index_of(&records), &shap.geoids, &shap_path)?;
    let x = fm.values.select_rows(&rows);
    let ranges = feature_ranges(&fm);
    let tcfg = city.cfg.lowess.threshold_config();
    let seed = city.seed("thresholds", out);

    let fits = (0..N_FEATURES)
        .into_par_iter()
        .map(|j| {
            let series = dependence_series(&shap, &x, j)?;
            let (curve, entry) = derive_threshold(&series, ranges[j], &tcfg, derive(seed, j as u64))?;
            Ok((series, curve, entry))
        })
        .collect::<iqp_core::Result<Vec<_>>>()?;

    let mut dep = Vec::new();
    let mut entries = Vec::new();
    for (j, (series, curve, entry)) in fits.into_iter().enumerate() {
        dep.extend(art::dependence_rows(&fm.names[j], &series, &curve));
        if entry.note.starts_with("warning") {
            out.warnings.push(format!("{}: {}", fm.names[j], entry.note));
        }
        let note = art::coverage_note(&entry, &curve);
        entries.push((entry, note));
    }
    out.files.push((art::DEPENDENCE, art::dependence_csv(dep)));
    out.files
        .push((art::THRESHOLDS, art::thresholds_csv(city.name(), &entries)));
    Ok(())
}

/// Thresholds in feature order.
fn ordered_thresholds(path: &Path) -> Result<Vec<f64>> {
    let rows = art::read_thresholds(path)?;
    Feature::ALL
        .iter()
        .map(|f| {
            rows.iter()
                .find(|r| r.feature == *f)
                .map(|r| r.threshold)
                .ok_or_else(|| iqp_core::Error::MissingThreshold(f.index()).into())
        })
        .collect()
}

fn stage_provision(city: &City, out: &mut Output) -> Result<()> {
    let records = city.records()?;
    let fm = feature_matrix(&records)?;
    let thresholds = ordered_thresholds(&city.path(art::THRESHOLDS))?;
    let weights_path = city.path(art::WEIGHTS);
    let stored = art::read_weights(&weights_path)?;
    if stored.iter().map(|w| &w.0).ne(fm.names.iter()) {
        return Err(Error::format(weights_path, "feature rows differ from the input table"));
    }
    let importance: Vec<f64> = stored.iter().map(|w| w.1).collect();
    let weights = softmax_weights(&importance)?;
    let units = city.cfg.units;
    let quality = quality_provision(&fm.values, &thresholds, &weights, units)?;
    let quantity = quantity_provision(&fm.values, units)?;
    let q1 = quintile_bins(&quality.scores)?;
    let q2 = quintile_bins(&quantity.scores)?;
    for (tag, w) in [
        ("quality", &quality.warnings),
        ("quantity", &quantity.warnings),
        ("quality quintiles", &q1.warnings),
        ("quantity quintiles", &q2.warnings),
    ] {
        out.warnings.extend(w.iter().map(|m| format!("{tag}: {m}")));
    }
    let rows: Vec<ProvisionRow> = (0..records.len())
        .map(|i| ProvisionRow {
            geoid: fm.geoids[i].clone(),
            quality: quality.scores[i],
            quantity: quantity.scores[i],
            raw_deviation: quality.deviation[i],
            quality_quintile: q1.levels[i],
            quantity_quintile: q2.levels[i],
        })
        .collect();
    out.files.push((art::PROVISION, art::provision_csv(&rows)));
    Ok(())
}

fn stage_inequality(city: &City, out: &mut Output) -> Result<()> {
    let records = city.records()?;
    let path = city.path(art::PROVISION);
    let rows = art::read_provision(&path)?;
    if rows.len() != records.len() || rows.iter().zip(&records).any(|(p, r)| p.geoid != r.geoid) {
        return Err(Error::format(path, "provision rows do not match the input table"));
    }
    let scores: Vec<f64> = rows.iter().map(|r| r.quality).collect();
    let incomes: Vec<Option<f64>> = records.iter().map(|r| r.median_income).collect();
    let report = inequality_report(&scores, &incomes)?;
    out.warnings.extend(report.warnings.iter().cloned());
    if let Some(i) = report.inequality_index {
        out.metrics.push(("inequality_index", i));
    }
    let ecdf_bytes = match split_by_income_median(&incomes) {
        Ok(s) if !s.low.is_empty() && !s.high.is_empty() => {
            let pick = |idx: &[usize]| -> Vec<f64> { idx.iter().map(|&i| scores[i]).collect() };
            let low = ecdf(&pick(&s.low))?;
            let high = ecdf(&pick(&s.high))?;
            art::ecdf_csv(&[("low_income", &low), ("high_income", &high)])
        }
        _ => art::ecdf_csv(&[]),
    };
    out.files
        .push((art::INEQUALITY, art::json_bytes(&art::InequalityJson::from(&report))));
    out.files.push((art::ECDF, ecdf_bytes));
    Ok(())
}

fn run_stage(city: &City, stage: Stage) -> Result<Output> {
    let mut out = Output::default();
    match stage {
        Stage::Label => stage_label(city, &mut out),
        Stage::Train => stage_train(city, &mut out),
        Stage::Explain => stage_explain(city, &mut out),
        Stage::Thresholds => stage_thresholds(city, &mut out),
        Stage::Provision => stage_provision(city, &mut out),
        Stage::Inequality => stage_inequality(city, &mut out),
    }?;
    Ok(out)
}

/// Runs one stage, writes its artifacts and records it in `entry`.
fn execute(city: &City, stage: Stage, entry: &mut CityEntry) -> Result<()> {
    let started = Instant::now();
    let out = run_stage(city, stage).map_err(|e| e.in_stage(city.name(), stage.name()))?;
    std::fs::create_dir_all(&city.dir).map_err(|e| Error::io(&city.dir, e))?;
    for (name, bytes) in &out.files {
        let path = city.path(name);
        std::fs::write(&path, bytes).map_err(|e| Error::io(path, e))?;
        entry.artifacts.insert((*name).to_string(), sha256_hex(bytes));
    }
    for (k, v) in out.seeds {
        entry.seeds.insert(k.to_string(), v);
    }
    for (k, v) in out.metrics {
        entry.metrics.insert(format!("{}.{k}", stage.name()), v);
    }
    entry.warnings.insert(stage.name().to_string(), out.warnings);
    entry
        .timings_ms
        .insert(stage.name().to_string(), started.elapsed().as_secs_f64() * 1e3);
    Ok(())
}

fn city_dir(cfg: &RunConfig, name: &str) -> PathBuf {
    cfg.out.join(name)
}

/// Every stage of one city, in order.
pub fn run_city(cfg: &RunConfig, input: &CityInput) -> Result<CityEntry> {
    let city = City {
        cfg,
        input,
        dir: city_dir(cfg, &input.name),
    };
    let mut entry = CityEntry::default();
    for stage in Stage::ALL {
        execute(&city, stage, &mut entry)?;
    }
    Ok(entry)
}

/// Full pipeline for every configured city (cities run concurrently) and
/// the manifest.
pub fn run_all(cfg: &RunConfig) -> Result<Manifest> {
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.out).map_err(|e| Error::io(&cfg.out, e))?;
    let entries = cfg
        .cities
        .par_iter()
        .map(|c| run_city(cfg, c).map(|e| (c.name.clone(), e)))
        .collect::<Result<Vec<_>>>()?;
    let mut manifest = Manifest::new(cfg.clone());
    manifest.cities.extend(entries);
    manifest.save(&cfg.out)?;
    Ok(manifest)
}

/// One stage for one city, merged into the manifest on disk.
pub fn run_stage_for(cfg: &RunConfig, city: &str, stage: Stage) -> Result<CityEntry> {
    cfg.validate()?;
    let input = cfg.city(city)?;
    std::fs::create_dir_all(&cfg.out).map_err(|e| Error::io(&cfg.out, e))?;
    let mut manifest = Manifest::load_or_new(&cfg.out, cfg)?;
    let c = City {
        cfg,
        input,
        dir: city_dir(cfg, city),
    };
    let entry = manifest.cities.entry(city.to_string()).or_default();
    execute(&c, stage, entry)?;
    let snapshot = entry.clone();
    manifest.save(&cfg.out)?;
    Ok(snapshot)
}
