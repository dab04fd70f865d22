use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use iqp::artifacts as art;
use iqp::manifest::{self, Manifest};

fn iqp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_iqp")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Synthesizes a small city and writes a config for it. Returns the config path.
fn setup(dir: &Path, n: usize) -> PathBuf {
    let csv = dir.join("town.csv");
    let o = iqp(&[
        "synth",
        "--kind",
        "planted",
        "--n",
        &n.to_string(),
        "--seed",
        "5",
        "--city",
        "town",
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let cfg = dir.join("run.toml");
    fs::write(
        &cfg,
        "seed = 3\nout = \"out\"\n[[cities]]\nname = \"town\"\ninput = \"town.csv\"\n\
         [training]\nn_iter = 3\nfolds = 3\n[lowess]\nbootstrap = 20\n",
    )
    .unwrap();
    cfg
}

fn stage(cfg: &Path, name: &str) -> Output {
    iqp(&[name, "--config", cfg.to_str().unwrap()])
}

#[test]
fn train_without_labels_is_missing_upstream() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path(), 200);
    let o = stage(&cfg, "train");
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains(art::LABELS), "{}", stderr(&o));
}

#[test]
fn label_records_silhouette() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path(), 200);
    let o = stage(&cfg, "label");
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = dir.path().join("out");
    assert!(out.join("town").join(art::LABELS).is_file());
    let text = fs::read_to_string(out.join(manifest::FILE)).unwrap();
    let m: Manifest = serde_json::from_str(&text).unwrap();
    let s = m.cities["town"].metrics["label.silhouette"];
    assert!((-1.0..=1.0).contains(&s));
}

#[test]
fn stages_rerun_byte_identically_in_isolation() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path(), 240);
    let o = iqp(&["run-all", "--config", cfg.to_str().unwrap(), "--threads", "2"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let city = dir.path().join("out").join("town");
    let files = [
        art::LABELS,
        art::TRAINING,
        art::MODEL,
        art::SHAP,
        art::WEIGHTS,
        art::DEPENDENCE,
        art::THRESHOLDS,
        art::PROVISION,
        art::INEQUALITY,
        art::ECDF,
    ];
    let before: Vec<Vec<u8>> = files.iter().map(|f| fs::read(city.join(f)).unwrap()).collect();

    // drop everything downstream of training and regenerate stage by stage
    for f in &files[3..] {
        fs::remove_file(city.join(f)).unwrap();
    }
    for s in ["explain", "thresholds", "provision", "inequality"] {
        let o = stage(&cfg, s);
        assert_eq!(code(&o), 0, "{s}: {}", stderr(&o));
    }
    // a stage rerun on its own leaves its output unchanged
    let o = stage(&cfg, "label");
    assert_eq!(code(&o), 0);
    for (f, b) in files.iter().zip(&before) {
        assert_eq!(&fs::read(city.join(f)).unwrap(), b, "{f} changed");
    }
}

#[test]
fn bad_config_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "seed = \"x\"\n").unwrap();
    assert_eq!(code(&stage(&cfg, "label")), 1);
    let missing = dir.path().join("absent.toml");
    assert_eq!(code(&stage(&missing, "label")), 1);
}

#[test]
fn out_of_range_input_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path(), 50);
    let csv = dir.path().join("town.csv");
    let text = fs::read_to_string(&csv).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let header: Vec<&str> = lines[0].split(',').collect();
    let road = header.iter().position(|h| *h == "road_pct").unwrap();
    let mut cells: Vec<String> = lines[1].split(',').map(String::from).collect();
    cells[road] = "135.2".into();
    lines[1] = cells.join(",");
    fs::write(&csv, lines.join("\n") + "\n").unwrap();
    let o = stage(&cfg, "label");
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("road_pct"), "{}", stderr(&o));
}

#[test]
fn synth_writes_requested_rows() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("d.csv");
    let o = iqp(&[
        "synth",
        "--kind",
        "divergent",
        "--n",
        "30",
        "--city",
        "d",
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let recs = iqp::ingest::load_tracts(&csv, "d").unwrap();
    assert_eq!(recs.len(), 30);
}
