use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use iqp::config::RunConfig;
use iqp::pipeline::{self, Stage};
use iqp::synth::{self, Planted};
use iqp::{ingest, Error, Result};
use iqp_core::provision::DeviationSpace;

#[derive(Parser)]
#[command(name = "iqp", version, about = "Infrastructure quality provision analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct RunArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Restrict to one configured city.
    #[arg(long)]
    city: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// LOWESS neighbourhood fraction.
    #[arg(long)]
    frac: Option<f64>,
    #[arg(long)]
    no_smote: bool,
    /// Measure deviations in recorded units instead of min-max scaled ones.
    #[arg(long)]
    raw_units: bool,
    /// Worker threads (defaults to all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Planted,
    Separable,
    Divergent,
}

#[derive(Subcommand)]
enum Command {
    /// Cluster hazard indicators into high/low labels.
    Label(RunArgs),
    /// Split, balance, tune and fit the classifier.
    Train(RunArgs),
    /// Attribute test predictions to features.
    Explain(RunArgs),
    /// Smooth dependence curves and derive per-feature thresholds.
    Thresholds(RunArgs),
    /// Score quality and quantity provision.
    Provision(RunArgs),
    /// Inequality index and income disparities.
    Inequality(RunArgs),
    /// Every stage for every configured city.
    RunAll(RunArgs),
    /// Write a synthetic city CSV.
    Synth {
        #[arg(long, value_enum, default_value = "planted")]
        kind: Kind,
        #[arg(long, default_value_t = 800)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "synthetic")]
        city: String,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(a: &RunArgs) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(&a.config)?;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(o) = &a.out {
        cfg.out = o.clone();
    }
    if let Some(f) = a.frac {
        cfg.lowess.frac = f;
    }
    if a.no_smote {
        cfg.smote.enabled = false;
    }
    if a.raw_units {
        cfg.units = DeviationSpace::Raw;
    }
    if let Some(c) = &a.city {
        cfg.city(c)?;
        cfg.cities.retain(|x| &x.name == c);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    match threads {
        None => f(),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?
            .install(f),
    }
}

fn stage_command(a: &RunArgs, stage: Stage) -> Result<()> {
    let cfg = load_config(a)?;
    with_threads(a.threads, || {
        for c in &cfg.cities {
            let entry = pipeline::run_stage_for(&cfg, &c.name, stage)?;
            for (name, v) in &entry.metrics {
                if name.starts_with(stage.name()) {
                    println!("{}\t{name}\t{v}", c.name);
                }
            }
        }
        Ok(())
    })
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Label(a) => stage_command(&a, Stage::Label),
        Command::Train(a) => stage_command(&a, Stage::Train),
        Command::Explain(a) => stage_command(&a, Stage::Explain),
        Command::Thresholds(a) => stage_command(&a, Stage::Thresholds),
        Command::Provision(a) => stage_command(&a, Stage::Provision),
        Command::Inequality(a) => stage_command(&a, Stage::Inequality),
        Command::RunAll(a) => {
            let cfg = load_config(&a)?;
            let m = with_threads(a.threads, || pipeline::run_all(&cfg))?;
            for (city, e) in &m.cities {
                for (name, v) in &e.metrics {
                    println!("{city}\t{name}\t{v}");
                }
            }
            Ok(())
        }
        Command::Synth {
            kind,
            n,
            seed,
            city,
            out,
        } => {
            let recs = match kind {
                Kind::Planted => synth::planted_city(&city, n, Planted::default(), seed),
                Kind::Separable => synth::separable_city(&city, n, seed),
                Kind::Divergent => synth::divergent_city(&city, n, seed),
            };
            ingest::save_tracts(&out, &recs)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
