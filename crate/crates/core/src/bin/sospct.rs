use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use sospct::harness::{
    ablate, apply_flat_config, evaluate, horizon_csv, parse_flat_config, predict, prepare_all, train, write_json,
    AblationConfig, AblationTable, TrainConfig,
};
use sospct::model::{Model, ModelConfig, Variant};
use sospct::navframe::FairwayGeometry;
use sospct::pipeline::{preprocess, read_fixes, read_samples, write_fixes, write_samples, EventKind, PipelineConfig};
use sospct::synth::{generate, label_interactions, GroundTruthEvent, ScenarioConfig};

/// Environment variable holding the worker-thread count.
const THREADS_ENV: &str = "SOSPCT_THREADS";

#[derive(Parser)]
#[command(name = "sospct", version, about = "Vessel trajectory prediction with social and spatial context")]
struct Cli {
    /// Single-threaded execution for bit-reproducible runs.
    #[arg(long, global = true)]
    deterministic: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Turn raw fixes into training windows.
    Preprocess {
        #[arg(long)]
        fixes: PathBuf,
        #[arg(long)]
        geometry: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 60.0)]
        dt: f64,
        #[arg(long, default_value_t = 5)]
        tobs: usize,
        #[arg(long, default_value_t = 5)]
        horizon: usize,
    },
    /// Simulate rule-based traffic; writes fixes.jsonl, geometry.json and events.jsonl.
    GenerateSynthetic {
        /// Scenario JSON; defaults are used for missing fields.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        count: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "synthetic")]
        out_dir: PathBuf,
    },
    /// Train one variant; writes `<out>.json`, `<out>.bin` and `<out>.log.json`.
    Train {
        #[arg(long)]
        samples: PathBuf,
        /// Flat `key = value` config.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        variant: Option<Variant>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a checkpoint; writes an EvalReport JSON.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        samples: PathBuf,
        #[arg(long)]
        geometry: PathBuf,
        /// Generator event log used for the encounter stratum.
        #[arg(long)]
        events: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Greedy predictions as JSONL.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        samples: PathBuf,
        #[arg(long)]
        geometry: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train and evaluate every variant on every seed.
    Ablate {
        /// Ablation JSON; defaults are used for missing fields.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        #[arg(long)]
        scenarios: Option<usize>,
        #[arg(long, default_value = "ablation")]
        out_dir: PathBuf,
    },
    /// Horizon curves of an ablation table as CSV.
    PlotFde {
        #[arg(long)]
        table: PathBuf,
        #[arg(long, default_value_t = 60.0)]
        dt: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn read_events(path: &Path) -> Result<Vec<GroundTruthEvent>> {
    fs::read_to_string(path)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| Ok(serde_json::from_str(l)?))
        .collect()
}

fn configure_threads(deterministic: bool) -> Result<()> {
    let threads = if deterministic {
        1
    } else {
        match std::env::var(THREADS_ENV) {
            Ok(v) => v.parse().with_context(|| format!("{THREADS_ENV}={v}"))?,
            Err(_) => 0,
        }
    };
    rayon::ThreadPoolBuilder::new().num_threads(threads).build_global()?;
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    configure_threads(cli.deterministic)?;
    match cli.cmd {
        Cmd::Preprocess { fixes, geometry, out, dt, tobs, horizon } => {
            let g = FairwayGeometry::load(&geometry)?;
            let cfg = PipelineConfig { dt, t_obs: tobs, horizon, stride: tobs, ..PipelineConfig::default() };
            let samples = preprocess(&read_fixes(&fixes)?, &g, &cfg);
            write_samples(&out, &samples)?;
            eprintln!("{} samples", samples.len());
        }
        Cmd::GenerateSynthetic { config, count, seed, out_dir } => {
            let mut cfg: ScenarioConfig = match config {
                Some(p) => read_json(&p)?,
                None => ScenarioConfig::default(),
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let syn = generate(&cfg, count)?;
            fs::create_dir_all(&out_dir)?;
            write_fixes(&out_dir.join("fixes.jsonl"), &syn.fixes)?;
            syn.geometry.save(&out_dir.join("geometry.json"))?;
            let mut ev = String::new();
            for e in &syn.events {
                ev.push_str(&serde_json::to_string(e)?);
                ev.push('\n');
            }
            fs::write(out_dir.join("events.jsonl"), ev)?;
            eprintln!("{} fixes, {} events", syn.fixes.len(), syn.events.len());
        }
        Cmd::Train { samples, config, variant, epochs, seed, out } => {
            let (mut mcfg, mut tcfg) = (ModelConfig::default(), TrainConfig::default());
            if let Some(p) = config {
                let kv = parse_flat_config(&fs::read_to_string(&p)?)?;
                apply_flat_config(&kv, &mut mcfg, &mut tcfg)?;
            }
            if let Some(v) = variant {
                mcfg.variant = v;
            }
            if let Some(e) = epochs {
                tcfg.epochs = e;
            }
            if let Some(s) = seed {
                tcfg.seed = s;
                mcfg.init_seed = s;
            }
            let samples = read_samples(&samples)?;
            let data = prepare_all(&samples, &mcfg)?;
            let mut model = Model::new(mcfg)?;
            let log = train(&mut model, &data, &tcfg)?;
            for e in &log {
                eprintln!(
                    "epoch {} step {} L={:.4} Lx={:.4} Ly={:.4} sx={:.3} sy={:.3}",
                    e.epoch, e.steps, e.loss, e.lx, e.ly, e.sigma_x, e.sigma_y
                );
            }
            model.save(&out)?;
            write_json(&out.with_extension("log.json"), &log)?;
        }
        Cmd::Evaluate { checkpoint, samples, geometry, events, out } => {
            let model = Model::load(&checkpoint)?;
            let g = FairwayGeometry::load(&geometry)?;
            let samples = read_samples(&samples)?;
            let ann: Option<Vec<bool>> = match events {
                Some(p) => Some(
                    label_interactions(&read_events(&p)?, &samples)
                        .iter()
                        .map(|a| a.iter().any(|e| e.kind == EventKind::Encounter))
                        .collect(),
                ),
                None => None,
            };
            let report = evaluate(&model, &samples, &g, ann.as_deref())?;
            if let Some(a) = &report.overall {
                eprintln!("ADE {:.2} ± {:.2}  FDE {:.2} ± {:.2}  (n={})", a.ade_mean, a.ade_std, a.fde_mean, a.fde_std, a.n);
            }
            write_json(&out, &report)?;
        }
        Cmd::Predict { checkpoint, samples, geometry, out } => {
            let model = Model::load(&checkpoint)?;
            let g = FairwayGeometry::load(&geometry)?;
            let mut text = String::new();
            for s in read_samples(&samples)? {
                text.push_str(&serde_json::to_string(&predict(&model, &s, &g)?)?);
                text.push('\n');
            }
            fs::write(&out, text)?;
        }
        Cmd::Ablate { config, seeds, scenarios, out_dir } => {
            let mut cfg: AblationConfig = match config {
                Some(p) => read_json(&p)?,
                None => AblationConfig::default(),
            };
            if let Some(s) = seeds {
                cfg.seeds = s;
            }
            if let Some(n) = scenarios {
                cfg.scenarios = n;
            }
            if cfg.seeds.is_empty() || cfg.variants.is_empty() {
                bail!("ablation needs at least one seed and one variant");
            }
            fs::create_dir_all(&out_dir)?;
            let table = ablate(&cfg, |m, r| {
                m.save(&out_dir.join(format!("{}-seed{}", r.variant, r.seed)))?;
                let a = r.report.overall.as_ref();
                eprintln!(
                    "{} seed {}: train {} test {} FDE {:.2}",
                    r.variant,
                    r.seed,
                    r.train_samples,
                    a.map_or(0, |a| a.n),
                    a.map_or(f64::NAN, |a| a.fde_mean)
                );
                Ok(())
            })?;
            write_json(&out_dir.join("table.json"), &table)?;
            fs::write(out_dir.join("table.md"), table.to_markdown())?;
            fs::write(out_dir.join("horizon.csv"), horizon_csv(&table.rows, cfg.pipeline.dt))?;
            println!("{}", table.to_markdown());
        }
        Cmd::PlotFde { table, dt, out } => {
            let table: AblationTable = read_json(&table)?;
            fs::write(&out, horizon_csv(&table.rows, dt))?;
        }
    }
    Ok(())
}
