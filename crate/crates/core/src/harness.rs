//! Training, evaluation and ablation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::model::{prepare, Example, Model, ModelConfig, ModelError, Variant};
use crate::navframe::{reconstruct, reconstruct_heading_frame, DislocationLabel, FairwayGeometry, NavError, Vec2};
use crate::pipeline::{preprocess, EventKind, PipelineConfig, PipelineError, SequenceSample};
use crate::synth::{generate, label_interactions, ScenarioConfig};
use crate::tensorcore::{Adam, ParamGrads, TensorError};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("empty dataset")]
    EmptyDataset,
    #[error("non-finite {what} at optimizer step {step}")]
    NonFinite { step: u64, what: String },
    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Nav(#[from] NavError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch: usize,
    /// Global gradient-norm clip; non-positive disables clipping.
    pub clip: f64,
    pub epochs: usize,
    /// Stops early after this many optimizer steps.
    pub max_steps: Option<u64>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 3e-4,
            batch: 32,
            clip: 1.0,
            epochs: 10,
            max_steps: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub steps: u64,
    pub loss: f64,
    pub lx: f64,
    pub ly: f64,
    pub sigma_x: f64,
    pub sigma_y: f64,
}

pub fn prepare_all(samples: &[SequenceSample], cfg: &ModelConfig) -> Result<Vec<Example>, ModelError> {
    let codec = cfg.codec()?;
    samples.par_iter().map(|s| prepare(s, cfg, &codec)).collect()
}

/// Summed gradients of a batch, reduced in index order.
fn batch_grads(model: &Model, batch: &[&Example]) -> Result<(ParamGrads, [f64; 3]), ModelError> {
    let per: Vec<(ParamGrads, crate::model::LossValues)> =
        batch.par_iter().map(|ex| model.example_grads(ex)).collect::<Result<_, _>>()?;
    let mut sum = ParamGrads::zeros_like(&model.store);
    let mut loss = [0.0; 3];
    for (g, l) in &per {
        sum.add_assign(g);
        loss[0] += l.total;
        loss[1] += l.lx;
        loss[2] += l.ly;
    }
    Ok((sum, loss))
}

/// Mini-batch Adam with teacher forcing. The per-epoch losses are means of the
/// pre-update batch losses.
pub fn train(model: &mut Model, data: &[Example], cfg: &TrainConfig) -> Result<Vec<EpochLog>, HarnessError> {
    if data.is_empty() {
        return Err(HarnessError::EmptyDataset);
    }
    let mut opt = Adam::new(&model.store, cfg.lr);
    let mut log = vec![];
    let mut order: Vec<usize> = (0..data.len()).collect();
    'epochs: for epoch in 0..cfg.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(epoch as u64);
        order.shuffle(&mut rng);
        let mut acc = [0.0; 3];
        let mut seen = 0usize;
        for chunk in order.chunks(cfg.batch.max(1)) {
            if cfg.max_steps.is_some_and(|m| opt.steps_taken() >= m) {
                break;
            }
            let step = opt.steps_taken() + 1;
            let batch: Vec<&Example> = chunk.iter().map(|&i| &data[i]).collect();
            let (mut grads, loss) = batch_grads(model, &batch)?;
            if !loss[0].is_finite() {
                return Err(HarnessError::NonFinite { step, what: "loss".into() });
            }
            grads.scale(1.0 / batch.len() as f64);
            if cfg.clip > 0.0 {
                grads.clip_norm(cfg.clip);
            }
            opt.step(&mut model.store, &grads).map_err(|e| match e {
                TensorError::NonFinite { what } => HarnessError::NonFinite { step, what },
                e => HarnessError::Model(e.into()),
            })?;
            for (a, l) in acc.iter_mut().zip(loss) {
                *a += l;
            }
            seen += batch.len();
        }
        if seen == 0 {
            break 'epochs;
        }
        let (sigma_x, sigma_y) = model.sigmas();
        log.push(EpochLog {
            epoch,
            steps: opt.steps_taken(),
            loss: acc[0] / seen as f64,
            lx: acc[1] / seen as f64,
            ly: acc[2] / seen as f64,
            sigma_x,
            sigma_y,
        });
    }
    Ok(log)
}

/// Fraction of target labels (both components) matched by the teacher-forced argmax.
pub fn label_accuracy(model: &Model, data: &[Example]) -> Result<f64, ModelError> {
    let hits: Vec<(usize, usize)> = data
        .par_iter()
        .map(|ex| {
            let pred = model.teacher_forced_argmax(ex)?;
            let h = pred.iter().zip(&ex.target).map(|(a, b)| (a.lat == b.lat) as usize + (a.lon == b.lon) as usize).sum();
            Ok((h, 2 * ex.target.len()))
        })
        .collect::<Result<_, ModelError>>()?;
    let (h, n) = hits.iter().fold((0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    Ok(h as f64 / n.max(1) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub trip_id: String,
    pub k_start: i64,
    pub labels: Vec<DislocationLabel>,
    pub points: Vec<Vec2>,
}

/// Rolls predicted labels out to Cartesian points from the last observed step.
pub fn reconstruct_prediction(
    sample: &SequenceSample,
    labels: &[DislocationLabel],
    model: &Model,
    g: &FairwayGeometry,
) -> Result<Vec<Vec2>, NavError> {
    let t = sample.t_obs;
    if model.cfg.variant.uses_nav_frame() {
        reconstruct(sample.target_states[t], labels, &model.codec, g)
    } else {
        let p = &sample.target_points;
        let heading = (p[t] - p[t - 1]).angle();
        reconstruct_heading_frame(p[t], heading, labels, &model.codec)
    }
}

pub fn predict(model: &Model, sample: &SequenceSample, g: &FairwayGeometry) -> Result<Prediction, HarnessError> {
    let ex = prepare(sample, &model.cfg, &model.codec)?;
    let labels = model.greedy_decode(&ex.input, model.cfg.horizon)?;
    let points = reconstruct_prediction(sample, &labels, model, g)?;
    Ok(Prediction {
        trip_id: sample.trip_id.clone(),
        k_start: sample.k_start,
        labels,
        points,
    })
}

/// Ground-truth future positions of a sample.
pub fn future_points(sample: &SequenceSample) -> &[Vec2] {
    &sample.target_points[sample.t_obs + 1..]
}

/// Euclidean error at each horizon step.
pub fn step_errors(pred: &[Vec2], truth: &[Vec2]) -> Vec<f64> {
    pred.iter().zip(truth).map(|(a, b)| a.distance(*b)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMetrics {
    pub trip_id: String,
    pub k_start: i64,
    pub annotated: bool,
    pub step_errors: Vec<f64>,
    pub ade: f64,
    pub fde: f64,
}

impl SampleMetrics {
    pub fn new(trip_id: String, k_start: i64, annotated: bool, step_errors: Vec<f64>) -> Self {
        let ade = step_errors.iter().sum::<f64>() / step_errors.len().max(1) as f64;
        let fde = step_errors.last().copied().unwrap_or(0.0);
        Self {
            trip_id,
            k_start,
            annotated,
            step_errors,
            ade,
            fde,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub n: usize,
    pub ade_mean: f64,
    pub ade_std: f64,
    pub fde_mean: f64,
    pub fde_std: f64,
    /// Mean error with step `i + 1` taken as final.
    pub fde_by_step: Vec<f64>,
    /// `(q, FDE quantile)` pairs.
    pub fde_quantiles: Vec<(f64, f64)>,
    pub share_fde_le_50: f64,
    pub share_fde_gt_100: f64,
}

pub const QUANTILES: [f64; 7] = [0.05, 0.1, 0.25, 0.5, 0.75, 0.9, 0.95];

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    (m, v.sqrt())
}

/// Linear-interpolated quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

impl Aggregate {
    /// `None` for an empty set. Standard deviations are population values.
    pub fn from_samples<'a>(samples: impl IntoIterator<Item = &'a SampleMetrics>) -> Option<Self> {
        let s: Vec<&SampleMetrics> = samples.into_iter().collect();
        if s.is_empty() {
            return None;
        }
        let ade: Vec<f64> = s.iter().map(|m| m.ade).collect();
        let fde: Vec<f64> = s.iter().map(|m| m.fde).collect();
        let (ade_mean, ade_std) = mean_std(&ade);
        let (fde_mean, fde_std) = mean_std(&fde);
        let steps = s[0].step_errors.len();
        let fde_by_step = (0..steps)
            .map(|i| s.iter().map(|m| m.step_errors[i]).sum::<f64>() / s.len() as f64)
            .collect();
        let mut sorted = fde.clone();
        sorted.sort_by(f64::total_cmp);
        let n = s.len() as f64;
        Some(Self {
            n: s.len(),
            ade_mean,
            ade_std,
            fde_mean,
            fde_std,
            fde_by_step,
            fde_quantiles: QUANTILES.iter().map(|&q| (q, quantile(&sorted, q))).collect(),
            share_fde_le_50: fde.iter().filter(|&&x| x <= 50.0).count() as f64 / n,
            share_fde_gt_100: fde.iter().filter(|&&x| x > 100.0).count() as f64 / n,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub variant: Variant,
    pub samples: Vec<SampleMetrics>,
    pub overall: Option<Aggregate>,
    /// Samples carrying an interaction annotation.
    pub annotated: Option<Aggregate>,
}

impl EvalReport {
    pub fn from_samples(variant: Variant, samples: Vec<SampleMetrics>) -> Self {
        let overall = Aggregate::from_samples(&samples);
        let annotated = Aggregate::from_samples(samples.iter().filter(|s| s.annotated));
        Self {
            variant,
            samples,
            overall,
            annotated,
        }
    }
}

/// Greedy-decodes every sample and scores it in meters. `annotations` marks
/// the stratum; without it the pipeline's encounter detection is used.
pub fn evaluate(
    model: &Model,
    samples: &[SequenceSample],
    g: &FairwayGeometry,
    annotations: Option<&[bool]>,
) -> Result<EvalReport, HarnessError> {
    if samples.is_empty() {
        return Err(HarnessError::EmptyDataset);
    }
    if let Some(a) = annotations {
        assert_eq!(a.len(), samples.len(), "one annotation per sample");
    }
    let metrics: Vec<SampleMetrics> = samples
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let p = predict(model, s, g)?;
            let annotated = annotations.map_or_else(|| s.has_encounter(), |a| a[i]);
            Ok(SampleMetrics::new(s.trip_id.clone(), s.k_start, annotated, step_errors(&p.points, future_points(s))))
        })
        .collect::<Result<_, HarnessError>>()?;
    Ok(EvalReport::from_samples(model.cfg.variant, metrics))
}

/// Partitions samples by target trip; roughly `test_fraction` of trips go to test.
pub fn split_by_trip(samples: &[SequenceSample], test_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let trips: BTreeSet<&str> = samples.iter().map(|s| s.trip_id.as_str()).collect();
    let mut trips: Vec<&str> = trips.into_iter().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    trips.shuffle(&mut rng);
    let n_test = ((trips.len() as f64) * test_fraction).round() as usize;
    let test: BTreeSet<&str> = trips[..n_test.min(trips.len())].iter().copied().collect();
    let (mut tr, mut te) = (vec![], vec![]);
    for (i, s) in samples.iter().enumerate() {
        if test.contains(s.trip_id.as_str()) {
            te.push(i);
        } else {
            tr.push(i);
        }
    }
    (tr, te)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AblationConfig {
    pub scenario: ScenarioConfig,
    /// Scenarios generated per seed.
    pub scenarios: usize,
    pub pipeline: PipelineConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub seeds: Vec<u64>,
    pub variants: Vec<Variant>,
    pub test_fraction: f64,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioConfig::default(),
            scenarios: 600,
            pipeline: PipelineConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig { epochs: 60, ..TrainConfig::default() },
            seeds: vec![1, 2, 3],
            variants: Variant::ALL.to_vec(),
            test_fraction: 0.25,
        }
    }
}

/// One generated dataset with its split and ground-truth strata.
#[derive(Debug, Clone)]
pub struct SuiteData {
    pub geometry: FairwayGeometry,
    pub samples: Vec<SequenceSample>,
    pub encounter: Vec<bool>,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

pub fn build_suite(cfg: &AblationConfig, seed: u64) -> Result<SuiteData, HarnessError> {
    let scenario = ScenarioConfig { seed, ..cfg.scenario.clone() };
    let syn = generate(&scenario, cfg.scenarios)?;
    let samples = preprocess(&syn.fixes, &syn.geometry, &cfg.pipeline);
    if samples.is_empty() {
        return Err(HarnessError::EmptyDataset);
    }
    let encounter = label_interactions(&syn.events, &samples)
        .iter()
        .map(|a| a.iter().any(|e| e.kind == EventKind::Encounter))
        .collect();
    let (train, test) = split_by_trip(&samples, cfg.test_fraction, seed);
    Ok(SuiteData {
        geometry: syn.geometry,
        samples,
        encounter,
        train,
        test,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: Variant,
    pub seed: u64,
    pub train_samples: usize,
    pub log: Vec<EpochLog>,
    pub report: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
}

/// Trains and evaluates one variant on a prepared suite.
pub fn run_variant(
    cfg: &AblationConfig,
    suite: &SuiteData,
    variant: Variant,
    seed: u64,
) -> Result<(Model, AblationRow), HarnessError> {
    let mcfg = ModelConfig { variant, init_seed: seed, ..cfg.model.clone() };
    let mut model = Model::new(mcfg.clone())?;
    let train_samples: Vec<SequenceSample> = suite.train.iter().map(|&i| suite.samples[i].clone()).collect();
    let data = prepare_all(&train_samples, &mcfg)?;
    let log = train(&mut model, &data, &TrainConfig { seed, ..cfg.train.clone() })?;
    let test: Vec<SequenceSample> = suite.test.iter().map(|&i| suite.samples[i].clone()).collect();
    let ann: Vec<bool> = suite.test.iter().map(|&i| suite.encounter[i]).collect();
    let report = evaluate(&model, &test, &suite.geometry, Some(&ann))?;
    let row = AblationRow {
        variant,
        seed,
        train_samples: data.len(),
        log,
        report,
    };
    Ok((model, row))
}

/// Every requested variant on every seed; each seed has its own generated data.
pub fn ablate(
    cfg: &AblationConfig,
    mut progress: impl FnMut(&Model, &AblationRow) -> Result<(), HarnessError>,
) -> Result<AblationTable, HarnessError> {
    let mut rows = vec![];
    for &seed in &cfg.seeds {
        let suite = build_suite(cfg, seed)?;
        for &v in &cfg.variants {
            let (model, row) = run_variant(cfg, &suite, v, seed)?;
            progress(&model, &row)?;
            rows.push(row);
        }
    }
    Ok(AblationTable { rows })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub variant: Variant,
    pub seeds: usize,
    pub ade: (f64, f64),
    pub fde: (f64, f64),
    pub annotated_ade: (f64, f64),
    pub annotated_fde: (f64, f64),
    pub fde_by_step: Vec<f64>,
    pub annotated_fde_by_step: Vec<f64>,
}

impl AblationTable {
    /// Per-variant means over seeds, paired with the seed-to-seed std.
    pub fn summary(&self) -> Vec<SummaryRow> {
        let mut by: BTreeMap<Variant, Vec<&AblationRow>> = BTreeMap::new();
        for r in &self.rows {
            by.entry(r.variant).or_default().push(r);
        }
        by.into_iter()
            .map(|(variant, rows)| {
                let pick = |f: &dyn Fn(&AblationRow) -> Option<f64>| {
                    let xs: Vec<f64> = rows.iter().filter_map(|r| f(r)).collect();
                    if xs.is_empty() {
                        (f64::NAN, f64::NAN)
                    } else {
                        mean_std(&xs)
                    }
                };
                let curve = |f: &dyn Fn(&AblationRow) -> Option<&Vec<f64>>| {
                    let cs: Vec<&Vec<f64>> = rows.iter().filter_map(|r| f(r)).collect();
                    let n = cs.first().map_or(0, |c| c.len());
                    (0..n).map(|i| cs.iter().map(|c| c[i]).sum::<f64>() / cs.len() as f64).collect()
                };
                SummaryRow {
                    variant,
                    seeds: rows.len(),
                    ade: pick(&|r| r.report.overall.as_ref().map(|a| a.ade_mean)),
                    fde: pick(&|r| r.report.overall.as_ref().map(|a| a.fde_mean)),
                    annotated_ade: pick(&|r| r.report.annotated.as_ref().map(|a| a.ade_mean)),
                    annotated_fde: pick(&|r| r.report.annotated.as_ref().map(|a| a.fde_mean)),
                    fde_by_step: curve(&|r| r.report.overall.as_ref().map(|a| &a.fde_by_step)),
                    annotated_fde_by_step: curve(&|r| r.report.annotated.as_ref().map(|a| &a.fde_by_step)),
                }
            })
            .collect()
    }

    pub fn to_markdown(&self) -> String {
        let mut s = String::from(
            "| variant | seeds | ADE (m) | FDE (m) | encounter ADE (m) | encounter FDE (m) |\n|---|---|---|---|---|---|\n",
        );
        for r in self.summary() {
            let _ = writeln!(
                s,
                "| {} | {} | {:.2} ± {:.2} | {:.2} ± {:.2} | {:.2} ± {:.2} | {:.2} ± {:.2} |",
                r.variant,
                r.seeds,
                r.ade.0,
                r.ade.1,
                r.fde.0,
                r.fde.1,
                r.annotated_ade.0,
                r.annotated_ade.1,
                r.annotated_fde.0,
                r.annotated_fde.1
            );
        }
        s
    }
}

/// Horizon curves as CSV: `variant,seed,stratum,step,minutes,fde`.
pub fn horizon_csv(rows: &[AblationRow], dt: f64) -> String {
    let mut s = String::from("variant,seed,stratum,step,minutes,fde\n");
    for r in rows {
        for (name, agg) in [("all", &r.report.overall), ("encounter", &r.report.annotated)] {
            if let Some(a) = agg {
                for (i, v) in a.fde_by_step.iter().enumerate() {
                    let _ = writeln!(s, "{},{},{},{},{},{}", r.variant, r.seed, name, i + 1, (i + 1) as f64 * dt / 60.0, v);
                }
            }
        }
    }
    s
}

/// `key = value` lines; `#` starts a comment. Duplicate keys are rejected.
pub fn parse_flat_config(text: &str) -> Result<BTreeMap<String, String>, HarnessError> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |m: &str| HarnessError::Config { line: i + 1, message: m.to_string() };
        let (k, v) = line.split_once('=').ok_or_else(|| err("expected key = value"))?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(err("empty key"));
        }
        if out.insert(k.to_string(), v.to_string()).is_some() {
            return Err(err(&format!("duplicate key {k}")));
        }
    }
    Ok(out)
}

/// Applies recognized keys to the model and training configs.
///
/// Model keys: `variant d heads enc_layers dec_layers stt_layers ff_hidden
/// t_obs horizon n_lat lat_min lat_max n_lon lon_min lon_max grid_w grid_l
/// lat_cell lon_cell ahead_fraction dt context_len value_scale init_seed`.
/// Training keys: `lr batch clip epochs max_steps seed`.
pub fn apply_flat_config(
    kv: &BTreeMap<String, String>,
    model: &mut ModelConfig,
    train: &mut TrainConfig,
) -> Result<(), HarnessError> {
    for (k, v) in kv {
        let bad = |m: String| HarnessError::Config { line: 0, message: format!("{k}: {m}") };
        let f = || v.parse::<f64>().map_err(|e| bad(e.to_string()));
        let u = || v.parse::<usize>().map_err(|e| bad(e.to_string()));
        let s = || v.parse::<u64>().map_err(|e| bad(e.to_string()));
        match k.as_str() {
            "variant" => model.variant = v.parse().map_err(bad)?,
            "d" => model.d = u()?,
            "heads" => model.heads = u()?,
            "enc_layers" => model.enc_layers = u()?,
            "dec_layers" => model.dec_layers = u()?,
            "stt_layers" => model.stt_layers = u()?,
            "ff_hidden" => model.ff_hidden = u()?,
            "t_obs" => model.t_obs = u()?,
            "horizon" => model.horizon = u()?,
            "n_lat" => model.n_lat = u()?,
            "lat_min" => model.lat_range.0 = f()?,
            "lat_max" => model.lat_range.1 = f()?,
            "n_lon" => model.n_lon = u()?,
            "lon_min" => model.lon_range.0 = f()?,
            "lon_max" => model.lon_range.1 = f()?,
            "grid_w" => model.grid.w = u()?,
            "grid_l" => model.grid.l = u()?,
            "lat_cell" => model.grid.lat_cell = f()?,
            "lon_cell" => model.grid.lon_cell = f()?,
            "ahead_fraction" => model.grid.ahead_fraction = f()?,
            "dt" => model.dt = f()?,
            "context_len" => model.context_len = u()?,
            "value_scale" => model.value_scale = f()?,
            "init_seed" => model.init_seed = s()?,
            "lr" => train.lr = f()?,
            "batch" => train.batch = u()?,
            "clip" => train.clip = f()?,
            "epochs" => train.epochs = u()?,
            "max_steps" => train.max_steps = Some(s()?),
            "seed" => train.seed = s()?,
            _ => return Err(bad("unknown key".into())),
        }
    }
    model.validate()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), HarnessError> {
    std::fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}
