//! Encoder-decoder classification transformer over discretized dislocations,
//! in three variants: `ct` (heading-frame labels), `sp-ct` (fairway-frame
//! labels) and `sosp-ct` (fairway-frame labels fused with the social tensor).

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::navframe::{dislocation, heading_dislocation, DislocationLabel, LabelCodec, NavError};
use crate::pipeline::SequenceSample;
use crate::socialtensor::{GridSpec, SocialTensor};
use crate::stt::{Stt, SttShape};
use crate::tensorcore::{
    load_checkpoint, pos_encode_1d, save_checkpoint, Decoder, Encoder, Graph, Linear, ParamGrads,
    ParamId, ParamStore, Tensor, TensorError, Var,
};

pub use crate::pipeline::NavigationContext;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("variant {variant} {problem}")]
    VariantMismatch { variant: Variant, problem: &'static str },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("manifest mismatch: {0}")]
    ManifestMismatch(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Nav(#[from] NavError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Ct,
    SpCt,
    SospCt,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Ct, Variant::SpCt, Variant::SospCt];

    pub fn uses_social_tensor(self) -> bool {
        self == Variant::SospCt
    }

    pub fn uses_nav_frame(self) -> bool {
        self != Variant::Ct
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Ct => "ct",
            Variant::SpCt => "sp-ct",
            Variant::SospCt => "sosp-ct",
        })
    }
}

impl FromStr for Variant {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "ct" => Ok(Variant::Ct),
            "sp-ct" => Ok(Variant::SpCt),
            "sosp-ct" => Ok(Variant::SospCt),
            _ => Err(format!("unknown variant {s:?} (expected ct, sp-ct or sosp-ct)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub variant: Variant,
    pub d: usize,
    pub heads: usize,
    pub enc_layers: usize,
    pub dec_layers: usize,
    pub stt_layers: usize,
    pub ff_hidden: usize,
    pub t_obs: usize,
    pub horizon: usize,
    pub n_lat: usize,
    pub lat_range: (f64, f64),
    pub n_lon: usize,
    pub lon_range: (f64, f64),
    pub grid: GridSpec,
    /// Time resolution (s).
    pub dt: f64,
    pub context_len: usize,
    /// Social-tensor values are divided by this before embedding (m).
    pub value_scale: f64,
    pub init_seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            variant: Variant::SospCt,
            d: 32,
            heads: 4,
            enc_layers: 1,
            dec_layers: 1,
            stt_layers: 1,
            ff_hidden: 64,
            t_obs: 5,
            horizon: 5,
            n_lat: 21,
            lat_range: (-15.0, 15.0),
            n_lon: 41,
            lon_range: (0.0, 200.0),
            grid: GridSpec::default(),
            dt: 60.0,
            context_len: 8,
            value_scale: 100.0,
            init_seed: 0,
        }
    }
}

impl ModelConfig {
    /// Smallest useful shape, for gradient checks.
    pub fn tiny(variant: Variant) -> Self {
        Self {
            variant,
            d: 8,
            heads: 2,
            ff_hidden: 16,
            t_obs: 3,
            horizon: 3,
            n_lat: 5,
            lat_range: (-15.0, 15.0),
            n_lon: 5,
            lon_range: (0.0, 200.0),
            grid: GridSpec {
                w: 3,
                l: 4,
                lat_cell: 25.0,
                lon_cell: 75.0,
                ahead_fraction: 0.5,
            },
            context_len: 4,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidConfig(m.into()));
        if self.d == 0 || !self.d.is_multiple_of(4) {
            return bad("d must be a positive multiple of 4");
        }
        if self.heads == 0 || !self.d.is_multiple_of(self.heads) {
            return bad("d must be divisible by heads");
        }
        if self.t_obs == 0 || self.horizon == 0 {
            return bad("t_obs and horizon must be positive");
        }
        if self.t_obs != self.horizon {
            return bad("t_obs must equal horizon");
        }
        if self.n_lat == 0 || self.n_lon == 0 {
            return bad("class counts must be positive");
        }
        if !(self.value_scale > 0.0 && self.dt > 0.0) {
            return bad("value_scale and dt must be positive");
        }
        self.grid.validate().map_err(ModelError::InvalidConfig)?;
        Ok(())
    }

    pub fn codec(&self) -> Result<LabelCodec, ModelError> {
        Ok(LabelCodec::uniform(self.lat_range, self.n_lat, self.lon_range, self.n_lon)?)
    }
}

/// Everything the model conditions on for one prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelInput {
    pub obs: Vec<DislocationLabel>,
    pub tensor: Option<SocialTensor>,
    pub context: Vec<f64>,
}

/// Input plus the `horizon` ground-truth labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub input: ModelInput,
    pub target: Vec<DislocationLabel>,
}

#[derive(Debug, Clone, Copy)]
pub struct Logits {
    pub lat: Var,
    pub lon: Var,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossValues {
    pub total: f64,
    pub lx: f64,
    pub ly: f64,
}

/// `exp(-s_x) L_x + exp(-s_y) L_y + (s_x + s_y) / 2`.
pub fn uncertainty_loss(lx: f64, ly: f64, s_x: f64, s_y: f64) -> f64 {
    (-s_x).exp() * lx + (-s_y).exp() * ly + (s_x + s_y) / 2.0
}

/// Row-wise argmax; ties go to the lower index.
pub fn argmax_rows(t: &Tensor) -> Vec<usize> {
    (0..t.rows())
        .map(|r| {
            let row = t.row_slice(r);
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct Model {
    pub cfg: ModelConfig,
    pub codec: LabelCodec,
    pub store: ParamStore,
    obs_lat: Linear,
    obs_lon: Linear,
    dec_lat: Linear,
    dec_lon: Linear,
    ctx: Linear,
    encoder: Encoder,
    decoder: Decoder,
    head_lat: Linear,
    head_lon: Linear,
    pub s_x: ParamId,
    pub s_y: ParamId,
    pub stt: Option<Stt>,
    pe: Tensor,
}

impl Model {
    /// Builds a variant with parameters drawn from `cfg.init_seed`. Shared
    /// parameters are registered first so variants agree on them for equal seeds.
    pub fn new(cfg: ModelConfig) -> Result<Self, ModelError> {
        cfg.validate()?;
        let codec = cfg.codec()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.init_seed);
        let mut store = ParamStore::new();
        let (d, h) = (cfg.d, cfg.d / 2);
        let obs_lat = Linear::new(&mut store, "embed.obs_lat", cfg.n_lat, h, true, &mut rng);
        let obs_lon = Linear::new(&mut store, "embed.obs_lon", cfg.n_lon, h, true, &mut rng);
        let dec_lat = Linear::new(&mut store, "embed.dec_lat", cfg.n_lat, h, true, &mut rng);
        let dec_lon = Linear::new(&mut store, "embed.dec_lon", cfg.n_lon, h, true, &mut rng);
        let ctx = Linear::new(&mut store, "embed.context", cfg.context_len.max(1), d, true, &mut rng);
        let encoder = Encoder::new(&mut store, "encoder", cfg.enc_layers, d, cfg.heads, cfg.ff_hidden, &mut rng);
        let decoder = Decoder::new(&mut store, "decoder", cfg.dec_layers, d, cfg.heads, cfg.ff_hidden, &mut rng);
        let head_lat = Linear::new(&mut store, "head.lat", d, cfg.n_lat, true, &mut rng);
        let head_lon = Linear::new(&mut store, "head.lon", d, cfg.n_lon, true, &mut rng);
        let s_x = store.zeros("loss.s_x", 1, 1);
        let s_y = store.zeros("loss.s_y", 1, 1);
        let stt = cfg.variant.uses_social_tensor().then(|| {
            let shape = SttShape {
                d,
                heads: cfg.heads,
                layers: cfg.stt_layers,
                hidden: cfg.ff_hidden,
                value_scale: cfg.value_scale,
            };
            Stt::new(&mut store, "stt", cfg.grid, shape, &mut rng)
        });
        let pe = pos_encode_1d(cfg.t_obs.max(cfg.horizon), d);
        Ok(Self {
            cfg,
            codec,
            store,
            obs_lat,
            obs_lon,
            dec_lat,
            dec_lon,
            ctx,
            encoder,
            decoder,
            head_lat,
            head_lon,
            s_x,
            s_y,
            stt,
            pe,
        })
    }

    pub fn num_params(&self) -> usize {
        self.store.num_scalars()
    }

    pub fn sigmas(&self) -> (f64, f64) {
        let s = |id| (self.store.get(id).item() / 2.0).exp();
        (s(self.s_x), s(self.s_y))
    }

    fn pe_rows(&self, g: &mut Graph<'_>, n: usize) -> Var {
        let d = self.cfg.d;
        g.constant(Tensor::matrix(n, d, self.pe.data()[..n * d].to_vec()))
    }

    fn embed(g: &mut Graph<'_>, lat: &Linear, lon: &Linear, labels: &[DislocationLabel]) -> Var {
        let ls: Vec<usize> = labels.iter().map(|l| l.lat).collect();
        let ns: Vec<usize> = labels.iter().map(|l| l.lon).collect();
        let a = lat.forward_one_hot(g, &ls);
        let b = lon.forward_one_hot(g, &ns);
        g.concat_cols(&[a, b])
    }

    fn check_input(&self, input: &ModelInput) -> Result<(), ModelError> {
        let v = self.cfg.variant;
        match (&input.tensor, v.uses_social_tensor()) {
            (Some(_), false) => {
                return Err(ModelError::VariantMismatch { variant: v, problem: "takes no social tensor" })
            }
            (None, true) => {
                return Err(ModelError::VariantMismatch { variant: v, problem: "requires a social tensor" })
            }
            _ => {}
        }
        if input.obs.len() != self.cfg.t_obs {
            return Err(ModelError::InvalidConfig(format!(
                "expected {} observed labels, got {}",
                self.cfg.t_obs,
                input.obs.len()
            )));
        }
        if input.context.len() != self.cfg.context_len {
            return Err(ModelError::InvalidConfig(format!(
                "expected context length {}, got {}",
                self.cfg.context_len,
                input.context.len()
            )));
        }
        Ok(())
    }

    /// Encoder memory for the observed sequence.
    pub fn encode(&self, g: &mut Graph<'_>, input: &ModelInput) -> Result<Var, ModelError> {
        self.check_input(input)?;
        let mut x = Self::embed(g, &self.obs_lat, &self.obs_lon, &input.obs);
        if let (Some(stt), Some(t)) = (&self.stt, &input.tensor) {
            x = stt.fuse_sequence(g, x, t)?;
        }
        let pe = self.pe_rows(g, self.cfg.t_obs);
        let x = g.add(x, pe);
        Ok(self.encoder.forward(g, x, None)?)
    }

    /// Decoder logits for the context token followed by `dec_labels`.
    pub fn decode(
        &self,
        g: &mut Graph<'_>,
        memory: Var,
        context: &[f64],
        dec_labels: &[DislocationLabel],
    ) -> Result<Logits, ModelError> {
        let n = dec_labels.len() + 1;
        if n > self.cfg.horizon {
            return Err(ModelError::InvalidConfig("decoder input longer than horizon".into()));
        }
        let c = g.constant(Tensor::row(if context.is_empty() { vec![0.0] } else { context.to_vec() }));
        let mut x = self.ctx.forward(g, c);
        if !dec_labels.is_empty() {
            let e = Self::embed(g, &self.dec_lat, &self.dec_lon, dec_labels);
            x = g.concat_rows(&[x, e]);
        }
        let pe = self.pe_rows(g, n);
        let x = g.add(x, pe);
        let h = self.decoder.forward(g, x, memory)?;
        Ok(Logits {
            lat: self.head_lat.forward(g, h),
            lon: self.head_lon.forward(g, h),
        })
    }

    /// Teacher-forced logits for all `horizon` steps.
    pub fn forward(&self, g: &mut Graph<'_>, input: &ModelInput, dec_labels: &[DislocationLabel]) -> Result<Logits, ModelError> {
        let memory = self.encode(g, input)?;
        self.decode(g, memory, &input.context, dec_labels)
    }

    /// Uncertainty-weighted dual cross-entropy; returns `(total, L_x, L_y)`.
    pub fn loss(&self, g: &mut Graph<'_>, logits: Logits, target: &[DislocationLabel]) -> (Var, Var, Var) {
        let lat: Vec<usize> = target.iter().map(|l| l.lat).collect();
        let lon: Vec<usize> = target.iter().map(|l| l.lon).collect();
        let lx = g.softmax_xent(logits.lat, &lat);
        let ly = g.softmax_xent(logits.lon, &lon);
        let sx = g.param(self.s_x);
        let sy = g.param(self.s_y);
        let total = weighted_loss(g, lx, ly, sx, sy);
        (total, lx, ly)
    }

    fn teacher_inputs<'a>(&self, target: &'a [DislocationLabel]) -> &'a [DislocationLabel] {
        &target[..target.len().saturating_sub(1)]
    }

    /// Loss and parameter gradients of one example.
    pub fn example_grads(&self, ex: &Example) -> Result<(ParamGrads, LossValues), ModelError> {
        let mut g = Graph::new(&self.store);
        let logits = self.forward(&mut g, &ex.input, self.teacher_inputs(&ex.target))?;
        let (total, lx, ly) = self.loss(&mut g, logits, &ex.target);
        let values = LossValues {
            total: g.value(total).item(),
            lx: g.value(lx).item(),
            ly: g.value(ly).item(),
        };
        let grads = g.backward(total).param_grads(&g);
        Ok((grads, values))
    }

    pub fn example_loss(&self, ex: &Example) -> Result<LossValues, ModelError> {
        let mut g = Graph::new(&self.store);
        let logits = self.forward(&mut g, &ex.input, self.teacher_inputs(&ex.target))?;
        let (total, lx, ly) = self.loss(&mut g, logits, &ex.target);
        Ok(LossValues {
            total: g.value(total).item(),
            lx: g.value(lx).item(),
            ly: g.value(ly).item(),
        })
    }

    /// Per-step argmax labels under teacher forcing.
    pub fn teacher_forced_argmax(&self, ex: &Example) -> Result<Vec<DislocationLabel>, ModelError> {
        let mut g = Graph::new(&self.store);
        let logits = self.forward(&mut g, &ex.input, self.teacher_inputs(&ex.target))?;
        let lat = argmax_rows(g.value(logits.lat));
        let lon = argmax_rows(g.value(logits.lon));
        Ok(lat.into_iter().zip(lon).map(|(a, b)| DislocationLabel::new(a, b)).collect())
    }

    /// Autoregressive prediction of `steps` labels, feeding back each argmax.
    pub fn greedy_decode(&self, input: &ModelInput, steps: usize) -> Result<Vec<DislocationLabel>, ModelError> {
        let mut g = Graph::new(&self.store);
        let memory = self.encode(&mut g, input)?;
        let mut out: Vec<DislocationLabel> = Vec::with_capacity(steps);
        while out.len() < steps {
            let logits = self.decode(&mut g, memory, &input.context, &out)?;
            let last = out.len();
            let lat = argmax_rows(g.value(logits.lat))[last];
            let lon = argmax_rows(g.value(logits.lon))[last];
            out.push(DislocationLabel::new(lat, lon));
        }
        Ok(out)
    }

    pub fn save(&self, stem: &Path) -> Result<(), ModelError> {
        let meta = json!({
            "config": self.cfg,
            "variant": self.cfg.variant,
            "codec": {
                "lateral_edges": self.codec.lateral_edges(),
                "longitudinal_edges": self.codec.longitudinal_edges(),
            },
            "grid": self.cfg.grid,
        });
        Ok(save_checkpoint(stem, &self.store, meta)?)
    }

    pub fn load(stem: &Path) -> Result<Self, ModelError> {
        let (manifest, store) = load_checkpoint(stem)?;
        let cfg: ModelConfig = serde_json::from_value(manifest.meta["config"].clone())
            .map_err(|e| ModelError::ManifestMismatch(format!("config: {e}")))?;
        let mut model = Model::new(cfg)?;
        if model.store.len() != store.len() {
            return Err(ModelError::ManifestMismatch("parameter count".into()));
        }
        for ((_, a, ta), (_, b, tb)) in model.store.iter().zip(store.iter()) {
            if a != b || ta.shape() != tb.shape() {
                return Err(ModelError::ManifestMismatch(format!("parameter {a} vs {b}")));
            }
        }
        model.store = store;
        Ok(model)
    }

    /// Copies every parameter whose name and shape also exist in `other`.
    pub fn copy_shared_from(&mut self, other: &Model) -> usize {
        let mut n = 0;
        let ids: Vec<ParamId> = self.store.ids().collect();
        for id in ids {
            let name = self.store.name(id).to_string();
            if let Some(src) = other.store.find(&name) {
                let t = other.store.get(src).clone();
                if t.shape() == self.store.get(id).shape() {
                    *self.store.get_mut(id) = t;
                    n += 1;
                }
            }
        }
        n
    }
}

fn weighted_loss(g: &mut Graph<'_>, lx: Var, ly: Var, sx: Var, sy: Var) -> Var {
    let nsx = g.scale(sx, -1.0);
    let nsy = g.scale(sy, -1.0);
    let wx = g.exp(nsx);
    let wy = g.exp(nsy);
    let a = g.mul(wx, lx);
    let b = g.mul(wy, ly);
    let ab = g.add(a, b);
    let s = g.add(sx, sy);
    let s = g.scale(s, 0.5);
    g.add(ab, s)
}

/// Fairway-frame labels of every window step after the anchor.
pub fn nav_labels(sample: &SequenceSample, codec: &LabelCodec) -> Vec<DislocationLabel> {
    sample
        .target_states
        .windows(2)
        .map(|w| codec.encode(dislocation(w[0], w[1])))
        .collect()
}

/// Heading-frame labels: each step is expressed in the frame of the previous
/// step's displacement (the anchor velocity for the first).
pub fn heading_labels(sample: &SequenceSample, codec: &LabelCodec) -> Vec<DislocationLabel> {
    let p = &sample.target_points;
    (1..p.len())
        .map(|i| {
            let heading = if i == 1 { sample.anchor_heading } else { (p[i - 1] - p[i - 2]).angle() };
            codec.encode(heading_dislocation(heading, p[i - 1], p[i]))
        })
        .collect()
}

pub fn labels_for(sample: &SequenceSample, variant: Variant, codec: &LabelCodec) -> Vec<DislocationLabel> {
    if variant.uses_nav_frame() {
        nav_labels(sample, codec)
    } else {
        heading_labels(sample, codec)
    }
}

/// Converts a sample into model inputs and targets for `cfg.variant`.
pub fn prepare(sample: &SequenceSample, cfg: &ModelConfig, codec: &LabelCodec) -> Result<Example, ModelError> {
    if sample.t_obs != cfg.t_obs || sample.horizon != cfg.horizon {
        return Err(ModelError::ManifestMismatch(format!(
            "sample window {}+{} vs model {}+{}",
            sample.t_obs, sample.horizon, cfg.t_obs, cfg.horizon
        )));
    }
    if sample.context.features.len() != cfg.context_len {
        return Err(ModelError::ManifestMismatch("context length".into()));
    }
    let labels = labels_for(sample, cfg.variant, codec);
    let (obs, target) = labels.split_at(cfg.t_obs);
    Ok(Example {
        input: ModelInput {
            obs: obs.to_vec(),
            tensor: cfg
                .variant
                .uses_social_tensor()
                .then(|| SocialTensor::build(sample, &cfg.grid)),
            context: sample.context.features.clone(),
        },
        target: target.to_vec(),
    })
}
