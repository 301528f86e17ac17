//! Social tensor transformer: encodes each occupancy-grid slice as a set of
//! tokens and fuses it into the target's input embedding of the same step
//! through single-query cross-attention.

use rand::Rng;

use crate::socialtensor::{GridSpec, Occupied, SocialTensor};
use crate::tensorcore::{
    attention, pos_encode_2d, AttentionParams, Encoder, FeedForward, Graph, LayerNorm, Linear,
    ParamId, ParamStore, Tensor, TensorError, Var,
};

#[derive(Debug, Clone)]
pub struct Stt {
    pub spec: GridSpec,
    /// Cell values are divided by this before embedding (m).
    pub value_scale: f64,
    pub d: usize,
    pub cell_embed: Linear,
    pub null_token: ParamId,
    pub encoder: Encoder,
    pub ln_query: LayerNorm,
    pub cross: AttentionParams,
    pub ln_ff: LayerNorm,
    pub ff: FeedForward,
    /// Output projection of the fused update; zero makes the block an identity.
    pub proj: ParamId,
    pe: Tensor,
}

#[derive(Debug, Clone, Copy)]
pub struct SttShape {
    pub d: usize,
    pub heads: usize,
    pub layers: usize,
    pub hidden: usize,
    pub value_scale: f64,
}

impl Stt {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, spec: GridSpec, shape: SttShape, rng: &mut R) -> Self {
        let d = shape.d;
        let cell_embed = Linear::new(store, &format!("{name}.cell_embed"), 2, d, true, rng);
        let null_token = store.normal(format!("{name}.null_token"), 1, d, 0.1, rng);
        let encoder = Encoder::new(store, &format!("{name}.encoder"), shape.layers, d, shape.heads, shape.hidden, rng);
        let ln_query = LayerNorm::new(store, &format!("{name}.fuse.ln_query"), d);
        let cross = AttentionParams::new(store, &format!("{name}.fuse.cross"), d, shape.heads, rng);
        let ln_ff = LayerNorm::new(store, &format!("{name}.fuse.ln_ff"), d);
        let ff = FeedForward::new(store, &format!("{name}.fuse.ff"), d, shape.hidden, rng);
        let proj = store.normal(format!("{name}.fuse.proj"), d, d, 0.1 / (d as f64).sqrt(), rng);
        Self {
            spec,
            value_scale: shape.value_scale,
            d,
            cell_embed,
            null_token,
            encoder,
            ln_query,
            cross,
            ln_ff,
            ff,
            proj,
            pe: pos_encode_2d(spec.w, spec.l, d),
        }
    }

    /// Embedded cells plus positional encodings, in the given order.
    fn embed_cells(&self, g: &mut Graph<'_>, cells: &[Occupied]) -> Option<Var> {
        if cells.is_empty() {
            return None;
        }
        let vals: Vec<f64> = cells
            .iter()
            .flat_map(|c| [c.value[0] / self.value_scale, c.value[1] / self.value_scale])
            .collect();
        let x = g.constant(Tensor::matrix(cells.len(), 2, vals));
        let e = self.cell_embed.forward(g, x);
        let shape = self.pe.shape();
        let (ls, d) = (shape[1], shape[2]);
        let pe: Vec<f64> = cells
            .iter()
            .flat_map(|c| self.pe.data()[(c.w * ls + c.l) * d..(c.w * ls + c.l + 1) * d].iter().copied())
            .collect();
        let pe = g.constant(Tensor::matrix(cells.len(), d, pe));
        Some(g.add(e, pe))
    }

    /// Encoded tokens of one grid slice: occupied cells then the null token.
    pub fn encode_grid(&self, g: &mut Graph<'_>, cells: &[Occupied]) -> Result<Var, TensorError> {
        let null = g.param(self.null_token);
        let tokens = match self.embed_cells(g, cells) {
            Some(e) => g.concat_rows(&[e, null]),
            None => null,
        };
        self.encoder.forward(g, tokens, None)
    }

    /// Fuses encoded tokens into one target embedding row `[1, d]`.
    pub fn fuse(&self, g: &mut Graph<'_>, x: Var, encoded: Var) -> Result<Var, TensorError> {
        self.fuse_masked(g, x, encoded, None)
    }

    fn fuse_masked(&self, g: &mut Graph<'_>, x: Var, tokens: Var, mask: Option<&[bool]>) -> Result<Var, TensorError> {
        let q = self.ln_query.forward(g, x);
        let a = attention(g, q, tokens, tokens, &self.cross, mask)?;
        let h = self.ln_ff.forward(g, a);
        let f = self.ff.forward(g, h);
        let b = g.add(a, f);
        let p = g.param(self.proj);
        let update = g.matmul(b, p);
        Ok(g.add(x, update))
    }

    /// Fuses every step of `x` (`[T, d]`) with the matching slice of
    /// `tensor`. All slices are processed in one pass; block masks keep the
    /// steps independent.
    pub fn fuse_sequence(&self, g: &mut Graph<'_>, x: Var, tensor: &SocialTensor) -> Result<Var, TensorError> {
        let t_obs = tensor.t;
        assert_eq!(g.value(x).rows(), t_obs, "one embedding per grid slice");
        let per_step: Vec<Vec<Occupied>> = (0..t_obs).map(|t| tensor.occupied_at(t)).collect();
        let all: Vec<Occupied> = per_step.iter().flatten().copied().collect();
        let embedded = self.embed_cells(g, &all);
        let null = g.param(self.null_token);
        let mut pieces = vec![];
        let mut owner = vec![];
        let mut offset = 0;
        for (t, cells) in per_step.iter().enumerate() {
            if let (Some(e), m) = (embedded, cells.len()) {
                if m > 0 {
                    pieces.push(g.slice_rows(e, offset, m));
                    offset += m;
                }
            }
            pieces.push(null);
            owner.extend(std::iter::repeat_n(t, cells.len() + 1));
        }
        let tokens = g.concat_rows(&pieces);
        let n = owner.len();
        let self_mask: Vec<bool> = (0..n * n).map(|i| owner[i / n] == owner[i % n]).collect();
        let encoded = self.encoder.forward(g, tokens, Some(&self_mask))?;
        let cross_mask: Vec<bool> = (0..t_obs * n).map(|i| owner[i % n] == i / n).collect();
        self.fuse_masked(g, x, encoded, Some(&cross_mask))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensorcore::{check_params, Grads};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup(spec: GridSpec, d: usize) -> (ParamStore, Stt) {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut store = ParamStore::new();
        let shape = SttShape { d, heads: 2, layers: 1, hidden: 2 * d, value_scale: 100.0 };
        let stt = Stt::new(&mut store, "stt", spec, shape, &mut rng);
        (store, stt)
    }

    fn small_spec() -> GridSpec {
        GridSpec { w: 3, l: 4, lat_cell: 25.0, lon_cell: 75.0, ahead_fraction: 0.5 }
    }

    fn random_tensor(rng: &mut ChaCha8Rng, spec: &GridSpec, t: usize, p: f64) -> SocialTensor {
        let mut s = SocialTensor::empty(spec, t);
        for step in 0..t {
            for w in 0..spec.w {
                for l in 0..spec.l {
                    if rng.gen_bool(p) {
                        s.set(w, l, step, [rng.gen_range(-20.0..20.0), rng.gen_range(-300.0..100.0)]);
                    }
                }
            }
        }
        s
    }

    fn embeds(rng: &mut ChaCha8Rng, t: usize, d: usize) -> Tensor {
        Tensor::matrix(t, d, (0..t * d).map(|_| rng.gen_range(-1.0..1.0)).collect())
    }

    fn fused(store: &ParamStore, stt: &Stt, x: &Tensor, s: &SocialTensor) -> Tensor {
        let mut g = Graph::new(store);
        let xv = g.input(x.clone());
        let out = stt.fuse_sequence(&mut g, xv, s).unwrap();
        g.value(out).clone()
    }

    #[test]
    fn empty_grid_is_null_token_only() {
        let (store, stt) = setup(small_spec(), 8);
        let mut g = Graph::new(&store);
        let enc = stt.encode_grid(&mut g, &[]).unwrap();
        assert_eq!(g.value(enc).rows(), 1);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = embeds(&mut rng, 3, 8);
        let e = SocialTensor::empty(&small_spec(), 3);
        let a = fused(&store, &stt, &x, &e);
        let b = fused(&store, &stt, &x, &e);
        assert_eq!(a, b);
        assert!(a.is_finite());
    }

    #[test]
    fn token_order_does_not_matter() {
        let spec = small_spec();
        let (store, stt) = setup(spec, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = random_tensor(&mut rng, &spec, 1, 0.6);
        let cells = s.occupied_at(0);
        let mut rev = cells.clone();
        rev.reverse();
        let x = embeds(&mut rng, 1, 8);
        let run = |cells: &[Occupied]| {
            let mut g = Graph::new(&store);
            let xv = g.input(x.clone());
            let enc = stt.encode_grid(&mut g, cells).unwrap();
            let out = stt.fuse(&mut g, xv, enc).unwrap();
            g.value(out).clone()
        };
        let (a, b) = (run(&cells), run(&rev));
        for (p, q) in a.data().iter().zip(b.data()) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn same_cells_same_tokens_at_any_step() {
        let spec = small_spec();
        let (store, stt) = setup(spec, 8);
        let mut s = SocialTensor::empty(&spec, 3);
        s.set(1, 2, 0, [3.0, -40.0]);
        s.set(1, 2, 2, [3.0, -40.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let row = embeds(&mut rng, 1, 8);
        let x = Tensor::matrix(3, 8, row.data().repeat(3));
        let out = fused(&store, &stt, &x, &s);
        assert_eq!(out.row_slice(0), out.row_slice(2));
        assert_ne!(out.row_slice(0), out.row_slice(1));
    }

    #[test]
    fn batched_matches_per_step() {
        let spec = small_spec();
        let (store, stt) = setup(spec, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s = random_tensor(&mut rng, &spec, 4, 0.3);
        let x = embeds(&mut rng, 4, 8);
        let batched = fused(&store, &stt, &x, &s);
        for t in 0..4 {
            let mut g = Graph::new(&store);
            let xv = g.input(Tensor::row(x.row_slice(t).to_vec()));
            let enc = stt.encode_grid(&mut g, &s.occupied_at(t)).unwrap();
            let out = stt.fuse(&mut g, xv, enc).unwrap();
            for (p, q) in g.value(out).data().iter().zip(batched.row_slice(t)) {
                assert!((p - q).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn masked_values_never_leak() {
        let spec = GridSpec::default();
        let (store, stt) = setup(spec, 16);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..20 {
            let s = random_tensor(&mut rng, &spec, 5, 0.02);
            let x = embeds(&mut rng, 5, 16);
            let base = fused(&store, &stt, &x, &s);
            let mut m = s.clone();
            for t in 0..5 {
                for w in 0..spec.w {
                    for l in 0..spec.l {
                        if !m.occupied(w, l, t) {
                            m.scribble_masked(w, l, t, [rng.gen_range(-1e6..1e6), f64::MAX]);
                        }
                    }
                }
            }
            assert_eq!(base, fused(&store, &stt, &x, &m));
        }
    }

    #[test]
    fn changing_one_step_changes_only_that_step() {
        let spec = small_spec();
        let (store, stt) = setup(spec, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let s = random_tensor(&mut rng, &spec, 3, 0.4);
        let x = embeds(&mut rng, 3, 8);
        let base = fused(&store, &stt, &x, &s);
        let mut m = s.clone();
        m.set(0, 0, 1, [7.0, 7.0]);
        let out = fused(&store, &stt, &x, &m);
        assert_eq!(base.row_slice(0), out.row_slice(0));
        assert_eq!(base.row_slice(2), out.row_slice(2));
        assert_ne!(base.row_slice(1), out.row_slice(1));
    }

    #[test]
    fn zero_projection_is_identity() {
        let spec = small_spec();
        let (mut store, stt) = setup(spec, 8);
        store.get_mut(stt.proj).data_mut().fill(0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let s = random_tensor(&mut rng, &spec, 3, 0.4);
        let x = embeds(&mut rng, 3, 8);
        assert_eq!(fused(&store, &stt, &x, &s), x);
    }

    #[test]
    fn duplicate_tokens_stay_finite() {
        let spec = small_spec();
        let (store, stt) = setup(spec, 8);
        let cell = Occupied { w: 1, l: 1, value: [2.0, -30.0] };
        let mut g = Graph::new(&store);
        let x = g.input(Tensor::row(vec![0.3; 8]));
        let enc = stt.encode_grid(&mut g, &[cell, cell]).unwrap();
        let out = stt.fuse(&mut g, x, enc).unwrap();
        assert!(g.value(out).is_finite());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let spec = small_spec();
        let (mut store, stt) = setup(spec, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let s = random_tensor(&mut rng, &spec, 2, 0.4);
        let x = embeds(&mut rng, 2, 8);
        let w = embeds(&mut rng, 2, 8);
        let report = check_params(&mut store, 1e-5, 1e-6, |g| {
            let xv = g.input(x.clone());
            let out = stt.fuse_sequence(g, xv, &s)?;
            let wv = g.constant(w.clone());
            let p = g.mul(out, wv);
            Ok(g.sum_all(p))
        })
        .unwrap();
        assert!(report.max_rel_error() < 1e-5, "{:?}", report.worst);
    }

    #[test]
    fn gradients_wrt_cell_values() {
        let spec = small_spec();
        let (store, stt) = setup(spec, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let cells: Vec<Occupied> = vec![
            Occupied { w: 0, l: 1, value: [3.0, -50.0] },
            Occupied { w: 2, l: 3, value: [-7.0, 20.0] },
        ];
        let x = embeds(&mut rng, 1, 8);
        let w = embeds(&mut rng, 1, 8);
        let loss = |cells: &[Occupied]| {
            let mut g = Graph::new(&store);
            let xv = g.input(x.clone());
            let enc = stt.encode_grid(&mut g, cells).unwrap();
            let out = stt.fuse(&mut g, xv, enc).unwrap();
            let wv = g.constant(w.clone());
            let p = g.mul(out, wv);
            let s = g.sum_all(p);
            (g.value(s).item(), g, s)
        };
        // Analytic gradient through the cell-embedding input.
        let mut g = Graph::new(&store);
        let vals = g.input(Tensor::matrix(2, 2, cells.iter().flat_map(|c| c.value.map(|v| v / 100.0)).collect()));
        let e = stt.cell_embed.forward(&mut g, vals);
        let pe: Vec<f64> = cells.iter().flat_map(|c| crate::tensorcore::cell_encoding(&stt.pe, c.w, c.l).to_vec()).collect();
        let pe = g.constant(Tensor::matrix(2, 8, pe));
        let e = g.add(e, pe);
        let null = g.param(stt.null_token);
        let tokens = g.concat_rows(&[e, null]);
        let enc = stt.encoder.forward(&mut g, tokens, None).unwrap();
        let xv = g.input(x.clone());
        let out = stt.fuse(&mut g, xv, enc).unwrap();
        let wv = g.constant(w.clone());
        let p = g.mul(out, wv);
        let s = g.sum_all(p);
        let grads: Grads = g.backward(s);
        let analytic = grads.wrt(vals).unwrap().to_vec();
        assert!((loss(&cells).0 - g.value(s).item()).abs() < 1e-12);
        let eps = 1e-5;
        for i in 0..4 {
            let (c, k) = (i / 2, i % 2);
            let mut plus = cells.clone();
            let mut minus = cells.clone();
            plus[c].value[k] += eps * 100.0;
            minus[c].value[k] -= eps * 100.0;
            let num = (loss(&plus).0 - loss(&minus).0) / (2.0 * eps);
            let rel = crate::tensorcore::relative_error(analytic[i], num, 1e-6);
            assert!(rel < 1e-5, "cell input {i}: {} vs {num}", analytic[i]);
        }
    }
}
