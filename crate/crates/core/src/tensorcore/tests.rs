use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

const EPS: f64 = 1e-5;
const TOL: f64 = 1e-5;
const FLOOR: f64 = 1e-6;

fn rand_tensor(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Tensor {
    Tensor::matrix(r, c, (0..r * c).map(|_| rng.gen_range(-1.5..1.5)).collect())
}

/// Checks d(sum(f(inputs) * proj))/d(inputs) against central differences.
fn check_inputs<F>(inputs: Vec<Tensor>, f: F)
where
    F: Fn(&mut Graph<'_>, &[Var]) -> Var,
{
    check_inputs_with(&ParamStore::new(), inputs, f);
}

#[test]
fn grad_matmul_transpose() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    check_inputs(vec![rand_tensor(&mut rng, 3, 4), rand_tensor(&mut rng, 4, 2)], |g, v| {
        g.matmul(v[0], v[1])
    });
    check_inputs(vec![rand_tensor(&mut rng, 3, 4)], |g, v| g.transpose(v[0]));
}

#[test]
fn grad_elementwise() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let a = rand_tensor(&mut rng, 2, 5);
    let b = rand_tensor(&mut rng, 2, 5);
    let row = rand_tensor(&mut rng, 1, 5);
    check_inputs(vec![a.clone(), b.clone()], |g, v| g.add(v[0], v[1]));
    check_inputs(vec![a.clone(), b.clone()], |g, v| g.mul(v[0], v[1]));
    check_inputs(vec![a.clone(), row], |g, v| g.add_row(v[0], v[1]));
    check_inputs(vec![a.clone()], |g, v| g.scale(v[0], -0.7));
    check_inputs(vec![a.clone()], |g, v| g.exp(v[0]));
    check_inputs(vec![a], |g, v| g.gelu(v[0]));
}

#[test]
fn grad_layer_norm() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    check_inputs(
        vec![rand_tensor(&mut rng, 3, 6), rand_tensor(&mut rng, 1, 6), rand_tensor(&mut rng, 1, 6)],
        |g, v| g.layer_norm(v[0], v[1], v[2]),
    );
}

#[test]
fn grad_softmax_and_xent() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = rand_tensor(&mut rng, 3, 4);
    let mask = vec![true, false, true, true, true, true, false, false, false, true, true, true];
    check_inputs(vec![x.clone()], move |g, v| g.masked_softmax(v[0], Some(&mask)).unwrap());
    check_inputs(vec![rand_tensor(&mut rng, 4, 5)], |g, v| g.softmax_xent(v[0], &[0, 4, 2, 2]));
}

#[test]
fn grad_structural_ops() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let a = rand_tensor(&mut rng, 2, 3);
    let b = rand_tensor(&mut rng, 2, 2);
    let c = rand_tensor(&mut rng, 3, 3);
    check_inputs(vec![a.clone(), b], |g, v| g.concat_cols(&[v[0], v[1]]));
    check_inputs(vec![a.clone(), c.clone()], |g, v| g.concat_rows(&[v[0], v[1]]));
    check_inputs(vec![c.clone()], |g, v| g.slice_cols(v[0], 1, 2));
    check_inputs(vec![c.clone()], |g, v| g.gather_rows(v[0], &[2, 0, 2, 1]));
    check_inputs(vec![c], |g, v| g.slice_rows(v[0], 1, 2));
    check_inputs(vec![a], |g, v| g.sum_all(v[0]));
}

#[test]
fn softmax_rows_sum_to_one_and_masked_entries_are_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let store = ParamStore::new();
    for _ in 0..50 {
        let (r, c) = (rng.gen_range(1..6), rng.gen_range(1..9));
        let x = rand_tensor(&mut rng, r, c);
        let mut mask: Vec<bool> = (0..r * c).map(|_| rng.gen_bool(0.6)).collect();
        for i in 0..r {
            mask[i * c] = true;
        }
        let mut g = Graph::new(&store);
        let xv = g.constant(x);
        let y = g.masked_softmax(xv, Some(&mask)).unwrap();
        let t = g.value(y);
        for i in 0..r {
            let s: f64 = t.row_slice(i).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
            for j in 0..c {
                if !mask[i * c + j] {
                    assert_eq!(t.get(i, j), 0.0);
                }
            }
        }
    }
}

#[test]
fn fully_masked_row_is_degenerate() {
    let store = ParamStore::new();
    let mut g = Graph::new(&store);
    let x = g.constant(Tensor::zeros(2, 2));
    let err = g.masked_softmax(x, Some(&[true, false, false, false])).unwrap_err();
    assert!(matches!(err, TensorError::DegenerateAttention { row: 1 }));
}

#[test]
fn xent_uniform_logits() {
    let store = ParamStore::new();
    let mut g = Graph::new(&store);
    let x = g.constant(Tensor::zeros(3, 4));
    let l = g.softmax_xent(x, &[0, 1, 3]);
    assert!((g.value(l).item() - 4f64.ln()).abs() < 1e-15);
}

#[test]
fn xent_decreases_with_margin() {
    let store = ParamStore::new();
    let mut prev = f64::INFINITY;
    for m in [0.0, 1.0, 2.0, 5.0, 10.0, 20.0, 40.0] {
        let mut g = Graph::new(&store);
        let x = g.constant(Tensor::row(vec![0.0, m, 0.0, 0.0]));
        let l = g.softmax_xent(x, &[1]);
        let v = g.value(l).item();
        assert!(v < prev || (v == 0.0 && prev == 0.0));
        prev = v;
    }
    assert!(prev < 1e-16);
}

#[test]
fn xent_matches_direct_evaluation() {
    // Oracle: -ln(exp(z_y) / sum_j exp(z_j)) on modest logits, accumulated
    // in sorted order to minimize rounding.
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (n, c) = (8, 21);
    let x = rand_tensor(&mut rng, n, c);
    let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..c)).collect();
    let mut oracle = 0.0;
    for i in 0..n {
        let mut exps: Vec<f64> = x.row_slice(i).iter().map(|v| v.exp()).collect();
        exps.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let total: f64 = exps.iter().sum();
        oracle += -(x.get(i, labels[i]).exp() / total).ln();
    }
    oracle /= n as f64;
    let store = ParamStore::new();
    let mut g = Graph::new(&store);
    let xv = g.constant(x);
    let l = g.softmax_xent(xv, &labels);
    assert!((g.value(l).item() - oracle).abs() < 1e-12);
}

fn attn_setup(d: usize, heads: usize, seed: u64) -> (ParamStore, AttentionParams) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    let p = AttentionParams::new(&mut store, "attn", d, heads, &mut rng);
    (store, p)
}

#[test]
fn single_key_attention_is_projection() {
    let (store, p) = attn_setup(4, 1, 8);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let q = rand_tensor(&mut rng, 2, 4);
    let kv = rand_tensor(&mut rng, 1, 4);
    let mut g = Graph::new(&store);
    let (qv, kvv) = (g.constant(q), g.constant(kv.clone()));
    let out = attention(&mut g, qv, kvv, kvv, &p, None).unwrap();
    // Expected: v Wv Wo for every query row.
    let mut h = Graph::new(&store);
    let v = h.constant(kv);
    let wv = h.param(p.wv);
    let wo = h.param(p.wo);
    let t = h.matmul(v, wv);
    let expect = h.matmul(t, wo);
    for r in 0..2 {
        assert_eq!(g.value(out).row_slice(r), h.value(expect).row_slice(0));
    }
}

#[test]
fn masked_key_values_do_not_leak() {
    let (store, p) = attn_setup(8, 2, 10);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let q = rand_tensor(&mut rng, 3, 8);
    let k = rand_tensor(&mut rng, 4, 8);
    let v = rand_tensor(&mut rng, 4, 8);
    let mask: Vec<bool> = (0..12).map(|i| i % 4 != 2).collect();
    let run = |v: Tensor, k: Tensor| {
        let mut g = Graph::new(&store);
        let (qv, kv, vv) = (g.constant(q.clone()), g.constant(k), g.constant(v));
        let o = attention(&mut g, qv, kv, vv, &p, Some(&mask)).unwrap();
        g.value(o).clone()
    };
    let base = run(v.clone(), k.clone());
    let mut v2 = v.clone();
    let mut k2 = k.clone();
    for j in 0..8 {
        v2.data_mut()[2 * 8 + j] = 1e6 * (j as f64 - 3.0);
        k2.data_mut()[2 * 8 + j] = -42.0;
    }
    let other = run(v2, k2);
    assert_eq!(base, other);
}

#[test]
fn attention_param_gradients_match_finite_differences() {
    let (mut store, p) = attn_setup(8, 2, 12);
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let q = rand_tensor(&mut rng, 3, 8);
    let kv = rand_tensor(&mut rng, 5, 8);
    let proj = rand_tensor(&mut rng, 3, 8);
    let mask: Vec<bool> = (0..15).map(|i| i % 5 != 1).collect();
    let report = check_params(&mut store, EPS, FLOOR, |g| {
        let (qv, kvv, pv) = (g.constant(q.clone()), g.constant(kv.clone()), g.constant(proj.clone()));
        let o = attention(g, qv, kvv, kvv, &p, Some(&mask))?;
        let m = g.mul(o, pv);
        Ok(g.sum_all(m))
    })
    .unwrap();
    assert_eq!(report.checked, 4 * 64);
    assert!(report.max_rel_error() < TOL, "{:?}", report.worst);
}

#[test]
fn attention_input_gradients_match_finite_differences() {
    let (store, p) = attn_setup(4, 2, 14);
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let inputs = vec![rand_tensor(&mut rng, 2, 4), rand_tensor(&mut rng, 3, 4), rand_tensor(&mut rng, 3, 4)];
    check_inputs_with(&store, inputs, |g, v| attention(g, v[0], v[1], v[2], &p, None).unwrap());
}

fn check_inputs_with<F>(store: &ParamStore, inputs: Vec<Tensor>, f: F)
where
    F: Fn(&mut Graph<'_>, &[Var]) -> Var,
{
    let mut rng = ChaCha8Rng::seed_from_u64(98);
    let scalar = |g: &mut Graph<'_>, vars: &[Var], proj: &Tensor| {
        let out = f(g, vars);
        let p = g.constant(proj.clone());
        let m = g.mul(out, p);
        g.sum_all(m)
    };
    let proj = {
        let mut g = Graph::new(store);
        let vars: Vec<Var> = inputs.iter().cloned().map(|t| g.constant(t)).collect();
        let out = f(&mut g, &vars);
        let t = g.value(out);
        rand_tensor(&mut rng, t.rows(), t.cols())
    };
    let mut g = Graph::new(store);
    let vars: Vec<Var> = inputs.iter().cloned().map(|t| g.input(t)).collect();
    let root = scalar(&mut g, &vars, &proj);
    let grads = g.backward(root);
    for (k, v) in vars.iter().enumerate() {
        let analytic = grads
            .wrt(*v)
            .map(|s| s.to_vec())
            .unwrap_or_else(|| vec![0.0; inputs[k].len()]);
        for j in 0..inputs[k].len() {
            let eval = |delta: f64| {
                let mut perturbed = inputs.clone();
                perturbed[k].data_mut()[j] += delta;
                let mut g = Graph::new(store);
                let vs: Vec<Var> = perturbed.into_iter().map(|t| g.constant(t)).collect();
                let r = scalar(&mut g, &vs, &proj);
                g.value(r).item()
            };
            let numeric = (eval(EPS) - eval(-EPS)) / (2.0 * EPS);
            let rel = relative_error(analytic[j], numeric, FLOOR);
            assert!(rel < TOL, "input {k}[{j}] rel {rel}");
        }
    }
}

#[test]
fn zeroed_residual_branches_make_block_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let mut store = ParamStore::new();
    let enc = EncoderBlock::new(&mut store, "enc", 8, 2, 16, &mut rng);
    let dec = DecoderBlock::new(&mut store, "dec", 8, 2, 16, &mut rng);
    for id in [
        enc.attn.wo,
        enc.ff.down.weight,
        enc.ff.down.bias.unwrap(),
        dec.self_attn.wo,
        dec.cross_attn.wo,
        dec.ff.down.weight,
        dec.ff.down.bias.unwrap(),
    ] {
        store.get_mut(id).data_mut().iter_mut().for_each(|v| *v = 0.0);
    }
    let x = rand_tensor(&mut rng, 4, 8);
    let mem = rand_tensor(&mut rng, 3, 8);
    let mut g = Graph::new(&store);
    let (xv, mv) = (g.constant(x.clone()), g.constant(mem));
    let e = enc.forward(&mut g, xv, None).unwrap();
    let mask = causal_mask(4);
    let d = dec.forward(&mut g, xv, mv, Some(&mask), None).unwrap();
    assert_eq!(g.value(e), &x);
    assert_eq!(g.value(d), &x);
}

#[test]
fn decoder_is_causal() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut store = ParamStore::new();
    let dec = Decoder::new(&mut store, "dec", 2, 8, 2, 16, &mut rng);
    let x = rand_tensor(&mut rng, 5, 8);
    let mem = rand_tensor(&mut rng, 3, 8);
    let run = |x: Tensor| {
        let mut g = Graph::new(&store);
        let (xv, mv) = (g.constant(x), g.constant(mem.clone()));
        let o = dec.forward(&mut g, xv, mv).unwrap();
        g.value(o).clone()
    };
    let base = run(x.clone());
    for t in 0..4 {
        let mut x2 = x.clone();
        for r in t + 1..5 {
            for c in 0..8 {
                x2.data_mut()[r * 8 + c] += rng.gen_range(-3.0..3.0);
            }
        }
        let out = run(x2);
        for r in 0..=t {
            assert_eq!(base.row_slice(r), out.row_slice(r), "row {r} changed when perturbing > {t}");
        }
    }
}

#[test]
fn causal_mask_layout() {
    assert_eq!(causal_mask(3), vec![true, false, false, true, true, false, true, true, true]);
}

#[test]
fn forward_is_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    let mut store = ParamStore::new();
    let enc = Encoder::new(&mut store, "enc", 2, 8, 2, 16, &mut rng);
    let x = rand_tensor(&mut rng, 6, 8);
    let run = || {
        let mut g = Graph::new(&store);
        let xv = g.constant(x.clone());
        let o = enc.forward(&mut g, xv, None).unwrap();
        g.value(o).clone()
    };
    assert_eq!(run(), run());
}

#[test]
fn stack_param_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let mut store = ParamStore::new();
    let enc = Encoder::new(&mut store, "enc", 1, 4, 2, 8, &mut rng);
    let dec = Decoder::new(&mut store, "dec", 1, 4, 2, 8, &mut rng);
    let x = rand_tensor(&mut rng, 3, 4);
    let y = rand_tensor(&mut rng, 2, 4);
    let report = check_params(&mut store, EPS, FLOOR, |g| {
        let (xv, yv) = (g.constant(x.clone()), g.constant(y.clone()));
        let m = enc.forward(g, xv, None)?;
        let o = dec.forward(g, yv, m)?;
        Ok(g.softmax_xent(o, &[1, 3]))
    })
    .unwrap();
    assert!(report.max_rel_error() < TOL, "{:?}", report.worst);
}
