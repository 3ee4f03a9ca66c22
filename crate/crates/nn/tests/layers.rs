use dvit_nn::*;
use dvit_tensor::{grad_check, grad_check_many, no_grad, Tensor};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn rand_tensor(r: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new((0..n).map(|_| r.random_range(-scale..scale)).collect(), shape).unwrap()
}

/// Fixed random projection to a scalar, so grad checks see every output.
fn probe(y: &Tensor, seed: u64) -> dvit_tensor::Result<Tensor> {
    let mut r = rng(seed ^ 0xabcdef);
    let w = rand_tensor(&mut r, y.shape(), 1.0);
    Ok(y.mul(&w)?.sum())
}

fn close(a: &[f64], b: &[f64], tol: f64) {
    assert_eq!(a.len(), b.len());
    for (i, (x, y)) in a.iter().zip(b).enumerate() {
        assert!((x - y).abs() <= tol, "index {i}: {x} vs {y}");
    }
}

fn nn_err(e: NnError) -> dvit_tensor::TensorError {
    match e {
        NnError::Tensor(t) => t,
        other => dvit_tensor::TensorError::Shape { op: "test", detail: other.to_string() },
    }
}

// ---------- conv2d ----------

fn conv_oracle(x: &Tensor, w: &Tensor, b: &[f64], stride: usize, pad: usize) -> Vec<f64> {
    let (xs, ws) = (x.shape(), w.shape());
    let (n, cin, h, wd) = (xs[0], xs[1], xs[2], xs[3]);
    let (cout, _, kh, kw) = (ws[0], ws[1], ws[2], ws[3]);
    let ho = (h + 2 * pad - kh) / stride + 1;
    let wo = (wd + 2 * pad - kw) / stride + 1;
    let mut out = vec![0.0; n * cout * ho * wo];
    for bi in 0..n {
        for co in 0..cout {
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut acc = b[co];
                    for ci in 0..cin {
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let iy = (oy * stride + ky) as isize - pad as isize;
                                let ix = (ox * stride + kx) as isize - pad as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                    continue;
                                }
                                acc += x.data()[((bi * cin + ci) * h + iy as usize) * wd + ix as usize]
                                    * w.data()[((co * cin + ci) * kh + ky) * kw + kx];
                            }
                        }
                    }
                    out[((bi * cout + co) * ho + oy) * wo + ox] = acc;
                }
            }
        }
    }
    out
}

#[test]
fn conv_stride2_matches_direct_loops() {
    let mut r = rng(1);
    let x = rand_tensor(&mut r, &[2, 3, 7, 6], 1.0);
    let w = rand_tensor(&mut r, &[4, 3, 3, 3], 1.0);
    let b = rand_tensor(&mut r, &[4], 1.0);
    let y = conv2d(&x, &w, Some(&b), 2, 1).unwrap();
    assert_eq!(y.shape(), &[2, 4, 4, 3]);
    close(y.data(), &conv_oracle(&x, &w, b.data(), 2, 1), 1e-10);
}

#[test]
fn conv_grad_check_over_seeds() {
    for seed in 0..10 {
        let mut r = rng(seed);
        let x = rand_tensor(&mut r, &[2, 2, 5, 5], 1.0);
        let w = rand_tensor(&mut r, &[3, 2, 3, 3], 1.0);
        let b = rand_tensor(&mut r, &[3], 1.0);
        let stride = 1 + seed as usize % 2;
        let err = grad_check_many(
            |t| probe(&conv2d(&t[0], &t[1], Some(&t[2]), stride, 1).map_err(nn_err)?, seed),
            &[x, w, b],
            1e-5,
        )
        .unwrap();
        assert!(err <= 1e-5, "seed {seed}: {err}");
    }
}

// ---------- batch norm ----------

#[test]
fn batchnorm_train_mode_standardizes() {
    let mut r = rng(2);
    let x = rand_tensor(&mut r, &[4, 3, 5, 5], 3.0).add_scalar(1.5);
    let mut bn = BatchNorm2d::new(3).unwrap();
    bn.eps = 1e-12;
    let y = bn.forward(&x, true).unwrap();
    for c in 0..3 {
        let vals: Vec<f64> = (0..4).flat_map(|b| y.data()[(b * 3 + c) * 25..(b * 3 + c + 1) * 25].to_vec()).collect();
        let m = vals.iter().sum::<f64>() / vals.len() as f64;
        let v = vals.iter().map(|a| (a - m).powi(2)).sum::<f64>() / vals.len() as f64;
        assert!(m.abs() < 1e-6, "{m}");
        assert!((v - 1.0).abs() < 1e-6, "{v}");
    }
}

#[test]
fn batchnorm_eval_identity() {
    let mut r = rng(3);
    let x = rand_tensor(&mut r, &[1, 2, 3, 3], 2.0);
    let mut bn = BatchNorm2d::new(2).unwrap();
    bn.eps = 1e-300;
    let y = bn.forward(&x, false).unwrap();
    assert_eq!(y.data(), x.data());
}

#[test]
fn batchnorm_matches_two_pass_oracle() {
    let mut r = rng(4);
    let x = rand_tensor(&mut r, &[3, 2, 4, 4], 2.0);
    let mut bn = BatchNorm2d::new(2).unwrap();
    let gamma = Tensor::param(vec![1.5, -0.5], &[2]).unwrap();
    let beta = Tensor::param(vec![0.25, 2.0], &[2]).unwrap();
    bn.gamma = gamma.clone();
    bn.beta = beta.clone();
    let y = bn.forward(&x, true).unwrap();
    let mut expect = vec![0.0; x.numel()];
    for c in 0..2 {
        let idx: Vec<usize> = (0..3).flat_map(|b| (0..16).map(move |i| (b * 2 + c) * 16 + i)).collect();
        let mean = idx.iter().map(|&i| x.data()[i]).sum::<f64>() / idx.len() as f64;
        let var = idx.iter().map(|&i| (x.data()[i] - mean).powi(2)).sum::<f64>() / idx.len() as f64;
        for &i in &idx {
            expect[i] = (x.data()[i] - mean) / (var + 1e-5).sqrt() * gamma.data()[c] + beta.data()[c];
        }
    }
    close(y.data(), &expect, 1e-12);
}

#[test]
fn batchnorm_grad_check_over_seeds() {
    for seed in 0..10 {
        let mut r = rng(seed + 100);
        let x = rand_tensor(&mut r, &[2, 2, 3, 3], 2.0);
        let g = rand_tensor(&mut r, &[2], 1.0);
        let b = rand_tensor(&mut r, &[2], 1.0);
        let err = grad_check_many(
            |t| {
                let mut bn = BatchNorm2d::new(2).unwrap();
                bn.gamma = t[1].clone();
                bn.beta = t[2].clone();
                probe(&bn.forward(&t[0], true).map_err(nn_err)?, seed)
            },
            &[x, g, b],
            1e-5,
        )
        .unwrap();
        assert!(err <= 1e-5, "seed {seed}: {err}");
    }
}

// ---------- layer norm ----------

#[test]
fn layernorm_constant_token_is_zero() {
    let ln = LayerNorm::new(5).unwrap();
    let y = ln.forward(&Tensor::full(&[2, 5], 3.25).unwrap()).unwrap();
    assert!(y.data().iter().all(|&v| v == 0.0));
}

#[test]
fn layernorm_normalized_token_unchanged() {
    let x = Tensor::new(vec![1.0, -1.0, 1.0, -1.0], &[4]).unwrap();
    let y = LayerNorm::new(4).unwrap().forward(&x).unwrap();
    let shrink = 1.0 / (1.0f64 + 1e-5).sqrt();
    close(y.data(), &[shrink, -shrink, shrink, -shrink], 1e-15);
    close(y.data(), x.data(), 1e-5);
}

#[test]
fn layernorm_matches_formula_and_grads() {
    for seed in 0..10 {
        let mut r = rng(seed + 200);
        let x = rand_tensor(&mut r, &[3, 6], 2.0);
        let g = rand_tensor(&mut r, &[6], 1.0);
        let b = rand_tensor(&mut r, &[6], 1.0);
        let y = layer_norm(&x, &g, &b, 1e-5).unwrap();
        let mut expect = Vec::new();
        for row in x.data().chunks(6) {
            let m = row.iter().sum::<f64>() / 6.0;
            let v = row.iter().map(|a| (a - m).powi(2)).sum::<f64>() / 6.0;
            for j in 0..6 {
                expect.push((row[j] - m) / (v + 1e-5).sqrt() * g.data()[j] + b.data()[j]);
            }
        }
        close(y.data(), &expect, 1e-12);
        let err = grad_check_many(
            |t| probe(&layer_norm(&t[0], &t[1], &t[2], 1e-5).map_err(nn_err)?, seed),
            &[x, g, b],
            1e-5,
        )
        .unwrap();
        assert!(err <= 1e-5, "seed {seed}: {err}");
    }
}

// ---------- activations ----------

#[test]
fn gelu_and_softmax_examples() {
    assert_eq!(gelu(&Tensor::scalar(0.0)).item(), 0.0);
    let s = softmax(&Tensor::from_slice(&[0.0, 0.0]), 0).unwrap();
    assert_eq!(s.data(), &[0.5, 0.5]);
    let s = softmax(&Tensor::from_slice(&[1000.0, 0.0]), 0).unwrap();
    assert!(s.all_finite());
    assert_eq!(s.data()[0], 1.0);
    assert!(s.data()[1] < 1e-300);
}

#[test]
fn gelu_tanh_constant() {
    let x = 1.3f64;
    let expect = 0.5 * x * (1.0 + ((2.0 / std::f64::consts::PI).sqrt() * (x + 0.044715 * x.powi(3))).tanh());
    assert!((gelu(&Tensor::scalar(x)).item() - expect).abs() < 1e-15);
}

proptest! {
    #[test]
    fn softmax_rows_sum_to_one(vals in prop::collection::vec(-700.0f64..700.0, 12)) {
        let x = Tensor::new(vals, &[3, 4]).unwrap();
        let s = softmax(&x, 1).unwrap();
        for row in s.data().chunks(4) {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
        let s = softmax(&x, 0).unwrap();
        for j in 0..4 {
            let col: f64 = (0..3).map(|i| s.data()[i * 4 + j]).sum();
            prop_assert!((col - 1.0).abs() <= 1e-12);
        }
    }
}

// ---------- attention ----------

fn identity(n: usize) -> Tensor {
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        d[i * n + i] = 1.0;
    }
    Tensor::param(d, &[n, n]).unwrap()
}

#[test]
fn attention_single_token_returns_value_projection() {
    let mut r = rng(5);
    let mha = MultiHeadAttention::new(6, 2, 3, 0.0, &mut r).unwrap();
    let x = rand_tensor(&mut r, &[1, 6], 1.0);
    let y = mha.forward(&x, &mut Ctx::eval()).unwrap();
    let expect = mha.proj.forward(&mha.v.forward(&x).unwrap()).unwrap();
    close(y.data(), expect.data(), 1e-14);
}

#[test]
fn attention_zero_logits_mix_uniformly() {
    let mut r = rng(6);
    let mut mha = MultiHeadAttention::new(4, 2, 2, 0.0, &mut r).unwrap();
    // queries vanish, so every logit is 0
    mha.q = Linear::from_parts(Tensor::zeros(&[4, 4]).unwrap(), None).unwrap();
    mha.v = Linear::from_parts(identity(4), None).unwrap();
    mha.proj = Linear::from_parts(identity(4), None).unwrap();
    let x = rand_tensor(&mut r, &[5, 4], 1.0);
    let y = mha.forward(&x, &mut Ctx::eval()).unwrap();
    let mean: Vec<f64> = (0..4).map(|j| (0..5).map(|i| x.data()[i * 4 + j]).sum::<f64>() / 5.0).collect();
    for row in y.data().chunks(4) {
        close(row, &mean, 1e-14);
    }
}

fn attention_oracle(mha: &MultiHeadAttention, x: &[f64], t: usize, d: usize) -> Vec<f64> {
    let lin = |l: &Linear, v: &[f64]| -> Vec<f64> {
        let (i, o) = (l.in_dim(), l.out_dim());
        (0..o)
            .map(|j| (0..i).map(|a| v[a] * l.weight.data()[a * o + j]).sum::<f64>() + l.bias.as_ref().map_or(0.0, |b| b.data()[j]))
            .collect()
    };
    let tok = |i: usize| &x[i * d..(i + 1) * d];
    let q: Vec<Vec<f64>> = (0..t).map(|i| lin(&mha.q, tok(i))).collect();
    let k: Vec<Vec<f64>> = (0..t).map(|i| lin(&mha.k, tok(i))).collect();
    let v: Vec<Vec<f64>> = (0..t).map(|i| lin(&mha.v, tok(i))).collect();
    let hd = mha.head_dim;
    let mut out = Vec::new();
    for i in 0..t {
        let mut mixed = vec![0.0; mha.heads * hd];
        for h in 0..mha.heads {
            let r = h * hd..(h + 1) * hd;
            let logits: Vec<f64> = (0..t)
                .map(|j| q[i][r.clone()].iter().zip(&k[j][r.clone()]).map(|(a, b)| a * b).sum::<f64>() / (hd as f64).sqrt())
                .collect();
            let mx = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = logits.iter().map(|l| (l - mx).exp()).sum();
            for j in 0..t {
                let a = (logits[j] - mx).exp() / z;
                for e in 0..hd {
                    mixed[h * hd + e] += a * v[j][h * hd + e];
                }
            }
        }
        out.extend(lin(&mha.proj, &mixed));
    }
    out
}

#[test]
fn attention_matches_loop_oracle() {
    let mut r = rng(7);
    let mut mha = MultiHeadAttention::new(6, 3, 2, 0.0, &mut r).unwrap();
    // larger weights give non-trivial attention patterns
    mha.visit_mut("", &mut |_, t| *t = t.mul_scalar(30.0));
    let x = rand_tensor(&mut r, &[2, 3, 6], 1.0);
    let y = mha.forward(&x, &mut Ctx::eval()).unwrap();
    for b in 0..2 {
        let expect = attention_oracle(&mha, &x.data()[b * 18..(b + 1) * 18], 3, 6);
        close(&y.data()[b * 18..(b + 1) * 18], &expect, 1e-10);
    }
}

#[test]
fn attention_grad_check_over_seeds() {
    for seed in 0..10 {
        let mut r = rng(seed + 300);
        let mut mha = MultiHeadAttention::new(4, 2, 3, 0.0, &mut r).unwrap();
        mha.visit_mut("", &mut |_, t| *t = t.mul_scalar(20.0));
        let x = rand_tensor(&mut r, &[2, 3, 4], 1.0);
        let err = grad_check(|t| probe(&mha.forward(t, &mut Ctx::eval()).map_err(nn_err)?, seed), &x, 1e-5).unwrap();
        assert!(err <= 1e-5, "seed {seed}: {err}");
    }
}

#[test]
fn attention_dropout_only_in_training() {
    let mut r = rng(8);
    let mha = MultiHeadAttention::new(4, 2, 2, 0.5, &mut r).unwrap();
    let x = rand_tensor(&mut r, &[3, 4], 1.0);
    let a = mha.forward(&x, &mut Ctx::eval()).unwrap();
    let b = mha.forward(&x, &mut Ctx::eval()).unwrap();
    assert_eq!(a.data(), b.data());
    let c = mha.forward(&x, &mut Ctx::train(1)).unwrap();
    assert_ne!(a.data(), c.data());
}

// ---------- dropout / droppath ----------

#[test]
fn droppath_identity_cases_are_bit_exact() {
    let mut r = rng(9);
    let x = rand_tensor(&mut r, &[4, 3, 2], 1.0);
    assert_eq!(drop_path(&x, 0.0, &mut Ctx::train(1)).unwrap().data(), x.data());
    assert_eq!(drop_path(&x, 0.7, &mut Ctx::eval()).unwrap().data(), x.data());
    assert_eq!(dropout(&x, 0.7, &mut Ctx::eval()).unwrap().data(), x.data());
    assert_eq!(dropout(&x, 0.0, &mut Ctx::train(2)).unwrap().data(), x.data());
}

#[test]
fn droppath_preserves_expectation() {
    let x = Tensor::full(&[100_000, 1], 3.0).unwrap();
    let y = drop_path(&x, 0.2, &mut Ctx::train(11)).unwrap();
    let mean = y.data().iter().sum::<f64>() / 100_000.0;
    assert!((mean - 3.0).abs() <= 0.01 * 3.0, "{mean}");
}

#[test]
fn dropout_preserves_expectation() {
    let x = Tensor::full(&[100_000], 2.0).unwrap();
    let y = dropout(&x, 0.1, &mut Ctx::train(12)).unwrap();
    let mean = y.data().iter().sum::<f64>() / 100_000.0;
    assert!((mean - 2.0).abs() <= 0.02, "{mean}");
}

// ---------- bilinear sampling ----------

#[test]
fn bilinear_integer_points_are_exact() {
    let mut r = rng(10);
    let f = rand_tensor(&mut r, &[2, 3, 4], 1.0);
    let pts = Tensor::new(vec![0.0, 0.0, 2.0, 3.0, 1.0, 2.0], &[3, 2]).unwrap();
    let y = bilinear_sample(&f, &pts).unwrap();
    for c in 0..2 {
        assert_eq!(y.data()[c * 3], f.data()[c * 12]);
        assert_eq!(y.data()[c * 3 + 1], f.data()[c * 12 + 11]);
        assert_eq!(y.data()[c * 3 + 2], f.data()[c * 12 + 6]);
    }
}

#[test]
fn bilinear_center_of_patch() {
    let f = Tensor::new(vec![1.0, 2.0, 3.0, 4.0], &[1, 2, 2]).unwrap();
    let y = bilinear_sample(&f, &Tensor::new(vec![0.5, 0.5], &[1, 2]).unwrap()).unwrap();
    assert_eq!(y.data(), &[2.5]);
}

#[test]
fn bilinear_grad_check_over_seeds() {
    for seed in 0..10 {
        let mut r = rng(seed + 400);
        let f = rand_tensor(&mut r, &[2, 4, 5], 1.0);
        // fractional points, including some that straddle the border
        let pts: Vec<f64> = (0..12).map(|i| r.random_range(-0.9..4.9) + if i % 2 == 0 { 0.0 } else { 0.3 }).collect();
        let pts: Vec<f64> = pts.into_iter().map(|v| if (v - v.round()).abs() < 1e-3 { v + 0.01 } else { v }).collect();
        let p = Tensor::new(pts, &[6, 2]).unwrap();
        let err = grad_check_many(|t| probe(&bilinear_sample(&t[0], &t[1]).map_err(nn_err)?, seed), &[f, p], 1e-6).unwrap();
        assert!(err <= 1e-5, "seed {seed}: {err}");
    }
}

// ---------- cross entropy ----------

#[test]
fn cross_entropy_examples() {
    let x = Tensor::new(vec![60.0, 0.0, 0.0], &[1, 3]).unwrap();
    assert!(cross_entropy(&x, &[0]).unwrap().item() < 1e-25);
    let z = Tensor::zeros(&[4, 8]).unwrap();
    assert!((cross_entropy(&z, &[0, 3, 5, 7]).unwrap().item() - 8f64.ln()).abs() < 1e-15);
    assert!((8f64.ln() - 2.0794).abs() < 1e-4);
}

#[test]
fn cross_entropy_matches_direct_formula() {
    let mut r = rng(13);
    let x = rand_tensor(&mut r, &[2, 5], 3.0);
    let labels = [4, 1];
    let l = cross_entropy(&x, &labels).unwrap().item();
    let mut expect = 0.0;
    for (i, &lab) in labels.iter().enumerate() {
        let row = &x.data()[i * 5..(i + 1) * 5];
        let z: f64 = row.iter().map(|v| v.exp()).sum();
        for c in 0..5 {
            let y = if c == lab { 1.0 } else { 0.0 };
            expect -= y * (row[c].exp() / z).ln();
        }
    }
    expect /= 2.0;
    assert!((l - expect).abs() < 1e-12, "{l} vs {expect}");
}

#[test]
fn cross_entropy_grad_check_over_seeds() {
    for seed in 0..10 {
        let mut r = rng(seed + 500);
        let x = rand_tensor(&mut r, &[3, 4], 4.0);
        let labels: Vec<usize> = (0..3).map(|_| r.random_range(0..4)).collect();
        let err = grad_check(|t| cross_entropy(t, &labels).map_err(nn_err), &x, 1e-5).unwrap();
        assert!(err <= 1e-6, "seed {seed}: {err}");
    }
}

// ---------- AdamW ----------

fn with_grad(values: Vec<f64>, grad: Vec<f64>) -> ParamSet {
    let p = Tensor::param(values, &[grad.len()]).unwrap();
    let g = Tensor::new(grad, p.shape()).unwrap();
    p.mul(&g).unwrap().sum().backward().unwrap();
    let mut set = ParamSet::default();
    set.push("w", p, Decay::Apply);
    set
}

#[test]
fn adamw_zero_grad_no_decay_is_noop() {
    let mut set = with_grad(vec![1.0, -2.0, 3.0], vec![0.0; 3]);
    let mut opt = AdamW::new(AdamWConfig { weight_decay: 0.0, ..Default::default() });
    opt.step(&mut set).unwrap();
    assert_eq!(set.get("w").unwrap().data(), &[1.0, -2.0, 3.0]);
    assert_eq!(opt.step_count(), 1);
}

#[test]
fn adamw_decay_only_scales() {
    let mut set = with_grad(vec![1.0, -2.0, 3.0], vec![0.0; 3]);
    let cfg = AdamWConfig { lr: 1e-2, weight_decay: 0.05, ..Default::default() };
    let mut opt = AdamW::new(cfg);
    opt.step(&mut set).unwrap();
    let k = 1.0 - 1e-2 * 0.05;
    close(set.get("w").unwrap().data(), &[k, -2.0 * k, 3.0 * k], 1e-15);
}

#[test]
fn adamw_first_step_is_signed_lr() {
    let g = vec![0.5, -3.0, 1e-3];
    let mut set = with_grad(vec![0.0; 3], g.clone());
    let cfg = AdamWConfig { lr: 1e-3, weight_decay: 0.0, ..Default::default() };
    let mut opt = AdamW::new(cfg);
    opt.step(&mut set).unwrap();
    let got = set.get("w").unwrap().to_vec();
    for (p, gi) in got.iter().zip(&g) {
        // m̂ = g, v̂ = g², so the step is lr·g/(|g| + eps)
        let expect = -1e-3 * gi / (gi.abs() + 1e-8);
        assert!((p - expect).abs() < 1e-15, "{p} vs {expect}");
        assert!((p + 1e-3 * gi.signum()).abs() < 1e-3 * 1e-5);
    }
}

#[test]
fn adamw_skips_decay_for_norm_params() {
    let p = Tensor::param(vec![2.0], &[1]).unwrap();
    p.mul_scalar(0.0).sum().backward().unwrap();
    let mut set = ParamSet::default();
    set.push("norm.weight", p, Decay::Skip);
    let mut opt = AdamW::new(AdamWConfig { lr: 0.1, ..Default::default() });
    opt.step(&mut set).unwrap();
    assert_eq!(set.get("norm.weight").unwrap().data(), &[2.0]);
}

#[test]
fn adamw_missing_grad_is_an_error() {
    let mut set = with_grad(vec![1.0], vec![1.0]);
    set.push("orphan", Tensor::param(vec![1.0], &[1]).unwrap(), Decay::Apply);
    let mut opt = AdamW::new(AdamWConfig::default());
    match opt.step(&mut set) {
        Err(NnError::MissingGrad(name)) => assert_eq!(name, "orphan"),
        other => panic!("{other:?}"),
    }
    assert_eq!(opt.step_count(), 0);
    assert_eq!(set.get("w").unwrap().data(), &[1.0]);
}

#[test]
fn adamw_state_roundtrip_continues_identically() {
    let run = |split: bool| -> Vec<f64> {
        let mut set = with_grad(vec![1.0, 2.0], vec![0.3, -0.7]);
        let mut opt = AdamW::new(AdamWConfig { lr: 0.01, ..Default::default() });
        opt.step(&mut set).unwrap();
        if split {
            let state = opt.export_state(&set).unwrap();
            let mut fresh = AdamW::new(opt.cfg);
            fresh.import_state(opt.step_count(), &state).unwrap();
            opt = fresh;
        }
        let p = set.get("w").unwrap().clone();
        p.mul(&Tensor::from_slice(&[0.1, 0.2])).unwrap().sum().backward().unwrap();
        opt.step(&mut set).unwrap();
        set.get("w").unwrap().to_vec()
    };
    assert_eq!(run(false), run(true));
}

#[test]
fn linear_rejects_wrong_width() {
    let l = Linear::new(3, 2, &mut rng(0)).unwrap();
    assert!(l.forward(&Tensor::zeros(&[2, 4]).unwrap()).is_err());
    let y = l.forward(&Tensor::zeros(&[2, 5, 3]).unwrap()).unwrap();
    assert_eq!(y.shape(), &[2, 5, 2]);
}

#[test]
fn no_grad_forward_records_nothing() {
    let l = Linear::new(3, 2, &mut rng(0)).unwrap();
    let _g = no_grad();
    let y = l.forward(&Tensor::ones(&[1, 3]).unwrap()).unwrap();
    assert!(y.is_leaf());
}
