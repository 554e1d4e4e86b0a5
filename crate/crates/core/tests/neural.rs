mod common;

use common::{rel_err, test_rng, uniform_vec};
use ctrecon::neural::{
    compose, g1_forward, mcdip_forward, Activation, AlphaInit, BlockSpec, Generator, GeneratorConfig,
    GeneratorParams, LatentCodes, Tape, Tensor, Var,
};
use ctrecon::rng::Rng;
use proptest::prelude::*;

fn tensor(rng: &mut Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::from_vec(shape, uniform_vec(rng, n, lo, hi)).unwrap()
}

/// Builds `op` on a fresh tape from `inputs` and returns `sum(c * out)`.
fn eval(
    op: &dyn Fn(&mut Tape, &[Var]) -> Var,
    inputs: &[Tensor],
    c: &[f64],
) -> f64 {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone(), true)).collect();
    let out = op(&mut tape, &vars);
    tape.value(out).as_slice().iter().zip(c).map(|(a, b)| a * b).sum()
}

/// Central-difference check of every input entry of a single primitive.
fn check_primitive(name: &str, op: &dyn Fn(&mut Tape, &[Var]) -> Var, inputs: Vec<Tensor>, seed: u64) {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone(), true)).collect();
    let out = op(&mut tape, &vars);
    let mut rng = test_rng(seed);
    let c = uniform_vec(&mut rng, tape.value(out).len(), -1.0, 1.0);
    tape.backward(out, &c).unwrap();
    let h = 1e-6;
    for (k, input) in inputs.iter().enumerate() {
        let analytic = tape.grad(vars[k]).unwrap().to_vec();
        for i in 0..input.len() {
            let mut plus = inputs.clone();
            let mut minus = inputs.clone();
            plus[k].as_mut_slice()[i] += h;
            minus[k].as_mut_slice()[i] -= h;
            let fd = (eval(op, &plus, &c) - eval(op, &minus, &c)) / (2.0 * h);
            let err = rel_err(analytic[i], fd, 1e-6);
            assert!(err <= 1e-4, "{name}: input {k} entry {i}: {} vs {fd}", analytic[i]);
        }
    }
}

#[test]
fn conv2d_gradients() {
    let mut rng = test_rng(1);
    let x = tensor(&mut rng, &[2, 5, 4], -1.0, 1.0);
    let w = tensor(&mut rng, &[3, 2, 3, 3], -1.0, 1.0);
    let b = tensor(&mut rng, &[3], -1.0, 1.0);
    check_primitive("conv2d", &|t, v| t.conv2d(v[0], v[1], v[2]).unwrap(), vec![x, w, b], 10);
    let x = tensor(&mut rng, &[1, 6, 6], -1.0, 1.0);
    let w = tensor(&mut rng, &[2, 1, 5, 5], -1.0, 1.0);
    let b = tensor(&mut rng, &[2], -1.0, 1.0);
    check_primitive("conv2d 5x5", &|t, v| t.conv2d(v[0], v[1], v[2]).unwrap(), vec![x, w, b], 11);
}

#[test]
fn upsample_gradients() {
    let mut rng = test_rng(2);
    let x = tensor(&mut rng, &[2, 3, 2], -1.0, 1.0);
    check_primitive("upsample", &|t, v| t.upsample_nearest(v[0], 3).unwrap(), vec![x], 20);
}

#[test]
fn leaky_relu_gradients() {
    let mut rng = test_rng(3);
    // Keep entries away from the kink at zero.
    let data = uniform_vec(&mut rng, 24, 0.05, 1.0)
        .into_iter()
        .enumerate()
        .map(|(i, v)| if i % 2 == 0 { v } else { -v })
        .collect();
    let x = Tensor::from_vec(&[2, 3, 4], data).unwrap();
    check_primitive("leaky_relu", &|t, v| t.leaky_relu(v[0], 0.2).unwrap(), vec![x], 30);
}

#[test]
fn sigmoid_gradients() {
    let mut rng = test_rng(4);
    let x = tensor(&mut rng, &[1, 4, 4], -6.0, 6.0);
    check_primitive("sigmoid", &|t, v| t.sigmoid(v[0]).unwrap(), vec![x], 40);
}

#[test]
fn add_scale_channel_mul_gradients() {
    let mut rng = test_rng(5);
    let a = tensor(&mut rng, &[3, 2, 2], -1.0, 1.0);
    let b = tensor(&mut rng, &[3, 2, 2], -1.0, 1.0);
    check_primitive("add", &|t, v| t.add(v[0], v[1]).unwrap(), vec![a.clone(), b], 50);
    check_primitive("scale", &|t, v| t.scale(v[0], -2.5).unwrap(), vec![a.clone()], 51);
    let alpha = tensor(&mut rng, &[3], -2.0, 2.0);
    check_primitive("channel_mul", &|t, v| t.channel_mul(v[0], v[1]).unwrap(), vec![a, alpha], 52);
}

#[test]
fn shared_inputs_accumulate_gradients() {
    // y = x + x  =>  dy/dx = 2
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::from_vec(&[2], vec![1.0, -3.0]).unwrap(), true);
    let y = tape.add(x, x).unwrap();
    tape.backward(y, &[1.0, 1.0]).unwrap();
    assert_eq!(tape.grad(x).unwrap(), &[2.0, 2.0]);
}

#[test]
fn conv_matches_direct_summation() {
    let mut rng = test_rng(6);
    let (cin, cout, h, w, k) = (2, 3, 5, 6, 3);
    let x = tensor(&mut rng, &[cin, h, w], -1.0, 1.0);
    let wt = tensor(&mut rng, &[cout, cin, k, k], -1.0, 1.0);
    let b = tensor(&mut rng, &[cout], -1.0, 1.0);
    let mut tape = Tape::new();
    let (xv, wv, bv) = (tape.leaf(x.clone(), false), tape.leaf(wt.clone(), false), tape.leaf(b.clone(), false));
    let y = tape.conv2d(xv, wv, bv).unwrap();
    let out = tape.value(y).as_slice();
    let at = |t: &Tensor, idx: usize| t.as_slice()[idx];
    for co in 0..cout {
        for i in 0..h {
            for j in 0..w {
                let mut acc = at(&b, co);
                for ci in 0..cin {
                    for di in 0..k {
                        for dj in 0..k {
                            let (si, sj) = (i as isize + di as isize - 1, j as isize + dj as isize - 1);
                            if si < 0 || sj < 0 || si >= h as isize || sj >= w as isize {
                                continue;
                            }
                            acc += at(&wt, ((co * cin + ci) * k + di) * k + dj)
                                * at(&x, (ci * h + si as usize) * w + sj as usize);
                        }
                    }
                }
                let got = out[(co * h + i) * w + j];
                assert!((got - acc).abs() < 1e-12, "{got} vs {acc}");
            }
        }
    }
}

fn toy_config(latent: [usize; 3]) -> GeneratorConfig {
    GeneratorConfig {
        latent_shape: latent,
        blocks: vec![
            BlockSpec { kernel: 3, out_channels: 4, upsample: 2, activation: Activation::LeakyRelu },
            BlockSpec { kernel: 3, out_channels: 1, upsample: 1, activation: Activation::Identity },
        ],
        split: 1,
        alpha_init: AlphaInit::Ones,
        latent_std: 1.0,
    }
}

fn loss(g: &Generator, codes: &LatentCodes, params: &GeneratorParams, c: &[f64]) -> f64 {
    let pass = g.forward_multi(codes, params, true).unwrap();
    pass.output().iter().zip(c).map(|(a, b)| a * b).sum()
}

/// Parameters whose analytic gradient misses central differences by more
/// than 1e-4 relative.
fn generator_gradient_check(num_codes: usize, seed: u64, alpha_init: AlphaInit) -> Vec<String> {
    let cfg = GeneratorConfig {
        alpha_init,
        ..toy_config([4, 4, 4])
    };
    let g = Generator::new(cfg.clone()).unwrap();
    let mut params = GeneratorParams::init(&cfg, num_codes, seed).unwrap();
    // Random channel weights so that alpha gradients are non-trivial.
    let mut rng = test_rng(seed);
    for a in &mut params.alphas {
        for v in a.as_mut_slice() {
            *v = rand::Rng::random_range(&mut rng, 0.5..1.5);
        }
    }
    let codes = LatentCodes::sample(&cfg, num_codes, seed).unwrap();
    let c = uniform_vec(&mut rng, 64, -1.0, 1.0);
    let grads = g.forward_multi(&codes, &params, true).unwrap().backward(&c).unwrap();
    let analytic: Vec<f64> = grads.slices().flatten().copied().collect();

    let h = 1e-6;
    let mut failures = Vec::new();
    let mut idx = 0;
    for t in 0..params.tensors().count() {
        let len = params.tensors().nth(t).unwrap().len();
        for i in 0..len {
            let mut plus = params.clone();
            plus.tensors_mut().nth(t).unwrap().as_mut_slice()[i] += h;
            let mut minus = params.clone();
            minus.tensors_mut().nth(t).unwrap().as_mut_slice()[i] -= h;
            let fd = (loss(&g, &codes, &plus, &c) - loss(&g, &codes, &minus, &c)) / (2.0 * h);
            if rel_err(analytic[idx], fd, 1e-6) > 1e-4 {
                failures.push(format!("tensor {t} entry {i}: {} vs {fd}", analytic[idx]));
            }
            idx += 1;
        }
    }
    failures
}

#[test]
fn full_generator_gradients_single_code() {
    let failures = generator_gradient_check(1, 7, AlphaInit::Ones);
    assert!(failures.is_empty(), "{failures:?}");
}

#[test]
fn full_generator_gradients_three_codes() {
    let failures = generator_gradient_check(3, 8, AlphaInit::Ones);
    assert!(failures.is_empty(), "{failures:?}");
}

#[test]
fn full_generator_gradients_scaled_composition() {
    let failures = generator_gradient_check(3, 9, AlphaInit::ScaledOnes);
    assert!(failures.is_empty(), "{failures:?}");
}

#[test]
fn zero_parameters_give_zero_features() {
    let cfg = toy_config([4, 4, 4]);
    let g = Generator::new(cfg.clone()).unwrap();
    let mut params = GeneratorParams::init(&cfg, 1, 0).unwrap();
    for t in params.tensors_mut() {
        t.as_mut_slice().fill(0.0);
    }
    let codes = LatentCodes::sample(&cfg, 1, 0).unwrap();
    let f = g1_forward(&g, &codes.codes()[0], &params).unwrap();
    assert_eq!(f.shape(), &[4, 8, 8]);
    assert!(f.as_slice().iter().all(|&v| v == 0.0));
    // sigmoid(0) everywhere
    let img = mcdip_forward(&g, &codes, &params, 1.0).unwrap();
    assert!(img.as_slice().iter().all(|&v| v == 0.5));
}

#[test]
fn distinct_codes_give_distinct_features_and_forward_is_deterministic() {
    let cfg = GeneratorConfig::for_image(32).unwrap();
    let g = Generator::new(cfg.clone()).unwrap();
    let params = GeneratorParams::init(&cfg, 2, 3).unwrap();
    let codes = LatentCodes::sample(&cfg, 2, 3).unwrap();
    let f0 = g1_forward(&g, &codes.codes()[0], &params).unwrap();
    let f1 = g1_forward(&g, &codes.codes()[1], &params).unwrap();
    assert_eq!(f0.shape(), &[64, 8, 8]);
    assert_ne!(f0, f1);
    assert_eq!(f0, g1_forward(&g, &codes.codes()[0], &params).unwrap());
    let again = GeneratorParams::init(&cfg, 2, 3).unwrap();
    assert_eq!(params, again);
    let a = mcdip_forward(&g, &codes, &params, 1.0).unwrap();
    let b = mcdip_forward(&g, &codes, &again, 1.0).unwrap();
    assert_eq!(a, b);
    assert_eq!((a.width(), a.height()), (32, 32));
    assert!(a.as_slice().iter().all(|&v| v > 0.0 && v < 1.0));
}

#[test]
fn compose_identity_cases() {
    let mut rng = test_rng(9);
    let f1 = tensor(&mut rng, &[3, 2, 2], -1.0, 1.0);
    let f2 = tensor(&mut rng, &[3, 2, 2], -1.0, 1.0);
    let ones = Tensor::from_vec(&[3], vec![1.0; 3]).unwrap();
    let zeros = Tensor::zeros(&[3]);
    assert_eq!(compose(std::slice::from_ref(&f1), std::slice::from_ref(&ones)).unwrap(), f1);
    assert_eq!(compose(&[f1.clone(), f2], &[ones.clone(), zeros]).unwrap(), f1);
    assert!(compose(std::slice::from_ref(&f1), &[ones.clone(), ones]).is_err());
}

#[test]
fn compose_matches_the_elementwise_definition() {
    let mut rng = test_rng(10);
    let (c, h, w) = (4, 3, 5);
    let feats: Vec<Tensor> = (0..3).map(|_| tensor(&mut rng, &[c, h, w], -1.0, 1.0)).collect();
    let alphas: Vec<Tensor> = (0..3).map(|_| tensor(&mut rng, &[c], -2.0, 2.0)).collect();
    let out = compose(&feats, &alphas).unwrap();
    for ch in 0..c {
        for i in 0..h {
            for j in 0..w {
                let idx = (ch * h + i) * w + j;
                let expected = feats[0].as_slice()[idx] * alphas[0].as_slice()[ch]
                    + feats[1].as_slice()[idx] * alphas[1].as_slice()[ch]
                    + feats[2].as_slice()[idx] * alphas[2].as_slice()[ch];
                assert_eq!(out.as_slice()[idx], expected);
            }
        }
    }
}

#[test]
fn single_code_with_unit_alphas_equals_plain_generator() {
    let cfg = GeneratorConfig::for_image(32).unwrap();
    let g = Generator::new(cfg.clone()).unwrap();
    let params = GeneratorParams::init(&cfg, 1, 12).unwrap();
    let codes = LatentCodes::sample(&cfg, 1, 12).unwrap();
    let multi = g.forward_multi(&codes, &params, false).unwrap();
    let single = g.forward_single(&codes.codes()[0], &params).unwrap();
    assert_eq!(multi.output(), single.output());
}

#[test]
fn backward_is_deterministic() {
    let cfg = toy_config([4, 4, 4]);
    let g = Generator::new(cfg.clone()).unwrap();
    let params = GeneratorParams::init(&cfg, 3, 1).unwrap();
    let codes = LatentCodes::sample(&cfg, 3, 1).unwrap();
    let up = vec![0.1; 64];
    let a = g.forward_multi(&codes, &params, true).unwrap().backward(&up).unwrap();
    let b = g.forward_multi(&codes, &params, true).unwrap().backward(&up).unwrap();
    assert_eq!(a, b);
}

#[test]
fn frozen_alphas_get_zero_gradient() {
    let cfg = toy_config([4, 4, 4]);
    let g = Generator::new(cfg.clone()).unwrap();
    let params = GeneratorParams::init(&cfg, 2, 1).unwrap();
    let codes = LatentCodes::sample(&cfg, 2, 1).unwrap();
    let grads = g.forward_multi(&codes, &params, false).unwrap().backward(&[1.0; 64]).unwrap();
    assert!(grads.alphas.iter().flatten().all(|&v| v == 0.0));
    assert!(grads.weights.iter().flatten().any(|&v| v != 0.0));
}

#[test]
fn shape_errors_are_reported() {
    let cfg = toy_config([4, 4, 4]);
    let g = Generator::new(cfg.clone()).unwrap();
    let params = GeneratorParams::init(&cfg, 1, 1).unwrap();
    assert!(g1_forward(&g, &Tensor::zeros(&[4, 4, 5]), &params).is_err());
    let mut bad = toy_config([4, 4, 4]);
    bad.split = 2;
    assert!(Generator::new(bad).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn composition_is_linear_in_each_alpha(seed in 0u64..10_000, s in -3.0f64..3.0) {
        let mut rng = test_rng(seed);
        let feats: Vec<Tensor> = (0..2).map(|_| tensor(&mut rng, &[3, 2, 2], -1.0, 1.0)).collect();
        let a0 = tensor(&mut rng, &[3], -1.0, 1.0);
        let a1 = tensor(&mut rng, &[3], -1.0, 1.0);
        let b1 = tensor(&mut rng, &[3], -1.0, 1.0);
        let mix = Tensor::from_vec(&[3], a1.as_slice().iter().zip(b1.as_slice()).map(|(p, q)| p + s * q).collect()).unwrap();
        let lhs = compose(&feats, &[a0.clone(), mix]).unwrap();
        let base = compose(&feats, &[a0.clone(), a1]).unwrap();
        let dir = compose(&feats[1..], &[b1]).unwrap();
        for ((l, p), q) in lhs.as_slice().iter().zip(base.as_slice()).zip(dir.as_slice()) {
            prop_assert!((l - (p + s * q)).abs() < 1e-12);
        }
    }
}
