mod common;

use common::{rel_err, test_rng, uniform_vec};
use ctrecon::error::Error;
use ctrecon::neural::{Activation, AlphaInit, BlockSpec, Generator, GeneratorConfig, GeneratorParams, LatentCodes};
use ctrecon::noise::Fidelity;
use ctrecon::phantom::shepp_logan;
use ctrecon::solvers::{
    adam_step, augmented_lagrangian, learning_rate, run_dip, run_dip_observed, run_mcdip_admm,
    run_mcdip_admm_observed, run_pnp_dip, run_pnp_dip_observed, AdamHyper, Problem, SolverConfig,
};
use ctrecon::tomography::{Geometry, LinearOperator, ParallelGeometry, Projector};
use ctrecon::{Image, Result, Sinogram};

/// `A = I`, with the image flattened into a single sinogram row.
struct Identity {
    width: usize,
    height: usize,
}

impl LinearOperator for Identity {
    fn forward(&self, image: &Image) -> Result<Sinogram> {
        Sinogram::from_vec(1, image.len(), image.as_slice().to_vec())
    }

    fn adjoint(&self, sino: &Sinogram) -> Result<Image> {
        Image::from_vec(self.width, self.height, sino.as_slice().to_vec())
    }
}

fn img(w: usize, h: usize, v: &[f64]) -> Image {
    Image::from_vec(w, h, v.to_vec()).unwrap()
}

#[test]
fn adam_first_step_closed_form() {
    // Bias correction makes the first step lr * g / (|g| + eps).
    let h = AdamHyper::default();
    for g in [3.0, -0.25, 1e-3] {
        let mut p = vec![0.7];
        let (mut m, mut v) = (vec![0.0], vec![0.0]);
        adam_step(&mut p, &[g], &mut m, &mut v, 1, 0.02, &h);
        let expected = 0.7 - 0.02 * g / (g.abs() + h.eps);
        assert!((p[0] - expected).abs() < 1e-15);
    }
}

#[test]
fn adam_constant_gradient_steps_have_lr_magnitude() {
    let h = AdamHyper::default();
    let mut p = vec![0.0];
    let (mut m, mut v) = (vec![0.0], vec![0.0]);
    let mut prev = 0.0;
    for t in 1..=20 {
        adam_step(&mut p, &[2.0], &mut m, &mut v, t, 0.01, &h);
        // m_hat = g and v_hat = g^2 exactly for a constant gradient.
        assert!(((prev - p[0]) - 0.01 * 2.0 / (2.0 + h.eps)).abs() < 1e-12);
        prev = p[0];
    }
}

#[test]
fn lr_schedule_tiers() {
    assert_eq!(learning_rate(0.02, 1000, 999), 0.02);
    assert_eq!(learning_rate(0.02, 1000, 1000), 0.5 * learning_rate(0.02, 1000, 999));
}

#[test]
fn lagrangian_reduces_to_fidelity_without_penalties() {
    let g = img(2, 2, &[0.1, 0.5, 0.9, 0.3]);
    let y = Sinogram::from_vec(1, 4, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
    let op = Identity { width: 2, height: 2 };
    let u = Image::zeros(2, 2);
    let l = augmented_lagrangian(&g, &g, &u, &y, &op, Fidelity::L2, 0.0, 3.0).unwrap();
    let f = Fidelity::L2.value(&op.forward(&g).unwrap(), &y).unwrap();
    assert_eq!(l, f);
}

#[test]
fn lagrangian_hand_evaluation() {
    // A = I, y = 0, lambda = 2, rho = 4.
    let x = img(2, 2, &[0.0, 1.0, 1.0, 1.0]);
    let g = img(2, 2, &[0.5, 0.5, 0.5, 0.5]);
    let u = img(2, 2, &[0.1, 0.0, 0.0, -0.1]);
    let y = Sinogram::zeros(1, 4);
    let op = Identity { width: 2, height: 2 };
    // F = 1/2 * 4 * 0.25 = 0.5
    // TV(x) = |1-0| + |1-1| (rows) + |1-0| + |1-1| (cols) = 2 -> lambda TV = 4
    // x - g + u = [-0.4, 0.5, 0.5, 0.4] -> ||.||^2 = 0.16 + 0.25 + 0.25 + 0.16 = 0.82
    // rho/2 * 0.82 = 1.64; rho/2 * ||u||^2 = 2 * 0.02 = 0.04
    let expected = 0.5 + 4.0 + 1.64 - 0.04;
    let l = augmented_lagrangian(&x, &g, &u, &y, &op, Fidelity::L2, 2.0, 4.0).unwrap();
    assert!((l - expected).abs() < 1e-12, "{l} vs {expected}");
}

fn toy_config() -> GeneratorConfig {
    GeneratorConfig {
        latent_shape: [4, 4, 4],
        blocks: vec![
            BlockSpec { kernel: 3, out_channels: 4, upsample: 2, activation: Activation::LeakyRelu },
            BlockSpec { kernel: 3, out_channels: 1, upsample: 1, activation: Activation::Identity },
        ],
        split: 1,
        alpha_init: AlphaInit::Ones,
        latent_std: 1.0,
    }
}

#[test]
fn lagrangian_theta_gradient_matches_finite_differences() {
    let cfg = toy_config();
    let g = Generator::new(cfg.clone()).unwrap();
    let params = GeneratorParams::init(&cfg, 2, 4).unwrap();
    let codes = LatentCodes::sample(&cfg, 2, 4).unwrap();
    let geom = Geometry::Parallel(ParallelGeometry::for_image(10, 8, 8, 1.0).unwrap());
    let op = Projector::new(&geom, 8, 8, 1.0).unwrap();
    let mut rng = test_rng(77);
    let x = img(8, 8, &uniform_vec(&mut rng, 64, 0.0, 1.0));
    let u = img(8, 8, &uniform_vec(&mut rng, 64, -0.1, 0.1));
    let y = op.forward(&img(8, 8, &uniform_vec(&mut rng, 64, 0.0, 1.0))).unwrap();
    let (lambda, rho) = (0.3, 1.7);

    let value = |p: &GeneratorParams| {
        let gen = g.forward_multi(&codes, p, true).unwrap().image(1.0).unwrap();
        augmented_lagrangian(&x, &gen, &u, &y, &op, Fidelity::L2, lambda, rho).unwrap()
    };
    let mut pass = g.forward_multi(&codes, &params, true).unwrap();
    let gen = pass.image(1.0).unwrap();
    let fe = Fidelity::L2.eval(&op.forward(&gen).unwrap(), &y).unwrap();
    let back = op.adjoint(&fe.grad).unwrap();
    let upstream: Vec<f64> = (0..64)
        .map(|i| back.as_slice()[i] + rho * (gen.as_slice()[i] - x.as_slice()[i] - u.as_slice()[i]))
        .collect();
    let grads = pass.backward(&upstream).unwrap();
    let analytic: Vec<f64> = grads.slices().flatten().copied().collect();

    let h = 1e-6;
    let mut idx = 0;
    let mut bad = 0;
    for t in 0..params.tensors().count() {
        for i in 0..params.tensors().nth(t).unwrap().len() {
            let mut plus = params.clone();
            plus.tensors_mut().nth(t).unwrap().as_mut_slice()[i] += h;
            let mut minus = params.clone();
            minus.tensors_mut().nth(t).unwrap().as_mut_slice()[i] -= h;
            let fd = (value(&plus) - value(&minus)) / (2.0 * h);
            if rel_err(analytic[idx], fd, 1e-6) > 1e-4 {
                bad += 1;
            }
            idx += 1;
        }
    }
    assert!(bad as f64 <= 0.01 * idx as f64, "{bad} of {idx} parameters disagree");
}

struct Instance {
    truth: Image,
    op: Projector,
    y: Sinogram,
}

fn instance(n: usize, angles: usize, sigma: Option<f64>) -> Instance {
    let truth = shepp_logan(n).unwrap();
    let geom = Geometry::Parallel(ParallelGeometry::for_image(angles, n, n, 1.0).unwrap());
    let op = Projector::new(&geom, n, n, 1.0).unwrap();
    let clean = op.forward(&truth).unwrap();
    let y = match sigma {
        Some(s) => ctrecon::noise::add_gaussian_noise(&clean, s, 99).unwrap(),
        None => clean,
    };
    Instance { truth, op, y }
}

impl Instance {
    fn problem(&self) -> Problem<'_> {
        Problem { op: &self.op, y: &self.y, truth: Some(&self.truth) }
    }
}

fn small_config(iterations: usize) -> SolverConfig {
    SolverConfig {
        iterations,
        num_codes: 3,
        lambda: 0.0005,
        rho: 0.02,
        base_lr: 0.002,
        lr_halving_period: 0,
        ..SolverConfig::default()
    }
}

#[test]
fn mcdip_with_one_frozen_code_reproduces_pnp_dip() {
    let inst = instance(32, 30, Some(0.03));
    let cfg = SolverConfig { num_codes: 1, freeze_alphas: true, ..small_config(50) };
    let mut pnp = Vec::new();
    run_pnp_dip_observed(&inst.problem(), &cfg, &mut |it| {
        pnp.push((it.x.clone(), it.u.unwrap().clone(), it.generated.clone()))
    })
    .unwrap();
    let mut mc = Vec::new();
    run_mcdip_admm_observed(&inst.problem(), &cfg, &mut |it| {
        mc.push((it.x.clone(), it.u.unwrap().clone(), it.generated.clone()))
    })
    .unwrap();
    assert_eq!(pnp.len(), 50);
    for (t, (a, b)) in pnp.iter().zip(&mc).enumerate() {
        for (p, q) in [(&a.0, &b.0), (&a.1, &b.1), (&a.2, &b.2)] {
            let d = p.as_slice().iter().zip(q.as_slice()).map(|(s, r)| (s - r).abs()).fold(0.0, f64::max);
            assert!(d <= 1e-10, "iteration {}: {d}", t + 1);
        }
    }
}

#[test]
fn dip_fits_noise_free_data() {
    let inst = instance(32, 40, None);
    let cfg = SolverConfig { record_every: 100, ..small_config(2000) };
    let gcfg = cfg.generator_config(32, 32).unwrap();
    let gen = Generator::new(gcfg.clone()).unwrap();
    let params = GeneratorParams::init(&gcfg, 1, cfg.seed).unwrap();
    let codes = LatentCodes::sample(&gcfg, 1, cfg.seed).unwrap();
    let g0 = gen.forward_single(&codes.codes()[0], &params).unwrap().image(1.0).unwrap();
    let f0 = Fidelity::L2.value(&inst.op.forward(&g0).unwrap(), &inst.y).unwrap();
    let out = run_dip(&inst.problem(), &cfg).unwrap();
    let last = out.trace.records.last().unwrap().fidelity;
    assert!(last * 100.0 <= f0, "fidelity {f0} -> {last}");
}

#[test]
fn trace_has_ceil_t_over_k_records_and_consistent_best() {
    let inst = instance(16, 12, Some(0.03));
    let cfg = SolverConfig {
        generator: Some(GeneratorConfig::for_image(16).unwrap()),
        ..small_config(60)
    };
    for out in [
        run_dip(&inst.problem(), &cfg).unwrap(),
        run_pnp_dip(&inst.problem(), &cfg).unwrap(),
        run_mcdip_admm(&inst.problem(), &cfg).unwrap(),
    ] {
        let ts: Vec<usize> = out.trace.records.iter().map(|r| r.t).collect();
        assert_eq!(ts, vec![25, 50, 60]);
        let max = out.trace.records.iter().map(|r| r.psnr.unwrap()).fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(out.trace.best.psnr.unwrap(), max);
        assert_eq!(out.trace.last.t, 60);
        assert_eq!(out.trace.last.image, out.image);
        assert!(out.trace.records.iter().all(|r| r.lagrangian.is_finite()));
    }
}

#[test]
fn runs_are_reproducible_for_a_seed() {
    let inst = instance(16, 12, Some(0.03));
    let cfg = small_config(40);
    let a = run_mcdip_admm(&inst.problem(), &cfg).unwrap();
    let b = run_mcdip_admm(&inst.problem(), &cfg).unwrap();
    assert_eq!(a.trace, b.trace);
    let other = run_mcdip_admm(&inst.problem(), &SolverConfig { seed: 1, ..cfg }).unwrap();
    assert_ne!(a.trace.records, other.trace.records);
    let d1 = run_dip(&inst.problem(), &small_config(30)).unwrap();
    let d2 = run_dip(&inst.problem(), &small_config(30)).unwrap();
    assert_eq!(d1.trace, d2.trace);
}

#[test]
fn first_dual_update_is_primal_minus_generated() {
    let inst = instance(16, 12, Some(0.03));
    let mut seen = None;
    run_pnp_dip_observed(&inst.problem(), &small_config(1), &mut |it| {
        let expected = it.x.zip_map(it.generated, |a, b| a - b);
        seen = Some((expected, it.u.unwrap().clone()));
    })
    .unwrap();
    let (expected, u) = seen.unwrap();
    assert_eq!(u, expected);
}

#[test]
fn admm_step_count_matches_optimizer_steps() {
    let inst = instance(16, 12, Some(0.03));
    let mut count = 0;
    let out = run_mcdip_admm_observed(&inst.problem(), &small_config(37), &mut |_| count += 1).unwrap();
    assert_eq!(count, 37);
    assert_eq!(out.state.t, 37);
}

#[test]
fn dual_residual_stays_bounded() {
    let inst = instance(32, 30, Some(0.03));
    let mut norms = Vec::new();
    run_mcdip_admm_observed(&inst.problem(), &small_config(300), &mut |it| {
        norms.push(it.x.zip_map(it.generated, |a, b| a - b).norm())
    })
    .unwrap();
    let first = norms[0].max(1e-12);
    assert!(norms.iter().all(|&n| n <= 10.0 * first), "first {first}, max {:?}", norms.iter().cloned().fold(0.0, f64::max));
}

#[test]
fn pnp_with_no_tv_and_weak_coupling_tracks_dip() {
    let inst = instance(32, 30, Some(0.03));
    let cfg = SolverConfig { lambda: 0.0, rho: 1e-4, ..small_config(600) };
    let dip = run_dip(&inst.problem(), &cfg).unwrap();
    let pnp = run_pnp_dip(&inst.problem(), &cfg).unwrap();
    let (a, b) = (dip.trace.last.psnr.unwrap(), pnp.trace.last.psnr.unwrap());
    assert!((a - b).abs() <= 1.0, "dip {a} vs pnp {b}");
}

#[test]
fn runs_without_ground_truth_report_no_metrics() {
    let inst = instance(16, 12, Some(0.03));
    let p = Problem { op: &inst.op, y: &inst.y, truth: None };
    let out = run_pnp_dip(&p, &small_config(30)).unwrap();
    assert!(out.trace.records.iter().all(|r| r.psnr.is_none() && r.ssim.is_none()));
    assert_eq!(out.trace.best, out.trace.last);
}

#[test]
fn non_finite_loss_aborts_with_the_iteration() {
    let inst = instance(16, 12, None);
    let huge = inst.y.map(|_| 1e200);
    let p = Problem { op: &inst.op, y: &huge, truth: None };
    match run_dip(&p, &small_config(10)) {
        Err(Error::NonFinite { iteration, .. }) => assert_eq!(iteration, 1),
        other => panic!("expected a non-finite error, got {other:?}"),
    }
}

#[test]
fn invalid_configs_are_rejected() {
    let inst = instance(16, 12, None);
    for cfg in [
        SolverConfig { rho: 0.0, ..small_config(5) },
        SolverConfig { lambda: -1.0, ..small_config(5) },
        SolverConfig { num_codes: 0, ..small_config(5) },
        SolverConfig { iterations: 0, ..small_config(5) },
    ] {
        assert!(matches!(run_mcdip_admm(&inst.problem(), &cfg), Err(Error::InvalidArgument(_))));
    }
    let wrong = SolverConfig { generator: Some(GeneratorConfig::for_image(32).unwrap()), ..small_config(5) };
    assert!(run_dip(&inst.problem(), &wrong).is_err());
}

#[test]
fn dip_observer_sees_generator_output_as_x() {
    let inst = instance(16, 12, Some(0.03));
    let mut ok = true;
    run_dip_observed(&inst.problem(), &small_config(5), &mut |it| {
        ok &= it.u.is_none() && it.x == it.generated;
    })
    .unwrap();
    assert!(ok);
}
