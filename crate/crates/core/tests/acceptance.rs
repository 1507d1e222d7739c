//! Acceptance suite: one test per criterion, each printing a PASS/FAIL
//! line with the measured values. Every tolerance is pinned here.
//!
//! Criteria 7 and 8 exercise the experiment CLI and live in that crate's
//! acceptance suite.

use std::time::Instant;

use emdm::emloop::{alpha_schedule, em_run, initialize, EmConfig};
use emdm::numkit::{derive_seed, gaussian_sample, Rng, Tensor};
use emdm::operators::MeasurementOperator;
use emdm::oracles::{
    psnr, sliced_wasserstein, ConvolvedScore, GaussianPrior, GmmPrior, GridPosterior, GridSpec,
    VpMarginalScore,
};
use emdm::samplers::{
    posterior_batch, sample_dps, sample_pmc, sample_unconditional, DpsConfig, Measurement,
    PmcConfig,
};
use emdm::schedule::NoiseSchedule;
use emdm::scorenet::{
    draw_dsm_noise, dsm_grad_with_noise, dsm_loss_with_noise, load_model, model_to_bytes,
    save_model, train, ModelConfig, ScoreFn, ScoreModel, TrainConfig,
};

fn report(criterion: &str, pass: bool, detail: String, started: Instant) {
    println!(
        "ACCEPTANCE {}: {} ({}, {:.1} s)",
        criterion,
        if pass { "PASS" } else { "FAIL" },
        detail,
        started.elapsed().as_secs_f64()
    );
    assert!(pass, "{} failed: {}", criterion, detail);
}

/// C1: analytic gradients match central finite differences at h = 1e-4
/// with relative error < 1e-4 over at least 100 random coordinates.
#[test]
fn c1_gradient_correctness() {
    let started = Instant::now();
    let mut rng = Rng::from_seed(101);
    let mut model = ScoreModel::new(
        3,
        &ModelConfig {
            hidden: vec![24, 24],
            embed_width: 8,
        },
        &mut rng,
    )
    .unwrap();
    for i in 0..model.param_count() {
        model.set_param(i, rng.uniform(-0.4, 0.4));
    }
    let sched = NoiseSchedule::linear(40, 1e-3, 0.05).unwrap();
    let x0 = gaussian_sample(&mut rng, &[6, 3], 0.0, 1.0).unwrap();
    let noise = draw_dsm_noise(&x0, &sched, &mut rng).unwrap();
    let (_, grads) = dsm_grad_with_noise(&model, &x0, &noise, &sched).unwrap();

    let h = 1e-4;
    let n_params = model.param_count();
    let n_checked = 128usize;
    let mut max_rel = 0.0f64;
    let mut checked = 0usize;
    for k in 0..n_checked {
        let idx = (k * 7919 + 13) % n_params;
        let orig = model.get_param(idx);
        model.set_param(idx, orig + h);
        let lp = dsm_loss_with_noise(&model, &x0, &noise, &sched).unwrap();
        model.set_param(idx, orig - h);
        let lm = dsm_loss_with_noise(&model, &x0, &noise, &sched).unwrap();
        model.set_param(idx, orig);
        let fd = (lp - lm) / (2.0 * h);
        let an = grads.get(idx);
        let denom = an.abs().max(fd.abs());
        if denom < 1e-9 {
            continue;
        }
        max_rel = max_rel.max((an - fd).abs() / denom);
        checked += 1;
    }
    let within_budget = started.elapsed().as_secs_f64() < 10.0;
    report(
        "C1 gradient-correctness",
        checked >= 100 && max_rel < 1e-4 && within_budget,
        format!("{} coords, max rel err {:.2e}", checked, max_rel),
        started,
    );
}

/// C2: with the exact N(0, 1) score injected, the Tweedie denoiser maps
/// x = 2 at sigma = 1 to exactly 1.0 (tolerance 1e-10).
#[test]
fn c2_tweedie_exactness() {
    let started = Instant::now();
    let score = ConvolvedScore {
        prior: GmmPrior::single(
            GaussianPrior::isotropic(Tensor::from_vec(vec![0.0]), 1.0).unwrap(),
        ),
    };
    let out = score
        .tweedie_denoise(&Tensor::from_vec(vec![2.0]), 1.0)
        .unwrap();
    let err = (out.get(0) - 1.0).abs();
    report(
        "C2 tweedie-exactness",
        err < 1e-10,
        format!("|D(2) - 1| = {:.2e}", err),
        started,
    );
}

/// C3: conjugate posterior N(1, 0.5) recovered by the posterior chain with
/// the exact prior score: mean within 0.05, variance within 10%, from 1e4
/// independent chains, under 2 minutes.
#[test]
fn c3_pmc_conjugate_fidelity() {
    let started = Instant::now();
    let score = ConvolvedScore {
        prior: GmmPrior::single(
            GaussianPrior::isotropic(Tensor::from_vec(vec![0.0]), 1.0).unwrap(),
        ),
    };
    let op = MeasurementOperator::awgn(1.0).unwrap();
    let y = Tensor::from_vec(vec![2.0]);
    // Final level has sigma_min^2 = gamma and tau = gamma, the matched
    // split-Langevin scaling.
    let cfg = PmcConfig {
        n_steps: 900,
        gamma: 0.01,
        alpha: 1.0,
        tau: 0.01,
        sigma_max: 0.5,
        sigma_min: 0.1,
        n_levels: 5,
        steps_per_level: 40,
    };
    let n_chains = 10_000usize;
    let mut sum = 0.0;
    let mut sumsq = 0.0;
    for i in 0..n_chains {
        let mut rng = Rng::derive(52, i as u64);
        let x = sample_pmc(&score, &op, &y, &cfg, &mut rng, None)
            .unwrap()
            .get(0);
        sum += x;
        sumsq += x * x;
    }
    let mean = sum / n_chains as f64;
    let var = sumsq / n_chains as f64 - mean * mean;
    let within_budget = started.elapsed().as_secs_f64() < 120.0;
    report(
        "C3 pmc-conjugate-fidelity",
        (mean - 1.0).abs() < 0.05 && (var - 0.5).abs() / 0.5 < 0.10 && within_budget,
        format!("mean {:.4} (want 1.0), var {:.4} (want 0.5)", mean, var),
        started,
    );
}

/// C4: bimodal two-component prior under a weak identity measurement. The
/// posterior chain must be at least as close (sliced Wasserstein) to the
/// grid-oracle posterior as the guided baseline at its best guidance
/// scale, and its mode split must be 50/50 within 5 points over 1e4
/// chains.
#[test]
fn c4_pmc_vs_dps_mode_coverage() {
    let started = Instant::now();
    let prior = GmmPrior::symmetric_pair(&[2.0, 0.0], 0.5).unwrap();
    let sigma_n = 1.0;
    let op = MeasurementOperator::awgn(sigma_n).unwrap();
    let y = Tensor::from_vec(vec![0.0, 0.0]);

    let grid_prior = prior.clone();
    let grid = GridPosterior::build(
        move |px, py| grid_prior.log_density(&[px, py]),
        &op,
        &y,
        GridSpec::square(6.0, 240),
    )
    .unwrap();
    let grid_samples = grid.sample_n(20_000, &mut Rng::from_seed(777));

    let conv = ConvolvedScore {
        prior: prior.clone(),
    };
    let pmc_cfg = PmcConfig {
        n_steps: 500,
        gamma: 0.0025,
        alpha: 1.0,
        tau: 0.0025,
        sigma_max: 1.0,
        sigma_min: 0.05,
        n_levels: 8,
        steps_per_level: 40,
    };
    let n_chains = 10_000usize;
    let mut rows = Vec::with_capacity(n_chains);
    let mut plus = 0usize;
    for i in 0..n_chains {
        let mut rng = Rng::derive(100, i as u64);
        let x = sample_pmc(&conv, &op, &y, &pmc_cfg, &mut rng, None).unwrap();
        if x.get(0) > 0.0 {
            plus += 1;
        }
        rows.push(x);
    }
    let pmc_samples = Tensor::stack_rows(&rows).unwrap();
    let sw_pmc =
        sliced_wasserstein(&pmc_samples, &grid_samples, 96, &mut Rng::from_seed(1)).unwrap();
    let split = plus as f64 / n_chains as f64;

    // Give the baseline its best shot across a guidance-scale grid.
    let vp = VpMarginalScore { prior };
    let sched = NoiseSchedule::linear(500, 1e-4, 0.02).unwrap();
    let mut sw_dps_best = f64::INFINITY;
    for &zeta in &[0.02, 0.05, 0.1, 0.3, 1.0] {
        let cfg = DpsConfig { zeta };
        let mut rows = Vec::with_capacity(4000);
        for i in 0..4000 {
            let mut rng = Rng::derive(200, i as u64);
            rows.push(sample_dps(&vp, &sched, &op, &y, &cfg, &mut rng).unwrap());
        }
        let dps_samples = Tensor::stack_rows(&rows).unwrap();
        let sw =
            sliced_wasserstein(&dps_samples, &grid_samples, 96, &mut Rng::from_seed(1)).unwrap();
        sw_dps_best = sw_dps_best.min(sw);
    }

    let within_budget = started.elapsed().as_secs_f64() < 600.0;
    report(
        "C4 pmc-vs-dps-mode-coverage",
        sw_pmc <= sw_dps_best && (split - 0.5).abs() <= 0.05 && within_budget,
        format!(
            "sw pmc {:.4} vs dps best {:.4}; split {:.3}",
            sw_pmc, sw_dps_best, split
        ),
        started,
    );
}

/// C5: a network trained on two-component mixture data matches the
/// closed-form convolved score within 0.2 RMS on a 20x20 grid over
/// [-3, 3]^2 at sigma = 0.2, in under 5 minutes.
#[test]
fn c5_score_learning() {
    let started = Instant::now();
    let prior = GmmPrior::symmetric_pair(&[1.5, 0.0], 1.2).unwrap();
    let data = prior.sample_n(100_000, &mut Rng::from_seed(60)).unwrap();
    let sched = NoiseSchedule::linear(300, 1e-4, 0.04).unwrap();
    let model = ScoreModel::new(2, &ModelConfig::default(), &mut Rng::from_seed(61)).unwrap();
    let mut trng = Rng::from_seed(62);
    let phase1 = TrainConfig {
        steps: 9000,
        batch: 128,
        ..TrainConfig::default()
    };
    let (model, _) = train(model, &data, &sched, &phase1, &mut trng).unwrap();
    let phase2 = TrainConfig {
        steps: 4000,
        batch: 128,
        lr: 1e-4,
        ..TrainConfig::default()
    };
    let (model, _) = train(model, &data, &sched, &phase2, &mut trng).unwrap();

    let sigma = 0.2;
    let mut sq = 0.0;
    let mut n = 0usize;
    for i in 0..20 {
        for j in 0..20 {
            let x = -3.0 + 6.0 * (i as f64 + 0.5) / 20.0;
            let y = -3.0 + 6.0 * (j as f64 + 0.5) / 20.0;
            let learned = model.score(&Tensor::from_vec(vec![x, y]), sigma).unwrap();
            let exact = prior.score_sigma(&[x, y], sigma).unwrap();
            sq += (learned.get(0) - exact[0]).powi(2) + (learned.get(1) - exact[1]).powi(2);
            n += 1;
        }
    }
    let rms = (sq / (2 * n) as f64).sqrt();
    let within_budget = started.elapsed().as_secs_f64() < 300.0;
    report(
        "C5 score-learning",
        rms < 0.2 && within_budget,
        format!("grid RMS {:.4} at sigma {:.2}", rms, sigma),
        started,
    );
}

/// C6: EM on 500 noisy measurements of a 2-D mixture (sigma = 0.2, N = 6,
/// trust ramp 1e-3 -> 1): the final model's distribution distance to the
/// truth is below half the post-initialization distance, and the
/// per-iteration series bottoms out at the final iteration. Under 20
/// minutes.
#[test]
fn c6_em_progress() {
    let started = Instant::now();
    let seed = 4242u64;
    let prior = GmmPrior::symmetric_pair(&[1.0, 0.0], 0.25).unwrap();
    let mut rng = Rng::from_seed(seed);
    let op = MeasurementOperator::awgn(0.2).unwrap();
    let n_meas = 500;
    let mut measurements = Vec::with_capacity(n_meas);
    let mut truths = Vec::with_capacity(n_meas);
    for i in 0..n_meas {
        let x = prior.sample(&mut rng);
        let y = op.apply(&x, &mut rng).unwrap();
        measurements.push(Measurement::new(i as u64, y, op.clone()));
        truths.push(x);
    }
    let clean_pool = prior.sample_n(16, &mut rng).unwrap();
    let reference = prior.sample_n(6000, &mut Rng::from_seed(888)).unwrap();

    let cfg = EmConfig {
        n_iters: 6,
        n_init_clean: 16,
        subsample_size: 250,
        subsample_iters: 3,
        reset_iters: 2,
        alpha_min: 1e-3,
        chains_per_y: 2,
        model: ModelConfig::default(),
        train_init: TrainConfig {
            steps: 150,
            batch: 16,
            ..TrainConfig::default()
        },
        train_finetune: TrainConfig {
            steps: 1000,
            batch: 64,
            ..TrainConfig::default()
        },
        train_scratch: TrainConfig {
            steps: 4000,
            batch: 64,
            ..TrainConfig::default()
        },
        pmc: PmcConfig {
            n_steps: 320,
            gamma: 0.01,
            alpha: 1.0,
            tau: 0.01,
            sigma_max: 0.5,
            sigma_min: 0.1,
            n_levels: 8,
            steps_per_level: 30,
        },
        gen_eval_samples: 0,
        sw_projections: 96,
    };
    let sched = NoiseSchedule::linear(300, 1e-4, 0.04).unwrap();

    let sw_of = |model: &ScoreModel, tag: u64| -> f64 {
        let mut gen_rng = Rng::derive(9000, tag);
        let gen = sample_unconditional(model, &sched, 2, 4096, &mut gen_rng).unwrap();
        sliced_wasserstein(&gen, &reference, 128, &mut Rng::derive(9100, tag)).unwrap()
    };

    let init_model = initialize(&clean_pool, &sched, &cfg, derive_seed(seed, 1)).unwrap();
    let init_sw = sw_of(&init_model, 0);

    let mut series = Vec::new();
    em_run(
        &measurements,
        &clean_pool,
        &sched,
        &cfg,
        seed,
        Some(&truths),
        |rec, model, _| {
            series.push(sw_of(model, rec.k as u64));
            Ok(())
        },
    )
    .unwrap();
    let last = *series.last().unwrap();
    let min = series.iter().cloned().fold(f64::INFINITY, f64::min);
    let within_budget = started.elapsed().as_secs_f64() < 1200.0;
    report(
        "C6 em-progress",
        last < 0.5 * init_sw && last <= min && within_budget,
        format!(
            "init {:.4}, series {:?}, final/init {:.3}",
            init_sw,
            series.iter().map(|v| (v * 1e4).round() / 1e4).collect::<Vec<_>>(),
            last / init_sw
        ),
        started,
    );
}

/// C9: conjugate Gaussian posterior and the exhaustive grid posterior
/// agree on the mean within one grid cell on 10 random 2-D problems.
#[test]
fn c9_oracle_cross_check() {
    let started = Instant::now();
    let mut rng = Rng::from_seed(909);
    let spec = GridSpec::square(6.0, 150);
    let (cell_w, cell_h) = spec.cell_width();
    let mut worst = 0.0f64;
    for trial in 0..10 {
        // Random SPD covariance via A A^T + eps I.
        let a: Vec<f64> = (0..4).map(|_| rng.uniform(-0.8, 0.8)).collect();
        let cov = Tensor::new(
            vec![2, 2],
            vec![
                a[0] * a[0] + a[1] * a[1] + 0.2,
                a[0] * a[2] + a[1] * a[3],
                a[0] * a[2] + a[1] * a[3],
                a[2] * a[2] + a[3] * a[3] + 0.2,
            ],
        )
        .unwrap();
        let mean = Tensor::from_vec(vec![rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)]);
        let prior = GaussianPrior::new(mean, cov).unwrap();
        let sigma_n = rng.uniform(0.3, 1.0);
        let masked = trial % 3 == 0;
        let y = Tensor::from_vec(vec![rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5)]);

        let (a_mat, op) = if masked {
            (
                Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 0.0]).unwrap(),
                MeasurementOperator::inpaint(Tensor::from_vec(vec![1.0, 0.0]), sigma_n).unwrap(),
            )
        } else {
            (
                Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap(),
                MeasurementOperator::awgn(sigma_n).unwrap(),
            )
        };
        let exact = prior.posterior(&a_mat, &y, sigma_n).unwrap();
        let grid_prior = prior.clone();
        let grid = GridPosterior::build(
            move |px, py| grid_prior.log_density(&[px, py]),
            &op,
            &y,
            spec,
        )
        .unwrap();
        let m = grid.mean();
        worst = worst
            .max((m[0] - exact.mean.get(0)).abs() / cell_w)
            .max((m[1] - exact.mean.get(1)).abs() / cell_h);
    }
    let within_budget = started.elapsed().as_secs_f64() < 60.0;
    report(
        "C9 oracle-cross-check",
        worst < 1.0 && within_budget,
        format!("worst mean deviation {:.2e} cells", worst),
        started,
    );
}

/// C10: checkpoint save -> load -> save produces bit-identical files.
#[test]
fn c10_checkpoint_roundtrip() {
    let started = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let mut rng = Rng::from_seed(1010);
    let mut model = ScoreModel::new(
        4,
        &ModelConfig {
            hidden: vec![10, 7],
            embed_width: 6,
        },
        &mut rng,
    )
    .unwrap();
    for i in 0..model.param_count() {
        model.set_param(i, rng.uniform(-2.0, 2.0));
    }
    let p1 = dir.path().join("a.emdm");
    let p2 = dir.path().join("b.emdm");
    save_model(&model, &p1).unwrap();
    let restored = load_model(&p1).unwrap();
    save_model(&restored, &p2).unwrap();
    let b1 = std::fs::read(&p1).unwrap();
    let b2 = std::fs::read(&p2).unwrap();
    let bytes_match = b1 == b2 && b1 == model_to_bytes(&restored);
    report(
        "C10 checkpoint-roundtrip",
        bytes_match,
        format!("{} bytes, bit-identical {}", b1.len(), bytes_match),
        started,
    );
}

/// Supporting check from the sampler contract: the guided baseline with a
/// tuned guidance scale lands within 10% of the conjugate posterior mean.
#[test]
fn dps_conjugate_mean_within_ten_percent() {
    let prior = GmmPrior::single(
        GaussianPrior::isotropic(Tensor::from_vec(vec![0.0, 0.0]), 1.0).unwrap(),
    );
    let vp = VpMarginalScore { prior };
    let op = MeasurementOperator::awgn(0.5).unwrap();
    let y = Tensor::from_vec(vec![2.0, 1.0]);
    // Posterior mean is 0.8 * y = (1.6, 0.8).
    let sched = NoiseSchedule::linear(500, 1e-4, 0.02).unwrap();
    let cfg = DpsConfig { zeta: 0.0015 };
    let n = 5000;
    let mut mean = [0.0f64; 2];
    for i in 0..n {
        let mut rng = Rng::derive(300, i as u64);
        let x = sample_dps(&vp, &sched, &op, &y, &cfg, &mut rng).unwrap();
        mean[0] += x.get(0);
        mean[1] += x.get(1);
    }
    mean[0] /= n as f64;
    mean[1] /= n as f64;
    let err = ((mean[0] - 1.6f64).powi(2) + (mean[1] - 0.8f64).powi(2)).sqrt();
    let rel = err / (1.6f64 * 1.6 + 0.8 * 0.8).sqrt();
    assert!(rel < 0.10, "relative mean error {:.3}", rel);
}

/// Supporting check: one posterior chain per measurement through the batch
/// API matches the direct chain, and the trust schedule endpoints are
/// exact.
#[test]
fn batch_and_schedule_contracts() {
    let score = ConvolvedScore {
        prior: GmmPrior::single(
            GaussianPrior::isotropic(Tensor::from_vec(vec![0.0]), 1.0).unwrap(),
        ),
    };
    let op = MeasurementOperator::awgn(1.0).unwrap();
    let cfg = PmcConfig {
        n_steps: 50,
        ..PmcConfig::default()
    };
    let item = Measurement::new(3, Tensor::from_vec(vec![0.5]), op);
    let out = posterior_batch(&score, &[item], &cfg, 7, 1).unwrap();
    assert_eq!(out.len(), 1);
    assert_eq!(alpha_schedule(1, 9, 1e-3).unwrap(), 1e-3);
    assert_eq!(alpha_schedule(9, 9, 1e-3).unwrap(), 1.0);
    // PSNR oracle sanity pinned to the analytic value.
    let clean = Tensor::zeros(&[50_000]);
    let noisy = gaussian_sample(&mut Rng::from_seed(5), &[50_000], 0.0, 0.2).unwrap();
    let v = psnr(&noisy, &clean, 1.0).unwrap();
    assert!((v - 13.979).abs() < 0.1, "psnr {}", v);
}
