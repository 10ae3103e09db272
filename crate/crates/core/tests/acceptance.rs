//! Acceptance criteria. Each test prints one `[PASS]`/`[FAIL]` line; run with
//! `cargo test -p pairwise-em --test acceptance -- --nocapture` to see them.

use nalgebra::{DMatrix, DVector};
use pairwise_em::diagnostics::{
    covariance_report, fixed_point_residual, gauss_tanh_moments, median, sign_resolved_errors,
    tail_step_ratios, ReportOptions,
};
use pairwise_em::estimators::{
    am_step, covariance_pseudoinverse, em_step, run_with_cov, sign0, spectral_init, EstimatorKind,
    IterationConfig,
};
use pairwise_em::experiments::{
    identifiability_demo, run_init_sweep, run_noise_sweep, run_sample_sweep, summarize, write_rows,
    OutputFormat, SummaryRow, SweepConfig, SweepEstimator, SweepRow,
};
use pairwise_em::linalg::{project_to_h, CenteredVector};
use pairwise_em::model::{
    generate, linear_theta_star, random_init, theta_in_class, Covariates, DesignKind,
    GroundTruthSpec, Instance,
};
use pairwise_em::rng::rng_from_seed;
use rand::Rng;

fn verdict(id: u32, title: &str, pass: bool, detail: &str) {
    println!(
        "[{}] AC-{id:02} {title}: {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "AC-{id:02} {title} failed: {detail}");
}

/// Random member of `Θ(β)`: sorted, centered, consecutive gaps in `[β/d, 3β/d]`.
fn random_separated_theta<R: Rng>(d: usize, beta: f64, rng: &mut R) -> CenteredVector {
    let mut acc = 0.0;
    let raw: Vec<f64> = (0..d)
        .map(|k| {
            if k > 0 {
                acc += beta / d as f64 * rng.random_range(1.0..3.0);
            }
            acc
        })
        .collect();
    project_to_h(&raw).unwrap()
}

fn linf(a: &DVector<f64>, b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn summary_for(s: &[SummaryRow], grid: f64, est: SweepEstimator) -> &SummaryRow {
    s.iter()
        .find(|r| r.grid_value == grid && r.estimator == est)
        .expect("summary row")
}

#[test]
fn ac01_fixed_point_identity() {
    let mut rng = rng_from_seed(101);
    let mut worst: f64 = 0.0;
    let mut count = 0;
    let mut seed = 1000;
    while count < 100 {
        seed += 1;
        let d = rng.random_range(5..=50);
        let n = (3.0 * d as f64 * (d as f64).ln()).ceil() as usize + rng.random_range(0..200);
        let ts = random_separated_theta(d, 1.0, &mut rng);
        let spec = GroundTruthSpec::Explicit(ts.clone());
        let inst = generate(d, n, 0.0, &spec, DesignKind::PairwiseUniform, seed).unwrap();
        let cov = covariance_pseudoinverse(&inst).unwrap();
        if !cov.connected {
            continue;
        }
        count += 1;
        let t = ts.as_vector();
        worst = worst.max(linf(&am_step(&inst, t, &cov).unwrap(), ts.as_slice()));
        // EM on the same noiseless data with a vanishing noise parameter
        let mut tiny = inst.clone();
        tiny.sigma = 1e-6;
        worst = worst.max(linf(&em_step(&tiny, t, &cov).unwrap(), ts.as_slice()));
    }
    verdict(
        1,
        "fixed-point identity",
        worst <= 1e-9,
        &format!("100 connected noiseless instances, max linf |Q(theta*) - theta*| = {worst:.3e} (tol 1e-9)"),
    );
}

/// Independent route: assign signs, then minimum-norm least squares of the
/// stacked system `[Z X; 1ᵀ] θ = [Z y; 0]` by SVD.
fn two_stage_oracle(inst: &Instance, theta: &DVector<f64>) -> DVector<f64> {
    let d = inst.d;
    let n = inst.n;
    let Covariates::Pairs(pairs) = &inst.covariates else {
        unreachable!()
    };
    let mut a = DMatrix::<f64>::zeros(n + 1, d);
    let mut b = DVector::<f64>::zeros(n + 1);
    for (r, (&(i, j), &y)) in pairs.iter().zip(&inst.responses).enumerate() {
        let z = sign0(y * (theta[i] - theta[j]));
        a[(r, i)] = z;
        a[(r, j)] = -z;
        b[r] = y;
    }
    for c in 0..d {
        a[(n, c)] = 1.0;
    }
    a.svd(true, true).solve(&b, 1e-10).unwrap()
}

#[test]
fn ac02_am_matches_two_stage_least_squares() {
    let mut rng = rng_from_seed(202);
    let mut worst: f64 = 0.0;
    for k in 0..50 {
        let d = rng.random_range(2..=6);
        let n = rng.random_range(1..=12);
        let sigma = rng.random_range(0.0..0.5);
        let inst = generate(
            d,
            n,
            sigma,
            &GroundTruthSpec::Linear(d),
            DesignKind::PairwiseUniform,
            5000 + k,
        )
        .unwrap();
        let cov = covariance_pseudoinverse(&inst).unwrap();
        let theta = DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
        let am = am_step(&inst, &theta, &cov).unwrap();
        let oracle = two_stage_oracle(&inst, &theta);
        worst = worst.max((am - oracle).amax());
    }
    verdict(
        2,
        "AM equals assign-then-least-squares",
        worst <= 1e-9,
        &format!("50 instances (d<=6, N<=12), max entry diff {worst:.3e} (tol 1e-9)"),
    );
}

#[test]
fn ac03_gauss_tanh_consistency() {
    let n = 1_000_000;
    let mut rng = rng_from_seed(303);
    let mut pass = true;
    let mut detail = Vec::new();
    for (mu, sigma) in [(0.0, 1.0), (1.0, 1.0), (2.0, 0.5)] {
        let (m, v) = gauss_tanh_moments(mu, sigma, n, &mut rng);
        let ok = (m - mu).abs() <= 5.0 * sigma / (n as f64).sqrt() && v <= 1.05 * sigma * sigma;
        pass &= ok;
        detail.push(format!("(mu={mu}, sigma={sigma}): mean {m:.5}, var {v:.5}"));
    }
    verdict(
        3,
        "E[X tanh(mu X/sigma^2)] = mu, Var <= sigma^2",
        pass,
        &detail.join("; "),
    );
}

fn init_sweep(design: DesignKind) -> Vec<SweepRow> {
    let cfg = SweepConfig {
        base_seed: 4,
        ..SweepConfig::init_interpolation(design)
    };
    run_init_sweep(&cfg).unwrap()
}

#[test]
fn ac04_random_init_fails_under_pairwise_design() {
    let rows = init_sweep(DesignKind::PairwiseUniform);
    let s = summarize(&rows);
    let mut pass = true;
    let mut detail = Vec::new();
    for r in &s {
        if r.grid_value <= 0.5 + 1e-12 {
            pass &= r.success_fraction >= 0.95;
        }
        detail.push(format!("eta={:.1}:{:.2}", r.grid_value, r.success_fraction));
    }
    let at_one = s.iter().find(|r| r.grid_value == 1.0).unwrap();
    let failure = 1.0 - at_one.success_fraction;
    pass &= failure >= 0.20;
    verdict(
        4,
        "init sweep, pairwise design",
        pass,
        &format!(
            "success fractions [{}]; need >= 0.95 for eta <= 0.5 and failure >= 0.20 at eta = 1 (got {failure:.2})",
            detail.join(" ")
        ),
    );
}

#[test]
fn ac05_random_init_succeeds_under_gaussian_design() {
    let rows = init_sweep(DesignKind::GaussianIsotropic);
    let s = summarize(&rows);
    let at_one = s.iter().find(|r| r.grid_value == 1.0).unwrap();
    let detail: Vec<String> = s
        .iter()
        .map(|r| format!("eta={:.1}:{:.2}", r.grid_value, r.success_fraction))
        .collect();
    verdict(
        5,
        "init sweep, Gaussian design",
        at_one.success_fraction >= 0.80,
        &format!(
            "success fractions [{}]; need >= 0.80 at eta = 1",
            detail.join(" ")
        ),
    );
}

#[test]
fn ac06_small_noise_sharpness() {
    let cfg = SweepConfig {
        base_seed: 6,
        ..SweepConfig::noise_sweep()
    };
    let rows = run_noise_sweep(&cfg).unwrap();
    let s = summarize(&rows);
    let g = cfg.sigma_sq_grid[0];
    let em = summary_for(&s, g, SweepEstimator::EmFromSpectral);
    let sp = summary_for(&s, g, SweepEstimator::Spectral);
    let ez = summary_for(&s, g, SweepEstimator::EasyEmFromSpectral);
    let rate = em.median_optimal_rate;
    let (r_em, r_sp, r_ez) = (
        em.median_final_l2sq / rate,
        sp.median_final_l2sq / rate,
        ez.median_final_l2sq / rate,
    );
    let pass = (0.8..=1.5).contains(&r_em) && r_sp >= 10.0 && r_ez >= 10.0;
    verdict(
        6,
        "small-noise sharpness at sigma^2 = 0.002",
        pass,
        &format!(
            "median error / optimal rate: EM {r_em:.3} (need [0.8, 1.5]), spectral {r_sp:.1} (>= 10), Easy-EM {r_ez:.1} (>= 10)"
        ),
    );
}

#[test]
fn ac07_sample_size_sweep_tracks_optimal_rate() {
    let cfg = SweepConfig {
        base_seed: 7,
        ..SweepConfig::sample_size_sweep()
    };
    let rows = run_sample_sweep(&cfg).unwrap();
    let s = summarize(&rows);
    let mut pass = true;
    let mut detail = Vec::new();
    for &n in &cfg.n_grid {
        let g = n as f64;
        let em = summary_for(&s, g, SweepEstimator::EmFromSpectral);
        let sp = summary_for(&s, g, SweepEstimator::Spectral);
        let ez = summary_for(&s, g, SweepEstimator::EasyEmFromSpectral);
        let ratio = em.median_final_l2sq / em.median_optimal_rate;
        let ok = (0.8..=2.0).contains(&ratio)
            && sp.median_final_l2sq > em.median_final_l2sq
            && ez.median_final_l2sq > em.median_final_l2sq;
        pass &= ok;
        detail.push(format!(
            "N={n}: EM/rate {ratio:.3}, spectral/EM {:.2}, EasyEM/EM {:.2}",
            sp.median_final_l2sq / em.median_final_l2sq,
            ez.median_final_l2sq / em.median_final_l2sq
        ));
    }
    verdict(7, "sample-size sweep", pass, &detail.join("; "));
}

#[test]
fn ac08_covariance_bounds() {
    let mut worst_op: f64 = 0.0;
    let mut worst_dag: f64 = 0.0;
    let mut min_trace_margin = f64::INFINITY;
    let mut all = true;
    for seed in 0..20 {
        let inst = generate(
            50,
            5000,
            0.1,
            &GroundTruthSpec::Linear(50),
            DesignKind::PairwiseUniform,
            800 + seed,
        )
        .unwrap();
        let r = covariance_report(&inst, &ReportOptions::default()).unwrap();
        all &= r.flags.all();
        worst_op = worst_op.max(r.spectral_norm_cov);
        worst_dag = worst_dag.max(r.spectral_norm_dagger);
        min_trace_margin = min_trace_margin.min(r.trace_dagger - 49.0 / 3.0);
    }
    verdict(
        8,
        "covariance bounds at d=50, N=5000",
        all,
        &format!(
            "20 seeds: max ||S||op {worst_op:.3} (<= 3), max ||S+||op {worst_dag:.3} (<= 5), min tr(S+) - (d-1)/3 = {min_trace_margin:.3}, rank d-1 in all"
        ),
    );
}

#[test]
fn ac09_local_linear_convergence() {
    let cfg = IterationConfig::default();
    let mut worst_ratio: f64 = 0.0;
    let mut worst_resid: f64 = 0.0;
    let mut all_converged = true;
    for k in 0..50u64 {
        let inst = generate(
            50,
            1000,
            0.1,
            &GroundTruthSpec::Linear(50),
            DesignKind::PairwiseUniform,
            900 + k,
        )
        .unwrap();
        let cov = covariance_pseudoinverse(&inst).unwrap();
        let mut rng = rng_from_seed(9900 + k);
        let t0 = random_init(&inst.theta_star, 0.1, &mut rng).unwrap();
        let trace = run_with_cov(&inst, t0.as_vector(), EstimatorKind::Em, &cfg, &cov).unwrap();
        all_converged &= trace.converged;
        let ratios = tail_step_ratios(&trace.step_linf_changes, 5);
        worst_ratio = worst_ratio.max(median(&ratios).unwrap_or(f64::INFINITY));
        worst_resid =
            worst_resid.max(fixed_point_residual(&inst, &trace.final_vector(), &cov).unwrap());
    }
    verdict(
        9,
        "local linear convergence",
        all_converged && worst_ratio <= 0.75 && worst_resid <= 1e-9,
        &format!(
            "50 warm starts (eta=0.1): all converged = {all_converged}, worst per-run median tail ratio {worst_ratio:.3} (<= 0.75), worst fixed-point residual {worst_resid:.2e} (<= 1e-9)"
        ),
    );
}

#[test]
fn ac10_spectral_recovery_and_missing_pairs() {
    let mut rng = rng_from_seed(1010);
    let mut worst_exact: f64 = 0.0;
    for d in [2, 3, 5, 10, 25, 50] {
        for truth in [
            linear_theta_star(d).unwrap(),
            random_separated_theta(d, 1.0, &mut rng),
        ] {
            assert!(theta_in_class(&truth, 1.0));
            let inst = generate(
                d,
                0,
                0.0,
                &GroundTruthSpec::Explicit(truth.clone()),
                DesignKind::ExhaustivePairs,
                0,
            )
            .unwrap();
            let res = spectral_init(&inst).unwrap();
            let e = sign_resolved_errors(res.theta_tilde.as_slice(), &truth).unwrap();
            worst_exact = worst_exact.max(e.l2_squared.sqrt());
        }
    }
    let mut degradation_ok = true;
    let mut ratios = Vec::new();
    for seed in 0..10 {
        let err_at = |var: f64| {
            let inst = generate(
                50,
                200,
                var.sqrt(),
                &GroundTruthSpec::Linear(50),
                DesignKind::PairwiseUniform,
                1100 + seed,
            )
            .unwrap();
            let res = spectral_init(&inst).unwrap();
            sign_resolved_errors(res.theta_tilde.as_slice(), &inst.theta_star)
                .unwrap()
                .l2_squared
        };
        let (quiet, loud) = (err_at(1e-6), err_at(1e-3));
        degradation_ok &= quiet >= 0.5 * loud;
        ratios.push(quiet / loud);
    }
    let min_ratio = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    verdict(
        10,
        "spectral exact recovery / missing-pair floor",
        worst_exact <= 1e-8 && degradation_ok,
        &format!(
            "complete design, sigma=0: worst l2 error {worst_exact:.2e} (<= 1e-8); N=200: min err(1e-6)/err(1e-3) = {min_ratio:.3} over 10 seeds (>= 0.5)"
        ),
    );
}

#[test]
fn ac11_three_component_non_identifiability() {
    let mut rng = rng_from_seed(1111);
    let mut all = true;
    let mut checked = 0;
    for d in [2, 5, 20] {
        for _ in 0..10 {
            let tail: Vec<f64> = (0..d - 2).map(|_| rng.random_range(-5.0..5.0)).collect();
            all &= identifiability_demo(&tail).equal;
            checked += 1;
        }
    }
    verdict(
        11,
        "three-component non-identifiability",
        all,
        &format!("{checked} random tails over d in {{2, 5, 20}}: all multisets equal = {all}"),
    );
}

#[test]
fn ac12_sweep_output_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SweepConfig {
        base_seed: 12,
        ..SweepConfig::init_interpolation(DesignKind::PairwiseUniform)
    };
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    write_rows(&run_init_sweep(&cfg).unwrap(), &a, OutputFormat::Csv).unwrap();
    write_rows(&run_init_sweep(&cfg).unwrap(), &b, OutputFormat::Csv).unwrap();
    let (ba, bb) = (std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    verdict(
        12,
        "deterministic init sweep CSV",
        ba == bb && !ba.is_empty(),
        &format!(
            "two runs with base_seed 12: {} bytes each, identical = {}",
            ba.len(),
            ba == bb
        ),
    );
}
