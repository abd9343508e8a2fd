//! Built-in invariant suite: quick numerical checks of the identities
//! the solvers rely on, runnable on any install via `icsim selftest`.

use icsim_core::covariance::{covariance_pair, total_covariance, ErrorNormVector};
use icsim_core::linalg::vdot;
use icsim_core::model::{
    gaussian_matrix_with, init_filters, sample_network, FilterSet, NetworkConfig, RngStream,
};
use icsim_core::sinr::sinr_lower_bound;
use icsim_core::solver::{max_sinr_update, Solver, SolverKind};
use icsim_core::stats::lb_gradient;
use icsim_core::ChannelSet;

struct Check {
    name: &'static str,
    passed: bool,
    detail: String,
}

fn setup(sigma2: f64, p: f64, seed: u64) -> (NetworkConfig, ChannelSet, FilterSet) {
    let cfg = NetworkConfig::symmetric(4, 3, 3, 1, p, 1.0, sigma2).unwrap();
    let ch = sample_network(&cfg, &RngStream::new(seed, 0)).unwrap();
    let f = init_filters(&cfg, &RngStream::new(seed, 1)).unwrap();
    (cfg, ch, f)
}

fn check_zero_sigma_equivalence() -> Check {
    let mut worst = 0.0_f64;
    for seed in 0..5u64 {
        let cfg = NetworkConfig::symmetric(4, 3, 3, 1, 10.0, 1.0, 0.0).unwrap();
        let ch = sample_network(&cfg, &RngStream::new(1000 + seed, 0)).unwrap();
        let mut em = Solver::new(&cfg, &ch, SolverKind::Em, &RngStream::new(1000 + seed, 1)).unwrap();
        let mut ms = Solver::new(&cfg, &ch, SolverKind::MaxSinr, &RngStream::new(1000 + seed, 1)).unwrap();
        for _ in 0..25 {
            em.step().unwrap();
            ms.step().unwrap();
            for k in 0..cfg.k {
                let a = em.filters().u_col(k, 0);
                let b = ms.filters().u_col(k, 0);
                worst = worst.max((vdot(&a, &b).norm() - 1.0).abs());
            }
        }
    }
    Check {
        name: "zero-error EM/MaxSINR equivalence",
        passed: worst < 1e-9,
        detail: format!("max phase-aligned gap {worst:.2e}"),
    }
}

fn check_gradient() -> Check {
    let mut worst = 0.0_f64;
    for seed in 0..25u64 {
        let (cfg, ch, f) = setup(0.1, 2.0, 2000 + seed);
        let k = (seed % 4) as usize;
        let pair = covariance_pair(k, ch.estimated_channels(), &f, cfg.p).unwrap();
        let u = f.u_col(k, 0);
        let grad = lb_gradient(k, &pair.s, &pair.t[0], &u, &cfg).unwrap();
        let theta = (cfg.m * cfg.n) as f64 * cfg.sigma2;
        let h = 1e-6 * theta;
        for j in 0..cfg.k {
            let eval = |e_j: f64| {
                let mut e = vec![theta; cfg.k];
                e[j] = e_j;
                sinr_lower_bound(
                    ch.estimated_channels(),
                    k,
                    0,
                    &f,
                    &ErrorNormVector::with_norms(e, &cfg),
                    cfg.p,
                    cfg.n0,
                )
                .unwrap()
            };
            let fd = (eval(theta + h) - eval(theta - h)) / (2.0 * h);
            worst = worst.max((grad[j] - fd).abs() / fd.abs().max(1e-12));
        }
    }
    Check {
        name: "lower-bound gradient vs finite differences",
        passed: worst < 1e-4,
        detail: format!("max relative error {worst:.2e}"),
    }
}

fn check_searle() -> Check {
    let mut worst = 0.0_f64;
    for seed in 0..25u64 {
        let (cfg, ch, f) = setup(0.1, 3.0, 3000 + seed);
        let k = (seed % 4) as usize;
        let b_full = total_covariance(k, ch.true_channels(), &f, cfg.p).unwrap();
        let own = icsim_core::covariance::stream_covariance(k, 0, ch.true_channels(), &f, cfg.p).unwrap();
        let steering = ch.g(k, k).matvec(&f.v_col(k, 0));
        let u1 = max_sinr_update(&b_full, &steering, cfg.n0).unwrap();
        let u2 = max_sinr_update(&b_full.sub(&own), &steering, cfg.n0).unwrap();
        worst = worst.max((vdot(&u1, &u2).norm() - 1.0).abs());
    }
    Check {
        name: "matrix-inversion collinearity identity",
        passed: worst < 1e-10,
        detail: format!("max collinearity defect {worst:.2e}"),
    }
}

fn check_autocorrelation() -> Check {
    let cfg = NetworkConfig::symmetric(4, 3, 3, 1, 10.0, 1.0, 0.1).unwrap();
    let ch = sample_network(&cfg, &RngStream::new(4000, 0)).unwrap();
    let f = init_filters(&cfg, &RngStream::new(4000, 1)).unwrap();
    let got = icsim_core::covariance::estimate_received_autocorrelation(
        0,
        &ch,
        &f,
        &cfg,
        100_000,
        &RngStream::new(4000, 2),
    )
    .unwrap();
    let s = total_covariance(0, ch.estimated_channels(), &f, cfg.p).unwrap();
    let shift = cfg.p * cfg.sigma2 * cfg.total_streams() as f64 + cfg.n0;
    let expect = s.shifted(shift);
    let rel = got.sub(&expect).frobenius_norm() / expect.frobenius_norm();

    // Chi-square moments of the error norms.
    let mut rng = RngStream::new(4000, 3).rng();
    let draws = 100_000;
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..draws {
        let e = gaussian_matrix_with(cfg.n, cfg.m, cfg.sigma2, &mut rng);
        let x = e.frobenius_norm().powi(2);
        sum += x;
        sum_sq += x * x;
    }
    let nf = draws as f64;
    let mean = sum / nf;
    let var = sum_sq / nf - mean * mean;
    let mn = (cfg.m * cfg.n) as f64;
    let mean_ok = (mean - mn * cfg.sigma2).abs() < 0.02 * mn * cfg.sigma2;
    let var_ok = (var - mn * cfg.sigma2 * cfg.sigma2).abs() < 0.10 * mn * cfg.sigma2 * cfg.sigma2;

    Check {
        name: "received autocorrelation identity + error-norm moments",
        passed: rel < 0.02 && mean_ok && var_ok,
        detail: format!("autocorr rel err {rel:.3e}, mean {mean:.4}, var {var:.4}"),
    }
}

/// Run all checks; returns the number of failures.
pub fn run() -> usize {
    let checks = [
        check_zero_sigma_equivalence(),
        check_gradient(),
        check_searle(),
        check_autocorrelation(),
    ];
    let mut failures = 0;
    for c in &checks {
        let status = if c.passed { "PASS" } else { "FAIL" };
        println!("{status} {} ({})", c.name, c.detail);
        if !c.passed {
            failures += 1;
        }
    }
    println!(
        "selftest: {} passed, {} failed",
        checks.len() - failures,
        failures
    );
    failures
}
