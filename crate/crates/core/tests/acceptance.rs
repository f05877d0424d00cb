//! Acceptance suite. Each test prints one `PASS`/`FAIL` line straight to the
//! terminal (bypassing libtest capture) and then asserts the criterion.

use std::io::Write;
use std::process::Command;

use biteuler::diagnostics::{epsilon_n, AnalysisConstants};
use biteuler::experiments::{
    divergence_comparison, fit_rate, moment_sweep, stopping_sweep, strong_error, ConvergenceConfig, Reference,
};
use biteuler::models::{catalog_entry, model_ginzburg_landau};
use biteuler::taming::{tame, tame_jacobian_diag, tame_laplacian, verify_taming_bounds, TamingParams};
use biteuler::SchemeKind;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEED: u64 = 20_240_601;
const PATHS: usize = 10_000;

fn report(id: u32, pass: bool, detail: &str) {
    let line = format!("[acceptance {id}] {} {detail}\n", if pass { "PASS" } else { "FAIL" });
    let _ = std::io::stderr().write_all(line.as_bytes());
}

fn powers(lo: u32, hi: u32) -> Vec<usize> {
    (lo..=hi).map(|k| 1usize << k).collect()
}

fn gbm_config() -> ConvergenceConfig {
    ConvergenceConfig {
        model: "gbm".into(),
        params: vec![("a".into(), 0.05), ("b".into(), 0.2)],
        scheme: SchemeKind::StoppedBit,
        r: 2.0,
        horizon: 1.0,
        ns: powers(4, 10),
        n_ref: 1 << 10,
        paths: PATHS,
        seed: SEED,
        reference: Reference::Exact,
        x0: Some(vec![1.0]),
    }
}

#[test]
fn criterion_1_gbm_rate_one_half() {
    let table = strong_error(&gbm_config()).unwrap();
    let fit = fit_rate(&table).unwrap();
    let pass = (0.40..=0.60).contains(&fit.slope);
    report(1, pass, &format!("GBM stopped scheme vs exact: slope {:.4}, band [0.40, 0.60]", fit.slope));
    assert!(pass, "slope {} outside [0.40, 0.60]; table {:?}", fit.slope, table.rows);
}

#[test]
fn criterion_2_ginzburg_landau_rate() {
    let config = ConvergenceConfig {
        model: "ginzburg-landau".into(),
        params: vec![("alpha".into(), 1.0), ("beta".into(), 1.0), ("sigma0".into(), 1.0)],
        scheme: SchemeKind::StoppedBit,
        r: 2.0,
        horizon: 1.0,
        ns: powers(4, 10),
        n_ref: 1 << 13,
        paths: PATHS,
        seed: SEED,
        reference: Reference::FineGrid(SchemeKind::StoppedBit),
        x0: Some(vec![1.0]),
    };
    config.validate_strict().unwrap();
    let table = strong_error(&config).unwrap();
    let fit = fit_rate(&table).unwrap();
    let overflow: f64 = table.rows.iter().map(|r| r.overflow_fraction).sum();
    let pass = (0.40..=0.65).contains(&fit.slope) && overflow == 0.0;
    report(
        2,
        pass,
        &format!("Ginzburg-Landau vs fine grid 2^13: slope {:.4}, band [0.40, 0.65], overflow {overflow}", fit.slope),
    );
    assert!(pass, "slope {} overflow {overflow}; table {:?}", fit.slope, table.rows);
}

#[test]
fn criterion_3_taming_bounds() {
    let mut failures = Vec::new();
    for h in [1.0, 0.1, 0.01] {
        for m in [1, 5] {
            let r = verify_taming_bounds(&TamingParams::new(h, m).unwrap(), 100_000, SEED).unwrap();
            if !r.all_pass() {
                failures.push(format!(
                    "h={h} m={m}: sup {:.4}/{:.4} ({}), fraction {}, jacobian {:.4}+3*{:.1e}/{:.4} ({}), laplacian {:.4}+3*{:.1e}/{:.4} ({})",
                    r.sup_norm.estimate, r.sup_norm.bound, r.sup_norm.pass, r.sup_norm_pass_fraction,
                    r.jacobian.estimate, r.jacobian.std_error, r.jacobian.bound, r.jacobian.pass,
                    r.laplacian.estimate, r.laplacian.std_error, r.laplacian.bound, r.laplacian.pass,
                ));
            }
        }
    }
    let pass = failures.is_empty();
    report(
        3,
        pass,
        &format!(
            "taming bounds over h in {{1, 0.1, 0.01}}, m in {{1, 5}}: {}",
            if pass { "all hold with 3-stderr margin".to_string() } else { failures.join("; ") }
        ),
    );
    assert!(pass, "{failures:?}");
}

/// Sixth-order central differences of the taming map with step `d`.
fn fd_derivatives(params: &TamingParams, x: &[f64], d: f64) -> (Vec<f64>, Vec<f64>) {
    let m = x.len();
    let at = |shift: f64| -> Vec<f64> {
        let y: Vec<f64> = x.iter().map(|v| v + shift).collect();
        tame(params, &y)
    };
    let f: Vec<Vec<f64>> = [-3.0, -2.0, -1.0, 0.0, 1.0, 2.0, 3.0].iter().map(|k| at(k * d)).collect();
    let first = (0..m)
        .map(|i| (-f[0][i] + 9.0 * f[1][i] - 45.0 * f[2][i] + 45.0 * f[4][i] - 9.0 * f[5][i] + f[6][i]) / (60.0 * d))
        .collect();
    let second = (0..m)
        .map(|i| {
            (2.0 * f[0][i] - 27.0 * f[1][i] + 270.0 * f[2][i] - 490.0 * f[3][i] + 270.0 * f[4][i] - 27.0 * f[5][i]
                + 2.0 * f[6][i])
                / (180.0 * d * d)
        })
        .collect();
    (first, second)
}

#[test]
fn criterion_4_derivatives_match_finite_differences() {
    // Relative errors are taken against max(|exact|, scale) with the natural
    // scale of each derivative: 1 for the Jacobian, h^{-1/4} for the Laplacian.
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let (mut worst_j, mut worst_l) = (0.0f64, 0.0f64);
    let m = 3;
    for _ in 0..10_000 / m {
        let h = 10f64.powf(rng.random_range(-4.0..0.0));
        let s = h.powf(0.25);
        let params = TamingParams::new(h, m).unwrap();
        let x: Vec<f64> = (0..m).map(|_| s * rng.random_range(-2.5..2.5)).collect();
        let jac = tame_jacobian_diag(&params, &x);
        let lap = tame_laplacian(&params, &x);
        let (fd1, fd2) = fd_derivatives(&params, &x, 1e-3 * s);
        for i in 0..m {
            worst_j = worst_j.max((fd1[i] - jac[i]).abs() / jac[i].abs().max(1.0));
            worst_l = worst_l.max((fd2[i] - lap[i]).abs() / lap[i].abs().max(1.0 / s));
        }
    }
    let pass = worst_j < 1e-6 && worst_l < 1e-5;
    report(
        4,
        pass,
        &format!(
            "finite differences: worst Jacobian rel {worst_j:.2e} (< 1e-6), worst Laplacian rel {worst_l:.2e} (< 1e-5)"
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_5_moment_flatness() {
    let entry = catalog_entry("ginzburg-landau", &[], 1.0).unwrap();
    let spec = entry.model.lyapunov.clone().unwrap();
    let r = moment_sweep(&entry.model, &spec, &powers(4, 10), PATHS, &[1.0], 1.0, SEED).unwrap();
    let applicable = r.rows.iter().filter(|row| row.claim_applies).count();
    let pass = r.flatness_ratio <= 1.25 && r.bounds_hold();
    report(
        5,
        pass,
        &format!(
            "E[U(Y_T)] max/min ratio {:.4} (<= 1.25); bound holds at all {applicable} N >= N0 (ln N0 = {:.1})",
            r.flatness_ratio, r.n0.ln_n0
        ),
    );
    assert!(pass, "{r:?}");
}

#[test]
fn criterion_6_stopping_probability_decay() {
    let entry = catalog_entry("ginzburg-landau", &[], 1.0).unwrap();
    let spec = entry.model.lyapunov.clone().unwrap();
    let rows = stopping_sweep(&entry.model, &spec, &powers(4, 12), PATHS, &[1.0], 1.0, SEED).unwrap();
    let mut monotone = true;
    for i in 0..rows.len() {
        for j in i + 1..rows.len() {
            let tol = 3.0 * rows[i].std_error.hypot(rows[j].std_error);
            monotone &= rows[j].estimate <= rows[i].estimate + tol;
        }
    }
    let last = rows.last().unwrap().estimate;
    let pass = monotone && last == 0.0;
    let estimates: Vec<String> = rows.iter().map(|r| format!("{}:{:.2e}", r.n, r.estimate)).collect();
    report(
        6,
        pass,
        &format!(
            "P[tau < T] nonincreasing within 3 stderr: {monotone}, value at N=4096: {last} [{}]",
            estimates.join(" ")
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_7_euler_maruyama_diverges_stopped_scheme_does_not() {
    let model = model_ginzburg_landau(1.0, 1.0, 1.0).unwrap();
    let r = divergence_comparison(
        &model,
        &[SchemeKind::EulerMaruyama, SchemeKind::StoppedBit],
        &powers(0, 10),
        PATHS,
        &[5.0],
        1.0,
        SEED,
    )
    .unwrap();
    let em_max = r
        .rows_for(SchemeKind::EulerMaruyama)
        .map(|row| row.explosion_fraction.max(row.overflow_fraction))
        .fold(0.0, f64::max);
    let bit_max = r
        .rows_for(SchemeKind::StoppedBit)
        .map(|row| row.explosion_fraction.max(row.overflow_fraction))
        .fold(0.0, f64::max);
    let pass = em_max > 0.0 && bit_max == 0.0;
    report(7, pass, &format!("x0 = 5: largest Euler-Maruyama explosion fraction {em_max}, stopped scheme {bit_max}"));
    assert!(pass);
}

#[test]
fn criterion_8_epsilon_vanishes() {
    let base = AnalysisConstants::new(1.0, 1, 1.0, 1, 0.0, 16).unwrap();
    let values: Vec<f64> = (4..=40).map(|k| epsilon_n(&base.with_n(1usize << k))).collect();
    let peak_at = values.iter().enumerate().fold(0, |best, (i, v)| if *v > values[best] { i } else { best });
    let decreasing = values[peak_at..].windows(2).all(|w| w[1] < w[0]);
    let peak = values[peak_at];
    let last = *values.last().unwrap();
    let pass = peak.is_finite() && decreasing && peak_at + 1 < values.len() && last < 1e-2 * peak;
    report(
        8,
        pass,
        &format!(
            "eps^N peaks at N = 2^{} ({peak:.3e}), strictly decreasing after: {decreasing}, final/peak {:.2e}",
            peak_at + 4,
            last / peak
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_9_thread_count_does_not_change_csv() {
    let dir = tempfile::tempdir().unwrap();
    let run = |threads: usize| -> Vec<u8> {
        let out = dir.path().join(format!("t{threads}.csv"));
        let status = Command::new(env!("CARGO_BIN_EXE_biteuler"))
            .args([
                "convergence",
                "--model",
                "gbm",
                "--param",
                "a=0.05",
                "--param",
                "b=0.2",
                "--x0",
                "1",
                "--scheme",
                "bit",
                "--reference",
                "exact",
                "--T",
                "1",
                "--Ns",
                "16,32,64,128,256,512,1024",
                "--M",
                "10000",
                "--r",
                "2",
            ])
            .args(["--seed", &SEED.to_string(), "--threads", &threads.to_string()])
            .arg("--output")
            .arg(&out)
            .env_clear()
            .status()
            .unwrap();
        assert!(status.success());
        std::fs::read(&out).unwrap()
    };
    let one = run(1);
    let four = run(4);
    let pass = one == four && !one.is_empty();
    report(
        9,
        pass,
        &format!("criterion-1 CSV with 1 vs 4 threads byte-identical: {} ({} bytes)", one == four, one.len()),
    );
    assert!(pass);
}
