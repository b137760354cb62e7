//! Acceptance suite. Each criterion prints one PASS/FAIL line; the process
//! exits non-zero if any criterion fails.

use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};
use std::path::PathBuf;
use std::process::Command;
use std::time::Instant;
use trudinger::constants::{
    c2_over_c1_closed_form, caccioppoli_constants, caccioppoli_formula, geometric_decay_bound,
    lambda_threshold, ln_iteration_bound, sobolev_exponents, zeta_barenblatt, zeta_davies_gaffney,
    IterationParams, DEFAULT_KAPPA,
};
use trudinger::solver::{convergence_study, run, Field, RadialGrid, SolverConfig, Trace};
use trudinger::verify::{
    auto_rho, check_davies_gaffney, check_integral_max_principle, check_lambda_decay,
    check_lambda_monotone, check_mean_value_scaleinv, check_neighborhood_decay,
    check_subgaussian_envelope, sharpness_fit, CheckReport, DaviesGaffneyWeight, DecayOptions,
    EnvelopeMode, EnvelopeOptions, RegularFunctionSpec, DEFAULT_TOL,
};
use trudinger::{ExactSolution, ModelManifold, Region};

type Outcome = Result<String, String>;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn log_times(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    let mut ts: Vec<f64> = (0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
        .collect();
    ts[count - 1] = hi;
    ts
}

fn bump(a: f64) -> impl Fn(f64) -> f64 {
    move |r: f64| (1.0 - (r / a).powi(2)).max(0.0).powi(2)
}

fn criterion_1() -> Outcome {
    let (c1, c2) = caccioppoli_constants(2.0, 2.0).map_err(|e| e.to_string())?;
    ensure(rel(c1, 0.5) <= 1e-12 && rel(c2, 17.0) <= 1e-12, || {
        format!("c1, c2 = {c1}, {c2}")
    })?;
    let z = zeta_davies_gaffney(2.0, 2.0).map_err(|e| e.to_string())?;
    ensure(rel(z, 1.0 / 34.0) <= 1e-12, || format!("zeta_dg = {z}"))?;
    let zb2 = zeta_barenblatt(2.0).map_err(|e| e.to_string())?;
    let zb3 = zeta_barenblatt(3.0).map_err(|e| e.to_string())?;
    ensure(rel(zb2, 0.25) <= 1e-12, || format!("zeta_b(2) = {zb2}"))?;
    ensure(rel(zb3, 4.0 * 3f64.powf(-1.5)) <= 1e-12, || {
        format!("zeta_b(3) = {zb3}")
    })?;
    let (k, nu) = sobolev_exponents(3, 2.0, DEFAULT_KAPPA).map_err(|e| e.to_string())?;
    ensure(rel(k, 3.0) <= 1e-12 && rel(nu, 2.0 / 3.0) <= 1e-12, || {
        format!("(kappa, nu) = ({k}, {nu})")
    })?;
    let mut worst = 0.0f64;
    for p in [1.5, 2.0, 3.0] {
        for lambda in [2.0, 4.0, 8.0, 16.0] {
            let (c1, c2) = caccioppoli_formula(p, lambda).map_err(|e| e.to_string())?;
            let identity = 2f64.powf(p - 1.0)
                + 2f64.powf(2.0 * p - 1.0) * lambda.powf(p) / (lambda - 1.0).powf(p);
            worst = worst.max(rel(c2 / c1, identity));
            worst = worst.max(rel(c2_over_c1_closed_form(p, lambda), identity));
        }
    }
    ensure(worst <= 1e-12, || {
        format!("ratio identity off by {worst:e}")
    })?;
    Ok(format!(
        "all constants exact; ratio identity max rel err {worst:.1e}"
    ))
}

fn criterion_2() -> Outcome {
    let mut runner = TestRunner::new_with_rng(
        Config {
            cases: 1000,
            failure_persistence: None,
            ..Config::default()
        },
        TestRng::deterministic_rng(RngAlgorithm::ChaCha),
    );
    let strategy = (
        -2.0f64..3.0,
        -4.0f64..4.0,
        0.05f64..2.0,
        -6.0f64..2.5,
        any::<bool>(),
        0.0f64..1.0,
    );
    let checked = std::sync::atomic::AtomicUsize::new(0);
    let special = std::sync::atomic::AtomicUsize::new(0);
    let result = runner.run(&strategy, |(ln_a, ln_t, omega, ln_j0, force, extra)| {
        let a = ln_a.exp();
        let j0 = ln_j0.exp();
        // half of the cases sit in the geometric-decay regime
        let theta = if force {
            a.powf(1.0 / omega) * j0.powf(omega) * (1.0 + extra)
        } else {
            ln_t.exp()
        };
        let params = IterationParams::new(a, theta, omega, j0).unwrap();
        let mut ln_j = j0.ln();
        for k in 0..=20u32 {
            let bound = ln_iteration_bound(&params, k);
            let slack = 1e-9 * bound.abs().max(1.0);
            prop_assert!(ln_j <= bound + slack, "k={k}: {ln_j} > {bound}");
            if let Some(g) = geometric_decay_bound(&params, k) {
                let lg = g.ln();
                prop_assert!(ln_j <= lg + 1e-9 * lg.abs().max(1.0), "geometric k={k}");
                if k == 0 {
                    special.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                }
            }
            ln_j = k as f64 * a.ln() - theta.ln() + (1.0 + omega) * ln_j;
        }
        checked.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
        Ok(())
    });
    let n = checked.into_inner();
    let s = special.into_inner();
    result.map_err(|e| format!("violation: {e}"))?;
    ensure(n == 1000, || format!("only {n} instances ran"))?;
    Ok(format!(
        "{n} instances x 21 iterates, {s} in the geometric regime, 0 violations"
    ))
}

fn criterion_3() -> Outcome {
    let mut cases: Vec<(String, ExactSolution, ModelManifold)> = Vec::new();
    for p in [1.5, 2.0, 3.0] {
        for n in [1u32, 3] {
            cases.push((
                format!("barenblatt p={p} n={n}"),
                ExactSolution::barenblatt(p, n).unwrap(),
                ModelManifold::euclidean(n).unwrap(),
            ));
        }
    }
    cases.push((
        "polynomial p=3 alpha=2".into(),
        ExactSolution::polynomial_model(3.0, 2.0).unwrap(),
        ModelManifold::polynomial(3, 1.0, 2.0, 0.0).unwrap(),
    ));
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (label, sol, m) in &cases {
        for i in 0..10 {
            let t = 1.0 + 0.2 * i as f64;
            let scale = t.powf(1.0 / sol.p());
            let r = scale * (0.4 + 0.15 * i as f64);
            let h0 = 0.02 * scale;
            let res: Vec<f64> = (0..3)
                .map(|k| sol.pde_residual(m, r, t, h0 / 2f64.powi(k)).map(f64::abs))
                .collect::<Result<_, _>>()
                .map_err(|e| format!("{label}: {e}"))?;
            for w in res.windows(2) {
                let order = (w[0] / w[1]).log2();
                lo = lo.min(order);
                hi = hi.max(order);
                ensure((1.7..=2.3).contains(&order), || {
                    format!("{label} at (r={r:.3}, t={t}): order {order:.3}")
                })?;
            }
        }
    }
    Ok(format!(
        "{} cases x 10 points, Richardson orders in [{lo:.3}, {hi:.3}]",
        cases.len()
    ))
}

fn criterion_4() -> Outcome {
    let m3 = ModelManifold::euclidean(3).unwrap();
    let rows = convergence_study(2.0, &m3, &[128, 256, 512, 1024], 1.0, 2.0, None)
        .map_err(|e| e.to_string())?;
    for w in rows.windows(2) {
        ensure(w[1].linf_error < w[0].linf_error, || {
            format!(
                "Linf error not decreasing: {} -> {}",
                w[0].linf_error, w[1].linf_error
            )
        })?;
    }
    let orders: Vec<f64> = rows.iter().filter_map(|r| r.order).collect();
    ensure(orders.iter().all(|&o| o >= 0.9), || {
        format!("orders {orders:?}")
    })?;
    for r in &rows {
        ensure(r.mass_drift <= 1e-10, || {
            format!("mass drift {} at {} cells", r.mass_drift, r.cells)
        })?;
        ensure(r.min_value >= -1e-12, || {
            format!("min u {} at {} cells", r.min_value, r.cells)
        })?;
    }
    let m1 = ModelManifold::euclidean(1).unwrap();
    let rows3 = convergence_study(3.0, &m1, &[256, 512, 1024], 1.0, 2.0, None)
        .map_err(|e| e.to_string())?;
    for w in rows3.windows(2) {
        ensure(w[1].l1_error < w[0].l1_error, || {
            format!(
                "p=3 L1 error not decreasing: {} -> {}",
                w[0].l1_error, w[1].l1_error
            )
        })?;
    }
    let peak0 = ExactSolution::barenblatt(3.0, 1)
        .unwrap()
        .evaluate(0.0, 1.0)
        .unwrap();
    for r in &rows3 {
        ensure(r.max_value < peak0, || {
            format!("p=3 max {} >= u(0, t0) = {peak0}", r.max_value)
        })?;
        ensure(r.mass_drift <= 1e-10 && r.min_value >= -1e-12, || {
            format!("p=3 drift {} min {}", r.mass_drift, r.min_value)
        })?;
    }
    Ok(format!(
        "p=2 n=3 Linf {:.2e} -> {:.2e}, orders {}; p=3 n=1 L1 {:.2e} -> {:.2e}",
        rows[0].linf_error,
        rows[rows.len() - 1].linf_error,
        orders
            .iter()
            .map(|o| format!("{o:.2}"))
            .collect::<Vec<_>>()
            .join("/"),
        rows3[0].l1_error,
        rows3[rows3.len() - 1].l1_error
    ))
}

fn bump_run(
    p: f64,
    n: u32,
    a: f64,
    r_outer: f64,
    cells: usize,
    t_end: f64,
    times: &[f64],
) -> Result<Trace, String> {
    let m = ModelManifold::euclidean(n).unwrap();
    let grid = RadialGrid::new(&m, 0.0, r_outer, cells).map_err(|e| e.to_string())?;
    let u0 = Field::from_fn(&grid, 0.0, bump(a)).map_err(|e| e.to_string())?;
    run(&u0, t_end, times, &grid, &SolverConfig::new(p)).map_err(|f| f.to_string())
}

fn failures(reports: &[CheckReport]) -> Vec<String> {
    let mut out = Vec::new();
    for rep in reports {
        if let Some(reason) = &rep.skipped {
            out.push(format!("{} skipped: {reason}", rep.name));
        }
        for r in rep.results.iter().filter(|r| !r.pass) {
            out.push(format!(
                "{} t={} lhs={:e} rhs={:e} {}",
                r.name, r.t, r.lhs, r.rhs, r.context
            ));
        }
    }
    out
}

fn criterion_5() -> Outcome {
    let mut summary = Vec::new();
    for p in [2.0, 3.0] {
        let lambda = lambda_threshold(p);
        let a = 1.0;
        let t_end = 8.0;
        let times = log_times(t_end / 512.0, t_end, 60);
        let trace = bump_run(p, 1, a, 40.0, 800, t_end, &times)?;
        let region_w = Region::new(a, 1.0).unwrap();
        let weight = DaviesGaffneyWeight::new(p, lambda, region_w, 1.25 * t_end)
            .map_err(|e| e.to_string())?;
        let rho = auto_rho(0.0, t_end.powf(1.0 / p), 0.5, 2.0).map_err(|e| e.to_string())?;
        let region = Region::new(a, rho).unwrap();
        let gamma =
            RegularFunctionSpec::fit(&trace, lambda, &region.neighborhood(), (lambda - 1.0) / p)
                .map_err(|e| e.to_string())?;
        let reports = vec![
            check_lambda_monotone(&trace, &[1.0, 2.0, lambda, f64::INFINITY], DEFAULT_TOL)
                .map_err(|e| e.to_string())?,
            check_integral_max_principle(&trace, lambda, &weight, DEFAULT_TOL)
                .map_err(|e| e.to_string())?,
            check_davies_gaffney(&trace, lambda, a, &[1.0, 2.0, 4.0], DEFAULT_TOL)
                .map_err(|e| e.to_string())?,
            check_neighborhood_decay(&trace, lambda, &region, &gamma, &DecayOptions::default())
                .map_err(|e| e.to_string())?,
        ];
        let bad = failures(&reports);
        ensure(bad.is_empty(), || {
            format!("p={p}: {} failures, first: {}", bad.len(), bad[0])
        })?;
        let rows: usize = reports.iter().map(|r| r.results.len()).sum();
        let c_fit = reports[3]
            .fitted
            .iter()
            .find(|(k, _)| k == "C_fit")
            .map_or(f64::NAN, |x| x.1);
        let stab = reports[3].results.last().map_or(f64::NAN, |r| r.lhs);
        summary.push(format!(
            "p={p}: {rows} rows pass, C_fit={c_fit:.3e} (x{stab:.3})"
        ));
    }
    Ok(summary.join("; "))
}

fn criterion_6() -> Outcome {
    let cases = [
        (2.0, 1u32, 2.0, 60.0, 600usize),
        (2.0, 3, 2.0, 60.0, 600),
        (3.0, 1, 3.0, 100.0, 1000),
    ];
    let mut summary = Vec::new();
    for (p, n, lambda, r_outer, cells) in cases {
        let t_end = 100.0;
        let times = log_times(1.0, t_end, 41);
        let trace = bump_run(p, n, 1.0, r_outer, cells, t_end, &times)?;
        let (slope, _) = check_lambda_decay(&trace, lambda, n, p).map_err(|e| e.to_string())?;
        let predicted = -(lambda - 1.0) * n as f64 / p;
        ensure(rel(slope, predicted) <= 0.03, || {
            format!("(p,n,lambda)=({p},{n},{lambda}): slope {slope:.4} vs {predicted:.4}")
        })?;
        summary.push(format!(
            "({p},{n},{lambda}) slope {slope:.4} vs {predicted:.4}"
        ));
    }
    Ok(summary.join("; "))
}

fn criterion_7() -> Outcome {
    let mut summary = Vec::new();
    for p in [1.5, 2.0, 3.0] {
        let sol = ExactSolution::barenblatt(p, 1).unwrap();
        let z = zeta_barenblatt(p).unwrap();
        let t0 = 1.0;
        let t_end = 2.0;
        let r_outer = sol.tail_radius(t_end, 1e-16);
        let m = ModelManifold::euclidean(1).unwrap();
        let grid = RadialGrid::new(&m, 0.0, r_outer, 512).map_err(|e| e.to_string())?;
        let exact = Trace::from_exact(&sol, &grid, t0, &[1.5, 2.0]).map_err(|e| e.to_string())?;
        let fit = sharpness_fit(&exact, 1, (1.0, 2.0), 1e-12).map_err(|e| e.to_string())?;
        ensure(rel(fit.slope, z) <= 1e-10, || {
            format!("p={p}: exact slope {}", fit.slope)
        })?;
        let u0 = Field::from_exact(&grid, &sol, t0).map_err(|e| e.to_string())?;
        let times = [1.25, 1.5, 1.75, 2.0];
        let trace =
            run(&u0, t_end, &times, &grid, &SolverConfig::new(p)).map_err(|f| f.to_string())?;
        let fit = sharpness_fit(&trace, 1, (1.25, 2.0), 1e-12).map_err(|e| e.to_string())?;
        ensure(fit.report.passed(), || {
            format!("p={p}: slope {:.5} vs zeta_b {z:.5}", fit.slope)
        })?;
        summary.push(format!("p={p} slope {:.4}/{z:.4}", fit.slope));
    }
    Ok(summary.join("; "))
}

fn criterion_8() -> Outcome {
    let p = 2.0;
    let z = zeta_barenblatt(p).unwrap();
    let sigmas: Vec<f64> = (0..=16).map(|k| 0.25 * k as f64).collect();
    let times = [1.0, 1.5, 2.0, 3.0, 4.0];
    let m = ModelManifold::euclidean(1).unwrap();
    let sol = ExactSolution::barenblatt(p, 1).unwrap();
    let grid = RadialGrid::new(&m, 0.0, 40.0, 4000).map_err(|e| e.to_string())?;
    let exact = Trace::from_exact(&sol, &grid, 0.5, &times).map_err(|e| e.to_string())?;
    let num_times = [2.0, 3.0, 4.0, 6.0, 8.0];
    let numeric = bump_run(p, 1, 1.0, 40.0, 800, 8.0, &num_times)?;
    let mut summary = Vec::new();
    for (label, trace, a, ts) in [
        ("exact", &exact, 0.0, &times[..]),
        ("bump", &numeric, 1.0, &num_times[..]),
    ] {
        let opts = |c| EnvelopeOptions {
            c_exp: c,
            mode: EnvelopeMode::FaberKrahn,
            sigmas: sigmas.clone(),
            times: ts.to_vec(),
        };
        let good =
            check_subgaussian_envelope(trace, a, &opts(z / 2.0)).map_err(|e| e.to_string())?;
        ensure(good.report.passed(), || {
            format!(
                "{label}: c=zeta/2 C_report={:e} window ratio {}",
                good.c_report, good.window_ratio
            )
        })?;
        let bad =
            check_subgaussian_envelope(trace, a, &opts(2.0 * z)).map_err(|e| e.to_string())?;
        ensure(bad.growth > 10.0, || {
            format!("{label}: c=2 zeta growth only {}", bad.growth)
        })?;
        summary.push(format!(
            "{label}: C_report {:.3} (x{:.3}), control growth {:.1}",
            good.c_report, good.window_ratio, bad.growth
        ));
    }
    Ok(summary.join("; "))
}

fn criterion_9() -> Outcome {
    let p = 2.0;
    let lambda = 2.0;
    let sol = ExactSolution::barenblatt(p, 1).unwrap();
    let m = ModelManifold::euclidean(1).unwrap();
    let t0 = 1.0;
    let t_end = 17.0;
    let mut times: Vec<f64> = (1..=160).map(|k| t0 + 0.1 * k as f64).collect();
    times[159] = t_end;
    let r_outer = sol.tail_radius(t_end, 1e-16);
    let mut traces = Vec::new();
    for cells in [128, 256, 512] {
        let grid = RadialGrid::new(&m, 0.0, r_outer, cells).map_err(|e| e.to_string())?;
        let u0 = Field::from_exact(&grid, &sol, t0).map_err(|e| e.to_string())?;
        traces.push(
            run(&u0, t_end, &times, &grid, &SolverConfig::new(p)).map_err(|f| f.to_string())?,
        );
    }
    let refs: Vec<&Trace> = traces.iter().collect();
    let (ratios, report) = check_mean_value_scaleinv(&refs, lambda, t0, &[1.0, 4.0, 16.0], 4.0)
        .map_err(|e| e.to_string())?;
    let hi = ratios.iter().copied().fold(f64::MIN, f64::max);
    let lo = ratios.iter().copied().fold(f64::MAX, f64::min);
    ensure(report.passed(), || {
        format!("ratios span x{:.3}: {ratios:?}", hi / lo)
    })?;
    Ok(format!(
        "9 ratios in [{lo:.4}, {hi:.4}], band x{:.3}",
        hi / lo
    ))
}

fn criterion_10() -> Outcome {
    let exe = env!("CARGO_BIN_EXE_trudinger");
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = dir.path().join("config.json");
    std::fs::write(
        &config,
        r#"{
  "p": 2,
  "n": 1,
  "manifold": {"kind": "euclidean"},
  "grid": {"r_max": 20, "cells": 200},
  "time": {"t0": 0, "t_end": 4, "snapshots": 20},
  "initial": {"kind": "bump", "a": 1},
  "lambda": 2,
  "region": {"a": 1, "rho": "auto"},
  "checks": ["mass", "nonnegative", "lambda_monotone", "radial_monotone", "max_principle",
             "davies_gaffney", "neighborhood_decay", "envelope"],
  "envelope": {"mode": "fk"}
}
"#,
    )
    .map_err(|e| e.to_string())?;
    let outputs: Vec<PathBuf> = ["out_a", "out_b"]
        .iter()
        .map(|d| dir.path().join(d))
        .collect();
    for out in &outputs {
        let status = Command::new(exe)
            .arg("run")
            .arg(&config)
            .env("TRUDINGER_OUT", out)
            .output()
            .map_err(|e| e.to_string())?;
        ensure(status.status.code() == Some(0), || {
            format!(
                "run exited with {:?}: {}",
                status.status.code(),
                String::from_utf8_lossy(&status.stderr)
            )
        })?;
    }
    let mut bytes = 0;
    for name in ["trace.csv", "norms.csv", "checks.csv", "summary.txt"] {
        let a = std::fs::read(outputs[0].join(name)).map_err(|e| format!("{name}: {e}"))?;
        let b = std::fs::read(outputs[1].join(name)).map_err(|e| format!("{name}: {e}"))?;
        ensure(a == b, || format!("{name} differs between runs"))?;
        bytes += a.len();
    }
    Ok(format!("4 output files byte-identical ({bytes} bytes)"))
}

fn main() {
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    type Criterion = (u32, &'static str, fn() -> Outcome);
    let criteria: [Criterion; 10] = [
        (1, "constants exactness", criterion_1),
        (2, "iteration lemma property suite", criterion_2),
        (3, "exact-solution residual oracle", criterion_3),
        (4, "solver convergence", criterion_4),
        (5, "inequality suite on numerical traces", criterion_5),
        (6, "decay exponent", criterion_6),
        (7, "sharpness of the exponent", criterion_7),
        (8, "envelope control pair", criterion_8),
        (9, "mean-value scale invariance", criterion_9),
        (10, "determinism", criterion_10),
    ];
    let selected: Vec<_> = criteria
        .iter()
        .filter(|(id, _, _)| filter.is_empty() || filter.iter().any(|f| f == &id.to_string()))
        .collect();
    let outcomes: Vec<(Outcome, f64)> = std::thread::scope(|s| {
        let handles: Vec<_> = selected
            .iter()
            .map(|(_, _, f)| {
                s.spawn(move || {
                    let start = Instant::now();
                    let out =
                        std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".to_string()));
                    (out, start.elapsed().as_secs_f64())
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let mut failed = 0;
    for ((id, name, _), (out, secs)) in selected.iter().zip(outcomes) {
        match out {
            Ok(detail) => println!("criterion {id:>2} PASS  {name} [{secs:.1}s]: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {id:>2} FAIL  {name} [{secs:.1}s]: {detail}");
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        selected.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
