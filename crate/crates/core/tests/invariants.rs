use proptest::prelude::*;
use trudinger::constants::{
    c2_over_c1_closed_form, caccioppoli_formula, geometric_decay_bound, iteration_bound,
    lambda_threshold, ln_iteration_bound, zeta_davies_gaffney, IterationParams,
};
use trudinger::solver::run;
use trudinger::verify::{
    check_lambda_monotone, check_mass, check_nonnegative, check_radial_monotone, lp_norm,
};
use trudinger::{ExactSolution, Field, ModelManifold, RadialGrid, SolverConfig};

fn bump_run(p: f64, n: u32, a: f64, power: f64, t_end: f64) -> trudinger::Trace {
    let m = ModelManifold::euclidean(n).unwrap();
    let grid = RadialGrid::new(&m, 0.0, 8.0, 64).unwrap();
    let u0 = Field::from_fn(&grid, 0.0, |r| (1.0 - (r / a).powi(2)).max(0.0).powf(power)).unwrap();
    let mut times: Vec<f64> = (1..6).map(|k| t_end * k as f64 / 6.0).collect();
    times.push(t_end);
    run(&u0, t_end, &times, &grid, &SolverConfig::new(p)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn solver_conserves_mass_and_sign(
        p in 1.4f64..3.5,
        n in 1u32..4,
        a in 0.5f64..3.0,
        power in 1.0f64..4.0,
        t_end in 0.05f64..0.6,
    ) {
        let trace = bump_run(p, n, a, power, t_end);
        let mass = check_mass(&trace);
        prop_assert!(mass.passed(), "{}", mass.summary_line());
        let sign = check_nonnegative(&trace);
        prop_assert!(sign.passed(), "{}", sign.summary_line());
    }

    #[test]
    fn solver_preserves_radial_monotonicity_and_norm_decay(
        p in 1.5f64..3.0,
        n in 1u32..4,
        a in 0.5f64..3.0,
        t_end in 0.05f64..0.6,
    ) {
        let trace = bump_run(p, n, a, 2.0, t_end);
        let radial = check_radial_monotone(&trace);
        prop_assert!(radial.passed(), "{}", radial.summary_line());
        let norms = check_lambda_monotone(&trace, &[1.0, 2.0, 3.0, f64::INFINITY], 1e-6).unwrap();
        prop_assert!(norms.passed(), "{}", norms.summary_line());
    }

    #[test]
    fn sup_norm_never_increases_per_step(p in 1.5f64..3.0, a in 0.3f64..2.0) {
        let trace = bump_run(p, 1, a, 2.0, 0.2);
        let grid = &trace.grid;
        let sups: Vec<f64> = trace.slices().map(|f| lp_norm(f, grid, f64::INFINITY)).collect();
        for w in sups.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-12));
        }
    }

    #[test]
    fn constant_ratio_identity(p in 1.1f64..6.0, excess in 0.0f64..4.0) {
        let lambda = lambda_threshold(p) + excess;
        let (c1, c2) = caccioppoli_formula(p, lambda).unwrap();
        prop_assert!(c1 > 0.0 && c2 > 0.0);
        let closed = c2_over_c1_closed_form(p, lambda);
        prop_assert!(((c2 / c1) - closed).abs() <= 1e-12 * closed);
        prop_assert!(zeta_davies_gaffney(p, lambda).unwrap() > 0.0);
    }

    #[test]
    fn geometric_bound_dominates_iteration(
        a in 1.01f64..4.0,
        theta in 0.5f64..4.0,
        omega in 0.1f64..2.0,
        j0 in 1e-8f64..1e-2,
        k in 0u32..40,
    ) {
        let params = IterationParams::new(a, theta, omega, j0).unwrap();
        if let Some(geo) = geometric_decay_bound(&params, k) {
            let it = iteration_bound(&params, k);
            prop_assert!(it <= geo * (1.0 + 1e-9), "k={k} it={it} geo={geo}");
        }
    }

    #[test]
    fn extremal_sequence_meets_closed_form(
        a in 1.01f64..4.0,
        theta in 0.5f64..4.0,
        omega in 0.1f64..2.0,
        j0 in 1e-6f64..1.0,
    ) {
        let params = IterationParams::new(a, theta, omega, j0).unwrap();
        let mut ln_j = j0.ln();
        for k in 0u32..12 {
            let bound = ln_iteration_bound(&params, k);
            prop_assert!(ln_j <= bound + 1e-9 * (1.0 + bound.abs()), "k={k}");
            ln_j = k as f64 * a.ln() - theta.ln() + (1.0 + omega) * ln_j;
        }
    }

    #[test]
    fn barenblatt_mass_is_time_invariant(p in 1.4f64..4.0, n in 1u32..4, t in 0.2f64..5.0) {
        let m = ModelManifold::euclidean(n).unwrap();
        let sol = ExactSolution::barenblatt(p, n).unwrap();
        let m0 = sol.lp_integral(&m, 1.0, 1.0).unwrap();
        let mt = sol.lp_integral(&m, 1.0, t).unwrap();
        prop_assert!((mt - m0).abs() <= 1e-8 * m0);
    }

    #[test]
    fn shell_volumes_add_up(
        alpha in 1.0f64..3.0,
        c in 0.5f64..3.0,
        lo in 0.0f64..2.0,
        w1 in 0.01f64..3.0,
        w2 in 0.01f64..3.0,
    ) {
        let m = ModelManifold::polynomial(3, c, alpha, 0.0).unwrap();
        let whole = m.shell_volume(lo, lo + w1 + w2).unwrap();
        let parts = m.shell_volume(lo, lo + w1).unwrap() + m.shell_volume(lo + w1, lo + w1 + w2).unwrap();
        prop_assert!((whole - parts).abs() <= 1e-10 * whole.max(1e-300));
    }
}
