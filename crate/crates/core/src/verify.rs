//! Numerical checks of the integral estimates along traces.
//!
//! Every check evaluates both sides of one inequality and returns
//! [`CheckResult`] rows. Checks whose statement only asserts the existence of a
//! constant fit the smallest admissible constant and then test its stability
//! when the time window is enlarged.

use crate::constants::{
    caccioppoli_constants, check_lambda, epsilon_iteration, zeta_barenblatt, zeta_davies_gaffney,
};
use crate::error::{Error, Result};
use crate::geometry::{RadialSet, Region};
use crate::solver::{Field, RadialGrid, Trace};
use std::fmt::Write as _;

/// Relative tolerance of the monotonicity and inequality checks.
pub const DEFAULT_TOL: f64 = 1e-6;
/// Relative tolerance of the discrete mass balance.
pub const MASS_TOL: f64 = 1e-10;
/// Absolute slack for negative values and radial monotonicity.
pub const ROUNDING_SLACK: f64 = 1e-12;

/// One evaluated inequality instance.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub t: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub pass: bool,
    pub tol: f64,
    /// `key=value` pairs joined by `;`.
    pub context: String,
}

impl CheckResult {
    /// `lhs <= rhs (1 + tol)`.
    pub fn relative(name: &str, t: f64, lhs: f64, rhs: f64, tol: f64, context: String) -> Self {
        let pass = lhs.is_finite() && rhs.is_finite() && lhs <= rhs * (1.0 + tol);
        Self {
            name: name.to_string(),
            t,
            lhs,
            rhs,
            margin: rhs - lhs,
            pass,
            tol,
            context,
        }
    }

    /// `lhs <= rhs` with `rhs` already an absolute bound.
    pub fn absolute(name: &str, t: f64, lhs: f64, rhs: f64, context: String) -> Self {
        Self::relative(name, t, lhs, rhs, 0.0, context)
    }
}

/// All rows of one check family plus its fitted constants.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CheckReport {
    pub name: String,
    pub results: Vec<CheckResult>,
    /// Set when the check could not run; the reason is recorded instead of rows.
    pub skipped: Option<String>,
    pub fitted: Vec<(String, f64)>,
}

impl CheckReport {
    pub fn new(name: &str) -> Self {
        Self {
            name: name.to_string(),
            ..Self::default()
        }
    }

    pub fn skipped(name: &str, reason: impl Into<String>) -> Self {
        Self {
            name: name.to_string(),
            skipped: Some(reason.into()),
            ..Self::default()
        }
    }

    /// No failed row. A skipped check has no rows and does not fail.
    pub fn passed(&self) -> bool {
        self.results.iter().all(|r| r.pass)
    }

    pub fn failures(&self) -> usize {
        self.results.iter().filter(|r| !r.pass).count()
    }

    /// One line for `summary.txt`.
    pub fn summary_line(&self) -> String {
        let mut line = format!("{}: ", self.name);
        match &self.skipped {
            Some(reason) => {
                let _ = write!(line, "skipped ({reason})");
            }
            None => {
                let passed = self.results.len() - self.failures();
                let _ = write!(
                    line,
                    "{} {}/{} passed",
                    if self.passed() { "PASS" } else { "FAIL" },
                    passed,
                    self.results.len()
                );
                for (k, v) in &self.fitted {
                    let _ = write!(line, "; {k}={v:.6e}");
                }
            }
        }
        line
    }
}

/// Builds a `key=value;...` context string.
pub fn context(pairs: &[(&str, f64)]) -> String {
    pairs
        .iter()
        .map(|(k, v)| format!("{k}={v}"))
        .collect::<Vec<_>>()
        .join(";")
}

/// `∫ u^λ dμ` over `region` (whole domain if `None`); cells straddling the
/// region boundary contribute in proportion to the overlapped measure.
/// `λ = ∞` is not an integral; use [`lp_norm`].
pub fn weighted_lp(
    field: &Field,
    grid: &RadialGrid,
    lambda: f64,
    region: Option<&RadialSet>,
) -> f64 {
    let pow = |u: f64| {
        if lambda == 1.0 {
            u
        } else if lambda == 2.0 {
            u * u
        } else {
            u.powf(lambda)
        }
    };
    match region {
        None => field
            .values
            .iter()
            .zip(grid.measures())
            .map(|(&u, m)| m * pow(u))
            .sum(),
        Some(set) => field
            .values
            .iter()
            .enumerate()
            .filter(|(_, &u)| u > 0.0)
            .map(|(i, &u)| grid.overlap_measure(i, set) * pow(u))
            .sum(),
    }
}

/// `‖u‖_{L^λ}` with respect to the model measure; `λ = ∞` gives the maximum.
pub fn lp_norm(field: &Field, grid: &RadialGrid, lambda: f64) -> f64 {
    if lambda.is_infinite() {
        field.max()
    } else {
        weighted_lp(field, grid, lambda, None).powf(1.0 / lambda)
    }
}

/// [`weighted_lp`] at the trace slice recorded at time `t`.
pub fn weighted_lp_at(
    trace: &Trace,
    lambda: f64,
    region: Option<&RadialSet>,
    t: f64,
) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(Error::Precondition(format!(
            "lambda must be > 0, got {lambda}"
        )));
    }
    Ok(weighted_lp(trace.field_at(t)?, &trace.grid, lambda, region))
}

/// Largest `u` over cells whose centers lie in `[x_r - radius, x_r + radius]`.
pub fn sup_over_ball(field: &Field, grid: &RadialGrid, x_r: f64, radius: f64) -> Result<f64> {
    let (lo, hi) = (x_r - radius, x_r + radius);
    let mut best: Option<f64> = None;
    for (&r, &u) in grid.centers().iter().zip(&field.values) {
        if r >= lo && r <= hi {
            best = Some(best.map_or(u, |b: f64| b.max(u)));
        }
    }
    best.ok_or_else(|| {
        Error::Domain(format!(
            "ball [{lo}, {hi}] contains no cell center of the grid [{}, {}]",
            grid.r_inner(),
            grid.r_outer()
        ))
    })
}

/// Discrete mass balance of every slice against the initial slice.
pub fn check_mass(trace: &Trace) -> CheckReport {
    let mut report = CheckReport::new("mass");
    let m0 = trace.initial.mass(&trace.grid);
    for f in &trace.snapshots {
        let drift = (f.mass(&trace.grid) - m0).abs();
        report.results.push(CheckResult::absolute(
            "mass",
            f.t,
            drift,
            MASS_TOL * m0,
            context(&[("mass0", m0)]),
        ));
    }
    report
}

/// `min u >= -1e-12` on every slice; reports the solver's clip count.
pub fn check_nonnegative(trace: &Trace) -> CheckReport {
    let mut report = CheckReport::new("nonnegative");
    for f in trace.slices() {
        report.results.push(CheckResult::absolute(
            "nonnegative",
            f.t,
            -f.min(),
            ROUNDING_SLACK,
            context(&[("clipped", trace.clipped as f64)]),
        ));
    }
    report.fitted.push(("clipped".into(), trace.clipped as f64));
    report
}

/// `‖u(t)‖_{L^λ}` is non-increasing between consecutive slices for each λ.
pub fn check_lambda_monotone(trace: &Trace, lambdas: &[f64], tol: f64) -> Result<CheckReport> {
    if let Some(l) = lambdas.iter().find(|l| !(**l >= 1.0)) {
        return Err(Error::Precondition(format!(
            "norm exponents must be >= 1, got {l}"
        )));
    }
    let mut report = CheckReport::new("lambda_monotone");
    for &lambda in lambdas {
        let norms: Vec<(f64, f64)> = trace
            .slices()
            .map(|f| (f.t, lp_norm(f, &trace.grid, lambda)))
            .collect();
        for w in norms.windows(2) {
            report.results.push(CheckResult::relative(
                "lambda_monotone",
                w[1].0,
                w[1].1,
                w[0].1,
                tol,
                context(&[("lambda", lambda)]),
            ));
        }
    }
    Ok(report)
}

/// If the initial slice is non-increasing in `r`, every slice stays so.
pub fn check_radial_monotone(trace: &Trace) -> CheckReport {
    let rise = |f: &Field| {
        f.values
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0f64, f64::max)
    };
    if rise(&trace.initial) > ROUNDING_SLACK {
        return CheckReport::skipped("radial_monotone", "initial data is not non-increasing in r");
    }
    let mut report = CheckReport::new("radial_monotone");
    for f in &trace.snapshots {
        report.results.push(CheckResult::absolute(
            "radial_monotone",
            f.t,
            rise(f),
            ROUNDING_SLACK,
            String::new(),
        ));
    }
    report
}

/// A space-time weight `ξ(r, τ)` for the integral maximum principle.
pub trait SpaceTimeWeight {
    fn value(&self, r: f64, tau: f64) -> f64;

    /// `(∂τ ξ, ∂r ξ)`; defaults to centered differences.
    fn partials(&self, r: f64, tau: f64) -> (f64, f64) {
        let ht = 1e-6 * tau.abs().max(1.0);
        let hr = 1e-6 * r.abs().max(1.0);
        let dt = (self.value(r, tau + ht) - self.value(r, tau - ht)) / (2.0 * ht);
        let dr = (self.value(r + hr, tau) - self.value(r - hr, tau)) / (2.0 * hr);
        (dt, dr)
    }

    fn describe(&self) -> String {
        String::new()
    }
}

/// `ξ ≡ 0`.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroWeight;

impl SpaceTimeWeight for ZeroWeight {
    fn value(&self, _r: f64, _tau: f64) -> f64 {
        0.0
    }

    fn partials(&self, _r: f64, _tau: f64) -> (f64, f64) {
        (0.0, 0.0)
    }

    fn describe(&self) -> String {
        "zero".into()
    }
}

/// Arbitrary weight given as a closure; derivatives by centered differences.
pub struct FnWeight<F: Fn(f64, f64) -> f64>(pub F);

impl<F: Fn(f64, f64) -> f64> SpaceTimeWeight for FnWeight<F> {
    fn value(&self, r: f64, tau: f64) -> f64 {
        (self.0)(r, tau)
    }

    fn describe(&self) -> String {
        "closure".into()
    }
}

/// `ξ(r, τ) = -ζ (max(0, a + ρ - r) / (s - τ)^{1/p})^{p/(p-1)}` for `τ < s`.
#[derive(Debug, Clone, PartialEq)]
pub struct DaviesGaffneyWeight {
    pub zeta: f64,
    pub region: Region,
    pub s: f64,
    pub p: f64,
}

impl DaviesGaffneyWeight {
    /// The weight with the sharp exponent `ζ_dg(p, λ)`.
    pub fn new(p: f64, lambda: f64, region: Region, s: f64) -> Result<Self> {
        Ok(Self {
            zeta: zeta_davies_gaffney(p, lambda)?,
            region,
            s,
            p,
        })
    }

    fn distance(&self, r: f64) -> f64 {
        self.region.distance_to_neighborhood_complement(r)
    }
}

impl SpaceTimeWeight for DaviesGaffneyWeight {
    fn value(&self, r: f64, tau: f64) -> f64 {
        let d = self.distance(r);
        if d == 0.0 {
            return 0.0;
        }
        let pp = self.p / (self.p - 1.0);
        -self.zeta * (d / (self.s - tau).powf(1.0 / self.p)).powf(pp)
    }

    fn partials(&self, r: f64, tau: f64) -> (f64, f64) {
        let d = self.distance(r);
        if d == 0.0 {
            return (0.0, 0.0);
        }
        let q = 1.0 / (self.p - 1.0);
        let pp = self.p * q;
        let rem = self.s - tau;
        // ξ = -ζ d^{p'} (s-τ)^{-q}
        let dtau = -self.zeta * q * d.powf(pp) * rem.powf(-q - 1.0);
        let dr = self.zeta * pp * d.powf(pp - 1.0) * rem.powf(-q);
        (dtau, dr)
    }

    fn describe(&self) -> String {
        context(&[
            ("zeta", self.zeta),
            ("a", self.region.a),
            ("rho", self.region.rho),
            ("s", self.s),
        ])
    }
}

/// Checks `ξ <= 0` and `∂τξ + c₂ 2^{p-1} p^{-p} |∂rξ|^p <= 0` at every node of
/// the trace (cell centers times slice times), up to `1e-10 (1 + |∂τξ|)`.
pub fn audit_weight(trace: &Trace, lambda: f64, weight: &dyn SpaceTimeWeight) -> Result<()> {
    let p = trace.p;
    let (_, c2) = caccioppoli_constants(p, lambda)?;
    let k = c2 * 2f64.powf(p - 1.0) * p.powf(-p);
    for f in trace.slices() {
        for &r in trace.grid.centers() {
            let xi = weight.value(r, f.t);
            if !(xi <= 0.0) {
                return Err(Error::Configuration(format!(
                    "weight is not non-positive: xi({r}, {}) = {xi}",
                    f.t
                )));
            }
            let (dt, dr) = weight.partials(r, f.t);
            let h = dt + k * dr.abs().powf(p);
            if !(h <= 1e-10 * (1.0 + dt.abs())) {
                return Err(Error::Configuration(format!(
                    "weight violates the Hamilton-Jacobi condition at r = {r}, t = {}: {h:e}",
                    f.t
                )));
            }
        }
    }
    Ok(())
}

/// `J(t) = ∫ u^λ e^{ξ(·, t)} dμ` is non-increasing along the trace.
pub fn check_integral_max_principle(
    trace: &Trace,
    lambda: f64,
    weight: &dyn SpaceTimeWeight,
    tol: f64,
) -> Result<CheckReport> {
    check_lambda(trace.p, lambda)?;
    audit_weight(trace, lambda, weight)?;
    let grid = &trace.grid;
    let j: Vec<(f64, f64)> = trace
        .slices()
        .map(|f| {
            let v = f
                .values
                .iter()
                .zip(grid.centers())
                .zip(grid.measures())
                .map(|((&u, &r), m)| m * u.powf(lambda) * weight.value(r, f.t).exp())
                .sum();
            (f.t, v)
        })
        .collect();
    let mut report = CheckReport::new("max_principle");
    let ctx = format!("lambda={lambda};{}", weight.describe());
    for w in j.windows(2) {
        report.results.push(CheckResult::relative(
            "max_principle",
            w[1].0,
            w[1].1,
            w[0].1,
            tol,
            ctx.clone(),
        ));
    }
    Ok(report)
}

/// Right-hand side of the Davies-Gaffney bound at elapsed time `tau`:
/// `∫_{Aᶜ} u0^λ + exp(-ζ (r/τ^{1/p})^{p/(p-1)}) ∫_A u0^λ`.
pub fn davies_gaffney_rhs(trace: &Trace, lambda: f64, a: f64, r: f64, tau: f64) -> Result<f64> {
    let p = trace.p;
    let zeta = zeta_davies_gaffney(p, lambda)?;
    let region = Region::new(a, 0.0)?;
    let outside = weighted_lp(
        &trace.initial,
        &trace.grid,
        lambda,
        Some(&region.complement()),
    );
    let inside = weighted_lp(&trace.initial, &trace.grid, lambda, Some(&region.set()));
    let x = r / tau.powf(1.0 / p);
    Ok(outside + (-zeta * x.powf(p / (p - 1.0))).exp() * inside)
}

/// `∫_{A_rᶜ} u^λ(t) <= RHS(r, t - t0)` for `A = B(o, a)` and every snapshot,
/// with `r = k (t - t0)^{1/p}` for each `k` in `scaled_radii`.
pub fn check_davies_gaffney(
    trace: &Trace,
    lambda: f64,
    a: f64,
    scaled_radii: &[f64],
    tol: f64,
) -> Result<CheckReport> {
    check_lambda(trace.p, lambda)?;
    if let Some(k) = scaled_radii.iter().find(|k| !(**k > 0.0)) {
        return Err(Error::Precondition(format!(
            "radius ratios must be > 0, got {k}"
        )));
    }
    let mut report = CheckReport::new("davies_gaffney");
    let t0 = trace.t0();
    for f in &trace.snapshots {
        let tau = f.t - t0;
        for &k in scaled_radii {
            let r = k * tau.powf(1.0 / trace.p);
            let outside = Region::new(a, r)?.neighborhood_complement();
            let lhs = weighted_lp(f, &trace.grid, lambda, Some(&outside));
            let rhs = davies_gaffney_rhs(trace, lambda, a, r, tau)?;
            report.results.push(CheckResult::relative(
                "davies_gaffney",
                f.t,
                lhs,
                rhs,
                tol,
                context(&[("lambda", lambda), ("a", a), ("r", r), ("ratio", k)]),
            ));
        }
    }
    Ok(report)
}

/// `γ(t) = t^e / C_γ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularFunctionSpec {
    pub c_gamma: f64,
    pub exponent: f64,
}

impl RegularFunctionSpec {
    pub fn new(c_gamma: f64, exponent: f64) -> Result<Self> {
        if !(c_gamma > 0.0) || !c_gamma.is_finite() || !(exponent >= 0.0) {
            return Err(Error::Precondition(format!(
                "regular function needs C > 0 and e >= 0, got C = {c_gamma}, e = {exponent}"
            )));
        }
        Ok(Self { c_gamma, exponent })
    }

    pub fn eval(&self, t: f64) -> f64 {
        t.powf(self.exponent) / self.c_gamma
    }

    /// `Θ = θ^e`, after checking monotonicity and `γ(θt) <= Θ γ(t)` on
    /// 61 log-spaced points over six decades.
    pub fn growth_certificate(&self, theta: f64) -> Result<f64> {
        if !(theta > 1.0) {
            return Err(Error::Precondition(format!(
                "theta must exceed 1, got {theta}"
            )));
        }
        let big_theta = theta.powf(self.exponent);
        let ts: Vec<f64> = (0..=60)
            .map(|i| 10f64.powf(-3.0 + i as f64 / 10.0))
            .collect();
        for w in ts.windows(2) {
            if self.eval(w[1]) < self.eval(w[0]) {
                return Err(Error::Precondition(
                    "regular function is not increasing".into(),
                ));
            }
        }
        for &t in &ts {
            if self.eval(theta * t) > big_theta * self.eval(t) * (1.0 + 1e-12) {
                return Err(Error::Precondition(format!(
                    "growth bound fails at t = {t} for theta = {theta}"
                )));
            }
        }
        Ok(big_theta)
    }

    /// Smallest `C_γ` with `∫_{A_ρ} u^λ(t) <= 1/γ(t)` over every snapshot, with
    /// `t` measured from the initial slice.
    pub fn fit(
        trace: &Trace,
        lambda: f64,
        neighborhood: &RadialSet,
        exponent: f64,
    ) -> Result<Self> {
        let t0 = trace.t0();
        let c = trace
            .snapshots
            .iter()
            .map(|f| {
                (f.t - t0).powf(exponent) * weighted_lp(f, &trace.grid, lambda, Some(neighborhood))
            })
            .fold(0.0, f64::max);
        if !(c > 0.0) {
            return Err(Error::InsufficientData(
                "solution vanishes on the neighborhood at every snapshot".into(),
            ));
        }
        Self::new(c, exponent)
    }
}

/// Options of [`check_neighborhood_decay`].
#[derive(Debug, Clone, PartialEq)]
pub struct DecayOptions {
    pub theta: f64,
    /// Replaces the iteration `ε(θ, p, λ)`; used for controls.
    pub epsilon: Option<f64>,
    /// Log2-octaves below the regime edge in the short and the doubled window.
    pub octaves: (u32, u32),
    pub tol: f64,
}

impl Default for DecayOptions {
    fn default() -> Self {
        Self {
            theta: 2.0,
            epsilon: None,
            octaves: (3, 6),
            tol: DEFAULT_TOL,
        }
    }
}

/// Tail decay outside `A_ρ`:
/// `∫_{A_ρᶜ} u^λ(t) <= (C_fit/γ(t)) exp(-ε (ρ/t^{1/p})^{p/(p-1)})` for `t^{1/p} <= ρ`
/// (`t` elapsed since the initial slice). `C_fit` is the smallest constant making
/// all in-regime snapshots pass; the check also requires `C_fit` on the doubled
/// window to stay within a factor 2 of `C_fit` on the short window.
pub fn check_neighborhood_decay(
    trace: &Trace,
    lambda: f64,
    region: &Region,
    gamma: &RegularFunctionSpec,
    opts: &DecayOptions,
) -> Result<CheckReport> {
    const NAME: &str = "neighborhood_decay";
    let p = trace.p;
    check_lambda(p, lambda)?;
    if !(region.rho > 0.0) {
        return Err(Error::Precondition(
            "neighborhood decay needs rho > 0".into(),
        ));
    }
    gamma.growth_certificate(opts.theta)?;
    let eps = match opts.epsilon {
        Some(e) => e,
        None => epsilon_iteration(opts.theta, p, lambda)?.value,
    };
    let t0 = trace.t0();
    let inner = region.neighborhood();
    let outer = region.neighborhood_complement();
    for f in &trace.snapshots {
        let tau = f.t - t0;
        let held = weighted_lp(f, &trace.grid, lambda, Some(&inner));
        if held > (1.0 + opts.tol) / gamma.eval(tau) {
            return Ok(CheckReport::skipped(
                NAME,
                format!("hypothesis on the neighborhood fails at t = {}", f.t),
            ));
        }
    }
    let pp = p / (p - 1.0);
    let rho = region.rho;
    // (t, tau, lhs, lhs γ e^{ε x^{p'}})
    let rows: Vec<(f64, f64, f64, f64)> = trace
        .snapshots
        .iter()
        .filter(|f| {
            let tau = f.t - t0;
            tau > 0.0 && tau.powf(1.0 / p) <= rho
        })
        .map(|f| {
            let tau = f.t - t0;
            let lhs = weighted_lp(f, &trace.grid, lambda, Some(&outer));
            let x = rho / tau.powf(1.0 / p);
            (
                f.t,
                tau,
                lhs,
                lhs * gamma.eval(tau) * (eps * x.powf(pp)).exp(),
            )
        })
        .collect();
    let out_of_regime = trace.snapshots.len() - rows.len();
    let Some(tau_last) = rows.last().map(|r| r.1) else {
        return Ok(CheckReport::skipped(
            NAME,
            "no snapshot with t^{1/p} <= rho",
        ));
    };
    let edge = rho.powf(p).min(tau_last);
    let window_max = |octaves: u32| {
        let lo = edge / 2f64.powi(octaves as i32);
        rows.iter()
            .filter(|r| r.1 >= lo && r.1 <= edge)
            .map(|r| r.3)
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let c_short = window_max(opts.octaves.0);
    let c_long = window_max(opts.octaves.1);
    if c_short == f64::NEG_INFINITY {
        return Ok(CheckReport::skipped(
            NAME,
            "no snapshot in the short window",
        ));
    }
    let c_fit = rows.iter().map(|r| r.3).fold(0.0, f64::max);
    let mut report = CheckReport::new(NAME);
    let ctx = context(&[
        ("lambda", lambda),
        ("a", region.a),
        ("rho", rho),
        ("epsilon", eps),
        ("c_gamma", gamma.c_gamma),
        ("exponent", gamma.exponent),
    ]);
    for &(t, tau, lhs, _) in &rows {
        let x = rho / tau.powf(1.0 / p);
        let rhs = c_fit / gamma.eval(tau) * (-eps * x.powf(pp)).exp();
        report.results.push(CheckResult::relative(
            NAME,
            t,
            lhs,
            rhs,
            opts.tol,
            ctx.clone(),
        ));
    }
    let ratio = if c_long == 0.0 && c_short == 0.0 {
        1.0
    } else {
        c_long / c_short
    };
    report.results.push(CheckResult::absolute(
        "neighborhood_decay_stability",
        t0 + edge,
        ratio,
        2.0,
        format!("{ctx};octaves={}/{}", opts.octaves.0, opts.octaves.1),
    ));
    report.fitted.push(("C_fit".into(), c_fit));
    report.fitted.push(("C_short".into(), c_short));
    report.fitted.push(("C_long".into(), c_long));
    report.fitted.push(("epsilon".into(), eps));
    report
        .fitted
        .push(("out_of_regime".into(), out_of_regime as f64));
    Ok(report)
}

/// Ordinary least squares `y = slope x + intercept`.
pub fn least_squares(xs: &[f64], ys: &[f64]) -> Result<(f64, f64)> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "least squares needs >= 2 paired points, got {}",
            xs.len().min(ys.len())
        )));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if !(sxx > 0.0) {
        return Err(Error::InsufficientData("abscissae are all equal".into()));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

/// Least-squares slope of `log ∫u^λ` against `log t` over the last decade of
/// snapshots (absolute time). Passes iff the slope is at most
/// `-(λ-1) n/p · 0.97`.
pub fn check_lambda_decay(
    trace: &Trace,
    lambda: f64,
    n: u32,
    p: f64,
) -> Result<(f64, CheckReport)> {
    let t_last = trace
        .snapshots
        .last()
        .map(|f| f.t)
        .ok_or_else(|| Error::InsufficientData("trace has no snapshots".into()))?;
    let window: Vec<&Field> = trace
        .snapshots
        .iter()
        .filter(|f| f.t > 0.0 && f.t >= t_last / 10.0 * (1.0 - 1e-12))
        .collect();
    if window.len() < 5 {
        return Err(Error::InsufficientData(format!(
            "last decade holds {} snapshots, need 5",
            window.len()
        )));
    }
    let xs: Vec<f64> = window.iter().map(|f| f.t.ln()).collect();
    let ys: Vec<f64> = window
        .iter()
        .map(|f| weighted_lp(f, &trace.grid, lambda, None).ln())
        .collect();
    let (slope, _) = least_squares(&xs, &ys)?;
    let predicted = -(lambda - 1.0) * n as f64 / p;
    let mut report = CheckReport::new("lambda_decay");
    // exact mass conservation at lambda = 1 leaves only rounding in the slope
    let bound = predicted * 0.97 + 1e-9;
    report.results.push(CheckResult::absolute(
        "lambda_decay",
        t_last,
        slope,
        bound,
        context(&[
            ("lambda", lambda),
            ("n", n as f64),
            ("p", p),
            ("predicted", predicted),
        ]),
    ));
    report.fitted.push(("slope".into(), slope));
    report.fitted.push(("predicted".into(), predicted));
    Ok((slope, report))
}

/// Result of [`sharpness_fit`].
#[derive(Debug, Clone, PartialEq)]
pub struct SharpnessFit {
    pub slope: f64,
    pub intercept: f64,
    pub points: usize,
    pub report: CheckReport,
}

/// Fits `-log(u t^{n/p})` against `(r/t^{1/p})^{p/(p-1)}` pooled over snapshots
/// with `t` in `[t_lo, t_hi]` and `u > u_floor_rel · max u`; passes iff the slope
/// is within 5% of `ζ_B(p)`.
pub fn sharpness_fit(
    trace: &Trace,
    n: u32,
    t_window: (f64, f64),
    u_floor_rel: f64,
) -> Result<SharpnessFit> {
    let p = trace.p;
    let zeta = zeta_barenblatt(p)?;
    let pp = p / (p - 1.0);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for f in trace
        .slices()
        .filter(|f| f.t >= t_window.0 && f.t <= t_window.1 && f.t > 0.0)
    {
        let floor = u_floor_rel * f.max();
        let scale = f.t.powf(n as f64 / p);
        let root = f.t.powf(1.0 / p);
        for (&r, &u) in trace.grid.centers().iter().zip(&f.values) {
            if u > floor && u > 0.0 {
                xs.push((r / root).powf(pp));
                ys.push(-(u * scale).ln());
            }
        }
    }
    if xs.len() < 10 {
        return Err(Error::InsufficientData(format!(
            "{} points above the floor, need 10",
            xs.len()
        )));
    }
    let (slope, intercept) = least_squares(&xs, &ys)?;
    let mut report = CheckReport::new("sharpness");
    let t = t_window
        .1
        .min(trace.snapshots.last().map_or(t_window.1, |f| f.t));
    report.results.push(CheckResult::absolute(
        "sharpness",
        t,
        (slope - zeta).abs(),
        0.05 * zeta,
        context(&[
            ("p", p),
            ("n", n as f64),
            ("slope", slope),
            ("zeta_b", zeta),
        ]),
    ));
    report.fitted.push(("slope".into(), slope));
    report.fitted.push(("intercept".into(), intercept));
    Ok(SharpnessFit {
        slope,
        intercept,
        points: xs.len(),
        report,
    })
}

/// Volume normalizer of the envelope statistic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvelopeMode {
    /// `μ(B(x, T^{1/p}))`.
    FaberKrahn,
    /// `T^{n/p}`.
    Sobolev,
}

/// Options of [`check_subgaussian_envelope`].
#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeOptions {
    pub c_exp: f64,
    pub mode: EnvelopeMode,
    /// Centers are `x = a + σ T^{1/p}`.
    pub sigmas: Vec<f64>,
    /// Must be snapshot times; windows are `[T0, 2T0]` and `(2T0, 4T0]`.
    pub times: Vec<f64>,
}

/// Envelope statistic over the `(σ, T)` sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeReport {
    pub c_report: f64,
    pub window_ratio: f64,
    /// Max of `N` over the upper half of the σ range over the max over the lower half.
    pub growth: f64,
    /// `(x, T, N)`.
    pub sweep: Vec<(f64, f64, f64)>,
    pub report: CheckReport,
}

/// `N(x, T) = sup_{B(x, T^{1/p}/2)} u(T) · V · exp(c (d(x, A)/T^{1/p})^{p/(p-1)})`
/// with `A = B(o, a)` and `V` from `mode`. `C_report = max N`; passes iff
/// `C_report` is finite and the maxima over the two time windows differ by less
/// than a factor 2. Times are absolute.
pub fn check_subgaussian_envelope(
    trace: &Trace,
    a: f64,
    opts: &EnvelopeOptions,
) -> Result<EnvelopeReport> {
    const NAME: &str = "envelope";
    let p = trace.p;
    let grid = &trace.grid;
    let m = grid.manifold();
    let n = m.dimension();
    if !(opts.c_exp > 0.0) {
        return Err(Error::Precondition(format!(
            "c_exp must be > 0, got {}",
            opts.c_exp
        )));
    }
    if opts.sigmas.len() < 2 || opts.times.is_empty() {
        return Err(Error::InsufficientData(
            "envelope sweep needs >= 2 sigmas and >= 1 time".into(),
        ));
    }
    let pp = p / (p - 1.0);
    let t_min = opts.times.iter().copied().fold(f64::INFINITY, f64::min);
    let mut sweep = Vec::new();
    let mut rows = Vec::new();
    for &t in &opts.times {
        let f = trace.field_at(t)?;
        let root = t.powf(1.0 / p);
        for &sigma in &opts.sigmas {
            let x = a + sigma * root;
            let sup = sup_over_ball(f, grid, x, 0.5 * root)?;
            let volume = match opts.mode {
                EnvelopeMode::Sobolev => t.powf(n as f64 / p),
                EnvelopeMode::FaberKrahn => {
                    if m.is_euclidean() {
                        m.off_pole_ball_volume(x, root)?
                    } else if x == 0.0 {
                        m.ball_volume_at_pole(root)?
                    } else {
                        return Err(Error::Unsupported(
                            "off-pole balls need a Euclidean manifold".into(),
                        ));
                    }
                }
            };
            let d = (x - a).max(0.0);
            let stat = sup * volume * (opts.c_exp * (d / root).powf(pp)).exp();
            sweep.push((x, t, stat));
            rows.push((sigma, t, stat));
        }
    }
    let c_report = sweep.iter().map(|s| s.2).fold(0.0, f64::max);
    let window = |lo: f64, hi: f64| {
        rows.iter()
            .filter(|r| r.1 >= lo * (1.0 - 1e-12) && r.1 <= hi * (1.0 + 1e-12))
            .map(|r| r.2)
            .fold(0.0, f64::max)
    };
    let w1 = window(t_min, 2.0 * t_min);
    let w2 = rows
        .iter()
        .filter(|r| r.1 > 2.0 * t_min * (1.0 + 1e-12) && r.1 <= 4.0 * t_min * (1.0 + 1e-12))
        .map(|r| r.2)
        .fold(0.0, f64::max);
    let window_ratio = if w1 > 0.0 && w2 > 0.0 {
        (w1 / w2).max(w2 / w1)
    } else {
        f64::INFINITY
    };
    let s_lo = opts.sigmas.iter().copied().fold(f64::INFINITY, f64::min);
    let s_hi = opts
        .sigmas
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let s_mid = 0.5 * (s_lo + s_hi);
    let half_max = |upper: bool| {
        rows.iter()
            .filter(|r| if upper { r.0 >= s_mid } else { r.0 < s_mid })
            .map(|r| r.2)
            .fold(0.0, f64::max)
    };
    let growth = half_max(true) / half_max(false);
    let ctx = context(&[("c_exp", opts.c_exp), ("a", a), ("p", p), ("n", n as f64)]);
    let mut report = CheckReport::new(NAME);
    for &(x, t, stat) in &sweep {
        report.results.push(CheckResult::absolute(
            NAME,
            t,
            stat,
            c_report,
            format!("{ctx};x={x}"),
        ));
    }
    report.results.push(CheckResult::absolute(
        "envelope_stability",
        4.0 * t_min,
        window_ratio,
        2.0,
        ctx.clone(),
    ));
    if let Some(last) = report.results.last_mut() {
        // the ratio must stay strictly below 2 and C_report must be finite
        last.pass = c_report.is_finite() && window_ratio < 2.0;
    }
    report.fitted.push(("C_report".into(), c_report));
    report.fitted.push(("window_ratio".into(), window_ratio));
    report.fitted.push(("growth".into(), growth));
    Ok(EnvelopeReport {
        c_report,
        window_ratio,
        growth,
        sweep,
        report,
    })
}

/// `ρ = c · max(d, C · R)`, after checking that a ball of radius `R` at
/// distance `d > C R` from `A` misses `A_ρ` and that `ρ >= R` otherwise.
pub fn auto_rho(d: f64, radius: f64, c: f64, big_c: f64) -> Result<f64> {
    if !(c > 0.0 && c < 1.0) || !(big_c > 0.0) || !(radius > 0.0) || !(d >= 0.0) {
        return Err(Error::Precondition(format!(
            "auto rho needs 0 < c < 1, C > 0, R > 0, d >= 0; got c = {c}, C = {big_c}, R = {radius}, d = {d}"
        )));
    }
    let rho = c * d.max(big_c * radius);
    let far = d > big_c * radius;
    if far && (1.0 - c) * d < radius {
        return Err(Error::Configuration(format!(
            "ball B(x, {radius}) at distance {d} meets A_rho with rho = {rho}"
        )));
    }
    if !far && rho < radius {
        return Err(Error::Configuration(format!(
            "rho = {rho} is smaller than the ball radius {radius}"
        )));
    }
    Ok(rho)
}

/// Scale-invariant mean-value ratio on the pole ball `B = B(o, T^{1/p})`:
/// `‖u‖_{L∞(Q′)} (T μ(B))^{1/λ} / ‖u‖_{L^λ(Q)}` with `Q = B × [t_b, t_b + T]`
/// and `Q′ = ½B × [t_b + (1 - 2^{-p}) T, t_b + T]`. The time integral uses the
/// trapezoid rule over the slices in `[t_b, t_b + T]`, which must include both ends.
pub fn mean_value_ratio(trace: &Trace, lambda: f64, t_base: f64, big_t: f64) -> Result<f64> {
    let p = trace.p;
    if !(lambda >= 1.0) || !lambda.is_finite() {
        return Err(Error::Precondition(format!(
            "lambda must be finite and >= 1, got {lambda}"
        )));
    }
    let grid = &trace.grid;
    let radius = big_t.powf(1.0 / p);
    let t_end = t_base + big_t;
    let tol = 1e-12 * t_end.abs().max(1.0);
    let slices: Vec<&Field> = trace
        .slices()
        .filter(|f| f.t >= t_base - tol && f.t <= t_end + tol)
        .collect();
    let covers = |t: f64| slices.iter().any(|f| (f.t - t).abs() <= tol);
    if slices.len() < 3 || !covers(t_base) || !covers(t_end) {
        return Err(Error::InsufficientData(format!(
            "need >= 3 slices in [{t_base}, {t_end}] including both ends, found {}",
            slices.len()
        )));
    }
    let inner_start = t_base + (1.0 - 2f64.powf(-p)) * big_t;
    let mut sup = None::<f64>;
    for f in slices.iter().filter(|f| f.t >= inner_start - tol) {
        let s = sup_over_ball(f, grid, 0.0, 0.5 * radius)?;
        sup = Some(sup.map_or(s, |b| b.max(s)));
    }
    let sup =
        sup.ok_or_else(|| Error::InsufficientData("no slice in the inner cylinder".into()))?;
    let ball = RadialSet::new(grid.r_inner(), radius);
    let mut integral = 0.0;
    for w in slices.windows(2) {
        let a = weighted_lp(w[0], grid, lambda, Some(&ball));
        let b = weighted_lp(w[1], grid, lambda, Some(&ball));
        integral += 0.5 * (w[1].t - w[0].t) * (a + b);
    }
    if !(integral > 0.0) {
        return Err(Error::InsufficientData(
            "solution vanishes on the cylinder".into(),
        ));
    }
    let volume = grid.manifold().ball_volume_at_pole(radius)?;
    Ok(sup * (big_t * volume).powf(1.0 / lambda) / integral.powf(1.0 / lambda))
}

/// One [`mean_value_ratio`] row per `(trace, T)` and a band check: the largest
/// ratio over the smallest must not exceed `band`.
pub fn check_mean_value_scaleinv(
    traces: &[&Trace],
    lambda: f64,
    t_base: f64,
    big_ts: &[f64],
    band: f64,
) -> Result<(Vec<f64>, CheckReport)> {
    const NAME: &str = "mean_value";
    let mut ratios = Vec::new();
    let mut report = CheckReport::new(NAME);
    let mut rows = Vec::new();
    for trace in traces {
        for &big_t in big_ts {
            let ratio = mean_value_ratio(trace, lambda, t_base, big_t)?;
            ratios.push(ratio);
            rows.push((trace.grid.cells(), big_t, ratio));
        }
    }
    if ratios.is_empty() {
        return Err(Error::InsufficientData("mean-value sweep is empty".into()));
    }
    let hi = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    for &(cells, big_t, ratio) in &rows {
        report.results.push(CheckResult::absolute(
            NAME,
            t_base + big_t,
            ratio / lo,
            band,
            context(&[
                ("lambda", lambda),
                ("T", big_t),
                ("cells", cells as f64),
                ("ratio", ratio),
            ]),
        ));
    }
    report.fitted.push(("ratio_min".into(), lo));
    report.fitted.push(("ratio_max".into(), hi));
    Ok((ratios, report))
}
