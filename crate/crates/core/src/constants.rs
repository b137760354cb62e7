//! Explicit constants of the estimate chain for `∂ₜu = Δₚ(u^{1/(p-1)})`.
//!
//! All quantities are closed-form functions of `(p, n, λ, θ)`:
//!
//! * `c₁, c₂`: the energy (Caccioppoli) constants,
//! * `ζ_dg = (p-1) / (2 c₂^{1/(p-1)})`: the rate in the Davies-Gaffney type bound,
//! * `ζ_B = (p-1)² p^{-p/(p-1)}`: the Barenblatt rate,
//! * `κ, ν`: Sobolev bookkeeping exponents,
//! * `ε(θ, p, λ)`: the rate surviving the iteration over shrinking neighborhoods,
//! * the closed-form bound for sequences with `J_{k+1} ≤ (A^k/Θ) J_k^{1+ω}`.

use crate::error::{Error, Result};

/// Default `κ` when `n ≤ p` leaves it free.
pub const DEFAULT_KAPPA: f64 = 2.0;

/// Scan cap for the infimum defining `ε`.
pub const EPSILON_SCAN_CAP: u32 = 10_000;

fn check_p(p: f64) -> Result<()> {
    if !(p > 1.0) || !p.is_finite() {
        return Err(Error::Precondition(format!("p must be > 1, got {p}")));
    }
    Ok(())
}

/// `max(p, p/(p-1))`, the smallest admissible `λ`.
pub fn lambda_threshold(p: f64) -> f64 {
    p.max(p / (p - 1.0))
}

/// Checks `λ ≥ max(p, p/(p-1))` up to a relative rounding slack.
pub fn check_lambda(p: f64, lambda: f64) -> Result<()> {
    check_p(p)?;
    let min = lambda_threshold(p);
    if !(lambda >= min * (1.0 - 1e-12)) || !lambda.is_finite() {
        return Err(Error::Precondition(format!(
            "lambda must satisfy lambda >= max(p, p/(p-1)) = {min} for p = {p}, got {lambda}"
        )));
    }
    Ok(())
}

/// `(c₁, c₂)` as algebraic expressions, defined for any `p > 1`, `λ > 1`
/// without the threshold that the estimates need.
pub fn caccioppoli_formula(p: f64, lambda: f64) -> Result<(f64, f64)> {
    check_p(p)?;
    if !(lambda > 1.0) || !lambda.is_finite() {
        return Err(Error::Precondition(format!(
            "lambda must be > 1, got {lambda}"
        )));
    }
    Ok(caccioppoli_unchecked(p, lambda))
}

fn caccioppoli_unchecked(p: f64, lambda: f64) -> (f64, f64) {
    let alpha = lambda / p;
    let pm1 = p - 1.0;
    let base = lambda * (lambda - 1.0) / pm1.powf(pm1) * alpha.powf(-p);
    let c1 = base / 2f64.powf(p);
    let c2 = 0.5 * base
        + lambda * 2f64.powf(pm1) * p.powf(p) / ((lambda - 1.0).powf(pm1) * pm1.powf(pm1));
    (c1, c2)
}

/// The pair `(c₁, c₂)`.
pub fn caccioppoli_constants(p: f64, lambda: f64) -> Result<(f64, f64)> {
    check_lambda(p, lambda)?;
    Ok(caccioppoli_unchecked(p, lambda))
}

/// `ζ = (p-1) / (2 c₂^{1/(p-1)})`.
pub fn zeta_davies_gaffney(p: f64, lambda: f64) -> Result<f64> {
    let (_, c2) = caccioppoli_constants(p, lambda)?;
    Ok((p - 1.0) / (2.0 * c2.powf(1.0 / (p - 1.0))))
}

/// `ζ_B = (p-1)² p^{-p/(p-1)}`.
pub fn zeta_barenblatt(p: f64) -> Result<f64> {
    check_p(p)?;
    let pm1 = p - 1.0;
    Ok(pm1 * pm1 * p.powf(-p / pm1))
}

/// `(κ, ν)` with `ν = 1 - 1/κ`. For `n > p` both are forced; otherwise `κ` is the
/// supplied value (see [`DEFAULT_KAPPA`]).
pub fn sobolev_exponents(n: u32, p: f64, kappa_free: f64) -> Result<(f64, f64)> {
    check_p(p)?;
    if n == 0 {
        return Err(Error::Precondition("dimension must be >= 1".into()));
    }
    let nf = n as f64;
    if nf > p {
        Ok((nf / (nf - p), p / nf))
    } else {
        if !(kappa_free > 1.0) || !kappa_free.is_finite() {
            return Err(Error::Precondition(format!(
                "kappa must be > 1 when n <= p, got {kappa_free}"
            )));
        }
        Ok((kappa_free, 1.0 - 1.0 / kappa_free))
    }
}

/// Result of the infimum defining `ε(θ, p, λ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonIteration {
    pub value: f64,
    pub argmin: u32,
}

/// Natural log of the `k`-th term whose infimum over `k ≥ 1` is `ε`.
pub fn ln_epsilon_term(zeta_dg: f64, theta: f64, p: f64, k: u32) -> f64 {
    let pm1 = p - 1.0;
    let kf = k as f64;
    zeta_dg.ln() + kf / pm1 * theta.ln()
        - p / pm1 * kf.ln()
        - (p / pm1 + 1.0) * (kf + 1.0).ln()
        - (theta - 1.0).ln() / pm1
}

/// `ε = inf_{k≥1} ζ θ^{k/(p-1)} / (k^{p/(p-1)} (k+1)^{p/(p-1)+1} (θ-1)^{1/(p-1)})`.
///
/// `λ` enters only through `ζ = ζ_dg(p, λ)`. The log-term is convex in `k`, so the
/// scan stops at the first strict increase.
pub fn epsilon_iteration(theta: f64, p: f64, lambda: f64) -> Result<EpsilonIteration> {
    if !(theta > 1.0) || !theta.is_finite() {
        return Err(Error::Precondition(format!(
            "theta must be > 1, got {theta}"
        )));
    }
    let zeta = zeta_davies_gaffney(p, lambda)?;
    let mut best = ln_epsilon_term(zeta, theta, p, 1);
    for k in 1..EPSILON_SCAN_CAP {
        let next = ln_epsilon_term(zeta, theta, p, k + 1);
        if next > best {
            return Ok(EpsilonIteration {
                value: best.exp(),
                argmin: k,
            });
        }
        best = next;
    }
    Err(Error::Precondition(format!(
        "epsilon scan did not reach its minimum within k <= {EPSILON_SCAN_CAP} (theta = {theta})"
    )))
}

/// `(p/c₁, c₂/c₁, c₂)` for `λ ≥ 2`.
pub fn remark_ratio_bounds(p: f64, lambda: f64) -> Result<(f64, f64, f64)> {
    check_p(p)?;
    if !(lambda >= 2.0) {
        return Err(Error::Precondition(format!(
            "lambda must be >= 2, got {lambda}"
        )));
    }
    let (c1, c2) = caccioppoli_unchecked(p, lambda);
    Ok((p / c1, c2 / c1, c2))
}

/// Closed form of `c₂/c₁`: `2^{p-1} + 2^{2p-1} λ^p / (λ-1)^p`.
pub fn c2_over_c1_closed_form(p: f64, lambda: f64) -> f64 {
    2f64.powf(p - 1.0) + 2f64.powf(2.0 * p - 1.0) * (lambda / (lambda - 1.0)).powf(p)
}

/// Parameters of a sequence with `J_{k+1} ≤ (A^k/Θ) J_k^{1+ω}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationParams {
    pub a: f64,
    pub theta: f64,
    pub omega: f64,
    pub j0: f64,
}

impl IterationParams {
    pub fn new(a: f64, theta: f64, omega: f64, j0: f64) -> Result<Self> {
        let ok = |x: f64| x > 0.0 && x.is_finite();
        if !ok(a) || !ok(theta) || !ok(omega) || !(j0 >= 0.0) || !j0.is_finite() {
            return Err(Error::Precondition(format!(
                "need A, Theta, omega > 0 and J0 >= 0, got ({a}, {theta}, {omega}, {j0})"
            )));
        }
        Ok(Self {
            a,
            theta,
            omega,
            j0,
        })
    }

    /// Whether `Θ ≥ A^{1/ω} J₀^ω`, the case with geometric decay.
    pub fn decays_geometrically(&self) -> bool {
        self.theta >= self.a.powf(1.0 / self.omega) * self.j0.powf(self.omega)
    }
}

/// `ln` of the closed-form bound; `-∞` when `J₀ = 0`.
pub fn ln_iteration_bound(params: &IterationParams, k: u32) -> f64 {
    if params.j0 == 0.0 {
        return f64::NEG_INFINITY;
    }
    let IterationParams {
        a,
        theta,
        omega,
        j0,
    } = *params;
    let (ln_a, ln_t) = (a.ln(), theta.ln());
    let kf = k as f64;
    // (J0 / (A^{-1/ω} Θ)^{1/ω})^{(1+ω)^k} · (A^{-k-1/ω} Θ)^{1/ω}
    let base = j0.ln() - (ln_t - ln_a / omega) / omega;
    let growth = (1.0 + omega).powf(kf);
    let tail = (ln_t - (kf + 1.0 / omega) * ln_a) / omega;
    // (1+ω)^k can overflow to ∞; base = 0 then contributes nothing
    let head = if base == 0.0 { 0.0 } else { growth * base };
    head + tail
}

/// Closed-form bound on `J_k`; `+∞` when it exceeds the representable range.
pub fn iteration_bound(params: &IterationParams, k: u32) -> f64 {
    let ln = ln_iteration_bound(params, k);
    if ln > f64::MAX.ln() {
        f64::INFINITY
    } else {
        ln.exp()
    }
}

/// `A^{-k/ω} J₀` when `Θ ≥ A^{1/ω} J₀^ω`, otherwise `None`.
pub fn geometric_decay_bound(params: &IterationParams, k: u32) -> Option<f64> {
    params
        .decays_geometrically()
        .then(|| params.a.powf(-(k as f64) / params.omega) * params.j0)
}

/// Every constant for one `(p, n, λ, θ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantsTable {
    pub p: f64,
    pub n: u32,
    pub q: f64,
    pub lambda: f64,
    pub alpha: f64,
    pub c1: f64,
    pub c2: f64,
    pub zeta_dg: f64,
    pub zeta_b: f64,
    pub kappa: f64,
    pub nu: f64,
    pub theta: f64,
    /// Growth factor `Θ = θ^{(λ-1)/ν}` of `γ(t) ∝ t^{(λ-1)/ν}`.
    pub growth: f64,
    pub epsilon: f64,
    pub epsilon_argmin: u32,
}

impl ConstantsTable {
    pub fn new(p: f64, n: u32, lambda: f64, theta: f64, kappa_free: f64) -> Result<Self> {
        let (c1, c2) = caccioppoli_constants(p, lambda)?;
        let (kappa, nu) = sobolev_exponents(n, p, kappa_free)?;
        let eps = epsilon_iteration(theta, p, lambda)?;
        Ok(Self {
            p,
            n,
            q: 1.0 / (p - 1.0),
            lambda,
            alpha: lambda / p,
            c1,
            c2,
            zeta_dg: zeta_davies_gaffney(p, lambda)?,
            zeta_b: zeta_barenblatt(p)?,
            kappa,
            nu,
            theta,
            growth: theta.powf((lambda - 1.0) / nu),
            epsilon: eps.value,
            epsilon_argmin: eps.argmin,
        })
    }

    /// `(name, value)` rows in a fixed order.
    pub fn rows(&self) -> Vec<(&'static str, f64)> {
        let (p_over_c1, c2_over_c1, _) =
            remark_ratio_bounds(self.p, self.lambda).unwrap_or((f64::NAN, f64::NAN, f64::NAN));
        vec![
            ("p", self.p),
            ("n", self.n as f64),
            ("q", self.q),
            ("lambda", self.lambda),
            ("alpha", self.alpha),
            ("c1", self.c1),
            ("c2", self.c2),
            ("c2_over_c1", c2_over_c1),
            ("p_over_c1", p_over_c1),
            ("zeta_dg", self.zeta_dg),
            ("zeta_b", self.zeta_b),
            ("kappa", self.kappa),
            ("nu", self.nu),
            ("theta", self.theta),
            ("Theta", self.growth),
            ("epsilon", self.epsilon),
            ("epsilon_argmin", self.epsilon_argmin as f64),
        ]
    }
}
