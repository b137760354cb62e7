//! Self-similar exact solutions.
//!
//! On a model manifold with `S(r) = C r^{α-1}` (Euclidean space is `α = n`, `C = 1`)
//! the function
//!
//! ```text
//! u(r, t) = t^{-α/p} exp(-ζ_B (r / t^{1/p})^{p/(p-1)}),   ζ_B = (p-1)² p^{-p/(p-1)}
//! ```
//!
//! solves `∂ₜu = -(1/S) ∂_r(S (-∂_r u^{1/(p-1)})^{p-1})`. It has the form
//! `t^{-a} f(r t^{b})` with `a = α/p`, `b = -1/p` and `f(s) = exp(-ζ_B s^{p/(p-1)})`.

use crate::constants::zeta_barenblatt;
use crate::error::{Error, Result};
use crate::geometry::{ModelManifold, Profile};
use statrs::function::gamma::gamma;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExactKind {
    Barenblatt { n: u32 },
    PolynomialModel,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactSolution {
    kind: ExactKind,
    p: f64,
    alpha: f64,
    zeta: f64,
}

impl ExactSolution {
    /// Barenblatt solution on `ℝⁿ`.
    pub fn barenblatt(p: f64, n: u32) -> Result<Self> {
        if n == 0 {
            return Err(Error::Domain("dimension must be >= 1".into()));
        }
        Ok(Self {
            kind: ExactKind::Barenblatt { n },
            p,
            alpha: n as f64,
            zeta: zeta_barenblatt(p)?,
        })
    }

    /// Radial solution on a model with `S(r) = C r^{α-1}`.
    pub fn polynomial_model(p: f64, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0) {
            return Err(Error::Domain(format!("alpha must be > 0, got {alpha}")));
        }
        Ok(Self {
            kind: ExactKind::PolynomialModel,
            p,
            alpha,
            zeta: zeta_barenblatt(p)?,
        })
    }

    /// The exact solution matching a power-law manifold.
    pub fn for_manifold(p: f64, m: &ModelManifold) -> Result<Self> {
        match m.profile() {
            Profile::Euclidean => Self::barenblatt(p, m.dimension()),
            Profile::Polynomial { alpha, .. } => Self::polynomial_model(p, *alpha),
            Profile::Custom(_) => Err(Error::Unsupported(
                "no exact solution is known for tabulated profiles".into(),
            )),
        }
    }

    pub fn kind(&self) -> ExactKind {
        self.kind
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn zeta(&self) -> f64 {
        self.zeta
    }

    /// `a` in `u = t^{-a} f(r t^{b})`.
    pub fn time_exponent(&self) -> f64 {
        self.alpha / self.p
    }

    /// `b` in `u = t^{-a} f(r t^{b})`.
    pub fn similarity_exponent(&self) -> f64 {
        -1.0 / self.p
    }

    /// `f(s) = exp(-ζ s^{p/(p-1)})`.
    pub fn profile(&self, s: f64) -> f64 {
        (-self.zeta * s.powf(self.p / (self.p - 1.0))).exp()
    }

    /// `f'(s)`, analytic.
    pub fn profile_derivative(&self, s: f64) -> f64 {
        let e = self.p / (self.p - 1.0);
        -self.zeta * e * s.powf(e - 1.0) * self.profile(s)
    }

    /// `u(r, t)`.
    pub fn evaluate(&self, r: f64, t: f64) -> Result<f64> {
        if !(t > 0.0) {
            return Err(Error::Domain(format!("time must be > 0, got {t}")));
        }
        if !(r >= 0.0) {
            return Err(Error::Domain(format!("radius must be >= 0, got {r}")));
        }
        Ok(self.evaluate_unchecked(r, t))
    }

    pub(crate) fn evaluate_unchecked(&self, r: f64, t: f64) -> f64 {
        t.powf(-self.time_exponent()) * self.profile(r * t.powf(-1.0 / self.p))
    }

    /// Radius beyond which `u(·, t) < rel · u(0, t)`.
    pub fn tail_radius(&self, t: f64, rel: f64) -> f64 {
        t.powf(1.0 / self.p) * (-rel.ln() / self.zeta).powf((self.p - 1.0) / self.p)
    }

    /// `f'/f + (p-1)(s/p)^{1/(p-1)}`, zero when `f` solves the profile ODE.
    pub fn self_similar_profile_ode_residual(&self, s: f64) -> Result<f64> {
        ode_residual_with_zeta(self.p, self.zeta, s)
    }

    /// Strong residual `∂ₜu + (1/S) ∂_r(S (-∂_r u^{1/(p-1)})^{p-1})` at `(r, t)`.
    ///
    /// Second order in `h`: a centered time difference and a compact flux
    /// difference with fluxes at `r ± h/2`.
    pub fn pde_residual(&self, m: &ModelManifold, r: f64, t: f64, h: f64) -> Result<f64> {
        if !(h > 0.0) {
            return Err(Error::Domain(format!("step must be > 0, got {h}")));
        }
        if !(r > m.inner_radius() + 2.0 * h) {
            return Err(Error::Domain(format!(
                "residual needs r > r0 + 2h = {}, got {r}",
                m.inner_radius() + 2.0 * h
            )));
        }
        if !(t > h) {
            return Err(Error::Domain(format!("residual needs t > h, got t = {t}")));
        }
        let p = self.p;
        let q = 1.0 / (p - 1.0);
        let u = |x: f64, s: f64| self.evaluate_unchecked(x, s);
        let w = |x: f64| u(x, t).powf(q);
        let flux = |face: f64| -> Result<f64> {
            let slope = -(w(face + 0.5 * h) - w(face - 0.5 * h)) / h;
            Ok(m.area_factor(face)? * slope.max(0.0).powf(p - 1.0))
        };
        let dt_u = (u(r, t + h) - u(r, t - h)) / (2.0 * h);
        let div = (flux(r + 0.5 * h)? - flux(r - 0.5 * h)?) / h;
        Ok(dt_u + div / m.area_factor(r)?)
    }

    /// `∫_M u(·, t)^λ dμ` in closed form on the matching power-law manifold.
    ///
    /// With `p' = p/(p-1)`: `ω C t^{-α(λ-1)/p} Γ(α/p') / (p' (λζ)^{α/p'})`.
    pub fn lp_integral(&self, m: &ModelManifold, lambda: f64, t: f64) -> Result<f64> {
        let c = self.matching_profile_constant(m)?;
        if !(lambda > 0.0) || !(t > 0.0) {
            return Err(Error::Domain(format!(
                "need lambda > 0 and t > 0, got ({lambda}, {t})"
            )));
        }
        let pp = self.p / (self.p - 1.0);
        let k = self.alpha / pp;
        let space = gamma(k) / (pp * (lambda * self.zeta).powf(k));
        Ok(m.sphere_area() * c * t.powf(-self.alpha * (lambda - 1.0) / self.p) * space)
    }

    /// `d/dt ‖u(·, t)‖_{L^λ}` in closed form; never positive.
    pub fn lp_norm_time_derivative(&self, m: &ModelManifold, lambda: f64, t: f64) -> Result<f64> {
        let norm = self.lp_integral(m, lambda, t)?.powf(1.0 / lambda);
        Ok(-self.alpha * (lambda - 1.0) / (self.p * lambda) * norm / t)
    }

    fn matching_profile_constant(&self, m: &ModelManifold) -> Result<f64> {
        let (c, alpha) = match m.profile() {
            Profile::Euclidean => (1.0, m.dimension() as f64),
            Profile::Polynomial { c, alpha, r0 } => {
                if *r0 > 0.0 {
                    return Err(Error::Unsupported(
                        "closed-form integrals need r0 = 0".into(),
                    ));
                }
                (*c, *alpha)
            }
            Profile::Custom(_) => {
                return Err(Error::Unsupported("tabulated profile".into()));
            }
        };
        if (alpha - self.alpha).abs() > 1e-12 * alpha {
            return Err(Error::Precondition(format!(
                "solution has alpha = {} but manifold has alpha = {alpha}",
                self.alpha
            )));
        }
        Ok(c)
    }
}

/// `f'/f + (p-1)(s/p)^{1/(p-1)}` for `f(s) = exp(-ζ s^{p/(p-1)})` with an arbitrary `ζ`.
pub fn ode_residual_with_zeta(p: f64, zeta: f64, s: f64) -> Result<f64> {
    if !(s > 0.0) {
        return Err(Error::Domain(format!("s must be > 0, got {s}")));
    }
    let e = p / (p - 1.0);
    // f'/f = -ζ e s^{e-1}
    let log_derivative = -zeta * e * s.powf(e - 1.0);
    Ok(log_derivative + (p - 1.0) * (s / p).powf(1.0 / (p - 1.0)))
}
