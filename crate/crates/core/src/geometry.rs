//! Rotationally symmetric model manifolds.
//!
//! A model manifold is `(0, ∞) × S^{n-1}` with metric `dr² + ψ(r)² dθ²`. Everything
//! the solver and the checks need is determined by the dimension `n` and the
//! profile `S(r) = ψ(r)^{n-1}`: the Riemannian measure of a radial shell is
//! `ω_{n-1} ∫ S(r) dr`, where `ω_{n-1}` is the area of the unit sphere.

use crate::error::{Error, Result};
use statrs::function::gamma::gamma;
use std::f64::consts::PI;

/// Area of the unit sphere `S^{n-1} ⊂ ℝⁿ`, `2π^{n/2} / Γ(n/2)`.
///
/// For `n = 1` this is 2 (the two endpoints of an interval).
pub fn unit_sphere_area(n: u32) -> f64 {
    let half = 0.5 * n as f64;
    2.0 * PI.powf(half) / gamma(half)
}

/// Piecewise-linear profile given on a strictly increasing radial table.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedProfile {
    r: Vec<f64>,
    s: Vec<f64>,
    // ∫_{r[0]}^{r[i]} S, exact for the interpolant.
    cumulative: Vec<f64>,
}

impl TabulatedProfile {
    pub fn new(r: Vec<f64>, s: Vec<f64>) -> Result<Self> {
        if r.len() != s.len() {
            return Err(Error::Domain(format!(
                "profile table has {} radii but {} values",
                r.len(),
                s.len()
            )));
        }
        if r.len() < 2 {
            return Err(Error::Domain(
                "profile table needs at least two nodes".into(),
            ));
        }
        if r[0] < 0.0 || !r.iter().all(|x| x.is_finite()) {
            return Err(Error::Domain(
                "profile radii must be finite and non-negative".into(),
            ));
        }
        if r.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Domain(
                "profile radii must be strictly increasing".into(),
            ));
        }
        if s.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::Domain(
                "profile values must be finite and positive".into(),
            ));
        }
        let mut cumulative = Vec::with_capacity(r.len());
        cumulative.push(0.0);
        for i in 1..r.len() {
            let piece = 0.5 * (s[i] + s[i - 1]) * (r[i] - r[i - 1]);
            cumulative.push(cumulative[i - 1] + piece);
        }
        Ok(Self { r, s, cumulative })
    }

    pub fn radii(&self) -> &[f64] {
        &self.r
    }

    pub fn values(&self) -> &[f64] {
        &self.s
    }

    fn locate(&self, r: f64) -> Result<usize> {
        let first = self.r[0];
        let last = *self.r.last().unwrap();
        if !(r >= first && r <= last) {
            return Err(Error::Domain(format!(
                "r = {r} outside tabulated range [{first}, {last}]"
            )));
        }
        // index of the left node of the bracketing interval
        let idx = match self.r.binary_search_by(|x| x.partial_cmp(&r).unwrap()) {
            Ok(i) => i.min(self.r.len() - 2),
            Err(i) => i - 1,
        };
        Ok(idx)
    }

    fn eval(&self, r: f64) -> Result<f64> {
        let i = self.locate(r)?;
        if r == self.r[i] {
            return Ok(self.s[i]);
        }
        if r == self.r[i + 1] {
            return Ok(self.s[i + 1]);
        }
        let w = (r - self.r[i]) / (self.r[i + 1] - self.r[i]);
        Ok(self.s[i] + w * (self.s[i + 1] - self.s[i]))
    }

    /// `∫_{r[0]}^{r} S` for the linear interpolant.
    fn integral_to(&self, r: f64) -> Result<f64> {
        let i = self.locate(r)?;
        let s_r = self.eval(r)?;
        Ok(self.cumulative[i] + 0.5 * (self.s[i] + s_r) * (r - self.r[i]))
    }
}

/// The profile `S(r)` of a model manifold.
#[derive(Debug, Clone, PartialEq)]
pub enum Profile {
    /// `S(r) = r^{n-1}`.
    Euclidean,
    /// `S(r) = C r^{α-1}` for `r > r₀`. Volumes extend the power law down to the pole.
    Polynomial { c: f64, alpha: f64, r0: f64 },
    /// Linear interpolation of tabulated positive values. The first node plays the
    /// role of the pole for volumes.
    Custom(TabulatedProfile),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelManifold {
    n: u32,
    profile: Profile,
    sphere_area: f64,
}

impl ModelManifold {
    pub fn euclidean(n: u32) -> Result<Self> {
        Self::new(n, Profile::Euclidean)
    }

    pub fn polynomial(n: u32, c: f64, alpha: f64, r0: f64) -> Result<Self> {
        Self::new(n, Profile::Polynomial { c, alpha, r0 })
    }

    pub fn custom(n: u32, r: Vec<f64>, s: Vec<f64>) -> Result<Self> {
        Self::new(n, Profile::Custom(TabulatedProfile::new(r, s)?))
    }

    pub fn new(n: u32, profile: Profile) -> Result<Self> {
        if n == 0 {
            return Err(Error::Domain("dimension must be at least 1".into()));
        }
        if let Profile::Polynomial { c, alpha, r0 } = profile {
            if !(c > 0.0) || !c.is_finite() {
                return Err(Error::Domain(format!(
                    "polynomial profile needs C > 0, got {c}"
                )));
            }
            if !(alpha > 0.0 && alpha <= n as f64) {
                return Err(Error::Domain(format!(
                    "polynomial profile needs 0 < alpha <= n = {n}, got {alpha}"
                )));
            }
            if !(r0 >= 0.0) || !r0.is_finite() {
                return Err(Error::Domain(format!(
                    "inner radius must be >= 0, got {r0}"
                )));
            }
        }
        Ok(Self {
            n,
            profile,
            sphere_area: unit_sphere_area(n),
        })
    }

    pub fn dimension(&self) -> u32 {
        self.n
    }

    pub fn profile(&self) -> &Profile {
        &self.profile
    }

    pub fn is_euclidean(&self) -> bool {
        matches!(self.profile, Profile::Euclidean)
    }

    /// `ω_{n-1}`.
    pub fn sphere_area(&self) -> f64 {
        self.sphere_area
    }

    /// Smallest radius at which the profile is defined.
    pub fn inner_radius(&self) -> f64 {
        match &self.profile {
            Profile::Euclidean => 0.0,
            Profile::Polynomial { r0, .. } => *r0,
            Profile::Custom(t) => t.r[0],
        }
    }

    /// Volume growth exponent of pole-centered balls, when it is a pure power.
    pub fn volume_exponent(&self) -> Option<f64> {
        match &self.profile {
            Profile::Euclidean => Some(self.n as f64),
            Profile::Polynomial { alpha, .. } => Some(*alpha),
            Profile::Custom(_) => None,
        }
    }

    /// The profile `S(r)`.
    pub fn area_factor(&self, r: f64) -> Result<f64> {
        match &self.profile {
            Profile::Euclidean => {
                if !(r >= 0.0) {
                    return Err(Error::Domain(format!("radius must be >= 0, got {r}")));
                }
                Ok(r.powi(self.n as i32 - 1))
            }
            Profile::Polynomial { c, alpha, r0 } => {
                if !(r > *r0) {
                    return Err(Error::Domain(format!(
                        "polynomial profile defined for r > r0 = {r0}, got {r}"
                    )));
                }
                Ok(c * r.powf(alpha - 1.0))
            }
            Profile::Custom(t) => t.eval(r),
        }
    }

    /// `μ(B(o, r)) = ω_{n-1} ∫₀^r S`.
    pub fn ball_volume_at_pole(&self, r: f64) -> Result<f64> {
        if !(r >= 0.0) {
            return Err(Error::Domain(format!("radius must be >= 0, got {r}")));
        }
        let integral = match &self.profile {
            Profile::Euclidean => r.powi(self.n as i32) / self.n as f64,
            Profile::Polynomial { c, alpha, .. } => c * r.powf(*alpha) / alpha,
            Profile::Custom(t) => t.integral_to(r)?,
        };
        Ok(self.sphere_area * integral)
    }

    /// Measure of the shell `{r_lo ≤ r_x ≤ r_hi}`.
    pub fn shell_volume(&self, r_lo: f64, r_hi: f64) -> Result<f64> {
        if r_hi < r_lo {
            return Err(Error::Domain(format!("shell [{r_lo}, {r_hi}] is reversed")));
        }
        let integral = match &self.profile {
            Profile::Euclidean => {
                let n = self.n as i32;
                // b^n - a^n = (b - a) Σ a^k b^{n-1-k}, no cancellation
                let sum: f64 = (0..n).map(|k| r_lo.powi(k) * r_hi.powi(n - 1 - k)).sum();
                (r_hi - r_lo) * sum / n as f64
            }
            Profile::Polynomial { c, alpha, .. } => {
                c * (r_hi.powf(*alpha) - r_lo.powf(*alpha)) / alpha
            }
            Profile::Custom(t) => t.integral_to(r_hi)? - t.integral_to(r_lo)?,
        };
        Ok(self.sphere_area * integral)
    }

    /// Volume of a ball of radius `r` centered at distance `center_radius` from the pole.
    ///
    /// Only Euclidean space has a closed form off the pole (translation invariance).
    pub fn off_pole_ball_volume(&self, center_radius: f64, r: f64) -> Result<f64> {
        if !self.is_euclidean() {
            return Err(Error::Unsupported(
                "off-pole ball volumes are only available on Euclidean space".into(),
            ));
        }
        if !(center_radius >= 0.0) || !(r > 0.0) {
            return Err(Error::Domain(format!(
                "need center radius >= 0 and r > 0, got ({center_radius}, {r})"
            )));
        }
        self.ball_volume_at_pole(r)
    }

    /// `μ(B(o, r_big)) / μ(B(o, r_small))`.
    pub fn doubling_ratio(&self, r_small: f64, r_big: f64) -> Result<f64> {
        if !(r_small > 0.0 && r_small <= r_big) {
            return Err(Error::Domain(format!(
                "need 0 < r_small <= r_big, got ({r_small}, {r_big})"
            )));
        }
        if r_small == r_big {
            return Ok(1.0);
        }
        Ok(self.ball_volume_at_pole(r_big)? / self.ball_volume_at_pole(r_small)?)
    }
}

/// A radial interval `{lo ≤ r_x ≤ hi}`; `hi` may be infinite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialSet {
    pub lo: f64,
    pub hi: f64,
}

impl RadialSet {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self {
            lo: lo.max(0.0),
            hi,
        }
    }

    pub fn everything() -> Self {
        Self::new(0.0, f64::INFINITY)
    }

    /// Length of the overlap with `[a, b]`.
    pub fn overlap(&self, a: f64, b: f64) -> f64 {
        (b.min(self.hi) - a.max(self.lo)).max(0.0)
    }

    pub fn contains(&self, r: f64) -> bool {
        r >= self.lo && r <= self.hi
    }
}

/// A pole-centered ball `A = B(o, a)` together with a neighborhood width `ρ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Region {
    pub a: f64,
    pub rho: f64,
}

impl Region {
    pub fn new(a: f64, rho: f64) -> Result<Self> {
        if !(a >= 0.0) || !(rho >= 0.0) || !a.is_finite() || !rho.is_finite() {
            return Err(Error::Domain(format!(
                "region needs finite a >= 0 and rho >= 0, got ({a}, {rho})"
            )));
        }
        Ok(Self { a, rho })
    }

    /// Same ball, different neighborhood width.
    pub fn with_rho(self, rho: f64) -> Result<Self> {
        Self::new(self.a, rho)
    }

    /// `A`.
    pub fn set(&self) -> RadialSet {
        RadialSet::new(0.0, self.a)
    }

    /// `Aᶜ`.
    pub fn complement(&self) -> RadialSet {
        RadialSet::new(self.a, f64::INFINITY)
    }

    /// `A_ρ`.
    pub fn neighborhood(&self) -> RadialSet {
        RadialSet::new(0.0, self.a + self.rho)
    }

    /// `A_ρᶜ = {r_x ≥ a + ρ}`.
    pub fn neighborhood_complement(&self) -> RadialSet {
        RadialSet::new(self.a + self.rho, f64::INFINITY)
    }

    /// `d(x, A)` for a point at radius `r_x`.
    pub fn distance_to_set(&self, r_x: f64) -> f64 {
        (r_x - self.a).max(0.0)
    }

    /// `d(x, A_ρᶜ)` for a point at radius `r_x`.
    pub fn distance_to_neighborhood_complement(&self, r_x: f64) -> f64 {
        (self.a + self.rho - r_x).max(0.0)
    }
}
