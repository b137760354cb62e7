//! Conservative explicit finite-volume integrator for the radial equation
//!
//! ```text
//! ∂ₜu = (1/S) ∂_r(S |∂_r w|^{p-2} ∂_r w),   w = u^{1/(p-1)},
//! ```
//!
//! on `[r_inner, r_outer]` with zero flux through both boundary faces. Cell
//! measures are exact shell volumes of the model manifold, face fluxes carry the
//! exact face area `ω_{n-1} S(r_{i+1/2})`, so the discrete mass `Σ mᵢ uᵢ` changes
//! only by rounding.

use crate::error::{Error, Result};
use crate::exact::ExactSolution;
use crate::geometry::{ModelManifold, RadialSet};
use rayon::prelude::*;
use std::io::{self, Write};

/// Values below this are a hard failure; values in `[NEGATIVE_SLACK, 0)` are clipped.
pub const NEGATIVE_SLACK: f64 = -1e-12;

// Cells below this are exempt from the positivity limit: `mᵢuᵢ` may underflow
// there, and any overshoot is far inside the clipping slack.
const POSITIVITY_FLOOR: f64 = 1e-100;

/// Uniform finite-volume grid on a radial interval.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialGrid {
    manifold: ModelManifold,
    r_inner: f64,
    r_outer: f64,
    dr: f64,
    faces: Vec<f64>,
    centers: Vec<f64>,
    measures: Vec<f64>,
    // ω S(face); zero on the two boundary faces
    face_areas: Vec<f64>,
}

impl RadialGrid {
    pub const MIN_CELLS: usize = 16;

    pub fn new(manifold: &ModelManifold, r_inner: f64, r_outer: f64, cells: usize) -> Result<Self> {
        if cells < Self::MIN_CELLS {
            return Err(Error::Domain(format!(
                "grid needs at least {} cells, got {cells}",
                Self::MIN_CELLS
            )));
        }
        if !(r_inner >= manifold.inner_radius()) || !(r_outer > r_inner) || !r_outer.is_finite() {
            return Err(Error::Domain(format!(
                "need r0 = {} <= r_inner < r_outer, got [{r_inner}, {r_outer}]",
                manifold.inner_radius()
            )));
        }
        let len = r_outer - r_inner;
        let nf = cells as f64;
        let faces: Vec<f64> = (0..=cells)
            .map(|i| {
                if i == cells {
                    r_outer
                } else {
                    r_inner + i as f64 * len / nf
                }
            })
            .collect();
        let centers: Vec<f64> = (0..cells)
            .map(|i| r_inner + (i as f64 + 0.5) * len / nf)
            .collect();
        let measures = faces
            .windows(2)
            .map(|f| manifold.shell_volume(f[0], f[1]))
            .collect::<Result<Vec<_>>>()?;
        if measures.iter().any(|&m| !(m > 0.0)) {
            return Err(Error::Domain("grid has a cell of zero measure".into()));
        }
        let mut face_areas = vec![0.0; cells + 1];
        for i in 1..cells {
            face_areas[i] = manifold.sphere_area() * manifold.area_factor(faces[i])?;
        }
        Ok(Self {
            manifold: manifold.clone(),
            r_inner,
            r_outer,
            dr: len / nf,
            faces,
            centers,
            measures,
            face_areas,
        })
    }

    pub fn manifold(&self) -> &ModelManifold {
        &self.manifold
    }

    pub fn cells(&self) -> usize {
        self.centers.len()
    }

    pub fn r_inner(&self) -> f64 {
        self.r_inner
    }

    pub fn r_outer(&self) -> f64 {
        self.r_outer
    }

    pub fn dr(&self) -> f64 {
        self.dr
    }

    pub fn faces(&self) -> &[f64] {
        &self.faces
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn measures(&self) -> &[f64] {
        &self.measures
    }

    pub fn face_areas(&self) -> &[f64] {
        &self.face_areas
    }

    pub fn total_measure(&self) -> f64 {
        self.measures.iter().sum()
    }

    /// Measure of `cell i ∩ set`.
    pub fn overlap_measure(&self, i: usize, set: &RadialSet) -> f64 {
        let (lo, hi) = (self.faces[i], self.faces[i + 1]);
        if set.lo <= lo && set.hi >= hi {
            return self.measures[i];
        }
        let a = lo.max(set.lo);
        let b = hi.min(set.hi);
        if b <= a {
            return 0.0;
        }
        self.manifold.shell_volume(a, b).unwrap_or(0.0)
    }
}

/// One time slice of `u`.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub t: f64,
    pub values: Vec<f64>,
}

impl Field {
    pub fn new(t: f64, values: Vec<f64>) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
            return Err(Error::Domain(format!(
                "field values must be finite and >= 0, found {v}"
            )));
        }
        Ok(Self { t, values })
    }

    /// Samples `f` at the cell centers.
    pub fn from_fn<F: Fn(f64) -> f64>(grid: &RadialGrid, t: f64, f: F) -> Result<Self> {
        Self::new(t, grid.centers().iter().map(|&r| f(r)).collect())
    }

    /// The exact solution at cell centers.
    pub fn from_exact(grid: &RadialGrid, sol: &ExactSolution, t: f64) -> Result<Self> {
        if !(t > 0.0) {
            return Err(Error::Domain(format!(
                "exact solution needs t > 0, got {t}"
            )));
        }
        Self::from_fn(grid, t, |r| sol.evaluate_unchecked(r, t))
    }

    /// `Σ mᵢ uᵢ`.
    pub fn mass(&self, grid: &RadialGrid) -> f64 {
        self.values
            .iter()
            .zip(grid.measures())
            .map(|(u, m)| u * m)
            .sum()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Boundary {
    #[default]
    ZeroFluxBoth,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub p: f64,
    pub cfl: f64,
    /// Floor applied inside the diffusivity estimate only, never to the state.
    pub floor: f64,
    pub boundary: Boundary,
    pub max_steps: u64,
}

impl SolverConfig {
    pub fn new(p: f64) -> Self {
        Self {
            p,
            cfl: 0.4,
            floor: 1e-14,
            boundary: Boundary::ZeroFluxBoth,
            max_steps: 100_000_000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p > 1.0) || !self.p.is_finite() {
            return Err(Error::Precondition(format!(
                "p must be > 1, got {}",
                self.p
            )));
        }
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return Err(Error::Precondition(format!(
                "cfl must lie in (0, 1], got {}",
                self.cfl
            )));
        }
        if !(self.floor >= 0.0) {
            return Err(Error::Precondition(format!(
                "floor must be >= 0, got {}",
                self.floor
            )));
        }
        Ok(())
    }
}

#[inline]
fn pow(x: f64, e: f64) -> f64 {
    if e == 1.0 {
        x
    } else if e == 0.0 {
        1.0
    } else if e == 0.5 {
        x.sqrt()
    } else if e == 2.0 {
        x * x
    } else if e == -0.5 {
        1.0 / x.sqrt()
    } else {
        x.powf(e)
    }
}

/// Stateful stepper reusing its work buffers.
#[derive(Debug, Clone)]
pub struct Stepper<'a> {
    grid: &'a RadialGrid,
    cfg: SolverConfig,
    q: f64,
    w: Vec<f64>,
    flux: Vec<f64>,
    diffusivity: Vec<f64>,
    clipped: u64,
}

/// What one step did.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    pub dt: f64,
    pub clipped: u64,
}

impl<'a> Stepper<'a> {
    pub fn new(grid: &'a RadialGrid, cfg: SolverConfig) -> Result<Self> {
        cfg.validate()?;
        let cells = grid.cells();
        Ok(Self {
            grid,
            q: 1.0 / (cfg.p - 1.0),
            cfg,
            w: vec![0.0; cells],
            flux: vec![0.0; cells + 1],
            diffusivity: vec![0.0; cells + 1],
            clipped: 0,
        })
    }

    /// Values clipped from `[NEGATIVE_SLACK, 0)` to zero so far.
    pub fn clipped(&self) -> u64 {
        self.clipped
    }

    fn compute_fluxes(&mut self, u: &[f64]) {
        let p = self.cfg.p;
        let q = self.q;
        let delta = self.cfg.floor;
        let dr = self.grid.dr;
        for (w, &v) in self.w.iter_mut().zip(u) {
            *w = pow(v, q);
        }
        let n = u.len();
        let areas = &self.grid.face_areas;
        for j in 1..n {
            let g = (self.w[j] - self.w[j - 1]) / dr;
            let ag = g.abs();
            self.flux[j] = if g == 0.0 {
                0.0
            } else {
                areas[j] * pow(ag, p - 2.0) * g
            };
            // linearized diffusivity (p-1)|g|^{p-2} q u_face^{q-1}
            let g_eff = if p < 2.0 { ag.max(delta) } else { ag };
            let u_face = (0.5 * (u[j] + u[j - 1])).max(delta);
            let d = (p - 1.0) * pow(g_eff, p - 2.0) * q * pow(u_face, q - 1.0);
            self.diffusivity[j] = d.max(delta);
        }
        self.flux[0] = 0.0;
        self.flux[n] = 0.0;
        self.diffusivity[0] = 0.0;
        self.diffusivity[n] = 0.0;
    }

    /// Largest stable step for the fluxes currently in the buffers.
    ///
    /// `cfl` times the minimum of three limits: the face rule `Δr²/(2D)`, the cell
    /// rule `mᵢΔr / Σ_faces ω S D` (exact diagonal bound on non-uniform shells) and
    /// the positivity rule `mᵢuᵢ / outflowᵢ`.
    fn stable_dt(&self, u: &[f64]) -> f64 {
        let dr = self.grid.dr;
        let n = u.len();
        let mut limit = f64::INFINITY;
        for j in 1..n {
            limit = limit.min(dr * dr / (2.0 * self.diffusivity[j]));
        }
        let areas = &self.grid.face_areas;
        let measures = &self.grid.measures;
        #[allow(clippy::needless_range_loop)]
        for i in 0..n {
            let conductance =
                areas[i] * self.diffusivity[i] + areas[i + 1] * self.diffusivity[i + 1];
            if conductance > 0.0 {
                limit = limit.min(measures[i] * dr / conductance);
            }
            let outflow = self.flux[i].max(0.0) + (-self.flux[i + 1]).max(0.0);
            if outflow > 0.0 && u[i] > POSITIVITY_FLOOR {
                limit = limit.min(measures[i] * u[i] / outflow);
            }
        }
        self.cfg.cfl * limit
    }

    /// Advances `field` in place by one stable step no longer than `max_dt`.
    pub fn advance(&mut self, field: &mut Field, max_dt: f64) -> Result<StepInfo> {
        let n = self.grid.cells();
        if field.values.len() != n {
            return Err(Error::Domain(format!(
                "field has {} values but the grid has {n} cells",
                field.values.len()
            )));
        }
        self.compute_fluxes(&field.values);
        let dt = self.stable_dt(&field.values).min(max_dt);
        if !(dt > 0.0) || !dt.is_finite() || field.t + dt == field.t {
            return Err(Error::SolverAbort(format!(
                "time step collapsed to {dt:e} at t = {}",
                field.t
            )));
        }
        let mut clipped = 0;
        let measures = &self.grid.measures;
        #[allow(clippy::needless_range_loop)]
        for i in 0..n {
            let v = field.values[i] + dt / measures[i] * (self.flux[i + 1] - self.flux[i]);
            if v.is_nan() {
                return Err(Error::SolverAbort(format!(
                    "NaN in cell {i} at t = {}",
                    field.t
                )));
            }
            if v < 0.0 {
                if v < NEGATIVE_SLACK {
                    return Err(Error::SolverAbort(format!(
                        "negative value {v:e} in cell {i} at t = {}",
                        field.t
                    )));
                }
                clipped += 1;
                field.values[i] = 0.0;
            } else {
                field.values[i] = v;
            }
        }
        field.t += dt;
        self.clipped += clipped;
        Ok(StepInfo { dt, clipped })
    }
}

/// One explicit step with the stability-limited time step.
pub fn step(field: &Field, grid: &RadialGrid, cfg: &SolverConfig) -> Result<Field> {
    let mut stepper = Stepper::new(grid, cfg.clone())?;
    let mut next = field.clone();
    stepper.advance(&mut next, f64::INFINITY)?;
    Ok(next)
}

/// Snapshots of one run plus solver metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub grid: RadialGrid,
    pub p: f64,
    pub cfl: f64,
    pub initial: Field,
    pub snapshots: Vec<Field>,
    pub dt_history: Vec<f64>,
    pub clipped: u64,
}

impl Trace {
    /// Exact solution sampled at cell centers; the initial slice is taken at `t0`.
    pub fn from_exact(
        sol: &ExactSolution,
        grid: &RadialGrid,
        t0: f64,
        times: &[f64],
    ) -> Result<Self> {
        check_times(t0, times, f64::INFINITY)?;
        let snapshots = times
            .iter()
            .map(|&t| Field::from_exact(grid, sol, t))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            grid: grid.clone(),
            p: sol.p(),
            cfl: f64::NAN,
            initial: Field::from_exact(grid, sol, t0)?,
            snapshots,
            dt_history: Vec::new(),
            clipped: 0,
        })
    }

    pub fn t0(&self) -> f64 {
        self.initial.t
    }

    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|f| f.t).collect()
    }

    /// The initial slice followed by every snapshot.
    pub fn slices(&self) -> impl Iterator<Item = &Field> {
        std::iter::once(&self.initial).chain(self.snapshots.iter())
    }

    /// The snapshot recorded at `t` (relative match 1e-12), or the initial slice.
    pub fn field_at(&self, t: f64) -> Result<&Field> {
        let tol = 1e-12 * t.abs().max(1.0);
        self.slices()
            .find(|f| (f.t - t).abs() <= tol)
            .ok_or_else(|| Error::Domain(format!("no snapshot at t = {t}")))
    }

    /// `trace.csv`: header `t,r,u`, rows sorted by `(t, r)`, 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "t,r,u")?;
        for f in self.slices() {
            for (r, u) in self.grid.centers().iter().zip(&f.values) {
                writeln!(out, "{},{},{}", fmt17(f.t), fmt17(*r), fmt17(*u))?;
            }
        }
        Ok(())
    }
}

/// Scientific notation with 17 significant digits.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

fn check_times(t0: f64, times: &[f64], t_end: f64) -> Result<()> {
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Precondition(
            "snapshot times must be strictly increasing".into(),
        ));
    }
    if let (Some(&first), Some(&last)) = (times.first(), times.last()) {
        if !(first > t0) || !(last <= t_end) {
            return Err(Error::Precondition(format!(
                "snapshot times must lie in (t0, T_end] = ({t0}, {t_end}], got [{first}, {last}]"
            )));
        }
    }
    Ok(())
}

/// A run that stopped early, with what it produced so far.
#[derive(Debug, Clone, PartialEq)]
pub struct RunFailure {
    pub error: Error,
    pub partial: Trace,
}

impl std::fmt::Display for RunFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} ({} snapshots recorded)",
            self.error,
            self.partial.snapshots.len()
        )
    }
}

impl std::error::Error for RunFailure {}

/// Integrates from `u0` to `t_end`, recording snapshots interpolated linearly in
/// time between the two steps that bracket each requested time.
pub fn run(
    u0: &Field,
    t_end: f64,
    snapshots: &[f64],
    grid: &RadialGrid,
    cfg: &SolverConfig,
) -> std::result::Result<Trace, Box<RunFailure>> {
    let mut trace = Trace {
        grid: grid.clone(),
        p: cfg.p,
        cfl: cfg.cfl,
        initial: u0.clone(),
        snapshots: Vec::with_capacity(snapshots.len()),
        dt_history: Vec::new(),
        clipped: 0,
    };
    let fail = |error: Error, trace: Trace| {
        Box::new(RunFailure {
            error,
            partial: trace,
        })
    };
    if let Err(e) = check_times(u0.t, snapshots, t_end) {
        return Err(fail(e, trace));
    }
    if !(t_end > u0.t) {
        return Err(fail(
            Error::Precondition(format!("T_end = {t_end} must exceed t0 = {}", u0.t)),
            trace,
        ));
    }
    if let Err(e) = Field::new(u0.t, u0.values.clone()) {
        return Err(fail(e, trace));
    }
    let mut stepper = match Stepper::new(grid, cfg.clone()) {
        Ok(s) => s,
        Err(e) => return Err(fail(e, trace)),
    };
    let mut current = u0.clone();
    let mut previous = u0.clone();
    let mut next_snap = 0;
    let mut steps = 0u64;
    while current.t < t_end {
        if steps >= cfg.max_steps {
            trace.clipped = stepper.clipped();
            return Err(fail(
                Error::SolverAbort(format!(
                    "max_steps = {} exceeded at t = {}",
                    cfg.max_steps, current.t
                )),
                trace,
            ));
        }
        previous.t = current.t;
        previous.values.copy_from_slice(&current.values);
        let remaining = t_end - current.t;
        let info = match stepper.advance(&mut current, remaining) {
            Ok(info) => info,
            Err(e) => {
                trace.clipped = stepper.clipped();
                return Err(fail(e, trace));
            }
        };
        steps += 1;
        // land exactly on t_end despite rounding in t + dt
        if info.dt == remaining {
            current.t = t_end;
        }
        trace.dt_history.push(info.dt);
        while next_snap < snapshots.len() && snapshots[next_snap] <= current.t {
            let ts = snapshots[next_snap];
            let span = current.t - previous.t;
            let w = ((ts - previous.t) / span).clamp(0.0, 1.0);
            let values = previous
                .values
                .iter()
                .zip(&current.values)
                .map(|(a, b)| a + w * (b - a))
                .collect();
            trace.snapshots.push(Field { t: ts, values });
            next_snap += 1;
        }
    }
    trace.clipped = stepper.clipped();
    Ok(trace)
}

/// One row of a grid-refinement study.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub cells: usize,
    pub linf_error: f64,
    pub l1_error: f64,
    /// Observed L∞ order against the previous (coarser) row.
    pub order: Option<f64>,
    pub l1_order: Option<f64>,
    pub mass_drift: f64,
    pub min_value: f64,
    pub max_value: f64,
}

/// Domain radius at which the exact solution at `t_end` has decayed to `rel` of its peak.
pub fn truncation_radius(sol: &ExactSolution, t_end: f64, rel: f64) -> f64 {
    sol.tail_radius(t_end, rel)
}

/// Starts from the exact solution at `t0`, integrates to `t1` on each grid and
/// compares with the exact solution at `t1`. Runs in parallel; each run is sequential.
pub fn convergence_study(
    p: f64,
    manifold: &ModelManifold,
    grid_sizes: &[usize],
    t0: f64,
    t1: f64,
    r_outer: Option<f64>,
) -> Result<Vec<ConvergenceRow>> {
    if !(t0 > 0.0) || !(t1 > t0) {
        return Err(Error::Precondition(format!(
            "need 0 < t0 < t1, got ({t0}, {t1})"
        )));
    }
    if manifold.inner_radius() > 0.0 {
        return Err(Error::Unsupported(
            "the exact solution carries flux through r0 > 0; use r0 = 0".into(),
        ));
    }
    let sol = ExactSolution::for_manifold(p, manifold)?;
    let r_outer = r_outer.unwrap_or_else(|| truncation_radius(&sol, t1, 1e-12));
    let cfg = SolverConfig::new(p);
    // (cells, L∞ error, L1 error, mass drift, min, max)
    type Row = (usize, f64, f64, f64, f64, f64);
    let results: Vec<Result<Row>> = grid_sizes
        .par_iter()
        .map(|&cells| {
            let grid = RadialGrid::new(manifold, 0.0, r_outer, cells)?;
            let u0 = Field::from_exact(&grid, &sol, t0)?;
            let trace = run(&u0, t1, &[t1], &grid, &cfg).map_err(|f| f.error)?;
            let end = trace.snapshots.last().expect("final snapshot");
            let exact = Field::from_exact(&grid, &sol, t1)?;
            let mut linf = 0.0f64;
            let mut l1 = 0.0;
            for ((a, b), m) in end.values.iter().zip(&exact.values).zip(grid.measures()) {
                linf = linf.max((a - b).abs());
                l1 += m * (a - b).abs();
            }
            let m0 = u0.mass(&grid);
            let drift = (end.mass(&grid) - m0).abs() / m0;
            let min = trace.slices().map(Field::min).fold(f64::INFINITY, f64::min);
            Ok((cells, linf, l1, drift, min, end.max()))
        })
        .collect();
    let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(results.len());
    for r in results {
        let (cells, linf, l1, drift, min, max) = r?;
        let (order, l1_order) = match rows.last() {
            Some(prev) => {
                let ratio = (cells as f64 / prev.cells as f64).ln();
                (
                    Some((prev.linf_error / linf).ln() / ratio),
                    Some((prev.l1_error / l1).ln() / ratio),
                )
            }
            None => (None, None),
        };
        rows.push(ConvergenceRow {
            cells,
            linf_error: linf,
            l1_error: l1,
            order,
            l1_order,
            mass_drift: drift,
            min_value: min,
            max_value: max,
        });
    }
    Ok(rows)
}
