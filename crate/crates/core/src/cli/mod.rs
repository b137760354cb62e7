//! Command-line entry point: `run <config>`, `constants`, `convergence`.

pub mod config;
mod output;

use crate::constants::{lambda_threshold, ConstantsTable, DEFAULT_KAPPA};
use crate::error::{Error, Result};
use crate::exact::ExactSolution;
use crate::geometry::{ModelManifold, Region};
use crate::solver::{convergence_study, fmt17, run, Field, RadialGrid, SolverConfig, Trace};
use crate::verify::{
    self, auto_rho, check_davies_gaffney, check_integral_max_principle, check_lambda_decay,
    check_lambda_monotone, check_mass, check_mean_value_scaleinv, check_neighborhood_decay,
    check_nonnegative, check_radial_monotone, check_subgaussian_envelope, sharpness_fit,
    CheckReport, DaviesGaffneyWeight, DecayOptions, EnvelopeMode, EnvelopeOptions,
    RegularFunctionSpec, DEFAULT_TOL,
};
use clap::{Args, Parser, Subcommand};
use config::{ExperimentConfig, InitialSpec, ModeSpec, RhoSpec};
use std::io::Write;
use std::path::{Path, PathBuf};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_SOLVER_ABORT: i32 = 3;

/// Environment variable overriding `output_dir`.
pub const OUT_ENV: &str = "TRUDINGER_OUT";

#[derive(Debug, Parser)]
#[command(
    name = "trudinger",
    version,
    about = "Numerical lab for the doubly nonlinear equation u_t = Δ_p(u^{1/(p-1)})"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run an experiment described by a JSON config and write its outputs.
    Run { config: PathBuf },
    /// Print every explicit constant as CSV.
    Constants(ConstantsArgs),
    /// Grid-refinement study against the closed-form solution.
    Convergence(ConvergenceArgs),
}

#[derive(Debug, Args)]
struct ConstantsArgs {
    #[arg(long, allow_negative_numbers = true)]
    p: f64,
    #[arg(long, default_value_t = 1)]
    n: u32,
    /// Defaults to max(p, p/(p-1)).
    #[arg(long, allow_negative_numbers = true)]
    lambda: Option<f64>,
    #[arg(long, default_value_t = 2.0, allow_negative_numbers = true)]
    theta: f64,
    /// Sobolev exponent used when n <= p.
    #[arg(long, default_value_t = DEFAULT_KAPPA, allow_negative_numbers = true)]
    kappa: f64,
}

#[derive(Debug, Args)]
struct ConvergenceArgs {
    #[arg(long, allow_negative_numbers = true)]
    p: f64,
    #[arg(long, default_value_t = 1)]
    n: u32,
    #[arg(long, value_delimiter = ',', default_value = "128,256,512,1024")]
    grids: Vec<usize>,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    t0: f64,
    #[arg(long, default_value_t = 2.0, allow_negative_numbers = true)]
    t1: f64,
    #[arg(long, default_value_t = 0.9, allow_negative_numbers = true)]
    min_order: f64,
    /// Outer radius; defaults to where the exact solution drops below 1e-12 of its peak.
    #[arg(long)]
    r_max: Option<f64>,
    /// Use the polynomial model S(r) = r^{alpha-1} instead of Euclidean space.
    #[arg(long)]
    alpha: Option<f64>,
}

/// Parses `args` (program name first) and runs the command; returns the exit code.
pub fn run_cli<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            if e.use_stderr() {
                let _ = write!(err, "{text}");
            } else {
                let _ = write!(out, "{text}");
            }
            return e.exit_code();
        }
    };
    let env_out = std::env::var_os(OUT_ENV).map(PathBuf::from);
    match cli.command {
        Command::Run { config } => cmd_run(&config, env_out.as_deref(), out, err),
        Command::Constants(a) => cmd_constants(&a, out, err),
        Command::Convergence(a) => cmd_convergence(&a, out, err),
    }
}

fn cmd_constants(a: &ConstantsArgs, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let lambda = a.lambda.unwrap_or_else(|| lambda_threshold(a.p));
    match ConstantsTable::new(a.p, a.n, lambda, a.theta, a.kappa) {
        Ok(table) => {
            let mut text = String::from("name,value\n");
            for (name, value) in table.rows() {
                text.push_str(&format!("{name},{}\n", fmt17(value)));
            }
            let _ = out.write_all(text.as_bytes());
            EXIT_OK
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_INVALID
        }
    }
}

fn cmd_convergence(a: &ConvergenceArgs, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let invalid = |err: &mut dyn Write, msg: String| {
        let _ = writeln!(err, "error: {msg}");
        EXIT_INVALID
    };
    if !(a.p > 1.0) {
        return invalid(err, format!("p must be > 1, got {}", a.p));
    }
    if !(a.t0 > 0.0) || !(a.t1 > a.t0) {
        return invalid(
            err,
            format!("need 0 < t0 < t1, got t0 = {}, t1 = {}", a.t0, a.t1),
        );
    }
    if a.grids.is_empty() || a.grids.iter().any(|&g| g < RadialGrid::MIN_CELLS) {
        return invalid(
            err,
            format!("every grid needs >= {} cells", RadialGrid::MIN_CELLS),
        );
    }
    if a.grids.windows(2).any(|w| w[1] <= w[0]) {
        return invalid(err, "grid sizes must be strictly increasing".into());
    }
    let manifold = match a.alpha {
        Some(alpha) => ModelManifold::polynomial(a.n, 1.0, alpha, 0.0),
        None => ModelManifold::euclidean(a.n),
    };
    let manifold = match manifold {
        Ok(m) => m,
        Err(e) => return invalid(err, e.to_string()),
    };
    let rows = match convergence_study(a.p, &manifold, &a.grids, a.t0, a.t1, a.r_max) {
        Ok(rows) => rows,
        Err(Error::SolverAbort(msg)) => {
            let _ = writeln!(err, "solver aborted: {msg}");
            return EXIT_SOLVER_ABORT;
        }
        Err(e) => return invalid(err, e.to_string()),
    };
    let mut text = String::from("cells,linf_error,l1_error,order\n");
    let mut ok = true;
    for r in &rows {
        let order = r.order.map(fmt17).unwrap_or_default();
        if let Some(o) = r.order {
            ok &= o >= a.min_order;
        }
        text.push_str(&format!(
            "{},{},{},{order}\n",
            r.cells,
            fmt17(r.linf_error),
            fmt17(r.l1_error)
        ));
    }
    let _ = out.write_all(text.as_bytes());
    if ok {
        EXIT_OK
    } else {
        let _ = writeln!(err, "observed order below {}", a.min_order);
        EXIT_CHECK_FAILED
    }
}

/// Everything `cmd_run` builds before integrating.
struct Experiment {
    cfg: ExperimentConfig,
    grid: RadialGrid,
    u0: Field,
    times: Vec<f64>,
    region: Option<Region>,
    mean_value: Option<(f64, Vec<f64>)>,
}

impl Experiment {
    fn build(cfg: ExperimentConfig, base: &Path) -> Result<Self> {
        let manifold = cfg.build_manifold(base)?;
        let r_min = cfg.grid.r_min.unwrap_or(manifold.inner_radius());
        let grid = RadialGrid::new(&manifold, r_min, cfg.grid.r_max, cfg.grid.cells)?;
        let t0 = cfg.time.t0;
        let u0 = match &cfg.initial {
            InitialSpec::Barenblatt {} => {
                let sol = ExactSolution::for_manifold(cfg.p, &manifold)?;
                Field::from_exact(&grid, &sol, t0)?
            }
            InitialSpec::Bump { a, m } => {
                Field::from_fn(&grid, t0, |r| (1.0 - (r / a).powi(2)).max(0.0).powf(*m))?
            }
            InitialSpec::Csv { path } => {
                let (rs, us) = config::read_two_columns(&base.join(path))?;
                if rs.is_empty() || rs.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(Error::Configuration(format!(
                        "{}: radii must be nonempty and strictly increasing",
                        path.display()
                    )));
                }
                Field::from_fn(&grid, t0, |r| interpolate(&rs, &us, r))?
            }
        };
        let region = match &cfg.region {
            None => None,
            Some(spec) => {
                let rho = match spec.rho {
                    RhoSpec::Value(v) => v,
                    RhoSpec::Auto(_) => auto_rho(
                        0.0,
                        (cfg.time.t_end - t0).powf(1.0 / cfg.p),
                        spec.c,
                        spec.big_c,
                    )?,
                };
                Some(Region::new(spec.a, rho)?)
            }
        };
        let mut times = cfg.snapshot_times();
        let mean_value = if cfg.wants("mean_value") {
            let t_base = t0.max(1.0);
            let sweep: Vec<f64> = [1.0, 4.0, 16.0, 64.0, 256.0]
                .into_iter()
                .filter(|big_t| t_base + big_t <= cfg.time.t_end)
                .collect();
            for &big_t in &sweep {
                times.extend((1..=16).map(|k| t_base + big_t * k as f64 / 16.0));
            }
            if t_base > t0 {
                times.push(t_base);
            }
            Some((t_base, sweep))
        } else {
            None
        };
        times.sort_by(f64::total_cmp);
        times.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs().max(1.0));
        Ok(Self {
            cfg,
            grid,
            u0,
            times,
            region,
            mean_value,
        })
    }

    fn solver_config(&self) -> SolverConfig {
        let mut s = SolverConfig::new(self.cfg.p);
        if let Some(cfl) = self.cfg.cfl {
            s.cfl = cfl;
        }
        s
    }

    fn run_checks(&self, trace: &Trace) -> Vec<CheckReport> {
        self.cfg
            .checks
            .iter()
            .map(|name| {
                self.check(name, trace)
                    .unwrap_or_else(|e| CheckReport::skipped(name, e.to_string()))
            })
            .collect()
    }

    fn check(&self, name: &str, trace: &Trace) -> Result<CheckReport> {
        let cfg = &self.cfg;
        let (p, lambda) = (cfg.p, cfg.lambda);
        let region = || {
            self.region
                .ok_or_else(|| Error::Configuration("region block missing".into()))
        };
        let euclidean = self.grid.manifold().is_euclidean();
        match name {
            "mass" => Ok(check_mass(trace)),
            "nonnegative" => Ok(check_nonnegative(trace)),
            "lambda_monotone" => check_lambda_monotone(trace, &norm_exponents(lambda), DEFAULT_TOL),
            "radial_monotone" => Ok(check_radial_monotone(trace)),
            "max_principle" => {
                let s = cfg.time.t_end + 0.25 * (cfg.time.t_end - cfg.time.t0);
                let weight = DaviesGaffneyWeight::new(p, lambda, region()?, s)?;
                check_integral_max_principle(trace, lambda, &weight, DEFAULT_TOL)
            }
            "davies_gaffney" => {
                check_davies_gaffney(trace, lambda, region()?.a, &[1.0, 2.0, 4.0], DEFAULT_TOL)
            }
            "neighborhood_decay" => {
                let region = region()?;
                let exponent = (lambda - 1.0) * cfg.n as f64 / p;
                let gamma =
                    RegularFunctionSpec::fit(trace, lambda, &region.neighborhood(), exponent)?;
                let opts = DecayOptions {
                    theta: cfg.theta.unwrap_or(2.0),
                    ..DecayOptions::default()
                };
                check_neighborhood_decay(trace, lambda, &region, &gamma, &opts)
            }
            "lambda_decay" => {
                if !euclidean {
                    return Ok(CheckReport::skipped(name, "needs a Euclidean manifold"));
                }
                check_lambda_decay(trace, lambda, cfg.n, p).map(|(_, r)| r)
            }
            "envelope" => {
                let a = region()?.a;
                let env = cfg.envelope.clone().unwrap_or_default();
                let t_end = cfg.time.t_end;
                let times: Vec<f64> = trace
                    .times()
                    .into_iter()
                    .filter(|&t| t >= 0.25 * t_end && t > 0.0)
                    .collect();
                let root = t_end.powf(1.0 / p);
                let sigmas: Vec<f64> = env
                    .sigmas
                    .unwrap_or_else(|| (0..=16).map(|k| 0.25 * k as f64).collect())
                    .into_iter()
                    .filter(|s| a + (s + 0.5) * root <= self.grid.r_outer())
                    .collect();
                if sigmas.len() < 2 || times.is_empty() {
                    return Ok(CheckReport::skipped(
                        name,
                        "domain or snapshot schedule too small for the sweep",
                    ));
                }
                let opts = EnvelopeOptions {
                    c_exp: cfg.envelope_c_exp()?,
                    mode: match env.mode {
                        ModeSpec::Fk => EnvelopeMode::FaberKrahn,
                        ModeSpec::Sobolev => EnvelopeMode::Sobolev,
                    },
                    sigmas,
                    times,
                };
                check_subgaussian_envelope(trace, a, &opts).map(|r| r.report)
            }
            "sharpness" => {
                if !euclidean || !matches!(cfg.initial, InitialSpec::Barenblatt {}) {
                    return Ok(CheckReport::skipped(
                        name,
                        "needs a Euclidean manifold and barenblatt initial data",
                    ));
                }
                sharpness_fit(trace, cfg.n, (cfg.time.t0, cfg.time.t_end), 1e-12).map(|f| f.report)
            }
            "mean_value" => {
                let Some((t_base, sweep)) = &self.mean_value else {
                    return Err(Error::Configuration("mean-value schedule missing".into()));
                };
                if sweep.is_empty() {
                    return Ok(CheckReport::skipped(name, "t_end - t_base < 1"));
                }
                if self.grid.r_inner() > 0.0 {
                    return Ok(CheckReport::skipped(
                        name,
                        "pole-centered balls need r_min = 0",
                    ));
                }
                check_mean_value_scaleinv(&[trace], lambda, *t_base, sweep, 4.0).map(|(_, r)| r)
            }
            other => Err(Error::Configuration(format!("unknown check {other}"))),
        }
    }
}

/// `{1, 2, λ, ∞}` without duplicates.
fn norm_exponents(lambda: f64) -> Vec<f64> {
    let mut v = vec![1.0, 2.0];
    if lambda != 1.0 && lambda != 2.0 {
        v.push(lambda);
    }
    v.sort_by(f64::total_cmp);
    v.push(f64::INFINITY);
    v
}

/// Piecewise-linear interpolation; zero outside the table.
fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    if xs.is_empty() || x < xs[0] || x > xs[xs.len() - 1] {
        return 0.0;
    }
    let i = xs.partition_point(|&v| v <= x);
    if i == 0 {
        return ys[0];
    }
    if i >= xs.len() {
        return ys[xs.len() - 1];
    }
    let (x0, x1) = (xs[i - 1], xs[i]);
    let w = (x - x0) / (x1 - x0);
    ys[i - 1] + w * (ys[i] - ys[i - 1])
}

fn cmd_run(path: &Path, env_out: Option<&Path>, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let cfg = match ExperimentConfig::load(path) {
        Ok(cfg) => cfg,
        Err(e) => {
            let _ = writeln!(err, "{}: {e}", path.display());
            return EXIT_INVALID;
        }
    };
    let base = path.parent().unwrap_or(Path::new("."));
    let out_dir = env_out
        .map(Path::to_path_buf)
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("trudinger-out"));
    let exp = match Experiment::build(cfg, base) {
        Ok(exp) => exp,
        Err(e) => {
            let _ = writeln!(err, "{}: {e}", path.display());
            return EXIT_INVALID;
        }
    };
    let (trace, abort) = match run(
        &exp.u0,
        exp.cfg.time.t_end,
        &exp.times,
        &exp.grid,
        &exp.solver_config(),
    ) {
        Ok(trace) => (trace, None),
        Err(failure) => (failure.partial, Some(failure.error)),
    };
    let reports = if abort.is_some() {
        exp.cfg
            .checks
            .iter()
            .map(|c| CheckReport::skipped(c, "solver aborted"))
            .collect()
    } else {
        exp.run_checks(&trace)
    };
    let passed = reports.iter().all(CheckReport::passed);
    let code = match (&abort, passed) {
        (Some(_), _) => EXIT_SOLVER_ABORT,
        (None, true) => EXIT_OK,
        (None, false) => EXIT_CHECK_FAILED,
    };
    let summary = summary_text(&exp, &trace, &reports, abort.as_ref(), code);
    let files = [
        ("trace.csv", trace_csv(&trace)),
        ("norms.csv", norms_csv(&trace, exp.cfg.lambda)),
        ("checks.csv", checks_csv(&reports)),
        ("summary.txt", summary.clone()),
    ];
    if let Err(e) = output::write_all_atomic(&out_dir, &files) {
        let _ = writeln!(err, "cannot write outputs to {}: {e}", out_dir.display());
        return EXIT_INVALID;
    }
    let _ = out.write_all(summary.as_bytes());
    if let Some(e) = abort {
        let _ = writeln!(err, "{e}");
    }
    code
}

fn trace_csv(trace: &Trace) -> String {
    let mut buf = Vec::new();
    trace.write_csv(&mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("ascii output")
}

fn norms_csv(trace: &Trace, lambda: f64) -> String {
    let exps = norm_exponents(lambda);
    let mut text = String::from("t,lambda,norm\n");
    for f in trace.slices() {
        for &l in &exps {
            let label = if l.is_infinite() {
                "inf".to_string()
            } else {
                fmt17(l)
            };
            let norm = verify::lp_norm(f, &trace.grid, l);
            text.push_str(&format!("{},{label},{}\n", fmt17(f.t), fmt17(norm)));
        }
    }
    text
}

fn checks_csv(reports: &[CheckReport]) -> String {
    let mut rows: Vec<&verify::CheckResult> = reports.iter().flat_map(|r| &r.results).collect();
    rows.sort_by(|a, b| a.name.cmp(&b.name).then(a.t.total_cmp(&b.t)));
    let mut text = String::from("check,t,lhs,rhs,margin,pass,context\n");
    for r in rows {
        text.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.name,
            fmt17(r.t),
            fmt17(r.lhs),
            fmt17(r.rhs),
            fmt17(r.margin),
            r.pass,
            r.context.replace(',', ";")
        ));
    }
    text
}

fn summary_text(
    exp: &Experiment,
    trace: &Trace,
    reports: &[CheckReport],
    abort: Option<&Error>,
    code: i32,
) -> String {
    let cfg = &exp.cfg;
    let mut text = format!(
        "run: p={} n={} lambda={} cells={} r=[{}, {}] t=[{}, {}] snapshots={} steps={} clipped={}\n",
        cfg.p,
        cfg.n,
        cfg.lambda,
        exp.grid.cells(),
        exp.grid.r_inner(),
        exp.grid.r_outer(),
        cfg.time.t0,
        cfg.time.t_end,
        trace.snapshots.len(),
        trace.dt_history.len(),
        trace.clipped
    );
    if let Some(region) = &exp.region {
        text.push_str(&format!("region: a={} rho={}\n", region.a, region.rho));
    }
    if let Some(e) = abort {
        text.push_str(&format!("solver: {e}\n"));
    }
    for r in reports {
        text.push_str(&r.summary_line());
        text.push('\n');
    }
    let status = match code {
        EXIT_OK => "PASS",
        EXIT_CHECK_FAILED => "FAIL",
        _ => "ABORTED",
    };
    text.push_str(&format!("status: {status} (exit {code})\n"));
    text
}
