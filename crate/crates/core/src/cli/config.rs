//! Experiment configuration: strict JSON, validated at load.

use crate::constants::{lambda_threshold, zeta_barenblatt};
use crate::error::{Error, Result};
use crate::geometry::ModelManifold;
use serde::Deserialize;
use std::path::{Path, PathBuf};

/// Checks accepted in `checks`, in report order.
pub const CHECK_NAMES: [&str; 11] = [
    "mass",
    "nonnegative",
    "lambda_monotone",
    "radial_monotone",
    "max_principle",
    "davies_gaffney",
    "neighborhood_decay",
    "lambda_decay",
    "envelope",
    "sharpness",
    "mean_value",
];

/// Checks that need `lambda >= max(p, p/(p-1))`.
const LAMBDA_GATED: [&str; 3] = ["max_principle", "davies_gaffney", "neighborhood_decay"];
/// Checks that need a `region` block.
const REGION_GATED: [&str; 4] = [
    "max_principle",
    "davies_gaffney",
    "neighborhood_decay",
    "envelope",
];

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub p: f64,
    pub n: u32,
    pub manifold: ManifoldSpec,
    pub grid: GridSpec,
    pub time: TimeSpec,
    pub initial: InitialSpec,
    pub lambda: f64,
    #[serde(default)]
    pub region: Option<RegionSpec>,
    #[serde(default)]
    pub checks: Vec<String>,
    #[serde(default)]
    pub envelope: Option<EnvelopeSpec>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub cfl: Option<f64>,
    #[serde(default)]
    pub theta: Option<f64>,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ManifoldSpec {
    Euclidean {},
    Polynomial {
        #[serde(rename = "C")]
        c: f64,
        alpha: f64,
        #[serde(default)]
        r0: f64,
    },
    Custom {
        csv: PathBuf,
    },
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(default)]
    pub r_min: Option<f64>,
    pub r_max: f64,
    pub cells: usize,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum Snapshots {
    Count(usize),
    Times(Vec<f64>),
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq, Default)]
#[serde(rename_all = "lowercase")]
pub enum Spacing {
    Linear,
    #[default]
    Log,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TimeSpec {
    pub t0: f64,
    pub t_end: f64,
    pub snapshots: Snapshots,
    #[serde(default)]
    pub spacing: Spacing,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum InitialSpec {
    Barenblatt {},
    Bump {
        a: f64,
        #[serde(default = "default_bump_power")]
        m: f64,
    },
    Csv {
        path: PathBuf,
    },
}

fn default_bump_power() -> f64 {
    2.0
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum RhoSpec {
    Value(f64),
    Auto(String),
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RegionSpec {
    pub a: f64,
    pub rho: RhoSpec,
    #[serde(default = "default_rho_c")]
    pub c: f64,
    #[serde(rename = "C", default = "default_rho_big_c")]
    pub big_c: f64,
}

fn default_rho_c() -> f64 {
    0.5
}

fn default_rho_big_c() -> f64 {
    2.0
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq, Default)]
#[serde(rename_all = "lowercase")]
pub enum ModeSpec {
    #[default]
    Fk,
    Sobolev,
}

#[derive(Debug, Clone, Deserialize, PartialEq, Default)]
#[serde(deny_unknown_fields)]
pub struct EnvelopeSpec {
    #[serde(default)]
    pub c_exp: Option<f64>,
    #[serde(default)]
    pub mode: ModeSpec,
    #[serde(default)]
    pub sigmas: Option<Vec<f64>>,
}

/// A configuration error pointing at the offending line, when one can be found.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.line {
            Some(line) => write!(f, "line {line}: {}", self.message),
            None => write!(f, "{}", self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

/// 1-based line of the first `"key"` in `text`.
fn line_of(text: &str, key: &str) -> Option<usize> {
    let needle = format!("\"{key}\"");
    text.lines()
        .position(|l| l.contains(&needle))
        .map(|i| i + 1)
}

impl ExperimentConfig {
    /// Parses and validates `text`; semantic errors carry the line of the key involved.
    pub fn parse(text: &str) -> std::result::Result<Self, ConfigError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| ConfigError {
            line: (e.line() > 0).then_some(e.line()),
            message: e.to_string(),
        })?;
        cfg.validate().map_err(|(key, message)| ConfigError {
            line: line_of(text, key),
            message,
        })?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> std::result::Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
            line: None,
            message: format!("cannot read {}: {e}", path.display()),
        })?;
        Self::parse(&text)
    }

    pub fn wants(&self, check: &str) -> bool {
        self.checks.iter().any(|c| c == check)
    }

    // Err((key, message)).
    fn validate(&self) -> std::result::Result<(), (&'static str, String)> {
        let fail = |key: &'static str, msg: String| Err((key, msg));
        if !(self.p > 1.0) || !self.p.is_finite() {
            return fail("p", format!("p must be > 1, got {}", self.p));
        }
        if self.n == 0 {
            return fail("n", "n must be >= 1".into());
        }
        match &self.manifold {
            ManifoldSpec::Polynomial { c, alpha, r0 } => {
                if !(*c > 0.0) || !(*alpha > 0.0 && *alpha <= self.n as f64) || !(*r0 >= 0.0) {
                    return fail(
                        "manifold",
                        format!("polynomial profile needs C > 0, 0 < alpha <= n, r0 >= 0; got C = {c}, alpha = {alpha}, r0 = {r0}"),
                    );
                }
            }
            ManifoldSpec::Custom { .. } => {
                if matches!(self.initial, InitialSpec::Barenblatt {}) {
                    return fail(
                        "initial",
                        "no closed-form solution on a tabulated profile".into(),
                    );
                }
            }
            ManifoldSpec::Euclidean {} => {}
        }
        let r_min = self.grid.r_min.unwrap_or(0.0);
        if self.grid.cells < 16 {
            return fail(
                "cells",
                format!("cells must be >= 16, got {}", self.grid.cells),
            );
        }
        if !(r_min >= 0.0) || !(self.grid.r_max > r_min) || !self.grid.r_max.is_finite() {
            return fail(
                "r_max",
                format!(
                    "need 0 <= r_min < r_max, got [{r_min}, {}]",
                    self.grid.r_max
                ),
            );
        }
        let TimeSpec { t0, t_end, .. } = self.time;
        if !(t0 >= 0.0) || !(t_end > t0) || !t_end.is_finite() {
            return fail(
                "t_end",
                format!("need 0 <= t0 < t_end, got t0 = {t0}, t_end = {t_end}"),
            );
        }
        match &self.time.snapshots {
            Snapshots::Count(0) => return fail("snapshots", "snapshot count must be >= 1".into()),
            Snapshots::Times(ts) => {
                if ts.is_empty() {
                    return fail("snapshots", "snapshot list is empty".into());
                }
                if ts.windows(2).any(|w| !(w[1] > w[0])) {
                    return fail(
                        "snapshots",
                        "snapshot times must be strictly increasing".into(),
                    );
                }
                if !(ts[0] > t0) || !(ts[ts.len() - 1] <= t_end) {
                    return fail(
                        "snapshots",
                        format!("snapshot times must lie in (t0, t_end] = ({t0}, {t_end}]"),
                    );
                }
            }
            Snapshots::Count(_) => {}
        }
        match &self.initial {
            InitialSpec::Barenblatt {} if !(t0 > 0.0) => {
                return fail("t0", "barenblatt initial data needs t0 > 0".into());
            }
            InitialSpec::Bump { a, m } if !(*a > 0.0) || !(*m >= 1.0) => {
                return fail(
                    "initial",
                    format!("bump needs a > 0 and m >= 1, got a = {a}, m = {m}"),
                );
            }
            _ => {}
        }
        if !(self.lambda >= 1.0) || !self.lambda.is_finite() {
            return fail(
                "lambda",
                format!("lambda must be finite and >= 1, got {}", self.lambda),
            );
        }
        for check in &self.checks {
            if !CHECK_NAMES.contains(&check.as_str()) {
                return fail(
                    "checks",
                    format!(
                        "unknown check `{check}`; known checks: {}",
                        CHECK_NAMES.join(", ")
                    ),
                );
            }
        }
        let threshold = lambda_threshold(self.p);
        if let Some(check) = LAMBDA_GATED.iter().find(|c| self.wants(c)) {
            if self.lambda < threshold * (1.0 - 1e-12) {
                return fail(
                    "lambda",
                    format!(
                        "check `{check}` requires lambda >= max(p, p/(p-1)) = {threshold}, got lambda = {}",
                        self.lambda
                    ),
                );
            }
        }
        if let Some(check) = REGION_GATED.iter().find(|c| self.wants(c)) {
            if self.region.is_none() {
                return fail("checks", format!("check `{check}` needs a `region` block"));
            }
        }
        if let Some(region) = &self.region {
            if !(region.a >= 0.0) || !region.a.is_finite() {
                return fail(
                    "region",
                    format!("region radius a must be >= 0, got {}", region.a),
                );
            }
            match &region.rho {
                RhoSpec::Value(rho) if !(*rho >= 0.0) || !rho.is_finite() => {
                    return fail("rho", format!("rho must be >= 0 or \"auto\", got {rho}"));
                }
                RhoSpec::Auto(s) if s != "auto" => {
                    return fail(
                        "rho",
                        format!("rho must be a number or \"auto\", got \"{s}\""),
                    );
                }
                _ => {}
            }
            if self.wants("neighborhood_decay") && region.rho == RhoSpec::Value(0.0) {
                return fail("rho", "neighborhood_decay needs rho > 0".into());
            }
        }
        if let Some(env) = &self.envelope {
            if let Some(c) = env.c_exp {
                if !(c > 0.0) || !c.is_finite() {
                    return fail("c_exp", format!("c_exp must be > 0, got {c}"));
                }
            }
            if let Some(s) = &env.sigmas {
                if s.len() < 2 || s.iter().any(|x| !(*x >= 0.0)) {
                    return fail("sigmas", "sigmas needs >= 2 values, all >= 0".into());
                }
            }
        }
        if let Some(cfl) = self.cfl {
            if !(cfl > 0.0 && cfl <= 1.0) {
                return fail("cfl", format!("cfl must lie in (0, 1], got {cfl}"));
            }
        }
        if let Some(theta) = self.theta {
            if !(theta > 1.0) || !theta.is_finite() {
                return fail("theta", format!("theta must be > 1, got {theta}"));
            }
        }
        Ok(())
    }

    /// Snapshot times from the `time` block.
    pub fn snapshot_times(&self) -> Vec<f64> {
        let TimeSpec { t0, t_end, .. } = self.time;
        match &self.time.snapshots {
            Snapshots::Times(ts) => ts.clone(),
            Snapshots::Count(k) => {
                let k = *k;
                let mut ts: Vec<f64> = match self.time.spacing {
                    Spacing::Linear => (1..=k)
                        .map(|i| t0 + (t_end - t0) * i as f64 / k as f64)
                        .collect(),
                    // elapsed times log-spaced over three decades
                    Spacing::Log => {
                        let span = t_end - t0;
                        if k == 1 {
                            vec![t_end]
                        } else {
                            (0..k)
                                .map(|i| {
                                    t0 + span * 10f64.powf(-3.0 + 3.0 * i as f64 / (k - 1) as f64)
                                })
                                .collect()
                        }
                    }
                };
                if let Some(last) = ts.last_mut() {
                    *last = t_end;
                }
                ts
            }
        }
    }

    /// The manifold; tabulated profiles are read from `base`-relative CSV files.
    pub fn build_manifold(&self, base: &Path) -> Result<ModelManifold> {
        match &self.manifold {
            ManifoldSpec::Euclidean {} => ModelManifold::euclidean(self.n),
            ManifoldSpec::Polynomial { c, alpha, r0 } => {
                ModelManifold::polynomial(self.n, *c, *alpha, *r0)
            }
            ManifoldSpec::Custom { csv } => {
                let (r, s) = read_two_columns(&base.join(csv))?;
                ModelManifold::custom(self.n, r, s)
            }
        }
    }

    pub fn envelope_c_exp(&self) -> Result<f64> {
        match self.envelope.as_ref().and_then(|e| e.c_exp) {
            Some(c) => Ok(c),
            None => Ok(zeta_barenblatt(self.p)? / 2.0),
        }
    }
}

/// Reads a two-column numeric CSV with a header row.
pub fn read_two_columns(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| Error::Configuration(format!("{}: {e}", path.display())))?;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record =
            record.map_err(|e| Error::Configuration(format!("{}: {e}", path.display())))?;
        let parse = |j: usize| -> Result<f64> {
            record
                .get(j)
                .and_then(|v| v.trim().parse::<f64>().ok())
                .ok_or_else(|| {
                    Error::Configuration(format!(
                        "{}: row {} needs two numeric columns",
                        path.display(),
                        i + 2
                    ))
                })
        };
        xs.push(parse(0)?);
        ys.push(parse(1)?);
    }
    Ok((xs, ys))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
  "p": 2,
  "n": 1,
  "manifold": {"kind": "euclidean"},
  "grid": {"r_max": 20, "cells": 100},
  "time": {"t0": 1, "t_end": 2, "snapshots": 4},
  "initial": {"kind": "barenblatt"},
  "lambda": 2,
  "checks": ["mass", "lambda_monotone"]
}"#;

    #[test]
    fn minimal_config_parses() {
        let cfg = ExperimentConfig::parse(MINIMAL).unwrap();
        assert_eq!(cfg.p, 2.0);
        assert!(cfg.wants("mass") && !cfg.wants("envelope"));
        let ts = cfg.snapshot_times();
        assert_eq!(ts.len(), 4);
        assert_eq!(ts[3], 2.0);
        assert!((ts[0] - 1.001).abs() < 1e-15);
    }

    #[test]
    fn unknown_key_is_named() {
        let text = MINIMAL.replace("\"lambda\": 2,", "\"lambda\": 2,\n  \"foo\": 1,");
        let err = ExperimentConfig::parse(&text).unwrap_err();
        assert!(err.message.contains("foo"), "{err}");
        assert_eq!(err.line, Some(9));
    }

    #[test]
    fn lambda_precondition_points_at_the_key() {
        let text = MINIMAL
            .replace("\"lambda\": 2", "\"lambda\": 1.5")
            .replace("[\"mass\", \"lambda_monotone\"]", "[\"davies_gaffney\"]")
            .replace(
                "\"checks\"",
                "\"region\": {\"a\": 1, \"rho\": 1},\n  \"checks\"",
            );
        let err = ExperimentConfig::parse(&text).unwrap_err();
        assert_eq!(err.line, Some(8));
        assert!(err.message.contains("max(p, p/(p-1))"), "{err}");
    }

    #[test]
    fn semantic_errors() {
        for (from, to) in [
            ("\"p\": 2", "\"p\": 1"),
            ("\"cells\": 100", "\"cells\": 8"),
            ("\"t_end\": 2", "\"t_end\": 1"),
            ("\"t0\": 1", "\"t0\": 0"),
            ("[\"mass\", \"lambda_monotone\"]", "[\"mass\", \"bogus\"]"),
            ("[\"mass\", \"lambda_monotone\"]", "[\"envelope\"]"),
            ("\"snapshots\": 4", "\"snapshots\": [1.5, 1.2]"),
        ] {
            let text = MINIMAL.replace(from, to);
            assert!(ExperimentConfig::parse(&text).is_err(), "{to}");
        }
    }

    #[test]
    fn tagged_blocks_reject_unknown_fields() {
        let text = MINIMAL.replace(
            "{\"kind\": \"euclidean\"}",
            "{\"kind\": \"euclidean\", \"C\": 1}",
        );
        assert!(ExperimentConfig::parse(&text).is_err());
        let text = MINIMAL.replace(
            "{\"kind\": \"barenblatt\"}",
            "{\"kind\": \"bump\", \"a\": 1, \"width\": 2}",
        );
        assert!(ExperimentConfig::parse(&text).is_err());
    }

    #[test]
    fn rho_accepts_number_or_auto() {
        let base = MINIMAL.replace(
            "\"checks\"",
            "\"region\": {\"a\": 1, \"rho\": RHO},\n  \"checks\"",
        );
        assert!(ExperimentConfig::parse(&base.replace("RHO", "\"auto\"")).is_ok());
        assert!(ExperimentConfig::parse(&base.replace("RHO", "2.5")).is_ok());
        assert!(ExperimentConfig::parse(&base.replace("RHO", "\"big\"")).is_err());
        assert!(ExperimentConfig::parse(&base.replace("RHO", "-1")).is_err());
    }
}
