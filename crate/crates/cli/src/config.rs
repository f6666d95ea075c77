//! Run configuration: a TOML file of flat sections, overridden by flags.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use toml::{Table, Value};

/// Default output directory when neither the file nor `--out` names one.
pub const OUT_ENV: &str = "PHASEMIX_OUT";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed config: {0}")]
    Parse(String),
    #[error("{field}: {message}")]
    Field { field: String, message: String },
    #[error("output directory {path}: {source}")]
    Output {
        path: PathBuf,
        source: std::io::Error,
    },
}

fn field_error(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Field {
        field: field.to_string(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    OrbitCheck,
    PeriodTable,
    TransformCheck,
    LinearDecay,
    FrozenDecay,
    NonlinearRun,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::OrbitCheck => "orbit-check",
            Scenario::PeriodTable => "period-table",
            Scenario::TransformCheck => "transform-check",
            Scenario::LinearDecay => "linear-decay",
            Scenario::FrozenDecay => "frozen-decay",
            Scenario::NonlinearRun => "nonlinear-run",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SignCoupling {
    #[default]
    Attractive,
    Repulsive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum LayoutName {
    #[default]
    Tensor,
    Lattice,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum FieldSource {
    /// `amplitude (1 - s²)^4` on `[lo, hi]`.
    #[default]
    Bump,
    /// The potential of the profile's own markers at `t = 0`.
    SelfConsistent,
}

/// Either the string `"auto"` or a fixed positive step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DtPolicy {
    Fixed(f64),
    Named(String),
}

impl Default for DtPolicy {
    fn default() -> Self {
        DtPolicy::Named("auto".into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SupportSection {
    pub c: f64,
    pub h: f64,
    pub l1: f64,
    pub l2: f64,
    /// Node-vector floor of the three-dimensional set.
    pub n0: f64,
    /// Periapsis-cosine margin of the three-dimensional set.
    pub n1: f64,
}

impl Default for SupportSection {
    fn default() -> Self {
        Self {
            c: 0.05,
            h: 0.1,
            l1: 0.5,
            l2: 1.0,
            n0: 0.1,
            n1: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProfileSection {
    pub amplitude: f64,
    pub p: f64,
    pub modulation: f64,
    /// Mass the markers should carry; the amplitude is rescaled to match.
    /// Zero keeps the amplitude as given.
    pub mass: f64,
}

impl Default for ProfileSection {
    fn default() -> Self {
        Self {
            amplitude: 1.0,
            p: 6.0,
            modulation: 0.5,
            mass: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MarkerSection {
    pub nh: usize,
    pub nl: usize,
    pub nq: usize,
    pub layout: LayoutName,
    /// Rebuilds of the ensemble in its own potential before the run.
    pub self_consistent: usize,
}

impl Default for MarkerSection {
    fn default() -> Self {
        Self {
            nh: 256,
            nl: 4,
            nq: 100,
            layout: LayoutName::Tensor,
            self_consistent: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub bins: usize,
    pub probes: usize,
    pub modes: usize,
    pub m_nodes: usize,
    pub h_panels: usize,
    pub h_order: usize,
    pub table_h: usize,
    pub table_l: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            bins: 512,
            probes: 24,
            modes: 32,
            m_nodes: 32,
            h_panels: 32,
            h_order: 12,
            table_h: 20,
            table_l: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimeSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_final: Option<f64>,
    pub dt: DtPolicy,
    pub cadence: f64,
    /// Start of the decay fit; the smaller of 10 and a quarter of the end
    /// when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit_start: Option<f64>,
    /// End of the decay fit; the final time when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit_end: Option<f64>,
}

impl Default for TimeSection {
    fn default() -> Self {
        Self {
            t_final: None,
            dt: DtPolicy::default(),
            cadence: 1.0,
            fit_start: None,
            fit_end: None,
        }
    }
}

impl TimeSection {
    /// The decay-fit window for a run ending at `t_final`.
    pub fn fit_window(&self, t_final: f64) -> (f64, f64) {
        let end = self.fit_end.unwrap_or(t_final);
        (self.fit_start.unwrap_or((0.25 * end).min(10.0)), end)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FieldSection {
    pub source: FieldSource,
    pub amplitude: f64,
    pub lo: f64,
    pub hi: f64,
    pub nodes: usize,
}

impl Default for FieldSection {
    fn default() -> Self {
        Self {
            source: FieldSource::Bump,
            amplitude: 0.0,
            lo: 1.0,
            hi: 3.0,
            nodes: 4001,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OrbitSection {
    pub h: f64,
    pub l: f64,
    /// Random states drawn by `transform-check`.
    pub samples: usize,
}

impl Default for OrbitSection {
    fn default() -> Self {
        Self {
            h: -0.3,
            l: 0.8,
            samples: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckSection {
    pub energy: f64,
    pub jacobian: f64,
    pub period: f64,
    pub identity: f64,
    pub round_trip: f64,
    /// Largest fitted decay exponent accepted by the decay scenarios.
    pub max_exponent: f64,
}

impl Default for CheckSection {
    fn default() -> Self {
        Self {
            energy: 1e-4,
            jacobian: 1e-4,
            period: 1e-8,
            identity: 1e-12,
            round_trip: 1e-9,
            max_exponent: 0.0,
        }
    }
}

/// The resolved configuration. Serializing it gives a file that reproduces
/// the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: Scenario,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub workers: usize,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub coupling: SignCoupling,
    #[serde(default)]
    pub support: SupportSection,
    #[serde(default)]
    pub profile: ProfileSection,
    #[serde(default)]
    pub markers: MarkerSection,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub time: TimeSection,
    #[serde(default)]
    pub field: FieldSection,
    #[serde(default)]
    pub orbit: OrbitSection,
    #[serde(default)]
    pub checks: CheckSection,
}

fn one() -> usize {
    1
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub scenario: Option<Scenario>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
    pub seed: Option<u64>,
    pub t_final: Option<f64>,
    /// `section.key=value` assignments; the value is read as TOML when it
    /// parses, as a string otherwise.
    pub set: Vec<String>,
}

/// A validated configuration and the keys that flags changed.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub config: RunConfig,
    pub overridden: Vec<String>,
}

impl Resolved {
    pub fn out_dir(&self) -> &Path {
        self.config
            .out
            .as_deref()
            .expect("resolved configs name an output directory")
    }

    pub fn t_final(&self) -> f64 {
        self.config
            .time
            .t_final
            .expect("resolved configs have a final time")
    }

    /// The echo written next to the outputs.
    pub fn echo(&self) -> String {
        let mut s = String::new();
        if !self.overridden.is_empty() {
            s.push_str(&format!(
                "# set from the command line: {}\n",
                self.overridden.join(", ")
            ));
        }
        s.push_str(&toml::to_string(&self.config).expect("configs serialize"));
        s
    }
}

fn parse_scalar(raw: &str) -> Value {
    let doc = format!("v = {raw}");
    match doc.parse::<Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| Value::String(raw.into())),
        Err(_) => Value::String(raw.into()),
    }
}

fn assign(table: &mut Table, key: &str, value: Value) -> Result<(), ConfigError> {
    let parts: Vec<&str> = key.split('.').collect();
    match parts.as_slice() {
        [k] => {
            table.insert((*k).to_string(), value);
        }
        [section, k] => {
            let entry = table
                .entry((*section).to_string())
                .or_insert_with(|| Value::Table(Table::new()));
            match entry {
                Value::Table(t) => {
                    t.insert((*k).to_string(), value);
                }
                _ => return Err(field_error(section, "is not a section")),
            }
        }
        _ => {
            return Err(field_error(
                key,
                "keys have the form `key` or `section.key`",
            ))
        }
    }
    Ok(())
}

/// Reads `path` (if any), applies `flags`, fills defaults and validates.
pub fn parse_config(path: Option<&Path>, flags: &Overrides) -> Result<Resolved, ConfigError> {
    let mut table = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|source| ConfigError::Read {
                path: p.to_path_buf(),
                source,
            })?;
            text.parse::<Table>()
                .map_err(|e| ConfigError::Parse(e.to_string()))?
        }
        None => Table::new(),
    };
    let mut overridden = Vec::new();
    let mut apply = |table: &mut Table, key: &str, value: Value| -> Result<(), ConfigError> {
        assign(table, key, value)?;
        if !overridden.iter().any(|k| k == key) {
            overridden.push(key.to_string());
        }
        Ok(())
    };
    for item in &flags.set {
        let (key, raw) = item
            .split_once('=')
            .ok_or_else(|| field_error(item, "expected `section.key=value`"))?;
        apply(&mut table, key.trim(), parse_scalar(raw.trim()))?;
    }
    if let Some(s) = flags.scenario {
        apply(&mut table, "scenario", Value::String(s.name().into()))?;
    }
    if let Some(o) = &flags.out {
        apply(&mut table, "out", Value::String(o.display().to_string()))?;
    }
    if let Some(w) = flags.workers {
        apply(&mut table, "workers", Value::Integer(w as i64))?;
    }
    if let Some(s) = flags.seed {
        let v = i64::try_from(s)
            .map_err(|_| field_error("seed", "must fit in a signed 64-bit integer"))?;
        apply(&mut table, "seed", Value::Integer(v))?;
    }
    if let Some(t) = flags.t_final {
        apply(&mut table, "time.t_final", Value::Float(t))?;
    }
    if !table.contains_key("scenario") {
        return Err(field_error(
            "scenario",
            "required (subcommand or `scenario = ...`)",
        ));
    }
    let mut config: RunConfig = Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
    if config.out.is_none() {
        let dir = std::env::var_os(OUT_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("phasemix-out"));
        config.out = Some(dir);
    }
    validate(&config)?;
    Ok(Resolved { config, overridden })
}

/// Number of steps of size `dt` per output interval, if `dt` divides it.
pub fn steps_per(interval: f64, dt: f64) -> Option<usize> {
    let n = (interval / dt).round();
    ((n * dt - interval).abs() <= 1e-9 * interval && n >= 1.0).then_some(n as usize)
}

fn positive(field: &str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(field_error(
            field,
            format!("must be finite and positive, got {v}"),
        ))
    }
}

fn at_least(field: &str, v: usize, min: usize) -> Result<(), ConfigError> {
    if v >= min {
        Ok(())
    } else {
        Err(field_error(
            field,
            format!("must be at least {min}, got {v}"),
        ))
    }
}

pub fn validate(c: &RunConfig) -> Result<(), ConfigError> {
    let t_final = c
        .time
        .t_final
        .ok_or_else(|| field_error("time.t_final", "required"))?;
    positive("time.t_final", t_final)?;
    positive("time.cadence", c.time.cadence)?;
    at_least("workers", c.workers, 1)?;
    let intervals = t_final / c.time.cadence;
    if (intervals - intervals.round()).abs() > 1e-9 * intervals.max(1.0) {
        return Err(field_error(
            "time.cadence",
            format!(
                "must divide time.t_final = {t_final}, got {}",
                c.time.cadence
            ),
        ));
    }
    match &c.time.dt {
        DtPolicy::Fixed(dt) => {
            positive("time.dt", *dt)?;
            if steps_per(c.time.cadence, *dt).is_none() {
                return Err(field_error(
                    "time.dt",
                    format!("must divide time.cadence = {}, got {dt}", c.time.cadence),
                ));
            }
        }
        DtPolicy::Named(n) if n == "auto" => {}
        DtPolicy::Named(n) => {
            return Err(field_error(
                "time.dt",
                format!("expected a number or \"auto\", got {n:?}"),
            ))
        }
    }
    let (start, end) = c.time.fit_window(t_final);
    if end > t_final {
        return Err(field_error(
            "time.fit_end",
            format!("exceeds time.t_final = {t_final}"),
        ));
    }
    let fits = matches!(
        c.scenario,
        Scenario::LinearDecay | Scenario::FrozenDecay | Scenario::NonlinearRun
    );
    if fits && !(start >= 1.0 && end > 2.0 * start) {
        return Err(field_error(
            "time.fit_start",
            format!("the fit window [{start}, {end}] needs a start of at least 1 and an end past twice the start"),
        ));
    }
    let s = &c.support;
    for (k, v) in [
        ("support.c", s.c),
        ("support.h", s.h),
        ("support.l1", s.l1),
        ("support.l2", s.l2),
    ] {
        positive(k, v)?;
    }
    if s.l1 >= s.l2 {
        return Err(field_error("support.l2", "must exceed support.l1"));
    }
    if -0.5 / s.l1 + s.c >= -s.h {
        return Err(field_error(
            "support",
            "the energy window is empty at L = l1",
        ));
    }
    positive("support.n0", s.n0)?;
    positive("support.n1", s.n1)?;
    let p = &c.profile;
    if !(p.amplitude.is_finite() && p.amplitude >= 0.0) {
        return Err(field_error(
            "profile.amplitude",
            "must be finite and non-negative",
        ));
    }
    if !(p.p >= 1.0 && p.p.is_finite()) {
        return Err(field_error(
            "profile.p",
            format!("must be at least 1, got {}", p.p),
        ));
    }
    if !(0.0..1.0).contains(&p.modulation) {
        return Err(field_error("profile.modulation", "must lie in [0, 1)"));
    }
    if !(p.mass.is_finite() && p.mass >= 0.0) {
        return Err(field_error(
            "profile.mass",
            "must be finite and non-negative",
        ));
    }
    at_least("markers.nh", c.markers.nh, 2)?;
    at_least("markers.nl", c.markers.nl, 2)?;
    at_least("markers.nq", c.markers.nq, 2)?;
    at_least("grid.bins", c.grid.bins, 8)?;
    at_least("grid.probes", c.grid.probes, 1)?;
    at_least("grid.m_nodes", c.grid.m_nodes, 2)?;
    at_least("grid.h_panels", c.grid.h_panels, 1)?;
    at_least("grid.h_order", c.grid.h_order, 2)?;
    at_least("grid.table_h", c.grid.table_h, 2)?;
    at_least("grid.table_l", c.grid.table_l, 2)?;
    if !(c.field.amplitude.is_finite()) {
        return Err(field_error("field.amplitude", "must be finite"));
    }
    if !(c.field.lo > 0.0 && c.field.hi > c.field.lo) {
        return Err(field_error("field.hi", "need 0 < field.lo < field.hi"));
    }
    at_least("field.nodes", c.field.nodes, 8)?;
    if !(c.orbit.h < 0.0) {
        return Err(field_error("orbit.h", "must be negative"));
    }
    positive("orbit.l", c.orbit.l)?;
    at_least("orbit.samples", c.orbit.samples, 1)?;
    for (k, v) in [
        ("checks.energy", c.checks.energy),
        ("checks.jacobian", c.checks.jacobian),
        ("checks.period", c.checks.period),
        ("checks.identity", c.checks.identity),
        ("checks.round_trip", c.checks.round_trip),
    ] {
        positive(k, v)?;
    }
    let out = c
        .out
        .as_deref()
        .ok_or_else(|| field_error("out", "required"))?;
    std::fs::create_dir_all(out).map_err(|source| ConfigError::Output {
        path: out.to_path_buf(),
        source,
    })?;
    let probe = out.join(".phasemix-write-test");
    std::fs::write(&probe, b"").map_err(|source| ConfigError::Output {
        path: out.to_path_buf(),
        source,
    })?;
    let _ = std::fs::remove_file(probe);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flags(out: &Path) -> Overrides {
        Overrides {
            scenario: Some(Scenario::LinearDecay),
            out: Some(out.to_path_buf()),
            ..Overrides::default()
        }
    }

    #[test]
    fn missing_final_time_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let err = parse_config(None, &flags(dir.path())).unwrap_err();
        assert!(err.to_string().contains("time.t_final"), "{err}");
    }

    #[test]
    fn minimal_file_gets_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(
            &path,
            "scenario = \"linear-decay\"\n[time]\nt_final = 20.0\n",
        )
        .unwrap();
        let mut f = flags(dir.path());
        f.scenario = None;
        let r = parse_config(Some(&path), &f).unwrap();
        assert_eq!(r.config.grid.bins, 512);
        assert_eq!(r.config.grid.modes, 32);
        assert_eq!(r.config.time.dt, DtPolicy::Named("auto".into()));
        assert_eq!(r.config.scenario, Scenario::LinearDecay);
    }

    #[test]
    fn flags_beat_the_file_and_are_recorded() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(
            &path,
            "scenario = \"period-table\"\nseed = 3\n[time]\nt_final = 20.0\n",
        )
        .unwrap();
        let mut f = flags(dir.path());
        f.seed = Some(9);
        f.set = vec!["grid.probes=5".into()];
        let r = parse_config(Some(&path), &f).unwrap();
        assert_eq!(r.config.seed, 9);
        assert_eq!(r.config.grid.probes, 5);
        assert_eq!(r.config.scenario, Scenario::LinearDecay);
        let echo = r.echo();
        assert!(echo.contains("seed = 9"));
        assert!(echo.lines().next().unwrap().contains("seed"));
        let again = dir.path().join("echo.toml");
        std::fs::write(&again, &echo).unwrap();
        let r2 = parse_config(Some(&again), &Overrides::default()).unwrap();
        assert_eq!(r2.config, r.config);
    }

    #[test]
    fn field_errors_name_the_key() {
        let dir = tempfile::tempdir().unwrap();
        let mut f = flags(dir.path());
        f.t_final = Some(10.0);
        f.set = vec!["time.cadence=3".into()];
        let err = parse_config(None, &f).unwrap_err();
        assert!(err.to_string().starts_with("time.cadence"), "{err}");
        f.set = vec!["time.dt=0.3".into()];
        let err = parse_config(None, &f).unwrap_err();
        assert!(err.to_string().starts_with("time.dt"), "{err}");
        f.set = vec!["profile.modulation=1.5".into()];
        let err = parse_config(None, &f).unwrap_err();
        assert!(err.to_string().starts_with("profile.modulation"), "{err}");
        f.set = vec!["grid.bogus=1".into()];
        assert!(matches!(parse_config(None, &f), Err(ConfigError::Parse(_))));
    }

    #[test]
    fn divisibility() {
        assert_eq!(steps_per(1.0, 0.1), Some(10));
        assert_eq!(steps_per(0.5, 0.1), Some(5));
        assert_eq!(steps_per(1.0, 0.3), None);
    }
}
