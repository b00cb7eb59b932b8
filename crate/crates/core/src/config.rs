//! Flat `key = value` run and sweep configuration.
//!
//! Every key has a default, so an empty file is a valid run. The resolved
//! configuration written next to outputs loads back to itself.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{FlrError, Result};
use crate::external::ExternalField;
use crate::field::{GridSpec, PoissonModel};
use crate::sampling::Loading;

/// Relative tolerance for "is an integer number of steps".
const STEP_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Model {
    Quasineutral,
    FixedIons,
    /// Scaled system driven by the prescribed `external_field` only.
    External,
    LimitSelf,
    LimitExternal,
}

impl Model {
    pub fn is_limit(self) -> bool {
        matches!(self, Model::LimitSelf | Model::LimitExternal)
    }

    /// Poisson variant of a self-consistent scaled model.
    pub fn poisson(self) -> Option<PoissonModel> {
        match self {
            Model::Quasineutral => Some(PoissonModel::Quasineutral),
            Model::FixedIons => Some(PoissonModel::FixedIons),
            Model::LimitSelf => Some(PoissonModel::Limit),
            Model::External | Model::LimitExternal => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Model::Quasineutral => "quasineutral",
            Model::FixedIons => "fixed_ions",
            Model::External => "external",
            Model::LimitSelf => "limit_self",
            Model::LimitExternal => "limit_external",
        }
    }
}

impl FromStr for Model {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "quasineutral" => Ok(Model::Quasineutral),
            "fixed_ions" => Ok(Model::FixedIons),
            "external" => Ok(Model::External),
            "limit_self" => Ok(Model::LimitSelf),
            "limit_external" => Ok(Model::LimitExternal),
            _ => Err("expected quasineutral, fixed_ions, external, limit_self or limit_external".into()),
        }
    }
}

/// Integrator for the scaled system.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pusher {
    /// Strang splitting in physical coordinates with the exact fast flow.
    Direct,
    /// Midpoint integration of the filtered characteristics.
    Filtered,
}

impl Pusher {
    pub fn name(self) -> &'static str {
        match self {
            Pusher::Direct => "direct",
            Pusher::Filtered => "filtered",
        }
    }
}

impl FromStr for Pusher {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "direct" => Ok(Pusher::Direct),
            "filtered" => Ok(Pusher::Filtered),
            _ => Err("expected direct or filtered".into()),
        }
    }
}

/// One simulation, fully resolved (`dt = auto` already replaced).
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: Model,
    pub epsilon: f64,
    pub grid: GridSpec,
    pub particles: usize,
    /// `None` means `auto`: `ε/20` for scaled models, `1/100` for limit models.
    pub dt: Option<f64>,
    pub t_end: f64,
    pub amplitude: f64,
    pub mode_perp: u32,
    pub mode_par: u32,
    pub v_max: f64,
    pub n_tau: usize,
    pub pusher: Pusher,
    pub external_field: ExternalField,
    pub diag_stride: usize,
    pub output_dir: PathBuf,
    pub snapshot_times: Vec<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: Model::Quasineutral,
            epsilon: 0.1,
            grid: GridSpec { n1: 32, n2: 32, n3: 16 },
            particles: 100_000,
            dt: None,
            t_end: 0.5,
            amplitude: 0.1,
            mode_perp: 1,
            mode_par: 1,
            v_max: 5.0,
            n_tau: 16,
            pusher: Pusher::Direct,
            external_field: ExternalField::default(),
            diag_stride: 10,
            output_dir: PathBuf::from("out"),
            snapshot_times: Vec::new(),
        }
    }
}

impl RunConfig {
    /// Time step with `auto` resolved.
    pub fn dt(&self) -> f64 {
        match self.dt {
            Some(dt) => dt,
            None if self.model.is_limit() => 0.01,
            None => self.epsilon / 20.0,
        }
    }

    /// Number of steps to reach `t_end`.
    pub fn steps(&self) -> usize {
        (self.t_end / self.dt()).round() as usize
    }

    pub fn loading(&self) -> Loading {
        Loading {
            particles: self.particles,
            amplitude: self.amplitude,
            mode_perp: self.mode_perp,
            mode_par: self.mode_par,
            v_max: self.v_max,
        }
    }

    /// Step indices at which snapshots are due.
    pub fn snapshot_steps(&self) -> Vec<usize> {
        let dt = self.dt();
        self.snapshot_times.iter().map(|t| (t / dt).round() as usize).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |k: &str, m: String| Err(FlrError::config(k, m));
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return cfg("epsilon", format!("must lie in (0, 1], got {}", self.epsilon));
        }
        for (k, n) in [("n1", self.grid.n1), ("n2", self.grid.n2), ("n3", self.grid.n3)] {
            if n < 4 || n % 2 != 0 {
                return cfg(k, format!("must be even and >= 4, got {n}"));
            }
        }
        if self.particles == 0 {
            return cfg("particles", "must be positive".into());
        }
        let dt = self.dt();
        if !(dt > 0.0 && dt.is_finite()) {
            return cfg("dt", format!("must be positive, got {dt}"));
        }
        if !self.model.is_limit() && dt > self.epsilon / 4.0 * (1.0 + STEP_TOLERANCE) {
            return cfg(
                "dt",
                format!("must not exceed epsilon/4 = {}, got {dt}", self.epsilon / 4.0),
            );
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return cfg("t_end", format!("must be non-negative, got {}", self.t_end));
        }
        if !is_step_multiple(self.t_end, dt) {
            return cfg("t_end", format!("must be an integer multiple of dt = {dt}"));
        }
        if !(0.0..1.0).contains(&self.amplitude) {
            return cfg("amplitude", format!("must lie in [0, 1), got {}", self.amplitude));
        }
        if !(self.v_max > 0.0 && self.v_max.is_finite()) {
            return cfg("v_max", format!("must be positive, got {}", self.v_max));
        }
        if self.n_tau < 4 {
            return cfg("n_tau", format!("must be >= 4, got {}", self.n_tau));
        }
        if self.diag_stride == 0 {
            return cfg("diag_stride", "must be >= 1".into());
        }
        for &t in &self.snapshot_times {
            if !(0.0..=self.t_end).contains(&t) || !is_step_multiple(t, dt) {
                return cfg(
                    "snapshot_times",
                    format!("{t} must be a multiple of dt = {dt} within [0, t_end]"),
                );
            }
        }
        Ok(())
    }

    fn write_keys(&self, out: &mut String, resolve_dt: bool) {
        let fmt_list = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ");
        let _ = writeln!(out, "model = {}", self.model.name());
        let _ = writeln!(out, "epsilon = {}", self.epsilon);
        let _ = writeln!(out, "n1 = {}", self.grid.n1);
        let _ = writeln!(out, "n2 = {}", self.grid.n2);
        let _ = writeln!(out, "n3 = {}", self.grid.n3);
        let _ = writeln!(out, "particles = {}", self.particles);
        match self.dt {
            None if !resolve_dt => {
                let _ = writeln!(out, "dt = auto");
            }
            _ => {
                let _ = writeln!(out, "dt = {}", self.dt());
            }
        }
        let _ = writeln!(out, "t_end = {}", self.t_end);
        let _ = writeln!(out, "amplitude = {}", self.amplitude);
        let _ = writeln!(out, "mode_perp = {}", self.mode_perp);
        let _ = writeln!(out, "mode_par = {}", self.mode_par);
        let _ = writeln!(out, "v_max = {}", self.v_max);
        let _ = writeln!(out, "n_tau = {}", self.n_tau);
        let _ = writeln!(out, "pusher = {}", self.pusher.name());
        let _ = writeln!(out, "external_field = {}", self.external_field);
        let _ = writeln!(out, "diag_stride = {}", self.diag_stride);
        let _ = writeln!(out, "output_dir = {}", self.output_dir.display());
        let _ = writeln!(out, "snapshot_times = {}", fmt_list(&self.snapshot_times));
    }

    /// Resolved configuration text; loading it yields `self` with `dt` fixed.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        self.write_keys(&mut out, true);
        out
    }
}

/// A convergence study: one limit run and one scaled run per `ε`.
///
/// An explicit `dt` applies to the scaled members; the limit run always uses
/// its automatic step.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub base: RunConfig,
    /// Strictly decreasing.
    pub epsilons: Vec<f64>,
    pub comparison_time: f64,
}

impl SweepConfig {
    pub fn new(base: RunConfig, epsilons: Vec<f64>, comparison_time: f64) -> Result<Self> {
        let sweep = SweepConfig {
            base,
            epsilons,
            comparison_time,
        };
        sweep.validate()?;
        Ok(sweep)
    }

    /// Scaled-model member configuration at `eps`.
    pub fn member(&self, eps: f64) -> RunConfig {
        let mut cfg = self.base.clone();
        cfg.model = match self.base.model {
            Model::LimitExternal | Model::External => Model::External,
            Model::LimitSelf | Model::Quasineutral => Model::Quasineutral,
            Model::FixedIons => Model::FixedIons,
        };
        cfg.epsilon = eps;
        cfg.t_end = self.comparison_time;
        cfg.snapshot_times.clear();
        cfg.output_dir = self.base.output_dir.join(format!("eps_{eps}"));
        cfg
    }

    /// Whether members run in the prescribed external field.
    pub fn external(&self) -> bool {
        matches!(self.base.model, Model::LimitExternal | Model::External)
    }

    /// Limit-model configuration of the sweep.
    pub fn limit(&self) -> RunConfig {
        let mut cfg = self.base.clone();
        cfg.model = if self.external() {
            Model::LimitExternal
        } else {
            Model::LimitSelf
        };
        cfg.t_end = self.comparison_time;
        cfg.snapshot_times.clear();
        cfg.output_dir = self.base.output_dir.join("limit");
        // An explicit `dt` targets the scaled members.
        cfg.dt = None;
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        if self.base.model == Model::FixedIons {
            return Err(FlrError::config(
                "model",
                "sweeps compare against a limit model; fixed_ions has none",
            ));
        }
        if self.epsilons.len() < 2 {
            return Err(FlrError::config("epsilons", "need at least two values"));
        }
        if self.epsilons.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(FlrError::config("epsilons", "must be strictly decreasing"));
        }
        if !(self.comparison_time > 0.0 && self.comparison_time.is_finite()) {
            return Err(FlrError::config("comparison_time", "must be positive"));
        }
        for &eps in &self.epsilons {
            self.member(eps).validate().map_err(|e| match e {
                FlrError::Config { key, msg } => FlrError::config(&key, format!("{msg} (epsilon = {eps})")),
                other => other,
            })?;
        }
        self.limit().validate()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        // Members resolve `auto` per epsilon.
        self.base.write_keys(&mut out, false);
        let eps: Vec<String> = self.epsilons.iter().map(|e| e.to_string()).collect();
        let _ = writeln!(out, "epsilons = {}", eps.join(", "));
        let _ = writeln!(out, "comparison_time = {}", self.comparison_time);
        out
    }
}

/// Contents of a configuration file.
#[derive(Debug, Clone, PartialEq)]
pub enum ConfigFile {
    Run(RunConfig),
    Sweep(SweepConfig),
}

pub fn load_config(path: &Path) -> Result<ConfigFile> {
    let text = std::fs::read_to_string(path).map_err(|e| FlrError::io(path, e))?;
    parse_config(&text)
}

fn is_step_multiple(t: f64, dt: f64) -> bool {
    let r = t / dt;
    (r - r.round()).abs() <= STEP_TOLERANCE * r.abs().max(1.0)
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse::<T>()
        .map_err(|e| FlrError::config(key, format!("cannot parse `{value}`: {e}")))
}

fn parse_list(key: &str, value: &str) -> Result<Vec<f64>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_value(key, s))
        .collect()
}

/// Parses configuration text. The presence of `epsilons` or
/// `comparison_time` makes it a sweep.
pub fn parse_config(text: &str) -> Result<ConfigFile> {
    let mut entries = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| FlrError::config(line, format!("line {} is not `key = value`", lineno + 1)))?;
        let key = key.trim().to_string();
        if entries.insert(key.clone(), value.trim().to_string()).is_some() {
            return Err(FlrError::config(&key, "given more than once"));
        }
    }

    let mut cfg = RunConfig::default();
    let mut epsilons = None;
    let mut comparison_time = None;
    for (key, value) in &entries {
        let k = key.as_str();
        let v = value.as_str();
        match k {
            "model" => cfg.model = parse_value(k, v)?,
            "epsilon" => cfg.epsilon = parse_value(k, v)?,
            "n1" => cfg.grid.n1 = parse_value(k, v)?,
            "n2" => cfg.grid.n2 = parse_value(k, v)?,
            "n3" => cfg.grid.n3 = parse_value(k, v)?,
            "particles" => cfg.particles = parse_value(k, v)?,
            "dt" => cfg.dt = if v == "auto" { None } else { Some(parse_value(k, v)?) },
            "t_end" => cfg.t_end = parse_value(k, v)?,
            "amplitude" => cfg.amplitude = parse_value(k, v)?,
            "mode_perp" => cfg.mode_perp = parse_value(k, v)?,
            "mode_par" => cfg.mode_par = parse_value(k, v)?,
            "v_max" => cfg.v_max = parse_value(k, v)?,
            "n_tau" => cfg.n_tau = parse_value(k, v)?,
            "pusher" => cfg.pusher = parse_value(k, v)?,
            "external_field" => {
                cfg.external_field = ExternalField::parse(v).map_err(|e| FlrError::config(k, e.to_string()))?
            }
            "diag_stride" => cfg.diag_stride = parse_value(k, v)?,
            "output_dir" => cfg.output_dir = PathBuf::from(v),
            "snapshot_times" => cfg.snapshot_times = parse_list(k, v)?,
            "epsilons" => epsilons = Some(parse_list(k, v)?),
            "comparison_time" => comparison_time = Some(parse_value(k, v)?),
            _ => return Err(FlrError::config(k, "unknown key")),
        }
    }

    if epsilons.is_some() || comparison_time.is_some() {
        let sweep = SweepConfig::new(
            cfg,
            epsilons.unwrap_or_else(|| vec![0.2, 0.1, 0.05]),
            comparison_time.unwrap_or(0.5),
        )?;
        Ok(ConfigFile::Sweep(sweep))
    } else {
        cfg.validate()?;
        Ok(ConfigFile::Run(cfg))
    }
}
