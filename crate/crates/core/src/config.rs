//! Run configuration: command-line flags, flat JSON config files and
//! validation.
//!
//! A config file is a flat JSON object whose keys are the long flag names.
//! Flags given on the command line override file values.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Deserializer, Serialize};

use crate::dynamics::DynamicsKind;
use crate::error::{invalid, Error, Result};
use crate::experiments::{Start, DEFAULT_ESCAPE_CAP, EXPERIMENT_NAMES};
use crate::model::lambda_from_beta;

pub const SEED_ENV: &str = "MCD_SEED";

pub const ORACLE_CHECKS: [&str; 9] = [
    "stationarity",
    "detailed-balance",
    "spectral-gap",
    "sandwich",
    "mixing-time",
    "es-coupling",
    "bgj-coloring",
    "iterated-coloring",
    "fixture",
];

/// Strictly increasing list of grid values, written `a:b:step` (inclusive),
/// `x,y,z` or as a single value.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Grid<T>(pub Vec<T>);

trait GridValue: Copy + PartialOrd + FromStr + fmt::Display {
    fn range(lo: Self, hi: Self, step: Self) -> Option<Vec<Self>>;
    fn from_json(v: &serde_json::Value) -> Option<Self>;
}

impl GridValue for f64 {
    fn range(lo: f64, hi: f64, step: f64) -> Option<Vec<f64>> {
        if !(step > 0.0 && lo.is_finite() && hi.is_finite()) {
            return None;
        }
        let count = ((hi - lo) / step + 1e-9).floor();
        if !(0.0..=1e7).contains(&count) {
            return None;
        }
        // rounding keeps `0.34:0.70:0.02` free of representation noise
        Some((0..=count as usize).map(|i| ((lo + i as f64 * step) * 1e12).round() / 1e12).collect())
    }

    fn from_json(v: &serde_json::Value) -> Option<f64> {
        v.as_f64()
    }
}

impl GridValue for usize {
    fn range(lo: usize, hi: usize, step: usize) -> Option<Vec<usize>> {
        (step > 0 && lo <= hi).then(|| (lo..=hi).step_by(step).collect())
    }

    fn from_json(v: &serde_json::Value) -> Option<usize> {
        v.as_u64().and_then(|x| usize::try_from(x).ok())
    }
}

#[allow(private_bounds)]
impl<T: GridValue> FromStr for Grid<T> {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let parse = |x: &str| {
            x.trim()
                .parse::<T>()
                .map_err(|_| format!("cannot parse `{}` in grid `{s}`", x.trim()))
        };
        let parts: Vec<&str> = s.split(':').collect();
        let values = match parts.as_slice() {
            [a, b, step] => T::range(parse(a)?, parse(b)?, parse(step)?)
                .ok_or_else(|| format!("bad range `{s}` (expected lo:hi:step with step > 0)"))?,
            [_] => s
                .split(',')
                .filter(|x| !x.trim().is_empty())
                .map(parse)
                .collect::<std::result::Result<_, _>>()?,
            _ => return Err(format!("bad grid `{s}` (expected lo:hi:step or a comma list)")),
        };
        Ok(Grid(values))
    }
}

#[allow(private_bounds)]
impl<'de, T: GridValue> Deserialize<'de> for Grid<T> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let v = serde_json::Value::deserialize(d)?;
        let one = |x: &serde_json::Value| {
            T::from_json(x).ok_or_else(|| D::Error::custom(format!("bad grid value {x}")))
        };
        match &v {
            serde_json::Value::String(s) => s.parse().map_err(D::Error::custom),
            serde_json::Value::Array(items) => {
                Ok(Grid(items.iter().map(one).collect::<std::result::Result<_, _>>()?))
            }
            other => Ok(Grid(vec![one(other)?])),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

/// Initial state of `simulate`: colorings for Swendsen-Wang, edge sets
/// otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum InitState {
    Balanced,
    Ordered,
    Monochromatic,
    Empty,
    Complete,
}

/// Every flag that may also appear as a key of a config file.
#[derive(Debug, Clone, Default, PartialEq, Deserialize, Args)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct Options {
    /// Number of vertices, or a grid of them (`200,400,800` or `40:80:20`).
    #[arg(long)]
    pub n: Option<Grid<usize>>,
    #[arg(long)]
    pub q: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Inverse temperature; converted with `lambda = n (1 - exp(-beta/n))`.
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub kind: Option<DynamicsKind>,
    #[arg(long)]
    pub start: Option<Start>,
    #[arg(long, value_enum)]
    pub init: Option<InitState>,
    #[arg(long)]
    pub rho: Option<f64>,
    /// Cluster-size threshold of `S_M`.
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Parameter grid: z, theta or k depending on the experiment.
    #[arg(long)]
    pub grid: Option<Grid<f64>>,
    #[arg(long)]
    pub replicas: Option<u64>,
    #[arg(long)]
    pub cap: Option<u64>,
    #[arg(long)]
    pub burn: Option<u64>,
    #[arg(long)]
    pub samples: Option<u64>,
    #[arg(long)]
    pub steps: Option<u64>,
    #[arg(long)]
    pub observe_every: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<OutputFormat>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Flat JSON file of flag values; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub options: Options,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Print lambda_s, lambda_c and lambda_S as JSON.
    CriticalPoints(CommonArgs),
    /// Tabulate the drift maps over `--grid` and report their fixed points.
    Drift(CommonArgs),
    /// Run one chain and write its trajectory.
    Simulate(CommonArgs),
    /// Run a Monte Carlo experiment.
    Experiment {
        name: String,
        #[command(flatten)]
        args: CommonArgs,
    },
    /// Run an exact small-n check; exit code 2 when it fails.
    Oracle {
        check: String,
        #[command(flatten)]
        args: CommonArgs,
    },
}

#[derive(Debug, Clone, Parser)]
#[command(name = "mcd", version, about = "Mean-field Potts and random-cluster dynamics")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Fully resolved and validated configuration of one invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct RunConfig {
    pub command: String,
    /// Experiment name or oracle check.
    pub target: Option<String>,
    pub n: Vec<usize>,
    pub q: f64,
    pub lambda: Option<f64>,
    pub beta: Option<f64>,
    pub kind: DynamicsKind,
    pub start: Start,
    pub init: Option<InitState>,
    pub rho: f64,
    pub m: usize,
    pub epsilon: f64,
    pub alpha: f64,
    pub grid: Vec<f64>,
    pub replicas: u64,
    pub cap: u64,
    pub burn: u64,
    pub samples: u64,
    pub steps: u64,
    pub observe_every: u64,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub format: OutputFormat,
    pub threads: Option<usize>,
}

impl Options {
    /// Fields set in `self` win over those in `file`.
    pub fn or(self, file: Options) -> Options {
        Options {
            n: self.n.or(file.n),
            q: self.q.or(file.q),
            lambda: self.lambda.or(file.lambda),
            beta: self.beta.or(file.beta),
            kind: self.kind.or(file.kind),
            start: self.start.or(file.start),
            init: self.init.or(file.init),
            rho: self.rho.or(file.rho),
            m: self.m.or(file.m),
            epsilon: self.epsilon.or(file.epsilon),
            alpha: self.alpha.or(file.alpha),
            grid: self.grid.or(file.grid),
            replicas: self.replicas.or(file.replicas),
            cap: self.cap.or(file.cap),
            burn: self.burn.or(file.burn),
            samples: self.samples.or(file.samples),
            steps: self.steps.or(file.steps),
            observe_every: self.observe_every.or(file.observe_every),
            seed: self.seed.or(file.seed),
            out: self.out.or(file.out),
            format: self.format.or(file.format),
            threads: self.threads.or(file.threads),
        }
    }

    pub fn from_file(path: &Path) -> Result<Options> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| {
            Error::InvalidConfig(format!("malformed config file {}: {e}", path.display()))
        })
    }
}

fn check_increasing<T: PartialOrd + Copy>(field: &'static str, values: &[T]) -> Result<()> {
    if values.is_empty() {
        return Err(invalid(field, "grid must not be empty"));
    }
    if values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(invalid(field, "grid must be strictly increasing"));
    }
    Ok(())
}

fn env_seed() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(s) => s
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| invalid("seed", format!("{SEED_ENV}=`{s}` is not a 64-bit unsigned integer"))),
        Err(_) => Ok(None),
    }
}

impl RunConfig {
    /// Validates the merged options of `command`.
    pub fn resolve(command: &str, target: Option<&str>, o: Options) -> Result<RunConfig> {
        let target = match (command, target) {
            ("experiment", Some(t)) => {
                let name = t.replace('-', "_");
                if !EXPERIMENT_NAMES.contains(&name.as_str()) {
                    return Err(Error::InvalidConfig(format!(
                        "unknown experiment `{t}` (expected one of {})",
                        EXPERIMENT_NAMES.join(", ")
                    )));
                }
                Some(name)
            }
            ("oracle", Some(t)) => {
                if !ORACLE_CHECKS.contains(&t) {
                    return Err(Error::InvalidConfig(format!(
                        "unknown oracle check `{t}` (expected one of {})",
                        ORACLE_CHECKS.join(", ")
                    )));
                }
                Some(t.to_string())
            }
            (_, t) => t.map(str::to_string),
        };
        let seed = match o.seed {
            Some(s) => s,
            None => env_seed()?.unwrap_or(0),
        };
        let cfg = RunConfig {
            command: command.to_string(),
            target,
            n: o.n.map(|g| g.0).unwrap_or_default(),
            q: o.q.unwrap_or(3.0),
            lambda: o.lambda,
            beta: o.beta,
            kind: o.kind.unwrap_or(DynamicsKind::Sw),
            start: o.start.unwrap_or(Start::Balanced),
            init: o.init,
            rho: o.rho.unwrap_or(0.08),
            m: o.m.unwrap_or(20),
            epsilon: o.epsilon.unwrap_or(0.01),
            alpha: o.alpha.unwrap_or(1.0 / 3.0),
            grid: o.grid.map(|g| g.0).unwrap_or_default(),
            replicas: o.replicas.unwrap_or(1000),
            cap: o.cap.unwrap_or(DEFAULT_ESCAPE_CAP),
            burn: o.burn.unwrap_or(200),
            samples: o.samples.unwrap_or(1000),
            steps: o.steps.unwrap_or(1000),
            observe_every: o.observe_every.unwrap_or(1),
            seed,
            out: o.out,
            format: o.format.unwrap_or_default(),
            threads: o.threads,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.q.is_finite() && self.q > 0.0) {
            return Err(invalid("q", format!("must be positive, got {}", self.q)));
        }
        let lambda_needed = self.command != "critical-points";
        match (self.lambda, self.beta) {
            (Some(_), Some(_)) => {
                return Err(invalid("lambda", "give exactly one of --lambda and --beta, not both"))
            }
            (None, None) if lambda_needed => {
                return Err(invalid("lambda", "one of --lambda or --beta is required"))
            }
            (Some(l), None) if !(l.is_finite() && l >= 0.0) => {
                return Err(invalid("lambda", format!("must be finite and >= 0, got {l}")))
            }
            (None, Some(b)) if !(b.is_finite() && b >= 0.0) => {
                return Err(invalid("beta", format!("must be finite and >= 0, got {b}")))
            }
            (None, Some(_)) if self.n.len() > 1 => {
                return Err(invalid("beta", "conversion to lambda needs a single n, not a grid"))
            }
            (None, Some(_)) if self.n.is_empty() => {
                return Err(invalid("n", "conversion from beta needs --n"))
            }
            _ => {}
        }
        if !self.n.is_empty() {
            check_increasing("n", &self.n)?;
            if self.n[0] == 0 {
                return Err(invalid("n", "must be at least 1"));
            }
        }
        if !self.grid.is_empty() {
            check_increasing("grid", &self.grid)?;
        }
        if self.replicas == 0 {
            return Err(invalid("replicas", "must be at least 1"));
        }
        if self.samples == 0 {
            return Err(invalid("samples", "must be at least 1"));
        }
        if self.cap == 0 {
            return Err(invalid("cap", "must be at least 1"));
        }
        if !(self.rho.is_finite() && self.rho >= 0.0) {
            return Err(invalid("rho", format!("must be >= 0, got {}", self.rho)));
        }
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return Err(invalid("epsilon", format!("must be >= 0, got {}", self.epsilon)));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(invalid("alpha", format!("must lie in [0, 1], got {}", self.alpha)));
        }
        if self.threads == Some(0) {
            return Err(invalid("threads", "must be at least 1"));
        }
        let needs_n = !matches!(self.command.as_str(), "critical-points" | "drift");
        if needs_n && self.n.is_empty() {
            return Err(invalid("n", "required"));
        }
        let single_n = !matches!(
            (self.command.as_str(), self.target.as_deref()),
            ("experiment", Some("one_step_exit" | "escape_time" | "sm_tail"))
                | ("critical-points" | "drift", _)
        );
        if single_n && self.n.len() > 1 {
            return Err(invalid("n", "this command takes a single n"));
        }
        let needs_grid = matches!(
            (self.command.as_str(), self.target.as_deref()),
            ("drift", _)
                | ("experiment", Some("sw_drift_map" | "cm_drift_map" | "cluster_tail_bound"))
        );
        if needs_grid && self.grid.is_empty() {
            return Err(invalid("grid", "required"));
        }
        Ok(())
    }

    /// `lambda`, or the value converted from `beta` at the (single) `n`.
    pub fn lambda(&self) -> Result<f64> {
        match (self.lambda, self.beta) {
            (Some(l), _) => Ok(l),
            (None, Some(b)) => Ok(lambda_from_beta(self.single_n()?, b)),
            (None, None) => Err(invalid("lambda", "one of --lambda or --beta is required")),
        }
    }

    pub fn single_n(&self) -> Result<usize> {
        match self.n.as_slice() {
            [n] => Ok(*n),
            [] => Err(invalid("n", "required")),
            _ => Err(invalid("n", "this command takes a single n")),
        }
    }

    /// Grid values as cluster sizes (`k` of the tail experiment).
    pub fn integer_grid(&self) -> Result<Vec<usize>> {
        self.grid
            .iter()
            .map(|&k| {
                if k >= 0.0 && k.fract() == 0.0 {
                    Ok(k as usize)
                } else {
                    Err(invalid("grid", format!("cluster sizes must be integers, got {k}")))
                }
            })
            .collect()
    }
}

/// Parses `argv` (program name first) into the subcommand and its resolved
/// configuration.
pub fn parse_config<I, T>(argv: I) -> Result<RunConfig>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    resolve_command(cli.command)
}

pub fn resolve_command(command: Command) -> Result<RunConfig> {
    let (name, target, args) = match command {
        Command::CriticalPoints(a) => ("critical-points", None, a),
        Command::Drift(a) => ("drift", None, a),
        Command::Simulate(a) => ("simulate", None, a),
        Command::Experiment { name, args } => ("experiment", Some(name), args),
        Command::Oracle { check, args } => ("oracle", Some(check), args),
    };
    let file = match &args.config {
        Some(path) => Options::from_file(path)?,
        None => Options::default(),
    };
    RunConfig::resolve(name, target.as_deref(), args.options.or(file))
}
