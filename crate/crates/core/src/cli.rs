//! Subcommand dispatch for the `mcd` binary.

use std::collections::BTreeMap;
use std::ffi::OsString;

use clap::Parser;
use serde::Serialize;

use crate::analytic::{cm_drift, cm_g, critical_points, sw_drift, DriftFixedPoints};
use crate::config::{resolve_command, Cli, InitState, OutputFormat, RunConfig};
use crate::dynamics::{run_chain, ChainState, DynamicsKind};
use crate::error::{invalid, Error, Result};
use crate::experiments::{self as ex, ExperimentReport};
use crate::model::{q_as_int, split_counts, EdgeConfig, ModelParams, SpinConfig};
use crate::oracle::{self, KernelTable};
use crate::report::{emit_report, emit_text, report_csv, trajectory_csv};
use crate::rng::RngStream;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_CHECK_FAILED: i32 = 2;
pub const EXIT_REGIME: i32 = 3;

/// Entry point of the binary; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match resolve_command(cli.command).and_then(|cfg| execute(&cfg)) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Runs a validated configuration; `Ok` carries the exit code.
pub fn execute(cfg: &RunConfig) -> Result<i32> {
    if let Some(threads) = cfg.threads {
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    match cfg.command.as_str() {
        "critical-points" => {
            let cp = critical_points(cfg.q)?;
            emit_text(&(serde_json::to_string_pretty(&cp)? + "\n"), cfg)?;
            Ok(EXIT_OK)
        }
        "drift" => drift(cfg).map(|_| EXIT_OK),
        "simulate" => simulate(cfg).map(|_| EXIT_OK),
        "experiment" => {
            let report = run_experiment(cfg)?;
            emit_report(&report, cfg)?;
            Ok(EXIT_OK)
        }
        "oracle" => {
            let outcome = run_oracle(cfg)?;
            if outcome.check != "fixture" {
                emit_text(&(serde_json::to_string_pretty(&outcome)? + "\n"), cfg)?;
            }
            Ok(if outcome.pass { EXIT_OK } else { EXIT_CHECK_FAILED })
        }
        other => Err(Error::InvalidConfig(format!("unknown subcommand `{other}`"))),
    }
}

#[derive(Serialize)]
struct DriftTable {
    q: f64,
    lambda: f64,
    rows: Vec<[f64; 4]>,
    fixed_points: Option<DriftFixedPoints>,
}

fn drift(cfg: &RunConfig) -> Result<()> {
    let lambda = cfg.lambda()?;
    let q = cfg.q;
    let rows: Vec<[f64; 4]> = cfg
        .grid
        .iter()
        .map(|&x| [x, sw_drift(x, lambda, q), cm_drift(x, lambda, q), cm_g(x, lambda, q)])
        .collect();
    match cfg.format {
        OutputFormat::Csv => {
            let mut text = String::from("x,sw_drift,cm_drift,cm_g\n");
            for r in &rows {
                text += &format!("{},{},{},{}\n", r[0], r[1], r[2], r[3]);
            }
            emit_text(&text, cfg)
        }
        OutputFormat::Json => {
            let table = DriftTable {
                q,
                lambda,
                rows,
                fixed_points: DriftFixedPoints::compute(lambda, q).ok(),
            };
            emit_text(&(serde_json::to_string_pretty(&table)? + "\n"), cfg)
        }
    }
}

fn initial_state(cfg: &RunConfig, params: &ModelParams) -> Result<ChainState> {
    let n = params.n();
    match cfg.kind {
        DynamicsKind::Sw => {
            let q = params.q_int("sw")?;
            let counts = match cfg.init.unwrap_or(InitState::Balanced) {
                InitState::Balanced => split_counts(n, q, None),
                InitState::Monochromatic => split_counts(n, q, Some(n)),
                InitState::Ordered => {
                    let a = crate::analytic::a_fixed_point(params.lambda(), params.q())?;
                    split_counts(n, q, Some(((a * n as f64).round() as usize).min(n)))
                }
                InitState::Empty | InitState::Complete => return Err(Error::MismatchedInit("sw")),
            };
            Ok(ChainState::Spin(SpinConfig::from_counts(&counts)?))
        }
        kind => match cfg.init.unwrap_or(InitState::Empty) {
            InitState::Empty => Ok(ChainState::Edges(EdgeConfig::empty(n))),
            InitState::Complete => Ok(ChainState::Edges(EdgeConfig::complete(n))),
            _ => Err(Error::MismatchedInit(kind.name())),
        },
    }
}

fn simulate(cfg: &RunConfig) -> Result<()> {
    let params = ModelParams::new(cfg.single_n()?, cfg.q, cfg.lambda()?)?;
    let init = initial_state(cfg, &params)?;
    let mut rng = RngStream::named(cfg.seed, 0, "simulate");
    let traj = run_chain(cfg.kind, init, cfg.steps, cfg.observe_every, cfg.m, &params, &mut rng)?;
    match cfg.format {
        OutputFormat::Csv => emit_text(&trajectory_csv(&traj), cfg),
        OutputFormat::Json => emit_text(&(serde_json::to_string_pretty(&traj)? + "\n"), cfg),
    }
}

/// Runs the experiment named in `cfg.target`.
pub fn run_experiment(cfg: &RunConfig) -> Result<ExperimentReport> {
    let name = cfg.target.as_deref().unwrap_or_default();
    let (q, seed, reps) = (cfg.q, cfg.seed, cfg.replicas);
    let lambda = cfg.lambda()?;
    match name {
        "one_step_exit" => ex::one_step_exit(&cfg.n, lambda, q, cfg.rho, cfg.start, reps, seed),
        "escape_time" => {
            ex::escape_time(&cfg.n, lambda, q, cfg.rho, cfg.start, cfg.cap, reps, seed)
        }
        "sw_drift_map" => ex::sw_drift_map(cfg.single_n()?, lambda, q, &cfg.grid, reps, seed),
        "cm_drift_map" => ex::cm_drift_map(cfg.single_n()?, lambda, q, &cfg.grid, reps, seed),
        "sm_tail" => ex::sm_tail(&cfg.n, lambda, cfg.m, cfg.rho, reps, seed),
        "cluster_tail_bound" => {
            ex::cluster_tail_bound(cfg.single_n()?, lambda, &cfg.integer_grid()?, reps, seed)
        }
        "giant_concentration" => {
            ex::giant_concentration(cfg.single_n()?, lambda, cfg.epsilon, reps, seed)
        }
        "bimodality_scan" => {
            ex::bimodality_scan(cfg.single_n()?, lambda, q, cfg.burn, cfg.samples, seed)
        }
        other => Err(Error::InvalidConfig(format!("unknown experiment `{other}`"))),
    }
}

/// Result of an oracle check.
#[derive(Debug, Clone, Serialize)]
pub struct OracleOutcome {
    pub check: String,
    pub n: usize,
    pub q: f64,
    pub lambda: f64,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
    pub details: BTreeMap<String, f64>,
}

pub const STATIONARITY_TOL: f64 = 1e-10;
pub const DETAILED_BALANCE_TOL: f64 = 1e-12;
pub const COUPLING_TOL: f64 = 1e-10;
pub const GAP_AGREEMENT_TOL: f64 = 1e-8;
/// Node budget of the conductance certificate search.
pub const CUT_SEARCH_BUDGET: u64 = 5_000_000;
pub const TMIX_CAP: u64 = 1_000_000;

/// Checks `Φ²/2 ≤ gap ≤ 2Φ`. With at most 64 states every bipartition is
/// covered by branch and bound; larger spaces only certify `gap ≤ 2 · ratio`
/// on threshold cuts.
pub fn sandwich_check(kernel: &KernelTable, gap: f64) -> Result<(bool, BTreeMap<String, f64>)> {
    let mut d = BTreeMap::new();
    d.insert("gap".into(), gap);
    if kernel.len() <= oracle::MAX_EXHAUSTIVE_CUT_STATES {
        let b = oracle::conductance_bounds(kernel, gap / 2.0, CUT_SEARCH_BUDGET)?;
        let upper = b.best.ratio;
        d.insert("phi_upper".into(), upper);
        d.insert("phi_lower".into(), b.lower);
        d.insert("complete".into(), if b.complete { 1.0 } else { 0.0 });
        d.insert("nodes".into(), b.nodes as f64);
        // Φ ≥ lower ≥ gap/2 and Φ ≤ upper with upper²/2 ≤ gap
        let pass = b.complete && gap <= 2.0 * b.lower * (1.0 + 1e-12) && upper * upper / 2.0 <= gap;
        Ok((pass, d))
    } else {
        let cuts = oracle::threshold_cuts(kernel)?;
        let best = cuts.iter().map(|c| c.ratio).fold(f64::INFINITY, f64::min);
        d.insert("phi_upper".into(), best);
        d.insert("cuts".into(), cuts.len() as f64);
        Ok((gap <= 2.0 * best, d))
    }
}

fn run_oracle(cfg: &RunConfig) -> Result<OracleOutcome> {
    let check = cfg.target.clone().unwrap_or_default();
    let n = cfg.single_n()?;
    let lambda = cfg.lambda()?;
    let q = cfg.q;
    let mut outcome = OracleOutcome {
        check: check.clone(),
        n,
        q,
        lambda,
        value: 0.0,
        threshold: 0.0,
        pass: false,
        details: BTreeMap::new(),
    };
    let kernel = || oracle::build_kernel(cfg.kind, n, lambda, q);
    let integer_q = || q_as_int(q).ok_or(Error::NonIntegerQ("coupling check"));
    match check.as_str() {
        "stationarity" => {
            outcome.value = oracle::stationarity_residual(&kernel()?);
            outcome.threshold = STATIONARITY_TOL;
            outcome.pass = outcome.value < STATIONARITY_TOL;
        }
        "detailed-balance" => {
            outcome.value = oracle::detailed_balance_violation(&kernel()?);
            outcome.threshold = DETAILED_BALANCE_TOL;
            outcome.pass = outcome.value < DETAILED_BALANCE_TOL;
        }
        "spectral-gap" => {
            let k = kernel()?;
            outcome.value = oracle::spectral_gap(&k)?;
            outcome.threshold = GAP_AGREEMENT_TOL;
            outcome.pass = outcome.value > 0.0 && outcome.value <= 2.0;
            if k.len() <= oracle::MAX_DENSE_STATES {
                let dense = oracle::spectral_gap_dense(&k)?;
                outcome.details.insert("dense_gap".into(), dense);
                outcome.pass &= (dense - outcome.value).abs() < GAP_AGREEMENT_TOL;
            }
        }
        "sandwich" => {
            let k = kernel()?;
            let gap = oracle::spectral_gap(&k)?;
            let (pass, details) = sandwich_check(&k, gap)?;
            outcome.value = gap;
            outcome.pass = pass;
            outcome.details = details;
        }
        "mixing-time" => {
            let k = kernel()?;
            let gap = oracle::spectral_gap(&k)?;
            let lo = 1.0 / gap - 1.0;
            let hi = (2.0 * std::f64::consts::E / k.measure().min_prob()).ln() / gap;
            let t = oracle::mixing_time(&k, TMIX_CAP)?;
            outcome.value = t.map_or(f64::INFINITY, |t| t as f64);
            outcome.details.insert("lower_bound".into(), lo);
            outcome.details.insert("upper_bound".into(), hi);
            outcome.pass = t.is_some_and(|t| lo <= t as f64 && t as f64 <= hi);
        }
        "es-coupling" => {
            let d = oracle::es_coupling_check(n, lambda, integer_q()?)?;
            outcome.details.insert("fk".into(), d.fk);
            outcome.details.insert("potts".into(), d.potts);
            outcome.value = d.max();
            outcome.threshold = COUPLING_TOL;
            outcome.pass = outcome.value < COUPLING_TOL;
        }
        "bgj-coloring" => {
            let d = oracle::bgj_coloring_check(n, lambda, q, cfg.alpha)?;
            outcome.value = d.max();
            outcome.threshold = COUPLING_TOL;
            outcome.pass = outcome.value < COUPLING_TOL;
        }
        "iterated-coloring" => {
            let d = oracle::iterated_coloring_check(n, lambda, q)?;
            outcome.value = d.max();
            outcome.threshold = COUPLING_TOL;
            outcome.pass = outcome.value < COUPLING_TOL;
        }
        "fixture" => {
            let k = kernel()?;
            let mut buf = Vec::new();
            oracle::write_fixture(&k, &mut buf)?;
            emit_text(&String::from_utf8(buf).map_err(|e| invalid("out", e.to_string()))?, cfg)?;
            outcome.pass = true;
        }
        other => return Err(Error::InvalidConfig(format!("unknown oracle check `{other}`"))),
    }
    Ok(outcome)
}

/// Runs an experiment from command-line style arguments and returns its CSV.
pub fn experiment_csv<I, T>(argv: I) -> Result<String>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let cfg = resolve_command(cli.command)?;
    Ok(report_csv(&run_experiment(&cfg)?))
}
