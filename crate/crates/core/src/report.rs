//! CSV and JSON output. Files are written to a temporary sibling and renamed
//! into place.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::{OutputFormat, RunConfig};
use crate::dynamics::Trajectory;
use crate::error::Result;
use crate::experiments::ExperimentReport;

pub const CSV_HEADER: &str = "experiment,n,q,lambda,param,estimate,ci_lo,ci_hi,replicas,seed";
pub const TRAJECTORY_HEADER: &str =
    "step,largest_cluster_fraction,s_m_fraction,edge_count,color_counts";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// JSON document written next to (or instead of) the CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub tool: String,
    pub version: String,
    pub config: RunConfig,
    pub report: ExperimentReport,
}

impl Sidecar {
    pub fn new(report: &ExperimentReport, config: &RunConfig) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: VERSION.to_string(),
            config: config.clone(),
            report: report.clone(),
        }
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// Report rows in the fixed CSV schema. Missing estimates (censored cells)
/// are empty fields.
pub fn report_csv(report: &ExperimentReport) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in &report.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            report.experiment,
            r.n,
            r.q,
            r.lambda,
            r.param,
            opt(r.estimate),
            opt(r.ci_lo),
            opt(r.ci_hi),
            r.replicas,
            report.seed
        );
    }
    out
}

pub fn trajectory_csv(traj: &Trajectory) -> String {
    let mut out = String::from(TRAJECTORY_HEADER);
    out.push('\n');
    for rec in &traj.records {
        let counts = rec
            .color_counts
            .as_ref()
            .map(|c| c.iter().map(usize::to_string).collect::<Vec<_>>().join(";"))
            .unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            rec.step,
            opt(rec.largest_cluster_fraction),
            opt(rec.s_m_fraction),
            rec.edge_count.map(|e| e.to_string()).unwrap_or_default(),
            counts
        );
    }
    out
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Emits `report` per `config`: CSV (plus a `<out>.json` sidecar when writing
/// to a file) or a single JSON document. Without `--out` the primary output
/// goes to stdout.
pub fn emit_report(report: &ExperimentReport, config: &RunConfig) -> Result<()> {
    let sidecar = serde_json::to_string_pretty(&Sidecar::new(report, config))? + "\n";
    let primary = match config.format {
        OutputFormat::Csv => report_csv(report),
        OutputFormat::Json => sidecar.clone(),
    };
    match &config.out {
        Some(path) => {
            write_atomic(path, primary.as_bytes())?;
            if config.format == OutputFormat::Csv {
                write_atomic(&sidecar_path(path), sidecar.as_bytes())?;
            }
        }
        None => std::io::stdout().write_all(primary.as_bytes())?,
    }
    Ok(())
}

/// Writes `text` to `--out` atomically, or to stdout.
pub fn emit_text(text: &str, config: &RunConfig) -> Result<()> {
    match &config.out {
        Some(path) => write_atomic(path, text.as_bytes()),
        None => Ok(std::io::stdout().write_all(text.as_bytes())?),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::ReportRow;
    use std::collections::BTreeMap;

    fn report(rows: Vec<ReportRow>) -> ExperimentReport {
        ExperimentReport {
            experiment: "one_step_exit".into(),
            seed: 5,
            rows,
            summary: BTreeMap::new(),
            wall_clock_secs: 1.5,
        }
    }

    #[test]
    fn empty_report_is_header_only() {
        assert_eq!(report_csv(&report(vec![])), format!("{CSV_HEADER}\n"));
    }

    #[test]
    fn censored_cells_are_blank() {
        let row = ReportRow {
            n: 40,
            q: 3.0,
            lambda: 2.5,
            param: 0.08,
            estimate: None,
            ci_lo: None,
            ci_hi: None,
            replicas: 10,
            details: BTreeMap::new(),
        };
        let csv = report_csv(&report(vec![row]));
        assert_eq!(csv.lines().nth(1), Some("one_step_exit,40,3,2.5,0.08,,,,10,5"));
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.csv");
        write_atomic(&path, b"one").unwrap();
        write_atomic(&path, b"two").unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "two");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
        assert!(write_atomic(&dir.path().join("missing/out.csv"), b"x").is_err());
    }
}
