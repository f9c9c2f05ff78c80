//! CSV emitters and readers, and run manifests.
//!
//! Floats are written with Rust's shortest round-trip formatting, so equal
//! results give byte-equal files.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::crosscheck::CrossCheckReport;
use crate::model::{MomentState, TeacherRule};
use crate::numerics::stats::HISTOGRAM_BINS;
use crate::simulate::Trajectory;
use crate::sweep::{Bifurcation, CellOutcome, SweepResult};

fn num(x: f64) -> String {
    format!("{x}")
}

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w)
}

pub fn trajectory_header() -> Vec<String> {
    let mut header: Vec<String> = ["t", "mean", "var", "p05", "p95"].iter().map(|s| s.to_string()).collect();
    header.extend((0..HISTOGRAM_BINS).map(|b| format!("bin_{b:03}")));
    header
}

/// One row per generation: t, mean, var, p05, p95, bin_000..bin_199.
pub fn write_trajectory_csv<W: Write>(w: W, traj: &Trajectory) -> csv::Result<()> {
    let mut out = writer(w);
    out.write_record(trajectory_header())?;
    for (i, s) in traj.summaries.iter().enumerate() {
        let mut row = vec![(i + 1).to_string(), num(s.mean), num(s.var), num(s.p05), num(s.p95)];
        row.extend(s.histogram.iter().map(|c| c.to_string()));
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

/// Rows (t, bin_center, thresholded_density) for every generation and bin.
pub fn write_density_csv<W: Write>(w: W, traj: &Trajectory) -> csv::Result<()> {
    let mut out = writer(w);
    out.write_record(["t", "bin_center", "thresholded_density"])?;
    for (i, s) in traj.summaries.iter().enumerate() {
        let t = (i + 1).to_string();
        for (b, d) in s.thresholded_density(&traj.range).into_iter().enumerate() {
            out.write_record([t.as_str(), &num(traj.range.bin_center(b)), &num(d)])?;
        }
    }
    out.flush()?;
    Ok(())
}

pub const SWEEP_HEADER: [&str; 9] = [
    "rule",
    "a",
    "lambda",
    "replicate",
    "final_mean",
    "final_var",
    "stop_reason",
    "generations",
    "seconds",
];

/// One row per cell. Failed cells have `failed` as stop reason and empty
/// numeric fields. With `timing` off the seconds column is left empty.
pub fn write_sweep_csv<W: Write>(w: W, result: &SweepResult, timing: bool) -> csv::Result<()> {
    let mut out = writer(w);
    out.write_record(SWEEP_HEADER)?;
    for r in &result.records {
        let c = &r.cell;
        let strength = c.strength.map(num).unwrap_or_default();
        let seconds = if timing { num(r.seconds) } else { String::new() };
        let (mean, var, reason, generations) = match &r.outcome {
            CellOutcome::Finished {
                final_mean,
                final_var,
                stop_reason,
                generations,
            } => (num(*final_mean), num(*final_var), stop_reason.to_string(), generations.to_string()),
            CellOutcome::Failed(_) => (String::new(), String::new(), "failed".into(), String::new()),
        };
        out.write_record([
            c.rule.as_str(),
            &strength,
            &num(c.lambda),
            &c.replicate.to_string(),
            &mean,
            &var,
            &reason,
            &generations,
            &seconds,
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// The columns of a sweep CSV needed to locate bifurcations.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub rule: TeacherRule,
    pub strength: Option<f64>,
    pub lambda: f64,
    pub final_mean: Option<f64>,
}

#[derive(Debug, thiserror::Error)]
pub enum ReadError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("line {line}: {message}")]
    Field { line: u64, message: String },
}

pub fn read_sweep_csv<R: Read>(r: R) -> Result<Vec<SweepRow>, ReadError> {
    let mut reader = csv::Reader::from_reader(r);
    let headers = reader.headers()?.clone();
    let column = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| ReadError::Field {
            line: 1,
            message: format!("missing column {name}"),
        })
    };
    let (rule_i, a_i, lambda_i, mean_i) = (column("rule")?, column("a")?, column("lambda")?, column("final_mean")?);
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |i: usize| record.get(i).unwrap_or("").trim();
        let number = |i: usize| -> Result<Option<f64>, ReadError> {
            let raw = field(i);
            if raw.is_empty() {
                return Ok(None);
            }
            raw.parse().map(Some).map_err(|_| ReadError::Field {
                line,
                message: format!("bad number {raw:?}"),
            })
        };
        let rule = field(rule_i).parse().map_err(|e: crate::model::ParseError| ReadError::Field {
            line,
            message: e.to_string(),
        })?;
        let lambda = number(lambda_i)?.ok_or_else(|| ReadError::Field {
            line,
            message: "empty lambda".into(),
        })?;
        rows.push(SweepRow {
            rule,
            strength: number(a_i)?,
            lambda,
            final_mean: number(mean_i)?,
        });
    }
    Ok(rows)
}

/// Row of a bifurcation report; `None` when no jump passes the threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct BifurcationRow {
    pub rule: TeacherRule,
    pub strength: Option<f64>,
    pub result: Option<Bifurcation>,
}

/// Columns rule, a, lambda_star, jump; `none` and an empty jump when no
/// bifurcation was found.
pub fn write_bifurcation_csv<W: Write>(w: W, rows: &[BifurcationRow]) -> csv::Result<()> {
    let mut out = writer(w);
    out.write_record(["rule", "a", "lambda_star", "jump"])?;
    for row in rows {
        let strength = row.strength.map(num).unwrap_or_default();
        let (star, jump) = match row.result {
            Some(b) => (num(b.lambda_star), num(b.jump)),
            None => ("none".to_string(), String::new()),
        };
        out.write_record([row.rule.as_str(), &strength, &star, &jump])?;
    }
    out.flush()?;
    Ok(())
}

/// Columns t, mean, var.
pub fn write_moments_csv<W: Write>(w: W, moments: &[MomentState]) -> csv::Result<()> {
    let mut out = writer(w);
    out.write_record(["t", "mean", "var"])?;
    for (i, m) in moments.iter().enumerate() {
        out.write_record([(i + 1).to_string(), num(m.mean), num(m.var)])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_cross_check_csv<W: Write>(w: W, report: &CrossCheckReport) -> csv::Result<()> {
    let mut out = writer(w);
    out.write_record([
        "t",
        "mc_mean",
        "analytic_mean",
        "mean_se",
        "mean_z",
        "mc_var",
        "analytic_var",
        "var_se",
        "var_z",
    ])?;
    for r in &report.rows {
        out.write_record([
            r.t.to_string(),
            num(r.mc_mean),
            num(r.analytic_mean),
            num(r.mean_se),
            num(r.mean_z()),
            num(r.mc_var),
            num(r.analytic_var),
            num(r.var_se),
            num(r.var_z()),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Machine-readable record of one CLI run, written next to its CSV.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub command: String,
    pub version: &'static str,
    pub seed: Option<u64>,
    pub threads: usize,
    pub wall_seconds: f64,
    pub outputs: Vec<String>,
    pub config: serde_json::Value,
}

impl Manifest {
    pub fn new(command: &str, config: serde_json::Value) -> Self {
        Self {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION"),
            seed: None,
            threads: 1,
            wall_seconds: 0.0,
            outputs: Vec::new(),
            config,
        }
    }
}

/// `out.csv` → `out.csv.manifest.json`.
pub fn manifest_path(csv_path: &Path) -> PathBuf {
    let mut name = csv_path.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

pub fn write_manifest(csv_path: &Path, manifest: &Manifest) -> std::io::Result<PathBuf> {
    let path = manifest_path(csv_path);
    let text = serde_json::to_string_pretty(manifest).map_err(std::io::Error::other)?;
    std::fs::write(&path, text + "\n")?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Config;
    use crate::simulate::{run, StopRule};
    use crate::sweep::{Cell, SweepGrid, SweepRecord};
    use crate::simulate::StopReason;

    #[test]
    fn trajectory_csv_shape() {
        let mut config = Config::default();
        config.population.size = 50;
        let traj = run(&config, StopRule::FixedGenerations { generations: 3 });
        let mut buf = Vec::new();
        write_trajectory_csv(&mut buf, &traj).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[0].starts_with("t,mean,var,p05,p95,bin_000,"));
        assert!(lines[0].ends_with(",bin_199"));
        assert_eq!(lines[1].split(',').count(), 205);
        assert!(!text.contains('\r'));

        let mut buf = Vec::new();
        write_density_csv(&mut buf, &traj).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 1 + 3 * 200);
    }

    #[test]
    fn sweep_csv_round_trip() {
        let grid = SweepGrid::with_base(Config::default());
        let cell = |lambda: f64| Cell {
            rule: TeacherRule::Two,
            strength: Some(0.001),
            lambda,
            replicate: 0,
        };
        let result = SweepResult {
            grid,
            records: vec![
                SweepRecord {
                    cell: cell(0.25),
                    outcome: CellOutcome::Finished {
                        final_mean: 721.3000000000001,
                        final_var: 36.6,
                        stop_reason: StopReason::FixedT,
                        generations: 2500,
                    },
                    seconds: 1.5,
                },
                SweepRecord {
                    cell: cell(-1.0),
                    outcome: CellOutcome::Failed("NegativeLambda".into()),
                    seconds: 0.0,
                },
            ],
        };
        let mut buf = Vec::new();
        write_sweep_csv(&mut buf, &result, false).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.contains("two,0.001,0.25,0,721.3000000000001,36.6,fixed_T,2500,\n"), "{text}");
        assert!(text.contains("two,0.001,-1,0,,,failed,,\n"));
        let rows = read_sweep_csv(buf.as_slice()).unwrap();
        assert_eq!(rows[0].final_mean, Some(721.3000000000001));
        assert_eq!(rows[1].final_mean, None);
        assert_eq!(rows[0].strength, Some(0.001));
    }

    #[test]
    fn bifurcation_csv() {
        let rows = [
            BifurcationRow {
                rule: TeacherRule::Two,
                strength: Some(0.001),
                result: Some(Bifurcation { lambda_star: 2.125, jump: 123.5 }),
            },
            BifurcationRow {
                rule: TeacherRule::All,
                strength: None,
                result: None,
            },
        ];
        let mut buf = Vec::new();
        write_bifurcation_csv(&mut buf, &rows).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "rule,a,lambda_star,jump\ntwo,0.001,2.125,123.5\nall,,none,\n"
        );
    }

    #[test]
    fn manifest_sits_next_to_csv() {
        assert_eq!(manifest_path(Path::new("out/traj.csv")), PathBuf::from("out/traj.csv.manifest.json"));
    }
}
