//! Result files.
//!
//! | file               | columns                                      |
//! |--------------------|----------------------------------------------|
//! | `positions.csv`    | `node,x,y,z`                                 |
//! | `forces.csv`       | `bond,fx,fy,fz,magnitude,extension`          |
//! | `reactions.csv`    | `node,rx,ry,rz`                              |
//! | `broken_bonds.csv` | `bond`                                       |
//! | `history.csv`      | `step,bond,extension,force` (sweeps only)    |
//! | `report.json`      | the full solve report                        |
//!
//! Node and bond numbers are 1-based. Floats are written with 17
//! significant digits, which round-trips every `f64` exactly.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::equilibrium::EquilibriumProblem;
use crate::solver::SolveReport;

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("csv error on {path}: {source}")]
    Csv { path: String, source: csv::Error },
    #[error("json error on {path}: {source}")]
    Json {
        path: String,
        source: serde_json::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PositionRow {
    pub node: usize,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForceRow {
    pub bond: usize,
    pub fx: f64,
    pub fy: f64,
    pub fz: f64,
    /// Signed: negative in compression.
    pub magnitude: f64,
    pub extension: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReactionRow {
    pub node: usize,
    pub rx: f64,
    pub ry: f64,
    pub rz: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub step: usize,
    pub bond: usize,
    pub extension: f64,
    pub force: f64,
}

/// Tabular view of a [`SolveReport`] with 1-based numbering.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultBundle {
    pub positions: Vec<PositionRow>,
    pub forces: Vec<ForceRow>,
    pub reactions: Vec<ReactionRow>,
    pub broken_bonds: Vec<usize>,
    pub history: Vec<HistoryRow>,
}

impl ResultBundle {
    pub fn from_report(prob: &EquilibriumProblem, report: &SolveReport) -> Self {
        let positions = report
            .positions
            .iter()
            .enumerate()
            .map(|(i, p)| PositionRow {
                node: i + 1,
                x: p.x,
                y: p.y,
                z: p.z,
            })
            .collect();
        let forces = report
            .forces
            .iter()
            .enumerate()
            .map(|(i, f)| ForceRow {
                bond: i + 1,
                fx: f.x,
                fy: f.y,
                fz: f.z,
                magnitude: report.force_magnitudes[i],
                extension: report.extensions[i],
            })
            .collect();
        let reactions = prob
            .partition()
            .prescribed()
            .iter()
            .zip(&report.reactions)
            .map(|(id, r)| ReactionRow {
                node: id.0 + 1,
                rx: r.x,
                ry: r.y,
                rz: r.z,
            })
            .collect();
        let history = report
            .history
            .iter()
            .flat_map(|s| {
                s.bonds.iter().enumerate().map(move |(i, b)| HistoryRow {
                    step: s.step,
                    bond: i + 1,
                    extension: b.extension,
                    force: b.force,
                })
            })
            .collect();
        ResultBundle {
            positions,
            forces,
            reactions,
            broken_bonds: report.broken_bonds.iter().map(|b| b + 1).collect(),
            history,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EmitOptions {
    pub history: bool,
    pub timestamp: bool,
}

impl Default for EmitOptions {
    fn default() -> Self {
        EmitOptions {
            history: false,
            timestamp: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generated_unix_seconds: Option<u64>,
    pub report: SolveReport,
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> OutputError + '_ {
    move |source| OutputError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> OutputError + '_ {
    move |source| OutputError::Csv {
        path: path.display().to_string(),
        source,
    }
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_rows(
    path: &Path,
    header: &[&str],
    rows: impl Iterator<Item = Vec<String>>,
) -> Result<(), OutputError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record(header).map_err(csv_err(path))?;
    for row in rows {
        w.write_record(&row).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn write_history_csv(path: &Path, rows: &[HistoryRow]) -> Result<(), OutputError> {
    write_rows(
        path,
        &["step", "bond", "extension", "force"],
        rows.iter().map(|r| {
            vec![
                r.step.to_string(),
                r.bond.to_string(),
                num(r.extension),
                num(r.force),
            ]
        }),
    )
}

/// Write the CSV tables and `report.json` into `dir`.
pub fn emit_results(
    dir: &Path,
    prob: &EquilibriumProblem,
    report: &SolveReport,
    opts: &EmitOptions,
) -> Result<ResultBundle, OutputError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let bundle = ResultBundle::from_report(prob, report);
    write_rows(
        &dir.join("positions.csv"),
        &["node", "x", "y", "z"],
        bundle
            .positions
            .iter()
            .map(|r| vec![r.node.to_string(), num(r.x), num(r.y), num(r.z)]),
    )?;
    write_rows(
        &dir.join("forces.csv"),
        &["bond", "fx", "fy", "fz", "magnitude", "extension"],
        bundle.forces.iter().map(|r| {
            vec![
                r.bond.to_string(),
                num(r.fx),
                num(r.fy),
                num(r.fz),
                num(r.magnitude),
                num(r.extension),
            ]
        }),
    )?;
    write_rows(
        &dir.join("reactions.csv"),
        &["node", "rx", "ry", "rz"],
        bundle
            .reactions
            .iter()
            .map(|r| vec![r.node.to_string(), num(r.rx), num(r.ry), num(r.rz)]),
    )?;
    write_rows(
        &dir.join("broken_bonds.csv"),
        &["bond"],
        bundle.broken_bonds.iter().map(|b| vec![b.to_string()]),
    )?;
    if opts.history {
        write_history_csv(&dir.join("history.csv"), &bundle.history)?;
    }
    write_report_json(&dir.join("report.json"), report, opts.timestamp)?;
    Ok(bundle)
}

pub fn write_report_json(
    path: &Path,
    report: &SolveReport,
    timestamp: bool,
) -> Result<(), OutputError> {
    let generated_unix_seconds = timestamp.then(|| {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0)
    });
    let file = ReportFile {
        generated_unix_seconds,
        report: report.clone(),
    };
    let f = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(f);
    serde_json::to_writer_pretty(&mut w, &file).map_err(|source| OutputError::Json {
        path: path.display().to_string(),
        source,
    })?;
    writeln!(w).map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

pub fn read_report_json(path: &Path) -> Result<ReportFile, OutputError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| OutputError::Json {
        path: path.display().to_string(),
        source,
    })
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, OutputError> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    r.deserialize()
        .collect::<Result<Vec<T>, _>>()
        .map_err(csv_err(path))
}

pub fn read_history_csv(path: &Path) -> Result<Vec<HistoryRow>, OutputError> {
    read_rows(path)
}

/// Read back the CSV tables written by [`emit_results`].
pub fn read_results(dir: &Path) -> Result<ResultBundle, OutputError> {
    #[derive(Deserialize)]
    struct BrokenRow {
        bond: usize,
    }
    let history_path = dir.join("history.csv");
    let history = if history_path.exists() {
        read_rows(&history_path)?
    } else {
        Vec::new()
    };
    let broken: Vec<BrokenRow> = read_rows(&dir.join("broken_bonds.csv"))?;
    Ok(ResultBundle {
        positions: read_rows(&dir.join("positions.csv"))?,
        forces: read_rows(&dir.join("forces.csv"))?,
        reactions: read_rows(&dir.join("reactions.csv"))?,
        broken_bonds: broken.into_iter().map(|b| b.bond).collect(),
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{generate_example, Example};
    use crate::solver::{load_sweep, solve, SolverOptions};

    fn triangle() -> (EquilibriumProblem, SolveReport) {
        let (prob, opts) = generate_example(Example::Triangle)
            .unwrap()
            .to_problem(&SolverOptions::default())
            .unwrap();
        let report = solve(&prob, &opts, None).unwrap();
        (prob, report)
    }

    #[test]
    fn triangle_bundle_shape() {
        let (prob, report) = triangle();
        let dir = tempfile::tempdir().unwrap();
        let bundle = emit_results(dir.path(), &prob, &report, &EmitOptions::default()).unwrap();
        assert_eq!(bundle.positions.len(), 3);
        assert_eq!(bundle.reactions.len(), 1);
        assert_eq!(bundle.reactions[0].node, 3);
        let text = std::fs::read_to_string(dir.path().join("positions.csv")).unwrap();
        assert!(text.starts_with("node,x,y,z\n1,"));
        let forces = std::fs::read_to_string(dir.path().join("forces.csv")).unwrap();
        assert!(forces.starts_with("bond,fx,fy,fz,magnitude,extension\n"));
        assert!(!dir.path().join("history.csv").exists());
    }

    #[test]
    fn broken_bond_is_listed_one_based() {
        let (prob, mut report) = triangle();
        report.broken_bonds.insert(1);
        let dir = tempfile::tempdir().unwrap();
        emit_results(dir.path(), &prob, &report, &EmitOptions::default()).unwrap();
        let text = std::fs::read_to_string(dir.path().join("broken_bonds.csv")).unwrap();
        assert_eq!(text, "bond\n2\n");
    }

    #[test]
    fn round_trip_is_exact() {
        let (prob, _) = triangle();
        let prob = prob
            .with_loads(prob.loads().iter().map(|b| b * 3.7).collect())
            .unwrap();
        let opts = SolverOptions {
            load_steps: 4,
            ..SolverOptions::default()
        };
        let report = load_sweep(&prob, &opts).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let emit = EmitOptions {
            history: true,
            timestamp: false,
        };
        let bundle = emit_results(dir.path(), &prob, &report, &emit).unwrap();
        assert_eq!(bundle.history.len(), 4 * 3);
        assert_eq!(read_results(dir.path()).unwrap(), bundle);
        let file = read_report_json(&dir.path().join("report.json")).unwrap();
        assert_eq!(file.generated_unix_seconds, None);
        assert_eq!(file.report, report);
    }

    #[test]
    fn seventeen_digits_survive_csv() {
        let values = [
            0.1,
            1.0 / 3.0,
            -2.5e-300,
            f64::MAX,
            f64::MIN_POSITIVE,
            5e-324,
            123_456_789.123_456_79,
        ];
        let rows: Vec<HistoryRow> = values
            .iter()
            .enumerate()
            .map(|(i, &v)| HistoryRow {
                step: i + 1,
                bond: 1,
                extension: v,
                force: -v,
            })
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("h.csv");
        write_history_csv(&path, &rows).unwrap();
        assert_eq!(read_history_csv(&path).unwrap(), rows);
    }
}
