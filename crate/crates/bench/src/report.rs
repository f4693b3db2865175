//! CSV, JSON and JSON-lines output.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::experiment::{ExperimentResult, SummaryRow, SweepCell, TraceRow};
use crate::format::fmt_g9;

pub const TRACE_HEADER: &str = "algorithm,trial,round,regret,rec_depth,rec_index";
pub const SUMMARY_HEADER: &str = "algorithm,round,mean,std,trials";
pub const SWEEP_HEADER: &str = "budget,S,K,mean_final_regret,log10_mean_regret,trials";

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Json,
    Both,
}

#[derive(Debug, thiserror::Error)]
#[error("{path}: {source}")]
pub struct EmitError {
    pub path: PathBuf,
    #[source]
    pub source: std::io::Error,
}

/// The records of an experiment as written to `results.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsJson {
    pub config: ExperimentConfig,
    pub f_star: f64,
    pub grid_mean: f64,
    pub traces: Vec<TraceRow>,
    pub summary: Vec<SummaryRow>,
}

impl From<&ExperimentResult> for ResultsJson {
    fn from(r: &ExperimentResult) -> Self {
        Self {
            config: r.config.clone(),
            f_star: r.f_star,
            grid_mean: r.grid_mean,
            traces: r.traces.iter().flat_map(|t| t.rows.iter().cloned()).collect(),
            summary: r.summary.clone(),
        }
    }
}

pub fn traces_csv(r: &ExperimentResult) -> String {
    let mut s = String::from(TRACE_HEADER);
    s.push('\n');
    for row in r.traces.iter().flat_map(|t| &t.rows) {
        s.push_str(&format!(
            "{},{},{},{},{},{}\n",
            row.algorithm,
            row.trial,
            row.round,
            fmt_g9(row.regret),
            row.rec_depth,
            row.rec_index
        ));
    }
    s
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut s = String::from(SUMMARY_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{}\n",
            r.algorithm,
            r.round,
            fmt_g9(r.mean),
            fmt_g9(r.std),
            r.trials
        ));
    }
    s
}

pub fn sweep_csv(cells: &[SweepCell]) -> String {
    let mut s = String::from(SWEEP_HEADER);
    s.push('\n');
    for c in cells {
        s.push_str(&format!(
            "{},{},{},{},{},{}\n",
            c.budget,
            c.s,
            c.k,
            fmt_g9(c.mean_final),
            fmt_g9(c.log10_mean),
            c.trials
        ));
    }
    s
}

fn write(path: &Path, contents: &[u8]) -> Result<(), EmitError> {
    std::fs::write(path, contents).map_err(|source| EmitError {
        path: path.to_path_buf(),
        source,
    })
}

fn create_dir(dir: &Path) -> Result<(), EmitError> {
    std::fs::create_dir_all(dir).map_err(|source| EmitError {
        path: dir.to_path_buf(),
        source,
    })
}

/// Writes `traces.csv` and `summary.csv` and/or `results.json` into `dir`;
/// returns the written paths.
pub fn emit(r: &ExperimentResult, dir: &Path, format: Format) -> Result<Vec<PathBuf>, EmitError> {
    create_dir(dir)?;
    let mut written = Vec::new();
    if matches!(format, Format::Csv | Format::Both) {
        let p = dir.join("traces.csv");
        write(&p, traces_csv(r).as_bytes())?;
        written.push(p);
        let p = dir.join("summary.csv");
        write(&p, summary_csv(&r.summary).as_bytes())?;
        written.push(p);
    }
    if matches!(format, Format::Json | Format::Both) {
        let p = dir.join("results.json");
        let json = serde_json::to_string_pretty(&ResultsJson::from(r)).expect("records serialize");
        write(&p, json.as_bytes())?;
        written.push(p);
    }
    Ok(written)
}

/// One JSON object per round in `trace.jsonl`, tagged with algorithm and trial.
pub fn emit_step_logs(r: &ExperimentResult, dir: &Path) -> Result<PathBuf, EmitError> {
    #[derive(Serialize)]
    struct Line<'a> {
        algorithm: &'a str,
        trial: usize,
        #[serde(flatten)]
        step: &'a gpoo::StepLog,
    }
    create_dir(dir)?;
    let path = dir.join("trace.jsonl");
    let err = |source| EmitError {
        path: path.clone(),
        source,
    };
    let mut w = BufWriter::new(File::create(&path).map_err(err)?);
    for t in &r.traces {
        for step in &t.log {
            let line = Line {
                algorithm: &t.algorithm,
                trial: t.trial,
                step,
            };
            serde_json::to_writer(&mut w, &line).expect("step logs serialize");
            w.write_all(b"\n").map_err(err)?;
        }
    }
    w.flush().map_err(err)?;
    Ok(path)
}

pub fn emit_sweep(cells: &[SweepCell], dir: &Path) -> Result<Vec<PathBuf>, EmitError> {
    create_dir(dir)?;
    let csv = dir.join("sweep.csv");
    write(&csv, sweep_csv(cells).as_bytes())?;
    let json = dir.join("sweep.json");
    write(
        &json,
        serde_json::to_string_pretty(cells).expect("cells serialize").as_bytes(),
    )?;
    Ok(vec![csv, json])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::run_experiment;
    use gpoo::{EnvName, EnvSpec};

    fn result() -> ExperimentResult {
        let cfg = ExperimentConfig {
            env: EnvSpec::named(EnvName::F1),
            budget: 6,
            trials: 2,
            ..Default::default()
        };
        run_experiment(&cfg).unwrap()
    }

    #[test]
    fn one_row_trace() {
        let cfg = ExperimentConfig {
            env: EnvSpec::named(EnvName::Constant),
            budget: 1,
            trials: 1,
            algos: vec!["stooo".parse().unwrap()],
            ..Default::default()
        };
        let csv = traces_csv(&run_experiment(&cfg).unwrap());
        assert_eq!(csv, format!("{TRACE_HEADER}\nstooo,0,1,0,0,0\n"));
    }

    #[test]
    fn csv_shape() {
        let r = result();
        let csv = traces_csv(&r);
        assert!(!csv.contains('\r'));
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], TRACE_HEADER);
        assert_eq!(lines.len(), 1 + 3 * 2 * 6);
        for (line, row) in lines[1..].iter().zip(r.traces.iter().flat_map(|t| &t.rows)) {
            let f: Vec<&str> = line.split(',').collect();
            assert_eq!(f.len(), 6);
            assert_eq!(f[3].parse::<f64>().unwrap(), row.regret);
        }
    }

    #[test]
    fn json_round_trip() {
        let r = result();
        let dir = std::env::temp_dir().join(format!("gpoo-report-{}", std::process::id()));
        let paths = emit(&r, &dir, Format::Both).unwrap();
        assert_eq!(paths.len(), 3);
        let text = std::fs::read_to_string(dir.join("results.json")).unwrap();
        let back: ResultsJson = serde_json::from_str(&text).unwrap();
        assert_eq!(back, ResultsJson::from(&r));
        let p = emit_step_logs(&r, &dir).unwrap();
        assert_eq!(std::fs::read_to_string(p).unwrap().lines().count(), 3 * 2 * 6);
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn io_errors_carry_path() {
        let file = std::env::temp_dir().join(format!("gpoo-report-file-{}", std::process::id()));
        std::fs::write(&file, b"x").unwrap();
        let e = emit(&result(), &file.join("sub"), Format::Csv).unwrap_err();
        assert!(e.to_string().contains("gpoo-report-file"));
        std::fs::remove_file(&file).unwrap();
    }
}
