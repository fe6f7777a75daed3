//! Plain CSV dump of a problem, one file per task, for exchange with other
//! implementations.
//!
//! `task_0.csv` holds the target and `task_k.csv` source `k`. Each has the
//! header `y,x0,…,x{p-1}` and one row per sample. An optional `truth.csv`
//! has the header `beta,delta_1,…,delta_K` and one row per feature. Values
//! are written in shortest round-trip form, so loading reproduces `f64`
//! data exactly.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{GroundTruth, Task, TransferProblem};
use crate::scalar::Real;

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

fn task_path(dir: &Path, k: usize) -> PathBuf {
    dir.join(format!("task_{k}.csv"))
}

/// Writes every task, and the truth when given, into `dir` (created if needed).
pub fn write_problem<T: Real>(dir: &Path, problem: &TransferProblem<T>, truth: Option<&GroundTruth<T>>) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    for (k, task) in problem.tasks().enumerate() {
        let path = task_path(dir, k);
        let mut w = csv::Writer::from_path(&path).map_err(|e| csv_err(&path, e))?;
        let header = std::iter::once("y".to_string()).chain((0..task.p()).map(|j| format!("x{j}")));
        w.write_record(header).map_err(|e| csv_err(&path, e))?;
        for i in 0..task.n() {
            let xi = task.x.row(i);
            let row = std::iter::once(task.y[i])
                .chain(xi.iter().copied())
                .map(|v| v.as_f64().to_string());
            w.write_record(row).map_err(|e| csv_err(&path, e))?;
        }
        w.flush().map_err(|e| io_err(&path, e))?;
    }
    if let Some(truth) = truth {
        let path = dir.join("truth.csv");
        let mut w = csv::Writer::from_path(&path).map_err(|e| csv_err(&path, e))?;
        let header = std::iter::once("beta".to_string()).chain((1..=truth.k()).map(|k| format!("delta_{k}")));
        w.write_record(header).map_err(|e| csv_err(&path, e))?;
        for j in 0..truth.beta.len() {
            let row = std::iter::once(truth.beta[j])
                .chain(truth.deltas.iter().map(|d| d[j]))
                .map(|v| v.as_f64().to_string());
            w.write_record(row).map_err(|e| csv_err(&path, e))?;
        }
        w.flush().map_err(|e| io_err(&path, e))?;
    }
    Ok(())
}

fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let header: Vec<String> = r.headers().map_err(|e| csv_err(path, e))?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let row = rec
            .iter()
            .map(|s| {
                s.trim().parse::<f64>().map_err(|e| Error::Parse {
                    path: path.to_path_buf(),
                    message: format!("row {}: {e}: {s:?}", i + 1),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}

fn read_task<T: Real>(path: &Path) -> Result<Task<T>> {
    let (header, rows) = read_table(path)?;
    if header.first().map(String::as_str) != Some("y") || header.len() < 2 {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            message: "expected header y,x0,...".into(),
        });
    }
    let p = header.len() - 1;
    let n = rows.len();
    let x = DMatrix::from_fn(n, p, |i, j| T::cst(rows[i][j + 1]));
    let y = DVector::from_fn(n, |i, _| T::cst(rows[i][0]));
    Task::new(x, y)
}

/// Reads `task_0.csv`, `task_1.csv`, … until the first missing index.
pub fn read_problem<T: Real>(dir: &Path) -> Result<TransferProblem<T>> {
    let target = read_task(&task_path(dir, 0))?;
    let mut sources = Vec::new();
    let mut k = 1;
    while task_path(dir, k).exists() {
        sources.push(read_task(&task_path(dir, k))?);
        k += 1;
    }
    TransferProblem::new(target, sources)
}

/// Reads `truth.csv` if present.
pub fn read_truth<T: Real>(dir: &Path) -> Result<Option<GroundTruth<T>>> {
    let path = dir.join("truth.csv");
    if !path.exists() {
        return Ok(None);
    }
    let (header, rows) = read_table(&path)?;
    let k = header.len().saturating_sub(1);
    let p = rows.len();
    let beta = DVector::from_fn(p, |j, _| T::cst(rows[j][0]));
    let deltas = (1..=k).map(|c| DVector::from_fn(p, |j, _| T::cst(rows[j][c]))).collect();
    GroundTruth::from_parameters(beta, deltas).map(Some)
}
