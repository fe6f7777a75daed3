//! CSV emission, parsing and per-group summaries.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use crate::config::{Factor, Method};
use crate::error::{BenchError, Result};
use crate::experiment::ResultRow;

/// Bumped whenever [`HEADER`] changes.
pub const SCHEMA_VERSION: u32 = 1;

pub const HEADER: [&str; 16] = [
    "method",
    "setting",
    "p",
    "s",
    "n_T",
    "n_S",
    "K",
    "h_wedge",
    "s_k",
    "rep",
    "seed",
    "l2_error_sq",
    "delta_support_f1",
    "kappa_diag",
    "runtime_ms",
    "converged",
];

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_float).unwrap_or_default()
}

fn record(row: &ResultRow) -> [String; 16] {
    [
        row.method.to_string(),
        row.setting.to_string(),
        row.p.to_string(),
        row.s.to_string(),
        row.n_t.to_string(),
        row.n_s.to_string(),
        row.k.to_string(),
        fmt_float(row.h_wedge),
        row.s_k.to_string(),
        row.rep.to_string(),
        row.seed.to_string(),
        fmt_opt(row.l2_error_sq),
        fmt_opt(row.delta_support_f1),
        fmt_opt(row.kappa_diag),
        fmt_opt(row.runtime_ms),
        row.converged.to_string(),
    ]
}

fn csv_error(path: &Path, e: impl std::fmt::Display) -> BenchError {
    BenchError::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// Writes the header and `rows` to `out`. `label` names the sink in errors.
pub fn write_csv<W: Write>(out: W, rows: &[ResultRow], label: &Path) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(HEADER).map_err(|e| csv_error(label, e))?;
    for row in rows {
        w.write_record(record(row)).map_err(|e| csv_error(label, e))?;
    }
    w.flush().map_err(|e| BenchError::Io {
        path: label.to_path_buf(),
        source: e,
    })
}

pub fn emit_csv(rows: &[ResultRow], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|source| BenchError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    write_csv(BufWriter::new(file), rows, path)
}

/// Parses the output of [`write_csv`].
pub fn read_csv<R: Read>(input: R, label: &Path) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers().map_err(|e| csv_error(label, e))?;
    if header.iter().ne(HEADER) {
        return Err(csv_error(label, format!("unexpected header {:?}", header.iter().collect::<Vec<_>>())));
    }
    let mut rows = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(label, e))?;
        let at = |e: String| csv_error(label, format!("row {}: {e}", line + 1));
        let field = |i: usize| rec.get(i).unwrap_or("");
        fn num<T: std::str::FromStr>(s: &str, name: &str) -> std::result::Result<T, String> {
            s.parse().map_err(|_| format!("bad {name} {s:?}"))
        }
        let opt = |i: usize| -> std::result::Result<Option<f64>, String> {
            match field(i) {
                "" => Ok(None),
                s => num(s, HEADER[i]).map(Some),
            }
        };
        let parse = || -> std::result::Result<ResultRow, String> {
            Ok(ResultRow {
                method: field(0).parse().map_err(|e: BenchError| e.to_string())?,
                setting: num(field(1), "setting")?,
                p: num(field(2), "p")?,
                s: num(field(3), "s")?,
                n_t: num(field(4), "n_T")?,
                n_s: num(field(5), "n_S")?,
                k: num(field(6), "K")?,
                h_wedge: num(field(7), "h_wedge")?,
                s_k: num(field(8), "s_k")?,
                rep: num(field(9), "rep")?,
                seed: num(field(10), "seed")?,
                l2_error_sq: opt(11)?,
                delta_support_f1: opt(12)?,
                kappa_diag: opt(13)?,
                runtime_ms: opt(14)?,
                converged: num(field(15), "converged")?,
            })
        };
        rows.push(parse().map_err(at)?);
    }
    Ok(rows)
}

pub fn load_csv(path: &Path) -> Result<Vec<ResultRow>> {
    let file = File::open(path).map_err(|source| BenchError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_csv(file, path)
}

/// Mean and sample standard deviation of `l2_error_sq` for one method at
/// one sweep value.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub method: Method,
    /// Sweep coordinate; `None` when no factor was given.
    pub x: Option<f64>,
    /// Rows with a finite error.
    pub count: usize,
    /// Rows without one (failed fits).
    pub failed: usize,
    pub mean: f64,
    /// `n − 1` denominator; 0 for a single row.
    pub sd: f64,
}

fn x_of(row: &ResultRow, factor: Option<Factor>) -> Option<f64> {
    factor.map(|f| match f {
        Factor::HWedge => row.h_wedge,
        Factor::SK => row.s_k as f64,
        Factor::K => row.k as f64,
        Factor::NS => row.n_s as f64,
    })
}

/// Groups rows by `(x, method)` where `x` is the value of `factor`. Values
/// are summed in sorted order, so the result does not depend on row order.
pub fn summarize(rows: &[ResultRow], factor: Option<Factor>) -> Vec<Summary> {
    let mut groups: BTreeMap<(Option<u64>, Method), (Option<f64>, Vec<f64>, usize)> = BTreeMap::new();
    for row in rows {
        let x = x_of(row, factor);
        // Order keys by value: map each float to a totally ordered integer.
        let key = x.map(|v| {
            let b = v.to_bits();
            if b >> 63 == 1 { !b } else { b | (1 << 63) }
        });
        let entry = groups.entry((key, row.method)).or_insert((x, Vec::new(), 0));
        match row.l2_error_sq.filter(|v| v.is_finite()) {
            Some(v) => entry.1.push(v),
            None => entry.2 += 1,
        }
    }
    groups
        .into_iter()
        .map(|((_, method), (x, mut vals, failed))| {
            vals.sort_by(f64::total_cmp);
            let n = vals.len();
            let mean = if n == 0 { f64::NAN } else { vals.iter().sum::<f64>() / n as f64 };
            let sd = match n {
                0 => f64::NAN,
                1 => 0.0,
                _ => {
                    let mut dev: Vec<f64> = vals.iter().map(|v| (v - mean).powi(2)).collect();
                    dev.sort_by(f64::total_cmp);
                    (dev.iter().sum::<f64>() / (n - 1) as f64).sqrt()
                }
            };
            Summary {
                method,
                x,
                count: n,
                failed,
                mean,
                sd,
            }
        })
        .collect()
}

pub fn write_summary<W: Write>(out: W, summary: &[Summary], label: &Path) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    let err = |e: csv::Error| csv_error(label, e);
    w.write_record(["method", "x", "count", "failed", "mean_l2_error_sq", "sd_l2_error_sq"])
        .map_err(err)?;
    for s in summary {
        w.write_record([
            s.method.to_string(),
            fmt_opt(s.x),
            s.count.to_string(),
            s.failed.to_string(),
            fmt_float(s.mean),
            fmt_float(s.sd),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| BenchError::Io {
        path: label.to_path_buf(),
        source: e,
    })
}

/// Wide plot table: one line per `x`, a mean and an sd column per method.
pub fn write_plot_data<W: Write>(out: W, summary: &[Summary], label: &Path) -> Result<()> {
    let mut methods: Vec<Method> = summary.iter().map(|s| s.method).collect();
    methods.sort();
    methods.dedup();
    let mut xs: Vec<Option<f64>> = Vec::new();
    for s in summary {
        if !xs.iter().any(|x| x.map(f64::to_bits) == s.x.map(f64::to_bits)) {
            xs.push(s.x);
        }
    }
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    let err = |e: csv::Error| csv_error(label, e);
    let mut header = vec!["x".to_string()];
    for m in &methods {
        header.push(format!("{m}_mean"));
        header.push(format!("{m}_sd"));
    }
    w.write_record(&header).map_err(err)?;
    for x in xs {
        let mut line = vec![fmt_opt(x)];
        for m in &methods {
            match summary
                .iter()
                .find(|s| s.method == *m && s.x.map(f64::to_bits) == x.map(f64::to_bits))
            {
                Some(s) => line.extend([fmt_float(s.mean), fmt_float(s.sd)]),
                None => line.extend([String::new(), String::new()]),
            }
        }
        w.write_record(&line).map_err(err)?;
    }
    w.flush().map_err(|e| BenchError::Io {
        path: label.to_path_buf(),
        source: e,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn row(method: Method, rep: usize, l2: Option<f64>) -> ResultRow {
        ResultRow {
            method,
            setting: 1,
            p: 10,
            s: 2,
            n_t: 5,
            n_s: 7,
            k: 1,
            h_wedge: 0.6,
            s_k: 4,
            rep,
            seed: 42,
            l2_error_sq: l2,
            delta_support_f1: None,
            kappa_diag: Some(1.0 / 3.0),
            runtime_ms: None,
            converged: l2.is_some(),
        }
    }

    #[test]
    fn float_format_has_17_digits() {
        assert_eq!(fmt_float(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_float(2.0), "2.0000000000000000e0");
        let v = 1.0 / 3.0;
        assert_eq!(fmt_float(v).parse::<f64>().unwrap(), v);
    }

    #[test]
    fn summary_examples() {
        let one = summarize(&[row(Method::Lasso, 0, Some(0.25))], None);
        assert_eq!((one[0].mean, one[0].sd, one[0].count), (0.25, 0.0, 1));
        let two = summarize(&[row(Method::Lasso, 0, Some(1.0)), row(Method::Lasso, 1, Some(3.0))], None);
        assert_eq!(two[0].mean, 2.0);
        assert!((two[0].sd - 2f64.sqrt()).abs() < 1e-15);
        let failed = summarize(&[row(Method::Lasso, 0, None), row(Method::Lasso, 1, Some(3.0))], None);
        assert_eq!((failed[0].count, failed[0].failed), (1, 1));
    }

    #[test]
    fn summary_groups_by_factor_value() {
        let mut a = row(Method::FAda, 0, Some(1.0));
        a.h_wedge = 0.3;
        let b = row(Method::FAda, 0, Some(2.0));
        let s = summarize(&[b, a], Some(Factor::HWedge));
        assert_eq!(s.iter().map(|g| g.x).collect::<Vec<_>>(), vec![Some(0.3), Some(0.6)]);
        let mut out = Vec::new();
        write_plot_data(&mut out, &s, Path::new("plot")).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with("x,f-ada_mean,f-ada_sd\n"));
        assert_eq!(text.lines().count(), 3);
    }
}
