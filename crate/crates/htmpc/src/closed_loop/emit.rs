use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::Real;

use super::SimulationTrace;

pub const TRACE_FILE: &str = "trace.csv";
pub const SLOW_FILE: &str = "slow.csv";
pub const REPORT_FILE: &str = "report.json";
pub const CONFIG_FILE: &str = "config.json";

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

fn indexed(prefix: &str, n: usize) -> impl Iterator<Item = String> + '_ {
    (0..n).map(move |i| format!("{prefix}_{i}"))
}

fn flag(b: bool) -> String {
    if b {
        "1".into()
    } else {
        "0".into()
    }
}

fn nums<T: Real>(v: &[T]) -> impl Iterator<Item = String> + '_ {
    v.iter().map(|x| format!("{:e}", x.as_f64()))
}

fn write_fast<T: Real>(path: &Path, trace: &SimulationTrace<T>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    let (n, m, mm) = (trace.n, trace.m, trace.subsystems);
    let mut header: Vec<String> = vec!["k".into(), "h".into()];
    header.extend(indexed("x", n));
    header.extend(indexed("u", m));
    header.extend(indexed("du", m));
    header.extend(indexed("du_hat", m));
    header.extend([
        "w_bar_norm".into(),
        "hl_feasible".into(),
        "ll_feasible".into(),
        "in_tube".into(),
    ]);
    header.extend(indexed("input_margin", mm));
    header.extend(indexed("du_margin", mm));
    w.write_record(&header).map_err(csv_err)?;
    for f in &trace.fast {
        let slow = trace.slow.iter().find(|s| s.k == f.k);
        let mut row = vec![f.k.to_string(), f.h.to_string()];
        row.extend(nums(&f.x));
        row.extend(nums(&f.u));
        row.extend(nums(&f.du));
        row.extend(nums(&f.du_hat));
        row.push(slow.map_or_else(String::new, |s| format!("{:e}", s.w_norm.as_f64())));
        row.push(flag(slow.is_some_and(|s| s.hl_feasible)));
        row.push(flag(slow.is_some_and(|s| s.ll_feasible)));
        row.push(flag(slow.is_some_and(|s| s.in_tube)));
        row.extend(nums(&f.input_margin));
        row.extend(nums(&f.du_margin));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn write_slow<T: Real>(path: &Path, trace: &SimulationTrace<T>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    let n_bar = trace.slow.first().map_or(0, |s| s.x_bar_nom.len());
    let mut header: Vec<String> = vec!["k".into(), "reference".into()];
    header.extend(indexed("u_bar", trace.m));
    header.extend(indexed("x_bar_nom", n_bar));
    header.extend(indexed("e_bar", n_bar));
    header.extend(
        [
            "w_norm",
            "rho_w",
            "hl_feasible",
            "ll_feasible",
            "in_tube",
            "hl_cost",
            "cuts",
            "terminal_excess",
            "state_error",
            "tube_distance",
            "limit_distance",
            "rhs_identity_residual",
            "w_identity_residual",
            "terminal_residual",
        ]
        .map(String::from),
    );
    w.write_record(&header).map_err(csv_err)?;
    for s in &trace.slow {
        let mut row = vec![s.k.to_string(), s.reference.to_string()];
        row.extend(nums(&s.u_bar));
        row.extend(nums(&s.x_bar_nom));
        row.extend(nums(&s.e_bar));
        row.extend(nums(&[s.w_norm, s.rho_w]));
        row.extend([flag(s.hl_feasible), flag(s.ll_feasible), flag(s.in_tube)]);
        row.extend(nums(&[s.hl_cost]));
        row.push(s.cuts.to_string());
        row.extend(nums(&[
            s.terminal_excess,
            s.state_error,
            s.tube_distance,
            s.limit_distance,
            s.rhs_identity_residual,
            s.w_identity_residual,
            s.terminal_residual,
        ]));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn write_json<S: Serialize + ?Sized>(path: &Path, value: &S) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Io(e.to_string()))?;
    fs::write(path, text)?;
    Ok(())
}

/// Writes the fast and slow traces as CSV plus the report and the scenario as JSON.
pub fn emit<T: Real, R: Serialize + ?Sized, C: Serialize + ?Sized>(
    dir: &Path,
    trace: &SimulationTrace<T>,
    report: &R,
    config: &C,
) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_fast(&dir.join(TRACE_FILE), trace)?;
    write_slow(&dir.join(SLOW_FILE), trace)?;
    write_json(&dir.join(REPORT_FILE), report)?;
    write_json(&dir.join(CONFIG_FILE), config)?;
    Ok(())
}

/// A numeric CSV table; flags read back as 0 or 1 and empty cells as NaN.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let idx = self.headers.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[idx]).collect())
    }
}

fn read_table(path: &Path) -> Result<Table> {
    let mut r =
        csv::Reader::from_path(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let headers = r
        .headers()
        .map_err(csv_err)?
        .iter()
        .map(String::from)
        .collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        let row = rec
            .iter()
            .map(|c| {
                if c.is_empty() {
                    Ok(f64::NAN)
                } else {
                    c.parse::<f64>()
                        .map_err(|e| Error::Io(format!("{}: `{c}`: {e}", path.display())))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok(Table { headers, rows })
}

/// Contents of a directory written by [`emit`].
#[derive(Clone, Debug)]
pub struct TraceFiles {
    pub fast: Table,
    pub slow: Table,
    pub report: serde_json::Value,
}

pub fn load_trace(dir: &Path) -> Result<TraceFiles> {
    let report_path = dir.join(REPORT_FILE);
    let text = fs::read_to_string(&report_path)
        .map_err(|e| Error::Io(format!("{}: {e}", report_path.display())))?;
    Ok(TraceFiles {
        fast: read_table(&dir.join(TRACE_FILE))?,
        slow: read_table(&dir.join(SLOW_FILE))?,
        report: serde_json::from_str(&text)
            .map_err(|e| Error::Io(format!("{}: {e}", report_path.display())))?,
    })
}
