//! Artifact writers and the plain-text summary of an output directory.
//!
//! CSV floats use `{:.16e}` (17 significant digits), which round-trips any
//! `f64` exactly. Every file is written to a temporary sibling and renamed.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use crate::error::{Error, Result};

pub const VERDICT_FILE: &str = "verdict.json";
pub const RANK_PROFILE_FILE: &str = "rank_profile.csv";
pub const RATES_FILE: &str = "rates.csv";
pub const BEST_WITNESS_FILE: &str = "best_witness.json";
pub const WITNESS_TRAJECTORY_FILE: &str = "witness_trajectory.csv";
pub const BLP_FILE: &str = "blp.json";
pub const BLP_TRAJECTORY_FILE: &str = "blp_trajectory.csv";
pub const FEASIBILITY_FILE: &str = "feasibility.json";
pub const CHOI_FILE: &str = "choi.json";

const KNOWN: [&str; 9] = [
    VERDICT_FILE,
    RANK_PROFILE_FILE,
    RATES_FILE,
    BEST_WITNESS_FILE,
    WITNESS_TRAJECTORY_FILE,
    BLP_FILE,
    BLP_TRAJECTORY_FILE,
    FEASIBILITY_FILE,
    CHOI_FILE,
];

pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// A numeric table; `None` cells are written empty.
#[derive(Debug, Clone)]
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<Option<f64>>>,
}

impl Table {
    pub fn new(header: Vec<String>) -> Self {
        Self {
            header,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Option<f64>>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row
                .iter()
                .map(|c| c.map(format_f64).unwrap_or_default())
                .collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

/// Temp-then-rename in the target directory, so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn write_csv(path: &Path, table: &Table) -> Result<()> {
    write_atomic(path, table.to_csv().as_bytes())
}

fn read_json(path: &Path) -> Result<Value> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

fn num(v: &Value) -> String {
    match v {
        Value::Number(n) if n.is_f64() => format!("{:.6e}", n.as_f64().unwrap_or(f64::NAN)),
        Value::Number(n) => n.to_string(),
        Value::Null => "-".into(),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn csv_shape(path: &Path) -> Result<(usize, usize)> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let cols = lines.next().map_or(0, |h| h.split(',').count());
    Ok((lines.count(), cols))
}

/// Key facts from every known artifact in `dir`. A directory with none of
/// them is an input error.
pub fn summarize_dir(dir: &Path) -> Result<String> {
    if !dir.is_dir() {
        return Err(Error::Config(format!(
            "{} is not a directory",
            dir.display()
        )));
    }
    let present: Vec<(&str, PathBuf)> = KNOWN
        .iter()
        .map(|name| (*name, dir.join(name)))
        .filter(|(_, p)| p.is_file())
        .collect();
    if present.is_empty() {
        return Err(Error::Config(format!(
            "{} contains no analysis artifacts",
            dir.display()
        )));
    }

    let mut rows: Vec<(String, String, String)> = Vec::new();
    let mut add = |file: &str, key: &str, value: String| {
        rows.push((file.to_string(), key.to_string(), value))
    };
    for (name, path) in &present {
        match *name {
            VERDICT_FILE => {
                let v = read_json(path)?;
                add(name, "status", num(&v["status"]));
                add(
                    name,
                    "invertible_everywhere",
                    num(&v["invertible_everywhere"]),
                );
                add(name, "image_nonincreasing", num(&v["image_nonincreasing"]));
                let bps = v["rank_profile"]["breakpoints"]
                    .as_array()
                    .map_or(0, Vec::len);
                add(name, "breakpoints", bps.to_string());
                add(
                    name,
                    "worst_min_choi_eigenvalue",
                    num(&v["worst_min_choi_eigenvalue"]),
                );
                add(
                    name,
                    "worst_kernel_residual",
                    num(&v["worst_kernel_residual"]),
                );
            }
            BEST_WITNESS_FILE | BLP_FILE => {
                let v = read_json(path)?;
                add(name, "ancilla_kind", num(&v["ancilla_kind"]));
                add(name, "max_backflow", num(&v["max_backflow"]));
                add(name, "max_backflow_time", num(&v["max_backflow_time"]));
                add(name, "finding", num(&v["finding"]));
            }
            FEASIBILITY_FILE => {
                let v = read_json(path)?;
                let entries = v["entries"].as_array().cloned().unwrap_or_default();
                if entries.is_empty() {
                    add(name, "entries", "0".into());
                }
                for e in entries {
                    let key = format!("t*={}", num(&e["t_star"]));
                    add(
                        name,
                        &key,
                        format!(
                            "{} ({} iterations)",
                            num(&e["status"]),
                            num(&e["iterations"])
                        ),
                    );
                }
            }
            CHOI_FILE => {
                let v = read_json(path)?;
                add(
                    name,
                    "matrices",
                    v.as_array().map_or(0, Vec::len).to_string(),
                );
            }
            _ => {
                let (r, c) = csv_shape(path)?;
                add(name, "rows x columns", format!("{r} x {c}"));
            }
        }
    }

    let w0 = rows
        .iter()
        .map(|r| r.0.len())
        .max()
        .unwrap_or(0)
        .max("artifact".len());
    let w1 = rows
        .iter()
        .map(|r| r.1.len())
        .max()
        .unwrap_or(0)
        .max("field".len());
    let mut out = String::new();
    writeln!(out, "{:w0$}  {:w1$}  value", "artifact", "field").unwrap();
    writeln!(
        out,
        "{}  {}  {}",
        "-".repeat(w0),
        "-".repeat(w1),
        "-".repeat(5)
    )
    .unwrap();
    for (a, k, v) in rows {
        writeln!(out, "{a:w0$}  {k:w1$}  {v}").unwrap();
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_floats_round_trip() {
        let mut t = Table::new(vec!["t".into(), "x".into()]);
        let values = [
            0.1,
            1.0 / 3.0,
            f64::MIN_POSITIVE,
            -2.5e300,
            std::f64::consts::PI,
        ];
        for &v in &values {
            t.push(vec![Some(v), None]);
        }
        let csv = t.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("t,x"));
        for (line, &v) in lines.zip(&values) {
            let (a, b) = line.split_once(',').unwrap();
            assert_eq!(a.parse::<f64>().unwrap().to_bits(), v.to_bits());
            assert_eq!(b, "");
        }
    }

    #[test]
    fn summary_of_directories() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(summarize_dir(dir.path()), Err(Error::Config(_))));
        assert!(matches!(
            summarize_dir(&dir.path().join("missing")),
            Err(Error::Config(_))
        ));

        let mut t = Table::new(vec!["t".into()]);
        t.push(vec![Some(0.0)]);
        write_csv(&dir.path().join(RATES_FILE), &t).unwrap();
        write_json(
            &dir.path().join(VERDICT_FILE),
            &serde_json::json!({"status": "CP_DIVISIBLE"}),
        )
        .unwrap();
        let text = summarize_dir(dir.path()).unwrap();
        assert!(text.contains("CP_DIVISIBLE"));
        assert!(text.contains("1 x 1"));
        // No temporaries left behind.
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 2);
    }
}
