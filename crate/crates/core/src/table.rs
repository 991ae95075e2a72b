//! Delimiter-separated numeric tables with a one-line `#` header, used for
//! every matrix and curve exchanged between pipeline stages.
//!
//! ```text
//! # rows=3 cols=2 role=povm gamma=1e-6
//! 0.99996,0.00004
//! ...
//! ```

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use nalgebra::DMatrix;

use crate::{Error, Result};

/// Shortest round-trip representation, switching to exponent form for very
/// small or large magnitudes.
pub fn fmt_num(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || (1e-4..1e9).contains(&a) || !v.is_finite() {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub role: String,
    /// Extra `key=value` header fields in insertion order.
    pub meta: Vec<(String, String)>,
    /// Optional column names, written as a second `#` line.
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(role: &str) -> Self {
        Self {
            role: role.to_string(),
            ..Default::default()
        }
    }

    pub fn from_matrix(role: &str, m: &DMatrix<f64>) -> Self {
        let rows = (0..m.nrows())
            .map(|i| m.row(i).iter().copied().collect())
            .collect();
        Self {
            role: role.to_string(),
            rows,
            ..Default::default()
        }
    }

    pub fn with_meta(mut self, key: &str, value: impl ToString) -> Self {
        self.meta.push((key.to_string(), value.to_string()));
        self
    }

    pub fn with_columns(mut self, names: &[&str]) -> Self {
        self.columns = names.iter().map(|s| s.to_string()).collect();
        self
    }

    pub fn n_cols(&self) -> usize {
        self.rows.first().map_or(self.columns.len(), Vec::len)
    }

    pub fn to_matrix(&self) -> Result<DMatrix<f64>> {
        let c = self.n_cols();
        if self.rows.iter().any(|r| r.len() != c) {
            return Err(Error::data("ragged table"));
        }
        Ok(DMatrix::from_fn(self.rows.len(), c, |i, j| self.rows[i][j]))
    }

    pub fn meta_value(&self, key: &str) -> Option<&str> {
        self.meta
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        write!(
            w,
            "# rows={} cols={} role={}",
            self.rows.len(),
            self.n_cols(),
            self.role
        )?;
        for (k, v) in &self.meta {
            write!(w, " {k}={v}")?;
        }
        writeln!(w)?;
        if !self.columns.is_empty() {
            writeln!(w, "# {}", self.columns.join(","))?;
        }
        for r in &self.rows {
            let line: Vec<String> = r.iter().map(|&v| fmt_num(v)).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }

    pub fn to_string_lossless(&self) -> String {
        let mut buf = Vec::new();
        self.write(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii")
    }

    pub fn read<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines.next().ok_or_else(|| Error::data("empty table"))??;
        let fields: BTreeMap<String, String> = header
            .trim_start_matches('#')
            .split_whitespace()
            .filter_map(|kv| {
                kv.split_once('=')
                    .map(|(k, v)| (k.to_string(), v.to_string()))
            })
            .collect();
        let get = |k: &str| {
            fields
                .get(k)
                .ok_or_else(|| Error::data(format!("table header lacks `{k}`: {header:?}")))
        };
        let rows_n: usize = get("rows")?
            .parse()
            .map_err(|_| Error::data("bad `rows` in header"))?;
        let cols_n: usize = get("cols")?
            .parse()
            .map_err(|_| Error::data("bad `cols` in header"))?;
        let role = get("role")?.clone();
        let mut meta = Vec::new();
        for kv in header.trim_start_matches('#').split_whitespace() {
            if let Some((k, v)) = kv.split_once('=') {
                if !matches!(k, "rows" | "cols" | "role") {
                    meta.push((k.to_string(), v.to_string()));
                }
            }
        }
        let mut columns = Vec::new();
        let mut rows = Vec::with_capacity(rows_n);
        for (i, line) in lines.enumerate() {
            let line = line?;
            if let Some(rest) = line.strip_prefix('#') {
                columns = rest.trim().split(',').map(str::to_string).collect();
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let row = line
                .split(',')
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::data(format!("line {}: bad number {v:?}", i + 2)))
                })
                .collect::<Result<Vec<_>>>()?;
            if row.len() != cols_n {
                return Err(Error::data(format!(
                    "line {}: {} values, header says {cols_n}",
                    i + 2,
                    row.len()
                )));
            }
            rows.push(row);
        }
        if rows.len() != rows_n {
            return Err(Error::data(format!(
                "{} rows, header says {rows_n}",
                rows.len()
            )));
        }
        Ok(Self {
            role,
            meta,
            columns,
            rows,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_round_trip_is_exact() {
        let m = DMatrix::from_row_slice(2, 3, &[0.1, 1e-17, 3.0, -2.5e12, 0.0, 1.0 / 3.0]);
        let t = Table::from_matrix("povm", &m).with_meta("gamma", "1e-6");
        let s = t.to_string_lossless();
        assert!(s.starts_with("# rows=2 cols=3 role=povm gamma=1e-6\n"));
        let back = Table::read(s.as_bytes()).unwrap();
        assert_eq!(back.to_matrix().unwrap(), m);
        assert_eq!(back.meta_value("gamma"), Some("1e-6"));
    }

    #[test]
    fn column_names_survive() {
        let t = Table {
            rows: vec![vec![1.0, 2.0]],
            ..Table::new("curve")
        }
        .with_columns(&["x", "y"]);
        let back = Table::read(t.to_string_lossless().as_bytes()).unwrap();
        assert_eq!(back.columns, vec!["x", "y"]);
    }

    #[test]
    fn row_count_mismatch_is_data_error() {
        assert!(Table::read("# rows=2 cols=1 role=x\n1\n".as_bytes()).is_err());
    }
}
