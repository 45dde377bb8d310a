//! Line-oriented text formats shared by all pipeline stages.
//!
//! Every file starts with `#` header lines carrying `key=value` metadata.
//! Level and spacing files then hold one value per line; CSV files hold a
//! column header followed by comma-separated rows.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

pub type Metadata = BTreeMap<String, String>;

/// Formats a float with 17 significant digits so it reads back bit-exact.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_header(out: &mut String, meta: &Metadata) {
    for (k, v) in meta {
        let v = v.replace('\n', " ");
        let _ = writeln!(out, "# {k}={v}");
    }
}

/// A file of `#` metadata followed by one float per line.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValueFile {
    pub meta: Metadata,
    pub values: Vec<f64>,
}

impl ValueFile {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        write_header(&mut out, &self.meta);
        for &v in &self.values {
            out.push_str(&fmt_f64(v));
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut file = ValueFile::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                if let Some((k, v)) = parse_meta(rest) {
                    file.meta.insert(k, v);
                }
                continue;
            }
            let v: f64 = line.parse().map_err(|_| Error::Parse {
                line: i + 1,
                message: format!("not a number: {line:?}"),
            })?;
            file.values.push(v);
        }
        Ok(file)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}

fn parse_meta(rest: &str) -> Option<(String, String)> {
    let (k, v) = rest.trim().split_once('=')?;
    Some((k.trim().to_string(), v.trim().to_string()))
}

/// A CSV file with `#` metadata, a column header row and numeric rows.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CsvTable {
    pub meta: Metadata,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl CsvTable {
    pub fn new(columns: &[&str]) -> Self {
        CsvTable {
            meta: Metadata::new(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        write_header(&mut out, &self.meta);
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|&v| fmt_cell(v)).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut table = CsvTable::default();
        let mut have_header = false;
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                if let Some((k, v)) = parse_meta(rest) {
                    table.meta.insert(k, v);
                }
                continue;
            }
            if !have_header {
                table.columns = line.split(',').map(|c| c.trim().to_string()).collect();
                have_header = true;
                continue;
            }
            let row = line
                .split(',')
                .map(|c| {
                    c.trim().parse::<f64>().map_err(|_| Error::Parse {
                        line: i + 1,
                        message: format!("not a number: {c:?}"),
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            if row.len() != table.columns.len() {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!("expected {} columns, got {}", table.columns.len(), row.len()),
                });
            }
            table.rows.push(row);
        }
        if !have_header {
            return Err(Error::Parse {
                line: 0,
                message: "missing column header".into(),
            });
        }
        Ok(table)
    }

    pub fn column(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::Parse {
                line: 0,
                message: format!("missing column {name:?}"),
            })
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}

fn fmt_cell(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        fmt_f64(v)
    }
}

pub(crate) fn meta_f64(meta: &Metadata, key: &str) -> Result<f64> {
    meta.get(key)
        .ok_or_else(|| Error::Parse {
            line: 0,
            message: format!("missing header key {key:?}"),
        })?
        .parse()
        .map_err(|_| Error::Parse {
            line: 0,
            message: format!("header key {key:?} is not a number"),
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn value_file_round_trips_bits() {
        let mut f = ValueFile::default();
        f.meta.insert("beta".into(), "0.6".into());
        f.values = vec![0.1, -1.0 / 3.0, 1e-300, 12345.678901234567];
        let back = ValueFile::parse(&f.to_text()).unwrap();
        assert_eq!(back, f);
        assert!(f.to_text().starts_with("# beta=0.6\n"));
    }

    #[test]
    fn csv_rejects_ragged_rows() {
        let err = CsvTable::parse("a,b\n1,2\n3\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }));
    }

    #[test]
    fn csv_round_trip() {
        let mut t = CsvTable::new(&["n", "q", "variance"]);
        t.meta.insert("seed".into(), "7".into());
        t.rows.push(vec![3.0, 0.1, 3.25]);
        let back = CsvTable::parse(&t.to_text()).unwrap();
        assert_eq!(back, t);
    }
}
