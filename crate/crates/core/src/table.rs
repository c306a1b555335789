//! Numeric CSV tables with named columns.

use std::io::{Read, Write};
use std::path::Path;

use crate::{Error, Result};

/// Column-major numeric table. Lines starting with `#` are comments.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(headers: Vec<String>) -> Self {
        let columns = vec![Vec::new(); headers.len()];
        Self { headers, columns }
    }

    pub fn push_row(&mut self, row: &[f64]) -> Result<()> {
        if row.len() != self.headers.len() {
            return Err(Error::Dimension(format!("row has {} fields, table has {}", row.len(), self.headers.len())));
        }
        for (c, v) in self.columns.iter_mut().zip(row) {
            c.push(*v);
        }
        Ok(())
    }

    pub fn n_rows(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.headers.iter().position(|h| h == name).map(|i| self.columns[i].as_slice())
    }

    pub fn require(&self, name: &str) -> Result<&[f64]> {
        self.column(name)
            .ok_or_else(|| Error::Parse(format!("missing column '{name}' (have: {})", self.headers.join(", "))))
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(&self.headers).map_err(csv_err)?;
        let mut buf = Vec::with_capacity(self.headers.len());
        for i in 0..self.n_rows() {
            buf.clear();
            buf.extend(self.columns.iter().map(|c| format_number(c[i])));
            wr.write_record(&buf).map_err(csv_err)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rd = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(r);
        let headers: Vec<String> = rd.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
        let mut table = Table::new(headers);
        let mut row = Vec::new();
        for (line, rec) in rd.records().enumerate() {
            let rec = rec.map_err(csv_err)?;
            row.clear();
            for (j, field) in rec.iter().enumerate() {
                let v = parse_number(field).ok_or_else(|| {
                    Error::Parse(format!("row {}: column '{}' is not numeric: '{field}'", line + 1, table.headers[j]))
                })?;
                row.push(v);
            }
            table.push_row(&row)?;
        }
        Ok(table)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(path)?))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_csv(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

/// Shortest representation that parses back to the same `f64`.
pub fn format_number(v: f64) -> String {
    if v.is_finite() {
        format!("{v:?}")
    } else if v.is_nan() {
        "NaN".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

fn parse_number(s: &str) -> Option<f64> {
    match s {
        "true" => Some(1.0),
        "false" => Some(0.0),
        _ => s.parse().ok(),
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Parse(e.to_string())
}
