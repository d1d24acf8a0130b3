//! Numeric datasets and their CSV form.
//!
//! Files are plain comma-separated numbers with a header row. Values are
//! written with Rust's shortest round-trip formatting, so a save/load cycle
//! reproduces every `f64` exactly.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Feature matrix (stored column-major) plus a response vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    columns: Vec<Vec<f64>>,
    response: Vec<f64>,
    column_names: Vec<String>,
    response_name: String,
}

impl Dataset {
    /// Builds a dataset from feature columns. All values must be finite and
    /// every column must have the same length as `response`.
    pub fn new(
        columns: Vec<Vec<f64>>,
        response: Vec<f64>,
        column_names: Vec<String>,
        response_name: impl Into<String>,
    ) -> Result<Self> {
        let n = response.len();
        if n == 0 {
            return Err(Error::InvalidData("dataset has no rows".into()));
        }
        if columns.is_empty() {
            return Err(Error::InvalidData("dataset has no feature columns".into()));
        }
        if column_names.len() != columns.len() {
            return Err(Error::InvalidData(format!(
                "{} column names for {} columns",
                column_names.len(),
                columns.len()
            )));
        }
        for (j, col) in columns.iter().enumerate() {
            if col.len() != n {
                return Err(Error::InvalidData(format!(
                    "column '{}' has {} rows, response has {}",
                    column_names[j],
                    col.len(),
                    n
                )));
            }
            if let Some(i) = col.iter().position(|v| !v.is_finite()) {
                return Err(Error::InvalidData(format!(
                    "non-finite value at row {}, column '{}'",
                    i + 1,
                    column_names[j]
                )));
            }
        }
        if let Some(i) = response.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!(
                "non-finite response at row {}",
                i + 1
            )));
        }
        Ok(Self {
            columns,
            response,
            column_names,
            response_name: response_name.into(),
        })
    }

    /// Builds a dataset from row-major features with generated names `x1..xp`
    /// and response name `y`.
    pub fn from_rows(rows: &[Vec<f64>], response: Vec<f64>) -> Result<Self> {
        let p = rows.first().map_or(0, Vec::len);
        if rows.len() != response.len() {
            return Err(Error::DimensionMismatch {
                expected: response.len(),
                got: rows.len(),
            });
        }
        let mut columns = vec![Vec::with_capacity(rows.len()); p];
        for row in rows {
            if row.len() != p {
                return Err(Error::DimensionMismatch {
                    expected: p,
                    got: row.len(),
                });
            }
            for (col, &v) in columns.iter_mut().zip(row) {
                col.push(v);
            }
        }
        let names = (1..=p).map(|j| format!("x{j}")).collect();
        Self::new(columns, response, names, "y")
    }

    pub fn n(&self) -> usize {
        self.response.len()
    }

    pub fn p(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.columns[j]
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn response(&self) -> &[f64] {
        &self.response
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn response_name(&self) -> &str {
        &self.response_name
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[i]).collect()
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.n()).map(|i| self.row(i)).collect()
    }

    /// Returns a copy with the response replaced.
    pub fn with_response(&self, response: Vec<f64>) -> Result<Self> {
        Self::new(
            self.columns.clone(),
            response,
            self.column_names.clone(),
            self.response_name.clone(),
        )
    }
}

/// A header plus numeric columns, read verbatim from a CSV file.
#[derive(Debug, Clone, PartialEq)]
pub struct NumericTable {
    pub names: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

impl NumericTable {
    pub fn rows(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Row-major view of the named columns, in the order given.
    pub fn select_rows(&self, names: &[String]) -> Result<Vec<Vec<f64>>> {
        let idx = names
            .iter()
            .map(|name| {
                self.column_index(name)
                    .ok_or_else(|| Error::MissingColumn(name.clone()))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((0..self.rows())
            .map(|i| idx.iter().map(|&j| self.columns[j][i]).collect())
            .collect())
    }
}

/// Reads a header-plus-numbers CSV file. Every cell must parse as a finite real.
pub fn read_table(path: impl AsRef<Path>) -> Result<NumericTable> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let names: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    if names.is_empty() || names.iter().all(String::is_empty) {
        return Err(Error::Format(format!("{}: missing header row", path.display())));
    }
    let mut columns = vec![Vec::new(); names.len()];
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        for (j, cell) in record.iter().enumerate() {
            let value = cell.parse::<f64>().ok().filter(|v| v.is_finite());
            match value {
                Some(v) => columns[j].push(v),
                None => {
                    return Err(Error::Parse {
                        row: r + 1,
                        column: names[j].clone(),
                        value: cell.to_owned(),
                    })
                }
            }
        }
    }
    Ok(NumericTable { names, columns })
}

/// Loads a dataset, taking `response_column` as the response and every other
/// column (in file order) as a feature.
pub fn load_csv(path: impl AsRef<Path>, response_column: &str) -> Result<Dataset> {
    let table = read_table(path)?;
    let target = table
        .column_index(response_column)
        .ok_or_else(|| Error::MissingColumn(response_column.to_owned()))?;
    if table.rows() < 2 {
        return Err(Error::InvalidData(format!(
            "need at least 2 rows, found {}",
            table.rows()
        )));
    }
    let NumericTable { names, columns } = table;
    let mut features = Vec::with_capacity(columns.len() - 1);
    let mut feature_names = Vec::with_capacity(columns.len() - 1);
    let mut response = Vec::new();
    for (j, (name, col)) in names.into_iter().zip(columns).enumerate() {
        if j == target {
            response = col;
        } else {
            feature_names.push(name);
            features.push(col);
        }
    }
    Dataset::new(features, response, feature_names, response_column)
}

/// Writes the features followed by the response column.
pub fn save_csv(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    write_dataset(dataset, &mut out).map_err(|e| Error::io(path, e))?;
    out.flush().map_err(|e| Error::io(path, e))
}

fn write_dataset(dataset: &Dataset, out: &mut impl Write) -> std::io::Result<()> {
    let header: Vec<&str> = dataset
        .column_names
        .iter()
        .map(String::as_str)
        .chain(std::iter::once(dataset.response_name.as_str()))
        .collect();
    writeln!(out, "{}", header.join(","))?;
    for i in 0..dataset.n() {
        for col in &dataset.columns {
            write!(out, "{},", col[i])?;
        }
        writeln!(out, "{}", dataset.response[i])?;
    }
    Ok(())
}
