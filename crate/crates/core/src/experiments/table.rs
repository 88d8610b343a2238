use std::fmt::Display;
use std::path::Path;

use crate::error::{Error, Result};

/// A header plus rows of already formatted cells.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    /// Appends a row. Floats formatted with `Display` round-trip exactly.
    pub fn push(&mut self, row: impl IntoIterator<Item = Cell>) {
        let row: Vec<String> = row.into_iter().map(|c| c.0).collect();
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    /// Parses every cell of column `name` as `f64`.
    pub fn floats(&self, name: &str) -> Result<Vec<f64>> {
        let j = self
            .column(name)
            .ok_or_else(|| Error::Domain(format!("no column {name}")))?;
        self.rows
            .iter()
            .map(|r| {
                r[j].parse::<f64>()
                    .map_err(|e| Error::Domain(format!("column {name}: {e}")))
            })
            .collect()
    }
}

/// One CSV cell.
pub struct Cell(String);

impl<T: Display> From<T> for Cell {
    fn from(v: T) -> Self {
        Cell(v.to_string())
    }
}

/// Builds a row of cells from heterogeneous values.
#[macro_export]
macro_rules! row {
    ($($v:expr),* $(,)?) => {
        [$($crate::experiments::Cell::from($v)),*]
    };
}

/// Writes `table` to `path` with a header row and `\n` line endings.
pub fn emit_csv(table: &Table, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)?;
    w.write_record(&table.header)?;
    for r in &table.rows {
        w.write_record(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<Table> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.iter().map(str::to_owned).collect();
    let rows = r
        .records()
        .map(|rec| rec.map(|rec| rec.iter().map(str::to_owned).collect()))
        .collect::<std::result::Result<_, _>>()?;
    Ok(Table { header, rows })
}
