//! Column tables written as CSV with 17 significant digits, so a file read back
//! reproduces the in-memory values bit for bit. Missing values are empty cells.

use std::path::Path;

use vlp_core::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    /// Row-major; `None` marks a gap.
    pub rows: Vec<Vec<Option<f64>>>,
}

impl Table {
    pub fn new(columns: Vec<String>) -> Self {
        Self {
            columns,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Option<f64>>) {
        assert_eq!(row.len(), self.columns.len(), "row width must match the header");
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<Option<f64>>> {
        let j = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }

    pub fn to_csv_string(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns).expect("in-memory write");
        for row in &self.rows {
            w.write_record(row.iter().map(|v| format_value(*v)))
                .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii output")
    }

    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let columns: Vec<String> = r
            .headers()
            .map_err(|e| Error::Io(e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        let mut table = Table::new(columns);
        for (i, record) in r.records().enumerate() {
            let record = record.map_err(|e| Error::Io(e.to_string()))?;
            let row = record
                .iter()
                .map(|cell| parse_value(cell).map_err(|e| Error::Io(format!("row {}: {e}", i + 1))))
                .collect::<Result<Vec<_>>>()?;
            if row.len() != table.columns.len() {
                return Err(Error::Io(format!(
                    "row {} has {} cells, header has {}",
                    i + 1,
                    row.len(),
                    table.columns.len()
                )));
            }
            table.rows.push(row);
        }
        Ok(table)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv_string()).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_csv_str(&text)
    }
}

pub fn format_value(v: Option<f64>) -> String {
    match v {
        Some(v) => format!("{v:.16e}"),
        None => String::new(),
    }
}

fn parse_value(cell: &str) -> std::result::Result<Option<f64>, String> {
    let cell = cell.trim();
    if cell.is_empty() {
        return Ok(None);
    }
    cell.parse::<f64>().map(Some).map_err(|e| format!("`{cell}`: {e}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits() {
        assert_eq!(format_value(Some(0.1)), "1.0000000000000001e-1");
        assert_eq!(format_value(None), "");
    }

    #[test]
    fn gaps_survive() {
        let mut t = Table::new(vec!["a".into(), "b".into()]);
        t.push(vec![Some(1.0), None]);
        t.push(vec![Some(f64::MIN_POSITIVE), Some(-3.5e300)]);
        let back = Table::from_csv_str(&t.to_csv_string()).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.column("b").unwrap(), vec![None, Some(-3.5e300)]);
    }

    #[test]
    fn ragged_rows_are_rejected() {
        assert!(Table::from_csv_str("a,b\n1,2,3\n").is_err());
        assert!(Table::from_csv_str("a\nxyz\n").is_err());
    }
}
