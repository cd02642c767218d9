//! CSV input and output. Rows are samples, columns are features.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::kernel::SampleSet;
use crate::linalg::DenseMatrix;

/// Numeric table with an optional header row.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub header: Option<Vec<String>>,
    pub samples: SampleSet,
}

fn parse_row(record: &csv::StringRecord) -> Option<Vec<f64>> {
    record.iter().map(|f| f.trim().parse::<f64>().ok()).collect()
}

/// Reads a table. The first row is treated as a header when any of its
/// fields fails to parse as a number.
pub fn read_table<R: Read>(reader: R) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let mut header: Option<Vec<String>> = None;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line, record) in rdr.records().enumerate() {
        let record = record?;
        if record.iter().all(str::is_empty) {
            continue;
        }
        match parse_row(&record) {
            Some(row) => rows.push(row),
            None if line == 0 => header = Some(record.iter().map(str::to_owned).collect()),
            None => return Err(Error::Csv(format!("non-numeric field on record {}", line + 1))),
        }
    }
    if rows.is_empty() {
        return Err(Error::Csv("no numeric rows".into()));
    }
    if let Some(h) = &header {
        if h.len() != rows[0].len() {
            return Err(Error::Csv(format!(
                "header has {} fields but rows have {}",
                h.len(),
                rows[0].len()
            )));
        }
    }
    if let Some(bad) = rows.iter().position(|r| r.len() != rows[0].len()) {
        return Err(Error::Csv(format!(
            "row {} has {} fields, expected {}",
            bad + 1,
            rows[bad].len(),
            rows[0].len()
        )));
    }
    let samples = SampleSet::from_rows(&rows).map_err(|e| Error::Csv(e.to_string()))?;
    Ok(Table { header, samples })
}

pub fn read_samples(path: impl AsRef<Path>) -> Result<SampleSet> {
    let file = std::fs::File::open(path)?;
    Ok(read_table(std::io::BufReader::new(file))?.samples)
}

/// Writes a matrix row by row with full round-trip precision.
pub fn write_matrix<W: Write>(writer: W, m: &DenseMatrix) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for i in 0..m.rows() {
        w.write_record(m.row(i).iter().map(|v| format!("{v:.16e}")))?;
    }
    w.flush()?;
    Ok(())
}
