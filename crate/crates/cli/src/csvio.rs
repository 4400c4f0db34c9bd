use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use covcal::{Sample, SymMatrix};

use crate::CliError;

/// Numeric table read from CSV, with column names.
pub struct Table {
    pub names: Vec<String>,
    pub has_header: bool,
    pub sample: Sample,
}

fn reader(path: &Path) -> Result<csv::Reader<File>, CliError> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// Reads observations (rows) by variables (columns). A first row with any
/// non-numeric field is treated as a header.
pub fn read_sample(path: &Path) -> Result<Table, CliError> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut names: Option<Vec<String>> = None;
    let mut width = None;
    for (k, record) in reader(path)?.records().enumerate() {
        let line = k + 1;
        let record = record.map_err(|e| CliError::Parse(format!("row {line}: {e}")))?;
        if record.iter().all(str::is_empty) {
            continue;
        }
        let parsed: Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
        let values = match parsed {
            Ok(v) => v,
            Err(_) if k == 0 => {
                names = Some(record.iter().map(str::to_string).collect());
                width = Some(record.len());
                continue;
            }
            Err(_) => {
                let (col, field) = record
                    .iter()
                    .enumerate()
                    .find(|(_, f)| f.parse::<f64>().is_err())
                    .expect("some field failed to parse");
                return Err(CliError::Parse(format!(
                    "row {line}, column {}: `{field}` is not a number",
                    col + 1
                )));
            }
        };
        if let Some(j) = values.iter().position(|v| !v.is_finite()) {
            return Err(CliError::Parse(format!(
                "row {line}, column {}: value is not finite",
                j + 1
            )));
        }
        match width {
            None => width = Some(values.len()),
            Some(w) if w != values.len() => {
                return Err(CliError::Parse(format!(
                    "row {line}: expected {w} fields, found {}",
                    values.len()
                )))
            }
            _ => {}
        }
        rows.push(values);
    }
    if rows.len() < 2 {
        return Err(CliError::Parse(format!(
            "{}: need at least 2 data rows, found {}",
            path.display(),
            rows.len()
        )));
    }
    let d = rows[0].len();
    let has_header = names.is_some();
    let names = names.unwrap_or_else(|| (1..=d).map(|j| format!("V{j}")).collect());
    let sample = Sample::from_rows(&rows).map_err(|e| CliError::Parse(e.to_string()))?;
    Ok(Table {
        names,
        has_header,
        sample,
    })
}

/// Reads one label per row from the first column. When there is exactly one
/// more row than `expected`, the first row is taken to be a header.
pub fn read_labels(path: &Path, expected: usize) -> Result<Vec<String>, CliError> {
    let mut labels = Vec::new();
    for (k, record) in reader(path)?.records().enumerate() {
        let record = record.map_err(|e| CliError::Parse(format!("row {}: {e}", k + 1)))?;
        match record.get(0) {
            Some(l) if !l.is_empty() => labels.push(l.to_string()),
            _ => {}
        }
    }
    if labels.len() == expected + 1 {
        labels.remove(0);
    }
    if labels.len() != expected {
        return Err(CliError::Parse(format!(
            "{} labels for {expected} observations",
            labels.len()
        )));
    }
    Ok(labels)
}

/// Writes the full matrix using shortest round-trip formatting.
pub fn write_matrix(path: &Path, m: &SymMatrix, header: Option<&[String]>) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let io = |e: csv::Error| CliError::Io(format!("{}: {e}", path.display()));
    if let Some(h) = header {
        w.write_record(h).map_err(io)?;
    }
    let d = m.dim();
    for i in 0..d {
        w.write_record((0..d).map(|j| m.get(i, j).to_string()))
            .map_err(io)?;
    }
    w.flush()
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    writeln!(w)
        .and_then(|_| w.flush())
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}
