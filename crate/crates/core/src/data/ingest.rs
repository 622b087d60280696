use std::path::Path;

use crate::error::{Error, Result};
use crate::types::{Dataset, Matrix};

const LABEL_COLUMN: &str = "label";

/// Reads a header-first CSV with one row per time step.
///
/// A final column named `label` is read as 0/1 labels. With `has_labels`
/// set, that column is required.
pub fn load_csv(path: &Path, has_labels: bool) -> Result<Dataset> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv(&text, has_labels)
}

pub fn parse_csv(text: &str, has_labels: bool) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut records = reader.records();
    let header = match records.next() {
        Some(r) => r.map_err(|e| Error::Csv(e.to_string()))?,
        None => return Err(Error::Empty("CSV has no header row".into())),
    };
    let header: Vec<String> = header.iter().map(str::to_owned).collect();
    let labelled = header.last().is_some_and(|h| h == LABEL_COLUMN);
    if has_labels && !labelled {
        return Err(Error::Csv(format!(
            "expected a final {LABEL_COLUMN:?} column, header is {header:?}"
        )));
    }
    let n = header.len() - usize::from(labelled);
    if n == 0 {
        return Err(Error::Empty("CSV has no series columns".into()));
    }

    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); n];
    let mut labels = Vec::new();
    for (i, record) in records.enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::Csv(e.to_string()))?;
        if record.len() != header.len() {
            return Err(Error::RaggedRow {
                row,
                expected: header.len(),
                found: record.len(),
            });
        }
        for (c, cell) in record.iter().take(n).enumerate() {
            match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => columns[c].push(v),
                _ => {
                    return Err(Error::NonNumericCell {
                        row,
                        column: header[c].clone(),
                        value: cell.to_owned(),
                    })
                }
            }
        }
        if labelled {
            let cell = &record[n];
            match cell {
                "0" => labels.push(0),
                "1" => labels.push(1),
                _ => {
                    return Err(Error::InvalidLabel {
                        row,
                        value: cell.to_owned(),
                    })
                }
            }
        }
    }
    if columns[0].is_empty() {
        return Err(Error::Empty("CSV has no data rows".into()));
    }
    let names = header[..n].to_vec();
    let values = Matrix::from_rows(&columns)?;
    Dataset::new(names, values, 1.0, labelled.then_some(labels))
}

/// Renders in the same layout `parse_csv` reads. Floats use shortest round-trip form.
pub fn render_csv(ds: &Dataset) -> String {
    let mut out = ds.names().join(",");
    if ds.labels().is_some() {
        out.push(',');
        out.push_str(LABEL_COLUMN);
    }
    out.push('\n');
    for t in 0..ds.len() {
        let row: Vec<String> = (0..ds.n_series())
            .map(|r| ds.values().get(r, t).to_string())
            .collect();
        out.push_str(&row.join(","));
        if let Some(l) = ds.labels() {
            out.push(',');
            out.push_str(&l[t].to_string());
        }
        out.push('\n');
    }
    out
}

pub fn write_csv(ds: &Dataset, path: &Path) -> Result<()> {
    std::fs::write(path, render_csv(ds)).map_err(|e| Error::io(path, e))
}
