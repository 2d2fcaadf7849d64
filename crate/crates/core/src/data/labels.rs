//! Label CSV: header `id,<class_1>,...,<class_c>`, then one row per sample
//! with the id followed by 0/1 entries.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct LabelTable {
    pub class_names: Vec<String>,
    pub ids: Vec<String>,
    /// `c x N`.
    pub labels: Matrix,
}

impl LabelTable {
    /// Fails unless the header lists exactly `expected`, in order.
    pub fn expect_classes(&self, expected: &[String], path: &Path) -> Result<()> {
        if self.class_names != expected {
            return Err(Error::format(
                path,
                format!(
                    "class order mismatch: file has [{}], expected [{}]",
                    self.class_names.join(", "),
                    expected.join(", ")
                ),
            ));
        }
        Ok(())
    }
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::format(path, format!("{other:?}")),
    }
}

pub fn read_labels<R: Read>(reader: R, path: &Path) -> Result<LabelTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let header = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
    if header.len() < 2 || header.get(0).map(str::trim) != Some("id") {
        return Err(Error::format(path, "header must be `id,<class>,...`"));
    }
    let class_names: Vec<String> = header.iter().skip(1).map(|s| s.trim().to_string()).collect();
    let c = class_names.len();
    let mut ids = Vec::new();
    let mut columns: Vec<Vec<f64>> = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        // row numbers count the header as row 1
        let row = i + 2;
        let record = record.map_err(|e| csv_err(path, e))?;
        if record.len() != c + 1 {
            return Err(Error::format(
                path,
                format!("row {row}: expected {} columns, found {}", c + 1, record.len()),
            ));
        }
        ids.push(record[0].trim().to_string());
        let mut col = Vec::with_capacity(c);
        for (j, cell) in record.iter().skip(1).enumerate() {
            col.push(match cell.trim() {
                "0" => 0.0,
                "1" => 1.0,
                other => {
                    return Err(Error::format(
                        path,
                        format!(
                            "row {row}: value `{other}` for class `{}` is not 0 or 1",
                            class_names[j]
                        ),
                    ))
                }
            });
        }
        columns.push(col);
    }
    let labels = Matrix::from_fn(c, columns.len(), |r, s| columns[s][r]);
    Ok(LabelTable {
        class_names,
        ids,
        labels,
    })
}

pub fn load_labels(path: impl AsRef<Path>) -> Result<LabelTable> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_labels(file, path)
}

pub fn write_labels<W: Write>(out: W, table: &LabelTable) -> Result<()> {
    let to_err = |e: csv::Error| Error::format("<labels>", e.to_string());
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["id".to_string()];
    header.extend(table.class_names.iter().cloned());
    w.write_record(&header).map_err(to_err)?;
    for (s, id) in table.ids.iter().enumerate() {
        let mut row = vec![id.clone()];
        for c in 0..table.labels.rows() {
            row.push(if table.labels.get(c, s) > 0.5 { "1" } else { "0" }.to_string());
        }
        w.write_record(&row).map_err(to_err)?;
    }
    w.flush().map_err(|e| Error::format("<labels>", e.to_string()))?;
    Ok(())
}

pub fn save_labels(path: impl AsRef<Path>, table: &LabelTable) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_labels(file, table).map_err(|e| match e {
        Error::Format { msg, .. } => Error::format(path, msg),
        other => other,
    })
}
