//! Plain numeric CSV: row-major matrices without a header, vectors as a
//! single column.

use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

fn csv_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Csv {
        path: path.display().to_string(),
        message: message.into(),
    }
}

fn read_rows(path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_err(path, e.to_string()))?;
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_err(path, e.to_string()))?;
        let row = record
            .iter()
            .map(|field| {
                field
                    .parse::<f64>()
                    .map_err(|_| csv_err(path, format!("row {}: `{field}` is not a number", i + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(csv_err(path, "file is empty"));
    }
    Ok(rows)
}

pub fn read_matrix_csv(path: &Path) -> Result<DMatrix<f64>> {
    let rows = read_rows(path)?;
    let ncols = rows[0].len();
    if let Some(i) = rows.iter().position(|r| r.len() != ncols) {
        return Err(csv_err(
            path,
            format!(
                "row {} has {} columns, expected {ncols}",
                i + 1,
                rows[i].len()
            ),
        ));
    }
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Ok(DMatrix::from_row_slice(flat.len() / ncols, ncols, &flat))
}

pub fn read_vector_csv(path: &Path) -> Result<DVector<f64>> {
    let rows = read_rows(path)?;
    if let Some(i) = rows.iter().position(|r| r.len() != 1) {
        return Err(csv_err(
            path,
            format!("row {} must have exactly one column", i + 1),
        ));
    }
    Ok(DVector::from_iterator(
        rows.len(),
        rows.into_iter().map(|r| r[0]),
    ))
}

/// 17 significant digits; parses back to the identical `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}
