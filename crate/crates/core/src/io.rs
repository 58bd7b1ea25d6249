//! CSV and JSON file formats.
//!
//! Matrix CSV: the header row holds configuration ids (after a corner cell),
//! the first column holds dataset ids, and empty cells are missing.
//! Mask CSV: one observed cell per row as `i,j` or `i,j,p`.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::matrices::{MatrixKind, MeasurementMatrix, ObservationMask, PartialMatrix};
use crate::{Error, Matrix, Result};

/// Labelled matrix with possibly missing cells.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPartial {
    pub values: PartialMatrix<f64>,
    pub row_ids: Vec<String>,
    pub col_ids: Vec<String>,
}

impl LabeledPartial {
    /// Requires every cell to be present.
    pub fn into_measurement(self, kind: MatrixKind) -> Result<MeasurementMatrix<f64>> {
        let (n, d) = self.values.shape();
        let mut dense = Matrix::zeros(n, d);
        for i in 0..n {
            for j in 0..d {
                dense[(i, j)] = self.values.get(i, j).ok_or_else(|| {
                    Error::InvalidMatrix(format!(
                        "cell ({}, {}) is missing in a matrix that must be complete",
                        self.row_ids[i], self.col_ids[j]
                    ))
                })?;
            }
        }
        MeasurementMatrix::new(dense, self.row_ids, self.col_ids, kind)
    }
}

pub fn parse_matrix_csv<R: Read>(reader: R) -> Result<LabeledPartial> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.len() < 2 {
        return Err(Error::Parse("matrix CSV needs at least one configuration column".into()));
    }
    let col_ids: Vec<String> = header.iter().skip(1).map(str::to_owned).collect();
    let d = col_ids.len();
    let mut row_ids = Vec::new();
    let mut rows: Vec<Vec<Option<f64>>> = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != d + 1 {
            return Err(Error::Parse(format!(
                "row {} has {} fields, expected {}",
                line + 2,
                rec.len(),
                d + 1
            )));
        }
        row_ids.push(rec[0].to_owned());
        let cells = rec
            .iter()
            .skip(1)
            .map(|c| {
                if c.is_empty() {
                    Ok(None)
                } else {
                    c.parse::<f64>()
                        .map(Some)
                        .map_err(|e| Error::Parse(format!("row {}: {c:?}: {e}", line + 2)))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(cells);
    }
    let mut values = PartialMatrix::missing(rows.len(), d);
    for (i, row) in rows.into_iter().enumerate() {
        for (j, v) in row.into_iter().enumerate() {
            if let Some(x) = v {
                if !x.is_finite() {
                    return Err(Error::Parse(format!("non-finite value at ({i}, {j})")));
                }
            }
            values.set(i, j, v);
        }
    }
    Ok(LabeledPartial {
        values,
        row_ids,
        col_ids,
    })
}

pub fn read_matrix_csv(path: impl AsRef<Path>) -> Result<LabeledPartial> {
    parse_matrix_csv(File::open(path)?)
}

pub fn read_measurement_csv(path: impl AsRef<Path>, kind: MatrixKind) -> Result<MeasurementMatrix<f64>> {
    read_matrix_csv(path)?.into_measurement(kind)
}

fn format_value(v: f64) -> String {
    // shortest representation that round-trips
    format!("{v:?}")
}

pub fn write_matrix_csv<W: Write>(
    writer: W,
    values: &PartialMatrix<f64>,
    row_ids: &[String],
    col_ids: &[String],
) -> Result<()> {
    let (n, d) = values.shape();
    if row_ids.len() != n || col_ids.len() != d {
        return Err(Error::shape(format!("{n}×{d} labels"), format!("{}×{}", row_ids.len(), col_ids.len())));
    }
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec!["dataset".to_owned()];
    header.extend(col_ids.iter().cloned());
    wtr.write_record(&header)?;
    for (i, id) in row_ids.iter().enumerate().take(n) {
        let mut rec = vec![id.clone()];
        rec.extend((0..d).map(|j| values.get(i, j).map(format_value).unwrap_or_default()));
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_dense_csv(
    path: impl AsRef<Path>,
    values: &Matrix<f64>,
    row_ids: &[String],
    col_ids: &[String],
) -> Result<()> {
    let file = BufWriter::new(File::create(path)?);
    write_matrix_csv(file, &PartialMatrix::from_full(values), row_ids, col_ids)
}

pub fn write_measurement_csv(path: impl AsRef<Path>, m: &MeasurementMatrix<f64>) -> Result<()> {
    write_dense_csv(path, m.values(), m.row_ids(), m.col_ids())
}

/// Parses `i,j[,p]` rows; a non-numeric first line is treated as a header.
pub fn parse_mask_csv<R: Read>(reader: R, nrows: usize, ncols: usize) -> Result<ObservationMask<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut cells = Vec::new();
    let mut probs: Option<Matrix<f64>> = None;
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        if line == 0 && rec.get(0).is_some_and(|f| f.parse::<usize>().is_err()) {
            continue;
        }
        if rec.len() < 2 || rec.len() > 3 {
            return Err(Error::Parse(format!("mask line {}: expected i,j[,p]", line + 1)));
        }
        let parse_idx = |s: &str| {
            s.parse::<usize>()
                .map_err(|e| Error::Parse(format!("mask line {}: {s:?}: {e}", line + 1)))
        };
        let (i, j) = (parse_idx(&rec[0])?, parse_idx(&rec[1])?);
        if rec.len() == 3 {
            let p: f64 = rec[2]
                .parse()
                .map_err(|e| Error::Parse(format!("mask line {}: {e}", line + 1)))?;
            let pm = probs.get_or_insert_with(|| Matrix::zeros(nrows, ncols));
            if i < nrows && j < ncols {
                pm[(i, j)] = p;
            }
        }
        cells.push((i, j));
    }
    let mask = ObservationMask::from_cells(nrows, ncols, cells)?;
    match probs {
        Some(p) => mask.with_probs(p),
        None => Ok(mask),
    }
}

pub fn read_mask_csv(path: impl AsRef<Path>, nrows: usize, ncols: usize) -> Result<ObservationMask<f64>> {
    parse_mask_csv(File::open(path)?, nrows, ncols)
}

pub fn write_mask_csv<W: Write>(writer: W, mask: &ObservationMask<f64>) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().flexible(true).from_writer(writer);
    for (i, j) in mask.cells() {
        match mask.probs() {
            Some(p) => wtr.write_record([i.to_string(), j.to_string(), format_value(p[(i, j)])])?,
            None => wtr.write_record([i.to_string(), j.to_string()])?,
        }
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    Ok(serde_json::from_reader(File::open(path)?)?)
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// Writes `rows` (already stringified) under `header`.
pub fn write_rows_csv(path: impl AsRef<Path>, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path)?;
    wtr.write_record(header)?;
    for r in rows {
        wtr.write_record(r)?;
    }
    wtr.flush()?;
    Ok(())
}

/// `report.json` → `report.csv`.
pub fn companion_csv_path(json_path: &Path) -> std::path::PathBuf {
    json_path.with_extension("csv")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_csv_round_trip_with_missing() {
        let text = "dataset,c0,c1,c2\nd0,0.1,,0.3\nd1,0.25,0.5,\n";
        let m = parse_matrix_csv(text.as_bytes()).unwrap();
        assert_eq!(m.col_ids, vec!["c0", "c1", "c2"]);
        assert_eq!(m.row_ids, vec!["d0", "d1"]);
        assert_eq!(m.values.get(0, 1), None);
        assert_eq!(m.values.get(1, 1), Some(0.5));
        let mut out = Vec::new();
        write_matrix_csv(&mut out, &m.values, &m.row_ids, &m.col_ids).unwrap();
        assert_eq!(parse_matrix_csv(out.as_slice()).unwrap(), m);
        assert!(m.into_measurement(MatrixKind::Error).is_err());
    }

    #[test]
    fn matrix_csv_errors() {
        assert!(parse_matrix_csv("dataset\nd0\n".as_bytes()).is_err());
        assert!(parse_matrix_csv("dataset,a\nd0,x\n".as_bytes()).is_err());
        assert!(parse_matrix_csv("dataset,a,b\nd0,1\n".as_bytes()).is_err());
    }

    #[test]
    fn mask_csv_with_and_without_probs() {
        let m = parse_mask_csv("0,1\n1,0\n".as_bytes(), 2, 2).unwrap();
        assert_eq!(m.len(), 2);
        assert!(m.probs().is_none());
        let m = parse_mask_csv("i,j,p\n0,1,0.5\n1,0,0.25\n".as_bytes(), 2, 2).unwrap();
        assert_eq!(m.probs().unwrap()[(1, 0)], 0.25);
        let mut out = Vec::new();
        write_mask_csv(&mut out, &m).unwrap();
        assert_eq!(parse_mask_csv(out.as_slice(), 2, 2).unwrap(), m);
        assert!(parse_mask_csv("0,5\n".as_bytes(), 2, 2).is_err());
        assert!(parse_mask_csv("0,1,0.0\n".as_bytes(), 2, 2).is_err());
    }
}
