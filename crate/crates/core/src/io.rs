//! Reading and writing matrices, vectors, point clouds and label files.
//!
//! Matrices are CSV (one row per line, no header) unless the path ends in `.mat`, which
//! selects a raw format: the magic `FRLCMAT1`, row and column counts as little-endian
//! `u32`, then the entries as row-major little-endian `f64`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2};

use crate::datasets::PointCloud;
use crate::error::{OtError, Result};

pub const MAT_MAGIC: &[u8; 8] = b"FRLCMAT1";

fn is_mat(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("mat"))
}

fn csv_error(e: csv::Error) -> OtError {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => OtError::Io(io),
        kind => OtError::Parse { line, msg: format!("{kind:?}") },
    }
}

fn parse_f64(field: &str, line: usize) -> Result<f64> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| OtError::Parse { line, msg: format!("not a number: '{}'", field.trim()) })?;
    if !v.is_finite() {
        return Err(OtError::Parse { line, msg: format!("non-finite value '{}'", field.trim()) });
    }
    Ok(v)
}

fn csv_reader(path: &Path, headers: bool) -> Result<csv::Reader<File>> {
    csv::ReaderBuilder::new()
        .has_headers(headers)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(csv_error)
}

/// Rows of numbers from a header-less CSV. Every row must have the same width.
fn read_csv_rows(path: &Path) -> Result<(Vec<f64>, usize, usize)> {
    let mut reader = csv_reader(path, false)?;
    let mut data = Vec::new();
    let (mut rows, mut cols) = (0, 0);
    for record in reader.records() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map_or(rows + 1, |p| p.line() as usize);
        if rows == 0 {
            cols = record.len();
        }
        for field in &record {
            data.push(parse_f64(field, line)?);
        }
        rows += 1;
    }
    Ok((data, rows, cols))
}

fn read_mat(path: &Path) -> Result<Array2<f64>> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    let bad = |msg: String| OtError::Parse { line: 0, msg };
    if bytes.len() < 16 || &bytes[..8] != MAT_MAGIC {
        return Err(bad(format!("{} is not a FRLCMAT1 file", path.display())));
    }
    let rows = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let cols = u32::from_le_bytes(bytes[12..16].try_into().expect("4 bytes")) as usize;
    let body = &bytes[16..];
    if body.len() != rows * cols * 8 {
        return Err(bad(format!("header says {rows}x{cols} but the body holds {} bytes", body.len())));
    }
    let data: Vec<f64> = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    if let Some(i) = data.iter().position(|x| !x.is_finite()) {
        return Err(bad(format!("non-finite entry at row {}, column {}", i / cols.max(1), i % cols.max(1))));
    }
    Ok(Array2::from_shape_vec((rows, cols), data).expect("length checked"))
}

fn write_mat(path: &Path, m: ArrayView2<'_, f64>) -> Result<()> {
    let (rows, cols) = m.dim();
    let too_big = |n: usize| u32::try_from(n).map_err(|_| OtError::TooLarge(format!("{rows}x{cols} matrix")));
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAT_MAGIC)?;
    w.write_all(&too_big(rows)?.to_le_bytes())?;
    w.write_all(&too_big(cols)?.to_le_bytes())?;
    for x in m.iter() {
        w.write_all(&x.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_matrix(path: impl AsRef<Path>) -> Result<Array2<f64>> {
    let path = path.as_ref();
    if is_mat(path) {
        return read_mat(path);
    }
    let (data, rows, cols) = read_csv_rows(path)?;
    Ok(Array2::from_shape_vec((rows, cols), data).expect("csv reader enforces equal widths"))
}

pub fn write_matrix(path: impl AsRef<Path>, m: ArrayView2<'_, f64>) -> Result<()> {
    let path = path.as_ref();
    if is_mat(path) {
        return write_mat(path, m);
    }
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    for row in m.rows() {
        w.write_record(row.iter().map(|x| format!("{x:e}"))).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// A vector stored as a single column or a single row.
pub fn read_vector(path: impl AsRef<Path>) -> Result<Array1<f64>> {
    let path = path.as_ref();
    let m = read_matrix(path)?;
    match m.dim() {
        (_, 1) | (1, _) => Ok(Array1::from_iter(m.iter().copied())),
        (0, 0) => Ok(Array1::zeros(0)),
        (r, c) => Err(OtError::shape(format!("{} holds a {r}x{c} matrix, expected a vector", path.display()))),
    }
}

/// Written as a single column.
pub fn write_vector(path: impl AsRef<Path>, v: &Array1<f64>) -> Result<()> {
    write_matrix(path, v.view().insert_axis(ndarray::Axis(1)))
}

/// Points from a CSV, one point per row. An optional header `x0,x1,…[,label]` may name a
/// `label` column; without a header every column is a coordinate.
pub fn read_points(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let mut records = csv_reader(path, false)?.into_records();
    let first = records.next().transpose().map_err(csv_error)?;
    let headed = first.as_ref().is_some_and(|r| r.iter().any(|f| f.parse::<f64>().is_err()));
    let label_col = if headed { first.as_ref().and_then(|r| r.iter().position(|h| h == "label")) } else { None };
    let width = first.as_ref().map_or(0, |r| r.len());
    let dim = width - usize::from(label_col.is_some());
    let mut coords = Vec::new();
    let mut labels = Vec::new();
    let mut n = 0;
    let body = if headed { None } else { first.map(Ok) };
    for record in body.into_iter().chain(records) {
        let record = record.map_err(csv_error)?;
        let line = record.position().map_or(n + 1, |p| p.line() as usize);
        for (j, field) in record.iter().enumerate() {
            if Some(j) == label_col {
                let l = field.parse().map_err(|_| OtError::Parse { line, msg: format!("bad label '{field}'") })?;
                labels.push(l);
            } else {
                coords.push(parse_f64(field, line)?);
            }
        }
        n += 1;
    }
    if n == 0 {
        return Err(OtError::invalid(format!("{} contains no points", path.display())));
    }
    let points = Array2::from_shape_vec((n, dim), coords).expect("csv reader enforces equal widths");
    PointCloud::new(points, label_col.map(|_| labels))
}

pub fn write_points(path: impl AsRef<Path>, cloud: &PointCloud) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    let mut header: Vec<String> = (0..cloud.dim()).map(|j| format!("x{j}")).collect();
    if cloud.labels.is_some() {
        header.push("label".into());
    }
    w.write_record(&header).map_err(csv_error)?;
    for (i, row) in cloud.points.rows().into_iter().enumerate() {
        let mut fields: Vec<String> = row.iter().map(|x| format!("{x:e}")).collect();
        if let Some(l) = &cloud.labels {
            fields.push(l[i].to_string());
        }
        w.write_record(&fields).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// One non-negative integer label per line. A non-numeric first line is taken as a header.
pub fn read_labels(path: impl AsRef<Path>) -> Result<Vec<usize>> {
    let text = std::fs::read_to_string(path)?;
    let mut labels = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        match line.parse() {
            Ok(l) => labels.push(l),
            Err(_) if i == 0 => {}
            Err(_) => return Err(OtError::Parse { line: i + 1, msg: format!("bad label '{line}'") }),
        }
    }
    Ok(labels)
}

pub fn write_labels(path: impl AsRef<Path>, labels: &[usize]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "label")?;
    for l in labels {
        writeln!(w, "{l}")?;
    }
    w.flush()?;
    Ok(())
}
