//! Matrix and label files.
//!
//! Two matrix encodings are supported:
//!
//! - CSV: header `c0,c1,...,c{k-1}` followed by `n` rows of `k` numbers.
//! - RawF32: 16-byte header (`b"SHOR"`, `n` as u32 LE, `k` as u32 LE, a
//!   reserved u32 that must be 0) then `n * k` little-endian f32 values in
//!   row-major order.
//!
//! Label files are single-column CSV with header `y` and one class index per row.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use crate::data::Matrix;
use crate::error::{Error, Result};

pub const RAW_MAGIC: [u8; 4] = *b"SHOR";
const RAW_HEADER_LEN: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixFormat {
    Csv,
    RawF32,
}

impl MatrixFormat {
    /// RawF32 when the bytes start with the magic, CSV otherwise.
    pub fn sniff(bytes: &[u8]) -> Self {
        if bytes.starts_with(&RAW_MAGIC) {
            MatrixFormat::RawF32
        } else {
            MatrixFormat::Csv
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatrixFile {
    pub path: PathBuf,
    /// `None` sniffs the format from the file contents.
    pub format: Option<MatrixFormat>,
    pub is_logits: bool,
}

impl MatrixFile {
    pub fn new(path: impl Into<PathBuf>, is_logits: bool) -> Self {
        Self {
            path: path.into(),
            format: None,
            is_logits,
        }
    }
}

pub fn load_matrix(file: &MatrixFile) -> Result<Matrix> {
    let bytes = fs::read(&file.path).map_err(|e| {
        Error::format(format!("cannot read {}: {e}", file.path.display()))
    })?;
    let format = file.format.unwrap_or_else(|| MatrixFormat::sniff(&bytes));
    let parsed = match format {
        MatrixFormat::Csv => parse_csv_matrix(&bytes[..]),
        MatrixFormat::RawF32 => parse_raw_f32(&bytes),
    };
    parsed.map_err(|e| match e {
        Error::Format(msg) => Error::format(format!("{}: {msg}", file.path.display())),
        other => other,
    })
}

pub fn parse_csv_matrix(reader: impl Read) -> Result<Matrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers().map_err(csv_error)?.clone();
    let k = header.len();
    if k == 0 {
        return Err(Error::format("missing header row"));
    }
    for (j, name) in header.iter().enumerate() {
        if name != format!("c{j}") {
            return Err(Error::format(format!(
                "header column {j} is '{name}', expected 'c{j}'"
            )));
        }
    }
    let mut data = Vec::new();
    let mut rows = 0;
    for record in rdr.records() {
        let record = record.map_err(csv_error)?;
        for field in record.iter() {
            let v: f64 = field.parse().map_err(|_| {
                Error::format(format!("row {}: '{field}' is not a number", rows + 1))
            })?;
            data.push(v);
        }
        rows += 1;
    }
    Matrix::new(rows, k, data)
}

fn csv_error(e: csv::Error) -> Error {
    match e.kind() {
        csv::ErrorKind::UnequalLengths {
            expected_len, len, pos, ..
        } => Error::format(format!(
            "line {}: {len} fields, header has {expected_len}",
            pos.as_ref().map_or(0, |p| p.line())
        )),
        _ => Error::format(e.to_string()),
    }
}

pub fn parse_raw_f32(bytes: &[u8]) -> Result<Matrix> {
    if bytes.len() < RAW_HEADER_LEN {
        return Err(Error::format(format!(
            "{} bytes is too short for a RawF32 header",
            bytes.len()
        )));
    }
    if bytes[..4] != RAW_MAGIC {
        return Err(Error::format("bad magic, expected \"SHOR\""));
    }
    let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"));
    let (n, k, reserved) = (word(4) as usize, word(8) as usize, word(12));
    if reserved != 0 {
        return Err(Error::format(format!("reserved header field is {reserved}, not 0")));
    }
    let expected = n
        .checked_mul(k)
        .and_then(|c| c.checked_mul(4))
        .and_then(|b| b.checked_add(RAW_HEADER_LEN))
        .ok_or_else(|| Error::format("matrix dimensions overflow"))?;
    if bytes.len() != expected {
        return Err(Error::format(format!(
            "{n}x{k} matrix needs {expected} bytes, file has {}",
            bytes.len()
        )));
    }
    let data = bytes[RAW_HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
        .collect();
    Matrix::new(n, k, data)
}

pub fn encode_raw_f32(m: &Matrix) -> Result<Vec<u8>> {
    let n = u32::try_from(m.rows()).map_err(|_| Error::invalid("too many rows for RawF32"))?;
    let k = u32::try_from(m.cols()).map_err(|_| Error::invalid("too many columns for RawF32"))?;
    let mut out = Vec::with_capacity(RAW_HEADER_LEN + 4 * m.as_slice().len());
    out.extend_from_slice(&RAW_MAGIC);
    out.extend_from_slice(&n.to_le_bytes());
    out.extend_from_slice(&k.to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    for &v in m.as_slice() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    Ok(out)
}

pub fn encode_csv(m: &Matrix) -> String {
    let mut out = (0..m.cols())
        .map(|j| format!("c{j}"))
        .collect::<Vec<_>>()
        .join(",");
    out.push('\n');
    for row in m.iter_rows() {
        let line = row.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",");
        out.push_str(&line);
        out.push('\n');
    }
    out
}

pub fn write_matrix(path: &Path, format: MatrixFormat, m: &Matrix) -> Result<()> {
    let bytes = match format {
        MatrixFormat::Csv => encode_csv(m).into_bytes(),
        MatrixFormat::RawF32 => encode_raw_f32(m)?,
    };
    fs::File::create(path)?.write_all(&bytes)?;
    Ok(())
}

pub fn load_labels(path: &Path) -> Result<Vec<usize>> {
    let bytes = fs::read(path)
        .map_err(|e| Error::format(format!("cannot read {}: {e}", path.display())))?;
    parse_labels(&bytes[..]).map_err(|e| match e {
        Error::Format(msg) => Error::format(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn parse_labels(reader: impl Read) -> Result<Vec<usize>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers().map_err(csv_error)?;
    if header.len() != 1 || &header[0] != "y" {
        return Err(Error::format("label file needs the single header column 'y'"));
    }
    rdr.records()
        .enumerate()
        .map(|(i, r)| {
            let r = r.map_err(csv_error)?;
            r[0].parse::<usize>()
                .map_err(|_| Error::format(format!("row {}: '{}' is not a class index", i + 1, &r[0])))
        })
        .collect()
}

pub fn encode_labels(labels: &[usize]) -> String {
    let mut out = String::from("y\n");
    for y in labels {
        out.push_str(&y.to_string());
        out.push('\n');
    }
    out
}

/// Serde adapter writing non-finite floats as the strings `"inf"`, `"-inf"`, `"nan"`.
pub mod json_f64 {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => match t.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(de::Error::custom(format!("not a number: {other}"))),
            },
        }
    }
}
