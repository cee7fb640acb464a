//! Matrix files.
//!
//! Binary layout, all integers and floats little-endian:
//!
//! ```text
//! offset  size  field
//! 0       4     magic "VRMX"
//! 4       4     version (u32, currently 1)
//! 8       8     rows (u64, > 0)
//! 16      8     cols (u64, > 0)
//! 24      8*r*c entries, row-major f64
//! ```
//!
//! The CSV variant has a `rows,cols` header line followed by one line per row.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::Mat;

pub const MAGIC: &[u8; 4] = b"VRMX";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 24;

pub fn encode_matrix(m: &Mat) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * m.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(m.nrows() as u64).to_le_bytes());
    out.extend_from_slice(&(m.ncols() as u64).to_le_bytes());
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            out.extend_from_slice(&m[(r, c)].to_le_bytes());
        }
    }
    out
}

fn take<'a>(bytes: &'a [u8], offset: usize, len: usize, what: &str) -> Result<&'a [u8]> {
    bytes.get(offset..offset + len).ok_or_else(|| Error::Parse {
        offset: bytes.len() as u64,
        reason: format!("file truncated while reading {what}"),
    })
}

pub fn decode_matrix(bytes: &[u8]) -> Result<Mat> {
    let magic = take(bytes, 0, 4, "magic")?;
    if magic != MAGIC {
        return Err(Error::Parse {
            offset: 0,
            reason: "bad magic".into(),
        });
    }
    let version = u32::from_le_bytes(take(bytes, 4, 4, "version")?.try_into().unwrap());
    if version != VERSION {
        return Err(Error::Parse {
            offset: 4,
            reason: format!("unsupported version {version}"),
        });
    }
    let rows = u64::from_le_bytes(take(bytes, 8, 8, "rows")?.try_into().unwrap());
    let cols = u64::from_le_bytes(take(bytes, 16, 8, "cols")?.try_into().unwrap());
    if rows == 0 {
        return Err(Error::Parse {
            offset: 8,
            reason: "rows must be positive".into(),
        });
    }
    if cols == 0 {
        return Err(Error::Parse {
            offset: 16,
            reason: "cols must be positive".into(),
        });
    }
    let expected = rows
        .checked_mul(cols)
        .and_then(|k| k.checked_mul(8))
        .and_then(|k| k.checked_add(HEADER_LEN as u64))
        .ok_or_else(|| Error::Parse {
            offset: 8,
            reason: "dimensions overflow".into(),
        })?;
    if (bytes.len() as u64) < expected {
        return Err(Error::Parse {
            offset: bytes.len() as u64,
            reason: format!("file truncated: expected {expected} bytes for {rows}x{cols}"),
        });
    }
    if (bytes.len() as u64) > expected {
        return Err(Error::Parse {
            offset: expected,
            reason: format!("{} trailing bytes after {rows}x{cols} matrix", bytes.len() as u64 - expected),
        });
    }
    let (rows, cols) = (rows as usize, cols as usize);
    let mut m = Mat::zeros(rows, cols);
    let body = &bytes[HEADER_LEN..];
    for (k, chunk) in body.chunks_exact(8).enumerate() {
        let v = f64::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(Error::Parse {
                offset: (HEADER_LEN + 8 * k) as u64,
                reason: "non-finite entry".into(),
            });
        }
        m[(k / cols, k % cols)] = v;
    }
    Ok(m)
}

pub fn write_matrix(path: impl AsRef<Path>, m: &Mat) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_matrix(m)).map_err(|e| Error::io(path, e))
}

pub fn read_matrix(path: impl AsRef<Path>) -> Result<Mat> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_matrix(&bytes)
}

pub fn write_csv(path: impl AsRef<Path>, m: &Mat) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::WriterBuilder::new()
        .flexible(true)
        .from_path(path)
        .map_err(|e| Error::io(path, e.into()))?;
    let io_err = |e: csv::Error| Error::io(path, e.into());
    w.write_record([m.nrows().to_string(), m.ncols().to_string()])
        .map_err(io_err)?;
    for r in 0..m.nrows() {
        // `{:?}` prints the shortest representation that round-trips.
        w.write_record(m.row(r).iter().map(|v| format!("{v:?}")))
            .map_err(io_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<Mat> {
    let path = path.as_ref();
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::io(path, e.into()))?;
    let mut records = rdr.records();
    let parse_err = |e: csv::Error| {
        let offset = e.position().map(|p| p.byte()).unwrap_or(0);
        Error::Parse {
            offset,
            reason: e.to_string(),
        }
    };
    let header = records
        .next()
        .ok_or_else(|| Error::Parse {
            offset: 0,
            reason: "missing rows,cols header".into(),
        })?
        .map_err(parse_err)?;
    let dim = |k: usize| -> Result<usize> {
        header
            .get(k)
            .and_then(|s| s.parse::<usize>().ok())
            .filter(|v| *v > 0)
            .ok_or_else(|| Error::Parse {
                offset: 0,
                reason: "header must be `rows,cols` with positive integers".into(),
            })
    };
    if header.len() != 2 {
        return Err(Error::Parse {
            offset: 0,
            reason: "header must have exactly two fields".into(),
        });
    }
    let (rows, cols) = (dim(0)?, dim(1)?);
    let mut m = Mat::zeros(rows, cols);
    let mut seen = 0;
    for rec in records {
        let rec = rec.map_err(parse_err)?;
        let offset = rec.position().map(|p| p.byte()).unwrap_or(0);
        if seen == rows {
            return Err(Error::Parse {
                offset,
                reason: format!("more than {rows} data rows"),
            });
        }
        if rec.len() != cols {
            return Err(Error::Parse {
                offset,
                reason: format!("row {} has {} fields, expected {cols}", seen + 1, rec.len()),
            });
        }
        for (c, field) in rec.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                offset,
                reason: format!("invalid number `{field}`"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    offset,
                    reason: "non-finite entry".into(),
                });
            }
            m[(seen, c)] = v;
        }
        seen += 1;
    }
    if seen != rows {
        return Err(Error::Parse {
            offset: 0,
            reason: format!("expected {rows} data rows, found {seen}"),
        });
    }
    Ok(m)
}

/// Read a data matrix; `.csv` files use the text format, anything else the
/// binary one.
pub fn load_matrix_file(path: impl AsRef<Path>) -> Result<Mat> {
    let path = path.as_ref();
    match path.extension().and_then(|e| e.to_str()) {
        Some(ext) if ext.eq_ignore_ascii_case("csv") => read_csv(path),
        _ => read_matrix(path),
    }
}
