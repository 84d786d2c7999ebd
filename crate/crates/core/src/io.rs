//! SCMX and CSV matrix files, trace CSV and the flat `key = value` config.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::descent::DescentTrace;
use crate::numerics::Matrix;

pub const MAGIC: &[u8; 4] = b"SCMX";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 24;
pub const TRACE_HEADER: &str = "iter,max_col_err,mean_col_err,spec_ratio,grad_norm,eta";

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bad magic at byte 0: expected \"SCMX\", found {found:?}")]
    BadMagic { found: Vec<u8> },
    #[error("unsupported version {found} at byte 4 (expected 1)")]
    BadVersion { found: u32 },
    #[error("truncated {what} at byte {offset}: expected {expected} bytes, found {actual}")]
    Truncated {
        what: &'static str,
        offset: usize,
        expected: usize,
        actual: usize,
    },
    #[error("{extra} unexpected trailing bytes at byte {offset}")]
    TrailingBytes { offset: usize, extra: usize },
    #[error("non-finite value at byte {offset}")]
    NonFinite { offset: usize },
    #[error("matrix of {rows}x{cols} is too large")]
    TooLarge { rows: u64, cols: u64 },
    #[error("csv line {line}: {msg}")]
    Csv { line: usize, msg: String },
    #[error("config line {line}: {msg}")]
    Config { line: usize, msg: String },
    #[error("config: {0}")]
    ConfigValue(String),
}

pub type Result<T> = std::result::Result<T, IoError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// SCMX bytes: magic, `u32` version, `u64` rows, `u64` cols, then the
/// column-major `f64` payload, all little-endian.
pub fn encode_matrix(m: &Matrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * m.as_slice().len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(m.rows() as u64).to_le_bytes());
    out.extend_from_slice(&(m.cols() as u64).to_le_bytes());
    for v in m.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn take<'a>(bytes: &'a [u8], offset: usize, len: usize, what: &'static str) -> Result<&'a [u8]> {
    let actual = bytes.len().saturating_sub(offset);
    if actual < len {
        return Err(IoError::Truncated {
            what,
            offset,
            expected: len,
            actual,
        });
    }
    Ok(&bytes[offset..offset + len])
}

pub fn decode_matrix(bytes: &[u8]) -> Result<Matrix> {
    let magic = take(bytes, 0, 4, "magic")?;
    if magic != MAGIC {
        return Err(IoError::BadMagic {
            found: magic.to_vec(),
        });
    }
    let version = u32::from_le_bytes(take(bytes, 4, 4, "version")?.try_into().unwrap());
    if version != VERSION {
        return Err(IoError::BadVersion { found: version });
    }
    let rows = u64::from_le_bytes(take(bytes, 8, 8, "row count")?.try_into().unwrap());
    let cols = u64::from_le_bytes(take(bytes, 16, 8, "column count")?.try_into().unwrap());
    let count = rows
        .checked_mul(cols)
        .and_then(|c| usize::try_from(c).ok())
        .filter(|c| c.checked_mul(8).is_some())
        .ok_or(IoError::TooLarge { rows, cols })?;
    let payload = take(bytes, HEADER_LEN, count * 8, "payload")?;
    let extra = bytes.len() - HEADER_LEN - count * 8;
    if extra > 0 {
        return Err(IoError::TrailingBytes {
            offset: HEADER_LEN + count * 8,
            extra,
        });
    }
    let mut data = Vec::with_capacity(count);
    for (i, chunk) in payload.chunks_exact(8).enumerate() {
        let v = f64::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(IoError::NonFinite {
                offset: HEADER_LEN + 8 * i,
            });
        }
        data.push(v);
    }
    Matrix::from_column_major(rows as usize, cols as usize, data).map_err(|e| IoError::Csv {
        line: 0,
        msg: e.to_string(),
    })
}

pub fn write_matrix(path: &Path, m: &Matrix) -> Result<()> {
    fs::write(path, encode_matrix(m)).map_err(io_err(path))
}

pub fn read_matrix(path: &Path) -> Result<Matrix> {
    decode_matrix(&fs::read(path).map_err(io_err(path))?)
}

/// First line `rows,cols`, then one line per row with 17 significant digits.
pub fn matrix_to_csv(m: &Matrix) -> String {
    let mut s = format!("{},{}\n", m.rows(), m.cols());
    for r in 0..m.rows() {
        for c in 0..m.cols() {
            if c > 0 {
                s.push(',');
            }
            write!(s, "{:.16e}", m.get(r, c)).unwrap();
        }
        s.push('\n');
    }
    s
}

pub fn matrix_from_csv(text: &str) -> Result<Matrix> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or(IoError::Csv {
        line: 1,
        msg: "empty file".into(),
    })?;
    let dims: Vec<usize> = header
        .split(',')
        .map(|f| f.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| IoError::Csv {
            line: 1,
            msg: format!("bad header: {e}"),
        })?;
    let [rows, cols] = dims[..] else {
        return Err(IoError::Csv {
            line: 1,
            msg: "header must be rows,cols".into(),
        });
    };
    let mut data = vec![0.0; rows * cols];
    let mut seen = 0;
    for (idx, line) in lines {
        if seen == rows {
            return Err(IoError::Csv {
                line: idx + 1,
                msg: format!("more than {rows} rows"),
            });
        }
        let vals: Vec<f64> = line
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| IoError::Csv {
                line: idx + 1,
                msg: e.to_string(),
            })?;
        if vals.len() != cols {
            return Err(IoError::Csv {
                line: idx + 1,
                msg: format!("expected {cols} values, found {}", vals.len()),
            });
        }
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(IoError::Csv {
                line: idx + 1,
                msg: "non-finite value".into(),
            });
        }
        for (c, v) in vals.into_iter().enumerate() {
            data[c * rows + seen] = v;
        }
        seen += 1;
    }
    if seen != rows {
        return Err(IoError::Csv {
            line: seen + 2,
            msg: format!("expected {rows} rows, found {seen}"),
        });
    }
    Matrix::from_column_major(rows, cols, data).map_err(|e| IoError::Csv {
        line: 1,
        msg: e.to_string(),
    })
}

fn is_csv(path: &Path) -> bool {
    path.extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

/// Writes CSV for a `.csv` extension and SCMX otherwise.
pub fn save_matrix(path: &Path, m: &Matrix) -> Result<()> {
    if is_csv(path) {
        fs::write(path, matrix_to_csv(m)).map_err(io_err(path))
    } else {
        write_matrix(path, m)
    }
}

pub fn load_matrix(path: &Path) -> Result<Matrix> {
    if is_csv(path) {
        matrix_from_csv(&fs::read_to_string(path).map_err(io_err(path))?)
    } else {
        read_matrix(path)
    }
}

pub fn trace_to_csv(trace: &DescentTrace) -> String {
    let mut s = String::from(TRACE_HEADER);
    s.push('\n');
    for r in &trace.records {
        writeln!(
            s,
            "{},{},{},{},{},{}",
            r.iter, r.max_col_err, r.mean_col_err, r.spec_ratio, r.grad_norm, r.eta
        )
        .unwrap();
    }
    s
}

pub fn write_trace(path: &Path, trace: &DescentTrace) -> Result<()> {
    fs::write(path, trace_to_csv(trace)).map_err(io_err(path))
}

/// Parsed `key = value` pairs. Blank lines and `#` comments are skipped;
/// keys outside `allowed` and repeated keys are errors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct KeyValues {
    values: BTreeMap<String, String>,
}

impl KeyValues {
    pub fn parse(text: &str, allowed: &[&str]) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| IoError::Config {
                line: idx + 1,
                msg: format!("expected key = value, found {line:?}"),
            })?;
            let (k, v) = (k.trim(), v.trim());
            if !allowed.contains(&k) {
                return Err(IoError::Config {
                    line: idx + 1,
                    msg: format!("unknown key {k:?}"),
                });
            }
            if values.insert(k.to_string(), v.to_string()).is_some() {
                return Err(IoError::Config {
                    line: idx + 1,
                    msg: format!("duplicate key {k:?}"),
                });
            }
        }
        Ok(KeyValues { values })
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn get<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.raw(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| IoError::ConfigValue(format!("{key} = {v:?}: {e}")))
            })
            .transpose()
    }

    pub fn require<T: std::str::FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)?
            .ok_or_else(|| IoError::ConfigValue(format!("missing required key {key:?}")))
    }

    pub fn get_or<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_by_one_layout() {
        let m = Matrix::from_column_major(1, 1, vec![2.5]).unwrap();
        let b = encode_matrix(&m);
        assert_eq!(b.len(), 32);
        assert_eq!(&b[..4], b"SCMX");
        assert_eq!(&b[4..8], &[1, 0, 0, 0]);
        assert_eq!(&b[24..], &0x4004000000000000u64.to_le_bytes());
        assert_eq!(decode_matrix(&b).unwrap(), m);
    }

    #[test]
    fn decode_errors() {
        let m = Matrix::identity(2);
        let b = encode_matrix(&m);
        let short = &b[..b.len() - 3];
        match decode_matrix(short) {
            Err(IoError::Truncated {
                offset,
                expected,
                actual,
                ..
            }) => assert_eq!((offset, expected, actual), (24, 32, 29)),
            other => panic!("{other:?}"),
        }
        let mut bad = b.clone();
        bad[0] = b'X';
        assert!(matches!(decode_matrix(&bad), Err(IoError::BadMagic { .. })));
        let mut bad = b.clone();
        bad[4] = 2;
        assert!(matches!(
            decode_matrix(&bad),
            Err(IoError::BadVersion { found: 2 })
        ));
        let mut long = b.clone();
        long.push(0);
        assert!(matches!(
            decode_matrix(&long),
            Err(IoError::TrailingBytes { .. })
        ));
        let mut nan = b;
        nan[24..32].copy_from_slice(&f64::NAN.to_le_bytes());
        assert!(matches!(
            decode_matrix(&nan),
            Err(IoError::NonFinite { offset: 24 })
        ));
    }

    #[test]
    fn csv_round_trip() {
        let m = Matrix::from_rows(&[vec![0.1, -1.0 / 3.0], vec![1e-300, 6.02e23]]).unwrap();
        let back = matrix_from_csv(&matrix_to_csv(&m)).unwrap();
        assert_eq!(back, m);
        assert!(matrix_from_csv("2,2\n1,2\n").is_err());
        assert!(matrix_from_csv("1,2\n1\n").is_err());
    }

    #[test]
    fn config_grammar() {
        let text = "# model\nn = 8\nm=4 # trailing\n\nrule = simple\n";
        let kv = KeyValues::parse(text, &["n", "m", "rule"]).unwrap();
        assert_eq!(kv.require::<usize>("n").unwrap(), 8);
        assert_eq!(kv.raw("rule"), Some("simple"));
        assert_eq!(kv.get_or("k", 3usize).unwrap(), 3);
        assert!(kv.require::<usize>("k").is_err());
        assert!(KeyValues::parse("x = 1", &["n"]).is_err());
        assert!(KeyValues::parse("n = 1\nn = 2", &["n"]).is_err());
        assert!(KeyValues::parse("n 1", &["n"]).is_err());
    }
}
