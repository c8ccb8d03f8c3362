//! Versioned plain-text artifact format shared by model files, traces and
//! reports.
//!
//! ```text
//! format = turbine-svr-model
//! version = 1
//! kernel_scale = 3
//! feature_mean = 6.5 15.7 11.5 27 8.1 288.2 101325 180 1.22
//! matrix support_vectors 2 9
//! 0.1 -0.3 ...
//! 1.2 0.8 ...
//! ```
//!
//! The first two lines are always `format` and `version`. Every other line
//! is either `key = value` (a scalar, or a whitespace-separated list of
//! numbers) or a `matrix <key> <rows> <cols>` header followed by `rows`
//! lines of `cols` numbers. Lines starting with `#` are comments. Keys are
//! unique and written in a fixed order by each producer, so identical
//! content always serializes to identical bytes. Floats use the shortest
//! representation that parses back to the same bit pattern.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum FormatError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("expected format `{expected}`, found `{found}`")]
    WrongFormat { expected: String, found: String },
    #[error("unsupported {format} version {found} (this build reads {supported})")]
    WrongVersion { format: String, found: u32, supported: u32 },
    #[error("missing key `{0}`")]
    Missing(String),
    #[error("key `{key}`: {msg}")]
    BadValue { key: String, msg: String },
}

/// Formats a float so that `str::parse::<f64>` recovers it exactly.
pub fn fmt_f64(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || (1e-5..1e16).contains(&a) || !x.is_finite() {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

#[derive(Debug)]
pub struct KvWriter {
    buf: String,
}

impl KvWriter {
    pub fn new(format: &str, version: u32) -> Self {
        let mut w = KvWriter { buf: String::new() };
        w.str("format", format);
        w.int("version", version as i64);
        w
    }

    pub fn comment(&mut self, text: &str) {
        for line in text.lines() {
            let _ = writeln!(self.buf, "# {line}");
        }
    }

    pub fn str(&mut self, key: &str, value: &str) {
        debug_assert!(!value.contains('\n'), "artifact values are single-line");
        let _ = writeln!(self.buf, "{key} = {value}");
    }

    pub fn num(&mut self, key: &str, value: f64) {
        let _ = writeln!(self.buf, "{key} = {}", fmt_f64(value));
    }

    pub fn int(&mut self, key: &str, value: i64) {
        let _ = writeln!(self.buf, "{key} = {value}");
    }

    pub fn flag(&mut self, key: &str, value: bool) {
        let _ = writeln!(self.buf, "{key} = {value}");
    }

    pub fn array(&mut self, key: &str, values: &[f64]) {
        self.buf.push_str(key);
        self.buf.push_str(" =");
        for v in values {
            self.buf.push(' ');
            self.buf.push_str(&fmt_f64(*v));
        }
        self.buf.push('\n');
    }

    pub fn matrix(&mut self, key: &str, rows: usize, cols: usize, data: &[f64]) {
        assert_eq!(data.len(), rows * cols, "matrix `{key}` shape mismatch");
        let _ = writeln!(self.buf, "matrix {key} {rows} {cols}");
        for r in 0..rows {
            let row = &data[r * cols..(r + 1) * cols];
            let line: Vec<String> = row.iter().map(|v| fmt_f64(*v)).collect();
            self.buf.push_str(&line.join(" "));
            self.buf.push('\n');
        }
    }

    pub fn finish(self) -> String {
        self.buf
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct KvDoc {
    pub format: String,
    pub version: u32,
    scalars: HashMap<String, String>,
    matrices: HashMap<String, Matrix>,
}

impl KvDoc {
    /// Parses `text`, checking the format tag and that the version is not
    /// newer than `max_version`.
    pub fn parse(text: &str, expected_format: &str, max_version: u32) -> Result<KvDoc, FormatError> {
        let mut scalars = HashMap::new();
        let mut matrices = HashMap::new();
        let mut lines = text.lines().enumerate().peekable();

        while let Some((idx, raw)) = lines.next() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let lineno = idx + 1;
            if let Some(rest) = line.strip_prefix("matrix ") {
                let parts: Vec<&str> = rest.split_whitespace().collect();
                if parts.len() != 3 {
                    return Err(syntax(lineno, "matrix header needs `matrix <key> <rows> <cols>`"));
                }
                let rows: usize = parts[1].parse().map_err(|_| syntax(lineno, "bad row count"))?;
                let cols: usize = parts[2].parse().map_err(|_| syntax(lineno, "bad column count"))?;
                let mut data = Vec::with_capacity(rows * cols);
                for _ in 0..rows {
                    let (ridx, rline) = lines.next().ok_or_else(|| syntax(lineno, "matrix truncated"))?;
                    let before = data.len();
                    for tok in rline.split_whitespace() {
                        data.push(tok.parse::<f64>().map_err(|_| syntax(ridx + 1, &format!("bad number `{tok}`")))?);
                    }
                    if data.len() - before != cols {
                        return Err(syntax(ridx + 1, "matrix row has wrong column count"));
                    }
                }
                if matrices.insert(parts[0].to_string(), Matrix { rows, cols, data }).is_some() {
                    return Err(syntax(lineno, "duplicate key"));
                }
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| syntax(lineno, "expected `key = value`"))?;
            let key = key.trim().to_string();
            if key.is_empty() {
                return Err(syntax(lineno, "empty key"));
            }
            if scalars.insert(key, value.trim().to_string()).is_some() {
                return Err(syntax(lineno, "duplicate key"));
            }
        }

        let format = scalars.remove("format").ok_or_else(|| FormatError::Missing("format".into()))?;
        if format != expected_format {
            return Err(FormatError::WrongFormat {
                expected: expected_format.into(),
                found: format,
            });
        }
        let version: u32 = scalars
            .remove("version")
            .ok_or_else(|| FormatError::Missing("version".into()))?
            .parse()
            .map_err(|_| FormatError::BadValue {
                key: "version".into(),
                msg: "not an integer".into(),
            })?;
        if version == 0 || version > max_version {
            return Err(FormatError::WrongVersion {
                format,
                found: version,
                supported: max_version,
            });
        }
        Ok(KvDoc {
            format,
            version,
            scalars,
            matrices,
        })
    }

    pub fn has(&self, key: &str) -> bool {
        self.scalars.contains_key(key) || self.matrices.contains_key(key)
    }

    pub fn str(&self, key: &str) -> Result<&str, FormatError> {
        self.scalars
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| FormatError::Missing(key.into()))
    }

    pub fn parse_as<T: std::str::FromStr>(&self, key: &str) -> Result<T, FormatError> {
        let raw = self.str(key)?;
        raw.parse().map_err(|_| FormatError::BadValue {
            key: key.into(),
            msg: format!("cannot parse `{raw}`"),
        })
    }

    pub fn f64(&self, key: &str) -> Result<f64, FormatError> {
        self.parse_as(key)
    }

    pub fn usize(&self, key: &str) -> Result<usize, FormatError> {
        self.parse_as(key)
    }

    pub fn u64(&self, key: &str) -> Result<u64, FormatError> {
        self.parse_as(key)
    }

    pub fn bool(&self, key: &str) -> Result<bool, FormatError> {
        self.parse_as(key)
    }

    pub fn array(&self, key: &str) -> Result<Vec<f64>, FormatError> {
        self.str(key)?
            .split_whitespace()
            .map(|t| {
                t.parse::<f64>().map_err(|_| FormatError::BadValue {
                    key: key.into(),
                    msg: format!("bad number `{t}`"),
                })
            })
            .collect()
    }

    pub fn array_len(&self, key: &str, len: usize) -> Result<Vec<f64>, FormatError> {
        let v = self.array(key)?;
        if v.len() != len {
            return Err(FormatError::BadValue {
                key: key.into(),
                msg: format!("expected {len} values, found {}", v.len()),
            });
        }
        Ok(v)
    }

    pub fn matrix(&self, key: &str) -> Result<&Matrix, FormatError> {
        self.matrices.get(key).ok_or_else(|| FormatError::Missing(key.into()))
    }
}

fn syntax(line: usize, msg: &str) -> FormatError {
    FormatError::Syntax { line, msg: msg.into() }
}

/// Writes `contents` to a sibling temp file and renames it over `path`, so
/// readers never observe a partially written artifact.
pub fn write_atomic(path: &Path, contents: &[u8]) -> io::Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)
}
