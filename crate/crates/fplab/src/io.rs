//! Deterministic artifact persistence.
//!
//! Three formats, all with stable bytes so a rerun of the same configuration
//! reproduces files hash-for-hash: binary path arrays (one JSON header line,
//! then a row-major IEEE-754 little-endian double payload), JSON reports,
//! and RFC-4180 CSV tables. Every writer returns the SHA-256 of the bytes
//! it wrote so run manifests can pin their outputs.

use std::fs;
use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Hex SHA-256 of a byte string.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        use std::fmt::Write;
        let _ = write!(out, "{b:02x}");
    }
    out
}

/// Recomputes a file's hash and compares against the recorded one.
pub fn verify_checksum(path: &Path, expected_hex: &str) -> Result<()> {
    let bytes = fs::read(path)?;
    let got = sha256_hex(&bytes);
    if got != expected_hex {
        return Err(Error::Integrity(format!(
            "{} hashes to {got}, manifest records {expected_hex}",
            path.display()
        )));
    }
    Ok(())
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    Ok(())
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<String> {
    ensure_parent(path)?;
    fs::write(path, bytes)?;
    Ok(sha256_hex(bytes))
}

/// Self-describing header stored as the first line of a binary path array.
/// The payload that follows is `samples * nodes * width` doubles, row-major
/// with the mode index fastest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArrayHeader {
    /// What the payload holds, e.g. `"ou-paths"` or `"trajectories"`.
    pub kind: String,
    pub samples: usize,
    pub nodes: usize,
    pub width: usize,
    pub dt: f64,
    pub horizon: f64,
    pub lambda: f64,
    /// Content hash of the mode basis the coefficients refer to.
    pub basis_tag: u64,
    pub seed: u64,
    /// Original sample indices when the array holds a retained subset.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sample_ids: Vec<usize>,
}

impl ArrayHeader {
    pub fn expected_len(&self) -> usize {
        self.samples * self.nodes * self.width
    }
}

/// Writes a binary path array and returns the file's SHA-256.
pub fn write_array(path: &Path, header: &ArrayHeader, data: &[f64]) -> Result<String> {
    if data.len() != header.expected_len() {
        return Err(Error::LengthMismatch {
            got: data.len(),
            available: header.expected_len(),
        });
    }
    let head = serde_json::to_string(header)?;
    let mut bytes = Vec::with_capacity(head.len() + 1 + 8 * data.len());
    bytes.extend_from_slice(head.as_bytes());
    bytes.push(b'\n');
    for x in data {
        bytes.extend_from_slice(&x.to_le_bytes());
    }
    write_bytes(path, &bytes)
}

/// Reads a binary path array back, validating the declared shape.
pub fn read_array(path: &Path) -> Result<(ArrayHeader, Vec<f64>)> {
    let bytes = fs::read(path)?;
    let split = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Integrity(format!("{}: missing header line", path.display())))?;
    let header: ArrayHeader = serde_json::from_slice(&bytes[..split])?;
    let payload = &bytes[split + 1..];
    if payload.len() % 8 != 0 {
        return Err(Error::Integrity(format!(
            "{}: payload of {} bytes is not a whole number of doubles",
            path.display(),
            payload.len()
        )));
    }
    let count = payload.len() / 8;
    if count != header.expected_len() {
        return Err(Error::Integrity(format!(
            "{}: header declares {} values, payload holds {count}",
            path.display(),
            header.expected_len()
        )));
    }
    let mut data = Vec::with_capacity(count);
    for chunk in payload.chunks_exact(8) {
        data.push(f64::from_le_bytes(chunk.try_into().unwrap()));
    }
    Ok((header, data))
}

/// Writes a pretty-printed JSON report and returns its SHA-256.
pub fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<String> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

pub fn read_json<D: DeserializeOwned>(path: &Path) -> Result<D> {
    let bytes = fs::read(path)?;
    Ok(serde_json::from_slice(&bytes)?)
}

/// Shortest round-trip decimal form of a double, for CSV cells.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}

fn csv_escape(cell: &str) -> String {
    if cell.contains(',') || cell.contains('"') || cell.contains('\n') {
        let mut out = String::with_capacity(cell.len() + 2);
        out.push('"');
        for ch in cell.chars() {
            if ch == '"' {
                out.push('"');
            }
            out.push(ch);
        }
        out.push('"');
        out
    } else {
        cell.to_string()
    }
}

/// In-memory CSV table with a fixed column set.
#[derive(Clone, Debug)]
pub struct CsvTable {
    columns: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new<S: AsRef<str>>(columns: &[S]) -> Self {
        CsvTable {
            columns: columns.iter().map(|c| c.as_ref().to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push_row(&mut self, cells: Vec<String>) -> Result<()> {
        if cells.len() != self.columns.len() {
            return Err(Error::LengthMismatch {
                got: cells.len(),
                available: self.columns.len(),
            });
        }
        self.rows.push(cells);
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    /// Renders the table; an empty table is a header line alone.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let line = |cells: &[String], out: &mut String| {
            for (i, cell) in cells.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&csv_escape(cell));
            }
            out.push('\n');
        };
        line(&self.columns, &mut out);
        for row in &self.rows {
            line(row, &mut out);
        }
        out
    }
}

/// Writes a CSV table and returns its SHA-256.
pub fn write_csv(path: &Path, table: &CsvTable) -> Result<String> {
    write_bytes(path, table.render().as_bytes())
}
