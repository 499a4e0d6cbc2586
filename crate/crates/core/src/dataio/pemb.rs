//! PEMB binary embedding matrix plus JSONL metadata sidecar.
//!
//! Matrix layout, all little-endian:
//!
//! ```text
//! offset  size  field
//!      0     4  magic "PEMB"
//!      4     1  version (1)
//!      5     3  reserved, zero
//!      8     4  d   (u32)
//!     12     8  n   (u64)
//!     20  4·n·d row-major IEEE-754 binary32 values
//! ```
//!
//! The sidecar holds one JSON object per row:
//! `{"row": k, "id": "...", "uri": "...", "score": 0.5}` with `uri` and
//! `score` optional. Rows may appear in any order on read and are written
//! in row order.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::table::{EmbeddingTable, RowMeta};
use crate::embedding::Embedding;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"PEMB";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 20;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MetaLine {
    row: u64,
    id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    uri: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    score: Option<f64>,
}

/// Encodes the matrix part of a table.
pub fn encode_matrix(dim: usize, rows: &[Vec<f32>]) -> Result<Vec<u8>> {
    let d = u32::try_from(dim).map_err(|_| Error::Validation(format!("dimension {dim} exceeds u32")))?;
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * dim * rows.len());
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&[0u8; 3]);
    out.extend_from_slice(&d.to_le_bytes());
    out.extend_from_slice(&(rows.len() as u64).to_le_bytes());
    for row in rows {
        if row.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: row.len(),
            });
        }
        for v in row {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

/// Decodes a matrix buffer into `(d, rows)` of raw 32-bit values.
pub fn decode_matrix(bytes: &[u8]) -> Result<(usize, Vec<Vec<f32>>)> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format(format!(
            "file is {} bytes, shorter than the {HEADER_LEN}-byte header",
            bytes.len()
        )));
    }
    if &bytes[0..4] != MAGIC {
        return Err(Error::Format("bad magic, expected \"PEMB\"".into()));
    }
    if bytes[4] != VERSION {
        return Err(Error::Format(format!("unsupported version {}", bytes[4])));
    }
    if bytes[5..8] != [0, 0, 0] {
        return Err(Error::Format("reserved header bytes are not zero".into()));
    }
    let dim = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let n = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes"));
    if dim == 0 {
        return Err(Error::Format("dimension is zero".into()));
    }
    let payload = &bytes[HEADER_LEN..];
    let expected = (n as u128) * (dim as u128) * 4;
    if payload.len() as u128 != expected {
        return Err(Error::Corruption(format!(
            "header declares n={n}, d={dim} ({expected} payload bytes) but file holds {} payload bytes",
            payload.len()
        )));
    }
    let rows = payload
        .chunks_exact(4 * dim)
        .map(|row| {
            row.chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
                .collect()
        })
        .collect();
    Ok((dim, rows))
}

fn parse_meta(reader: impl BufRead, n: usize) -> Result<Vec<MetaLine>> {
    let mut slots: Vec<Option<MetaLine>> = (0..n).map(|_| None).collect();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let meta: MetaLine = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        let row = usize::try_from(meta.row)
            .ok()
            .filter(|&r| r < n)
            .ok_or_else(|| Error::Validation(format!("line {lineno}: row {} outside [0, {n})", meta.row)))?;
        if slots[row].is_some() {
            return Err(Error::Validation(format!("line {lineno}: row {row} listed twice")));
        }
        slots[row] = Some(meta);
    }
    slots
        .into_iter()
        .enumerate()
        .map(|(row, m)| m.ok_or_else(|| Error::Validation(format!("metadata missing for row {row}"))))
        .collect()
}

/// Loads a matrix file and its metadata sidecar into a validated table.
pub fn load_embeddings(matrix_path: impl AsRef<Path>, meta_path: impl AsRef<Path>) -> Result<EmbeddingTable> {
    let matrix_path = matrix_path.as_ref();
    let meta_path = meta_path.as_ref();
    let mut bytes = Vec::new();
    File::open(matrix_path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(matrix_path, e))?;
    let (dim, raw) = decode_matrix(&bytes)?;
    let meta_file = File::open(meta_path).map_err(|e| Error::io(meta_path, e))?;
    let metas = parse_meta(BufReader::new(meta_file), raw.len())?;

    let mut ids = Vec::with_capacity(raw.len());
    let mut rows = Vec::with_capacity(raw.len());
    let mut meta = Vec::with_capacity(raw.len());
    for (values, m) in raw.into_iter().zip(metas) {
        let e = Embedding::from_f32(&values).map_err(|err| match err {
            Error::NonFinite { index, .. } => {
                Error::Validation(format!("non-finite component at index {index} of '{}'", m.id))
            }
            other => other,
        })?;
        rows.push(e);
        ids.push(m.id);
        meta.push(RowMeta {
            uri: m.uri,
            score: m.score,
        });
    }
    EmbeddingTable::with_meta(dim, ids, rows, meta)
}

/// Writes the table; identical tables produce identical bytes.
pub fn save_embeddings(
    table: &EmbeddingTable,
    matrix_path: impl AsRef<Path>,
    meta_path: impl AsRef<Path>,
) -> Result<()> {
    let matrix_path = matrix_path.as_ref();
    let meta_path = meta_path.as_ref();
    let rows: Vec<Vec<f32>> = table
        .rows()
        .iter()
        .map(|r| r.as_slice().iter().map(|&v| v as f32).collect())
        .collect();
    let bytes = encode_matrix(table.dim(), &rows)?;
    std::fs::write(matrix_path, bytes).map_err(|e| Error::io(matrix_path, e))?;

    let file = File::create(meta_path).map_err(|e| Error::io(meta_path, e))?;
    let mut w = BufWriter::new(file);
    for (row, (id, m)) in table.ids().iter().zip(table.meta()).enumerate() {
        let line = MetaLine {
            row: row as u64,
            id: id.clone(),
            uri: m.uri.clone(),
            score: m.score,
        };
        let json = serde_json::to_string(&line).expect("metadata serializes");
        writeln!(w, "{json}").map_err(|e| Error::io(meta_path, e))?;
    }
    w.flush().map_err(|e| Error::io(meta_path, e))
}
