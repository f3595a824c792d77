//! On-disk gallery: a JSON-lines identity manifest next to a binary embedding
//! matrix.
//!
//! Matrix layout (all little-endian):
//!
//! | offset | size | field                       |
//! |--------|------|-----------------------------|
//! | 0      | 4    | magic `CHRG`                |
//! | 4      | 4    | format version (u32)        |
//! | 8      | 4    | dimension D (u32)           |
//! | 12     | 8    | row count (u64)             |
//! | 20     | 8    | kappa (f64)                 |
//! | 28     | ..   | rows x D f32, row-major     |
//!
//! Each manifest line names one identity and the byte offset of its first
//! portrait row; an identity's rows are contiguous.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Gallery, IdentityRecord};
use crate::dist::Embedding;
use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"CHRG";
pub const FORMAT_VERSION: u32 = 1;
pub const HEADER_LEN: u64 = 28;

/// Decoded matrix file.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixFile {
    pub dim: usize,
    pub kappa: f64,
    pub data: Vec<f32>,
}

impl MatrixFile {
    pub fn rows(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn row(&self, i: usize) -> Option<&[f32]> {
        self.data.get(i * self.dim..(i + 1) * self.dim)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: String,
    pub birth_year: i32,
    pub portrait_count: u64,
    pub byte_offset: u64,
}

fn format_err(offset: u64, message: impl Into<String>) -> Error {
    Error::Format {
        offset,
        message: message.into(),
    }
}

pub fn write_matrix(path: &Path, dim: usize, kappa: f64, data: &[f32]) -> Result<()> {
    if dim == 0 || !data.len().is_multiple_of(dim) {
        return Err(Error::InvalidParameter(format!(
            "{} values do not form rows of dimension {dim}",
            data.len()
        )));
    }
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(dim as u32).to_le_bytes())?;
    w.write_all(&((data.len() / dim) as u64).to_le_bytes())?;
    w.write_all(&kappa.to_le_bytes())?;
    for v in data {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_matrix(path: &Path) -> Result<MatrixFile> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < HEADER_LEN as usize {
        return Err(format_err(
            bytes.len() as u64,
            format!("truncated header: {} of {HEADER_LEN} bytes", bytes.len()),
        ));
    }
    if bytes[0..4] != MAGIC {
        return Err(format_err(0, "bad magic, expected \"CHRG\""));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let version = u32_at(4);
    if version != FORMAT_VERSION {
        return Err(format_err(
            4,
            format!("unsupported version {version}, expected {FORMAT_VERSION}"),
        ));
    }
    let dim = u32_at(8) as usize;
    if dim == 0 {
        return Err(format_err(8, "dimension is zero"));
    }
    let rows = u64::from_le_bytes(bytes[12..20].try_into().unwrap());
    let kappa = f64::from_le_bytes(bytes[20..28].try_into().unwrap());
    let expected = rows
        .checked_mul(dim as u64 * 4)
        .and_then(|n| n.checked_add(HEADER_LEN))
        .ok_or_else(|| format_err(12, "row count overflows"))?;
    if bytes.len() as u64 != expected {
        return Err(format_err(
            bytes.len() as u64,
            format!(
                "file is {} bytes, header implies {expected} ({rows} rows x {dim} x 4 + {HEADER_LEN})",
                bytes.len()
            ),
        ));
    }
    let data = bytes[HEADER_LEN as usize..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(MatrixFile { dim, kappa, data })
}

/// Reads the identities of a manifest/matrix pair together with the stored
/// kappa. Raw inputs for gallery building use the same layout.
pub fn read_records(manifest: &Path, matrix: &Path) -> Result<(Vec<IdentityRecord>, f64)> {
    let m = read_matrix(matrix)?;
    let row_bytes = m.dim as u64 * 4;
    let mut records = Vec::new();
    let mut next_row = 0u64;
    let mut line_offset = 0u64;
    let reader = BufReader::new(File::open(manifest)?);
    for line in reader.split(b'\n') {
        let line = line?;
        let len = line.len() as u64 + 1;
        let text = std::str::from_utf8(&line)
            .map_err(|e| format_err(line_offset, format!("manifest is not UTF-8: {e}")))?;
        if text.trim().is_empty() {
            line_offset += len;
            continue;
        }
        let entry: ManifestEntry = serde_json::from_str(text)
            .map_err(|e| format_err(line_offset, format!("manifest line: {e}")))?;
        let expected = HEADER_LEN + next_row * row_bytes;
        if entry.byte_offset != expected {
            return Err(format_err(
                line_offset,
                format!(
                    "identity `{}` starts at byte {}, expected {expected}",
                    entry.id, entry.byte_offset
                ),
            ));
        }
        if entry.portrait_count == 0 {
            return Err(format_err(
                line_offset,
                format!("identity `{}` has no portraits", entry.id),
            ));
        }
        let end = next_row + entry.portrait_count;
        if end > m.rows() as u64 {
            return Err(format_err(
                entry.byte_offset,
                format!(
                    "identity `{}` needs rows up to {end}, matrix has {}",
                    entry.id,
                    m.rows()
                ),
            ));
        }
        let portraits = (next_row..end)
            .map(|r| {
                Embedding::from_f32(m.row(r as usize).unwrap())
                    .map_err(|e| format_err(HEADER_LEN + r * row_bytes, format!("row {r}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        records.push(
            IdentityRecord::new(entry.id, entry.birth_year, portraits)
                .map_err(|e| format_err(line_offset, e.to_string()))?,
        );
        next_row = end;
        line_offset += len;
    }
    if next_row != m.rows() as u64 {
        return Err(format_err(
            HEADER_LEN + next_row * row_bytes,
            format!("manifest covers {next_row} rows, matrix has {}", m.rows()),
        ));
    }
    Ok((records, m.kappa))
}

impl Gallery {
    pub fn save(&self, manifest: &Path, matrix: &Path) -> Result<()> {
        write_matrix(matrix, self.dim, self.kappa, self.portrait_matrix())?;
        let mut w = BufWriter::new(File::create(manifest)?);
        let row_bytes = self.dim as u64 * 4;
        for i in 0..self.len() {
            let entry = ManifestEntry {
                id: self.ids[i].clone(),
                birth_year: self.birth_years[i],
                portrait_count: (self.portrait_rows[i + 1] - self.portrait_rows[i]) as u64,
                byte_offset: HEADER_LEN + self.portrait_rows[i] as u64 * row_bytes,
            };
            serde_json::to_writer(&mut w, &entry)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    /// Loads a built gallery, keeping the stored kappa.
    pub fn load(manifest: &Path, matrix: &Path) -> Result<Self> {
        let (records, kappa) = read_records(manifest, matrix)?;
        if !(kappa.is_finite() && kappa >= 0.0) {
            return Err(format_err(20, format!("stored kappa {kappa} is invalid")));
        }
        Self::with_kappa(records, kappa)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_gallery() -> Gallery {
        let e = |v: &[f64]| Embedding::new(v.to_vec()).unwrap();
        let records = vec![
            IdentityRecord::new("a", 1950, vec![e(&[1.0, 0.2, 0.0]), e(&[0.9, 0.1, 0.3])]).unwrap(),
            IdentityRecord::new("b", 1971, vec![e(&[0.0, 1.0, 0.1])]).unwrap(),
        ];
        Gallery::build(records).unwrap()
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let (man, mat) = (dir.path().join("g.jsonl"), dir.path().join("g.bin"));
        let g = sample_gallery();
        g.save(&man, &mat).unwrap();
        let loaded = Gallery::load(&man, &mat).unwrap();
        assert_eq!(loaded, g);
        assert_eq!(loaded.kappa().to_bits(), g.kappa().to_bits());
        let text = std::fs::read_to_string(&man).unwrap();
        assert!(text.lines().next().unwrap().contains("\"byte_offset\":28"));
        assert!(text.lines().nth(1).unwrap().contains("\"byte_offset\":52"));
    }

    #[test]
    fn corrupted_magic_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let (man, mat) = (dir.path().join("g.jsonl"), dir.path().join("g.bin"));
        sample_gallery().save(&man, &mat).unwrap();
        let mut bytes = std::fs::read(&mat).unwrap();
        bytes[0] = b'X';
        std::fs::write(&mat, bytes).unwrap();
        let err = Gallery::load(&man, &mat).unwrap_err().to_string();
        assert!(err.contains("CHRG"), "{err}");
    }

    #[test]
    fn size_and_version_checks() {
        let dir = tempfile::tempdir().unwrap();
        let mat = dir.path().join("m.bin");
        write_matrix(&mat, 2, 0.0, &[1.0, 0.0, 0.0, 1.0]).unwrap();
        let mut bytes = std::fs::read(&mat).unwrap();
        bytes.pop();
        std::fs::write(&mat, &bytes).unwrap();
        assert!(matches!(read_matrix(&mat), Err(Error::Format { .. })));

        write_matrix(&mat, 2, 0.0, &[1.0, 0.0]).unwrap();
        let mut bytes = std::fs::read(&mat).unwrap();
        bytes[4] = 9;
        std::fs::write(&mat, &bytes).unwrap();
        let err = read_matrix(&mat).unwrap_err();
        assert!(matches!(err, Error::Format { offset: 4, .. }), "{err}");
    }

    #[test]
    fn manifest_offsets_are_checked() {
        let dir = tempfile::tempdir().unwrap();
        let (man, mat) = (dir.path().join("g.jsonl"), dir.path().join("g.bin"));
        sample_gallery().save(&man, &mat).unwrap();
        let text = std::fs::read_to_string(&man)
            .unwrap()
            .replace("\"byte_offset\":52", "\"byte_offset\":40");
        std::fs::write(&man, text).unwrap();
        let err = Gallery::load(&man, &mat).unwrap_err().to_string();
        assert!(err.contains("expected 52"), "{err}");
    }
}
