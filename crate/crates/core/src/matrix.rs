//! Dense row-major matrices and the `ZSEM` binary file format.
//!
//! Layout (little-endian):
//!
//! ```text
//! offset 0   b"ZSEM"
//! offset 4   version byte 0x01
//! offset 5   rows: u32
//! offset 9   cols: u32
//! offset 13  rows * cols f32 values, row-major
//! ```
//!
//! Values are held as `f64` in memory. Every `f32` widens exactly, so a
//! load followed by a save reproduces the original bytes.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, FormatError, Result};

pub const MAGIC: &[u8; 4] = b"ZSEM";
pub const FORMAT_VERSION: u8 = 0x01;
pub const HEADER_LEN: usize = 13;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl EmbeddingMatrix {
    /// Builds a matrix from row-major data. Rejects empty shapes, a length
    /// that disagrees with the shape, and non-finite values.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::invalid(format!(
                "matrix must have at least one row and column, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::mismatch("matrix data length", rows * cols, data.len()));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite value at row {}, col {}",
                i / cols,
                i % cols
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != cols) {
            return Err(Error::mismatch("row length", cols, bad.len()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.cols)
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    /// New matrix made of the selected rows, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Self> {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            if i >= self.rows {
                return Err(Error::invalid(format!(
                    "row index {i} out of range for {} rows",
                    self.rows
                )));
            }
            data.extend_from_slice(self.row(i));
        }
        Self::new(indices.len(), self.cols, data)
    }

    /// Encodes into the `ZSEM` byte layout.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let rows = u32::try_from(self.rows)
            .map_err(|_| Error::invalid(format!("{} rows exceed u32", self.rows)))?;
        let cols = u32::try_from(self.cols)
            .map_err(|_| Error::invalid(format!("{} cols exceed u32", self.cols)))?;
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * self.data.len());
        out.extend_from_slice(MAGIC);
        out.push(FORMAT_VERSION);
        out.extend_from_slice(&rows.to_le_bytes());
        out.extend_from_slice(&cols.to_le_bytes());
        for (i, &v) in self.data.iter().enumerate() {
            let narrow = v as f32;
            if !narrow.is_finite() {
                return Err(Error::invalid(format!(
                    "value {v} at row {}, col {} overflows f32",
                    i / self.cols,
                    i % self.cols
                )));
            }
            out.extend_from_slice(&narrow.to_le_bytes());
        }
        Ok(out)
    }

    /// Decodes the `ZSEM` byte layout.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, FormatError> {
        if bytes.len() < 4 || &bytes[..4] != MAGIC {
            return Err(FormatError::BadMagic {
                found: bytes[..bytes.len().min(4)].to_vec(),
            });
        }
        if bytes.len() < HEADER_LEN {
            return Err(FormatError::TruncatedHeader {
                offset: bytes.len(),
            });
        }
        if bytes[4] != FORMAT_VERSION {
            return Err(FormatError::BadVersion { found: bytes[4] });
        }
        let rows = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
        let cols = u32::from_le_bytes(bytes[9..13].try_into().unwrap()) as usize;
        if rows == 0 || cols == 0 {
            return Err(FormatError::Empty { rows, cols });
        }
        let payload = &bytes[HEADER_LEN..];
        let expected = rows
            .checked_mul(cols)
            .and_then(|n| n.checked_mul(4))
            .unwrap_or(usize::MAX);
        if payload.len() < expected {
            // Offset of the first value that could not be read in full.
            let whole = payload.len() / 4;
            return Err(FormatError::TruncatedPayload {
                offset: HEADER_LEN + whole * 4,
                expected,
                found: payload.len(),
            });
        }
        if payload.len() > expected {
            return Err(FormatError::TrailingBytes {
                offset: HEADER_LEN + expected,
                extra: payload.len() - expected,
            });
        }
        let mut data = Vec::with_capacity(rows * cols);
        for (i, chunk) in payload.chunks_exact(4).enumerate() {
            let v = f32::from_le_bytes(chunk.try_into().unwrap());
            if !v.is_finite() {
                return Err(FormatError::NonFinite {
                    offset: HEADER_LEN + 4 * i,
                    row: i / cols,
                    col: i % cols,
                });
            }
            data.push(v as f64);
        }
        Ok(Self { rows, cols, data })
    }
}

pub fn load_matrix(path: impl AsRef<Path>) -> Result<EmbeddingMatrix> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    EmbeddingMatrix::from_bytes(&bytes).map_err(|source| Error::Format {
        path: path.to_path_buf(),
        source,
    })
}

pub fn save_matrix(matrix: &EmbeddingMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = matrix.to_bytes()?;
    write_atomic(path, &bytes)
}

/// Writes through a sibling temp file and renames it into place.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    let mut file = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    file.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    file.sync_all().map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn encode(rows: u32, cols: u32, values: &[f32]) -> Vec<u8> {
        let mut b = b"ZSEM\x01".to_vec();
        b.extend_from_slice(&rows.to_le_bytes());
        b.extend_from_slice(&cols.to_le_bytes());
        for v in values {
            b.extend_from_slice(&v.to_le_bytes());
        }
        b
    }

    #[test]
    fn identity_from_bytes() {
        let m = EmbeddingMatrix::from_bytes(&encode(2, 2, &[1.0, 0.0, 0.0, 1.0])).unwrap();
        assert_eq!((m.rows(), m.cols()), (2, 2));
        assert_eq!(m.as_slice(), &[1.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn one_by_one_is_seventeen_bytes() {
        let m = EmbeddingMatrix::new(1, 1, vec![0.5]).unwrap();
        let bytes = m.to_bytes().unwrap();
        assert_eq!(bytes.len(), 17);
        assert_eq!(&bytes[..5], b"ZSEM\x01");
        assert_eq!(&bytes[13..], &0.5f32.to_le_bytes());
    }

    #[test]
    fn truncated_payload_names_offset() {
        let err = EmbeddingMatrix::from_bytes(&encode(3, 2, &[1.0; 5])).unwrap_err();
        assert_eq!(
            err,
            FormatError::TruncatedPayload {
                offset: 13 + 20,
                expected: 24,
                found: 20
            }
        );
    }

    #[test]
    fn bad_magic_and_version() {
        let mut b = encode(1, 1, &[1.0]);
        b[0] = b'X';
        assert!(matches!(
            EmbeddingMatrix::from_bytes(&b),
            Err(FormatError::BadMagic { .. })
        ));
        let mut b = encode(1, 1, &[1.0]);
        b[4] = 2;
        assert_eq!(
            EmbeddingMatrix::from_bytes(&b),
            Err(FormatError::BadVersion { found: 2 })
        );
        assert!(matches!(
            EmbeddingMatrix::from_bytes(b"ZSEM\x01\x01"),
            Err(FormatError::TruncatedHeader { offset: 6 })
        ));
    }

    #[test]
    fn non_finite_names_offset() {
        let err = EmbeddingMatrix::from_bytes(&encode(2, 2, &[1.0, 2.0, f32::NAN, 0.0])).unwrap_err();
        assert_eq!(
            err,
            FormatError::NonFinite {
                offset: 13 + 8,
                row: 1,
                col: 0
            }
        );
        let err = EmbeddingMatrix::from_bytes(&encode(1, 1, &[f32::INFINITY])).unwrap_err();
        assert!(matches!(err, FormatError::NonFinite { offset: 13, .. }));
    }

    #[test]
    fn trailing_bytes_rejected() {
        let mut b = encode(1, 1, &[1.0]);
        b.push(0);
        assert_eq!(
            EmbeddingMatrix::from_bytes(&b),
            Err(FormatError::TrailingBytes {
                offset: 17,
                extra: 1
            })
        );
    }

    #[test]
    fn empty_shapes_rejected() {
        assert!(EmbeddingMatrix::new(0, 3, vec![]).is_err());
        assert!(matches!(
            EmbeddingMatrix::from_bytes(&encode(0, 3, &[])),
            Err(FormatError::Empty { .. })
        ));
    }

    #[test]
    fn overflowing_value_rejected_on_save() {
        let m = EmbeddingMatrix::new(1, 1, vec![1e300]).unwrap();
        assert!(m.to_bytes().is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.zsem");
        let m = EmbeddingMatrix::new(2, 3, vec![0.25, -1.5, 3.0, 7.0, 0.0, -0.125]).unwrap();
        save_matrix(&m, &path).unwrap();
        assert_eq!(load_matrix(&path).unwrap(), m);
        assert!(!path.with_extension("zsem.tmp").exists());
        let missing = load_matrix(dir.path().join("nope.zsem")).unwrap_err();
        assert!(matches!(missing, Error::Io { .. }));
    }

    proptest! {
        #[test]
        fn bytes_round_trip_bit_exact(
            rows in 1usize..6,
            cols in 1usize..6,
            seed in proptest::collection::vec(any::<u32>(), 36),
        ) {
            let values: Vec<f32> = seed
                .iter()
                .take(rows * cols)
                .map(|&bits| {
                    let v = f32::from_bits(bits);
                    if v.is_finite() { v } else { bits as f32 }
                })
                .collect();
            let bytes = encode(rows as u32, cols as u32, &values);
            let m = EmbeddingMatrix::from_bytes(&bytes).unwrap();
            prop_assert_eq!(m.to_bytes().unwrap(), bytes);
        }
    }
}
