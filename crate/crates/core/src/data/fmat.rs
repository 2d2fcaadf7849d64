//! `FMAT` dense matrix files.
//!
//! Layout, all little-endian:
//!
//! ```text
//! b"FMAT" | u32 version (=1) | u32 rows | u32 cols | rows*cols f32, row-major
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::Matrix;

pub const FMAT_MAGIC: &[u8; 4] = b"FMAT";
pub const FMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 16;

pub fn encode_fmat(m: &Matrix) -> Result<Vec<u8>> {
    let rows = u32::try_from(m.rows())
        .map_err(|_| Error::InvalidArgument("too many rows for FMAT".into()))?;
    let cols = u32::try_from(m.cols())
        .map_err(|_| Error::InvalidArgument("too many columns for FMAT".into()))?;
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * m.as_slice().len());
    out.extend_from_slice(FMAT_MAGIC);
    out.extend_from_slice(&FMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&rows.to_le_bytes());
    out.extend_from_slice(&cols.to_le_bytes());
    for &v in m.as_slice() {
        let narrow = v as f32;
        if !narrow.is_finite() {
            return Err(Error::NonFinite { op: "encode_fmat" });
        }
        out.extend_from_slice(&narrow.to_le_bytes());
    }
    Ok(out)
}

/// Decodes FMAT bytes; `path` is only used in error messages.
pub fn decode_fmat(bytes: &[u8], path: &Path) -> Result<Matrix> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::format(
            path,
            format!("size mismatch: {} bytes is shorter than the header", bytes.len()),
        ));
    }
    if &bytes[0..4] != FMAT_MAGIC {
        return Err(Error::format(path, "bad magic (expected FMAT)"));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes"));
    let version = word(4);
    if version != FMAT_VERSION {
        return Err(Error::format(path, format!("unsupported FMAT version {version}")));
    }
    let (rows, cols) = (word(8) as usize, word(12) as usize);
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(4))
        .and_then(|n| n.checked_add(HEADER_LEN))
        .ok_or_else(|| Error::format(path, "declared size overflows"))?;
    if bytes.len() != expected {
        return Err(Error::format(
            path,
            format!(
                "size mismatch: {rows}x{cols} needs {expected} bytes, file has {}",
                bytes.len()
            ),
        ));
    }
    let mut data = Vec::with_capacity(rows * cols);
    for (i, chunk) in bytes[HEADER_LEN..].chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().expect("4 bytes"));
        if !v.is_finite() {
            return Err(Error::format(path, format!("non-finite value at index {i}")));
        }
        data.push(v as f64);
    }
    Matrix::from_vec(rows, cols, data)
}

pub fn save_fmat(m: &Matrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_fmat(m)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_fmat(path: impl AsRef<Path>) -> Result<Matrix> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_fmat(&bytes, path)
}
