//! IDX files as distributed for MNIST and EMNIST.
//!
//! Layout: two zero bytes, a type byte (`0x08` for unsigned bytes), the
//! number of dimensions, then one big-endian `u32` per dimension and the
//! raw payload.

use std::path::Path;

use thiserror::Error;

use super::Dataset;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;
const UNSIGNED_BYTE: u8 = 0x08;

#[derive(Debug, Error)]
pub enum IdxError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("bad magic 0x{found:08x} at offset 0 (expected 0x{expected:08x})")]
    BadMagic { found: u32, expected: u32 },

    #[error("unsupported IDX element type 0x{0:02x} at offset 2")]
    UnsupportedType(u8),

    #[error("truncated file: need {needed} bytes at offset {offset}, only {available} available")]
    Truncated {
        offset: usize,
        needed: usize,
        available: usize,
    },

    #[error("{0} unexpected trailing bytes after payload")]
    Trailing(usize),

    #[error("zero-sized dimension {index} at offset {offset}")]
    ZeroDimension { index: usize, offset: usize },

    #[error("image count {images} does not match label count {labels}")]
    CountMismatch { images: usize, labels: usize },
}

/// A parsed IDX file with unsigned-byte payload.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdxFile {
    pub magic: [u8; 4],
    pub dims: Vec<u32>,
    pub payload: Vec<u8>,
}

impl IdxFile {
    pub fn magic_u32(&self) -> u32 {
        u32::from_be_bytes(self.magic)
    }

    pub fn parse(bytes: &[u8]) -> Result<Self, IdxError> {
        let need = |offset: usize, needed: usize| {
            if bytes.len().saturating_sub(offset) < needed {
                Err(IdxError::Truncated {
                    offset,
                    needed,
                    available: bytes.len().saturating_sub(offset),
                })
            } else {
                Ok(())
            }
        };
        need(0, 4)?;
        let magic: [u8; 4] = bytes[..4].try_into().unwrap();
        if magic[0] != 0 || magic[1] != 0 {
            return Err(IdxError::BadMagic {
                found: u32::from_be_bytes(magic),
                expected: u32::from_be_bytes([0, 0, UNSIGNED_BYTE, magic[3]]),
            });
        }
        if magic[2] != UNSIGNED_BYTE {
            return Err(IdxError::UnsupportedType(magic[2]));
        }
        let ndim = usize::from(magic[3]);
        need(4, 4 * ndim)?;
        let mut dims = Vec::with_capacity(ndim);
        let mut total: usize = 1;
        for i in 0..ndim {
            let offset = 4 + 4 * i;
            let d = u32::from_be_bytes(bytes[offset..offset + 4].try_into().unwrap());
            if d == 0 {
                return Err(IdxError::ZeroDimension { index: i, offset });
            }
            total = total.saturating_mul(d as usize);
            dims.push(d);
        }
        let start = 4 + 4 * ndim;
        need(start, total)?;
        let end = start + total;
        if bytes.len() > end {
            return Err(IdxError::Trailing(bytes.len() - end));
        }
        Ok(IdxFile {
            magic,
            dims,
            payload: bytes[start..end].to_vec(),
        })
    }

    fn expect_magic(&self, expected: u32) -> Result<(), IdxError> {
        if self.magic_u32() != expected {
            return Err(IdxError::BadMagic {
                found: self.magic_u32(),
                expected,
            });
        }
        Ok(())
    }
}

/// Builds a dataset from in-memory image and label IDX files. Pixels are
/// scaled to `[0, 1]` by dividing by 255.
pub fn parse_idx_pair(images: &[u8], labels: &[u8]) -> Result<Dataset, IdxError> {
    let images = IdxFile::parse(images)?;
    images.expect_magic(IMAGES_MAGIC)?;
    let labels = IdxFile::parse(labels)?;
    labels.expect_magic(LABELS_MAGIC)?;

    let count = images.dims[0] as usize;
    if count != labels.dims[0] as usize {
        return Err(IdxError::CountMismatch {
            images: count,
            labels: labels.dims[0] as usize,
        });
    }
    let dim = images.payload.len() / count;
    let features = images.payload.iter().map(|&p| f32::from(p) / 255.0).collect();
    let labels: Vec<u32> = labels.payload.iter().map(|&l| u32::from(l)).collect();
    let num_classes = labels.iter().copied().max().unwrap_or(0) as usize + 1;
    Ok(Dataset::new(dim, num_classes, features, labels).expect("sizes consistent by construction"))
}

fn read(path: &Path) -> Result<Vec<u8>, IdxError> {
    std::fs::read(path).map_err(|source| IdxError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Loads an image/label IDX pair from disk.
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset, IdxError> {
    parse_idx_pair(&read(images_path.as_ref())?, &read(labels_path.as_ref())?)
}

/// Serializes an unsigned-byte IDX file.
pub fn write_idx(magic: u32, dims: &[u32], payload: &[u8]) -> Vec<u8> {
    let mut out = magic.to_be_bytes().to_vec();
    for d in dims {
        out.extend_from_slice(&d.to_be_bytes());
    }
    out.extend_from_slice(payload);
    out
}
