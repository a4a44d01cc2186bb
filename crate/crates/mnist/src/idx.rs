//! IDX tensor files (the MNIST distribution format).
//!
//! Layout: two zero bytes, a type byte, a dimension count byte, then one
//! big-endian `u32` per dimension, then the row-major payload. Only the
//! unsigned-byte type (`0x08`) is supported. Files starting with the gzip
//! magic are decompressed transparently.

use std::fs;
use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;
use thiserror::Error;

pub const MAGIC_IMAGES: u32 = 0x0000_0803;
pub const MAGIC_LABELS: u32 = 0x0000_0801;
const TYPE_UBYTE: u8 = 0x08;

#[derive(Debug, Error)]
pub enum IdxError {
    #[error("bad IDX magic 0x{0:08x}")]
    BadMagic(u32),
    #[error("IDX header or payload truncated: need {expected} bytes, found {actual}")]
    Truncated { expected: usize, actual: usize },
    #[error("IDX dimensions {0:?} overflow the addressable size")]
    DimensionOverflow(Vec<u32>),
    #[error("IDX file has {0} unexpected bytes after the payload")]
    TrailingBytes(usize),
    #[error("expected IDX magic 0x{expected:08x}, found 0x{actual:08x}")]
    UnexpectedKind { expected: u32, actual: u32 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxTensor {
    pub magic: u32,
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

impl IdxTensor {
    /// Parses an uncompressed IDX byte buffer.
    pub fn parse(bytes: &[u8]) -> Result<Self, IdxError> {
        if bytes.len() < 4 {
            return Err(IdxError::Truncated {
                expected: 4,
                actual: bytes.len(),
            });
        }
        let magic = u32::from_be_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]);
        let ndims = bytes[3] as usize;
        if bytes[0] != 0 || bytes[1] != 0 || bytes[2] != TYPE_UBYTE || ndims == 0 {
            return Err(IdxError::BadMagic(magic));
        }
        let header = 4 + 4 * ndims;
        if bytes.len() < header {
            return Err(IdxError::Truncated {
                expected: header,
                actual: bytes.len(),
            });
        }
        let raw: Vec<u32> = bytes[4..header]
            .chunks_exact(4)
            .map(|c| u32::from_be_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let len = raw
            .iter()
            .try_fold(1usize, |acc, d| acc.checked_mul(*d as usize))
            .and_then(|n| n.checked_add(header).map(|_| n))
            .ok_or_else(|| IdxError::DimensionOverflow(raw.clone()))?;
        let payload = &bytes[header..];
        if payload.len() < len {
            return Err(IdxError::Truncated {
                expected: header + len,
                actual: bytes.len(),
            });
        }
        if payload.len() > len {
            return Err(IdxError::TrailingBytes(payload.len() - len));
        }
        Ok(Self {
            magic,
            dims: raw.iter().map(|d| *d as usize).collect(),
            data: payload.to_vec(),
        })
    }

    /// Serializes back to the uncompressed IDX byte layout.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(4 + 4 * self.dims.len() + self.data.len());
        out.extend_from_slice(&self.magic.to_be_bytes());
        for d in &self.dims {
            out.extend_from_slice(&(*d as u32).to_be_bytes());
        }
        out.extend_from_slice(&self.data);
        out
    }

    pub fn expect_magic(self, expected: u32) -> Result<Self, IdxError> {
        if self.magic != expected {
            return Err(IdxError::UnexpectedKind {
                expected,
                actual: self.magic,
            });
        }
        Ok(self)
    }

    /// Number of items along the first dimension.
    pub fn len(&self) -> usize {
        self.dims[0]
    }

    pub fn is_empty(&self) -> bool {
        self.dims[0] == 0
    }

    /// Size of one item (product of the trailing dimensions).
    pub fn item_size(&self) -> usize {
        self.dims[1..].iter().product()
    }

    /// Payload scaled from `0..=255` to `[0, 1]`.
    pub fn scaled(&self) -> Vec<f64> {
        self.data.iter().map(|b| f64::from(*b) / 255.0).collect()
    }
}

/// Raw (decompressed) bytes of an IDX file, gzip or not.
pub fn read_idx_bytes(path: &Path) -> Result<Vec<u8>, IdxError> {
    let raw = fs::read(path)?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(&raw[..]).read_to_end(&mut out)?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

pub fn load_idx(path: &Path) -> Result<IdxTensor, IdxError> {
    IdxTensor::parse(&read_idx_bytes(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(n: u32) -> Vec<u8> {
        let mut b = MAGIC_LABELS.to_be_bytes().to_vec();
        b.extend_from_slice(&n.to_be_bytes());
        b.extend((0..n).map(|i| (i % 10) as u8));
        b
    }

    #[test]
    fn label_file_parses() {
        let t = IdxTensor::parse(&labels(10)).unwrap();
        assert_eq!(t.dims, vec![10]);
        assert_eq!(t.data.len(), 10);
        assert_eq!(t.to_bytes(), labels(10));
    }

    #[test]
    fn canonical_image_header_arithmetic() {
        let mut header = MAGIC_IMAGES.to_be_bytes().to_vec();
        for d in [60000u32, 28, 28] {
            header.extend_from_slice(&d.to_be_bytes());
        }
        match IdxTensor::parse(&header) {
            Err(IdxError::Truncated { expected, .. }) => assert_eq!(expected, 16 + 47_040_000),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn errors_are_distinct() {
        let good = labels(10);
        assert!(matches!(
            IdxTensor::parse(&good[..good.len() - 1]),
            Err(IdxError::Truncated { .. })
        ));
        let mut extra = good.clone();
        extra.push(0);
        assert!(matches!(
            IdxTensor::parse(&extra),
            Err(IdxError::TrailingBytes(1))
        ));
        let mut bad = good.clone();
        bad[2] = 0x0d;
        assert!(matches!(IdxTensor::parse(&bad), Err(IdxError::BadMagic(_))));
        let mut huge = vec![0, 0, 8, 4];
        for _ in 0..4 {
            huge.extend_from_slice(&u32::MAX.to_be_bytes());
        }
        assert!(matches!(
            IdxTensor::parse(&huge),
            Err(IdxError::DimensionOverflow(_))
        ));
    }
}
