//! Per-frame video embedding files.
//!
//! ```text
//! magic      8 bytes  "WELDEMBD"
//! version    u32      = 1
//! id_len     u32
//! sample_id  id_len bytes UTF-8
//! n_frames   u32
//! dim        u32
//! fps        f32
//! data       n_frames × dim f32 LE, row-major (frame after frame)
//! ```
//!
//! All integers and floats are little-endian. The file ends after the last
//! value; trailing bytes are an error.

use std::fs;
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"WELDEMBD";
pub const FORMAT_VERSION: u32 = 1;
/// Width of the backbone's per-window feature vector.
pub const EMBEDDING_DIM: usize = 2304;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSequence {
    pub sample_id: String,
    pub fps: f32,
    /// `(n_frames, dim)`.
    pub vectors: Array2<f64>,
}

fn format_err(detail: impl Into<String>) -> Error {
    Error::Format {
        format: "embedding",
        detail: detail.into(),
    }
}

impl EmbeddingSequence {
    pub fn new(sample_id: impl Into<String>, fps: f32, vectors: Array2<f64>) -> Result<Self> {
        let seq = EmbeddingSequence {
            sample_id: sample_id.into(),
            fps,
            vectors,
        };
        seq.validate()?;
        Ok(seq)
    }

    pub fn n_frames(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn frame_period(&self) -> f64 {
        1.0 / self.fps as f64
    }

    fn validate(&self) -> Result<()> {
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return Err(format_err(format!(
                "fps must be positive, got {}",
                self.fps
            )));
        }
        if self.n_frames() == 0 || self.dim() == 0 {
            return Err(format_err("empty embedding matrix"));
        }
        if let Some(pos) = self.vectors.iter().position(|v| !v.is_finite()) {
            return Err(format_err(format!(
                "non-finite value at frame {}, component {}",
                pos / self.dim(),
                pos % self.dim()
            )));
        }
        Ok(())
    }

    /// Errors unless every vector has the backbone width.
    pub fn require_dim(&self, dim: usize) -> Result<()> {
        if self.dim() != dim {
            return Err(Error::shape(
                "embedding sequence",
                format!(
                    "`{}` has dim {}, expected {dim}",
                    self.sample_id,
                    self.dim()
                ),
            ));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(32 + self.sample_id.len() + 4 * self.vectors.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.sample_id.len() as u32).to_le_bytes());
        out.extend_from_slice(self.sample_id.as_bytes());
        out.extend_from_slice(&(self.n_frames() as u32).to_le_bytes());
        out.extend_from_slice(&(self.dim() as u32).to_le_bytes());
        out.extend_from_slice(&self.fps.to_le_bytes());
        for &v in self.vectors.iter() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0usize;
        let mut take = |n: usize| -> Result<&[u8]> {
            let end = pos
                .checked_add(n)
                .filter(|&e| e <= bytes.len())
                .ok_or_else(|| format_err("truncated file"))?;
            let slice = &bytes[pos..end];
            pos = end;
            Ok(slice)
        };
        if take(8)? != MAGIC {
            return Err(format_err("bad magic"));
        }
        let read_u32 = |b: &[u8]| u32::from_le_bytes(b.try_into().expect("4 bytes"));
        let version = read_u32(take(4)?);
        if version != FORMAT_VERSION {
            return Err(format_err(format!("unsupported version {version}")));
        }
        let id_len = read_u32(take(4)?) as usize;
        let sample_id = std::str::from_utf8(take(id_len)?)
            .map_err(|_| format_err("sample id is not UTF-8"))?
            .to_string();
        let n_frames = read_u32(take(4)?) as usize;
        let dim = read_u32(take(4)?) as usize;
        let fps = f32::from_le_bytes(take(4)?.try_into().expect("4 bytes"));
        let body_len = n_frames
            .checked_mul(dim)
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| format_err(format!("header claims {n_frames} x {dim} values")))?;
        let body = take(body_len)?;
        let data = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        if pos != bytes.len() {
            return Err(format_err(format!("{} trailing bytes", bytes.len() - pos)));
        }
        let vectors =
            Array2::from_shape_vec((n_frames, dim), data).map_err(|e| format_err(e.to_string()))?;
        EmbeddingSequence::new(sample_id, fps, vectors)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> EmbeddingSequence {
        EmbeddingSequence::new(
            "w-001",
            30.0,
            Array2::from_shape_fn((3, 4), |(i, j)| (i * 4 + j) as f64 * 0.5),
        )
        .unwrap()
    }

    #[test]
    fn header_layout() {
        let bytes = sample().to_bytes();
        assert_eq!(&bytes[..8], b"WELDEMBD");
        assert_eq!(&bytes[8..12], &1u32.to_le_bytes());
        assert_eq!(&bytes[12..16], &5u32.to_le_bytes());
        assert_eq!(&bytes[16..21], b"w-001");
        assert_eq!(&bytes[21..25], &3u32.to_le_bytes());
        assert_eq!(&bytes[25..29], &4u32.to_le_bytes());
        assert_eq!(&bytes[29..33], &30.0f32.to_le_bytes());
        // row-major: second value is frame 0, component 1
        assert_eq!(&bytes[37..41], &0.5f32.to_le_bytes());
        assert_eq!(bytes.len(), 33 + 12 * 4);
    }

    #[test]
    fn round_trip_and_rejections() {
        let s = sample();
        let bytes = s.to_bytes();
        assert_eq!(EmbeddingSequence::from_bytes(&bytes).unwrap(), s);
        assert!(EmbeddingSequence::from_bytes(&bytes[..bytes.len() - 2]).is_err());
        let mut extra = bytes.clone();
        extra.push(1);
        assert!(EmbeddingSequence::from_bytes(&extra).is_err());
        let mut nan = bytes;
        let at = nan.len() - 4;
        nan[at..].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(EmbeddingSequence::from_bytes(&nan).is_err());
    }

    #[test]
    fn dimension_check() {
        assert!(sample().require_dim(EMBEDDING_DIM).is_err());
        assert!(sample().require_dim(4).is_ok());
    }
}
