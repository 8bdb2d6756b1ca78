//! Binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic        8 bytes  "WELDCKPT"
//! version      u32      = 1
//! arch_len     u32
//! arch         arch_len bytes, UTF-8 JSON architecture description
//! seed         u64      RNG seed the model was initialised/trained with
//! n_tensors    u32
//! per tensor, in declaration order:
//!   name_len   u32
//!   name       name_len bytes UTF-8
//!   rank       u32
//!   dims       rank × u32
//!   data       prod(dims) × f32 (IEEE-754 binary32 LE), row-major
//! ```
//!
//! Parameters live in memory as `f64` and are rounded to `f32` on write, so a
//! loaded model equals the saved one only up to that rounding; saving a
//! loaded model reproduces the file byte for byte.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{ArrayD, IxDyn};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"WELDCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl NamedTensor {
    pub fn from_array(name: impl Into<String>, value: &ArrayD<f64>) -> Self {
        NamedTensor {
            name: name.into(),
            shape: value.shape().to_vec(),
            data: value.iter().map(|&v| v as f32).collect(),
        }
    }

    pub fn to_array(&self) -> Result<ArrayD<f64>> {
        ArrayD::from_shape_vec(
            IxDyn(&self.shape),
            self.data.iter().map(|&v| v as f64).collect(),
        )
        .map_err(|e| format_err(format!("tensor `{}`: {e}", self.name)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub arch: String,
    pub seed: u64,
    pub tensors: Vec<NamedTensor>,
}

fn format_err(detail: impl Into<String>) -> Error {
    Error::Format {
        format: "checkpoint",
        detail: detail.into(),
    }
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)
        .map_err(|e| format_err(e.to_string()))?;
    Ok(u32::from_le_bytes(b))
}

/// Reads exactly `len` bytes without trusting `len` for the allocation.
fn read_bytes(r: &mut impl Read, len: u64, what: &str) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    r.take(len)
        .read_to_end(&mut buf)
        .map_err(|e| format_err(format!("{what}: {e}")))?;
    if buf.len() as u64 != len {
        return Err(format_err(format!("{what}: truncated")));
    }
    Ok(buf)
}

fn read_string(r: &mut impl Read, what: &str) -> Result<String> {
    let len = read_u32(r)?;
    let buf = read_bytes(r, len.into(), what)?;
    String::from_utf8(buf).map_err(|_| format_err(format!("{what} is not UTF-8")))
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.arch.len() as u32).to_le_bytes());
        out.extend_from_slice(self.arch.as_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for t in &self.tensors {
            out.extend_from_slice(&(t.name.len() as u32).to_le_bytes());
            out.extend_from_slice(t.name.as_bytes());
            out.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
            for &d in &t.shape {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for &v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_reader(mut r: impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)
            .map_err(|e| format_err(e.to_string()))?;
        if &magic != MAGIC {
            return Err(format_err("bad magic"));
        }
        let version = read_u32(&mut r)?;
        if version != FORMAT_VERSION {
            return Err(format_err(format!("unsupported version {version}")));
        }
        let arch = read_string(&mut r, "architecture")?;
        let mut seed = [0u8; 8];
        r.read_exact(&mut seed)
            .map_err(|e| format_err(e.to_string()))?;
        let seed = u64::from_le_bytes(seed);
        let count = read_u32(&mut r)? as usize;
        let mut tensors = Vec::new();
        for _ in 0..count {
            let name = read_string(&mut r, "tensor name")?;
            let rank = read_u32(&mut r)? as usize;
            let shape = (0..rank)
                .map(|_| read_u32(&mut r).map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let n_bytes = shape
                .iter()
                .try_fold(4u64, |acc, &d| acc.checked_mul(d as u64))
                .ok_or_else(|| format_err(format!("tensor `{name}`: shape {shape:?} overflows")))?;
            let raw = read_bytes(&mut r, n_bytes, &format!("tensor `{name}`"))?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            tensors.push(NamedTensor { name, shape, data });
        }
        let mut trailing = [0u8; 1];
        if r.read(&mut trailing)
            .map_err(|e| format_err(e.to_string()))?
            != 0
        {
            return Err(format_err("trailing bytes after last tensor"));
        }
        Ok(Checkpoint {
            arch,
            seed,
            tensors,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_bytes())
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(bytes.as_slice())
    }

    /// Pops tensors in declaration order, checking names and shapes.
    pub fn take_in_order(&self) -> TensorCursor<'_> {
        TensorCursor {
            tensors: &self.tensors,
            next: 0,
        }
    }
}

pub struct TensorCursor<'a> {
    tensors: &'a [NamedTensor],
    next: usize,
}

impl TensorCursor<'_> {
    pub fn next(&mut self, name: &str, shape: &[usize]) -> Result<ArrayD<f64>> {
        let t = self
            .tensors
            .get(self.next)
            .ok_or_else(|| format_err(format!("missing tensor `{name}`")))?;
        if t.name != name || t.shape != shape {
            return Err(format_err(format!(
                "expected `{name}` {shape:?}, found `{}` {:?}",
                t.name, t.shape
            )));
        }
        self.next += 1;
        t.to_array()
    }

    pub fn finish(self) -> Result<()> {
        if self.next != self.tensors.len() {
            return Err(format_err(format!(
                "{} unexpected extra tensors",
                self.tensors.len() - self.next
            )));
        }
        Ok(())
    }
}
