//! Spectrogram cache file.
//!
//! ```text
//! magic        8 bytes  "WELDSPEC"
//! version      u32      = 1
//! sample_rate  u32
//! fft_window   u32
//! hop_length   u32
//! window       u8       0 = hann, 1 = rectangular
//! scale        u8       0 = linear magnitude, 1 = log magnitude
//! n_bins       u32
//! n_frames     u32
//! data         n_frames × n_bins f32 LE, frame-contiguous
//! ```
//!
//! "Frame-contiguous" is the column-major layout of the `n_bins × n_frames`
//! matrix: all bins of frame 0, then all bins of frame 1, and so on.

use std::fs;
use std::path::Path;

use ndarray::Array2;

use super::stft::{MagnitudeScale, Spectrogram, StftConfig, WindowKind};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"WELDSPEC";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 * 4 + 2 + 4 * 2;

fn format_err(detail: impl Into<String>) -> Error {
    Error::Format {
        format: "spectrogram cache",
        detail: detail.into(),
    }
}

pub fn to_bytes(spec: &Spectrogram) -> Vec<u8> {
    let c = &spec.config;
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * spec.n_bins() * spec.n_frames());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&c.sample_rate.to_le_bytes());
    out.extend_from_slice(&(c.fft_window as u32).to_le_bytes());
    out.extend_from_slice(&(c.hop_length as u32).to_le_bytes());
    out.push(match c.window {
        WindowKind::Hann => 0,
        WindowKind::Rectangular => 1,
    });
    out.push(match c.scale {
        MagnitudeScale::Linear => 0,
        MagnitudeScale::Log => 1,
    });
    out.extend_from_slice(&(spec.n_bins() as u32).to_le_bytes());
    out.extend_from_slice(&(spec.n_frames() as u32).to_le_bytes());
    for &v in spec.frames().iter() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

pub fn from_bytes(bytes: &[u8]) -> Result<Spectrogram> {
    if bytes.len() < HEADER_LEN {
        return Err(format_err("truncated header"));
    }
    if &bytes[..8] != MAGIC {
        return Err(format_err("bad magic"));
    }
    let u32_at = |off: usize| u32::from_le_bytes(bytes[off..off + 4].try_into().expect("4 bytes"));
    let version = u32_at(8);
    if version != FORMAT_VERSION {
        return Err(format_err(format!("unsupported version {version}")));
    }
    let window = match bytes[24] {
        0 => WindowKind::Hann,
        1 => WindowKind::Rectangular,
        w => return Err(format_err(format!("unknown window id {w}"))),
    };
    let scale = match bytes[25] {
        0 => MagnitudeScale::Linear,
        1 => MagnitudeScale::Log,
        s => return Err(format_err(format!("unknown scale id {s}"))),
    };
    let config = StftConfig {
        sample_rate: u32_at(12),
        fft_window: u32_at(16) as usize,
        hop_length: u32_at(20) as usize,
        window,
        scale,
    };
    config.validate().map_err(|e| format_err(e.to_string()))?;
    let n_bins = u32_at(26) as usize;
    let n_frames = u32_at(30) as usize;
    if n_bins != config.n_bins() {
        return Err(format_err(format!(
            "{n_bins} bins inconsistent with fft window {}",
            config.fft_window
        )));
    }
    let body = &bytes[HEADER_LEN..];
    let expected = n_bins.checked_mul(n_frames).and_then(|n| n.checked_mul(4));
    if expected != Some(body.len()) {
        return Err(format_err(format!(
            "header claims {n_frames} frames of {n_bins} bins, found {} data bytes",
            body.len()
        )));
    }
    let data = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    let frames =
        Array2::from_shape_vec((n_frames, n_bins), data).map_err(|e| format_err(e.to_string()))?;
    Spectrogram::from_frames(config, frames)
}

pub fn save(path: &Path, spec: &Spectrogram) -> Result<()> {
    fs::write(path, to_bytes(spec)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<Spectrogram> {
    from_bytes(&fs::read(path).map_err(|e| Error::io(path, e))?)
}
