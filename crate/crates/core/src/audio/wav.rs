//! RIFF/WAV ingestion. Integer PCM (8 to 32 bit) and 32-bit float are
//! accepted; samples are scaled to `[-1, 1)`. FLAC sources must be decoded
//! to WAV beforehand.

use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use crate::error::{Error, Result};

/// Mono PCM signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Pcm {
    pub sample_rate: u32,
    pub samples: Vec<f64>,
}

impl Pcm {
    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// Reads one channel of a WAV file. Multichannel files need an explicit
/// `channel`; mono files accept `None` or `Some(0)`.
pub fn read_wav(path: &Path, channel: Option<usize>) -> Result<Pcm> {
    let reader = WavReader::open(path).map_err(|e| wav_err(path, e))?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    let channel = match (channels, channel) {
        (1, None) => 0,
        (_, Some(c)) if c < channels => c,
        (_, Some(c)) => {
            return Err(Error::data(format!(
                "{}: channel {c} requested but file has {channels}",
                path.display()
            )))
        }
        (_, None) => {
            return Err(Error::data(format!(
                "{}: {channels}-channel audio, select one channel",
                path.display()
            )))
        }
    };
    let interleaved: Vec<f64> = match spec.sample_format {
        SampleFormat::Float => reader
            .into_samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| wav_err(path, e))?,
        SampleFormat::Int => {
            let scale = 1.0 / (1u64 << (spec.bits_per_sample - 1)) as f64;
            reader
                .into_samples::<i32>()
                .map(|s| s.map(|v| v as f64 * scale))
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| wav_err(path, e))?
        }
    };
    let samples = interleaved
        .into_iter()
        .skip(channel)
        .step_by(channels)
        .collect();
    Ok(Pcm {
        sample_rate: spec.sample_rate,
        samples,
    })
}

/// Writes mono 16-bit PCM, clamping to the representable range.
pub fn write_wav_i16(path: &Path, sample_rate: u32, samples: &[f64]) -> Result<()> {
    let spec = WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let mut writer = WavWriter::create(path, spec).map_err(|e| wav_err(path, e))?;
    for &s in samples {
        let q = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        writer.write_sample(q).map_err(|e| wav_err(path, e))?;
    }
    writer.finalize().map_err(|e| wav_err(path, e))
}

fn wav_err(path: &Path, e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::Format {
            format: "wav",
            detail: format!("{}: {other}", path.display()),
        },
    }
}
