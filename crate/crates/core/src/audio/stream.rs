use std::collections::VecDeque;

use super::stft::{FrameAnalyzer, StftConfig};
use crate::error::{Error, Result};

/// Samples the input buffer must hold so that the encoder sees the 11 frames
/// it needs to emit one bottleneck frame: `hop * (10 + fft / hop)`.
pub fn buffer_size(hop_length: usize, fft_window: usize) -> Result<usize> {
    if hop_length == 0 || fft_window == 0 || !fft_window.is_multiple_of(hop_length) {
        return Err(Error::config(format!(
            "fft window {fft_window} is not an integer multiple of hop length {hop_length}"
        )));
    }
    Ok(hop_length * (10 + fft_window / hop_length))
}

/// Model latency in milliseconds: one hop.
pub fn model_latency_ms(hop_length: usize, sample_rate: u32) -> f64 {
    1000.0 * hop_length as f64 / sample_rate as f64
}

/// Incremental STFT over a bounded sample ring.
///
/// Producers [`push`](Self::push) samples; consumers pull frames with
/// [`next_frame`](Self::next_frame). A frame is emitted every `hop` samples
/// once a full window is buffered, and its samples are released only when it
/// is pulled, so a stalled consumer eventually makes `push` fail with
/// [`Error::Overrun`] instead of silently dropping audio.
pub struct StreamingStft {
    analyzer: FrameAnalyzer,
    ring: VecDeque<f64>,
    capacity: usize,
    frames_emitted: usize,
    window: Vec<f64>,
}

impl StreamingStft {
    pub fn new(config: StftConfig, capacity: usize) -> Result<Self> {
        config.validate()?;
        let required = buffer_size(config.hop_length, config.fft_window)?;
        if capacity < required {
            return Err(Error::config(format!(
                "ring capacity {capacity} below the required buffer size {required}"
            )));
        }
        Ok(StreamingStft {
            analyzer: FrameAnalyzer::new(config)?,
            ring: VecDeque::with_capacity(capacity),
            capacity,
            frames_emitted: 0,
            window: vec![0.0; config.fft_window],
        })
    }

    /// Ring sized exactly to [`buffer_size`].
    pub fn with_minimum_buffer(config: StftConfig) -> Result<Self> {
        let cap = buffer_size(config.hop_length, config.fft_window)?;
        Self::new(config, cap)
    }

    pub fn config(&self) -> &StftConfig {
        self.analyzer.config()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn buffered(&self) -> usize {
        self.ring.len()
    }

    pub fn free_space(&self) -> usize {
        self.capacity - self.ring.len()
    }

    pub fn frames_emitted(&self) -> usize {
        self.frames_emitted
    }

    pub fn push(&mut self, samples: &[f64]) -> Result<()> {
        if samples.len() > self.free_space() {
            return Err(Error::Overrun {
                capacity: self.capacity,
                pending: self.ring.len(),
                incoming: samples.len(),
            });
        }
        self.ring.extend(samples.iter().copied());
        Ok(())
    }

    pub fn next_frame(&mut self) -> Result<Option<Vec<f64>>> {
        let fft = self.config().fft_window;
        let hop = self.config().hop_length;
        if self.ring.len() < fft {
            return Ok(None);
        }
        for (dst, &src) in self.window.iter_mut().zip(self.ring.iter()) {
            *dst = src;
        }
        let frame = self.analyzer.analyze(&self.window)?;
        self.ring.drain(..hop);
        self.frames_emitted += 1;
        Ok(Some(frame))
    }
}
