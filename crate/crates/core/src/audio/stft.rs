use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::{Array2, ArrayView1, ArrayView2};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// FFT windows covered by the reference hyper-parameter grid.
pub const REFERENCE_FFT_WINDOWS: [usize; 4] = [4096, 16384, 32768, 65536];

/// Added before taking the natural log in [`MagnitudeScale::Log`].
pub const LOG_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowKind {
    Hann,
    Rectangular,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MagnitudeScale {
    /// `|X_k| / Σ w`, so a unit-amplitude on-bin sinusoid peaks at 0.5.
    Linear,
    /// `ln(linear + LOG_FLOOR)`.
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StftConfig {
    pub sample_rate: u32,
    pub fft_window: usize,
    pub hop_length: usize,
    pub window: WindowKind,
    pub scale: MagnitudeScale,
}

impl Default for StftConfig {
    fn default() -> Self {
        StftConfig {
            sample_rate: 192_000,
            fft_window: 16384,
            hop_length: 8192,
            window: WindowKind::Hann,
            scale: MagnitudeScale::Linear,
        }
    }
}

impl StftConfig {
    /// Hop fixed at half the window, as in the reference grid.
    pub fn half_overlap(sample_rate: u32, fft_window: usize) -> Self {
        StftConfig {
            sample_rate,
            fft_window,
            hop_length: fft_window / 2,
            ..StftConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sample_rate == 0 {
            return Err(Error::config("sample rate must be positive"));
        }
        if self.fft_window < 2 || !self.fft_window.is_multiple_of(2) {
            return Err(Error::config(format!(
                "fft window must be even and >= 2, got {}",
                self.fft_window
            )));
        }
        if self.hop_length == 0 || !self.fft_window.is_multiple_of(self.hop_length) {
            return Err(Error::config(format!(
                "fft window {} must be an integer multiple of the hop length {}",
                self.fft_window, self.hop_length
            )));
        }
        Ok(())
    }

    pub fn on_reference_grid(&self) -> bool {
        REFERENCE_FFT_WINDOWS.contains(&self.fft_window)
    }

    pub fn n_bins(&self) -> usize {
        self.fft_window / 2 + 1
    }

    /// `floor((N - fft) / hop) + 1` for `N >= fft`, else 0.
    pub fn frame_count(&self, n_samples: usize) -> usize {
        if n_samples < self.fft_window {
            0
        } else {
            (n_samples - self.fft_window) / self.hop_length + 1
        }
    }

    /// Seconds between consecutive frames.
    pub fn frame_period(&self) -> f64 {
        self.hop_length as f64 / self.sample_rate as f64
    }
}

/// Magnitude spectrogram, stored time-major: row `f` holds the `n_bins`
/// magnitudes of frame `f`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub config: StftConfig,
    frames: Array2<f64>,
}

impl Spectrogram {
    pub fn from_frames(config: StftConfig, frames: Array2<f64>) -> Result<Self> {
        if frames.ncols() != config.n_bins() {
            return Err(Error::shape(
                "spectrogram",
                format!(
                    "{} bins per frame, config implies {}",
                    frames.ncols(),
                    config.n_bins()
                ),
            ));
        }
        Ok(Spectrogram { config, frames })
    }

    pub fn n_bins(&self) -> usize {
        self.frames.ncols()
    }

    pub fn n_frames(&self) -> usize {
        self.frames.nrows()
    }

    pub fn frame(&self, index: usize) -> ArrayView1<'_, f64> {
        self.frames.row(index)
    }

    /// `(n_frames, n_bins)` view.
    pub fn frames(&self) -> ArrayView2<'_, f64> {
        self.frames.view()
    }

    /// `(n_bins, n_frames)` channels-by-time view, the autoencoder layout.
    pub fn channels_by_time(&self) -> ArrayView2<'_, f64> {
        self.frames.t()
    }
}

/// Windowed single-frame magnitude analysis. Offline and streaming paths both
/// go through [`FrameAnalyzer::analyze`], which keeps them bit-identical.
pub struct FrameAnalyzer {
    config: StftConfig,
    window: Vec<f64>,
    norm: f64,
    fft: Arc<dyn Fft<f64>>,
    buffer: Vec<Complex<f64>>,
    scratch: Vec<Complex<f64>>,
}

impl FrameAnalyzer {
    pub fn new(config: StftConfig) -> Result<Self> {
        config.validate()?;
        let n = config.fft_window;
        let window: Vec<f64> = match config.window {
            // periodic Hann
            WindowKind::Hann => (0..n)
                .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
                .collect(),
            WindowKind::Rectangular => vec![1.0; n],
        };
        let norm = 1.0 / window.iter().sum::<f64>();
        let fft = FftPlanner::new().plan_fft_forward(n);
        let scratch = vec![Complex::default(); fft.get_inplace_scratch_len()];
        Ok(FrameAnalyzer {
            config,
            window,
            norm,
            fft,
            buffer: vec![Complex::default(); n],
            scratch,
        })
    }

    pub fn config(&self) -> &StftConfig {
        &self.config
    }

    pub fn analyze(&mut self, samples: &[f64]) -> Result<Vec<f64>> {
        if samples.len() != self.config.fft_window {
            return Err(Error::shape(
                "stft frame",
                format!(
                    "expected {} samples, got {}",
                    self.config.fft_window,
                    samples.len()
                ),
            ));
        }
        for ((dst, &x), &w) in self.buffer.iter_mut().zip(samples).zip(&self.window) {
            *dst = Complex::new(x * w, 0.0);
        }
        self.fft
            .process_with_scratch(&mut self.buffer, &mut self.scratch);
        let norm = self.norm;
        let scale = self.config.scale;
        Ok(self.buffer[..self.config.n_bins()]
            .iter()
            .map(|c| {
                let m = c.norm() * norm;
                match scale {
                    MagnitudeScale::Linear => m,
                    MagnitudeScale::Log => (m + LOG_FLOOR).ln(),
                }
            })
            .collect())
    }
}

/// Frame `f` covers samples `[f * hop, f * hop + fft_window)`.
pub fn stft_magnitude(signal: &[f64], config: &StftConfig) -> Result<Spectrogram> {
    config.validate()?;
    if signal.len() < config.fft_window {
        return Err(Error::TooShort(format!(
            "signal of {} samples is shorter than one fft window ({})",
            signal.len(),
            config.fft_window
        )));
    }
    let mut analyzer = FrameAnalyzer::new(*config)?;
    let n_frames = config.frame_count(signal.len());
    let mut frames = Array2::zeros((n_frames, config.n_bins()));
    for (f, mut row) in frames.outer_iter_mut().enumerate() {
        let start = f * config.hop_length;
        let mags = analyzer.analyze(&signal[start..start + config.fft_window])?;
        row.assign(&ArrayView1::from(&mags));
    }
    Spectrogram::from_frames(*config, frames)
}
