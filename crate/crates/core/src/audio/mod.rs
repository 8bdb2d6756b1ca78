//! Audio front end: PCM ingestion, magnitude STFT, the streaming ring buffer
//! and the spectrogram cache format.

pub mod cache;
mod stft;
mod stream;
pub mod wav;

pub use stft::{
    stft_magnitude, FrameAnalyzer, MagnitudeScale, Spectrogram, StftConfig, WindowKind, LOG_FLOOR,
    REFERENCE_FFT_WINDOWS,
};
pub use stream::{buffer_size, model_latency_ms, StreamingStft};
pub use wav::{read_wav, write_wav_i16, Pcm};
