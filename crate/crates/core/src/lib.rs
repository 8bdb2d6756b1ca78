pub mod audio;
pub mod audio_ae;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod nn;
pub mod pipeline;
pub mod rng;
pub mod scoring;
pub mod video;

pub use error::{Error, ErrorKind, Result};
