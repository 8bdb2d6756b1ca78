//! Video path: embedding files produced by the frozen backbone, the window
//! plan that maps frames to backbone windows, and the dense autoencoder
//! trained on those embeddings.

mod autoencoder;
pub mod embedding;
mod window;

pub use autoencoder::{
    train_video_ae, video_frame_scores, Validator, VideoAeConfig, VideoAutoencoder,
    VideoTrainRecipe, VideoTrainReport,
};
pub use embedding::{EmbeddingSequence, EMBEDDING_DIM};
pub use window::{sliding_window_spec, SlidingWindows, WindowPlan, WINDOW_FRAMES};
