use serde::Serialize;

use crate::error::{Error, Result};

/// Frames in one backbone window.
pub const WINDOW_FRAMES: usize = 64;

/// The backbone window assigned to one frame: `[start, start + 64)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct WindowPlan {
    pub center: usize,
    pub start: usize,
}

impl WindowPlan {
    pub fn end(&self) -> usize {
        self.start + WINDOW_FRAMES
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlidingWindows {
    pub windows: Vec<WindowPlan>,
    /// Seconds of look-ahead a centered window needs: 32 frames at `fps`.
    pub latency_s: f64,
}

/// One window per frame, shifted frame by frame and centered on its frame
/// (`[c - 32, c + 32)`); windows that would cross either end of the video are
/// clamped inside it.
pub fn sliding_window_spec(n_frames: usize, fps: f64) -> Result<SlidingWindows> {
    if n_frames < WINDOW_FRAMES {
        return Err(Error::TooShort(format!(
            "video has {n_frames} frames, a window needs {WINDOW_FRAMES}"
        )));
    }
    if !(fps > 0.0 && fps.is_finite()) {
        return Err(Error::config(format!("fps must be positive, got {fps}")));
    }
    let half = WINDOW_FRAMES / 2;
    let windows = (0..n_frames)
        .map(|c| WindowPlan {
            center: c,
            start: c.saturating_sub(half).min(n_frames - WINDOW_FRAMES),
        })
        .collect();
    Ok(SlidingWindows {
        windows,
        latency_s: half as f64 / fps,
    })
}
