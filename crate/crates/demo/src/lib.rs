//! Browser bindings for three interactive demos: a synthetic weld recording
//! and its spectrogram, an ROC/DET explorer with a movable threshold, and the
//! late-fusion weight sweep.
//!
//! Each export is a thin wrapper around a plain Rust function so the logic
//! is testable natively.

use serde_json::json;
use wasm_bindgen::prelude::*;
use weld_anomaly::audio::{stft_magnitude, MagnitudeScale, StftConfig};
use weld_anomaly::dataset::{Generator, SynthSpec, WeldCategory};
use weld_anomaly::eval::{auc, det_curve, eer, roc_curve};
use weld_anomaly::scoring::grid_search_weight;

fn js(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

/// Mono synthetic weld audio in `[-1, 1]`.
pub fn synth_audio_impl(
    seed: u64,
    category: &str,
    sample_rate: u32,
    duration_s: f64,
    intensity: f64,
) -> Result<Vec<f32>, String> {
    let category: WeldCategory = category
        .parse()
        .map_err(|e: weld_anomaly::Error| e.to_string())?;
    let spec = SynthSpec {
        seed,
        n_good: 0,
        defects: Default::default(),
        duration_s,
        sample_rate,
        intensity,
        // only the audio is shown; keep the embedding side cheap
        embedding_dim: 8,
        ..SynthSpec::default()
    };
    let generator = Generator::new(spec).map_err(|e| e.to_string())?;
    let sample = generator
        .sample(&format!("demo_{}", category.id()), category)
        .map_err(|e| e.to_string())?;
    Ok(sample.audio.iter().map(|&x| x as f32).collect())
}

#[wasm_bindgen]
pub fn synth_audio(
    seed: u64,
    category: &str,
    sample_rate: u32,
    duration_s: f64,
    intensity: f64,
) -> Result<Vec<f32>, JsError> {
    synth_audio_impl(seed, category, sample_rate, duration_s, intensity).map_err(js)
}

/// Log-magnitude spectrogram, frame-major.
#[wasm_bindgen]
pub struct SpectrogramView {
    n_frames: usize,
    n_bins: usize,
    data: Vec<f32>,
}

#[wasm_bindgen]
impl SpectrogramView {
    #[wasm_bindgen(getter)]
    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    #[wasm_bindgen(getter)]
    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn data(&self) -> Vec<f32> {
        self.data.clone()
    }
}

pub fn spectrogram_impl(
    samples: &[f32],
    sample_rate: u32,
    fft_window: usize,
    hop_length: usize,
) -> Result<SpectrogramView, String> {
    let cfg = StftConfig {
        sample_rate,
        fft_window,
        hop_length,
        scale: MagnitudeScale::Log,
        ..StftConfig::default()
    };
    let signal: Vec<f64> = samples.iter().map(|&x| x as f64).collect();
    let spec = stft_magnitude(&signal, &cfg).map_err(|e| e.to_string())?;
    Ok(SpectrogramView {
        n_frames: spec.n_frames(),
        n_bins: spec.n_bins(),
        data: spec.frames().iter().map(|&x| x as f32).collect(),
    })
}

#[wasm_bindgen]
pub fn spectrogram(
    samples: &[f32],
    sample_rate: u32,
    fft_window: usize,
    hop_length: usize,
) -> Result<SpectrogramView, JsError> {
    spectrogram_impl(samples, sample_rate, fft_window, hop_length).map_err(js)
}

fn bool_labels(labels: &[u8]) -> Vec<bool> {
    labels.iter().map(|&l| l != 0).collect()
}

/// ROC and DET curves, AUC, EER and the error rates at `threshold`, as JSON.
pub fn roc_report_impl(scores: &[f64], labels: &[u8], threshold: f64) -> Result<String, String> {
    let labels = bool_labels(labels);
    let err = |e: weld_anomaly::Error| e.to_string();
    let roc = roc_curve(scores, &labels).map_err(err)?;
    let det = det_curve(scores, &labels).map_err(err)?;
    let e = eer(scores, &labels).map_err(err)?;
    let (mut fp, mut tp) = (0usize, 0usize);
    for (&s, &l) in scores.iter().zip(&labels) {
        if s >= threshold {
            if l {
                tp += 1;
            } else {
                fp += 1;
            }
        }
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    Ok(json!({
        "auc": auc(scores, &labels).map_err(err)?,
        "eer": e.rate,
        "roc": roc.points.iter().map(|p| [p.fpr, p.tpr]).collect::<Vec<_>>(),
        "det": det.iter().map(|p| [p.fpr, p.fnr]).collect::<Vec<_>>(),
        "threshold": {
            "value": threshold,
            "fpr": fp as f64 / neg as f64,
            "fnr": 1.0 - tp as f64 / pos as f64,
        },
    })
    .to_string())
}

#[wasm_bindgen]
pub fn roc_report(scores: &[f64], labels: &[u8], threshold: f64) -> Result<String, JsError> {
    roc_report_impl(scores, labels, threshold).map_err(js)
}

/// Validation AUC for every fusion weight and the chosen weight, as JSON.
pub fn fusion_sweep_impl(
    z_audio: &[f64],
    z_video: &[f64],
    labels: &[u8],
    steps: usize,
) -> Result<String, String> {
    let labels = bool_labels(labels);
    let s = grid_search_weight(z_audio, z_video, &labels, steps).map_err(|e| e.to_string())?;
    Ok(json!({ "w_audio": s.w_audio, "auc": s.auc, "trace": s.trace }).to_string())
}

#[wasm_bindgen]
pub fn fusion_sweep(
    z_audio: &[f64],
    z_video: &[f64],
    labels: &[u8],
    steps: usize,
) -> Result<String, JsError> {
    fusion_sweep_impl(z_audio, z_video, labels, steps).map_err(js)
}
