//! End-to-end workflows shared by the command line and the test suites:
//! experiment configuration, training on the good-weld training split,
//! sample scoring, standardization, fusion and the audio grid sweep.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::audio::{read_wav, stft_magnitude, MagnitudeScale, Spectrogram, StftConfig};
use crate::audio_ae::{
    audio_frame_scores, train_audio_ae, AudioAeConfig, AudioAutoencoder, AudioTrainRecipe,
    TrainReport,
};
use crate::dataset::{Manifest, NormalCorpus, WeldCategory};
use crate::error::{Error, Result};
use crate::eval::{auc, Partition, Split};
use crate::nn::checkpoint::Checkpoint;
use crate::rng;
use crate::scoring::{
    fuse, grid_search_weight, Aggregation, Modality, ScoreRecord, ScoreSeries, Standardizer,
};
use crate::video::{
    train_video_ae, video_frame_scores, EmbeddingSequence, Validator, VideoAeConfig,
    VideoAutoencoder, VideoTrainRecipe, VideoTrainReport,
};

/// Audio model size; the input width comes from the STFT.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AudioModelConfig {
    pub width: usize,
    pub bottleneck: usize,
}

impl Default for AudioModelConfig {
    fn default() -> Self {
        let d = AudioAeConfig::default();
        AudioModelConfig {
            width: d.width,
            bottleneck: d.bottleneck,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AudioSection {
    pub stft: StftConfig,
    pub model: AudioModelConfig,
    pub train: AudioTrainRecipe,
    pub aggregation: Aggregation,
}

impl Default for AudioSection {
    fn default() -> Self {
        AudioSection {
            stft: StftConfig::default(),
            model: AudioModelConfig::default(),
            train: AudioTrainRecipe::default(),
            aggregation: Aggregation::Mean,
        }
    }
}

impl AudioSection {
    pub fn ae_config(&self) -> AudioAeConfig {
        AudioAeConfig::new(self.stft.n_bins(), self.model.width, self.model.bottleneck)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VideoSection {
    pub model: VideoAeConfig,
    pub train: VideoTrainRecipe,
    pub aggregation: Aggregation,
}

impl Default for VideoSection {
    fn default() -> Self {
        VideoSection {
            model: VideoAeConfig::default(),
            train: VideoTrainRecipe::default(),
            aggregation: Aggregation::Mean,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionSection {
    /// Grid resolution: weights `i / steps`.
    pub steps: usize,
}

impl Default for FusionSection {
    fn default() -> Self {
        FusionSection { steps: 100 }
    }
}

/// One experiment, as read from a TOML file. Every key is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Root seed: the split, weight init, crops, dropout and shuffles all
    /// derive from it.
    pub seed: u64,
    pub audio: AudioSection,
    pub video: VideoSection,
    pub fusion: FusionSection,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("experiment config always serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.audio.stft.validate()?;
        self.audio.ae_config().validate()?;
        self.audio.train.validate()?;
        self.audio.aggregation.validate()?;
        self.video.model.validate()?;
        self.video.train.validate()?;
        self.video.aggregation.validate()?;
        if self.fusion.steps == 0 {
            return Err(Error::config("fusion.steps must be positive"));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form; identifies the configuration in
    /// run manifests.
    pub fn hash(&self) -> String {
        sha256_hex(
            serde_json::to_string(self)
                .expect("config serializes")
                .as_bytes(),
        )
    }

    pub fn audio_recipe(&self) -> AudioTrainRecipe {
        AudioTrainRecipe {
            seed: rng::derive_seed(self.seed, "audio-train"),
            ..self.audio.train
        }
    }

    pub fn video_recipe(&self) -> VideoTrainRecipe {
        VideoTrainRecipe {
            seed: rng::derive_seed(self.seed, "video-train"),
            ..self.video.train.clone()
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// A checkpoint of either autoencoder.
#[allow(clippy::large_enum_variant)]
pub enum TrainedModel {
    Audio(AudioAutoencoder, StftConfig),
    Video(VideoAutoencoder),
}

impl TrainedModel {
    /// Loads a checkpoint and dispatches on its recorded architecture.
    pub fn load(path: &Path) -> Result<(Self, u64)> {
        let ck = Checkpoint::load(path)?;
        let arch: serde_json::Value =
            serde_json::from_str(&ck.arch).map_err(|e| Error::Format {
                format: "checkpoint",
                detail: format!("architecture record: {e}"),
            })?;
        let model = match arch.get("model").and_then(|m| m.as_str()) {
            Some("audio_conv_ae") => {
                let (m, stft) = AudioAutoencoder::from_checkpoint(&ck)?;
                TrainedModel::Audio(m, stft)
            }
            Some("video_mlp_ae") => TrainedModel::Video(VideoAutoencoder::from_checkpoint(&ck)?),
            other => {
                return Err(Error::Format {
                    format: "checkpoint",
                    detail: format!("unknown architecture {other:?}"),
                })
            }
        };
        Ok((model, ck.seed))
    }

    pub fn modality(&self) -> Modality {
        match self {
            TrainedModel::Audio(..) => Modality::Audio,
            TrainedModel::Video(_) => Modality::Video,
        }
    }
}

/// Category and id of every sample, in manifest order, plus its split.
#[derive(Debug, Clone)]
pub struct Labels {
    pub ids: Vec<String>,
    pub categories: Vec<WeldCategory>,
    pub partition: Partition,
}

impl Labels {
    pub fn new(ids: Vec<String>, categories: Vec<WeldCategory>, seed: u64) -> Result<Self> {
        if ids.len() != categories.len() {
            return Err(Error::shape(
                "labels",
                format!("{} ids vs {} categories", ids.len(), categories.len()),
            ));
        }
        let partition = crate::eval::apply_split(&categories, seed)?;
        Ok(Labels {
            ids,
            categories,
            partition,
        })
    }

    pub fn from_manifest(manifest: &Manifest, seed: u64) -> Result<Self> {
        Self::new(
            manifest
                .entries
                .iter()
                .map(|e| e.sample_id.clone())
                .collect(),
            manifest.categories(),
            seed,
        )
    }

    pub fn indices(&self, split: Option<Split>) -> Vec<usize> {
        match split {
            Some(s) => self.partition.get(s).to_vec(),
            None => (0..self.ids.len()).collect(),
        }
    }

    fn normal_corpus<T: Clone>(&self, items: &[T]) -> Result<NormalCorpus<T>> {
        NormalCorpus::new(
            self.partition
                .train
                .iter()
                .map(|&i| (self.ids[i].clone(), self.categories[i], items[i].clone())),
        )
    }
}

fn map_indexed<T, F>(n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Reads every manifest WAV; all must share the configured sample rate.
pub fn load_audio(manifest: &Manifest, sample_rate: u32) -> Result<Vec<Vec<f64>>> {
    map_indexed(manifest.len(), |i| {
        let path = manifest.audio_path(&manifest.entries[i]);
        let pcm = read_wav(&path, None)?;
        if pcm.sample_rate != sample_rate {
            return Err(Error::config(format!(
                "{} is sampled at {} Hz but the experiment expects {sample_rate} Hz",
                path.display(),
                pcm.sample_rate
            )));
        }
        Ok(pcm.samples)
    })
}

pub fn load_embeddings(manifest: &Manifest) -> Result<Vec<EmbeddingSequence>> {
    map_indexed(manifest.len(), |i| {
        EmbeddingSequence::load(&manifest.video_path(&manifest.entries[i]))
    })
}

pub fn spectrograms(signals: &[Vec<f64>], stft: &StftConfig) -> Result<Vec<Spectrogram>> {
    map_indexed(signals.len(), |i| stft_magnitude(&signals[i], stft))
}

pub fn train_audio(
    cfg: &ExperimentConfig,
    labels: &Labels,
    specs: &[Spectrogram],
) -> Result<(AudioAutoencoder, TrainReport)> {
    let corpus = labels.normal_corpus(specs)?;
    let mut init = rng::derived(cfg.seed, "audio-init");
    let mut model = AudioAutoencoder::new(cfg.audio.ae_config(), &mut init)?;
    let report = train_audio_ae(&mut model, &corpus, &cfg.audio_recipe())?;
    Ok((model, report))
}

/// Per-frame audio scores of the selected samples.
pub fn audio_series(
    model: &AudioAutoencoder,
    labels: &Labels,
    specs: &[Spectrogram],
    idx: &[usize],
) -> Result<Vec<ScoreSeries>> {
    let frame_model = Arc::new(model.frame_model());
    map_indexed(idx.len(), |k| {
        let i = idx[k];
        let scores = audio_frame_scores(&frame_model, &specs[i])?;
        ScoreSeries::new(
            labels.ids[i].clone(),
            Modality::Audio,
            scores,
            specs[i].config.frame_period(),
        )
    })
}

/// Validation AUC of aggregated raw video scores, used for early stopping.
fn video_validation_auc(
    model: &mut VideoAutoencoder,
    labels: &Labels,
    seqs: &[EmbeddingSequence],
    aggregation: Aggregation,
) -> Result<f64> {
    let idx = labels.indices(Some(Split::Val));
    let series = video_series(model, labels, seqs, &idx)?;
    let scores = series
        .iter()
        .map(|s| s.aggregate(aggregation))
        .collect::<Result<Vec<_>>>()?;
    let truth: Vec<bool> = idx
        .iter()
        .map(|&i| !labels.categories[i].is_good())
        .collect();
    auc(&scores, &truth)
}

/// Trains the video model; with `eval_every > 0` the weights with the best
/// validation AUC are kept.
pub fn train_video(
    cfg: &ExperimentConfig,
    labels: &Labels,
    seqs: &[EmbeddingSequence],
) -> Result<(VideoAutoencoder, VideoTrainReport)> {
    let corpus = labels.normal_corpus(seqs)?;
    let mut init = rng::derived(cfg.seed, "video-init");
    let mut model = VideoAutoencoder::new(cfg.video.model.clone(), &mut init)?;
    let recipe = cfg.video_recipe();
    let aggregation = cfg.video.aggregation;
    let mut cb = |m: &mut VideoAutoencoder| video_validation_auc(m, labels, seqs, aggregation);
    let validate: Option<Validator<'_>> = if recipe.eval_every > 0 {
        Some(&mut cb)
    } else {
        None
    };
    let report = train_video_ae(&mut model, &corpus, &recipe, validate)?;
    Ok((model, report))
}

pub fn video_series(
    model: &mut VideoAutoencoder,
    labels: &Labels,
    seqs: &[EmbeddingSequence],
    idx: &[usize],
) -> Result<Vec<ScoreSeries>> {
    idx.iter()
        .map(|&i| {
            let scores = video_frame_scores(model, &seqs[i])?;
            ScoreSeries::new(
                labels.ids[i].clone(),
                Modality::Video,
                scores,
                seqs[i].frame_period(),
            )
        })
        .collect()
}

/// Aggregates every sample, fits the standardizer on the training split and
/// returns records for the samples in `keep` (all samples when `None`).
pub fn standardized_records(
    series: &[ScoreSeries],
    labels: &Labels,
    aggregation: Aggregation,
    keep: Option<Split>,
) -> Result<(Standardizer, Vec<ScoreRecord>)> {
    if series.len() != labels.ids.len() {
        return Err(Error::shape(
            "score series",
            format!("{} series for {} samples", series.len(), labels.ids.len()),
        ));
    }
    let raw = series
        .iter()
        .map(|s| s.aggregate(aggregation))
        .collect::<Result<Vec<f64>>>()?;
    let train: Vec<f64> = labels.partition.train.iter().map(|&i| raw[i]).collect();
    let standardizer = Standardizer::fit(&train)?;
    let records = labels
        .indices(keep)
        .into_iter()
        .map(|i| {
            ScoreRecord::new(
                labels.ids[i].clone(),
                series[i].modality,
                labels.categories[i],
                raw[i],
                standardizer.apply(raw[i]),
            )
        })
        .collect();
    Ok((standardizer, records))
}

/// Fusion result as written by `fuse`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionReport {
    pub w_audio: f64,
    pub w_video: f64,
    /// `(w_audio, validation AUC)` over the grid.
    pub trace: Vec<(f64, f64)>,
    pub val_auc: f64,
    pub val_auc_audio: f64,
    pub val_auc_video: f64,
    pub test_auc: f64,
    pub test_auc_audio: f64,
    pub test_auc_video: f64,
    pub n_val: usize,
    pub n_test: usize,
}

/// Audio and video z-scores of the same samples, aligned by id.
pub struct PairedScores {
    pub ids: Vec<String>,
    pub categories: Vec<WeldCategory>,
    pub z_audio: Vec<f64>,
    pub z_video: Vec<f64>,
}

impl PairedScores {
    /// Pairs the audio and video records of every sample; sample order is
    /// that of the first occurrence.
    pub fn from_records(records: &[ScoreRecord]) -> Result<Self> {
        let mut order: Vec<&str> = Vec::new();
        let mut audio: HashMap<&str, &ScoreRecord> = HashMap::new();
        let mut video: HashMap<&str, &ScoreRecord> = HashMap::new();
        for r in records {
            let slot = match r.modality {
                Modality::Audio => &mut audio,
                Modality::Video => &mut video,
                Modality::Fused => continue,
            };
            if slot.insert(&r.sample_id, r).is_some() {
                return Err(Error::DuplicateId(format!(
                    "{} ({})",
                    r.sample_id, r.modality
                )));
            }
            if !order.contains(&r.sample_id.as_str()) {
                order.push(&r.sample_id);
            }
        }
        let mut out = PairedScores {
            ids: Vec::new(),
            categories: Vec::new(),
            z_audio: Vec::new(),
            z_video: Vec::new(),
        };
        for id in order {
            let (Some(a), Some(v)) = (audio.get(id), video.get(id)) else {
                return Err(Error::data(format!(
                    "sample `{id}` needs both an audio and a video score"
                )));
            };
            if a.category != v.category {
                return Err(Error::data(format!(
                    "sample `{id}` has conflicting categories"
                )));
            }
            out.ids.push(id.to_string());
            out.categories.push(a.category);
            out.z_audio.push(a.z_score);
            out.z_video.push(v.z_score);
        }
        Ok(out)
    }

    pub fn labels(&self) -> Vec<bool> {
        self.categories.iter().map(|c| !c.is_good()).collect()
    }

    pub fn fused(&self, w_audio: f64) -> Result<Vec<f64>> {
        self.z_audio
            .iter()
            .zip(&self.z_video)
            .map(|(&a, &v)| fuse(a, v, w_audio))
            .collect()
    }

    pub fn fused_records(&self, w_audio: f64) -> Result<Vec<ScoreRecord>> {
        let fused = self.fused(w_audio)?;
        Ok(self
            .ids
            .iter()
            .zip(&self.categories)
            .zip(fused)
            .map(|((id, &c), f)| ScoreRecord::new(id.clone(), Modality::Fused, c, f, f))
            .collect())
    }
}

/// Picks the weight on validation and applies it to test.
pub fn fuse_splits(val: &PairedScores, test: &PairedScores, steps: usize) -> Result<FusionReport> {
    let val_labels = val.labels();
    let test_labels = test.labels();
    let search = grid_search_weight(&val.z_audio, &val.z_video, &val_labels, steps)?;
    Ok(FusionReport {
        w_audio: search.w_audio,
        w_video: search.w_video,
        val_auc: search.auc,
        val_auc_audio: auc(&val.z_audio, &val_labels)?,
        val_auc_video: auc(&val.z_video, &val_labels)?,
        test_auc: auc(&test.fused(search.w_audio)?, &test_labels)?,
        test_auc_audio: auc(&test.z_audio, &test_labels)?,
        test_auc_video: auc(&test.z_video, &test_labels)?,
        n_val: val.ids.len(),
        n_test: test.ids.len(),
        trace: search.trace,
    })
}

/// Trains both autoencoders on in-memory samples, standardizes each modality
/// on the training split and fuses on validation, reporting test AUCs.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    labels: &Labels,
    signals: &[Vec<f64>],
    seqs: &[EmbeddingSequence],
) -> Result<FusionReport> {
    cfg.validate()?;
    let all = labels.indices(None);
    let specs = spectrograms(signals, &cfg.audio.stft)?;
    let (audio_model, _) = train_audio(cfg, labels, &specs)?;
    let a_series = audio_series(&audio_model, labels, &specs, &all)?;
    let (_, a_records) = standardized_records(&a_series, labels, cfg.audio.aggregation, None)?;

    let (mut video_model, _) = train_video(cfg, labels, seqs)?;
    let v_series = video_series(&mut video_model, labels, seqs, &all)?;
    let (_, v_records) = standardized_records(&v_series, labels, cfg.video.aggregation, None)?;

    let pick = |split: Split| {
        let recs: Vec<ScoreRecord> = labels
            .partition
            .get(split)
            .iter()
            .flat_map(|&i| [a_records[i].clone(), v_records[i].clone()])
            .collect();
        PairedScores::from_records(&recs)
    };
    fuse_splits(&pick(Split::Val)?, &pick(Split::Test)?, cfg.fusion.steps)
}

/// The reference sweep: four FFT windows (hop at half the window) by four
/// bottleneck widths.
pub const GRID_FFT_WINDOWS: [usize; 4] = [4096, 16384, 32768, 65536];
pub const GRID_BOTTLENECKS: [usize; 4] = [16, 32, 48, 64];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridTrial {
    pub fft_window: usize,
    pub hop_length: usize,
    pub bottleneck: usize,
    pub latency_ms: f64,
    pub final_loss: f64,
    pub val_auc: f64,
    pub test_auc: f64,
    pub checkpoint_sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridReport {
    pub seed: u64,
    pub config_sha256: String,
    pub aggregation: Aggregation,
    /// Sorted by `(fft_window, bottleneck)`.
    pub trials: Vec<GridTrial>,
}

impl GridReport {
    /// Text table with one row per trial.
    pub fn render_text(&self) -> String {
        let mut out = format!(
            "{:>10}  {:>10}  {:>11}  {:>9}  {:>7}  {:>8}\n",
            "fft_window", "bottleneck", "latency_ms", "loss", "val_auc", "test_auc"
        );
        for t in &self.trials {
            out.push_str(&format!(
                "{:>10}  {:>10}  {:>11.2}  {:>9.3e}  {:>7.4}  {:>8.4}\n",
                t.fft_window, t.bottleneck, t.latency_ms, t.final_loss, t.val_auc, t.test_auc
            ));
        }
        out
    }
}

/// One finished grid trial with its model.
pub type GridOutcome = (GridTrial, AudioAutoencoder, StftConfig);

/// Trains and evaluates one audio model per `(fft, bottleneck)` pair. Trials
/// run in parallel; each is deterministic on its own, and the report is
/// sorted, so the output does not depend on scheduling.
pub fn run_audio_grid(
    cfg: &ExperimentConfig,
    labels: &Labels,
    signals: &[Vec<f64>],
    ffts: &[usize],
    bottlenecks: &[usize],
) -> Result<(GridReport, Vec<GridOutcome>)> {
    let pairs: Vec<(usize, usize)> = ffts
        .iter()
        .flat_map(|&f| bottlenecks.iter().map(move |&b| (f, b)))
        .collect();
    let run = |k: usize| -> Result<(GridTrial, AudioAutoencoder, StftConfig)> {
        let (fft, bottleneck) = pairs[k];
        let mut trial_cfg = cfg.clone();
        trial_cfg.audio.stft = StftConfig {
            fft_window: fft,
            hop_length: fft / 2,
            ..cfg.audio.stft
        };
        trial_cfg.audio.model.bottleneck = bottleneck;
        trial_cfg.validate()?;
        let stft = trial_cfg.audio.stft;
        let specs = signals
            .iter()
            .map(|s| stft_magnitude(s, &stft))
            .collect::<Result<Vec<_>>>()?;
        let (model, report) = train_audio(&trial_cfg, labels, &specs)?;
        let all: Vec<usize> = (0..labels.ids.len()).collect();
        let series = audio_series(&model, labels, &specs, &all)?;
        let (_, records) = standardized_records(&series, labels, cfg.audio.aggregation, None)?;
        let split_auc = |split: Split| -> Result<f64> {
            let idx = labels.partition.get(split);
            let s: Vec<f64> = idx.iter().map(|&i| records[i].z_score).collect();
            let l: Vec<bool> = idx.iter().map(|&i| records[i].is_defect()).collect();
            auc(&s, &l)
        };
        let ck = model.to_checkpoint(&stft, cfg.seed);
        let trial = GridTrial {
            fft_window: fft,
            hop_length: stft.hop_length,
            bottleneck,
            latency_ms: crate::audio::model_latency_ms(stft.hop_length, stft.sample_rate),
            final_loss: report.epoch_loss.last().copied().unwrap_or(f64::NAN),
            val_auc: split_auc(Split::Val)?,
            test_auc: split_auc(Split::Test)?,
            checkpoint_sha256: sha256_hex(&ck.to_bytes()),
        };
        log::info!(
            "grid trial fft {fft} bottleneck {bottleneck}: val auc {:.4}, test auc {:.4}",
            trial.val_auc,
            trial.test_auc
        );
        Ok((trial, model, stft))
    };
    let mut results = map_indexed(pairs.len(), run)?;
    results.sort_by_key(|(t, _, _)| (t.fft_window, t.bottleneck));
    let report = GridReport {
        seed: cfg.seed,
        config_sha256: cfg.hash(),
        aggregation: cfg.audio.aggregation,
        trials: results.iter().map(|(t, _, _)| t.clone()).collect(),
    };
    Ok((report, results))
}

/// A desk-scale configuration for quick experiments on synthetic data.
pub fn desk_scale_config(seed: u64, sample_rate: u32) -> ExperimentConfig {
    let mut cfg = ExperimentConfig {
        seed,
        ..ExperimentConfig::default()
    };
    cfg.audio.stft = StftConfig {
        sample_rate,
        fft_window: 512,
        hop_length: 256,
        scale: MagnitudeScale::Log,
        ..StftConfig::default()
    };
    cfg.audio.model = AudioModelConfig {
        width: 64,
        bottleneck: 16,
    };
    cfg.audio.train.epochs = 10;
    cfg.audio.train.peak_lr = 3e-3;
    cfg.video.train.epochs = 200;
    cfg.video.train.frames_per_sample = Some(4);
    cfg.video.train.eval_every = 0;
    cfg
}
