//! Spectrogram autoencoder: a batch-normalized stack of five valid
//! convolutions followed by five transposed convolutions (kernel 3, stride 1),
//! trained on good welds and scored by per-frame reconstruction error.

use std::collections::VecDeque;
use std::sync::Arc;

use ndarray::{s, Array1, Array2, Array3, ArrayView1, ArrayView2, Axis, Ix3};
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::audio::{Spectrogram, StftConfig, StreamingStft};
use crate::dataset::NormalCorpus;
use crate::error::{Error, Result};
use crate::nn::checkpoint::{Checkpoint, NamedTensor};
use crate::nn::{
    mse, Adam, AdamConfig, BatchNorm1d, Conv1d, ConvTranspose1d, LayerSpec, LeakyRelu, Mode,
    OneCycleSchedule, Param, Prelu,
};
use crate::rng::{self, Rng};

const KERNEL: usize = 3;
const DEPTH: usize = 5;
/// Frames lost through the encoder (and regained by the decoder).
pub const FRAME_SHRINK: usize = DEPTH * (KERNEL - 1);
/// Shortest accepted input: the bottleneck must keep at least one frame.
pub const MIN_FRAMES: usize = FRAME_SHRINK + 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct AudioAeConfig {
    pub n_bins: usize,
    pub width: usize,
    pub bottleneck: usize,
    pub kernel_size: usize,
    pub stride: usize,
}

impl Default for AudioAeConfig {
    fn default() -> Self {
        AudioAeConfig {
            n_bins: 8193,
            width: 1024,
            bottleneck: 48,
            kernel_size: KERNEL,
            stride: 1,
        }
    }
}

impl AudioAeConfig {
    pub fn new(n_bins: usize, width: usize, bottleneck: usize) -> Self {
        AudioAeConfig {
            n_bins,
            width,
            bottleneck,
            ..AudioAeConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_bins == 0 || self.width == 0 || self.bottleneck == 0 {
            return Err(Error::config(
                "audio autoencoder dimensions must be positive",
            ));
        }
        if self.bottleneck >= self.width {
            return Err(Error::config(format!(
                "bottleneck {} must be smaller than width {}",
                self.bottleneck, self.width
            )));
        }
        for spec in self.layer_specs() {
            spec.validate()?;
        }
        Ok(())
    }

    /// Layer inventory in forward order.
    pub fn layer_specs(&self) -> Vec<LayerSpec> {
        let conv = |i, o| LayerSpec::Conv1d {
            in_channels: i,
            out_channels: o,
            kernel_size: self.kernel_size,
            stride: self.stride,
        };
        let deconv = |i, o| LayerSpec::ConvTranspose1d {
            in_channels: i,
            out_channels: o,
            kernel_size: self.kernel_size,
            stride: self.stride,
        };
        let leaky = LayerSpec::LeakyRelu { slope: LEAKY_SLOPE };
        let mut layers = vec![LayerSpec::BatchNorm1d {
            channels: self.n_bins,
        }];
        for (i, o) in self.encoder_dims() {
            layers.push(conv(i, o));
            layers.push(leaky.clone());
        }
        for (idx, (i, o)) in self.decoder_dims().into_iter().enumerate() {
            layers.push(deconv(i, o));
            match idx {
                0..=2 => layers.push(leaky.clone()),
                3 => layers.push(LayerSpec::Prelu),
                _ => {}
            }
        }
        layers
    }

    fn encoder_dims(&self) -> Vec<(usize, usize)> {
        let (n, w, b) = (self.n_bins, self.width, self.bottleneck);
        vec![(n, w), (w, w), (w, w), (w, w), (w, b)]
    }

    fn decoder_dims(&self) -> Vec<(usize, usize)> {
        let (n, w, b) = (self.n_bins, self.width, self.bottleneck);
        vec![(b, w), (w, w), (w, w), (w, w), (w, n)]
    }

    /// Closed-form trainable parameter count.
    pub fn param_count(&self) -> usize {
        self.layer_specs().iter().map(LayerSpec::param_count).sum()
    }
}

pub const LEAKY_SLOPE: f64 = 0.01;

pub struct AudioAutoencoder {
    config: AudioAeConfig,
    pub bn: BatchNorm1d,
    pub encoder: Vec<Conv1d>,
    pub decoder: Vec<ConvTranspose1d>,
    pub prelu: Prelu<Ix3>,
    enc_act: Vec<LeakyRelu<Ix3>>,
    dec_act: Vec<LeakyRelu<Ix3>>,
}

#[derive(Serialize, Deserialize)]
struct AudioArch {
    model: String,
    config: AudioAeConfig,
    leaky_slope: f64,
    stft: StftConfig,
}

const ARCH_NAME: &str = "audio_conv_ae";

impl AudioAutoencoder {
    pub fn new(config: AudioAeConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let encoder = config
            .encoder_dims()
            .into_iter()
            .map(|(i, o)| Conv1d::new(i, o, KERNEL, rng))
            .collect();
        let decoder = config
            .decoder_dims()
            .into_iter()
            .map(|(i, o)| ConvTranspose1d::new(i, o, KERNEL, rng))
            .collect();
        Ok(AudioAutoencoder {
            config,
            bn: BatchNorm1d::new(config.n_bins),
            encoder,
            decoder,
            prelu: Prelu::new(Prelu::<Ix3>::DEFAULT_SLOPE),
            enc_act: (0..DEPTH).map(|_| LeakyRelu::new(LEAKY_SLOPE)).collect(),
            dec_act: (0..DEPTH - 2)
                .map(|_| LeakyRelu::new(LEAKY_SLOPE))
                .collect(),
        })
    }

    pub fn config(&self) -> &AudioAeConfig {
        &self.config
    }

    fn check_input(&self, x: &Array3<f64>) -> Result<()> {
        let (_, bins, frames) = x.dim();
        if bins != self.config.n_bins {
            return Err(Error::shape(
                "audio autoencoder",
                format!("expected {} bins, got {bins}", self.config.n_bins),
            ));
        }
        if frames < MIN_FRAMES {
            return Err(Error::TooShort(format!(
                "audio autoencoder needs more than {FRAME_SHRINK} frames, got {frames}"
            )));
        }
        Ok(())
    }

    /// Forward pass returning the reconstruction and the bottleneck activation.
    pub fn forward_with_bottleneck(
        &mut self,
        x: &Array3<f64>,
        mode: Mode,
    ) -> Result<(Array3<f64>, Array3<f64>)> {
        self.check_input(x)?;
        let mut h = self.bn.forward(x, mode)?;
        for (conv, act) in self.encoder.iter_mut().zip(self.enc_act.iter_mut()) {
            h = act.forward(&conv.forward(&h, mode)?, mode);
        }
        let bottleneck = h.clone();
        for (i, deconv) in self.decoder.iter_mut().enumerate() {
            h = deconv.forward(&h, mode)?;
            h = match i {
                0..=2 => self.dec_act[i].forward(&h, mode),
                3 => self.prelu.forward(&h, mode),
                _ => h,
            };
        }
        Ok((h, bottleneck))
    }

    pub fn forward(&mut self, x: &Array3<f64>, mode: Mode) -> Result<Array3<f64>> {
        self.forward_with_bottleneck(x, mode).map(|(y, _)| y)
    }

    /// Backpropagates `dy` through the last training-mode forward pass,
    /// accumulating parameter gradients. Returns the input gradient.
    pub fn backward(&mut self, dy: &Array3<f64>) -> Result<Array3<f64>> {
        let mut g = dy.clone();
        for i in (0..DEPTH).rev() {
            g = match i {
                0..=2 => self.dec_act[i].backward(&g)?,
                3 => self.prelu.backward(&g)?,
                _ => g,
            };
            g = self.decoder[i].backward(&g)?;
        }
        for i in (0..DEPTH).rev() {
            g = self.enc_act[i].backward(&g)?;
            g = self.encoder[i].backward(&g)?;
        }
        self.bn.backward(&g)
    }

    /// Trainable parameters in declaration order.
    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut out: Vec<&mut Param> = vec![&mut self.bn.gamma, &mut self.bn.beta];
        for c in &mut self.encoder {
            out.push(&mut c.weight);
            out.push(&mut c.bias);
        }
        for d in &mut self.decoder {
            out.push(&mut d.weight);
            out.push(&mut d.bias);
        }
        out.push(&mut self.prelu.slope);
        out
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    /// Trainable parameter count by enumeration of the live tensors.
    pub fn param_count(&mut self) -> usize {
        self.params_mut().iter().map(|p| p.len()).sum()
    }

    pub fn to_checkpoint(&self, stft: &StftConfig, seed: u64) -> Checkpoint {
        let arch = AudioArch {
            model: ARCH_NAME.into(),
            config: self.config,
            leaky_slope: LEAKY_SLOPE,
            stft: *stft,
        };
        let mut tensors = vec![
            NamedTensor::from_array("bn.gamma", &self.bn.gamma.value),
            NamedTensor::from_array("bn.beta", &self.bn.beta.value),
            NamedTensor::from_array("bn.running_mean", &self.bn.running_mean.clone().into_dyn()),
            NamedTensor::from_array("bn.running_var", &self.bn.running_var.clone().into_dyn()),
        ];
        for (i, c) in self.encoder.iter().enumerate() {
            tensors.push(NamedTensor::from_array(
                format!("encoder.{i}.weight"),
                &c.weight.value,
            ));
            tensors.push(NamedTensor::from_array(
                format!("encoder.{i}.bias"),
                &c.bias.value,
            ));
        }
        for (i, d) in self.decoder.iter().enumerate() {
            tensors.push(NamedTensor::from_array(
                format!("decoder.{i}.weight"),
                &d.weight.value,
            ));
            tensors.push(NamedTensor::from_array(
                format!("decoder.{i}.bias"),
                &d.bias.value,
            ));
        }
        tensors.push(NamedTensor::from_array(
            "prelu.slope",
            &self.prelu.slope.value,
        ));
        Checkpoint {
            arch: serde_json::to_string(&arch).expect("architecture serializes"),
            seed,
            tensors,
        }
    }

    /// Restores a model and the STFT configuration it was trained with.
    pub fn from_checkpoint(ck: &Checkpoint) -> Result<(Self, StftConfig)> {
        let arch: AudioArch = serde_json::from_str(&ck.arch).map_err(|e| Error::Format {
            format: "checkpoint",
            detail: format!("architecture header: {e}"),
        })?;
        if arch.model != ARCH_NAME {
            return Err(Error::Format {
                format: "checkpoint",
                detail: format!("expected an audio model, found `{}`", arch.model),
            });
        }
        let cfg = arch.config;
        let mut model = AudioAutoencoder::new(cfg, &mut rng::seeded(0))?;
        let mut cur = ck.take_in_order();
        let n = cfg.n_bins;
        model.bn.gamma.value = cur.next("bn.gamma", &[n])?;
        model.bn.beta.value = cur.next("bn.beta", &[n])?;
        model.bn.running_mean = to1(cur.next("bn.running_mean", &[n])?);
        model.bn.running_var = to1(cur.next("bn.running_var", &[n])?);
        for (i, (c, (ci, co))) in model.encoder.iter_mut().zip(cfg.encoder_dims()).enumerate() {
            c.weight.value = cur.next(&format!("encoder.{i}.weight"), &[co, ci, KERNEL])?;
            c.bias.value = cur.next(&format!("encoder.{i}.bias"), &[co])?;
        }
        for (i, (d, (ci, co))) in model.decoder.iter_mut().zip(cfg.decoder_dims()).enumerate() {
            d.weight.value = cur.next(&format!("decoder.{i}.weight"), &[ci, co, KERNEL])?;
            d.bias.value = cur.next(&format!("decoder.{i}.bias"), &[co])?;
        }
        model.prelu.slope.value = cur.next("prelu.slope", &[1])?;
        cur.finish()?;
        Ok((model, arch.stft))
    }

    /// Frozen per-frame inference view of the current weights (eval mode).
    pub fn frame_model(&self) -> FrameModel {
        let (bn_scale, bn_shift) = self.bn.eval_affine();
        let tap = |taps: Vec<Array2<f64>>, bias: Array1<f64>| TapLayer { taps, bias };
        FrameModel {
            n_bins: self.config.n_bins,
            bn_scale,
            bn_shift,
            encoder: self
                .encoder
                .iter()
                .map(|c| tap(c.frame_taps(), c.bias_vector()))
                .collect(),
            decoder: self
                .decoder
                .iter()
                .map(|d| tap(d.frame_taps(), d.bias_vector()))
                .collect(),
            leaky_slope: LEAKY_SLOPE,
            prelu_slope: self.prelu.slope_value(),
        }
    }
}

fn to1(a: ndarray::ArrayD<f64>) -> Array1<f64> {
    a.into_dimensionality().expect("checked 1-d shape")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AudioTrainRecipe {
    pub epochs: usize,
    pub peak_lr: f64,
    pub batch_size: usize,
    pub segment_frames: usize,
    pub seed: u64,
    pub warmup_fraction: f64,
    pub initial_divisor: f64,
    pub final_divisor: f64,
    pub adam: AdamConfig,
}

impl Default for AudioTrainRecipe {
    fn default() -> Self {
        AudioTrainRecipe {
            epochs: 50,
            peak_lr: 1e-4,
            batch_size: 16,
            segment_frames: 32,
            seed: 0,
            warmup_fraction: 0.3,
            initial_divisor: 25.0,
            final_divisor: 1e4,
            adam: AdamConfig::default(),
        }
    }
}

impl AudioTrainRecipe {
    pub fn validate(&self) -> Result<()> {
        if self.segment_frames < MIN_FRAMES {
            return Err(Error::config(format!(
                "segment_frames must exceed {FRAME_SHRINK}, got {}",
                self.segment_frames
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be positive"));
        }
        if self.peak_lr.is_nan() || self.peak_lr <= 0.0 {
            return Err(Error::config("peak_lr must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean training loss per epoch.
    pub epoch_loss: Vec<f64>,
    pub steps: usize,
    /// Eval-mode MSE on the fixed probe batch before and after training.
    pub probe_initial: f64,
    pub probe_final: f64,
}

fn crop_batch(specs: &[Spectrogram], crops: &[(usize, usize)], seg: usize) -> Array3<f64> {
    let n_bins = specs[crops[0].0].n_bins();
    let mut batch = Array3::zeros((crops.len(), n_bins, seg));
    for (b, &(i, start)) in crops.iter().enumerate() {
        batch.slice_mut(s![b, .., ..]).assign(
            &specs[i]
                .channels_by_time()
                .slice(s![.., start..start + seg]),
        );
    }
    batch
}

/// Trains on random fixed-length crops with Adam under a one-cycle schedule.
///
/// An epoch draws `max(1, n_frames / segment_frames)` uniformly placed crops
/// from every spectrogram and visits them in shuffled order.
pub fn train_audio_ae(
    model: &mut AudioAutoencoder,
    corpus: &NormalCorpus<Spectrogram>,
    recipe: &AudioTrainRecipe,
) -> Result<TrainReport> {
    recipe.validate()?;
    let specs = corpus.items();
    if specs.is_empty() {
        return Err(Error::Empty("audio training corpus"));
    }
    let seg = recipe.segment_frames;
    for (id, s) in corpus.ids().iter().zip(specs) {
        if s.n_bins() != model.config.n_bins {
            return Err(Error::shape(
                "audio training",
                format!(
                    "sample `{id}` has {} bins, model expects {}",
                    s.n_bins(),
                    model.config.n_bins
                ),
            ));
        }
        if s.n_frames() < seg {
            return Err(Error::TooShort(format!(
                "sample `{id}` has {} frames, segment needs {seg}",
                s.n_frames()
            )));
        }
    }

    let probe: Vec<(usize, usize)> = (0..specs.len().min(recipe.batch_size.max(2)))
        .map(|i| (i, 0))
        .collect();
    let probe_batch = crop_batch(specs, &probe, seg);
    let probe_loss = |m: &mut AudioAutoencoder| -> Result<f64> {
        let y = m.forward(&probe_batch, Mode::Eval)?;
        Ok(mse(&y, &probe_batch)?.0)
    };
    let probe_initial = probe_loss(model)?;

    let crops_per_epoch: usize = specs.iter().map(|s| (s.n_frames() / seg).max(1)).sum();
    let batches_per_epoch = crops_per_epoch.div_ceil(recipe.batch_size);
    let total_steps = recipe.epochs * batches_per_epoch;
    let mut epoch_loss = Vec::with_capacity(recipe.epochs);
    if recipe.epochs > 0 {
        let schedule = OneCycleSchedule::with_shape(
            total_steps.max(2),
            recipe.peak_lr,
            recipe.warmup_fraction,
            recipe.initial_divisor,
            recipe.final_divisor,
        )?;
        let mut adam = Adam::new(recipe.adam);
        let mut crop_rng = rng::derived(recipe.seed, "audio-crops");
        let mut step = 0;
        for epoch in 0..recipe.epochs {
            let mut crops = Vec::with_capacity(crops_per_epoch);
            for (i, s) in specs.iter().enumerate() {
                for _ in 0..(s.n_frames() / seg).max(1) {
                    crops.push((i, crop_rng.random_range(0..=s.n_frames() - seg)));
                }
            }
            crops.shuffle(&mut crop_rng);
            let mut total = 0.0;
            for chunk in crops.chunks(recipe.batch_size) {
                let batch = crop_batch(specs, chunk, seg);
                model.zero_grad();
                let y = model.forward(&batch, Mode::Train)?;
                let (loss, grad) = mse(&y, &batch)?;
                if !loss.is_finite() {
                    return Err(Error::NonFinite(format!(
                        "audio training loss at epoch {epoch}"
                    )));
                }
                model.backward(&grad)?;
                adam.step(&mut model.params_mut(), schedule.lr(step)?)?;
                step += 1;
                total += loss * chunk.len() as f64;
            }
            let mean = total / crops.len() as f64;
            log::debug!(
                "audio epoch {}/{}: loss {mean:.6e}",
                epoch + 1,
                recipe.epochs
            );
            epoch_loss.push(mean);
        }
    }
    let probe_final = probe_loss(model)?;
    log::info!("audio training: probe mse {probe_initial:.4e} -> {probe_final:.4e}");
    Ok(TrainReport {
        epoch_loss,
        steps: total_steps,
        probe_initial,
        probe_final,
    })
}

/// Mean squared error over bins for each frame of two `(n_frames, n_bins)`
/// matrices.
pub fn frame_mse_scores(
    input: ArrayView2<f64>,
    reconstruction: ArrayView2<f64>,
) -> Result<Vec<f64>> {
    if input.dim() != reconstruction.dim() {
        return Err(Error::shape(
            "frame scores",
            format!(
                "input {:?} vs reconstruction {:?}",
                input.dim(),
                reconstruction.dim()
            ),
        ));
    }
    Ok(input
        .outer_iter()
        .zip(reconstruction.outer_iter())
        .map(|(x, y)| frame_mse(x, y))
        .collect())
}

fn frame_mse(x: ArrayView1<f64>, y: ArrayView1<f64>) -> f64 {
    let mut acc = 0.0;
    for (a, b) in x.iter().zip(y.iter()) {
        let d = a - b;
        acc += d * d;
    }
    acc / x.len() as f64
}

#[derive(Debug, Clone)]
struct TapLayer {
    taps: Vec<Array2<f64>>,
    bias: Array1<f64>,
}

impl TapLayer {
    /// `bias + Σ taps[k] · x_k` over the present terms, in ascending `k`.
    fn apply(&self, terms: [Option<&Array1<f64>>; KERNEL]) -> Array1<f64> {
        let mut acc = self.bias.clone();
        for (tap, x) in self.taps.iter().zip(terms) {
            if let Some(x) = x {
                acc += &tap.dot(x);
            }
        }
        acc
    }
}

/// Eval-mode weights arranged for frame-at-a-time inference. Immutable and
/// shareable across threads; each scoring session keeps its own state.
#[derive(Debug, Clone)]
pub struct FrameModel {
    n_bins: usize,
    bn_scale: Array1<f64>,
    bn_shift: Array1<f64>,
    encoder: Vec<TapLayer>,
    decoder: Vec<TapLayer>,
    leaky_slope: f64,
    prelu_slope: f64,
}

impl FrameModel {
    pub fn n_bins(&self) -> usize {
        self.n_bins
    }
}

/// Incremental scorer: feed spectrogram frames one at a time, receive a score
/// per frame once the reconstruction of that frame is complete.
///
/// Encoder output `j` of a layer is computed when its input `j + 2` arrives;
/// transposed-convolution output `t` is computed when input `t` arrives, and
/// the two trailing outputs of each decoder layer are produced by
/// [`finish`](Self::finish). A score therefore trails its input by
/// [`FRAME_SHRINK`] frames. Offline scoring uses the same code path, so
/// streamed and offline scores are bit-identical.
pub struct FrameScorer {
    model: Arc<FrameModel>,
    enc_hist: Vec<VecDeque<Array1<f64>>>,
    dec_hist: Vec<VecDeque<Array1<f64>>>,
    pending: VecDeque<Array1<f64>>,
    frames_in: usize,
}

impl FrameScorer {
    pub fn new(model: Arc<FrameModel>) -> Self {
        FrameScorer {
            enc_hist: vec![VecDeque::with_capacity(KERNEL); DEPTH],
            dec_hist: vec![VecDeque::with_capacity(KERNEL); DEPTH],
            pending: VecDeque::new(),
            frames_in: 0,
            model,
        }
    }

    pub fn frames_in(&self) -> usize {
        self.frames_in
    }

    fn activate(&self, layer: usize, mut y: Array1<f64>) -> Array1<f64> {
        let slope = match layer {
            0..=2 => self.model.leaky_slope,
            3 => self.model.prelu_slope,
            _ => return y,
        };
        y.mapv_inplace(|v| if v > 0.0 { v } else { slope * v });
        y
    }

    /// Pushes input `z[s]` into decoder layer `layer`; returns `y[s]`.
    fn decode_step(&mut self, layer: usize, z: Array1<f64>) -> Array1<f64> {
        let hist = &self.dec_hist[layer];
        let len = hist.len();
        let prev1 = len.checked_sub(1).map(|i| &hist[i]);
        let prev2 = len.checked_sub(2).map(|i| &hist[i]);
        let y = self.model.decoder[layer].apply([Some(&z), prev1, prev2]);
        let hist = &mut self.dec_hist[layer];
        if hist.len() == KERNEL - 1 {
            hist.pop_front();
        }
        hist.push_back(z);
        self.activate(layer, y)
    }

    fn decode_from(&mut self, first: usize, mut z: Array1<f64>) -> Array1<f64> {
        for layer in first..DEPTH {
            z = self.decode_step(layer, z);
        }
        z
    }

    fn emit(&mut self, recon: Array1<f64>) -> f64 {
        let x = self
            .pending
            .pop_front()
            .expect("a pending input per reconstructed frame");
        frame_mse(x.view(), recon.view())
    }

    /// Feeds one raw (pre-normalization) frame. Returns the score of the
    /// oldest unscored frame once enough context has arrived.
    pub fn push(&mut self, frame: ArrayView1<f64>) -> Result<Option<f64>> {
        if frame.len() != self.model.n_bins {
            return Err(Error::shape(
                "frame scorer",
                format!("expected {} bins, got {}", self.model.n_bins, frame.len()),
            ));
        }
        if frame.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("input spectrogram frame".into()));
        }
        self.frames_in += 1;
        self.pending.push_back(frame.to_owned());
        let mut h = &frame * &self.model.bn_scale + &self.model.bn_shift;
        for layer in 0..DEPTH {
            let hist = &mut self.enc_hist[layer];
            hist.push_back(h);
            if hist.len() < KERNEL {
                return Ok(None);
            }
            let y =
                self.model.encoder[layer].apply([Some(&hist[0]), Some(&hist[1]), Some(&hist[2])]);
            hist.pop_front();
            let slope = self.model.leaky_slope;
            h = y.mapv_into(|v| if v > 0.0 { v } else { slope * v });
        }
        let recon = self.decode_from(0, h);
        Ok(Some(self.emit(recon)))
    }

    /// Flushes the decoder tails and returns the remaining scores.
    pub fn finish(mut self) -> Result<Vec<f64>> {
        if self.frames_in < MIN_FRAMES {
            return Err(Error::TooShort(format!(
                "audio scoring needs more than {FRAME_SHRINK} frames, got {}",
                self.frames_in
            )));
        }
        let mut scores = Vec::with_capacity(FRAME_SHRINK);
        for layer in 0..DEPTH {
            let hist = std::mem::take(&mut self.dec_hist[layer]);
            let z1 = hist.back();
            let z2 = hist.len().checked_sub(2).map(|i| &hist[i]);
            let tails = [
                self.model.decoder[layer].apply([None, z1, z2]),
                self.model.decoder[layer].apply([None, None, z1]),
            ];
            for y in tails {
                let y = self.activate(layer, y);
                let recon = self.decode_from(layer + 1, y);
                scores.push(self.emit(recon));
            }
        }
        debug_assert!(self.pending.is_empty());
        Ok(scores)
    }
}

/// Per-frame anomaly scores of a spectrogram; one score per input frame.
pub fn audio_frame_scores(model: &Arc<FrameModel>, spec: &Spectrogram) -> Result<Vec<f64>> {
    if spec.n_frames() < MIN_FRAMES {
        return Err(Error::TooShort(format!(
            "spectrogram has {} frames, scoring needs more than {FRAME_SHRINK}",
            spec.n_frames()
        )));
    }
    let mut scorer = FrameScorer::new(Arc::clone(model));
    let mut scores = Vec::with_capacity(spec.n_frames());
    for frame in spec.frames().outer_iter() {
        scores.extend(scorer.push(frame)?);
    }
    scores.extend(scorer.finish()?);
    Ok(scores)
}

/// Audio samples in, frame scores out: a [`StreamingStft`] feeding a
/// [`FrameScorer`].
pub struct StreamingScorer {
    stft: StreamingStft,
    scorer: FrameScorer,
}

impl StreamingScorer {
    pub fn new(model: Arc<FrameModel>, stft: StreamingStft) -> Result<Self> {
        if stft.config().n_bins() != model.n_bins {
            return Err(Error::config(format!(
                "stft yields {} bins, model expects {}",
                stft.config().n_bins(),
                model.n_bins
            )));
        }
        Ok(StreamingScorer {
            stft,
            scorer: FrameScorer::new(model),
        })
    }

    pub fn stft(&self) -> &StreamingStft {
        &self.stft
    }

    /// Pushes samples and drains every frame that became available.
    pub fn push(&mut self, samples: &[f64]) -> Result<Vec<f64>> {
        self.stft.push(samples)?;
        let mut out = Vec::new();
        while let Some(frame) = self.stft.next_frame()? {
            out.extend(self.scorer.push(ArrayView1::from(&frame))?);
        }
        Ok(out)
    }

    pub fn finish(self) -> Result<Vec<f64>> {
        self.scorer.finish()
    }
}

/// Helper for tests and tools: the batched eval-mode reconstruction of a
/// spectrogram as `(n_frames, n_bins)`.
pub fn reconstruct(model: &mut AudioAutoencoder, spec: &Spectrogram) -> Result<Array2<f64>> {
    let x = spec.channels_by_time().to_owned().insert_axis(Axis(0));
    let y = model.forward(&x, Mode::Eval)?;
    Ok(y.index_axis_move(Axis(0), 0).reversed_axes())
}
