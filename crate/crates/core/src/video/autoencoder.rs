use ndarray::{s, Array2, ArrayD, Ix2};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::embedding::{EmbeddingSequence, EMBEDDING_DIM};
use crate::dataset::NormalCorpus;
use crate::error::{Error, Result};
use crate::nn::checkpoint::{Checkpoint, NamedTensor};
use crate::nn::{mse, Adam, AdamConfig, Dropout, LayerSpec, Linear, Mode, Param, Relu};
use crate::rng::{self, Rng};

/// Dense autoencoder over per-frame embeddings.
///
/// `dims` lists the width before and after every linear layer. ReLU follows
/// each linear layer except the last; dropout follows the ReLU of the layers
/// named in `dropout_after` (zero-based linear-layer indices).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VideoAeConfig {
    pub dims: Vec<usize>,
    pub dropout_p: f64,
    pub dropout_after: Vec<usize>,
}

impl Default for VideoAeConfig {
    fn default() -> Self {
        VideoAeConfig {
            dims: vec![
                EMBEDDING_DIM,
                512,
                256,
                128,
                64,
                64,
                64,
                128,
                256,
                512,
                EMBEDDING_DIM,
            ],
            dropout_p: 0.5,
            dropout_after: vec![1, 2, 3, 8],
        }
    }
}

impl VideoAeConfig {
    pub fn n_linear(&self) -> usize {
        self.dims.len().saturating_sub(1)
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.len() < 2 {
            return Err(Error::config(
                "video autoencoder needs at least one linear layer",
            ));
        }
        if self.dims.contains(&0) {
            return Err(Error::config("video autoencoder dims must be positive"));
        }
        if self.dims[0] != self.dims[self.dims.len() - 1] {
            return Err(Error::config(format!(
                "dim chain must end where it starts: {} vs {}",
                self.dims[0],
                self.dims[self.dims.len() - 1]
            )));
        }
        if let Some(&bad) = self
            .dropout_after
            .iter()
            .find(|&&i| i + 1 >= self.n_linear())
        {
            return Err(Error::config(format!(
                "dropout after linear layer {bad}: only hidden layers (< {}) carry dropout",
                self.n_linear() - 1
            )));
        }
        LayerSpec::Dropout { p: self.dropout_p }.validate()
    }

    pub fn layer_specs(&self) -> Vec<LayerSpec> {
        let mut out = Vec::new();
        for (i, w) in self.dims.windows(2).enumerate() {
            out.push(LayerSpec::Linear {
                in_dim: w[0],
                out_dim: w[1],
            });
            if i + 1 < self.n_linear() {
                out.push(LayerSpec::Relu);
                if self.dropout_after.contains(&i) {
                    out.push(LayerSpec::Dropout { p: self.dropout_p });
                }
            }
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.layer_specs().iter().map(LayerSpec::param_count).sum()
    }
}

struct Block {
    linear: Linear,
    relu: Option<Relu<Ix2>>,
    dropout: Option<Dropout<Ix2>>,
}

pub struct VideoAutoencoder {
    config: VideoAeConfig,
    blocks: Vec<Block>,
}

#[derive(Serialize, Deserialize)]
struct VideoArch {
    model: String,
    config: VideoAeConfig,
}

const ARCH_NAME: &str = "video_mlp_ae";

impl VideoAutoencoder {
    pub fn new(config: VideoAeConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let n = config.n_linear();
        let blocks = config
            .dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| -> Result<Block> {
                let hidden = i + 1 < n;
                Ok(Block {
                    linear: Linear::new(w[0], w[1], rng),
                    relu: hidden.then(Relu::default),
                    dropout: if config.dropout_after.contains(&i) {
                        Some(Dropout::new(config.dropout_p)?)
                    } else {
                        None
                    },
                })
            })
            .collect::<Result<_>>()?;
        Ok(VideoAutoencoder { config, blocks })
    }

    pub fn config(&self) -> &VideoAeConfig {
        &self.config
    }

    /// `rng` drives dropout masks in training mode and is untouched in
    /// evaluation mode.
    pub fn forward(&mut self, x: &Array2<f64>, mode: Mode, rng: &mut Rng) -> Result<Array2<f64>> {
        let mut h = x.clone();
        for block in &mut self.blocks {
            h = block.linear.forward(&h, mode)?;
            if let Some(relu) = &mut block.relu {
                h = relu.forward(&h, mode);
            }
            if let Some(drop) = &mut block.dropout {
                h = drop.forward(&h, mode, rng);
            }
        }
        Ok(h)
    }

    /// Evaluation-mode reconstruction.
    pub fn reconstruct(&mut self, x: &Array2<f64>) -> Result<Array2<f64>> {
        // eval mode never draws from the generator
        self.forward(x, Mode::Eval, &mut rng::seeded(0))
    }

    pub fn backward(&mut self, dy: &Array2<f64>) -> Result<Array2<f64>> {
        let mut g = dy.clone();
        for block in self.blocks.iter_mut().rev() {
            if let Some(drop) = &mut block.dropout {
                g = drop.backward(&g)?;
            }
            if let Some(relu) = &mut block.relu {
                g = relu.backward(&g)?;
            }
            g = block.linear.backward(&g)?;
        }
        Ok(g)
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut out = Vec::with_capacity(2 * self.blocks.len());
        for b in &mut self.blocks {
            out.push(&mut b.linear.weight);
            out.push(&mut b.linear.bias);
        }
        out
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    pub fn param_count(&mut self) -> usize {
        self.params_mut().iter().map(|p| p.len()).sum()
    }

    fn snapshot(&mut self) -> Vec<ArrayD<f64>> {
        self.params_mut()
            .into_iter()
            .map(|p| p.value.clone())
            .collect()
    }

    fn restore(&mut self, values: Vec<ArrayD<f64>>) {
        for (p, v) in self.params_mut().into_iter().zip(values) {
            p.value = v;
        }
    }

    pub fn to_checkpoint(&self, seed: u64) -> Checkpoint {
        let arch = VideoArch {
            model: ARCH_NAME.into(),
            config: self.config.clone(),
        };
        let mut tensors = Vec::with_capacity(2 * self.blocks.len());
        for (i, b) in self.blocks.iter().enumerate() {
            tensors.push(NamedTensor::from_array(
                format!("linear.{i}.weight"),
                &b.linear.weight.value,
            ));
            tensors.push(NamedTensor::from_array(
                format!("linear.{i}.bias"),
                &b.linear.bias.value,
            ));
        }
        Checkpoint {
            arch: serde_json::to_string(&arch).expect("architecture serializes"),
            seed,
            tensors,
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let arch: VideoArch = serde_json::from_str(&ck.arch).map_err(|e| Error::Format {
            format: "checkpoint",
            detail: format!("architecture header: {e}"),
        })?;
        if arch.model != ARCH_NAME {
            return Err(Error::Format {
                format: "checkpoint",
                detail: format!("expected a video model, found `{}`", arch.model),
            });
        }
        let mut model = VideoAutoencoder::new(arch.config, &mut rng::seeded(0))?;
        let mut cur = ck.take_in_order();
        let dims = model.config.dims.clone();
        for (i, (b, w)) in model.blocks.iter_mut().zip(dims.windows(2)).enumerate() {
            b.linear.weight.value = cur.next(&format!("linear.{i}.weight"), &[w[1], w[0]])?;
            b.linear.bias.value = cur.next(&format!("linear.{i}.bias"), &[w[1]])?;
        }
        cur.finish()?;
        Ok(model)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VideoTrainRecipe {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Frames drawn per sample and epoch; `None` uses every frame.
    pub frames_per_sample: Option<usize>,
    /// Validation cadence in epochs for early stopping; 0 disables it.
    pub eval_every: usize,
    /// Stop after this many validations without improvement.
    pub patience: Option<usize>,
    pub adam: AdamConfig,
}

impl Default for VideoTrainRecipe {
    fn default() -> Self {
        VideoTrainRecipe {
            epochs: 1000,
            lr: 5e-4,
            batch_size: 64,
            seed: 0,
            frames_per_sample: None,
            eval_every: 10,
            patience: None,
            adam: AdamConfig::default(),
        }
    }
}

impl VideoTrainRecipe {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::config(format!(
                "learning rate must be positive, got {}",
                self.lr
            )));
        }
        if self.batch_size < 1 {
            return Err(Error::config("batch_size must be positive"));
        }
        if self.frames_per_sample == Some(0) {
            return Err(Error::config("frames_per_sample must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoTrainReport {
    pub epoch_loss: Vec<f64>,
    pub probe_initial: f64,
    pub probe_final: f64,
    /// `(epoch, validation metric)` for every validation run.
    pub validation: Vec<(usize, f64)>,
    /// Epoch whose weights were kept (the last epoch without validation).
    pub selected_epoch: usize,
}

/// Validation callback for [`train_video_ae`]; higher is better.
pub type Validator<'a> = &'a mut dyn FnMut(&mut VideoAutoencoder) -> Result<f64>;

/// Trains on good-weld embeddings with Adam at a constant learning rate.
///
/// With a `validate` callback and `eval_every > 0`, the callback runs every
/// `eval_every` epochs (and after the last one) and the weights with the
/// highest returned metric are kept; ties keep the earlier epoch.
pub fn train_video_ae(
    model: &mut VideoAutoencoder,
    corpus: &NormalCorpus<EmbeddingSequence>,
    recipe: &VideoTrainRecipe,
    mut validate: Option<Validator<'_>>,
) -> Result<VideoTrainReport> {
    recipe.validate()?;
    let seqs = corpus.items();
    if seqs.is_empty() {
        return Err(Error::Empty("video training corpus"));
    }
    let dim = model.config.input_dim();
    for s in seqs {
        s.require_dim(dim)?;
    }

    // probe: the first frame of up to `batch_size` samples
    let n_probe = seqs.len().min(recipe.batch_size);
    let probe = Array2::from_shape_fn((n_probe, dim), |(i, j)| seqs[i].vectors[[0, j]]);
    let probe_loss =
        |m: &mut VideoAutoencoder| -> Result<f64> { Ok(mse(&m.reconstruct(&probe)?, &probe)?.0) };
    let probe_initial = probe_loss(model)?;

    let mut order_rng = rng::derived(recipe.seed, "video-order");
    let mut dropout_rng = rng::derived(recipe.seed, "video-dropout");
    let mut adam = Adam::new(recipe.adam);
    let mut epoch_loss = Vec::with_capacity(recipe.epochs);
    let mut validation = Vec::new();
    let mut best: Option<(f64, usize, Vec<ArrayD<f64>>)> = None;
    let mut since_best = 0usize;

    for epoch in 1..=recipe.epochs {
        let mut frames: Vec<(usize, usize)> = Vec::new();
        for (i, s) in seqs.iter().enumerate() {
            let mut idx: Vec<usize> = (0..s.n_frames()).collect();
            if let Some(k) = recipe.frames_per_sample {
                if k < idx.len() {
                    idx.partial_shuffle(&mut order_rng, k);
                    idx.truncate(k);
                }
            }
            frames.extend(idx.into_iter().map(|f| (i, f)));
        }
        frames.shuffle(&mut order_rng);
        let mut total = 0.0;
        for chunk in frames.chunks(recipe.batch_size) {
            let mut batch = Array2::zeros((chunk.len(), dim));
            for (r, &(i, f)) in chunk.iter().enumerate() {
                batch.slice_mut(s![r, ..]).assign(&seqs[i].vectors.row(f));
            }
            model.zero_grad();
            let y = model.forward(&batch, Mode::Train, &mut dropout_rng)?;
            let (loss, grad) = mse(&y, &batch)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!(
                    "video training loss at epoch {epoch}"
                )));
            }
            model.backward(&grad)?;
            adam.step(&mut model.params_mut(), recipe.lr)?;
            total += loss * chunk.len() as f64;
        }
        let mean = total / frames.len() as f64;
        epoch_loss.push(mean);
        log::debug!("video epoch {epoch}/{}: loss {mean:.6e}", recipe.epochs);

        if let Some(cb) = validate.as_deref_mut() {
            if recipe.eval_every > 0 && (epoch % recipe.eval_every == 0 || epoch == recipe.epochs) {
                let metric = cb(model)?;
                validation.push((epoch, metric));
                log::info!("video epoch {epoch}: validation {metric:.4}");
                if best.as_ref().is_none_or(|(m, _, _)| metric > *m) {
                    best = Some((metric, epoch, model.snapshot()));
                    since_best = 0;
                } else {
                    since_best += 1;
                    if recipe.patience.is_some_and(|p| since_best >= p) {
                        log::info!("video training: early stop at epoch {epoch}");
                        break;
                    }
                }
            }
        }
    }
    let selected_epoch = match best {
        Some((_, epoch, weights)) => {
            model.restore(weights);
            epoch
        }
        None => epoch_loss.len(),
    };
    let probe_final = probe_loss(model)?;
    log::info!("video training: probe mse {probe_initial:.4e} -> {probe_final:.4e}, kept epoch {selected_epoch}");
    Ok(VideoTrainReport {
        epoch_loss,
        probe_initial,
        probe_final,
        validation,
        selected_epoch,
    })
}

const SCORE_CHUNK: usize = 256;

/// One score per embedding frame: MSE between the vector and its
/// evaluation-mode reconstruction.
pub fn video_frame_scores(
    model: &mut VideoAutoencoder,
    seq: &EmbeddingSequence,
) -> Result<Vec<f64>> {
    seq.require_dim(model.config.input_dim())?;
    let mut scores = Vec::with_capacity(seq.n_frames());
    let mut start = 0;
    while start < seq.n_frames() {
        let end = (start + SCORE_CHUNK).min(seq.n_frames());
        let x = seq.vectors.slice(s![start..end, ..]).to_owned();
        let y = model.reconstruct(&x)?;
        for (a, b) in x.outer_iter().zip(y.outer_iter()) {
            let sq: f64 = a.iter().zip(b.iter()).map(|(u, v)| (u - v) * (u - v)).sum();
            scores.push(sq / a.len() as f64);
        }
        start = end;
    }
    Ok(scores)
}
