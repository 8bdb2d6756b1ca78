//! Minimal neural-network kernels with hand-derived backward passes.
//!
//! Only the layer inventory needed by the two autoencoders is provided:
//! valid 1-D convolution and its transpose (stride 1), batch normalization
//! over channels, dense layers, dropout and three rectifier variants.
//! Tensors are `ndarray` arrays in `f64`; batched 1-D signals use the
//! `(batch, channels, time)` layout and dense activations `(batch, features)`.
//!
//! Layers cache what their backward pass needs only when run in
//! [`Mode::Train`]. Calling `backward` without a cached training forward is an
//! error.

mod activation;
mod batchnorm;
pub mod checkpoint;
mod conv;
mod dropout;
mod linear;
mod loss;
pub mod optim;

pub use activation::{leaky_relu, prelu, relu, LeakyRelu, Prelu, Relu};
pub use batchnorm::BatchNorm1d;
pub use conv::{conv1d, conv_transpose1d, Conv1d, ConvTranspose1d};
pub use dropout::Dropout;
pub use linear::Linear;
pub use loss::mse;
pub use optim::{Adam, AdamConfig, OneCycleSchedule};

use ndarray::{Array, ArrayD, Dimension, IxDyn};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Train,
    Eval,
}

/// A trainable tensor and its accumulated gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub value: ArrayD<f64>,
    pub grad: ArrayD<f64>,
}

impl Param {
    pub fn new<D: Dimension>(value: Array<f64, D>) -> Self {
        let value = value.into_dyn();
        let grad = ArrayD::zeros(value.raw_dim());
        Param { value, grad }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }
}

/// Declarative description of one layer, used for architecture summaries and
/// checkpoint headers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    BatchNorm1d {
        channels: usize,
    },
    Conv1d {
        in_channels: usize,
        out_channels: usize,
        kernel_size: usize,
        stride: usize,
    },
    ConvTranspose1d {
        in_channels: usize,
        out_channels: usize,
        kernel_size: usize,
        stride: usize,
    },
    Linear {
        in_dim: usize,
        out_dim: usize,
    },
    Dropout {
        p: f64,
    },
    LeakyRelu {
        slope: f64,
    },
    Prelu,
    Relu,
}

impl LayerSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            LayerSpec::BatchNorm1d { channels: 0 } => {
                Err(Error::config("batchnorm channels must be positive"))
            }
            LayerSpec::Conv1d {
                in_channels,
                out_channels,
                kernel_size,
                stride,
            }
            | LayerSpec::ConvTranspose1d {
                in_channels,
                out_channels,
                kernel_size,
                stride,
            } => {
                if in_channels == 0 || out_channels == 0 {
                    return Err(Error::config("convolution channels must be positive"));
                }
                if kernel_size != 3 || stride != 1 {
                    return Err(Error::config(format!(
                        "convolutions use kernel 3 / stride 1, got kernel {kernel_size} / stride {stride}"
                    )));
                }
                Ok(())
            }
            LayerSpec::Linear { in_dim, out_dim } if in_dim == 0 || out_dim == 0 => {
                Err(Error::config("linear dims must be positive"))
            }
            LayerSpec::Dropout { p } if !(0.0..1.0).contains(&p) => Err(Error::config(format!(
                "dropout probability {p} outside [0, 1)"
            ))),
            LayerSpec::LeakyRelu { slope } if !slope.is_finite() => {
                Err(Error::config("leaky relu slope must be finite"))
            }
            _ => Ok(()),
        }
    }

    /// Number of trainable scalars the layer owns.
    pub fn param_count(&self) -> usize {
        match *self {
            LayerSpec::BatchNorm1d { channels } => 2 * channels,
            LayerSpec::Conv1d {
                in_channels,
                out_channels,
                kernel_size,
                ..
            }
            | LayerSpec::ConvTranspose1d {
                in_channels,
                out_channels,
                kernel_size,
                ..
            } => in_channels * out_channels * kernel_size + out_channels,
            LayerSpec::Linear { in_dim, out_dim } => in_dim * out_dim + out_dim,
            LayerSpec::Prelu => 1,
            LayerSpec::Dropout { .. } | LayerSpec::LeakyRelu { .. } | LayerSpec::Relu => 0,
        }
    }
}

pub(crate) fn ensure_finite<D: Dimension>(x: &Array<f64, D>, layer: &str) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(layer.to_string()))
    }
}

/// Kaiming-uniform with `a = sqrt(5)`: bound `1 / sqrt(fan_in)`, the same
/// bound used for biases.
pub(crate) fn kaiming_uniform(shape: &[usize], fan_in: usize, rng: &mut Rng) -> ArrayD<f64> {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    ArrayD::from_shape_simple_fn(IxDyn(shape), || rng.random_range(-bound..bound))
}
