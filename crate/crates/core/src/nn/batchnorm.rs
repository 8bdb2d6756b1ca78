use ndarray::{Array1, Array3, ArrayView1, Axis, Ix1};

use super::{ensure_finite, Mode, Param};
use crate::error::{Error, Result};

struct BnCache {
    xhat: Array3<f64>,
    inv_std: Array1<f64>,
}

/// Per-channel batch normalization over `(batch, channels, time)` inputs.
///
/// Training mode normalizes with the biased batch statistics taken over batch
/// and time, and folds the unbiased variance into the running estimate with
/// the configured momentum. Evaluation mode uses the running estimates.
pub struct BatchNorm1d {
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
    pub eps: f64,
    pub momentum: f64,
    cache: Option<BnCache>,
}

impl BatchNorm1d {
    pub const DEFAULT_EPS: f64 = 1e-5;
    pub const DEFAULT_MOMENTUM: f64 = 0.1;

    pub fn new(channels: usize) -> Self {
        BatchNorm1d {
            gamma: Param::new(Array1::ones(channels)),
            beta: Param::new(Array1::zeros(channels)),
            running_mean: Array1::zeros(channels),
            running_var: Array1::ones(channels),
            eps: Self::DEFAULT_EPS,
            momentum: Self::DEFAULT_MOMENTUM,
            cache: None,
        }
    }

    pub fn channels(&self) -> usize {
        self.running_mean.len()
    }

    fn gamma1(&self) -> ArrayView1<'_, f64> {
        self.gamma
            .value
            .view()
            .into_dimensionality::<Ix1>()
            .expect("gamma is 1-d")
    }

    fn beta1(&self) -> ArrayView1<'_, f64> {
        self.beta
            .value
            .view()
            .into_dimensionality::<Ix1>()
            .expect("beta is 1-d")
    }

    pub fn forward(&mut self, x: &Array3<f64>, mode: Mode) -> Result<Array3<f64>> {
        let (batch, channels, time) = x.dim();
        if channels != self.channels() {
            return Err(Error::shape(
                "batchnorm1d",
                format!("expected {} channels, got {channels}", self.channels()),
            ));
        }
        let gamma = self.gamma1().to_owned().insert_axis(Axis(1));
        let beta = self.beta1().to_owned().insert_axis(Axis(1));
        match mode {
            Mode::Train => {
                let n = batch * time;
                if n < 2 {
                    return Err(Error::shape(
                        "batchnorm1d",
                        "training needs more than one value per channel",
                    ));
                }
                let mean = x.mean_axis(Axis(2)).unwrap().mean_axis(Axis(0)).unwrap();
                let centered = x - &mean.view().insert_axis(Axis(1));
                let var = centered.mapv(|v| v * v).sum_axis(Axis(2)).sum_axis(Axis(0)) / n as f64;
                let inv_std = var.mapv(|v| 1.0 / (v + self.eps).sqrt());
                let xhat = centered * inv_std.view().insert_axis(Axis(1));
                let y = &xhat * &gamma + &beta;
                ensure_finite(&y, "batchnorm1d")?;

                let unbiased = &var * (n as f64 / (n as f64 - 1.0));
                self.running_mean =
                    &self.running_mean * (1.0 - self.momentum) + &mean * self.momentum;
                self.running_var =
                    &self.running_var * (1.0 - self.momentum) + &unbiased * self.momentum;
                self.cache = Some(BnCache { xhat, inv_std });
                Ok(y)
            }
            Mode::Eval => {
                let inv_std = self.running_var.mapv(|v| 1.0 / (v + self.eps).sqrt());
                let scale = (&inv_std * &self.gamma1()).insert_axis(Axis(1));
                let shift =
                    (&beta - &(&self.running_mean.view().insert_axis(Axis(1)) * &scale)).to_owned();
                let y = x * &scale + &shift;
                ensure_finite(&y, "batchnorm1d")?;
                self.cache = None;
                Ok(y)
            }
        }
    }

    pub fn backward(&mut self, dy: &Array3<f64>) -> Result<Array3<f64>> {
        let cache = self
            .cache
            .as_ref()
            .ok_or(Error::BackwardBeforeForward("batchnorm1d"))?;
        if dy.dim() != cache.xhat.dim() {
            return Err(Error::shape(
                "batchnorm1d backward",
                format!("gradient {:?}", dy.dim()),
            ));
        }
        let (batch, _, time) = dy.dim();
        let n = (batch * time) as f64;
        let dbeta = dy.sum_axis(Axis(2)).sum_axis(Axis(0));
        let dgamma = (dy * &cache.xhat).sum_axis(Axis(2)).sum_axis(Axis(0));

        let gamma = self.gamma1().to_owned();
        let dxhat = dy * &gamma.view().insert_axis(Axis(1));
        let sum_dxhat = dxhat.sum_axis(Axis(2)).sum_axis(Axis(0));
        let sum_dxhat_xhat = (&dxhat * &cache.xhat).sum_axis(Axis(2)).sum_axis(Axis(0));
        let dx = (&dxhat * n
            - sum_dxhat.view().insert_axis(Axis(1))
            - &cache.xhat * &sum_dxhat_xhat.view().insert_axis(Axis(1)))
            * (&cache.inv_std / n).view().insert_axis(Axis(1));

        self.gamma.grad += &dgamma.into_dyn();
        self.beta.grad += &dbeta.into_dyn();
        Ok(dx)
    }

    /// Evaluation-mode affine map as `(scale, shift)` per channel.
    pub fn eval_affine(&self) -> (Array1<f64>, Array1<f64>) {
        let inv_std = self.running_var.mapv(|v| 1.0 / (v + self.eps).sqrt());
        let scale = &inv_std * &self.gamma1();
        let shift = &self.beta1() - &(&self.running_mean * &scale);
        (scale, shift)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array};

    fn bn_with_eps(channels: usize, eps: f64) -> BatchNorm1d {
        let mut bn = BatchNorm1d::new(channels);
        bn.eps = eps;
        bn
    }

    #[test]
    fn two_values_normalize_to_plus_minus_one() {
        let mut bn = bn_with_eps(1, 0.0);
        let y = bn.forward(&array![[[1.0, 3.0]]], Mode::Train).unwrap();
        assert_eq!(y, array![[[-1.0, 1.0]]]);
    }

    #[test]
    fn affine_parameters_apply_after_normalization() {
        let mut bn = bn_with_eps(1, 0.0);
        bn.gamma.value.fill(2.0);
        bn.beta.value.fill(5.0);
        let y = bn.forward(&array![[[-1.0, 1.0]]], Mode::Train).unwrap();
        assert_eq!(y, array![[[3.0, 7.0]]]);
    }

    #[test]
    fn standardized_input_passes_through() {
        let mut bn = BatchNorm1d::new(1);
        let x = array![[[-1.0, 1.0, -1.0, 1.0]]];
        let y = bn.forward(&x, Mode::Train).unwrap();
        assert!(y.iter().zip(x.iter()).all(|(a, b)| (a - b).abs() < 1e-5));
    }

    #[test]
    fn constant_channel_is_guarded_by_eps() {
        let mut bn = BatchNorm1d::new(2);
        let x = Array::from_shape_fn((2, 2, 4), |(_, c, t)| if c == 0 { 3.0 } else { t as f64 });
        let y = bn.forward(&x, Mode::Train).unwrap();
        assert!(y.slice(ndarray::s![.., 0, ..]).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_value_per_channel_is_rejected_in_training() {
        let mut bn = BatchNorm1d::new(1);
        assert!(bn.forward(&array![[[4.0]]], Mode::Train).is_err());
        assert!(bn.forward(&array![[[4.0]]], Mode::Eval).is_ok());
    }

    #[test]
    fn training_output_is_zero_mean_unit_variance() {
        let mut bn = BatchNorm1d::new(3);
        let x = Array::from_shape_fn((5, 3, 17), |(b, c, t)| {
            ((b * 31 + c * 7 + t * 13) % 23) as f64 * (c + 1) as f64
        });
        let y = bn.forward(&x, Mode::Train).unwrap();
        for c in 0..3 {
            let ch = y.slice(ndarray::s![.., c, ..]);
            let mean = ch.mean().unwrap();
            let var = ch.mapv(|v| (v - mean) * (v - mean)).mean().unwrap();
            assert!(mean.abs() < 1e-6);
            assert!((var - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn running_statistics_track_batch_statistics() {
        let mut bn = BatchNorm1d::new(1);
        let x = array![[[2.0, 4.0]]];
        for _ in 0..200 {
            bn.forward(&x, Mode::Train).unwrap();
        }
        assert!((bn.running_mean[0] - 3.0).abs() < 1e-6);
        // unbiased variance of {2, 4}
        assert!((bn.running_var[0] - 2.0).abs() < 1e-6);
        let y = bn.forward(&array![[[3.0]]], Mode::Eval).unwrap();
        assert!(y[[0, 0, 0]].abs() < 1e-6);
    }
}
