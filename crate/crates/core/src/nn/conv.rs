use ndarray::{s, Array1, Array2, Array3, ArrayView1, ArrayView2, ArrayView3, Axis, Ix1, Ix3};

use super::{ensure_finite, kaiming_uniform, Mode, Param};
use crate::error::{Error, Result};
use crate::rng::Rng;

struct ConvCache {
    // im2col matrix (in * k, batch * t_out) for Conv1d, or the flattened
    // input (in, batch * t_in) for the transpose.
    cols: Array2<f64>,
    batch: usize,
    t_in: usize,
}

/// Valid (unpadded) 1-D convolution with stride 1.
///
/// Weight layout is `(out, in, kernel)`; an input of length `T` produces
/// `T - kernel + 1` frames.
pub struct Conv1d {
    pub weight: Param,
    pub bias: Param,
    cache: Option<ConvCache>,
}

impl Conv1d {
    pub fn new(in_channels: usize, out_channels: usize, kernel: usize, rng: &mut Rng) -> Self {
        let fan_in = in_channels * kernel;
        let weight = kaiming_uniform(&[out_channels, in_channels, kernel], fan_in, rng);
        let bias = kaiming_uniform(&[out_channels], fan_in, rng);
        Conv1d {
            weight: Param::new(weight),
            bias: Param::new(bias),
            cache: None,
        }
    }

    pub fn from_weights(weight: Array3<f64>, bias: Array1<f64>) -> Result<Self> {
        if weight.dim().0 != bias.len() {
            return Err(Error::shape(
                "conv1d",
                format!("weight {:?} vs bias {}", weight.dim(), bias.len()),
            ));
        }
        Ok(Conv1d {
            weight: Param::new(weight.as_standard_layout().to_owned()),
            bias: Param::new(bias),
            cache: None,
        })
    }

    pub fn in_channels(&self) -> usize {
        self.weight.value.shape()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.weight.value.shape()[0]
    }

    pub fn kernel_size(&self) -> usize {
        self.weight.value.shape()[2]
    }

    fn weight3(&self) -> ArrayView3<'_, f64> {
        self.weight
            .value
            .view()
            .into_dimensionality::<Ix3>()
            .expect("conv weight is 3-d")
    }

    fn bias1(&self) -> ArrayView1<'_, f64> {
        self.bias
            .value
            .view()
            .into_dimensionality::<Ix1>()
            .expect("conv bias is 1-d")
    }

    pub fn forward(&mut self, x: &Array3<f64>, mode: Mode) -> Result<Array3<f64>> {
        let (batch, channels, t_in) = x.dim();
        let (c_out, c_in, k) = self.weight3().dim();
        if channels != c_in {
            return Err(Error::shape(
                "conv1d",
                format!("expected {c_in} input channels, got {channels}"),
            ));
        }
        if t_in < k {
            return Err(Error::shape(
                "conv1d",
                format!("time length {t_in} shorter than kernel {k}"),
            ));
        }
        let t_out = t_in - k + 1;
        let mut cols = Array2::<f64>::zeros((c_in * k, batch * t_out));
        for b in 0..batch {
            for i in 0..c_in {
                for tap in 0..k {
                    cols.slice_mut(s![i * k + tap, b * t_out..(b + 1) * t_out])
                        .assign(&x.slice(s![b, i, tap..tap + t_out]));
                }
            }
        }
        let w2 = self
            .weight3()
            .into_shape_with_order((c_out, c_in * k))
            .expect("contiguous weight");
        let y2 = w2.dot(&cols);
        let mut y = Array3::<f64>::zeros((batch, c_out, t_out));
        for b in 0..batch {
            y.slice_mut(s![b, .., ..])
                .assign(&y2.slice(s![.., b * t_out..(b + 1) * t_out]));
        }
        y += &self.bias1().insert_axis(Axis(1));
        ensure_finite(&y, "conv1d")?;
        self.cache = (mode == Mode::Train).then_some(ConvCache { cols, batch, t_in });
        Ok(y)
    }

    pub fn backward(&mut self, dy: &Array3<f64>) -> Result<Array3<f64>> {
        let cache = self
            .cache
            .as_ref()
            .ok_or(Error::BackwardBeforeForward("conv1d"))?;
        let (c_out, c_in, k) = self.weight3().dim();
        let (batch, t_in) = (cache.batch, cache.t_in);
        let t_out = t_in - k + 1;
        if dy.dim() != (batch, c_out, t_out) {
            return Err(Error::shape(
                "conv1d backward",
                format!("gradient {:?}", dy.dim()),
            ));
        }
        let mut dy2 = Array2::<f64>::zeros((c_out, batch * t_out));
        for b in 0..batch {
            dy2.slice_mut(s![.., b * t_out..(b + 1) * t_out])
                .assign(&dy.slice(s![b, .., ..]));
        }
        let dw = dy2.dot(&cache.cols.t());
        let dcols = {
            let w2 = self
                .weight3()
                .into_shape_with_order((c_out, c_in * k))
                .expect("contiguous weight");
            w2.t().dot(&dy2)
        };
        // matmul may hand back a column-major result
        self.weight.grad += &dw
            .as_standard_layout()
            .into_shape_with_order((c_out, c_in, k))
            .expect("reshape")
            .into_dyn();
        self.bias.grad += &dy2.sum_axis(Axis(1)).into_dyn();

        let mut dx = Array3::<f64>::zeros((batch, c_in, t_in));
        for b in 0..batch {
            for i in 0..c_in {
                for tap in 0..k {
                    let mut dst = dx.slice_mut(s![b, i, tap..tap + t_out]);
                    dst += &dcols.slice(s![i * k + tap, b * t_out..(b + 1) * t_out]);
                }
            }
        }
        Ok(dx)
    }

    /// Per-tap `(out, in)` matrices for frame-at-a-time inference.
    pub fn frame_taps(&self) -> Vec<Array2<f64>> {
        let w = self.weight3();
        (0..w.dim().2)
            .map(|tap| w.slice(s![.., .., tap]).to_owned())
            .collect()
    }

    pub fn bias_vector(&self) -> Array1<f64> {
        self.bias1().to_owned()
    }
}

/// Transposed 1-D convolution with stride 1 and no padding.
///
/// Weight layout is `(in, out, kernel)`; an input of length `T` produces
/// `T + kernel - 1` frames, undoing the length change of [`Conv1d`].
pub struct ConvTranspose1d {
    pub weight: Param,
    pub bias: Param,
    cache: Option<ConvCache>,
}

impl ConvTranspose1d {
    pub fn new(in_channels: usize, out_channels: usize, kernel: usize, rng: &mut Rng) -> Self {
        let fan_in = out_channels * kernel;
        let weight = kaiming_uniform(&[in_channels, out_channels, kernel], fan_in, rng);
        let bias = kaiming_uniform(&[out_channels], fan_in, rng);
        ConvTranspose1d {
            weight: Param::new(weight),
            bias: Param::new(bias),
            cache: None,
        }
    }

    pub fn from_weights(weight: Array3<f64>, bias: Array1<f64>) -> Result<Self> {
        if weight.dim().1 != bias.len() {
            return Err(Error::shape(
                "conv_transpose1d",
                format!("weight {:?} vs bias {}", weight.dim(), bias.len()),
            ));
        }
        Ok(ConvTranspose1d {
            weight: Param::new(weight.as_standard_layout().to_owned()),
            bias: Param::new(bias),
            cache: None,
        })
    }

    pub fn in_channels(&self) -> usize {
        self.weight.value.shape()[0]
    }

    pub fn out_channels(&self) -> usize {
        self.weight.value.shape()[1]
    }

    fn weight3(&self) -> ArrayView3<'_, f64> {
        self.weight
            .value
            .view()
            .into_dimensionality::<Ix3>()
            .expect("conv weight is 3-d")
    }

    fn bias1(&self) -> ArrayView1<'_, f64> {
        self.bias
            .value
            .view()
            .into_dimensionality::<Ix1>()
            .expect("conv bias is 1-d")
    }

    pub fn forward(&mut self, x: &Array3<f64>, mode: Mode) -> Result<Array3<f64>> {
        let (batch, channels, t_in) = x.dim();
        let (c_in, c_out, k) = self.weight3().dim();
        if channels != c_in {
            return Err(Error::shape(
                "conv_transpose1d",
                format!("expected {c_in} input channels, got {channels}"),
            ));
        }
        if t_in == 0 {
            return Err(Error::shape("conv_transpose1d", "empty time axis"));
        }
        let t_out = t_in + k - 1;
        let mut x2 = Array2::<f64>::zeros((c_in, batch * t_in));
        for b in 0..batch {
            x2.slice_mut(s![.., b * t_in..(b + 1) * t_in])
                .assign(&x.slice(s![b, .., ..]));
        }
        let w2 = self
            .weight3()
            .into_shape_with_order((c_in, c_out * k))
            .expect("contiguous weight");
        let z = w2.t().dot(&x2);
        let mut y = Array3::<f64>::zeros((batch, c_out, t_out));
        for b in 0..batch {
            for o in 0..c_out {
                for tap in 0..k {
                    let mut dst = y.slice_mut(s![b, o, tap..tap + t_in]);
                    dst += &z.slice(s![o * k + tap, b * t_in..(b + 1) * t_in]);
                }
            }
        }
        y += &self.bias1().insert_axis(Axis(1));
        ensure_finite(&y, "conv_transpose1d")?;
        self.cache = (mode == Mode::Train).then_some(ConvCache {
            cols: x2,
            batch,
            t_in,
        });
        Ok(y)
    }

    pub fn backward(&mut self, dy: &Array3<f64>) -> Result<Array3<f64>> {
        let cache = self
            .cache
            .as_ref()
            .ok_or(Error::BackwardBeforeForward("conv_transpose1d"))?;
        let (c_in, c_out, k) = self.weight3().dim();
        let (batch, t_in) = (cache.batch, cache.t_in);
        let t_out = t_in + k - 1;
        if dy.dim() != (batch, c_out, t_out) {
            return Err(Error::shape(
                "conv_transpose1d backward",
                format!("gradient {:?}", dy.dim()),
            ));
        }
        let mut dz = Array2::<f64>::zeros((c_out * k, batch * t_in));
        for b in 0..batch {
            for o in 0..c_out {
                for tap in 0..k {
                    dz.slice_mut(s![o * k + tap, b * t_in..(b + 1) * t_in])
                        .assign(&dy.slice(s![b, o, tap..tap + t_in]));
                }
            }
        }
        let dw = cache.cols.dot(&dz.t());
        let dx2 = {
            let w2 = self
                .weight3()
                .into_shape_with_order((c_in, c_out * k))
                .expect("contiguous weight");
            w2.dot(&dz)
        };
        self.weight.grad += &dw
            .as_standard_layout()
            .into_shape_with_order((c_in, c_out, k))
            .expect("reshape")
            .into_dyn();
        self.bias.grad += &dy.sum_axis(Axis(2)).sum_axis(Axis(0)).into_dyn();

        let mut dx = Array3::<f64>::zeros((batch, c_in, t_in));
        for b in 0..batch {
            dx.slice_mut(s![b, .., ..])
                .assign(&dx2.slice(s![.., b * t_in..(b + 1) * t_in]));
        }
        Ok(dx)
    }

    /// Per-tap `(out, in)` matrices: output frame `t` receives
    /// `taps[k] · x[t - k]`.
    pub fn frame_taps(&self) -> Vec<Array2<f64>> {
        let w = self.weight3();
        (0..w.dim().2)
            .map(|tap| w.slice(s![.., .., tap]).t().as_standard_layout().to_owned())
            .collect()
    }

    pub fn bias_vector(&self) -> Array1<f64> {
        self.bias1().to_owned()
    }
}

/// Single-sample valid convolution: `input` is `(channels, time)`, weight is
/// `(out, in, kernel)`.
pub fn conv1d(
    input: ArrayView2<f64>,
    weight: ArrayView3<f64>,
    bias: ArrayView1<f64>,
) -> Result<Array2<f64>> {
    let mut layer = Conv1d::from_weights(weight.to_owned(), bias.to_owned())?;
    let y = layer.forward(&input.to_owned().insert_axis(Axis(0)), Mode::Eval)?;
    Ok(y.index_axis_move(Axis(0), 0))
}

/// Single-sample transposed convolution: weight is `(in, out, kernel)`.
pub fn conv_transpose1d(
    input: ArrayView2<f64>,
    weight: ArrayView3<f64>,
    bias: ArrayView1<f64>,
) -> Result<Array2<f64>> {
    let mut layer = ConvTranspose1d::from_weights(weight.to_owned(), bias.to_owned())?;
    let y = layer.forward(&input.to_owned().insert_axis(Axis(0)), Mode::Eval)?;
    Ok(y.index_axis_move(Axis(0), 0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr1, arr2, Array};

    // Direct sliding-window sum, independent of the im2col path.
    fn naive_conv(x: &Array2<f64>, w: &Array3<f64>, b: &Array1<f64>) -> Array2<f64> {
        let (c_out, c_in, k) = w.dim();
        let t_out = x.ncols() - k + 1;
        Array2::from_shape_fn((c_out, t_out), |(o, t)| {
            let mut acc = b[o];
            for i in 0..c_in {
                for tap in 0..k {
                    acc += w[[o, i, tap]] * x[[i, t + tap]];
                }
            }
            acc
        })
    }

    // Scatter-add definition of the transpose.
    fn naive_conv_t(x: &Array2<f64>, w: &Array3<f64>, b: &Array1<f64>) -> Array2<f64> {
        let (c_in, c_out, k) = w.dim();
        let t_in = x.ncols();
        let mut y = Array2::from_shape_fn((c_out, t_in + k - 1), |(o, _)| b[o]);
        for i in 0..c_in {
            for t in 0..t_in {
                for o in 0..c_out {
                    for tap in 0..k {
                        y[[o, t + tap]] += w[[i, o, tap]] * x[[i, t]];
                    }
                }
            }
        }
        y
    }

    #[test]
    fn box_kernel_sums_windows() {
        let x = arr2(&[[1.0, 2.0, 3.0, 4.0, 5.0]]);
        let w = Array3::from_elem((1, 1, 3), 1.0);
        let y = conv1d(x.view(), w.view(), arr1(&[0.0]).view()).unwrap();
        assert_eq!(y, arr2(&[[6.0, 9.0, 12.0]]));
    }

    #[test]
    fn zero_input_gives_zero_output() {
        let mut rng = crate::rng::seeded(1);
        let conv = Conv1d::new(2, 3, 3, &mut rng);
        let w = conv
            .weight
            .value
            .clone()
            .into_dimensionality::<Ix3>()
            .unwrap();
        let y = conv1d(
            Array2::zeros((2, 9)).view(),
            w.view(),
            Array1::zeros(3).view(),
        )
        .unwrap();
        assert_eq!(y.dim(), (3, 7));
        assert!(y.iter().all(|&v| v == 0.0));

        let wt = Array3::from_elem((2, 3, 3), 0.7);
        let y = conv_transpose1d(
            Array2::zeros((2, 4)).view(),
            wt.view(),
            Array1::zeros(3).view(),
        )
        .unwrap();
        assert_eq!(y.dim(), (3, 6));
        assert!(y.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn transpose_of_single_frame_scatters_kernel() {
        let x = arr2(&[[1.0]]);
        let w = Array3::from_elem((1, 1, 3), 1.0);
        let y = conv_transpose1d(x.view(), w.view(), arr1(&[0.0]).view()).unwrap();
        assert_eq!(y, arr2(&[[1.0, 1.0, 1.0]]));
    }

    #[test]
    fn short_input_is_rejected() {
        let w = Array3::from_elem((1, 1, 3), 1.0);
        let err = conv1d(arr2(&[[1.0, 2.0]]).view(), w.view(), arr1(&[0.0]).view()).unwrap_err();
        assert!(matches!(err, Error::Shape { .. }));
    }

    #[test]
    fn channel_mismatch_is_rejected() {
        let w = Array3::from_elem((1, 2, 3), 1.0);
        assert!(conv1d(Array2::zeros((3, 5)).view(), w.view(), arr1(&[0.0]).view()).is_err());
        let wt = Array3::from_elem((2, 1, 3), 1.0);
        assert!(
            conv_transpose1d(Array2::zeros((3, 5)).view(), wt.view(), arr1(&[0.0]).view()).is_err()
        );
        assert!(Conv1d::from_weights(Array3::zeros((2, 1, 3)), Array1::zeros(3)).is_err());
    }

    #[test]
    fn gemm_paths_match_naive_definitions() {
        let mut rng = crate::rng::seeded(3);
        let x = Array::from_shape_fn((4, 9), |(i, t)| ((i * 7 + t * 3) % 11) as f64 - 5.0);
        let conv = Conv1d::new(4, 5, 3, &mut rng);
        let w = conv
            .weight
            .value
            .clone()
            .into_dimensionality::<Ix3>()
            .unwrap();
        let b = conv.bias_vector();
        let y = conv1d(x.view(), w.view(), b.view()).unwrap();
        let expected = naive_conv(&x, &w, &b);
        assert!(y
            .iter()
            .zip(expected.iter())
            .all(|(a, e)| (a - e).abs() < 1e-12));

        let convt = ConvTranspose1d::new(4, 2, 3, &mut rng);
        let wt = convt
            .weight
            .value
            .clone()
            .into_dimensionality::<Ix3>()
            .unwrap();
        let bt = convt.bias_vector();
        let y = conv_transpose1d(x.view(), wt.view(), bt.view()).unwrap();
        let expected = naive_conv_t(&x, &wt, &bt);
        assert_eq!(y.dim(), (2, 11));
        assert!(y
            .iter()
            .zip(expected.iter())
            .all(|(a, e)| (a - e).abs() < 1e-12));
    }

    #[test]
    fn five_convs_then_five_transposes_restore_length() {
        let mut rng = crate::rng::seeded(5);
        for t in [11usize, 12, 32] {
            let mut x = Array3::<f64>::ones((1, 2, t));
            for _ in 0..5 {
                x = Conv1d::new(2, 2, 3, &mut rng)
                    .forward(&x, Mode::Eval)
                    .unwrap();
            }
            assert_eq!(x.dim().2, t - 10);
            for _ in 0..5 {
                x = ConvTranspose1d::new(2, 2, 3, &mut rng)
                    .forward(&x, Mode::Eval)
                    .unwrap();
            }
            assert_eq!(x.dim().2, t);
        }
    }

    #[test]
    fn backward_requires_training_forward() {
        let mut rng = crate::rng::seeded(1);
        let mut conv = Conv1d::new(1, 1, 3, &mut rng);
        let dy = Array3::zeros((1, 1, 3));
        assert!(matches!(
            conv.backward(&dy),
            Err(Error::BackwardBeforeForward(_))
        ));
        conv.forward(&Array3::ones((1, 1, 5)), Mode::Eval).unwrap();
        assert!(conv.backward(&dy).is_err());
    }
}
