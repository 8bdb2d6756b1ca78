use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Ix1, Ix2};

use super::{ensure_finite, kaiming_uniform, Mode, Param};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Dense layer `y = x Wᵀ + b` over `(batch, in)` inputs; weight is `(out, in)`.
pub struct Linear {
    pub weight: Param,
    pub bias: Param,
    input: Option<Array2<f64>>,
}

impl Linear {
    pub fn new(in_dim: usize, out_dim: usize, rng: &mut Rng) -> Self {
        Linear {
            weight: Param::new(kaiming_uniform(&[out_dim, in_dim], in_dim, rng)),
            bias: Param::new(kaiming_uniform(&[out_dim], in_dim, rng)),
            input: None,
        }
    }

    pub fn from_weights(weight: Array2<f64>, bias: Array1<f64>) -> Result<Self> {
        if weight.nrows() != bias.len() {
            return Err(Error::shape(
                "linear",
                format!("weight {:?} vs bias {}", weight.dim(), bias.len()),
            ));
        }
        Ok(Linear {
            weight: Param::new(weight.as_standard_layout().to_owned()),
            bias: Param::new(bias),
            input: None,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.weight.value.shape()[1]
    }

    pub fn out_dim(&self) -> usize {
        self.weight.value.shape()[0]
    }

    fn weight2(&self) -> ArrayView2<'_, f64> {
        self.weight
            .value
            .view()
            .into_dimensionality::<Ix2>()
            .expect("linear weight is 2-d")
    }

    fn bias1(&self) -> ArrayView1<'_, f64> {
        self.bias
            .value
            .view()
            .into_dimensionality::<Ix1>()
            .expect("linear bias is 1-d")
    }

    pub fn forward(&mut self, x: &Array2<f64>, mode: Mode) -> Result<Array2<f64>> {
        if x.ncols() != self.in_dim() {
            return Err(Error::shape(
                "linear",
                format!("expected {} inputs, got {}", self.in_dim(), x.ncols()),
            ));
        }
        let y = x.dot(&self.weight2().t()) + self.bias1();
        ensure_finite(&y, "linear")?;
        self.input = (mode == Mode::Train).then(|| x.clone());
        Ok(y)
    }

    pub fn backward(&mut self, dy: &Array2<f64>) -> Result<Array2<f64>> {
        let x = self
            .input
            .as_ref()
            .ok_or(Error::BackwardBeforeForward("linear"))?;
        if dy.dim() != (x.nrows(), self.out_dim()) {
            return Err(Error::shape(
                "linear backward",
                format!("gradient {:?}", dy.dim()),
            ));
        }
        let dw = dy.t().dot(x);
        self.weight.grad += &dw.into_dyn();
        self.bias.grad += &dy.sum_axis(Axis(0)).into_dyn();
        Ok(dy.dot(&self.weight2()))
    }
}
