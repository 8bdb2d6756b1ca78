use ndarray::{Array, Array1, Dimension, Zip};

use super::{Mode, Param};
use crate::error::{Error, Result};

pub fn leaky_relu(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        slope * x
    }
}

pub fn prelu(x: f64, slope: f64) -> f64 {
    leaky_relu(x, slope)
}

pub fn relu(x: f64) -> f64 {
    x.max(0.0)
}

pub struct LeakyRelu<D: Dimension> {
    pub slope: f64,
    input: Option<Array<f64, D>>,
}

impl<D: Dimension> LeakyRelu<D> {
    pub const DEFAULT_SLOPE: f64 = 0.01;

    pub fn new(slope: f64) -> Self {
        LeakyRelu { slope, input: None }
    }

    pub fn forward(&mut self, x: &Array<f64, D>, mode: Mode) -> Array<f64, D> {
        let slope = self.slope;
        let y = x.mapv(|v| leaky_relu(v, slope));
        self.input = (mode == Mode::Train).then(|| x.clone());
        y
    }

    pub fn backward(&mut self, dy: &Array<f64, D>) -> Result<Array<f64, D>> {
        let x = self
            .input
            .as_ref()
            .ok_or(Error::BackwardBeforeForward("leaky_relu"))?;
        let slope = self.slope;
        Ok(Zip::from(x)
            .and(dy)
            .map_collect(|&x, &g| if x > 0.0 { g } else { slope * g }))
    }
}

/// Parametric ReLU with one learnable slope shared by all channels.
pub struct Prelu<D: Dimension> {
    pub slope: Param,
    input: Option<Array<f64, D>>,
}

impl<D: Dimension> Prelu<D> {
    pub const DEFAULT_SLOPE: f64 = 0.25;

    pub fn new(initial_slope: f64) -> Self {
        Prelu {
            slope: Param::new(Array1::from_elem(1, initial_slope)),
            input: None,
        }
    }

    pub fn slope_value(&self) -> f64 {
        self.slope.value[[0]]
    }

    pub fn forward(&mut self, x: &Array<f64, D>, mode: Mode) -> Array<f64, D> {
        let a = self.slope_value();
        let y = x.mapv(|v| prelu(v, a));
        self.input = (mode == Mode::Train).then(|| x.clone());
        y
    }

    pub fn backward(&mut self, dy: &Array<f64, D>) -> Result<Array<f64, D>> {
        let x = self
            .input
            .as_ref()
            .ok_or(Error::BackwardBeforeForward("prelu"))?;
        let a = self.slope_value();
        let mut da = 0.0;
        Zip::from(x).and(dy).for_each(|&x, &g| {
            if x <= 0.0 {
                da += g * x;
            }
        });
        self.slope.grad[[0]] += da;
        Ok(Zip::from(x)
            .and(dy)
            .map_collect(|&x, &g| if x > 0.0 { g } else { a * g }))
    }
}

pub struct Relu<D: Dimension> {
    input: Option<Array<f64, D>>,
}

impl<D: Dimension> Default for Relu<D> {
    fn default() -> Self {
        Relu { input: None }
    }
}

impl<D: Dimension> Relu<D> {
    pub fn forward(&mut self, x: &Array<f64, D>, mode: Mode) -> Array<f64, D> {
        let y = x.mapv(relu);
        self.input = (mode == Mode::Train).then(|| x.clone());
        y
    }

    pub fn backward(&mut self, dy: &Array<f64, D>) -> Result<Array<f64, D>> {
        let x = self
            .input
            .as_ref()
            .ok_or(Error::BackwardBeforeForward("relu"))?;
        Ok(Zip::from(x)
            .and(dy)
            .map_collect(|&x, &g| if x > 0.0 { g } else { 0.0 }))
    }
}
