use ndarray::{Array, Dimension};
use rand::Rng as _;

use super::Mode;
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Inverted dropout: in training each unit is zeroed with probability `p` and
/// survivors are scaled by `1 / (1 - p)`. Evaluation mode is the identity.
pub struct Dropout<D: Dimension> {
    p: f64,
    mask: Option<Array<f64, D>>,
}

impl<D: Dimension> Dropout<D> {
    pub fn new(p: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::config(format!(
                "dropout probability {p} outside [0, 1)"
            )));
        }
        Ok(Dropout { p, mask: None })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn forward(&mut self, x: &Array<f64, D>, mode: Mode, rng: &mut Rng) -> Array<f64, D> {
        match mode {
            Mode::Eval => {
                self.mask = None;
                x.clone()
            }
            Mode::Train => {
                let keep_scale = 1.0 / (1.0 - self.p);
                let p = self.p;
                let mask = x.map(|_| {
                    if rng.random::<f64>() < p {
                        0.0
                    } else {
                        keep_scale
                    }
                });
                let y = x * &mask;
                self.mask = Some(mask);
                y
            }
        }
    }

    /// Installs an explicit mask (entries `0` or `1/(1-p)`), for gradient checks.
    pub fn set_mask(&mut self, mask: Array<f64, D>) {
        self.mask = Some(mask);
    }

    pub fn backward(&mut self, dy: &Array<f64, D>) -> Result<Array<f64, D>> {
        let mask = self
            .mask
            .as_ref()
            .ok_or(Error::BackwardBeforeForward("dropout"))?;
        Ok(dy * mask)
    }
}
