use ndarray::{Array, Dimension, Zip};

use crate::error::{Error, Result};

/// Mean squared error over all elements and its gradient w.r.t. `prediction`.
pub fn mse<D: Dimension>(
    prediction: &Array<f64, D>,
    target: &Array<f64, D>,
) -> Result<(f64, Array<f64, D>)> {
    if prediction.shape() != target.shape() {
        return Err(Error::shape(
            "mse",
            format!(
                "prediction {:?} vs target {:?}",
                prediction.shape(),
                target.shape()
            ),
        ));
    }
    if prediction.is_empty() {
        return Err(Error::Empty("mse input"));
    }
    let n = prediction.len() as f64;
    let diff = prediction - target;
    let loss = diff.iter().map(|d| d * d).sum::<f64>() / n;
    let grad = Zip::from(&diff).map_collect(|&d| 2.0 * d / n);
    Ok((loss, grad))
}
