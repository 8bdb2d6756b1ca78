mod common;

use common::gradcheck::{self, relative_error, LayerCheck, STEP, TOLERANCE};
use ndarray::{Array2, Array3};
use rand::Rng as _;
use weld_anomaly::audio_ae::{AudioAeConfig, AudioAutoencoder};
use weld_anomaly::nn::Mode;
use weld_anomaly::rng;
use weld_anomaly::video::{VideoAeConfig, VideoAutoencoder};

fn assert_passes(check: LayerCheck) {
    assert_eq!(check.instances, gradcheck::INSTANCES);
    assert!(
        check.passed(),
        "{}: worst relative error {:.3e} over {} instances",
        check.layer,
        check.worst,
        check.instances
    );
}

#[test]
fn linear_gradients() {
    assert_passes(gradcheck::linear());
}

#[test]
fn conv1d_gradients() {
    assert_passes(gradcheck::conv1d());
}

#[test]
fn conv_transpose1d_gradients() {
    assert_passes(gradcheck::conv_transpose1d());
}

#[test]
fn batchnorm_gradients() {
    assert_passes(gradcheck::batchnorm1d());
}

#[test]
fn rectifier_gradients() {
    assert_passes(gradcheck::leaky_relu());
    assert_passes(gradcheck::prelu());
    assert_passes(gradcheck::relu());
}

#[test]
fn dropout_gradients() {
    assert_passes(gradcheck::dropout());
}

#[test]
fn mse_gradient() {
    assert_passes(gradcheck::mse_loss());
}

#[test]
fn relative_error_edge_cases() {
    assert_eq!(relative_error(&[0.0, 0.0], &[0.0, 0.0]), 0.0);
    assert_eq!(relative_error(&[1.0], &[-1.0]), 1.0);
    assert!(relative_error(&[1.0, 2.0], &[1.0, 2.0 + 1e-9]) < 1e-9);
}

/// Whole-network check on a tiny audio autoencoder: every parameter tensor's
/// gradient matches finite differences.
#[test]
fn audio_autoencoder_end_to_end_gradient() {
    let mut rng = rng::seeded(31);
    let mut model = AudioAutoencoder::new(AudioAeConfig::new(5, 4, 2), &mut rng).unwrap();
    let x = Array3::from_shape_simple_fn((2, 5, 13), || rng.random_range(-1.0..1.0));
    // a random contraction keeps every gradient well above finite-difference round-off
    let r = Array3::from_shape_simple_fn((2, 5, 13), || rng.random_range(-1.0..1.0));
    let loss = |m: &mut AudioAutoencoder| (m.forward(&x, Mode::Train).unwrap() * &r).sum();
    model.zero_grad();
    model.forward(&x, Mode::Train).unwrap();
    model.backward(&r).unwrap();
    let analytic: Vec<Vec<f64>> = model
        .params_mut()
        .iter()
        .map(|p| p.grad.iter().copied().collect())
        .collect();
    for (j, grad) in analytic.iter().enumerate() {
        let numeric: Vec<f64> = (0..grad.len())
            .map(|e| {
                let orig = model.params_mut()[j].value.as_slice_memory_order().unwrap()[e];
                model.params_mut()[j]
                    .value
                    .as_slice_memory_order_mut()
                    .unwrap()[e] = orig + STEP;
                let plus = loss(&mut model);
                model.params_mut()[j]
                    .value
                    .as_slice_memory_order_mut()
                    .unwrap()[e] = orig - STEP;
                let minus = loss(&mut model);
                model.params_mut()[j]
                    .value
                    .as_slice_memory_order_mut()
                    .unwrap()[e] = orig;
                (plus - minus) / (2.0 * STEP)
            })
            .collect();
        let err = relative_error(grad, &numeric);
        assert!(
            err < TOLERANCE,
            "parameter tensor {j}: relative error {err:.3e}"
        );
    }
}

#[test]
fn video_autoencoder_end_to_end_gradient() {
    let mut rng = rng::seeded(32);
    let config = VideoAeConfig {
        dims: vec![6, 5, 3, 5, 6],
        dropout_p: 0.3,
        dropout_after: vec![0, 2],
    };
    let mut model = VideoAutoencoder::new(config, &mut rng).unwrap();
    let x = Array2::from_shape_simple_fn((3, 6), || rng.random_range(-1.0..1.0));
    let r = Array2::from_shape_simple_fn((3, 6), || rng.random_range(-1.0..1.0));
    let loss = |m: &mut VideoAutoencoder| {
        (m.forward(&x, Mode::Train, &mut rng::seeded(5)).unwrap() * &r).sum()
    };
    model.zero_grad();
    model.forward(&x, Mode::Train, &mut rng::seeded(5)).unwrap();
    model.backward(&r).unwrap();
    let analytic: Vec<Vec<f64>> = model
        .params_mut()
        .iter()
        .map(|p| p.grad.iter().copied().collect())
        .collect();
    for (j, grad) in analytic.iter().enumerate() {
        let numeric: Vec<f64> = (0..grad.len())
            .map(|e| {
                let orig = model.params_mut()[j].value.as_slice_memory_order().unwrap()[e];
                model.params_mut()[j]
                    .value
                    .as_slice_memory_order_mut()
                    .unwrap()[e] = orig + STEP;
                let plus = loss(&mut model);
                model.params_mut()[j]
                    .value
                    .as_slice_memory_order_mut()
                    .unwrap()[e] = orig - STEP;
                let minus = loss(&mut model);
                model.params_mut()[j]
                    .value
                    .as_slice_memory_order_mut()
                    .unwrap()[e] = orig;
                (plus - minus) / (2.0 * STEP)
            })
            .collect();
        let err = relative_error(grad, &numeric);
        assert!(
            err < TOLERANCE,
            "parameter tensor {j}: relative error {err:.3e}"
        );
    }
}
