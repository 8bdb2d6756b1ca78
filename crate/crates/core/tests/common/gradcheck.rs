//! Analytic vs central-difference gradient checks for every nn layer.
//!
//! Each check drives a layer with a random input `x`, contracts its output
//! with a random upstream tensor `r` into the scalar `L = sum(y * r)`, and
//! compares the backward pass against `(L(v + h) - L(v - h)) / 2h` for every
//! input element and every trainable parameter.

use ndarray::{Array, Array1, Array2, Array3, Dimension, Ix2, Ix3};
use rand::Rng as _;
use weld_anomaly::nn::{
    mse, BatchNorm1d, Conv1d, ConvTranspose1d, Dropout, LeakyRelu, Linear, Mode, Param, Prelu, Relu,
};
use weld_anomaly::rng::{self, Rng};

pub const STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;
pub const INSTANCES: usize = 50;

/// Worst relative error seen for one layer type.
#[derive(Debug, Clone)]
pub struct LayerCheck {
    pub layer: &'static str,
    pub instances: usize,
    pub worst: f64,
}

impl LayerCheck {
    pub fn passed(&self) -> bool {
        self.worst < TOLERANCE
    }
}

/// `|a - n| / (|a| + |n|)` over whole tensors; zero when both vanish.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let norm = |v: &mut dyn Iterator<Item = f64>| v.map(|x| x * x).sum::<f64>().sqrt();
    let diff = norm(&mut analytic.iter().zip(numeric).map(|(a, n)| a - n));
    let scale = norm(&mut analytic.iter().copied()) + norm(&mut numeric.iter().copied());
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

type Forward<L, D, E> = fn(&mut L, &Array<f64, D>) -> Array<f64, E>;
type Backward<L, D, E> = fn(&mut L, &Array<f64, E>) -> Array<f64, D>;
type Params<L> = fn(&mut L) -> Vec<&mut Param>;

fn contract<E: Dimension>(y: &Array<f64, E>, r: &Array<f64, E>) -> f64 {
    y.iter().zip(r).map(|(a, b)| a * b).sum()
}

/// Worst relative error over the input gradient and each parameter gradient.
pub fn check_layer<L, D: Dimension, E: Dimension>(
    layer: &mut L,
    x: &Array<f64, D>,
    r: &Array<f64, E>,
    forward: Forward<L, D, E>,
    backward: Backward<L, D, E>,
    params: Params<L>,
) -> f64 {
    for p in params(layer) {
        p.zero_grad();
    }
    forward(layer, x);
    let dx = backward(layer, r);
    let param_grads: Vec<Vec<f64>> = params(layer)
        .iter()
        .map(|p| p.grad.iter().copied().collect())
        .collect();

    let mut worst = 0.0f64;
    let mut xs = x.clone();
    let mut numeric = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = xs.as_slice_memory_order().unwrap()[i];
        xs.as_slice_memory_order_mut().unwrap()[i] = orig + STEP;
        let plus = contract(&forward(layer, &xs), r);
        xs.as_slice_memory_order_mut().unwrap()[i] = orig - STEP;
        let minus = contract(&forward(layer, &xs), r);
        xs.as_slice_memory_order_mut().unwrap()[i] = orig;
        numeric.push((plus - minus) / (2.0 * STEP));
    }
    // inputs are freshly built, so memory order is logical order
    let analytic: Vec<f64> = dx.iter().copied().collect();
    worst = worst.max(relative_error(&analytic, &numeric));

    for (j, grad) in param_grads.iter().enumerate() {
        let mut numeric = Vec::with_capacity(grad.len());
        for e in 0..grad.len() {
            let orig = params(layer)[j].value.as_slice_memory_order().unwrap()[e];
            params(layer)[j].value.as_slice_memory_order_mut().unwrap()[e] = orig + STEP;
            let plus = contract(&forward(layer, x), r);
            params(layer)[j].value.as_slice_memory_order_mut().unwrap()[e] = orig - STEP;
            let minus = contract(&forward(layer, x), r);
            params(layer)[j].value.as_slice_memory_order_mut().unwrap()[e] = orig;
            numeric.push((plus - minus) / (2.0 * STEP));
        }
        worst = worst.max(relative_error(grad, &numeric));
    }
    worst
}

fn normal_array<D: Dimension, Sh: ndarray::ShapeBuilder<Dim = D>>(
    shape: Sh,
    rng: &mut Rng,
) -> Array<f64, D> {
    Array::from_shape_simple_fn(shape, || rng.sample::<f64, _>(rand_distr::StandardNormal))
}

/// Inputs kept at least `margin` away from zero so rectifier kinks stay
/// outside the finite-difference stencil.
fn off_kink<D: Dimension>(mut x: Array<f64, D>, margin: f64) -> Array<f64, D> {
    x.mapv_inplace(|v| {
        if v.abs() < margin {
            v.signum() * margin + v
        } else {
            v
        }
    });
    x
}

fn run(layer: &'static str, mut instance: impl FnMut(&mut Rng) -> f64) -> LayerCheck {
    let mut rng = rng::seeded(0x6772_6164 ^ layer.len() as u64);
    let worst = (0..INSTANCES)
        .map(|_| instance(&mut rng))
        .fold(0.0, f64::max);
    LayerCheck {
        layer,
        instances: INSTANCES,
        worst,
    }
}

pub fn linear() -> LayerCheck {
    run("linear", |rng| {
        let (b, i, o) = (
            rng.random_range(1..4),
            rng.random_range(1..6),
            rng.random_range(1..6),
        );
        let mut layer = Linear::new(i, o, rng);
        let x: Array2<f64> = normal_array((b, i), rng);
        let r: Array2<f64> = normal_array((b, o), rng);
        check_layer(
            &mut layer,
            &x,
            &r,
            |l, x| l.forward(x, Mode::Train).unwrap(),
            |l, dy| l.backward(dy).unwrap(),
            |l| vec![&mut l.weight, &mut l.bias],
        )
    })
}

pub fn conv1d() -> LayerCheck {
    run("conv1d", |rng| {
        let (b, ci, co, t) = (
            rng.random_range(1..3),
            rng.random_range(1..4),
            rng.random_range(1..4),
            rng.random_range(3..8),
        );
        let mut layer = Conv1d::new(ci, co, 3, rng);
        let x: Array3<f64> = normal_array((b, ci, t), rng);
        let r: Array3<f64> = normal_array((b, co, t - 2), rng);
        check_layer(
            &mut layer,
            &x,
            &r,
            |l, x| l.forward(x, Mode::Train).unwrap(),
            |l, dy| l.backward(dy).unwrap(),
            |l| vec![&mut l.weight, &mut l.bias],
        )
    })
}

pub fn conv_transpose1d() -> LayerCheck {
    run("conv_transpose1d", |rng| {
        let (b, ci, co, t) = (
            rng.random_range(1..3),
            rng.random_range(1..4),
            rng.random_range(1..4),
            rng.random_range(1..6),
        );
        let mut layer = ConvTranspose1d::new(ci, co, 3, rng);
        let x: Array3<f64> = normal_array((b, ci, t), rng);
        let r: Array3<f64> = normal_array((b, co, t + 2), rng);
        check_layer(
            &mut layer,
            &x,
            &r,
            |l, x| l.forward(x, Mode::Train).unwrap(),
            |l, dy| l.backward(dy).unwrap(),
            |l| vec![&mut l.weight, &mut l.bias],
        )
    })
}

pub fn batchnorm1d() -> LayerCheck {
    run("batchnorm1d", |rng| {
        let (b, c, t) = (
            rng.random_range(2..4),
            rng.random_range(1..4),
            rng.random_range(2..6),
        );
        let mut layer = BatchNorm1d::new(c);
        // non-trivial affine so gamma and beta gradients are exercised
        layer.gamma = Param::new(normal_array::<_, _>(c, rng));
        layer.beta = Param::new(normal_array::<_, _>(c, rng));
        let x: Array3<f64> = normal_array((b, c, t), rng);
        let r: Array3<f64> = normal_array((b, c, t), rng);
        check_layer(
            &mut layer,
            &x,
            &r,
            |l, x| l.forward(x, Mode::Train).unwrap(),
            |l, dy| l.backward(dy).unwrap(),
            |l| vec![&mut l.gamma, &mut l.beta],
        )
    })
}

pub fn leaky_relu() -> LayerCheck {
    run("leaky_relu", |rng| {
        let shape = (
            rng.random_range(1..3),
            rng.random_range(1..4),
            rng.random_range(1..6),
        );
        let mut layer = LeakyRelu::<Ix3>::new(rng.random_range(0.0..0.3));
        let x = off_kink(normal_array(shape, rng), 0.01);
        let r = normal_array(shape, rng);
        check_layer(
            &mut layer,
            &x,
            &r,
            |l, x| l.forward(x, Mode::Train),
            |l, dy| l.backward(dy).unwrap(),
            |_| vec![],
        )
    })
}

pub fn prelu() -> LayerCheck {
    run("prelu", |rng| {
        let shape = (
            rng.random_range(1..3),
            rng.random_range(1..4),
            rng.random_range(1..6),
        );
        let mut layer = Prelu::<Ix3>::new(rng.random_range(0.0..0.5));
        let x = off_kink(normal_array(shape, rng), 0.01);
        let r = normal_array(shape, rng);
        check_layer(
            &mut layer,
            &x,
            &r,
            |l, x| l.forward(x, Mode::Train),
            |l, dy| l.backward(dy).unwrap(),
            |l| vec![&mut l.slope],
        )
    })
}

pub fn relu() -> LayerCheck {
    run("relu", |rng| {
        let shape = (rng.random_range(1..4), rng.random_range(1..8));
        let mut layer = Relu::<Ix2>::default();
        let x = off_kink(normal_array(shape, rng), 0.01);
        let r = normal_array(shape, rng);
        check_layer(
            &mut layer,
            &x,
            &r,
            |l, x| l.forward(x, Mode::Train),
            |l, dy| l.backward(dy).unwrap(),
            |_| vec![],
        )
    })
}

/// Dropout paired with the seed of its mask so every forward in a check
/// draws the same mask.
pub struct SeededDropout {
    pub dropout: Dropout<Ix2>,
    pub seed: u64,
}

pub fn dropout() -> LayerCheck {
    run("dropout", |rng| {
        let shape = (rng.random_range(1..4), rng.random_range(1..8));
        let mut layer = SeededDropout {
            dropout: Dropout::new(rng.random_range(0.1..0.7)).unwrap(),
            seed: rng.random(),
        };
        let x = normal_array(shape, rng);
        let r = normal_array(shape, rng);
        check_layer(
            &mut layer,
            &x,
            &r,
            |l, x| l.dropout.forward(x, Mode::Train, &mut rng::seeded(l.seed)),
            |l, dy| l.dropout.backward(dy).unwrap(),
            |_| vec![],
        )
    })
}

/// The loss itself: gradient of `mse(x, target)` with respect to `x`.
pub fn mse_loss() -> LayerCheck {
    run("mse", |rng| {
        let n = rng.random_range(1..12);
        let x: Array1<f64> = normal_array(n, rng);
        let target: Array1<f64> = normal_array(n, rng);
        let (_, analytic) = mse(&x, &target).unwrap();
        let numeric: Vec<f64> = (0..n)
            .map(|i| {
                let mut p = x.clone();
                p[i] += STEP;
                let mut m = x.clone();
                m[i] -= STEP;
                (mse(&p, &target).unwrap().0 - mse(&m, &target).unwrap().0) / (2.0 * STEP)
            })
            .collect();
        relative_error(analytic.as_slice().unwrap(), &numeric)
    })
}

pub fn all_layers() -> Vec<LayerCheck> {
    vec![
        linear(),
        conv1d(),
        conv_transpose1d(),
        batchnorm1d(),
        leaky_relu(),
        prelu(),
        relu(),
        dropout(),
        mse_loss(),
    ]
}
