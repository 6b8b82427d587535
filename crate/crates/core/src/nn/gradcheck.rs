//! Central-difference gradient checking used across the layer and model
//! tests. The scalar probe loss is sum(output * cotangent) for a fixed
//! random cotangent, which exercises every output element.

use super::param::{zero_grads, Params};
use ndarray::{Array, Array2, ArrayD, Dimension};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.gen::<f64>() * 2.0 - 1.0)
}

pub fn random_array<D: Dimension>(
    rng: &mut ChaCha8Rng,
    shape: impl ndarray::ShapeBuilder<Dim = D>,
) -> Array<f64, D> {
    Array::from_shape_simple_fn(shape, || rng.gen::<f64>() * 2.0 - 1.0)
}

const H: f64 = 1e-5;

fn close(num: f64, ana: f64, tol: f64) -> bool {
    (num - ana).abs() <= tol * num.abs().max(ana.abs()).max(1.0)
}

fn export_grads(model: &mut impl Params) -> Vec<(String, ArrayD<f64>)> {
    let mut out = Vec::new();
    model.visit_params("", &mut |p| out.push((p.name.clone(), p.grad.to_owned())));
    out
}

fn nudge(model: &mut impl Params, name: &str, flat: usize, delta: f64) {
    model.visit_params("", &mut |mut p| {
        if p.name == name {
            *p.value
                .as_slice_mut()
                .expect("parameters are contiguous")
                .get_mut(flat)
                .unwrap() += delta;
        }
    });
}

/// Check both d(loss)/d(input) and every parameter gradient of one layer
/// against central differences.
pub fn check_layer<L, C, DI, DO, FF, FB>(
    mut layer: L,
    x: Array<f64, DI>,
    cot: Array<f64, DO>,
    mut forward: FF,
    mut backward: FB,
    tol: f64,
) where
    L: Params,
    DI: Dimension,
    DO: Dimension,
    FF: FnMut(&mut L, &Array<f64, DI>) -> (Array<f64, DO>, C),
    FB: FnMut(&mut L, &Array<f64, DO>, &C) -> Array<f64, DI>,
{
    let (y, cache) = forward(&mut layer, &x);
    assert!(y.iter().all(|v| v.is_finite()));
    zero_grads(&mut layer);
    let dx = backward(&mut layer, &cot, &cache);
    let grads = export_grads(&mut layer);

    // input gradient
    let mut loss = |layer: &mut L, x: &Array<f64, DI>| (forward(layer, x).0 * &cot).sum();
    let flat_dx = dx.as_slice().expect("standard layout").to_vec();
    for (i, &ana) in flat_dx.iter().enumerate() {
        let mut xp = x.clone();
        xp.as_slice_mut().unwrap()[i] += H;
        let mut xm = x.clone();
        xm.as_slice_mut().unwrap()[i] -= H;
        let num = (loss(&mut layer, &xp) - loss(&mut layer, &xm)) / (2.0 * H);
        assert!(close(num, ana, tol), "d/dx[{i}]: numeric {num:.3e}, analytic {ana:.3e}");
    }

    // parameter gradients
    for (name, grad) in grads {
        let flat = grad.as_slice().unwrap().to_vec();
        let stride = (flat.len() / 48).max(1);
        for (i, &ana) in flat.iter().enumerate().step_by(stride) {
            nudge(&mut layer, &name, i, H);
            let up = loss(&mut layer, &x);
            nudge(&mut layer, &name, i, -2.0 * H);
            let down = loss(&mut layer, &x);
            nudge(&mut layer, &name, i, H);
            let num = (up - down) / (2.0 * H);
            assert!(
                close(num, ana, tol),
                "d/d{name}[{i}]: numeric {num:.3e}, analytic {ana:.3e}"
            );
        }
    }
}

/// Check d(loss)/d(param) for a whole model against central differences,
/// where `loss` runs a full forward/backward and returns the scalar loss
/// with gradients accumulated. Samples a subset of coordinates per tensor.
pub fn check_model<M: Params>(
    model: &mut M,
    mut loss_and_backward: impl FnMut(&mut M) -> f64,
    mut loss_only: impl FnMut(&mut M) -> f64,
    per_tensor: usize,
    tol: f64,
) {
    zero_grads(model);
    let _ = loss_and_backward(model);
    let grads = export_grads(model);
    for (name, grad) in grads {
        let flat = grad.as_slice().unwrap().to_vec();
        let stride = (flat.len() / per_tensor).max(1);
        for (i, &ana) in flat.iter().enumerate().step_by(stride) {
            nudge(model, &name, i, H);
            let up = loss_only(model);
            nudge(model, &name, i, -2.0 * H);
            let down = loss_only(model);
            nudge(model, &name, i, H);
            let num = (up - down) / (2.0 * H);
            assert!(
                close(num, ana, tol),
                "d/d{name}[{i}]: numeric {num:.3e}, analytic {ana:.3e}"
            );
        }
    }
}
