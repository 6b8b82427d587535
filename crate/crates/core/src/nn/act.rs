//! Pointwise nonlinearities and row softmax.

use ndarray::{Array, Array2, Dimension};

pub fn relu<D: Dimension>(x: &Array<f64, D>) -> Array<f64, D> {
    x.mapv(|v| v.max(0.0))
}

/// Gradient through ReLU given the forward *input*.
pub fn relu_backward<D: Dimension>(dy: &Array<f64, D>, x: &Array<f64, D>) -> Array<f64, D> {
    let mut dx = dy.clone();
    dx.zip_mut_with(x, |d, &v| {
        if v <= 0.0 {
            *d = 0.0;
        }
    });
    dx
}

const GELU_C: f64 = 0.044_715;

fn sqrt_2_over_pi() -> f64 {
    (2.0 / std::f64::consts::PI).sqrt()
}

/// Tanh approximation of GELU.
pub fn gelu<D: Dimension>(x: &Array<f64, D>) -> Array<f64, D> {
    let k = sqrt_2_over_pi();
    x.mapv(|v| 0.5 * v * (1.0 + (k * (v + GELU_C * v.powi(3))).tanh()))
}

pub fn gelu_backward<D: Dimension>(dy: &Array<f64, D>, x: &Array<f64, D>) -> Array<f64, D> {
    let k = sqrt_2_over_pi();
    let mut dx = dy.clone();
    dx.zip_mut_with(x, |d, &v| {
        let u = k * (v + GELU_C * v.powi(3));
        let t = u.tanh();
        let sech2 = 1.0 - t * t;
        *d *= 0.5 * (1.0 + t) + 0.5 * v * sech2 * k * (1.0 + 3.0 * GELU_C * v * v);
    });
    dx
}

/// Numerically stable softmax over the rows of a 2-D array.
pub fn softmax_rows(x: &Array2<f64>) -> Array2<f64> {
    let mut out = x.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

/// Gradient through a row softmax: dx = p * (dy - sum(dy * p)).
pub fn softmax_rows_backward(dy: &Array2<f64>, p: &Array2<f64>) -> Array2<f64> {
    let mut dx = Array2::zeros(dy.dim());
    for ((mut dx_row, dy_row), p_row) in dx.rows_mut().into_iter().zip(dy.rows()).zip(p.rows()) {
        let dot: f64 = dy_row.iter().zip(p_row.iter()).map(|(a, b)| a * b).sum();
        for ((d, &g), &pv) in dx_row.iter_mut().zip(dy_row.iter()).zip(p_row.iter()) {
            *d = pv * (g - dot);
        }
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr2, ArrayD};

    #[test]
    fn gelu_matches_reference_points() {
        // reference values of the tanh approximation itself
        let x = ArrayD::from_shape_vec(vec![3], vec![-1.0, 0.0, 2.0]).unwrap();
        let y = gelu(&x);
        assert!((y[[0]] - (-0.158_808)).abs() < 1e-5);
        assert!(y[[1]].abs() < 1e-12);
        assert!((y[[2]] - 1.954_597_7).abs() < 1e-5);
    }

    #[test]
    fn pointwise_backward_matches_finite_difference() {
        let xs = [-2.0, -0.5, -1e-3, 1e-3, 0.7, 3.0];
        let h = 1e-6;
        for &v in &xs {
            let x = ArrayD::from_elem(vec![1], v);
            let dy = ArrayD::from_elem(vec![1], 1.0);
            let num = (gelu(&ArrayD::from_elem(vec![1], v + h))[[0]]
                - gelu(&ArrayD::from_elem(vec![1], v - h))[[0]])
                / (2.0 * h);
            let ana = gelu_backward(&dy, &x)[[0]];
            assert!((num - ana).abs() < 1e-6, "gelu'({v}): {num} vs {ana}");

            if v.abs() > 1e-2 {
                let num = (relu(&ArrayD::from_elem(vec![1], v + h))[[0]]
                    - relu(&ArrayD::from_elem(vec![1], v - h))[[0]])
                    / (2.0 * h);
                let ana = relu_backward(&dy, &x)[[0]];
                assert!((num - ana).abs() < 1e-6, "relu'({v})");
            }
        }
    }

    #[test]
    fn softmax_rows_sum_to_one_and_backprop() {
        let x = arr2(&[[1.0, 2.0, 3.0], [1000.0, 1000.0, 1000.0]]);
        let p = softmax_rows(&x);
        for row in p.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
            assert!(row.iter().all(|v| v.is_finite()));
        }
        // finite difference through softmax with a fixed cotangent
        let dy = arr2(&[[0.3, -0.7, 0.2], [0.1, 0.5, -0.4]]);
        let dx = softmax_rows_backward(&dy, &p);
        let h = 1e-6;
        for i in 0..2 {
            for j in 0..3 {
                let mut xp = x.clone();
                xp[[i, j]] += h;
                let mut xm = x.clone();
                xm[[i, j]] -= h;
                let f = |m: &Array2<f64>| (softmax_rows(m) * &dy).sum();
                let num = (f(&xp) - f(&xm)) / (2.0 * h);
                assert!((num - dx[[i, j]]).abs() < 1e-6);
            }
        }
    }
}
