//! Adam optimizer keyed on parameter names, so layers can be visited in any
//! order once the model is built.

use super::param::Params;
use ndarray::ArrayD;
use std::collections::HashMap;

pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    state: HashMap<String, (ArrayD<f64>, ArrayD<f64>)>,
}

impl Adam {
    pub fn new(lr: f64) -> Adam {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            state: HashMap::new(),
        }
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.lr = lr;
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    /// One update from the gradients currently accumulated in the model.
    /// Gradients are not cleared here; call `zero_grads` before the next pass.
    pub fn step(&mut self, model: &mut dyn Params) {
        self.t += 1;
        let (b1, b2, eps, lr, t) = (self.beta1, self.beta2, self.eps, self.lr, self.t);
        let bc1 = 1.0 - b1.powi(t as i32);
        let bc2 = 1.0 - b2.powi(t as i32);
        let state = &mut self.state;
        model.visit_params("", &mut |mut p| {
            let entry = state.entry(p.name.clone()).or_insert_with(|| {
                (
                    ArrayD::zeros(p.grad.raw_dim()),
                    ArrayD::zeros(p.grad.raw_dim()),
                )
            });
            let (m, v) = entry;
            ndarray::Zip::from(&mut p.value)
                .and(&p.grad)
                .and(&mut *m)
                .and(&mut *v)
                .for_each(|w, &g, mi, vi| {
                    *mi = b1 * *mi + (1.0 - b1) * g;
                    *vi = b2 * *vi + (1.0 - b2) * g * g;
                    let mhat = *mi / bc1;
                    let vhat = *vi / bc2;
                    *w -= lr * mhat / (vhat.sqrt() + eps);
                });
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::param::{join, zero_grads, ParamMut, Params};
    use ndarray::Array1;

    struct Quad {
        x: Array1<f64>,
        g: Array1<f64>,
    }

    impl Params for Quad {
        fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(ParamMut<'_>)) {
            f(ParamMut {
                name: join(prefix, "x"),
                value: self.x.view_mut().into_dyn(),
                grad: self.g.view_mut().into_dyn(),
            });
        }
    }

    #[test]
    fn minimizes_quadratic() {
        // f(x) = sum (x - c)^2, c = (1, -2, 3)
        let c = [1.0, -2.0, 3.0];
        let mut q = Quad {
            x: Array1::zeros(3),
            g: Array1::zeros(3),
        };
        let mut opt = Adam::new(0.05);
        for _ in 0..1500 {
            zero_grads(&mut q);
            for i in 0..3 {
                q.g[i] = 2.0 * (q.x[i] - c[i]);
            }
            opt.step(&mut q);
        }
        for i in 0..3 {
            assert!((q.x[i] - c[i]).abs() < 1e-4, "x[{i}] = {}", q.x[i]);
        }
    }

    #[test]
    fn first_step_magnitude_is_lr() {
        // with bias correction, |Δx| ≈ lr on step one regardless of gradient scale
        let mut q = Quad {
            x: Array1::zeros(2),
            g: Array1::from_vec(vec![1e-3, 250.0]),
        };
        let mut opt = Adam::new(0.01);
        opt.step(&mut q);
        for i in 0..2 {
            assert!((q.x[i].abs() - 0.01).abs() < 1e-6, "x[{i}] = {}", q.x[i]);
        }
    }

    #[test]
    fn set_lr_takes_effect() {
        let mut q = Quad {
            x: Array1::zeros(1),
            g: Array1::from_vec(vec![1.0]),
        };
        let mut opt = Adam::new(1.0);
        opt.set_lr(0.5);
        opt.step(&mut q);
        assert!((q.x[0] + 0.5).abs() < 1e-6);
    }
}
