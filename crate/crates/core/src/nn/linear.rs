//! Fully connected layer. Forward returns an explicit cache that the caller
//! hands back to `backward`, so one layer instance can serve many forward
//! passes (per-frame backbones, per-item transformer blocks) without hidden
//! state.

use super::param::{draw, join, Init, ParamMut, Params};
use ndarray::{Array1, Array2};
use rand::Rng;

pub struct Linear {
    /// [in, out]
    pub w: Array2<f64>,
    pub b: Array1<f64>,
    pub gw: Array2<f64>,
    pub gb: Array1<f64>,
}

pub struct LinearCache {
    x: Array2<f64>,
}

impl Linear {
    pub fn new(in_dim: usize, out_dim: usize, init: Init, rng: &mut impl Rng) -> Linear {
        Linear {
            w: Array2::from_shape_fn((in_dim, out_dim), |_| draw(init, in_dim, out_dim, rng)),
            b: Array1::zeros(out_dim),
            gw: Array2::zeros((in_dim, out_dim)),
            gb: Array1::zeros(out_dim),
        }
    }

    /// x: [n, in] -> [n, out]
    pub fn forward(&self, x: &Array2<f64>) -> (Array2<f64>, LinearCache) {
        let y = x.dot(&self.w) + &self.b;
        (y, LinearCache { x: x.clone() })
    }

    pub fn backward(&mut self, dy: &Array2<f64>, cache: &LinearCache) -> Array2<f64> {
        self.gw += &cache.x.t().dot(dy);
        self.gb += &dy.sum_axis(ndarray::Axis(0));
        dy.dot(&self.w.t())
    }
}

impl Params for Linear {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(ParamMut<'_>)) {
        f(ParamMut {
            name: join(prefix, "w"),
            value: self.w.view_mut().into_dyn(),
            grad: self.gw.view_mut().into_dyn(),
        });
        f(ParamMut {
            name: join(prefix, "b"),
            value: self.b.view_mut().into_dyn(),
            grad: self.gb.view_mut().into_dyn(),
        });
    }
}
