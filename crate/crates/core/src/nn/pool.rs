//! Pooling: spatial max pool, global average pool, and a max pool over token
//! sequences.

use super::param::{ParamMut, Params};
use ndarray::{Array1, Array2, Array4};

pub struct MaxPool2d {
    pub k: usize,
    pub stride: usize,
}

impl Params for MaxPool2d {
    fn visit_params(&mut self, _prefix: &str, _f: &mut dyn FnMut(ParamMut<'_>)) {}
}

pub struct MaxPoolCache {
    // flat (y*w + x) input index of each output's winner
    argmax: Array4<usize>,
    in_h: usize,
    in_w: usize,
}

impl MaxPool2d {
    pub fn new(k: usize, stride: usize) -> MaxPool2d {
        MaxPool2d { k, stride }
    }

    pub fn out_shape(&self, h: usize, w: usize) -> (usize, usize) {
        ((h - self.k) / self.stride + 1, (w - self.k) / self.stride + 1)
    }

    pub fn forward(&self, x: &Array4<f64>) -> (Array4<f64>, MaxPoolCache) {
        let (n, c, h, w) = x.dim();
        let (oh, ow) = self.out_shape(h, w);
        let mut y = Array4::zeros((n, c, oh, ow));
        let mut argmax = Array4::zeros((n, c, oh, ow));
        for i in 0..n {
            for ch in 0..c {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut best = f64::NEG_INFINITY;
                        let mut best_idx = 0;
                        for ky in 0..self.k {
                            for kx in 0..self.k {
                                let iy = oy * self.stride + ky;
                                let ix = ox * self.stride + kx;
                                let v = x[[i, ch, iy, ix]];
                                if v > best {
                                    best = v;
                                    best_idx = iy * w + ix;
                                }
                            }
                        }
                        y[[i, ch, oy, ox]] = best;
                        argmax[[i, ch, oy, ox]] = best_idx;
                    }
                }
            }
        }
        (y, MaxPoolCache { argmax, in_h: h, in_w: w })
    }

    pub fn backward(&self, dy: &Array4<f64>, cache: &MaxPoolCache) -> Array4<f64> {
        let (n, c, oh, ow) = dy.dim();
        let mut dx = Array4::zeros((n, c, cache.in_h, cache.in_w));
        for i in 0..n {
            for ch in 0..c {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let idx = cache.argmax[[i, ch, oy, ox]];
                        dx[[i, ch, idx / cache.in_w, idx % cache.in_w]] += dy[[i, ch, oy, ox]];
                    }
                }
            }
        }
        dx
    }
}

/// [n, c, h, w] -> [n, c] spatial mean.
pub fn global_avg_pool(x: &Array4<f64>) -> Array2<f64> {
    let (n, c, h, w) = x.dim();
    let mut y = Array2::zeros((n, c));
    let inv = 1.0 / (h * w) as f64;
    for i in 0..n {
        for ch in 0..c {
            y[[i, ch]] = x.index_axis(ndarray::Axis(0), i).index_axis(ndarray::Axis(0), ch).sum()
                * inv;
        }
    }
    y
}

pub fn global_avg_pool_backward(dy: &Array2<f64>, h: usize, w: usize) -> Array4<f64> {
    let (n, c) = dy.dim();
    let inv = 1.0 / (h * w) as f64;
    let mut dx = Array4::zeros((n, c, h, w));
    for i in 0..n {
        for ch in 0..c {
            let g = dy[[i, ch]] * inv;
            dx.index_axis_mut(ndarray::Axis(0), i)
                .index_axis_mut(ndarray::Axis(0), ch)
                .fill(g);
        }
    }
    dx
}

/// Max over the token axis of a [tokens, dim] sequence -> [dim].
pub fn token_max_pool(x: &Array2<f64>) -> (Array1<f64>, Vec<usize>) {
    let (l, d) = x.dim();
    let mut y = Array1::from_elem(d, f64::NEG_INFINITY);
    let mut arg = vec![0usize; d];
    for t in 0..l {
        for j in 0..d {
            if x[[t, j]] > y[j] {
                y[j] = x[[t, j]];
                arg[j] = t;
            }
        }
    }
    (y, arg)
}

pub fn token_max_pool_backward(dy: &Array1<f64>, arg: &[usize], tokens: usize) -> Array2<f64> {
    let d = dy.len();
    let mut dx = Array2::zeros((tokens, d));
    for j in 0..d {
        dx[[arg[j], j]] += dy[j];
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck;
    use crate::rng;

    #[test]
    fn maxpool_known_values() {
        let x = Array4::from_shape_vec(
            (1, 1, 4, 4),
            vec![
                1.0, 2.0, 5.0, 3.0, //
                4.0, 0.0, 1.0, 2.0, //
                7.0, 1.0, 0.0, 1.0, //
                2.0, 3.0, 4.0, 9.0,
            ],
        )
        .unwrap();
        let pool = MaxPool2d::new(2, 2);
        let (y, _) = pool.forward(&x);
        assert_eq!(y.as_slice().unwrap(), &[4.0, 5.0, 7.0, 9.0]);
    }

    #[test]
    fn maxpool_routes_gradient_to_winner() {
        let mut r = rng::stream(7, "pool-grad");
        // distinct values so the argmax is stable under the probe step
        let x = gradcheck::random_array(&mut r, (2, 2, 6, 6)).mapv(|v| v * 10.0);
        let cot = gradcheck::random_array(&mut r, (2, 2, 3, 3));
        gradcheck::check_layer(
            MaxPool2d::new(2, 2),
            x,
            cot,
            |layer, x| layer.forward(x),
            |layer, dy, cache| layer.backward(dy, cache),
            1e-5,
        );
    }

    #[test]
    fn global_pool_matches_mean_and_gradient() {
        let mut r = rng::stream(8, "gap");
        let x = gradcheck::random_array(&mut r, (2, 3, 4, 4));
        let y = global_avg_pool(&x);
        assert!((y[[1, 2]] - x.index_axis(ndarray::Axis(0), 1).index_axis(ndarray::Axis(0), 2).mean().unwrap()).abs() < 1e-12);
        let dy = Array2::ones((2, 3));
        let dx = global_avg_pool_backward(&dy, 4, 4);
        assert!((dx[[0, 0, 0, 0]] - 1.0 / 16.0).abs() < 1e-12);
    }

    #[test]
    fn token_max_pool_round_trip() {
        let x = Array2::from_shape_vec((3, 2), vec![1.0, 5.0, 4.0, 2.0, 3.0, 0.0]).unwrap();
        let (y, arg) = token_max_pool(&x);
        assert_eq!(y.as_slice().unwrap(), &[4.0, 5.0]);
        assert_eq!(arg, vec![1, 0]);
        let dx = token_max_pool_backward(&Array1::from_vec(vec![2.0, 3.0]), &arg, 3);
        assert_eq!(dx[[1, 0]], 2.0);
        assert_eq!(dx[[0, 1]], 3.0);
        assert_eq!(dx.sum(), 5.0);
    }
}
