//! 2-D convolution via im2col and matrix multiply, parallel over the batch
//! with an ordered reduction so gradients are bit-stable under any thread
//! count.

use super::param::{draw, join, Init, ParamMut, Params};
use crate::par;
use ndarray::{s, Array1, Array2, Array3, Array4, ArrayView3};
use rand::Rng;

pub struct Conv2d {
    /// [out_c, in_c, k, k]
    pub w: Array4<f64>,
    pub b: Array1<f64>,
    pub gw: Array4<f64>,
    pub gb: Array1<f64>,
    pub stride: usize,
    pub pad: usize,
    k: usize,
}

pub struct ConvCache {
    x: Array4<f64>,
}

fn out_len(len: usize, k: usize, stride: usize, pad: usize) -> usize {
    (len + 2 * pad - k) / stride + 1
}

fn im2col(x: &ArrayView3<f64>, k: usize, stride: usize, pad: usize) -> Array2<f64> {
    let (c, h, w) = x.dim();
    let oh = out_len(h, k, stride, pad);
    let ow = out_len(w, k, stride, pad);
    let mut cols = Array2::<f64>::zeros((c * k * k, oh * ow));
    for ci in 0..c {
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                for oy in 0..oh {
                    let iy = (oy * stride + ky) as i64 - pad as i64;
                    if iy < 0 || iy >= h as i64 {
                        continue;
                    }
                    for ox in 0..ow {
                        let ix = (ox * stride + kx) as i64 - pad as i64;
                        if ix >= 0 && ix < w as i64 {
                            cols[[row, oy * ow + ox]] = x[[ci, iy as usize, ix as usize]];
                        }
                    }
                }
            }
        }
    }
    cols
}

fn col2im(
    dcols: &Array2<f64>,
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
) -> Array3<f64> {
    let oh = out_len(h, k, stride, pad);
    let ow = out_len(w, k, stride, pad);
    let mut dx = Array3::<f64>::zeros((c, h, w));
    for ci in 0..c {
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                for oy in 0..oh {
                    let iy = (oy * stride + ky) as i64 - pad as i64;
                    if iy < 0 || iy >= h as i64 {
                        continue;
                    }
                    for ox in 0..ow {
                        let ix = (ox * stride + kx) as i64 - pad as i64;
                        if ix >= 0 && ix < w as i64 {
                            dx[[ci, iy as usize, ix as usize]] += dcols[[row, oy * ow + ox]];
                        }
                    }
                }
            }
        }
    }
    dx
}

impl Conv2d {
    pub fn new(
        in_c: usize,
        out_c: usize,
        k: usize,
        stride: usize,
        pad: usize,
        rng: &mut impl Rng,
    ) -> Conv2d {
        let fan_in = in_c * k * k;
        let fan_out = out_c * k * k;
        Conv2d {
            w: Array4::from_shape_fn((out_c, in_c, k, k), |_| {
                draw(Init::He, fan_in, fan_out, rng)
            }),
            b: Array1::zeros(out_c),
            gw: Array4::zeros((out_c, in_c, k, k)),
            gb: Array1::zeros(out_c),
            stride,
            pad,
            k,
        }
    }

    pub fn out_shape(&self, h: usize, w: usize) -> (usize, usize) {
        (
            out_len(h, self.k, self.stride, self.pad),
            out_len(w, self.k, self.stride, self.pad),
        )
    }

    /// x: [n, in_c, h, w] -> [n, out_c, oh, ow]
    pub fn forward(&self, x: &Array4<f64>) -> (Array4<f64>, ConvCache) {
        let (n, _c, h, w) = x.dim();
        let (oh, ow) = self.out_shape(h, w);
        let out_c = self.w.dim().0;
        let w2 = self
            .w
            .view()
            .into_shape_with_order((out_c, self.w.len() / out_c))
            .unwrap();
        let items = par::map_range(n, |i| {
            let cols = im2col(&x.index_axis(ndarray::Axis(0), i), self.k, self.stride, self.pad);
            let mut y2 = w2.dot(&cols);
            for (mut row, &bias) in y2.rows_mut().into_iter().zip(self.b.iter()) {
                row.mapv_inplace(|v| v + bias);
            }
            y2.into_shape_with_order((out_c, oh, ow)).unwrap()
        });
        let mut y = Array4::zeros((n, out_c, oh, ow));
        for (i, item) in items.into_iter().enumerate() {
            y.slice_mut(s![i, .., .., ..]).assign(&item);
        }
        (y, ConvCache { x: x.clone() })
    }

    pub fn backward(&mut self, dy: &Array4<f64>, cache: &ConvCache) -> Array4<f64> {
        let x = &cache.x;
        let (n, c, h, w) = x.dim();
        let (out_c, _, _, _) = self.w.dim();
        let w2 = self
            .w
            .view()
            .into_shape_with_order((out_c, self.w.len() / out_c))
            .unwrap();
        let items = par::map_range(n, |i| {
            let cols = im2col(&x.index_axis(ndarray::Axis(0), i), self.k, self.stride, self.pad);
            let dy2 = dy
                .index_axis(ndarray::Axis(0), i)
                .into_shape_with_order((out_c, dy.len() / (n * out_c)))
                .unwrap()
                .to_owned();
            let dw_i = dy2.dot(&cols.t());
            let db_i = dy2.sum_axis(ndarray::Axis(1));
            let dcols = w2.t().dot(&dy2);
            let dx_i = col2im(&dcols, c, h, w, self.k, self.stride, self.pad);
            (dx_i, dw_i, db_i)
        });
        let mut dx = Array4::zeros((n, c, h, w));
        let mut gw2 = self
            .gw
            .view_mut()
            .into_shape_with_order((out_c, c * self.k * self.k))
            .unwrap();
        for (i, (dx_i, dw_i, db_i)) in items.into_iter().enumerate() {
            dx.slice_mut(s![i, .., .., ..]).assign(&dx_i);
            gw2 += &dw_i;
            self.gb += &db_i;
        }
        dx
    }
}

impl Params for Conv2d {
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck;
    use crate::rng;

    #[test]
    fn known_3x3_convolution() {
        let mut r = rng::stream(0, "conv-known");
        let mut conv = Conv2d::new(1, 1, 3, 1, 1, &mut r);
        conv.w.fill(0.0);
        conv.w[[0, 0, 1, 1]] = 2.0; // pure center tap
        conv.b[0] = 1.0;
        let x = Array4::from_shape_fn((1, 1, 4, 5), |(_, _, y, x)| (y * 5 + x) as f64);
        let (y, _) = conv.forward(&x);
        assert_eq!(y.dim(), (1, 1, 4, 5));
        for iy in 0..4 {
            for ix in 0..5 {
                assert_eq!(y[[0, 0, iy, ix]], 2.0 * x[[0, 0, iy, ix]] + 1.0);
            }
        }
    }

    #[test]
    fn stride_and_padding_shapes() {
        let mut r = rng::stream(1, "conv-shapes");
        let conv = Conv2d::new(3, 8, 3, 2, 1, &mut r);
        assert_eq!(conv.out_shape(32, 32), (16, 16));
        let stem = Conv2d::new(1, 16, 7, 2, 3, &mut r);
        assert_eq!(stem.out_shape(300, 300), (150, 150));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut r = rng::stream(2, "conv-grad");
        let conv = Conv2d::new(2, 3, 3, 2, 1, &mut r);
        let x = gradcheck::random_array(&mut r, (2, 2, 5, 5));
        let cot = gradcheck::random_array(&mut r, (2, 3, 3, 3));
        gradcheck::check_layer(
            conv,
            x,
            cot,
            |layer, x| layer.forward(x),
            |layer, dy, cache| layer.backward(dy, cache),
            1e-6,
        );
    }
}
