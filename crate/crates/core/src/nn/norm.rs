//! Batch normalization (2-D feature maps) and layer normalization (token
//! embeddings).

use super::param::{join, ParamMut, Params};
use super::Mode;
use ndarray::{Array1, Array2, Array4, Axis};

const EPS: f64 = 1e-5;

pub struct BatchNorm2d {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub g_gamma: Array1<f64>,
    pub g_beta: Array1<f64>,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
    pub momentum: f64,
}

pub struct BatchNormCache {
    xhat: Array4<f64>,
    inv_std: Array1<f64>,
    mode: Mode,
}

impl BatchNorm2d {
    pub fn new(channels: usize) -> BatchNorm2d {
        BatchNorm2d {
            gamma: Array1::ones(channels),
            beta: Array1::zeros(channels),
            g_gamma: Array1::zeros(channels),
            g_beta: Array1::zeros(channels),
            running_mean: Array1::zeros(channels),
            running_var: Array1::ones(channels),
            momentum: 0.1,
        }
    }

    /// x: [n, c, h, w]. Training normalizes with batch statistics and updates
    /// the running estimates; eval uses the running estimates only.
    pub fn forward(&mut self, x: &Array4<f64>, mode: Mode) -> (Array4<f64>, BatchNormCache) {
        let (n, c, h, w) = x.dim();
        let m = (n * h * w) as f64;
        let mut xhat = x.clone();
        let mut inv_std = Array1::zeros(c);
        for ch in 0..c {
            let (mean, var) = match mode {
                Mode::Train => {
                    let lane = x.index_axis(Axis(1), ch);
                    let mean = lane.sum() / m;
                    let var = lane.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / m;
                    self.running_mean[ch] =
                        (1.0 - self.momentum) * self.running_mean[ch] + self.momentum * mean;
                    self.running_var[ch] =
                        (1.0 - self.momentum) * self.running_var[ch] + self.momentum * var;
                    (mean, var)
                }
                Mode::Eval => (self.running_mean[ch], self.running_var[ch]),
            };
            let istd = 1.0 / (var + EPS).sqrt();
            inv_std[ch] = istd;
            xhat.index_axis_mut(Axis(1), ch)
                .mapv_inplace(|v| (v - mean) * istd);
        }
        let mut y = xhat.clone();
        for ch in 0..c {
            let (g, b) = (self.gamma[ch], self.beta[ch]);
            y.index_axis_mut(Axis(1), ch).mapv_inplace(|v| g * v + b);
        }
        (y, BatchNormCache { xhat, inv_std, mode })
    }

    pub fn backward(&mut self, dy: &Array4<f64>, cache: &BatchNormCache) -> Array4<f64> {
        let (n, c, h, w) = dy.dim();
        let m = (n * h * w) as f64;
        let mut dx = dy.clone();
        for ch in 0..c {
            let dy_c = dy.index_axis(Axis(1), ch);
            let xhat_c = cache.xhat.index_axis(Axis(1), ch);
            let sum_dy: f64 = dy_c.sum();
            let sum_dy_xhat: f64 = dy_c.iter().zip(xhat_c.iter()).map(|(a, b)| a * b).sum();
            self.g_gamma[ch] += sum_dy_xhat;
            self.g_beta[ch] += sum_dy;
            let scale = self.gamma[ch] * cache.inv_std[ch];
            let mut dx_c = dx.index_axis_mut(Axis(1), ch);
            match cache.mode {
                Mode::Train => {
                    let mean_dy = sum_dy / m;
                    let mean_dy_xhat = sum_dy_xhat / m;
                    ndarray::Zip::from(&mut dx_c).and(&xhat_c).for_each(|d, &xh| {
                        *d = scale * (*d - mean_dy - xh * mean_dy_xhat);
                    });
                }
                // eval-mode statistics are constants, so the map is affine
                Mode::Eval => dx_c.mapv_inplace(|d| scale * d),
            }
        }
        dx
    }
}

impl Params for BatchNorm2d {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(ParamMut<'_>)) {
        f(ParamMut {
            name: join(prefix, "gamma"),
            value: self.gamma.view_mut().into_dyn(),
            grad: self.g_gamma.view_mut().into_dyn(),
        });
        f(ParamMut {
            name: join(prefix, "beta"),
            value: self.beta.view_mut().into_dyn(),
            grad: self.g_beta.view_mut().into_dyn(),
        });
    }
}

/// Normalizes each row (token) of a [tokens, dim] matrix.
pub struct LayerNorm {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub g_gamma: Array1<f64>,
    pub g_beta: Array1<f64>,
}

pub struct LayerNormCache {
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
}

impl LayerNorm {
    pub fn new(dim: usize) -> LayerNorm {
        LayerNorm {
            gamma: Array1::ones(dim),
            beta: Array1::zeros(dim),
            g_gamma: Array1::zeros(dim),
            g_beta: Array1::zeros(dim),
        }
    }

    pub fn forward(&self, x: &Array2<f64>) -> (Array2<f64>, LayerNormCache) {
        let (rows, d) = x.dim();
        let mut xhat = x.clone();
        let mut inv_std = Array1::zeros(rows);
        for (i, mut row) in xhat.rows_mut().into_iter().enumerate() {
            let mean = row.sum() / d as f64;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let istd = 1.0 / (var + EPS).sqrt();
            inv_std[i] = istd;
            row.mapv_inplace(|v| (v - mean) * istd);
        }
        let y = &xhat * &self.gamma + &self.beta;
        (y, LayerNormCache { xhat, inv_std })
    }

    pub fn backward(&mut self, dy: &Array2<f64>, cache: &LayerNormCache) -> Array2<f64> {
        let (rows, d) = dy.dim();
        let mut dx = Array2::zeros((rows, d));
        for i in 0..rows {
            let dy_row = dy.row(i);
            let xhat_row = cache.xhat.row(i);
            let a: Vec<f64> = dy_row
                .iter()
                .zip(self.gamma.iter())
                .map(|(dyv, g)| dyv * g)
                .collect();
            let mean_a: f64 = a.iter().sum::<f64>() / d as f64;
            let mean_a_xhat: f64 =
                a.iter().zip(xhat_row.iter()).map(|(av, xh)| av * xh).sum::<f64>() / d as f64;
            for j in 0..d {
                dx[[i, j]] = cache.inv_std[i] * (a[j] - mean_a - xhat_row[j] * mean_a_xhat);
            }
        }
        self.g_gamma += &(dy * &cache.xhat).sum_axis(Axis(0));
        self.g_beta += &dy.sum_axis(Axis(0));
        dx
    }
}

impl Params for LayerNorm {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(ParamMut<'_>)) {
        f(ParamMut {
            name: join(prefix, "gamma"),
            value: self.gamma.view_mut().into_dyn(),
            grad: self.g_gamma.view_mut().into_dyn(),
        });
        f(ParamMut {
            name: join(prefix, "beta"),
            value: self.beta.view_mut().into_dyn(),
            grad: self.g_beta.view_mut().into_dyn(),
        });
    }
}
