//! Multi-head self-attention over a [tokens, dim] sequence.

use super::act::{softmax_rows, softmax_rows_backward};
use super::linear::{Linear, LinearCache};
use super::param::{join, Init, ParamMut, Params};
use ndarray::{s, Array2};
use rand_chacha::ChaCha8Rng;

pub struct MultiHeadAttention {
    pub qkv: Linear,
    pub proj: Linear,
    pub heads: usize,
    pub dim: usize,
}

pub struct AttentionCache {
    qkv_cache: LinearCache,
    proj_cache: LinearCache,
    qkv_out: Array2<f64>,
    // per head: softmax'd attention matrix [L, L]
    probs: Vec<Array2<f64>>,
    concat: Array2<f64>,
}

impl MultiHeadAttention {
    pub fn new(dim: usize, heads: usize, rng: &mut ChaCha8Rng) -> MultiHeadAttention {
        assert!(dim % heads == 0, "dim {dim} not divisible by heads {heads}");
        MultiHeadAttention {
            qkv: Linear::new(dim, 3 * dim, Init::Xavier, rng),
            proj: Linear::new(dim, dim, Init::Xavier, rng),
            heads,
            dim,
        }
    }

    fn head_dim(&self) -> usize {
        self.dim / self.heads
    }

    /// x: [tokens, dim].
    pub fn forward(&self, x: &Array2<f64>) -> (Array2<f64>, AttentionCache) {
        let (l, _) = x.dim();
        let dh = self.head_dim();
        let scale = 1.0 / (dh as f64).sqrt();
        let (qkv_out, qkv_cache) = self.qkv.forward(x);
        let mut concat = Array2::zeros((l, self.dim));
        let mut probs = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let q = qkv_out.slice(s![.., h * dh..(h + 1) * dh]);
            let k = qkv_out.slice(s![.., self.dim + h * dh..self.dim + (h + 1) * dh]);
            let v = qkv_out.slice(s![.., 2 * self.dim + h * dh..2 * self.dim + (h + 1) * dh]);
            let scores = q.dot(&k.t()) * scale;
            let p = softmax_rows(&scores);
            let o = p.dot(&v);
            concat.slice_mut(s![.., h * dh..(h + 1) * dh]).assign(&o);
            probs.push(p);
        }
        let (y, proj_cache) = self.proj.forward(&concat);
        (
            y,
            AttentionCache { qkv_cache, proj_cache, qkv_out, probs, concat },
        )
    }

    pub fn backward(&mut self, dy: &Array2<f64>, cache: &AttentionCache) -> Array2<f64> {
        let l = dy.dim().0;
        let dh = self.head_dim();
        let scale = 1.0 / (dh as f64).sqrt();
        let dconcat = self.proj.backward(dy, &cache.proj_cache);
        let _ = &cache.concat; // kept for shape/debug symmetry with forward
        let mut d_qkv = Array2::zeros((l, 3 * self.dim));
        for h in 0..self.heads {
            let q = cache.qkv_out.slice(s![.., h * dh..(h + 1) * dh]);
            let k = cache
                .qkv_out
                .slice(s![.., self.dim + h * dh..self.dim + (h + 1) * dh]);
            let v = cache
                .qkv_out
                .slice(s![.., 2 * self.dim + h * dh..2 * self.dim + (h + 1) * dh]);
            let p = &cache.probs[h];
            let d_o = dconcat.slice(s![.., h * dh..(h + 1) * dh]);
            let d_p = d_o.dot(&v.t());
            let d_v = p.t().dot(&d_o);
            let d_scores = softmax_rows_backward(&d_p, p);
            let d_q = d_scores.dot(&k) * scale;
            let d_k = d_scores.t().dot(&q) * scale;
            d_qkv.slice_mut(s![.., h * dh..(h + 1) * dh]).assign(&d_q);
            d_qkv
                .slice_mut(s![.., self.dim + h * dh..self.dim + (h + 1) * dh])
                .assign(&d_k);
            d_qkv
                .slice_mut(s![.., 2 * self.dim + h * dh..2 * self.dim + (h + 1) * dh])
                .assign(&d_v);
        }
        self.qkv.backward(&d_qkv, &cache.qkv_cache)
    }
}

impl Params for MultiHeadAttention {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(ParamMut<'_>)) {
        self.qkv.visit_params(&join(prefix, "qkv"), f);
        self.proj.visit_params(&join(prefix, "proj"), f);
    }
}
