//! Pre-norm transformer encoder block and its MLP, over [tokens, dim]
//! sequences.

use crate::nn::act::{gelu, gelu_backward};
use crate::nn::attention::AttentionCache;
use crate::nn::linear::LinearCache;
use crate::nn::norm::LayerNormCache;
use crate::nn::param::{join, Init, ParamMut, Params};
use crate::nn::{LayerNorm, Linear, MultiHeadAttention};
use ndarray::Array2;
use rand_chacha::ChaCha8Rng;

pub const MLP_RATIO: usize = 4;

pub struct Mlp {
    fc1: Linear,
    fc2: Linear,
}

pub struct MlpCache {
    l1: LinearCache,
    gelu_in: Array2<f64>,
    l2: LinearCache,
}

impl Mlp {
    pub fn new(dim: usize, rng: &mut ChaCha8Rng) -> Mlp {
        Mlp {
            fc1: Linear::new(dim, MLP_RATIO * dim, Init::Xavier, rng),
            fc2: Linear::new(MLP_RATIO * dim, dim, Init::Xavier, rng),
        }
    }

    pub fn forward(&self, x: &Array2<f64>) -> (Array2<f64>, MlpCache) {
        let (h, l1) = self.fc1.forward(x);
        let a = gelu(&h);
        let (y, l2) = self.fc2.forward(&a);
        (y, MlpCache { l1, gelu_in: h, l2 })
    }

    pub fn backward(&mut self, dy: &Array2<f64>, cache: &MlpCache) -> Array2<f64> {
        let da = self.fc2.backward(dy, &cache.l2);
        let dh = gelu_backward(&da, &cache.gelu_in);
        self.fc1.backward(&dh, &cache.l1)
    }
}

impl Params for Mlp {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(ParamMut<'_>)) {
        self.fc1.visit_params(&join(prefix, "fc1"), f);
        self.fc2.visit_params(&join(prefix, "fc2"), f);
    }
}

/// x + attn(norm1(x)), then + mlp(norm2(...)).
pub struct EncoderBlock {
    norm1: LayerNorm,
    attn: MultiHeadAttention,
    norm2: LayerNorm,
    mlp: Mlp,
}

pub struct EncoderBlockCache {
    n1: LayerNormCache,
    attn: AttentionCache,
    n2: LayerNormCache,
    mlp: MlpCache,
}

impl EncoderBlock {
    pub fn new(dim: usize, heads: usize, rng: &mut ChaCha8Rng) -> EncoderBlock {
        EncoderBlock {
            norm1: LayerNorm::new(dim),
            attn: MultiHeadAttention::new(dim, heads, rng),
            norm2: LayerNorm::new(dim),
            mlp: Mlp::new(dim, rng),
        }
    }

    pub fn forward(&self, x: &Array2<f64>) -> (Array2<f64>, EncoderBlockCache) {
        let (normed1, n1) = self.norm1.forward(x);
        let (attn_out, attn) = self.attn.forward(&normed1);
        let mid = x + &attn_out;
        let (normed2, n2) = self.norm2.forward(&mid);
        let (mlp_out, mlp) = self.mlp.forward(&normed2);
        let y = &mid + &mlp_out;
        (y, EncoderBlockCache { n1, attn, n2, mlp })
    }

    pub fn backward(&mut self, dy: &Array2<f64>, cache: &EncoderBlockCache) -> Array2<f64> {
        let dmlp_out = dy;
        let dnormed2 = self.mlp.backward(dmlp_out, &cache.mlp);
        let mut dmid = self.norm2.backward(&dnormed2, &cache.n2);
        dmid += dy;
        let dnormed1 = self.attn.backward(&dmid, &cache.attn);
        let mut dx = self.norm1.backward(&dnormed1, &cache.n1);
        dx += &dmid;
        dx
    }
}

impl Params for EncoderBlock {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(ParamMut<'_>)) {
        self.norm1.visit_params(&join(prefix, "norm1"), f);
        self.attn.visit_params(&join(prefix, "attn"), f);
        self.norm2.visit_params(&join(prefix, "norm2"), f);
        self.mlp.visit_params(&join(prefix, "mlp"), f);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck;
    use crate::rng;

    #[test]
    fn gradients_match_finite_differences() {
        let mut r = rng::stream(61, "enc-grad");
        let block = EncoderBlock::new(6, 2, &mut r);
        let x = gradcheck::random_matrix(&mut r, 4, 6);
        let cot = gradcheck::random_matrix(&mut r, 4, 6);
        gradcheck::check_layer(
            block,
            x,
            cot,
            |layer, x| layer.forward(x),
            |layer, dy, cache| layer.backward(dy, cache),
            2e-5,
        );
    }

    #[test]
    fn residual_path_passes_signal_at_zero_weights() {
        let mut r = rng::stream(62, "enc-res");
        let mut block = EncoderBlock::new(4, 2, &mut r);
        crate::nn::param::zero_grads(&mut block);
        block.visit_params("", &mut |mut p| p.value.fill(0.0));
        let x = gradcheck::random_matrix(&mut r, 3, 4);
        let (y, _) = block.forward(&x);
        // with every weight zero, both sublayers emit zero and y == x
        for (a, b) in y.iter().zip(x.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
