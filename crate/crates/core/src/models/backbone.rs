//! Residual convolutional feature extractor shared by both CNN streams and
//! the hybrid model.

use crate::nn::act::{relu, relu_backward};
use crate::nn::conv::ConvCache;
use crate::nn::norm::BatchNormCache;
use crate::nn::param::{join, ParamMut, Params};
use crate::nn::pool::MaxPoolCache;
use crate::nn::{BatchNorm2d, Conv2d, MaxPool2d, Mode};
use ndarray::Array4;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackboneConfig {
    pub widths: [usize; 4],
    pub blocks_per_stage: usize,
    /// 7x7 stride-2 stem followed by a 3x3 stride-2 max pool (full-size
    /// layout) instead of the single 3x3 stride-2 stem.
    pub large_stem: bool,
}

impl BackboneConfig {
    pub fn desk() -> BackboneConfig {
        BackboneConfig {
            widths: [16, 32, 64, 128],
            blocks_per_stage: 1,
            large_stem: false,
        }
    }

    /// 18-layer residual network layout.
    pub fn paper() -> BackboneConfig {
        BackboneConfig {
            widths: [64, 128, 256, 512],
            blocks_per_stage: 2,
            large_stem: true,
        }
    }
}

struct ResidualBlock {
    conv1: Conv2d,
    bn1: BatchNorm2d,
    conv2: Conv2d,
    bn2: BatchNorm2d,
    down: Option<(Conv2d, BatchNorm2d)>,
}

struct ResidualBlockCache {
    c1: ConvCache,
    b1: BatchNormCache,
    pre_relu1: Array4<f64>,
    c2: ConvCache,
    b2: BatchNormCache,
    down: Option<(ConvCache, BatchNormCache)>,
    pre_relu_out: Array4<f64>,
}

impl ResidualBlock {
    fn new(in_c: usize, out_c: usize, stride: usize, rng: &mut ChaCha8Rng) -> ResidualBlock {
        let down = if stride != 1 || in_c != out_c {
            Some((
                Conv2d::new(in_c, out_c, 1, stride, 0, rng),
                BatchNorm2d::new(out_c),
            ))
        } else {
            None
        };
        ResidualBlock {
            conv1: Conv2d::new(in_c, out_c, 3, stride, 1, rng),
            bn1: BatchNorm2d::new(out_c),
            conv2: Conv2d::new(out_c, out_c, 3, 1, 1, rng),
            bn2: BatchNorm2d::new(out_c),
            down,
        }
    }

    fn forward(&mut self, x: &Array4<f64>, mode: Mode) -> (Array4<f64>, ResidualBlockCache) {
        let (y1, c1) = self.conv1.forward(x);
        let (pre_relu1, b1) = self.bn1.forward(&y1, mode);
        let a1 = relu(&pre_relu1);
        let (y2, c2) = self.conv2.forward(&a1);
        let (main, b2) = self.bn2.forward(&y2, mode);
        let (skip, down_cache) = match &mut self.down {
            Some((conv, bn)) => {
                let (s1, dc) = conv.forward(x);
                let (s2, db) = bn.forward(&s1, mode);
                (s2, Some((dc, db)))
            }
            None => (x.clone(), None),
        };
        let pre_relu_out = main + skip;
        let out = relu(&pre_relu_out);
        (
            out,
            ResidualBlockCache { c1, b1, pre_relu1, c2, b2, down: down_cache, pre_relu_out },
        )
    }

    fn backward(&mut self, dy: &Array4<f64>, cache: &ResidualBlockCache) -> Array4<f64> {
        let dsum = relu_backward(dy, &cache.pre_relu_out);
        let dy2 = self.bn2.backward(&dsum, &cache.b2);
        let da1 = self.conv2.backward(&dy2, &cache.c2);
        let dpre1 = relu_backward(&da1, &cache.pre_relu1);
        let dy1 = self.bn1.backward(&dpre1, &cache.b1);
        let mut dx = self.conv1.backward(&dy1, &cache.c1);
        match (&mut self.down, &cache.down) {
            (Some((conv, bn)), Some((dc, db))) => {
                let ds = bn.backward(&dsum, db);
                dx += &conv.backward(&ds, dc);
            }
            (None, None) => dx += &dsum,
            _ => unreachable!("cache from a different block shape"),
        }
        dx
    }
}

impl Params for ResidualBlock {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(ParamMut<'_>)) {
        self.conv1.visit_params(&join(prefix, "conv1"), f);
        self.bn1.visit_params(&join(prefix, "bn1"), f);
        self.conv2.visit_params(&join(prefix, "conv2"), f);
        self.bn2.visit_params(&join(prefix, "bn2"), f);
        if let Some((conv, bn)) = &mut self.down {
            conv.visit_params(&join(prefix, "down_conv"), f);
            bn.visit_params(&join(prefix, "down_bn"), f);
        }
    }
}

pub struct Backbone {
    stem: Conv2d,
    stem_bn: BatchNorm2d,
    stem_pool: Option<MaxPool2d>,
    blocks: Vec<ResidualBlock>,
    pub out_channels: usize,
}

pub struct BackboneCache {
    stem_c: ConvCache,
    stem_b: BatchNormCache,
    stem_pre_relu: Array4<f64>,
    stem_pool: Option<MaxPoolCache>,
    blocks: Vec<ResidualBlockCache>,
    /// Final feature maps (after the last block's ReLU) — the layer targeted
    /// by class activation maps.
    pub final_act: Array4<f64>,
}

impl Backbone {
    pub fn new(cfg: &BackboneConfig, in_channels: usize, rng: &mut ChaCha8Rng) -> Backbone {
        let (stem, stem_pool) = if cfg.large_stem {
            (
                Conv2d::new(in_channels, cfg.widths[0], 7, 2, 3, rng),
                Some(MaxPool2d::new(3, 2)),
            )
        } else {
            (Conv2d::new(in_channels, cfg.widths[0], 3, 2, 1, rng), None)
        };
        let mut blocks = Vec::new();
        let mut in_c = cfg.widths[0];
        for (stage, &out_c) in cfg.widths.iter().enumerate() {
            for b in 0..cfg.blocks_per_stage {
                let stride = if stage > 0 && b == 0 { 2 } else { 1 };
                blocks.push(ResidualBlock::new(in_c, out_c, stride, rng));
                in_c = out_c;
            }
        }
        Backbone {
            stem,
            stem_bn: BatchNorm2d::new(cfg.widths[0]),
            stem_pool,
            blocks,
            out_channels: cfg.widths[3],
        }
    }

    /// x: [n, in_channels, h, w] -> final feature maps [n, out_channels, h', w'].
    pub fn forward(&mut self, x: &Array4<f64>, mode: Mode) -> (Array4<f64>, BackboneCache) {
        let (y, stem_c) = self.stem.forward(x);
        let (pre, stem_b) = self.stem_bn.forward(&y, mode);
        let mut cur = relu(&pre);
        let stem_pool = self.stem_pool.as_ref().map(|pool| {
            let (pooled, cache) = pool.forward(&cur);
            cur = pooled;
            cache
        });
        let mut block_caches = Vec::with_capacity(self.blocks.len());
        for block in &mut self.blocks {
            let (next, cache) = block.forward(&cur, mode);
            cur = next;
            block_caches.push(cache);
        }
        let cache = BackboneCache {
            stem_c,
            stem_b,
            stem_pre_relu: pre,
            stem_pool,
            blocks: block_caches,
            final_act: cur.clone(),
        };
        (cur, cache)
    }

    pub fn backward(&mut self, dy: &Array4<f64>, cache: &BackboneCache) -> Array4<f64> {
        let mut cur = dy.clone();
        for (block, bcache) in self.blocks.iter_mut().zip(cache.blocks.iter()).rev() {
            cur = block.backward(&cur, bcache);
        }
        if let (Some(pool), Some(pc)) = (&self.stem_pool, &cache.stem_pool) {
            cur = pool.backward(&cur, pc);
        }
        let dpre = relu_backward(&cur, &cache.stem_pre_relu);
        let dy1 = self.stem_bn.backward(&dpre, &cache.stem_b);
        self.stem.backward(&dy1, &cache.stem_c)
    }

    /// Spatial size of the output feature maps for a square input.
    pub fn out_spatial(&self, cfg: &BackboneConfig, input: usize) -> usize {
        let mut s = (input + 1) / 2; // stride-2 stem with matching padding
        if cfg.large_stem {
            s = (s - 3) / 2 + 1;
        }
        for _ in 1..4 {
            s = (s + 1) / 2;
        }
        s
    }
}

impl Params for Backbone {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(ParamMut<'_>)) {
        self.stem.visit_params(&join(prefix, "stem"), f);
        self.stem_bn.visit_params(&join(prefix, "stem_bn"), f);
        for (i, block) in self.blocks.iter_mut().enumerate() {
            block.visit_params(&join(prefix, &format!("block{i}")), f);
        }
    }
}
