//! CNN-transformer hybrid: backbone embeddings per frame, a small encoder
//! over the 12-token frame sequence, max-pool over tokens, dropout, linear
//! head.

use super::backbone::{Backbone, BackboneCache};
use super::encoder::{EncoderBlock, EncoderBlockCache};
use super::{check_clips, Architecture, Model, ModelConfig};
use crate::error::{Error, Result};
use crate::nn::dropout::DropoutCache;
use crate::nn::linear::LinearCache;
use crate::nn::param::{join, Init, ParamMut, Params};
use crate::nn::pool::{
    global_avg_pool, global_avg_pool_backward, token_max_pool, token_max_pool_backward,
};
use crate::nn::{Dropout, Linear, Mode};
use ndarray::{s, Array2, Array3, Array4};
use rand_chacha::ChaCha8Rng;

pub struct Hybrid {
    cfg: ModelConfig,
    pub backbone: Backbone,
    proj: Linear,
    /// Learned 1-D positional table, one row per frame token.
    pos: Array2<f64>,
    g_pos: Array2<f64>,
    blocks: Vec<EncoderBlock>,
    dropout: Dropout,
    head: Linear,
    cache: Option<HybridCache>,
}

struct ClipCache {
    enc: Vec<EncoderBlockCache>,
    pool_arg: Vec<usize>,
    drop: DropoutCache,
    head_c: LinearCache,
}

struct HybridCache {
    bb: BackboneCache,
    feat_hw: (usize, usize),
    proj_c: LinearCache,
    clips: Vec<ClipCache>,
    frame_hw: (usize, usize),
}

impl Hybrid {
    pub fn new(cfg: ModelConfig, rng: &mut ChaCha8Rng) -> Result<Hybrid> {
        cfg.validate()?;
        if cfg.architecture != Architecture::Hybrid {
            return Err(Error::Config(format!(
                "Hybrid built from a {} config",
                cfg.architecture.as_str()
            )));
        }
        let backbone = Backbone::new(&cfg.backbone, 1, rng);
        let proj = Linear::new(backbone.out_channels, cfg.embed_dim, Init::Xavier, rng);
        let pos = Array2::from_shape_simple_fn((cfg.frames_per_video, cfg.embed_dim), || {
            use rand::Rng;
            rng.gen::<f64>() * 0.04 - 0.02
        });
        let blocks = (0..cfg.encoder_layers)
            .map(|_| EncoderBlock::new(cfg.embed_dim, cfg.encoder_heads, rng))
            .collect();
        let dropout = Dropout::new(cfg.dropout_rate);
        let head = Linear::new(cfg.embed_dim, cfg.n_classes, Init::Xavier, rng);
        Ok(Hybrid {
            g_pos: Array2::zeros(pos.dim()),
            cfg,
            backbone,
            proj,
            pos,
            blocks,
            dropout,
            head,
            cache: None,
        })
    }
}

impl Model for Hybrid {
    fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    fn forward_batch(
        &mut self,
        clips: &[Array3<f64>],
        mode: Mode,
        rng: &mut ChaCha8Rng,
    ) -> Result<Array2<f64>> {
        check_clips(&self.cfg, clips)?;
        let n = clips.len();
        let f = self.cfg.frames_per_video;
        let (_, h, w) = clips[0].dim();
        let mut x = Array4::zeros((n * f, 1, h, w));
        for (i, clip) in clips.iter().enumerate() {
            for t in 0..f {
                x.slice_mut(s![i * f + t, 0, .., ..]).assign(&clip.slice(s![t, .., ..]));
            }
        }
        let (feat, bb) = self.backbone.forward(&x, mode);
        let (_, _, fh, fw) = feat.dim();
        let pooled = global_avg_pool(&feat);
        let (emb, proj_c) = self.proj.forward(&pooled);

        let mut logits = Array2::zeros((n, self.cfg.n_classes));
        let mut clip_caches = Vec::with_capacity(n);
        for i in 0..n {
            let mut tokens = emb.slice(s![i * f..(i + 1) * f, ..]).to_owned();
            tokens += &self.pos;
            let mut enc = Vec::with_capacity(self.blocks.len());
            for block in &self.blocks {
                let (next, cache) = block.forward(&tokens);
                tokens = next;
                enc.push(cache);
            }
            let (pooled_tok, pool_arg) = token_max_pool(&tokens);
            let (dropped, drop) = self.dropout.forward(&pooled_tok.into_dyn(), mode, rng);
            let row = Array2::from_shape_vec(
                (1, self.cfg.embed_dim),
                dropped.iter().cloned().collect(),
            )
            .unwrap();
            let (out, head_c) = self.head.forward(&row);
            logits.row_mut(i).assign(&out.row(0));
            clip_caches.push(ClipCache { enc, pool_arg, drop, head_c });
        }
        self.cache = Some(HybridCache {
            bb,
            feat_hw: (fh, fw),
            proj_c,
            clips: clip_caches,
            frame_hw: (h, w),
        });
        Ok(logits)
    }

    fn backward_batch(&mut self, dlogits: &Array2<f64>) -> Vec<Array3<f64>> {
        let cache = self.cache.take().expect("forward_batch before backward_batch");
        let n = cache.clips.len();
        assert_eq!(dlogits.dim().0, n);
        let f = self.cfg.frames_per_video;
        let mut d_emb = Array2::zeros((n * f, self.cfg.embed_dim));
        for (i, clip_cache) in cache.clips.iter().enumerate() {
            let dout = dlogits.row(i).insert_axis(ndarray::Axis(0)).to_owned();
            let drow = self.head.backward(&dout, &clip_cache.head_c);
            let ddropped = drow.row(0).to_owned().into_dyn();
            let dpooled_tok = self.dropout.backward(&ddropped, &clip_cache.drop);
            let dpooled_1d = ndarray::Array1::from_iter(dpooled_tok.iter().cloned());
            let mut dtokens = token_max_pool_backward(&dpooled_1d, &clip_cache.pool_arg, f);
            for (block, bcache) in self.blocks.iter_mut().zip(clip_cache.enc.iter()).rev() {
                dtokens = block.backward(&dtokens, bcache);
            }
            self.g_pos += &dtokens;
            d_emb.slice_mut(s![i * f..(i + 1) * f, ..]).assign(&dtokens);
        }
        let dpooled = self.proj.backward(&d_emb, &cache.proj_c);
        let dfeat = global_avg_pool_backward(&dpooled, cache.feat_hw.0, cache.feat_hw.1);
        let dx = self.backbone.backward(&dfeat, &cache.bb);
        let (h, w) = cache.frame_hw;
        (0..n)
            .map(|i| {
                let mut clip = Array3::zeros((f, h, w));
                for t in 0..f {
                    clip.slice_mut(s![t, .., ..]).assign(&dx.slice(s![i * f + t, 0, .., ..]));
                }
                clip
            })
            .collect()
    }
}

impl Params for Hybrid {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(ParamMut<'_>)) {
        self.backbone.visit_params(&join(prefix, "backbone"), f);
        self.proj.visit_params(&join(prefix, "proj"), f);
        f(ParamMut {
            name: join(prefix, "pos"),
            value: self.pos.view_mut().into_dyn(),
            grad: self.g_pos.view_mut().into_dyn(),
        });
        for (i, block) in self.blocks.iter_mut().enumerate() {
            block.visit_params(&join(prefix, &format!("enc{i}")), f);
        }
        self.head.visit_params(&join(prefix, "head"), f);
    }
}
