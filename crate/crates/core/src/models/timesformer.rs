//! Space-time transformer with divided attention: each block attends over
//! time (same patch position across frames, patch tokens only, through a
//! zero-initialized projection) and then over space (patches within a frame,
//! with the class token joined per frame and its updates averaged).

use super::encoder::Mlp;
use super::{check_clips, Architecture, Model, ModelConfig};
use crate::error::{Error, Result};
use crate::nn::attention::MultiHeadAttention;
use crate::nn::param::{join, Init, ParamMut, Params};
use crate::nn::{LayerNorm, Linear, Mode};
use ndarray::{s, Array1, Array2, Array3, ArrayView2};
use rand_chacha::ChaCha8Rng;

/// Cut a frame into non-overlapping patch rows, row-major over the patch
/// grid, pixels flattened row-major within each patch.
pub fn extract_patches(frame: &ArrayView2<f64>, patch: usize) -> Array2<f64> {
    let (h, w) = frame.dim();
    let (gh, gw) = (h / patch, w / patch);
    let mut out = Array2::zeros((gh * gw, patch * patch));
    for py in 0..gh {
        for px in 0..gw {
            for i in 0..patch {
                for j in 0..patch {
                    out[[py * gw + px, i * patch + j]] = frame[[py * patch + i, px * patch + j]];
                }
            }
        }
    }
    out
}

fn scatter_patches(dpatches: &ArrayView2<f64>, patch: usize, h: usize, w: usize) -> Array2<f64> {
    let (gh, gw) = (h / patch, w / patch);
    let mut out = Array2::zeros((h, w));
    for py in 0..gh {
        for px in 0..gw {
            for i in 0..patch {
                for j in 0..patch {
                    out[[py * patch + i, px * patch + j]] = dpatches[[py * gw + px, i * patch + j]];
                }
            }
        }
    }
    out
}

struct DividedBlock {
    norm_t: LayerNorm,
    attn_t: MultiHeadAttention,
    temporal_fc: Linear,
    norm1: LayerNorm,
    attn_s: MultiHeadAttention,
    norm2: LayerNorm,
    mlp: Mlp,
}

struct TemporalCache {
    nt: Vec<crate::nn::norm::LayerNormCache>,
    at: Vec<crate::nn::attention::AttentionCache>,
    fc: crate::nn::linear::LinearCache,
}

struct BlockCache {
    temporal: Option<TemporalCache>,
    n1: Vec<crate::nn::norm::LayerNormCache>,
    n1_out: Vec<Array2<f64>>,
    attn_s: Vec<crate::nn::attention::AttentionCache>,
    n2: crate::nn::norm::LayerNormCache,
    mlp: super::encoder::MlpCache,
}

impl DividedBlock {
    fn new(dim: usize, heads: usize, rng: &mut ChaCha8Rng) -> DividedBlock {
        DividedBlock {
            norm_t: LayerNorm::new(dim),
            attn_t: MultiHeadAttention::new(dim, heads, rng),
            // zero start: the block begins as a pure spatial-attention block
            temporal_fc: Linear::new(dim, dim, Init::Zero, rng),
            norm1: LayerNorm::new(dim),
            attn_s: MultiHeadAttention::new(dim, heads, rng),
            norm2: LayerNorm::new(dim),
            mlp: Mlp::new(dim, rng),
        }
    }

    /// x: [1 + t*n, dim]; row 0 is the class token, row 1 + ti*n + p is
    /// frame ti, patch p.
    fn forward(&self, x: &Array2<f64>, t: usize, n: usize, divided: bool) -> (Array2<f64>, BlockCache) {
        let dim = x.dim().1;
        let patches = x.slice(s![1.., ..]);

        let (xt, temporal) = if divided {
            let mut at_all = Array2::zeros((t * n, dim));
            let mut nt_caches = Vec::with_capacity(n);
            let mut at_caches = Vec::with_capacity(n);
            for p in 0..n {
                let mut seq = Array2::zeros((t, dim));
                for ti in 0..t {
                    seq.row_mut(ti).assign(&patches.row(ti * n + p));
                }
                let (nt, ntc) = self.norm_t.forward(&seq);
                let (at, atc) = self.attn_t.forward(&nt);
                for ti in 0..t {
                    at_all.row_mut(ti * n + p).assign(&at.row(ti));
                }
                nt_caches.push(ntc);
                at_caches.push(atc);
            }
            let (tf_out, fc) = self.temporal_fc.forward(&at_all);
            let xt = &patches + &tf_out;
            (xt, Some(TemporalCache { nt: nt_caches, at: at_caches, fc }))
        } else {
            (patches.to_owned(), None)
        };

        let cls = x.row(0);
        let mut cls_update = Array1::<f64>::zeros(dim);
        let mut patches_mid = xt.clone();
        let mut n1_caches = Vec::with_capacity(t);
        let mut n1_outs = Vec::with_capacity(t);
        let mut attn_caches = Vec::with_capacity(t);
        for ti in 0..t {
            let mut seq = Array2::zeros((n + 1, dim));
            seq.row_mut(0).assign(&cls);
            seq.slice_mut(s![1.., ..]).assign(&xt.slice(s![ti * n..(ti + 1) * n, ..]));
            let (n1, n1c) = self.norm1.forward(&seq);
            let (attn_out, ac) = self.attn_s.forward(&n1);
            cls_update += &attn_out.row(0);
            let mut rows = patches_mid.slice_mut(s![ti * n..(ti + 1) * n, ..]);
            rows += &attn_out.slice(s![1.., ..]);
            n1_caches.push(n1c);
            n1_outs.push(n1);
            attn_caches.push(ac);
        }
        let mut z = Array2::zeros(x.dim());
        z.row_mut(0).assign(&(&cls + &(cls_update / t as f64)));
        z.slice_mut(s![1.., ..]).assign(&patches_mid);

        let (n2_out, n2) = self.norm2.forward(&z);
        let (mlp_out, mlp) = self.mlp.forward(&n2_out);
        let y = &z + &mlp_out;
        (
            y,
            BlockCache { temporal, n1: n1_caches, n1_out: n1_outs, attn_s: attn_caches, n2, mlp },
        )
    }

    /// When `capture` is given, (norm1 output, its gradient) per frame of the
    /// spatial attention path are appended in frame order.
    fn backward(
        &mut self,
        dy: &Array2<f64>,
        cache: &BlockCache,
        t: usize,
        n: usize,
        mut capture: Option<&mut Vec<(Array2<f64>, Array2<f64>)>>,
    ) -> Array2<f64> {
        let dim = dy.dim().1;
        let dn2_out = self.mlp.backward(dy, &cache.mlp);
        let mut dz = self.norm2.backward(&dn2_out, &cache.n2);
        dz += dy;

        let dcls_mid = dz.row(0).to_owned();
        let dpatches_mid = dz.slice(s![1.., ..]);
        let mut dxt = dpatches_mid.to_owned();
        let mut dcls = dcls_mid.clone();
        for ti in 0..t {
            let mut dattn = Array2::zeros((n + 1, dim));
            dattn.row_mut(0).assign(&(&dcls_mid / t as f64));
            dattn
                .slice_mut(s![1.., ..])
                .assign(&dpatches_mid.slice(s![ti * n..(ti + 1) * n, ..]));
            let dn1 = self.attn_s.backward(&dattn, &cache.attn_s[ti]);
            if let Some(sink) = capture.as_deref_mut() {
                sink.push((cache.n1_out[ti].clone(), dn1.clone()));
            }
            let dseq = self.norm1.backward(&dn1, &cache.n1[ti]);
            dcls += &dseq.row(0);
            let mut rows = dxt.slice_mut(s![ti * n..(ti + 1) * n, ..]);
            rows += &dseq.slice(s![1.., ..]);
        }

        let dpatches = match &cache.temporal {
            Some(tc) => {
                let mut dpatches = dxt.clone();
                let dtf_in = self.temporal_fc.backward(&dxt, &tc.fc);
                for p in 0..n {
                    let mut dat = Array2::zeros((t, dim));
                    for ti in 0..t {
                        dat.row_mut(ti).assign(&dtf_in.row(ti * n + p));
                    }
                    let dnt = self.attn_t.backward(&dat, &tc.at[p]);
                    let dseq = self.norm_t.backward(&dnt, &tc.nt[p]);
                    for ti in 0..t {
                        let mut row = dpatches.row_mut(ti * n + p);
                        row += &dseq.row(ti);
                    }
                }
                dpatches
            }
            None => dxt,
        };

        let mut dx = Array2::zeros(dy.dim());
        dx.row_mut(0).assign(&dcls);
        dx.slice_mut(s![1.., ..]).assign(&dpatches);
        dx
    }
}

impl Params for DividedBlock {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(ParamMut<'_>)) {
        self.norm_t.visit_params(&join(prefix, "tnorm"), f);
        self.attn_t.visit_params(&join(prefix, "tattn"), f);
        self.temporal_fc.visit_params(&join(prefix, "tfc"), f);
        self.norm1.visit_params(&join(prefix, "norm1"), f);
        self.attn_s.visit_params(&join(prefix, "attn"), f);
        self.norm2.visit_params(&join(prefix, "norm2"), f);
        self.mlp.visit_params(&join(prefix, "mlp"), f);
    }
}

pub struct TimeSformer {
    cfg: ModelConfig,
    patch_embed: Linear,
    cls: Array1<f64>,
    g_cls: Array1<f64>,
    pos_spatial: Array2<f64>,
    g_pos_spatial: Array2<f64>,
    pos_time: Array2<f64>,
    g_pos_time: Array2<f64>,
    blocks: Vec<DividedBlock>,
    norm: LayerNorm,
    head: Linear,
    /// Disables the temporal-attention sub-block, leaving pure per-frame
    /// spatial attention; used for structural comparisons.
    pub spatial_only: bool,
    cache: Option<Vec<ClipCache>>,
    /// When set, `backward_batch` records the last block's norm1 outputs and
    /// gradients per frame (for the transformer activation maps).
    pub capture_maps: bool,
    pub captured: Option<Vec<Vec<(Array2<f64>, Array2<f64>)>>>,
}

struct ClipCache {
    pe: crate::nn::linear::LinearCache,
    blocks: Vec<BlockCache>,
    final_norm: crate::nn::norm::LayerNormCache,
    head_c: crate::nn::linear::LinearCache,
}

impl TimeSformer {
    pub fn new(cfg: ModelConfig, rng: &mut ChaCha8Rng) -> Result<TimeSformer> {
        cfg.validate()?;
        if cfg.architecture != Architecture::Timesformer {
            return Err(Error::Config(format!(
                "TimeSformer built from a {} config",
                cfg.architecture.as_str()
            )));
        }
        let n = cfg.tokens_per_frame();
        let t = cfg.frames_per_video;
        let d = cfg.embed_dim;
        let p2 = cfg.patch_size * cfg.patch_size;
        let small = |rng: &mut ChaCha8Rng| {
            use rand::Rng;
            rng.gen::<f64>() * 0.04 - 0.02
        };
        let patch_embed = Linear::new(p2, d, Init::Xavier, rng);
        let cls = Array1::from_shape_simple_fn(d, || small(rng));
        let pos_spatial = Array2::from_shape_simple_fn((n, d), || small(rng));
        let pos_time = Array2::from_shape_simple_fn((t, d), || small(rng));
        let blocks = (0..cfg.encoder_layers)
            .map(|_| DividedBlock::new(d, cfg.encoder_heads, rng))
            .collect();
        let norm = LayerNorm::new(d);
        let head = Linear::new(d, cfg.n_classes, Init::Xavier, rng);
        Ok(TimeSformer {
            g_cls: Array1::zeros(d),
            g_pos_spatial: Array2::zeros(pos_spatial.dim()),
            g_pos_time: Array2::zeros(pos_time.dim()),
            cfg,
            patch_embed,
            cls,
            pos_spatial,
            pos_time,
            blocks,
            norm,
            head,
            spatial_only: false,
            cache: None,
            capture_maps: false,
            captured: None,
        })
    }

    fn forward_clip(&mut self, clip: &Array3<f64>) -> (Array2<f64>, ClipCache) {
        let t = self.cfg.frames_per_video;
        let n = self.cfg.tokens_per_frame();
        let d = self.cfg.embed_dim;
        let p = self.cfg.patch_size;
        let mut raw = Array2::zeros((t * n, p * p));
        for ti in 0..t {
            let frame = clip.index_axis(ndarray::Axis(0), ti);
            raw.slice_mut(s![ti * n..(ti + 1) * n, ..])
                .assign(&extract_patches(&frame, p));
        }
        let (pe, pe_cache) = self.patch_embed.forward(&raw);
        let mut x = Array2::zeros((1 + t * n, d));
        x.row_mut(0).assign(&self.cls);
        for ti in 0..t {
            for pi in 0..n {
                let mut row = x.row_mut(1 + ti * n + pi);
                row.assign(&pe.row(ti * n + pi));
                row += &self.pos_spatial.row(pi);
                row += &self.pos_time.row(ti);
            }
        }
        let divided = !self.spatial_only;
        let mut block_caches = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let (next, cache) = block.forward(&x, t, n, divided);
            x = next;
            block_caches.push(cache);
        }
        let cls_row = x.row(0).insert_axis(ndarray::Axis(0)).to_owned();
        let (normed, final_norm) = self.norm.forward(&cls_row);
        let (logits, head_c) = self.head.forward(&normed);
        (logits, ClipCache { pe: pe_cache, blocks: block_caches, final_norm, head_c })
    }

    fn backward_clip(
        &mut self,
        dlogit: &Array2<f64>,
        cache: &ClipCache,
        capture: Option<&mut Vec<(Array2<f64>, Array2<f64>)>>,
    ) -> Array3<f64> {
        let t = self.cfg.frames_per_video;
        let n = self.cfg.tokens_per_frame();
        let d = self.cfg.embed_dim;
        let p = self.cfg.patch_size;
        let size = self.cfg.image_size;
        let dnormed = self.head.backward(dlogit, &cache.head_c);
        let dcls_row = self.norm.backward(&dnormed, &cache.final_norm);
        let mut dx = Array2::zeros((1 + t * n, d));
        dx.row_mut(0).assign(&dcls_row.row(0));
        let last = self.blocks.len() - 1;
        let mut capture = capture;
        for i in (0..self.blocks.len()).rev() {
            let sink = if i == last { capture.take() } else { None };
            dx = self.blocks[i].backward(&dx, &cache.blocks[i], t, n, sink);
        }
        self.g_cls += &dx.row(0);
        let mut dpe = Array2::zeros((t * n, d));
        for ti in 0..t {
            for pi in 0..n {
                let row = dx.row(1 + ti * n + pi);
                self.g_pos_spatial.row_mut(pi).zip_mut_with(&row, |a, &b| *a += b);
                self.g_pos_time.row_mut(ti).zip_mut_with(&row, |a, &b| *a += b);
                dpe.row_mut(ti * n + pi).assign(&row);
            }
        }
        let draw = self.patch_embed.backward(&dpe, &cache.pe);
        let mut dclip = Array3::zeros((t, size, size));
        for ti in 0..t {
            let frame = scatter_patches(&draw.slice(s![ti * n..(ti + 1) * n, ..]), p, size, size);
            dclip.index_axis_mut(ndarray::Axis(0), ti).assign(&frame);
        }
        dclip
    }
}

impl Model for TimeSformer {
    fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    fn forward_batch(
        &mut self,
        clips: &[Array3<f64>],
        _mode: Mode,
        _rng: &mut ChaCha8Rng,
    ) -> Result<Array2<f64>> {
        check_clips(&self.cfg, clips)?;
        let mut logits = Array2::zeros((clips.len(), self.cfg.n_classes));
        let mut caches = Vec::with_capacity(clips.len());
        for (i, clip) in clips.iter().enumerate() {
            let (row, cache) = self.forward_clip(clip);
            logits.row_mut(i).assign(&row.row(0));
            caches.push(cache);
        }
        self.cache = Some(caches);
        Ok(logits)
    }

    fn backward_batch(&mut self, dlogits: &Array2<f64>) -> Vec<Array3<f64>> {
        let caches = self.cache.take().expect("forward_batch before backward_batch");
        assert_eq!(dlogits.dim().0, caches.len());
        let mut captured = self.capture_maps.then(Vec::new);
        let mut out = Vec::with_capacity(caches.len());
        for (i, cache) in caches.iter().enumerate() {
            let dlogit = dlogits.row(i).insert_axis(ndarray::Axis(0)).to_owned();
            let mut sink = captured.as_mut().map(|_| Vec::new());
            let dclip = self.backward_clip(&dlogit, cache, sink.as_mut());
            if let (Some(all), Some(one)) = (captured.as_mut(), sink) {
                all.push(one);
            }
            out.push(dclip);
        }
        if let Some(all) = captured {
            self.captured = Some(all);
        }
        out
    }
}

impl Params for TimeSformer {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(ParamMut<'_>)) {
        self.patch_embed.visit_params(&join(prefix, "patch_embed"), f);
        f(ParamMut {
            name: join(prefix, "cls"),
            value: self.cls.view_mut().into_dyn(),
            grad: self.g_cls.view_mut().into_dyn(),
        });
        f(ParamMut {
            name: join(prefix, "pos_spatial"),
            value: self.pos_spatial.view_mut().into_dyn(),
            grad: self.g_pos_spatial.view_mut().into_dyn(),
        });
        f(ParamMut {
            name: join(prefix, "pos_time"),
            value: self.pos_time.view_mut().into_dyn(),
            grad: self.g_pos_time.view_mut().into_dyn(),
        });
        for (i, block) in self.blocks.iter_mut().enumerate() {
            block.visit_params(&join(prefix, &format!("block{i}")), f);
        }
        self.norm.visit_params(&join(prefix, "norm"), f);
        self.head.visit_params(&join(prefix, "head"), f);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::Scale;
    use crate::nn::gradcheck;
    use crate::nn::param::{export_params, import_params};
    use crate::rng;
    use approx::assert_abs_diff_eq;

    fn tiny_config(frames: usize) -> ModelConfig {
        let mut cfg = ModelConfig::preset(Architecture::Timesformer, Scale::Desk);
        cfg.image_size = 8;
        cfg.patch_size = 4;
        cfg.embed_dim = 8;
        cfg.encoder_heads = 2;
        cfg.encoder_layers = 2;
        cfg.frames_per_video = frames;
        cfg
    }

    #[test]
    fn patch_round_trip() {
        let mut r = rng::stream(81, "patches");
        let frame = gradcheck::random_matrix(&mut r, 8, 8);
        let patches = extract_patches(&frame.view(), 4);
        assert_eq!(patches.dim(), (4, 16));
        // top-left patch, second pixel of the first row
        assert_eq!(patches[[0, 1]], frame[[0, 1]]);
        // bottom-right patch, first pixel
        assert_eq!(patches[[3, 0]], frame[[4, 4]]);
        let back = scatter_patches(&patches.view(), 4, 8, 8);
        assert_eq!(back, frame);
    }

    #[test]
    fn divided_equals_spatial_only_at_one_frame() {
        let mut r = rng::stream(82, "ts-t1");
        let mut divided = TimeSformer::new(tiny_config(1), &mut r).unwrap();
        let mut spatial = TimeSformer::new(tiny_config(1), &mut r).unwrap();
        spatial.spatial_only = true;
        let source: std::collections::HashMap<_, _> =
            export_params(&mut divided).into_iter().collect();
        import_params(&mut spatial, &source, true).unwrap();

        let clip = gradcheck::random_array(&mut r, (1, 8, 8));
        let mut rf = rng::stream(1, "fwd");
        let a = divided.forward_batch(&[clip.clone()], Mode::Eval, &mut rf).unwrap();
        let b = spatial.forward_batch(&[clip], Mode::Eval, &mut rf).unwrap();
        for j in 0..3 {
            assert_abs_diff_eq!(a[[0, j]], b[[0, j]], epsilon = 1e-12);
        }
    }

    #[test]
    fn patch_permutation_with_matching_positions_is_invariant() {
        let mut r = rng::stream(83, "ts-perm");
        let mut model = TimeSformer::new(tiny_config(2), &mut r).unwrap();
        // make the temporal path live so the permutation crosses it too
        model.blocks[0].temporal_fc.w.mapv_inplace(|_| 0.05);
        let clip = gradcheck::random_array(&mut r, (2, 8, 8));
        let mut rf = rng::stream(2, "fwd");
        let base = model.forward_batch(&[clip.clone()], Mode::Eval, &mut rf).unwrap();

        // 2x2 patch grid: permute blocks of the image and the spatial table
        let perm = [2usize, 0, 3, 1];
        let p = 4;
        let mut permuted_clip = clip.clone();
        for t in 0..2 {
            let frame = clip.index_axis(ndarray::Axis(0), t);
            let patches = extract_patches(&frame, p);
            let mut shuffled = patches.clone();
            for (dst, &src) in perm.iter().enumerate() {
                shuffled.row_mut(dst).assign(&patches.row(src));
            }
            let rebuilt = scatter_patches(&shuffled.view(), p, 8, 8);
            permuted_clip.index_axis_mut(ndarray::Axis(0), t).assign(&rebuilt);
        }
        let old_pos = model.pos_spatial.clone();
        for (dst, &src) in perm.iter().enumerate() {
            model.pos_spatial.row_mut(dst).assign(&old_pos.row(src));
        }
        let permuted = model.forward_batch(&[permuted_clip], Mode::Eval, &mut rf).unwrap();
        for j in 0..3 {
            assert_abs_diff_eq!(base[[0, j]], permuted[[0, j]], epsilon = 1e-10);
        }
    }

    #[test]
    fn input_gradients_match_finite_differences() {
        let mut r = rng::stream(84, "ts-grad");
        let mut model = TimeSformer::new(tiny_config(2), &mut r).unwrap();
        // exercise the temporal value path, not just the zero-init shortcut
        model.blocks.iter_mut().for_each(|b| {
            b.temporal_fc.w.mapv_inplace(|_| 0.07);
        });
        let clip = gradcheck::random_array(&mut r, (2, 8, 8));
        let mut rf = rng::stream(3, "fwd");
        let target = 0usize;
        let logits = model.forward_batch(&[clip.clone()], Mode::Eval, &mut rf).unwrap();
        let mut dlogits = Array2::zeros(logits.dim());
        dlogits[[0, target]] = 1.0;
        let dx = model.backward_batch(&dlogits).remove(0);

        let h = 1e-5;
        let mut worst = 0.0f64;
        for t in 0..2 {
            for y in (0..8).step_by(3) {
                for x in (0..8).step_by(2) {
                    let mut cp = clip.clone();
                    cp[[t, y, x]] += h;
                    let mut cm = clip.clone();
                    cm[[t, y, x]] -= h;
                    let fp =
                        model.forward_batch(&[cp], Mode::Eval, &mut rf).unwrap()[[0, target]];
                    let fm =
                        model.forward_batch(&[cm], Mode::Eval, &mut rf).unwrap()[[0, target]];
                    let num = (fp - fm) / (2.0 * h);
                    let ana = dx[[t, y, x]];
                    let rel = (num - ana).abs() / num.abs().max(ana.abs()).max(1.0);
                    worst = worst.max(rel);
                }
            }
        }
        assert!(worst < 1e-3, "worst relative error {worst}");
    }

    #[test]
    fn capture_collects_one_map_pair_per_frame() {
        let mut r = rng::stream(85, "ts-capture");
        let mut model = TimeSformer::new(tiny_config(3), &mut r).unwrap();
        model.capture_maps = true;
        let clip = gradcheck::random_array(&mut r, (3, 8, 8));
        let mut rf = rng::stream(4, "fwd");
        let logits = model.forward_batch(&[clip], Mode::Eval, &mut rf).unwrap();
        let mut dlogits = Array2::zeros(logits.dim());
        dlogits[[0, 1]] = 1.0;
        model.backward_batch(&dlogits);
        let captured = model.captured.as_ref().unwrap();
        assert_eq!(captured.len(), 1); // one clip
        assert_eq!(captured[0].len(), 3); // one per frame
        for (act, grad) in &captured[0] {
            assert_eq!(act.dim(), (5, 8)); // n + 1 tokens x dim
            assert_eq!(grad.dim(), (5, 8));
        }
    }
}
