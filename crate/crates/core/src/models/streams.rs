//! The two-stream CNN: one network type covering both streams (the spatial
//! stream feeds frames one at a time and averages logits; the temporal
//! stream consumes the whole gray/flow stack at once), plus score fusion.

use super::backbone::{Backbone, BackboneCache};
use super::{check_clips, Architecture, Model, ModelConfig};
use crate::error::{Error, Result};
use crate::metrics::{softmax, ClassScores, PredictedProbability};
use crate::nn::linear::LinearCache;
use crate::nn::param::{join, ParamMut, Params};
use crate::nn::pool::{global_avg_pool, global_avg_pool_backward};
use crate::nn::{Init, Linear, Mode};
use ndarray::{s, Array2, Array3, Array4};
use rand_chacha::ChaCha8Rng;

pub struct CnnStream {
    cfg: ModelConfig,
    pub backbone: Backbone,
    head: Linear,
    /// Sub-images per clip and channels per sub-image; (8, 1) for the spatial
    /// stream, (1, 14) for the temporal stream.
    frames: usize,
    in_channels: usize,
    cache: Option<StreamCache>,
    /// When set, `backward_batch` records the final feature maps and their
    /// gradients for class activation mapping.
    pub capture_maps: bool,
    pub captured: Option<(Array4<f64>, Array4<f64>)>,
}

struct StreamCache {
    bb: BackboneCache,
    head_c: LinearCache,
    feat_hw: (usize, usize),
    n_clips: usize,
    frame_hw: (usize, usize),
}

impl CnnStream {
    pub fn new(cfg: ModelConfig, rng: &mut ChaCha8Rng) -> Result<CnnStream> {
        cfg.validate()?;
        let (frames, in_channels) = match cfg.architecture {
            Architecture::Spatial => (cfg.frames_per_video, 1),
            Architecture::Temporal => (1, cfg.frames_per_video),
            other => {
                return Err(Error::Config(format!(
                    "CnnStream covers spatial/temporal, not {}",
                    other.as_str()
                )))
            }
        };
        let backbone = Backbone::new(&cfg.backbone, in_channels, rng);
        let head = Linear::new(backbone.out_channels, cfg.n_classes, Init::Xavier, rng);
        Ok(CnnStream {
            cfg,
            backbone,
            head,
            frames,
            in_channels,
            cache: None,
            capture_maps: false,
            captured: None,
        })
    }

    /// Flatten clips into the frame-level batch the backbone sees.
    fn to_batch(&self, clips: &[Array3<f64>]) -> Array4<f64> {
        let n = clips.len();
        let (_, h, w) = clips[0].dim();
        let mut x = Array4::zeros((n * self.frames, self.in_channels, h, w));
        for (i, clip) in clips.iter().enumerate() {
            for f in 0..self.frames {
                let lo = f * self.in_channels;
                x.slice_mut(s![i * self.frames + f, .., .., ..])
                    .assign(&clip.slice(s![lo..lo + self.in_channels, .., ..]));
            }
        }
        x
    }
}

impl Model for CnnStream {
    fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    fn forward_batch(
        &mut self,
        clips: &[Array3<f64>],
        mode: Mode,
        _rng: &mut ChaCha8Rng,
    ) -> Result<Array2<f64>> {
        check_clips(&self.cfg, clips)?;
        let n = clips.len();
        let (_, h, w) = clips[0].dim();
        let x = self.to_batch(clips);
        let (feat, bb) = self.backbone.forward(&x, mode);
        let (_, _, fh, fw) = feat.dim();
        let pooled = global_avg_pool(&feat);
        let (per_frame, head_c) = self.head.forward(&pooled);
        let mut logits = Array2::zeros((n, self.cfg.n_classes));
        for i in 0..n {
            for f in 0..self.frames {
                let row = per_frame.row(i * self.frames + f);
                logits
                    .row_mut(i)
                    .zip_mut_with(&row, |acc, &v| *acc += v / self.frames as f64);
            }
        }
        self.cache = Some(StreamCache {
            bb,
            head_c,
            feat_hw: (fh, fw),
            n_clips: n,
            frame_hw: (h, w),
        });
        Ok(logits)
    }

    fn backward_batch(&mut self, dlogits: &Array2<f64>) -> Vec<Array3<f64>> {
        let cache = self.cache.take().expect("forward_batch before backward_batch");
        assert_eq!(dlogits.dim().0, cache.n_clips);
        let n = cache.n_clips;
        let mut d_per_frame = Array2::zeros((n * self.frames, self.cfg.n_classes));
        for i in 0..n {
            for f in 0..self.frames {
                let scaled = dlogits.row(i).mapv(|v| v / self.frames as f64);
                d_per_frame.row_mut(i * self.frames + f).assign(&scaled);
            }
        }
        let dpooled = self.head.backward(&d_per_frame, &cache.head_c);
        let dfeat = global_avg_pool_backward(&dpooled, cache.feat_hw.0, cache.feat_hw.1);
        if self.capture_maps {
            self.captured = Some((cache.bb.final_act.clone(), dfeat.clone()));
        }
        let dx = self.backbone.backward(&dfeat, &cache.bb);
        let (h, w) = cache.frame_hw;
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let mut clip = Array3::zeros((self.frames * self.in_channels, h, w));
            for f in 0..self.frames {
                let lo = f * self.in_channels;
                clip.slice_mut(s![lo..lo + self.in_channels, .., ..])
                    .assign(&dx.slice(s![i * self.frames + f, .., .., ..]));
            }
            out.push(clip);
        }
        out
    }
}

impl Params for CnnStream {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(ParamMut<'_>)) {
        self.backbone.visit_params(&join(prefix, "backbone"), f);
        self.head.visit_params(&join(prefix, "head"), f);
    }
}

/// Late fusion of the two streams: elementwise mean of the softmaxed scores.
/// The streams are trained independently; fusion happens only at evaluation.
pub fn fuse_two_stream(s: &ClassScores, t: &ClassScores) -> Result<PredictedProbability> {
    if s.len() != t.len() {
        return Err(Error::Shape(format!(
            "stream score lengths differ: {} vs {}",
            s.len(),
            t.len()
        )));
    }
    let ps = softmax(s);
    let pt = softmax(t);
    Ok(PredictedProbability(
        ps.0.iter().zip(pt.0.iter()).map(|(a, b)| (a + b) / 2.0).collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::Scale;
    use crate::nn::gradcheck;
    use crate::rng;
    use approx::assert_abs_diff_eq;

    fn tiny_spatial(frames: usize, image: usize) -> ModelConfig {
        let mut cfg = ModelConfig::preset(Architecture::Spatial, Scale::Desk);
        cfg.backbone.widths = [2, 3, 4, 5];
        cfg.frames_per_video = frames;
        cfg.image_size = image;
        cfg
    }

    fn tiny_temporal(channels: usize, image: usize) -> ModelConfig {
        let mut cfg = ModelConfig::preset(Architecture::Temporal, Scale::Desk);
        cfg.backbone.widths = [2, 3, 4, 5];
        cfg.frames_per_video = channels;
        cfg.image_size = image;
        cfg
    }

    #[test]
    fn identical_frames_equal_single_frame_logits() {
        let mut r = rng::stream(51, "spatial-avg");
        let mut model8 = CnnStream::new(tiny_spatial(8, 16), &mut r).unwrap();
        let mut rng_fwd = rng::stream(0, "fwd");
        let frame = gradcheck::random_array(&mut r, (1, 16, 16));
        let mut clip8 = Array3::zeros((8, 16, 16));
        for f in 0..8 {
            clip8.slice_mut(s![f, .., ..]).assign(&frame.slice(s![0, .., ..]));
        }
        let logits8 = model8
            .forward_batch(&[clip8.clone()], Mode::Eval, &mut rng_fwd)
            .unwrap();

        // same weights, single-frame config
        let mut model1 = CnnStream::new(tiny_spatial(1, 16), &mut r).unwrap();
        let source: std::collections::HashMap<_, _> =
            crate::nn::param::export_params(&mut model8).into_iter().collect();
        crate::nn::param::import_params(&mut model1, &source, true).unwrap();
        let logits1 = model1.forward_batch(&[frame], Mode::Eval, &mut rng_fwd).unwrap();
        for j in 0..3 {
            assert_abs_diff_eq!(logits8[[0, j]], logits1[[0, j]], epsilon = 1e-10);
        }
    }

    #[test]
    fn frame_order_does_not_change_logits() {
        let mut r = rng::stream(52, "spatial-perm");
        let mut model = CnnStream::new(tiny_spatial(4, 16), &mut r).unwrap();
        let mut rng_fwd = rng::stream(0, "fwd");
        let clip = gradcheck::random_array(&mut r, (4, 16, 16));
        let mut permuted = Array3::zeros((4, 16, 16));
        for (dst, src) in [3usize, 0, 2, 1].iter().enumerate() {
            permuted.slice_mut(s![dst, .., ..]).assign(&clip.slice(s![*src, .., ..]));
        }
        let a = model.forward_batch(&[clip], Mode::Eval, &mut rng_fwd).unwrap();
        let b = model.forward_batch(&[permuted], Mode::Eval, &mut rng_fwd).unwrap();
        for j in 0..3 {
            assert_abs_diff_eq!(a[[0, j]], b[[0, j]], epsilon = 1e-10);
        }
    }

    #[test]
    fn wrong_frame_count_is_rejected() {
        let mut r = rng::stream(53, "spatial-reject");
        let mut model = CnnStream::new(tiny_spatial(8, 16), &mut r).unwrap();
        let mut rng_fwd = rng::stream(0, "fwd");
        let clip = Array3::zeros((5, 16, 16));
        assert!(model.forward_batch(&[clip], Mode::Eval, &mut rng_fwd).is_err());
    }

    #[test]
    fn temporal_stream_handles_zero_stack() {
        let mut r = rng::stream(54, "temporal-zero");
        let mut model = CnnStream::new(tiny_temporal(14, 16), &mut r).unwrap();
        let mut rng_fwd = rng::stream(0, "fwd");
        let clip = Array3::zeros((14, 16, 16));
        let logits = model.forward_batch(&[clip], Mode::Eval, &mut rng_fwd).unwrap();
        assert_eq!(logits.dim(), (1, 3));
        assert!(logits.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn temporal_input_gradients_match_finite_differences() {
        let mut r = rng::stream(55, "temporal-grad");
        let mut model = CnnStream::new(tiny_temporal(3, 8), &mut r).unwrap();
        let mut rng_fwd = rng::stream(0, "fwd");
        let clip = gradcheck::random_array(&mut r, (3, 8, 8));
        let target = 1usize;

        let logits = model
            .forward_batch(&[clip.clone()], Mode::Eval, &mut rng_fwd)
            .unwrap();
        let mut dlogits = Array2::zeros(logits.dim());
        dlogits[[0, target]] = 1.0;
        let dx = model.backward_batch(&dlogits).remove(0);

        let h = 1e-5;
        let mut worst = 0.0f64;
        for c in 0..3 {
            for y in (0..8).step_by(3) {
                for x in (0..8).step_by(3) {
                    let mut cp = clip.clone();
                    cp[[c, y, x]] += h;
                    let mut cm = clip.clone();
                    cm[[c, y, x]] -= h;
                    let fp = model.forward_batch(&[cp], Mode::Eval, &mut rng_fwd).unwrap()
                        [[0, target]];
                    let fm = model.forward_batch(&[cm], Mode::Eval, &mut rng_fwd).unwrap()
                        [[0, target]];
                    let num = (fp - fm) / (2.0 * h);
                    let ana = dx[[c, y, x]];
                    let rel = (num - ana).abs() / num.abs().max(ana.abs()).max(1.0);
                    worst = worst.max(rel);
                }
            }
        }
        assert!(worst < 1e-3, "worst relative error {worst}");
    }

    #[test]
    fn fusion_closed_forms() {
        let s = ClassScores(vec![0.0, 0.0, 0.0]);
        let t = ClassScores(vec![2.0f64.ln(), 0.0, 0.0]);
        let fused = fuse_two_stream(&s, &t).unwrap();
        assert_abs_diff_eq!(fused.0[0], 5.0 / 12.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fused.0[1], 7.0 / 24.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fused.0[2], 7.0 / 24.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fused.0.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        // uniform stream leaves the other stream's argmax in charge
        assert_eq!(fused.argmax(), 0);

        let same = fuse_two_stream(&t, &t).unwrap();
        let direct = softmax(&t);
        for (a, b) in same.0.iter().zip(direct.0.iter()) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-12);
        }

        assert!(fuse_two_stream(&s, &ClassScores(vec![1.0, 2.0])).is_err());
    }
}
