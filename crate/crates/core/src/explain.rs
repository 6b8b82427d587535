//! Class activation maps: gradient-weighted feature maps for the CNN streams
//! and a token analogue on the last encoder block's first normalization layer
//! for the transformer, plus overlays and masked-mass quantification.

use crate::error::{Error, Result};
use crate::imgproc;
use crate::models::{CnnStream, Model, TimeSformer};
use crate::nn::Mode;
use crate::rng;
use byte_io::{read_exact_f64s, write_f64s};
use image::RgbImage;
use ndarray::{Array2, Array3, ArrayView2, ArrayView3, Axis};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

/// A max-normalized activation map at input resolution. `all_zero` marks the
/// degenerate case (no positive gradient-weighted activation anywhere), which
/// renders as a blank map rather than dividing by zero.
#[derive(Debug, Clone)]
pub struct ActivationMap {
    pub map: Array2<f64>,
    pub all_zero: bool,
}

/// Channel-weighted sum of feature maps: weights are the spatial means of the
/// per-channel gradients, negatives clipped after the sum.
pub fn cam_from_feature_maps(acts: &ArrayView3<f64>, grads: &ArrayView3<f64>) -> Array2<f64> {
    assert_eq!(acts.dim(), grads.dim());
    let (c, h, w) = acts.dim();
    let mut out = Array2::zeros((h, w));
    for k in 0..c {
        let alpha = grads.index_axis(Axis(0), k).mean().unwrap();
        out.scaled_add(alpha, &acts.index_axis(Axis(0), k));
    }
    out.mapv_inplace(|v| v.max(0.0));
    out
}

/// Token analogue: weights are the means over patch tokens of the gradient in
/// each embedding dimension; the class token (row 0) carries no spatial
/// position and is excluded from both the weights and the map.
pub fn cam_from_tokens(acts: &ArrayView2<f64>, grads: &ArrayView2<f64>, side: usize) -> Array2<f64> {
    assert_eq!(acts.dim(), grads.dim());
    let (rows, d) = acts.dim();
    assert_eq!(rows, side * side + 1, "token count does not match the patch grid");
    let patch_grads = grads.slice(ndarray::s![1.., ..]);
    let patch_acts = acts.slice(ndarray::s![1.., ..]);
    let mut alpha = vec![0.0; d];
    for j in 0..d {
        alpha[j] = patch_grads.column(j).mean().unwrap();
    }
    let mut out = Array2::zeros((side, side));
    for p in 0..side * side {
        let mut v = 0.0;
        for j in 0..d {
            v += alpha[j] * patch_acts[[p, j]];
        }
        out[[p / side, p % side]] = v.max(0.0);
    }
    out
}

/// Upsample a coarse map to the input size and normalize by its maximum.
pub fn finalize(coarse: &Array2<f64>, out_h: usize, out_w: usize) -> ActivationMap {
    let up = imgproc::resize_bilinear(coarse, out_h, out_w);
    let peak = up.iter().cloned().fold(0.0f64, f64::max);
    if peak <= 0.0 {
        return ActivationMap { map: Array2::zeros((out_h, out_w)), all_zero: true };
    }
    ActivationMap { map: up / peak, all_zero: false }
}

/// Per-frame maps for a CNN stream from the final convolutional block. The
/// temporal stream stacks the flow pairs as channels, so it yields one map.
pub fn gradcam_stream(
    model: &mut CnnStream,
    clip: &Array3<f64>,
    target: usize,
) -> Result<Vec<ActivationMap>> {
    let size = model.config().image_size;
    Ok(stream_coarse_maps(model, clip, target)?
        .iter()
        .map(|coarse| finalize(coarse, size, size))
        .collect())
}

/// The un-normalized per-frame coarse maps behind `gradcam_stream`. Their raw
/// sums stay comparable across frames, which the padding probe relies on.
pub fn stream_coarse_maps(
    model: &mut CnnStream,
    clip: &Array3<f64>,
    target: usize,
) -> Result<Vec<Array2<f64>>> {
    check_target(model.config().n_classes, target)?;
    let mut r = rng::stream(0, "explain");
    model.capture_maps = true;
    let logits = model.forward_batch(std::slice::from_ref(clip), Mode::Eval, &mut r)?;
    let mut dlogits = Array2::zeros(logits.dim());
    dlogits[[0, target]] = 1.0;
    model.backward_batch(&dlogits);
    model.capture_maps = false;
    let (acts, grads) = model
        .captured
        .take()
        .ok_or_else(|| Error::Config("stream produced no captured feature maps".into()))?;
    Ok((0..acts.dim().0)
        .map(|f| {
            cam_from_feature_maps(&acts.index_axis(Axis(0), f), &grads.index_axis(Axis(0), f))
        })
        .collect())
}

/// Per-frame maps for the transformer from the last block's norm1 output.
pub fn gradcam_timesformer(
    model: &mut TimeSformer,
    clip: &Array3<f64>,
    target: usize,
) -> Result<Vec<ActivationMap>> {
    check_target(model.config().n_classes, target)?;
    let size = model.config().image_size;
    let side = size / model.config().patch_size;
    let mut r = rng::stream(0, "explain");
    model.capture_maps = true;
    let logits = model.forward_batch(std::slice::from_ref(clip), Mode::Eval, &mut r)?;
    let mut dlogits = Array2::zeros(logits.dim());
    dlogits[[0, target]] = 1.0;
    model.backward_batch(&dlogits);
    model.capture_maps = false;
    let mut captured = model
        .captured
        .take()
        .ok_or_else(|| Error::Config("transformer produced no captured token maps".into()))?;
    let frames = captured.pop().expect("one clip was forwarded");
    Ok(frames
        .iter()
        .map(|(acts, grads)| {
            let coarse = cam_from_tokens(&acts.view(), &grads.view(), side);
            finalize(&coarse, size, size)
        })
        .collect())
}

fn check_target(n_classes: usize, target: usize) -> Result<()> {
    if target >= n_classes {
        return Err(Error::Config(format!(
            "target class {target} out of range for {n_classes} classes"
        )));
    }
    Ok(())
}

/// Average per-frame maps into one clip-level map, renormalized.
pub fn mean_map(maps: &[ActivationMap]) -> ActivationMap {
    assert!(!maps.is_empty());
    let (h, w) = maps[0].map.dim();
    let mut sum = Array2::zeros((h, w));
    for m in maps {
        sum += &m.map;
    }
    finalize(&(sum / maps.len() as f64), h, w)
}

/// Fraction of the map's mass inside the mask; 0 for an all-zero map.
pub fn region_mass(map: &Array2<f64>, mask: &Array2<bool>) -> f64 {
    assert_eq!(map.dim(), mask.dim());
    let total: f64 = map.sum();
    if total <= 0.0 {
        return 0.0;
    }
    let inside: f64 = map
        .iter()
        .zip(mask.iter())
        .filter(|(_, &m)| m)
        .map(|(&v, _)| v)
        .sum();
    inside / total
}

/// Blue-to-red heat color for a normalized value.
fn heat_color(v: f64) -> [f64; 3] {
    let band = |c: f64| (1.5 - (4.0 * v - c).abs()).clamp(0.0, 1.0);
    [band(3.0), band(2.0), band(1.0)]
}

/// Blend the heat-colored map onto a grayscale frame at half opacity.
pub fn overlay(frame: &Array2<u8>, map: &Array2<f64>) -> RgbImage {
    assert_eq!(frame.dim(), map.dim());
    let (h, w) = frame.dim();
    RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let g = frame[[y as usize, x as usize]] as f64;
        let c = heat_color(map[[y as usize, x as usize]]);
        image::Rgb([
            (0.5 * g + 0.5 * 255.0 * c[0]).round() as u8,
            (0.5 * g + 0.5 * 255.0 * c[1]).round() as u8,
            (0.5 * g + 0.5 * 255.0 * c[2]).round() as u8,
        ])
    })
}

const MAP_MAGIC: &[u8; 8] = b"TRWLMAP1";

/// Write `stem.png` (8-bit view) and `stem.f64` (exact values).
pub fn save_map(stem: &Path, m: &ActivationMap) -> Result<()> {
    let png = stem.with_extension("png");
    imgproc::write_png(&png, &imgproc::to_u8(&(&m.map * 255.0)))?;
    let raw = stem.with_extension("f64");
    let mut f = BufWriter::new(File::create(&raw).map_err(|e| Error::io(&raw, e))?);
    let io = |e| Error::io(&raw, e);
    f.write_all(MAP_MAGIC).map_err(io)?;
    let (h, w) = m.map.dim();
    f.write_all(&(h as u32).to_le_bytes()).map_err(io)?;
    f.write_all(&(w as u32).to_le_bytes()).map_err(io)?;
    write_f64s(&mut f, m.map.as_slice().expect("standard layout")).map_err(io)?;
    Ok(())
}

pub fn read_map(path: &Path) -> Result<Array2<f64>> {
    let mut f = BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?);
    let io = |e| Error::io(path, e);
    let mut magic = [0u8; 8];
    f.read_exact(&mut magic).map_err(io)?;
    if &magic != MAP_MAGIC {
        return Err(Error::Data(format!("{}: not an activation map file", path.display())));
    }
    let mut dims = [0u8; 8];
    f.read_exact(&mut dims).map_err(io)?;
    let h = u32::from_le_bytes(dims[..4].try_into().unwrap()) as usize;
    let w = u32::from_le_bytes(dims[4..].try_into().unwrap()) as usize;
    let data = read_exact_f64s(&mut f, h * w).map_err(io)?;
    Array2::from_shape_vec((h, w), data)
        .map_err(|_| Error::Data(format!("{}: truncated map payload", path.display())))
}

mod byte_io {
    use std::io::{self, Read, Write};

    pub fn write_f64s<W: Write>(w: &mut W, vals: &[f64]) -> io::Result<()> {
        for v in vals {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_exact_f64s<R: Read>(r: &mut R, n: usize) -> io::Result<Vec<f64>> {
        let mut buf = vec![0u8; n * 8];
        r.read_exact(&mut buf)?;
        Ok(buf
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}
