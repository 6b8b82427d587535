//! Grayscale image helpers shared by the generator, flow and model loaders.

use crate::error::{Error, Result};
use image::{GrayImage, ImageBuffer, Luma};
use ndarray::Array2;
use std::path::Path;

/// Convert a u8 frame to f64 without rescaling.
pub fn to_f64(frame: &Array2<u8>) -> Array2<f64> {
    frame.mapv(f64::from)
}

/// Clamp-and-round an f64 buffer in [0,255] to u8.
pub fn to_u8(buf: &Array2<f64>) -> Array2<u8> {
    buf.mapv(|v| v.round().clamp(0.0, 255.0) as u8)
}

pub fn write_png(path: &Path, frame: &Array2<u8>) -> Result<()> {
    let (h, w) = frame.dim();
    let img: GrayImage = ImageBuffer::from_fn(w as u32, h as u32, |x, y| {
        Luma([frame[[y as usize, x as usize]]])
    });
    img.save(path)
        .map_err(|e| Error::Data(format!("writing {}: {e}", path.display())))
}

pub fn read_png(path: &Path) -> Result<Array2<u8>> {
    let img = image::open(path)
        .map_err(|e| Error::Data(format!("reading {}: {e}", path.display())))?
        .into_luma8();
    let (w, h) = img.dimensions();
    Ok(Array2::from_shape_fn((h as usize, w as usize), |(y, x)| {
        img.get_pixel(x as u32, y as u32)[0]
    }))
}

/// Bilinear sample with edge clamping.
pub fn sample_bilinear(img: &Array2<f64>, y: f64, x: f64) -> f64 {
    let (h, w) = img.dim();
    let yc = y.clamp(0.0, (h - 1) as f64);
    let xc = x.clamp(0.0, (w - 1) as f64);
    let y0 = yc.floor() as usize;
    let x0 = xc.floor() as usize;
    let y1 = (y0 + 1).min(h - 1);
    let x1 = (x0 + 1).min(w - 1);
    let fy = yc - y0 as f64;
    let fx = xc - x0 as f64;
    let a = img[[y0, x0]] * (1.0 - fx) + img[[y0, x1]] * fx;
    let b = img[[y1, x0]] * (1.0 - fx) + img[[y1, x1]] * fx;
    a * (1.0 - fy) + b * fy
}

/// Bilinear resize to `(out_h, out_w)` with pixel-center alignment.
pub fn resize_bilinear(img: &Array2<f64>, out_h: usize, out_w: usize) -> Array2<f64> {
    let (h, w) = img.dim();
    if h == out_h && w == out_w {
        return img.clone();
    }
    let sy = h as f64 / out_h as f64;
    let sx = w as f64 / out_w as f64;
    Array2::from_shape_fn((out_h, out_w), |(oy, ox)| {
        let y = (oy as f64 + 0.5) * sy - 0.5;
        let x = (ox as f64 + 0.5) * sx - 0.5;
        sample_bilinear(img, y, x)
    })
}

/// Separable Gaussian blur with reflected borders.
pub fn gaussian_blur(img: &Array2<f64>, sigma: f64) -> Array2<f64> {
    if sigma <= 0.0 {
        return img.clone();
    }
    let radius = (sigma * 3.0).ceil().max(1.0) as i64;
    let mut kernel = Vec::with_capacity((2 * radius + 1) as usize);
    let mut sum = 0.0;
    for i in -radius..=radius {
        let v = (-(i * i) as f64 / (2.0 * sigma * sigma)).exp();
        kernel.push(v);
        sum += v;
    }
    for v in &mut kernel {
        *v /= sum;
    }
    let (h, w) = img.dim();
    let reflect = |i: i64, n: usize| -> usize {
        let n = n as i64;
        let mut i = i;
        if i < 0 {
            i = -i;
        }
        if i >= n {
            i = 2 * n - 2 - i;
        }
        i.clamp(0, n - 1) as usize
    };
    // rows
    let mut tmp = Array2::<f64>::zeros((h, w));
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (ki, kv) in kernel.iter().enumerate() {
                let xi = reflect(x as i64 + ki as i64 - radius, w);
                acc += img[[y, xi]] * kv;
            }
            tmp[[y, x]] = acc;
        }
    }
    // columns
    let mut out = Array2::<f64>::zeros((h, w));
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (ki, kv) in kernel.iter().enumerate() {
                let yi = reflect(y as i64 + ki as i64 - radius, h);
                acc += tmp[[yi, x]] * kv;
            }
            out[[y, x]] = acc;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn png_round_trip(){
        let dir = tempfile::tempdir().unwrap();
        let frame = Array2::from_shape_fn((9, 13), |(y, x)| ((y * 31 + x * 7) % 256) as u8);
        let path = dir.path().join("f.png");
        write_png(&path, &frame).unwrap();
        let back = read_png(&path).unwrap();
        assert_eq!(frame, back);
    }

    #[test]
    fn resize_identity_when_same_size() {
        let img = Array2::from_shape_fn((8, 8), |(y, x)| (y * 8 + x) as f64);
        assert_eq!(resize_bilinear(&img, 8, 8), img);
    }

    #[test]
    fn resize_preserves_constant_images() {
        let img = Array2::from_elem((16, 16), 42.0);
        let out = resize_bilinear(&img, 7, 5);
        for v in out.iter() {
            assert_abs_diff_eq!(*v, 42.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn blur_preserves_mass_of_constant_image() {
        let img = Array2::from_elem((12, 12), 3.0);
        let out = gaussian_blur(&img, 1.3);
        for v in out.iter() {
            assert_abs_diff_eq!(*v, 3.0, epsilon = 1e-9);
        }
    }
}
