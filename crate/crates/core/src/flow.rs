//! Dense optical flow via polynomial expansion (Farneback-style) and the
//! 14-channel temporal-stream input stack.

use crate::error::{Error, Result};
use crate::imgproc;
use crate::par;
use ndarray::Array2;
use std::io::{Read, Write};
use std::path::Path;

/// Magnitudes are rescaled to 8-bit with a fixed clip at this many px/frame.
pub const MAG_CLIP: f64 = 8.0;
/// Temporal-stream pair count ("2x7" input).
pub const N_PAIRS: usize = 7;

const CACHE_MAGIC: &[u8; 8] = b"TRWLFLW1";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowParams {
    pub levels: usize,
    pub scale: f64,
    pub winsize: usize,
    pub iterations: usize,
    pub poly_n: usize,
    pub poly_sigma: f64,
}

impl Default for FlowParams {
    fn default() -> Self {
        FlowParams {
            levels: 3,
            scale: 0.5,
            winsize: 15,
            iterations: 3,
            poly_n: 5,
            poly_sigma: 1.1,
        }
    }
}

/// Per-pixel displacement (dx, dy) from the first frame to the second.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    pub dx: Array2<f64>,
    pub dy: Array2<f64>,
}

impl FlowField {
    pub fn zeros(h: usize, w: usize) -> FlowField {
        FlowField {
            dx: Array2::zeros((h, w)),
            dy: Array2::zeros((h, w)),
        }
    }

    pub fn dim(&self) -> (usize, usize) {
        self.dx.dim()
    }
}

/// Quadratic expansion coefficients per pixel: f ~ c + b'x + x'Ax locally.
struct Expansion {
    b_x: Array2<f64>,
    b_y: Array2<f64>,
    a_xx: Array2<f64>,
    a_yy: Array2<f64>,
    a_xy: Array2<f64>,
}

/// Pseudoinverse mapping window samples to the six polynomial coefficients,
/// for a Gaussian applicability of side `n`.
struct PolyMatrix {
    half: i64,
    /// 6 x n^2, rows ordered (1, x, y, x^2, y^2, xy).
    m: Vec<Vec<f64>>,
}

impl PolyMatrix {
    fn new(n: usize, sigma: f64) -> PolyMatrix {
        assert!(n % 2 == 1 && n >= 3);
        let half = (n / 2) as i64;
        let mut basis: Vec<[f64; 6]> = Vec::with_capacity(n * n);
        let mut weights: Vec<f64> = Vec::with_capacity(n * n);
        for dy in -half..=half {
            for dx in -half..=half {
                let (x, y) = (dx as f64, dy as f64);
                basis.push([1.0, x, y, x * x, y * y, x * y]);
                weights.push((-(x * x + y * y) / (2.0 * sigma * sigma)).exp());
            }
        }
        // G = B'WB (6x6), then M = G^-1 B'W
        let mut g = [[0.0f64; 6]; 6];
        for (k, b) in basis.iter().enumerate() {
            for i in 0..6 {
                for j in 0..6 {
                    g[i][j] += weights[k] * b[i] * b[j];
                }
            }
        }
        let g_inv = invert6(&g);
        let mut m = vec![vec![0.0f64; n * n]; 6];
        for (k, b) in basis.iter().enumerate() {
            for i in 0..6 {
                let mut acc = 0.0;
                for (j, row) in g_inv.iter().enumerate() {
                    acc += row[i] * b[j];
                }
                // symmetric G means rows/cols interchangeable; acc = (G^-1 b)_i
                m[i][k] = acc * weights[k];
            }
        }
        PolyMatrix { half, m }
    }
}

/// Gauss-Jordan with partial pivoting; the applicability Gram matrix is well
/// conditioned for any reasonable (n, sigma).
fn invert6(a: &[[f64; 6]; 6]) -> [[f64; 6]; 6] {
    let mut aug = [[0.0f64; 12]; 6];
    for i in 0..6 {
        aug[i][..6].copy_from_slice(&a[i]);
        aug[i][6 + i] = 1.0;
    }
    for col in 0..6 {
        let pivot = (col..6)
            .max_by(|&p, &q| aug[p][col].abs().partial_cmp(&aug[q][col].abs()).unwrap())
            .unwrap();
        aug.swap(col, pivot);
        let diag = aug[col][col];
        assert!(diag.abs() > 1e-12, "singular applicability Gram matrix");
        for v in aug[col].iter_mut() {
            *v /= diag;
        }
        for row in 0..6 {
            if row != col {
                let factor = aug[row][col];
                for k in 0..12 {
                    aug[row][k] -= factor * aug[col][k];
                }
            }
        }
    }
    let mut inv = [[0.0f64; 6]; 6];
    for i in 0..6 {
        inv[i].copy_from_slice(&aug[i][6..]);
    }
    inv
}

fn expand(img: &Array2<f64>, poly: &PolyMatrix) -> Expansion {
    let (h, w) = img.dim();
    let half = poly.half;
    let rows = par::map_range(h, |y| {
        let mut row = vec![[0.0f64; 5]; w];
        let mut window = vec![0.0f64; ((2 * half + 1) * (2 * half + 1)) as usize];
        for x in 0..w {
            let mut k = 0;
            for dy in -half..=half {
                for dx in -half..=half {
                    let yy = (y as i64 + dy).clamp(0, h as i64 - 1) as usize;
                    let xx = (x as i64 + dx).clamp(0, w as i64 - 1) as usize;
                    window[k] = img[[yy, xx]];
                    k += 1;
                }
            }
            let coef = |i: usize| -> f64 {
                poly.m[i].iter().zip(&window).map(|(m, v)| m * v).sum()
            };
            // r1 is the local DC term and never used downstream
            row[x] = [coef(1), coef(2), coef(3), coef(4), coef(5)];
        }
        row
    });
    let mut e = Expansion {
        b_x: Array2::zeros((h, w)),
        b_y: Array2::zeros((h, w)),
        a_xx: Array2::zeros((h, w)),
        a_yy: Array2::zeros((h, w)),
        a_xy: Array2::zeros((h, w)),
    };
    for (y, row) in rows.into_iter().enumerate() {
        for (x, c) in row.into_iter().enumerate() {
            e.b_x[[y, x]] = c[0];
            e.b_y[[y, x]] = c[1];
            e.a_xx[[y, x]] = c[2];
            e.a_yy[[y, x]] = c[3];
            e.a_xy[[y, x]] = c[4] / 2.0;
        }
    }
    e
}

/// Separable box mean of width `win` with clamped borders.
fn box_mean(img: &Array2<f64>, win: usize) -> Array2<f64> {
    let (h, w) = img.dim();
    let half = (win / 2) as i64;
    let norm = 1.0 / win as f64;
    let mut tmp = Array2::<f64>::zeros((h, w));
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for d in -half..=half {
                let xx = (x as i64 + d).clamp(0, w as i64 - 1) as usize;
                acc += img[[y, xx]];
            }
            tmp[[y, x]] = acc * norm;
        }
    }
    let mut out = Array2::<f64>::zeros((h, w));
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for d in -half..=half {
                let yy = (y as i64 + d).clamp(0, h as i64 - 1) as usize;
                acc += tmp[[yy, x]];
            }
            out[[y, x]] = acc * norm;
        }
    }
    out
}

/// One displacement refinement pass: average the two expansions along the
/// current flow, build the local least-squares system, smooth it over the
/// window and solve the 2x2 per pixel.
fn update_flow(e1: &Expansion, e2: &Expansion, flow: &FlowField, win: usize) -> FlowField {
    let (h, w) = e1.b_x.dim();
    let mut g11 = Array2::<f64>::zeros((h, w));
    let mut g12 = Array2::<f64>::zeros((h, w));
    let mut g22 = Array2::<f64>::zeros((h, w));
    let mut h1 = Array2::<f64>::zeros((h, w));
    let mut h2 = Array2::<f64>::zeros((h, w));
    for y in 0..h {
        for x in 0..w {
            let dx = flow.dx[[y, x]];
            let dy = flow.dy[[y, x]];
            let sx = (x as f64 + dx).clamp(0.0, (w - 1) as f64);
            let sy = (y as f64 + dy).clamp(0.0, (h - 1) as f64);
            let a11 = 0.5 * (e1.a_xx[[y, x]] + imgproc::sample_bilinear(&e2.a_xx, sy, sx));
            let a22 = 0.5 * (e1.a_yy[[y, x]] + imgproc::sample_bilinear(&e2.a_yy, sy, sx));
            let a12 = 0.5 * (e1.a_xy[[y, x]] + imgproc::sample_bilinear(&e2.a_xy, sy, sx));
            let db_x = -0.5 * (imgproc::sample_bilinear(&e2.b_x, sy, sx) - e1.b_x[[y, x]])
                + a11 * dx
                + a12 * dy;
            let db_y = -0.5 * (imgproc::sample_bilinear(&e2.b_y, sy, sx) - e1.b_y[[y, x]])
                + a12 * dx
                + a22 * dy;
            g11[[y, x]] = a11 * a11 + a12 * a12;
            g12[[y, x]] = a12 * (a11 + a22);
            g22[[y, x]] = a22 * a22 + a12 * a12;
            h1[[y, x]] = a11 * db_x + a12 * db_y;
            h2[[y, x]] = a12 * db_x + a22 * db_y;
        }
    }
    let g11 = box_mean(&g11, win);
    let g12 = box_mean(&g12, win);
    let g22 = box_mean(&g22, win);
    let h1 = box_mean(&h1, win);
    let h2 = box_mean(&h2, win);
    let mut out = FlowField::zeros(h, w);
    for y in 0..h {
        for x in 0..w {
            let det = g11[[y, x]] * g22[[y, x]] - g12[[y, x]] * g12[[y, x]];
            if det.abs() > 1e-9 {
                out.dx[[y, x]] = (g22[[y, x]] * h1[[y, x]] - g12[[y, x]] * h2[[y, x]]) / det;
                out.dy[[y, x]] = (g11[[y, x]] * h2[[y, x]] - g12[[y, x]] * h1[[y, x]]) / det;
            }
        }
    }
    out
}

fn downsample(img: &Array2<f64>, scale: f64) -> Array2<f64> {
    let (h, w) = img.dim();
    let nh = ((h as f64) * scale).round().max(1.0) as usize;
    let nw = ((w as f64) * scale).round().max(1.0) as usize;
    imgproc::resize_bilinear(&imgproc::gaussian_blur(img, 1.0), nh, nw)
}

pub fn dense_flow(
    frame_a: &Array2<u8>,
    frame_b: &Array2<u8>,
    params: &FlowParams,
) -> Result<FlowField> {
    if frame_a.dim() != frame_b.dim() {
        return Err(Error::Shape(format!(
            "flow frames disagree: {:?} vs {:?}",
            frame_a.dim(),
            frame_b.dim()
        )));
    }
    let (h, w) = frame_a.dim();
    let poly = PolyMatrix::new(params.poly_n, params.poly_sigma);

    // coarse-to-fine image pyramid
    let mut pyramid_a = vec![imgproc::to_f64(frame_a)];
    let mut pyramid_b = vec![imgproc::to_f64(frame_b)];
    for _ in 1..params.levels.max(1) {
        let next_a = downsample(pyramid_a.last().unwrap(), params.scale);
        if next_a.dim().0 < params.poly_n + 2 || next_a.dim().1 < params.poly_n + 2 {
            break;
        }
        pyramid_b.push(downsample(pyramid_b.last().unwrap(), params.scale));
        pyramid_a.push(next_a);
    }

    let coarsest = pyramid_a.last().unwrap().dim();
    let mut flow = FlowField::zeros(coarsest.0, coarsest.1);
    for level in (0..pyramid_a.len()).rev() {
        let (lh, lw) = pyramid_a[level].dim();
        if flow.dim() != (lh, lw) {
            let factor_x = lw as f64 / flow.dim().1 as f64;
            let factor_y = lh as f64 / flow.dim().0 as f64;
            flow = FlowField {
                dx: imgproc::resize_bilinear(&flow.dx, lh, lw).mapv(|v| v * factor_x),
                dy: imgproc::resize_bilinear(&flow.dy, lh, lw).mapv(|v| v * factor_y),
            };
        }
        let e1 = expand(&pyramid_a[level], &poly);
        let e2 = expand(&pyramid_b[level], &poly);
        for _ in 0..params.iterations.max(1) {
            flow = update_flow(&e1, &e2, &flow, params.winsize | 1);
        }
    }
    debug_assert_eq!(flow.dim(), (h, w));
    Ok(flow)
}

/// Per-pixel Euclidean norm, clipped at `MAG_CLIP` px/frame and rescaled to
/// 8-bit.
pub fn flow_magnitude(field: &FlowField) -> Array2<u8> {
    ndarray::Zip::from(&field.dx)
        .and(&field.dy)
        .map_collect(|&dx, &dy| {
            let mag = (dx * dx + dy * dy).sqrt();
            ((mag.min(MAG_CLIP) / MAG_CLIP) * 255.0).round() as u8
        })
}

/// Interleaved temporal-stream input: for each of `n_pairs` uniformly spread
/// adjacent-frame pairs, the pair's first gray frame followed by its flow
/// magnitude, 2 x n_pairs channels in all.
pub fn temporal_stack(
    frames: &[Array2<u8>],
    n_pairs: usize,
    params: &FlowParams,
) -> Result<Vec<Array2<u8>>> {
    if frames.len() < n_pairs + 1 {
        return Err(Error::Data(format!(
            "temporal stack needs at least {} frames, got {}",
            n_pairs + 1,
            frames.len()
        )));
    }
    let pair_starts = crate::dataio::sample_indices_uniform(frames.len() - 1, n_pairs);
    let channels = par::map_slice(&pair_starts, |&p| {
        let field = dense_flow(&frames[p], &frames[p + 1], params)?;
        Ok::<_, Error>((frames[p].clone(), flow_magnitude(&field)))
    });
    let mut stack = Vec::with_capacity(2 * n_pairs);
    for pair in channels {
        let (gray, mag) = pair?;
        stack.push(gray);
        stack.push(mag);
    }
    Ok(stack)
}

/// Raw cache entry: 8-byte magic, u32 LE height, u32 LE width, then
/// row-major interleaved (dx, dy) as f32 LE.
pub fn write_flow_cache(path: &Path, field: &FlowField) -> Result<()> {
    let (h, w) = field.dim();
    let mut buf = Vec::with_capacity(16 + h * w * 8);
    buf.extend_from_slice(CACHE_MAGIC);
    buf.extend_from_slice(&(h as u32).to_le_bytes());
    buf.extend_from_slice(&(w as u32).to_le_bytes());
    for y in 0..h {
        for x in 0..w {
            buf.extend_from_slice(&(field.dx[[y, x]] as f32).to_le_bytes());
            buf.extend_from_slice(&(field.dy[[y, x]] as f32).to_le_bytes());
        }
    }
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&buf).map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_flow_cache(path: &Path) -> Result<FlowField> {
    let mut file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut data = Vec::new();
    file.read_to_end(&mut data).map_err(|e| Error::io(path, e))?;
    if data.len() < 16 || &data[..8] != CACHE_MAGIC {
        return Err(Error::Data(format!("{}: not a flow cache file", path.display())));
    }
    let h = u32::from_le_bytes(data[8..12].try_into().unwrap()) as usize;
    let w = u32::from_le_bytes(data[12..16].try_into().unwrap()) as usize;
    if data.len() != 16 + h * w * 8 {
        return Err(Error::Data(format!(
            "{}: truncated flow cache ({} bytes for {h}x{w})",
            path.display(),
            data.len()
        )));
    }
    let mut field = FlowField::zeros(h, w);
    let mut off = 16;
    for y in 0..h {
        for x in 0..w {
            field.dx[[y, x]] =
                f32::from_le_bytes(data[off..off + 4].try_into().unwrap()) as f64;
            field.dy[[y, x]] =
                f32::from_le_bytes(data[off + 4..off + 8].try_into().unwrap()) as f64;
            off += 8;
        }
    }
    Ok(field)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;

    /// Band-limited test texture, built independently of the flow code.
    fn noise_image(seed: u64, h: usize, w: usize) -> Array2<u8> {
        let mut r = rng::stream(seed, "flow-oracle");
        let white = Array2::from_shape_fn((h, w), |_| r.gen::<f64>() * 255.0);
        imgproc::to_u8(&imgproc::gaussian_blur(&white, 2.0).mapv(|v| (v - 127.5) * 2.0 + 127.5))
    }

    /// Exact integer shift with wrap-around: pixel (y, x) of the output takes
    /// the value at (y - sy, x - sx), so content moves by (+sx, +sy).
    fn shift_wrapped(img: &Array2<u8>, sx: i64, sy: i64) -> Array2<u8> {
        let (h, w) = img.dim();
        Array2::from_shape_fn((h, w), |(y, x)| {
            let yy = (y as i64 - sy).rem_euclid(h as i64) as usize;
            let xx = (x as i64 - sx).rem_euclid(w as i64) as usize;
            img[[yy, xx]]
        })
    }

    fn interior_median(values: &Array2<f64>, border: usize) -> f64 {
        let (h, w) = values.dim();
        let mut v: Vec<f64> = (border..h - border)
            .flat_map(|y| (border..w - border).map(move |x| values[[y, x]]))
            .collect();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v[v.len() / 2]
    }

    const BORDER: usize = 15;

    #[test]
    fn zero_motion_is_near_zero() {
        let img = noise_image(1, 64, 64);
        let flow = dense_flow(&img, &img, &FlowParams::default()).unwrap();
        let mag = ndarray::Zip::from(&flow.dx)
            .and(&flow.dy)
            .map_collect(|&dx, &dy| (dx * dx + dy * dy).sqrt());
        assert!(interior_median(&mag, BORDER) < 0.1);
    }

    #[test]
    fn recovers_integer_shifts() {
        for (seed, sx, sy) in [(2u64, 2i64, 0i64), (3, 1, 0), (4, 3, 0), (5, 0, 2), (6, 2, 2)] {
            let a = noise_image(seed, 64, 64);
            let b = shift_wrapped(&a, sx, sy);
            let flow = dense_flow(&a, &b, &FlowParams::default()).unwrap();
            let med_x = interior_median(&flow.dx, BORDER);
            let med_y = interior_median(&flow.dy, BORDER);
            assert!(
                (med_x - sx as f64).abs() < 0.25 && (med_y - sy as f64).abs() < 0.25,
                "shift ({sx},{sy}) estimated as ({med_x:.3},{med_y:.3})"
            );
        }
    }

    #[test]
    fn flow_is_approximately_antisymmetric() {
        let a = noise_image(7, 64, 64);
        let b = shift_wrapped(&a, 2, 1);
        let fwd = dense_flow(&a, &b, &FlowParams::default()).unwrap();
        let bwd = dense_flow(&b, &a, &FlowParams::default()).unwrap();
        let disc = ndarray::Zip::from(&fwd.dx)
            .and(&bwd.dx)
            .map_collect(|&f, &r| (f + r).abs());
        assert!(interior_median(&disc, BORDER) < 0.5);
        let disc_y = ndarray::Zip::from(&fwd.dy)
            .and(&bwd.dy)
            .map_collect(|&f, &r| (f + r).abs());
        assert!(interior_median(&disc_y, BORDER) < 0.5);
    }

    #[test]
    fn textureless_frames_stay_finite() {
        let a = Array2::from_elem((64, 64), 120u8);
        let flow = dense_flow(&a, &a, &FlowParams::default()).unwrap();
        assert!(flow.dx.iter().chain(flow.dy.iter()).all(|v| v.is_finite()));
    }

    #[test]
    fn rejects_mismatched_sizes() {
        let a = noise_image(8, 64, 64);
        let b = noise_image(8, 64, 72);
        assert!(dense_flow(&a, &b, &FlowParams::default()).is_err());
    }

    #[test]
    fn magnitude_rescaling() {
        let zero = FlowField::zeros(4, 4);
        assert!(flow_magnitude(&zero).iter().all(|&v| v == 0));

        let mut f = FlowField::zeros(4, 4);
        f.dx.fill(3.0);
        f.dy.fill(4.0);
        // 5 px/frame against the 8 px clip
        let expect = ((5.0 / MAG_CLIP) * 255.0_f64).round() as u8;
        assert!(flow_magnitude(&f).iter().all(|&v| v == expect));

        let mut rot = FlowField::zeros(4, 4);
        rot.dx.fill(-4.0);
        rot.dy.fill(3.0);
        assert_eq!(flow_magnitude(&f), flow_magnitude(&rot));

        let mut big = FlowField::zeros(4, 4);
        big.dx.fill(50.0);
        assert!(flow_magnitude(&big).iter().all(|&v| v == 255));
    }

    #[test]
    fn temporal_stack_shape_and_static_case() {
        let frame = noise_image(9, 64, 64);
        let frames: Vec<Array2<u8>> = vec![frame.clone(); 9];
        let stack = temporal_stack(&frames, N_PAIRS, &FlowParams::default()).unwrap();
        assert_eq!(stack.len(), 14);
        for k in 0..N_PAIRS {
            assert_eq!(stack[2 * k], frame);
            let mag = &stack[2 * k + 1];
            let mean = mag.iter().map(|&v| v as f64).sum::<f64>() / (64.0 * 64.0);
            assert!(mean < 3.0, "static clip produced mean flow byte {mean}");
        }
        let again = temporal_stack(&frames, N_PAIRS, &FlowParams::default()).unwrap();
        assert_eq!(stack, again);
        assert!(temporal_stack(&frames[..7], N_PAIRS, &FlowParams::default()).is_err());
    }

    #[test]
    fn cache_round_trip() {
        let a = noise_image(10, 32, 48);
        let b = shift_wrapped(&a, 1, 0);
        let field = dense_flow(&a, &b, &FlowParams::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pair_000.flow");
        write_flow_cache(&path, &field).unwrap();
        let back = read_flow_cache(&path).unwrap();
        assert_eq!(back.dim(), field.dim());
        for (a, b) in field.dx.iter().zip(back.dx.iter()) {
            assert!((a - b).abs() < 1e-6);
        }
        let garbage = dir.path().join("bad.flow");
        std::fs::write(&garbage, b"notaflow").unwrap();
        assert!(read_flow_cache(&garbage).is_err());
    }
}
