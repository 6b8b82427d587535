//! Frame rendering: drifting band-limited background, laser lines, fish blob,
//! timestamp glyphs and sensor noise.

use super::glyphs;
use super::{FishSpec, SceneSpec, TrajectoryKind};
use crate::rng;
use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Background mid-grey and noise swing, in 8-bit units.
const BG_BASE: f64 = 92.0;
const BG_SWING: f64 = 46.0;
/// Laser line cross-section sigma in pixels.
const LASER_WIDTH: f64 = 1.3;
/// Ground-truth mask thresholds on the additive contribution.
const LASER_MASK_THRESHOLD: f64 = 25.0;
const FISH_MASK_THRESHOLD: f64 = 10.0;
/// Timestamp glyph brightness.
const GLYPH_VALUE: f64 = 235.0;

/// Tileable value-noise octave over a torus matching the frame size.
struct NoiseOctave {
    grid: Array2<f64>,
    cell_h: f64,
    cell_w: f64,
    amp: f64,
}

impl NoiseOctave {
    fn new(rng: &mut ChaCha8Rng, h: usize, w: usize, period: f64, amp: f64) -> Self {
        let gy = ((h as f64 / period).round() as usize).max(2);
        let gx = ((w as f64 / period).round() as usize).max(2);
        let grid = Array2::from_shape_fn((gy, gx), |_| rng.gen::<f64>() - 0.5);
        NoiseOctave {
            grid,
            cell_h: h as f64 / gy as f64,
            cell_w: w as f64 / gx as f64,
            amp,
        }
    }

    fn sample(&self, y: f64, x: f64) -> f64 {
        let (gy, gx) = self.grid.dim();
        let fy = y / self.cell_h;
        let fx = x / self.cell_w;
        let y0 = fy.floor();
        let x0 = fx.floor();
        let ty = fy - y0;
        let tx = fx - x0;
        // smoothstep keeps the field band-limited rather than piecewise linear
        let ty = ty * ty * (3.0 - 2.0 * ty);
        let tx = tx * tx * (3.0 - 2.0 * tx);
        let iy0 = (y0.rem_euclid(gy as f64)) as usize;
        let ix0 = (x0.rem_euclid(gx as f64)) as usize;
        let iy1 = (iy0 + 1) % gy;
        let ix1 = (ix0 + 1) % gx;
        let a = self.grid[[iy0, ix0]] * (1.0 - tx) + self.grid[[iy0, ix1]] * tx;
        let b = self.grid[[iy1, ix0]] * (1.0 - tx) + self.grid[[iy1, ix1]] * tx;
        (a * (1.0 - ty) + b * ty) * self.amp
    }
}

pub(super) struct Background {
    octaves: Vec<NoiseOctave>,
}

impl Background {
    pub(super) fn new(seed: u64, h: usize, w: usize) -> Self {
        let mut r = rng::stream(seed, "background");
        let base = (h.min(w) as f64 / 64.0).max(1.0);
        let octaves = vec![
            NoiseOctave::new(&mut r, h, w, 18.0 * base, 1.0),
            NoiseOctave::new(&mut r, h, w, 8.0 * base, 0.55),
            NoiseOctave::new(&mut r, h, w, 4.0 * base, 0.30),
        ];
        Background { octaves }
    }

    /// Scrolled sample at frame `t`; drift is applied with sub-pixel wrap.
    pub(super) fn value(&self, y: usize, x: usize, t: usize, drift: (f64, f64)) -> f64 {
        let sy = y as f64 + drift.1 * t as f64;
        let sx = x as f64 + drift.0 * t as f64;
        let n: f64 = self.octaves.iter().map(|o| o.sample(sy, sx)).sum();
        BG_BASE + BG_SWING * n
    }
}

fn dist_to_segment(px: f64, py: f64, a: (f64, f64), b: (f64, f64)) -> f64 {
    let (ax, ay) = a;
    let (bx, by) = b;
    let (dx, dy) = (bx - ax, by - ay);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((px - ax) * dx + (py - ay) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (cx, cy) = (ax + t * dx, ay + t * dy);
    ((px - cx).powi(2) + (py - cy).powi(2)).sqrt()
}

/// Additive laser contribution for a whole frame (constant across frames;
/// the per-clip jitter is already baked into the spec's geometry).
pub(super) fn laser_layer(spec: &SceneSpec) -> Array2<f64> {
    let (h, w) = spec.image_size;
    let mut layer = Array2::<f64>::zeros((h, w));
    let reach = (LASER_WIDTH * 3.5).ceil() as i64;
    for segm in &spec.laser_geometry {
        let xs = [segm.start.0, segm.end.0];
        let ys = [segm.start.1, segm.end.1];
        let x_lo = (xs[0].min(xs[1]).floor() as i64 - reach).max(0);
        let x_hi = (xs[0].max(xs[1]).ceil() as i64 + reach).min(w as i64 - 1);
        let y_lo = (ys[0].min(ys[1]).floor() as i64 - reach).max(0);
        let y_hi = (ys[0].max(ys[1]).ceil() as i64 + reach).min(h as i64 - 1);
        for y in y_lo..=y_hi {
            for x in x_lo..=x_hi {
                let d = dist_to_segment(x as f64, y as f64, segm.start, segm.end);
                if d < LASER_WIDTH * 3.5 {
                    layer[[y as usize, x as usize]] +=
                        segm.intensity * (-d * d / (2.0 * LASER_WIDTH * LASER_WIDTH)).exp();
                }
            }
        }
    }
    layer
}

pub(super) fn laser_mask(layer: &Array2<f64>) -> Array2<u8> {
    layer.mapv(|v| if v > LASER_MASK_THRESHOLD { 255 } else { 0 })
}

/// Fish pose at one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FishState {
    pub pos: (f64, f64),
    pub heading: f64,
}

/// Deterministic per-frame fish poses; `None` for fish-free specs.
pub fn fish_path(spec: &SceneSpec) -> Option<Vec<FishState>> {
    let fish = spec.fish.as_ref()?;
    Some(path_states(fish, spec.frame_count, spec.rng_seed))
}

/// Straight clips keep a constant heading. Turn-away clips flip the heading
/// sign over a short window around a mid-clip turn frame. The random draws
/// depend only on (seed, frame_count), so rescaling speed or translating the
/// start rescales/translates the whole path.
pub(super) fn path_states(fish: &FishSpec, frame_count: usize, seed: u64) -> Vec<FishState> {
    let mut r = rng::stream(seed, "fish-path");
    let t_total = frame_count;
    let theta0 = initial_heading(&mut r);
    let speed = fish.speed;
    let turn_frame = t_total / 3 + (r.gen::<f64>() * (t_total as f64 / 3.0)) as usize;
    const TURN_WINDOW: usize = 4;

    let mut states = Vec::with_capacity(t_total);
    let mut pos = fish.start;
    for t in 0..t_total {
        let heading = match fish.trajectory {
            TrajectoryKind::Straight => theta0,
            TrajectoryKind::TurnAway => {
                if t <= turn_frame {
                    theta0
                } else {
                    let k = ((t - turn_frame) as f64 / TURN_WINDOW as f64).min(1.0);
                    theta0 * (1.0 - 2.0 * k)
                }
            }
        };
        states.push(FishState { pos, heading });
        pos = (pos.0 + speed * heading.cos(), pos.1 + speed * heading.sin());
    }
    states
}

pub(super) fn initial_heading(r: &mut ChaCha8Rng) -> f64 {
    // keep a clear vertical component so the heading sign is well defined
    let mag = 0.35 + r.gen::<f64>() * 0.75;
    let sy = if r.gen::<bool>() { 1.0 } else { -1.0 };
    let sx = if r.gen::<bool>() { 1.0 } else { -1.0 };
    let theta = sy * mag;
    if sx > 0.0 {
        theta
    } else {
        // mirror about the vertical axis, preserving the sign of sin(theta)
        sy * (std::f64::consts::PI - mag)
    }
}

pub(super) fn add_fish(
    frame: &mut Array2<f64>,
    mask: &mut Array2<u8>,
    fish: &FishSpec,
    state: &FishState,
) {
    if fish.contrast <= 0.0 {
        return;
    }
    let (h, w) = frame.dim();
    let sigma_long = fish.size / 2.0;
    let sigma_short = (fish.size / 5.0).max(0.8);
    let reach = (sigma_long * 3.0).ceil() as i64;
    let (px, py) = state.pos;
    let (sin_t, cos_t) = state.heading.sin_cos();
    let amp = fish.contrast * 255.0;
    let x_lo = (px as i64 - reach).max(0);
    let x_hi = (px as i64 + reach).min(w as i64 - 1);
    let y_lo = (py as i64 - reach).max(0);
    let y_hi = (py as i64 + reach).min(h as i64 - 1);
    for y in y_lo..=y_hi {
        for x in x_lo..=x_hi {
            let dx = x as f64 - px;
            let dy = y as f64 - py;
            // rotate into the fish frame: u along the body, v across
            let u = dx * cos_t + dy * sin_t;
            let v = -dx * sin_t + dy * cos_t;
            let d2 = u * u / (2.0 * sigma_long * sigma_long) + v * v / (2.0 * sigma_short * sigma_short);
            if d2 < 9.0 {
                let delta = amp * (-d2).exp();
                frame[[y as usize, x as usize]] += delta;
                if delta > FISH_MASK_THRESHOLD {
                    mask[[y as usize, x as usize]] = 255;
                }
            }
        }
    }
}

/// Top-left timestamp box `(y0, x0, height, width)`: 12% of rows, 30% of cols.
pub fn timestamp_box(h: usize, w: usize) -> (usize, usize, usize, usize) {
    (0, 0, ((h as f64) * 0.12).ceil() as usize, ((w as f64) * 0.30).ceil() as usize)
}

/// Burn "DD HH:MM" into the top-left box. The day-tens and minute-tens digits
/// carry `class_code` when the dataset plants a timestamp correlation.
pub(super) fn add_timestamp(frame: &mut Array2<f64>, spec: &SceneSpec) {
    let (h, w) = frame.dim();
    let (_, _, box_h, box_w) = timestamp_box(h, w);
    let mut r = rng::stream(spec.rng_seed, "timestamp");
    let code = spec
        .timestamp_class_code
        .unwrap_or_else(|| r.gen_range(0..3u8));
    let day_units = r.gen_range(0..10u8);
    let hour = r.gen_range(0..24u8);
    let minute_units = r.gen_range(0..10u8);

    let digits: [Option<u8>; 8] = [
        Some(code),
        Some(day_units),
        None, // gap
        Some(hour / 10),
        Some(hour % 10),
        None, // colon
        Some(code),
        Some(minute_units),
    ];
    let pad = 1i64;
    let cell_w = ((box_w as i64 - 2 * pad) / 8).max(2);
    let glyph_h = (box_h as i64 - 2 * pad).max(3);
    for (i, d) in digits.iter().enumerate() {
        let x0 = pad + i as i64 * cell_w;
        match (i, d) {
            (5, None) => glyphs::draw_colon(frame, pad, x0, glyph_h, cell_w - 1, GLYPH_VALUE),
            (_, Some(digit)) => {
                glyphs::draw_digit(frame, *digit, pad, x0, glyph_h, cell_w - 1, GLYPH_VALUE)
            }
            _ => {}
        }
    }
}

/// Additive Gaussian sensor noise for frame `t`, drawn from a per-frame
/// substream so frames can render in parallel.
pub(super) fn add_noise(frame: &mut Array2<f64>, seed: u64, t: usize, sigma: f64) {
    if sigma <= 0.0 {
        return;
    }
    let mut r = rng::stream_indexed(seed, "noise", t as u64);
    for v in frame.iter_mut() {
        // Box-Muller on two uniforms keeps the dependency surface small
        let u1: f64 = r.gen::<f64>().max(1e-12);
        let u2: f64 = r.gen();
        let z = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
        *v += sigma * z;
    }
}
