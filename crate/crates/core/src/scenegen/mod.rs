//! Synthetic trawl-scene generator.
//!
//! Renders grayscale clips of a drifting seabed with bright projected laser
//! lines, an optional low-contrast fish, a timestamp glyph block, and sensor
//! noise. Class semantics are geometric: NF has no fish, NR a fish on a
//! straight path, R a fish that turns away mid-clip. The dataset generator can
//! plant controllable correlations between class and camera view, clip length
//! and timestamp content, which the audit tooling is meant to rediscover.

pub mod glyphs;
mod render;
mod views;

pub use render::{fish_path, timestamp_box, FishState};
pub use views::{layout, UnitSegment};

use crate::dataio::{Manifest, ManifestRow};
use crate::error::{Error, Result};
use crate::imgproc;
use crate::label::Label;
use crate::par;
use crate::rng;
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

pub const N_VIEWS: u8 = 16;
/// Endpoint jitter applied to each laser segment, per clip.
pub const LASER_JITTER_PX: f64 = 3.0;
/// Hard clip-length bounds in frames.
pub const MIN_FRAMES: usize = 8;
pub const MAX_FRAMES: usize = 80;

/// The class a biased view over-represents. Views cycle through the classes
/// so the 16 views split 6/5/5.
pub fn majority_class(view_id: u8) -> Label {
    Label::from_index(((view_id as usize) - 1) % 3).unwrap()
}

/// One laser line in pixel coordinates, (x, y) endpoints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start: (f64, f64),
    pub end: (f64, f64),
    pub intensity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrajectoryKind {
    Straight,
    TurnAway,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FishSpec {
    /// Initial centre position (x, y) in pixels.
    pub start: (f64, f64),
    /// Body length scale in pixels.
    pub size: f64,
    /// Peak brightness delta as a fraction of full scale, in [0, 1].
    pub contrast: f64,
    /// Pixels per frame.
    pub speed: f64,
    pub trajectory: TrajectoryKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub view_id: u8,
    pub class_label: Label,
    pub frame_count: usize,
    /// (H, W) in pixels.
    pub image_size: (usize, usize),
    pub laser_geometry: Vec<Segment>,
    /// (dx, dy) background translation per frame, pixels.
    pub background_drift: (f64, f64),
    pub fish: Option<FishSpec>,
    pub timestamp_enabled: bool,
    /// Digit planted in the day-tens and minute-tens positions; random when
    /// absent. Carries the timestamp-class correlation when one is planted.
    #[serde(default)]
    pub timestamp_class_code: Option<u8>,
    /// Additive Gaussian sensor noise, gray levels.
    pub noise_sigma: f64,
    pub rng_seed: u64,
}

impl SceneSpec {
    /// A fish with zero contrast renders nothing and counts as absent.
    pub fn effective_fish(&self) -> Option<&FishSpec> {
        self.fish.as_ref().filter(|f| f.contrast > 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        let (h, w) = self.image_size;
        if self.view_id < 1 || self.view_id > N_VIEWS {
            return Err(Error::Config(format!("view_id {} out of [1,16]", self.view_id)));
        }
        if self.frame_count < MIN_FRAMES {
            return Err(Error::Config(format!(
                "frame_count {} below minimum {MIN_FRAMES}",
                self.frame_count
            )));
        }
        if h < 64 || w < 64 {
            return Err(Error::Config(format!("image_size {h}x{w} below 64x64")));
        }
        if self.noise_sigma < 0.0 {
            return Err(Error::Config("negative noise_sigma".into()));
        }
        for seg in &self.laser_geometry {
            if !(0.0..=255.0).contains(&seg.intensity) {
                return Err(Error::Config(format!(
                    "laser intensity {} out of [0,255]",
                    seg.intensity
                )));
            }
        }
        if let Some(code) = self.timestamp_class_code {
            if code > 2 {
                return Err(Error::Config(format!("timestamp code {code} out of [0,2]")));
            }
        }
        if let Some(fish) = &self.fish {
            if !(0.0..=1.0).contains(&fish.contrast) {
                return Err(Error::Config(format!("fish contrast {} out of [0,1]", fish.contrast)));
            }
            if fish.size <= 0.0 || fish.speed < 0.0 {
                return Err(Error::Config("fish size/speed out of range".into()));
            }
            let (x, y) = fish.start;
            if x < 0.0 || y < 0.0 || x > (w - 1) as f64 || y > (h - 1) as f64 {
                return Err(Error::Config(format!(
                    "fish start ({x:.1}, {y:.1}) outside {h}x{w} frame"
                )));
            }
        }
        match (self.class_label, self.effective_fish()) {
            (Label::NF, Some(_)) => {
                Err(Error::Config("NF clip must not contain a visible fish".into()))
            }
            (Label::NF, None) => Ok(()),
            (label, None) => Err(Error::Config(format!("{label} clip requires a visible fish"))),
            (Label::NR, Some(f)) if f.trajectory != TrajectoryKind::Straight => {
                Err(Error::Config("NR requires a straight trajectory".into()))
            }
            (Label::R, Some(f)) if f.trajectory != TrajectoryKind::TurnAway => {
                Err(Error::Config("R requires a turn-away trajectory".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Pixel-space laser geometry for a view: the view's fixed layout scaled to
/// the frame, with a per-clip ±3 px endpoint jitter.
pub fn laser_geometry_for_view(
    view_id: u8,
    image_size: (usize, usize),
    gain: f64,
    rng_seed: u64,
) -> Vec<Segment> {
    let (h, w) = image_size;
    let mut r = rng::stream(rng_seed, "laser-jitter");
    views::layout(view_id)
        .iter()
        .map(|seg| {
            let mut jitter = || (r.gen::<f64>() * 2.0 - 1.0) * LASER_JITTER_PX;
            Segment {
                start: (
                    seg.start.0 * (w - 1) as f64 + jitter(),
                    seg.start.1 * (h - 1) as f64 + jitter(),
                ),
                end: (
                    seg.end.0 * (w - 1) as f64 + jitter(),
                    seg.end.1 * (h - 1) as f64 + jitter(),
                ),
                intensity: (gain * seg.gain).clamp(0.0, 255.0),
            }
        })
        .collect()
}

/// In-memory clip with its ground-truth masks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedClip {
    pub frames: Vec<Array2<u8>>,
    /// Pixels whose additive laser contribution is significant (per clip).
    pub laser_mask: Array2<u8>,
    /// Pixels with significant fish contribution, per frame.
    pub fish_masks: Vec<Array2<u8>>,
}

pub fn generate_clip(spec: &SceneSpec) -> Result<RenderedClip> {
    spec.validate()?;
    let (h, w) = spec.image_size;
    let background = render::Background::new(spec.rng_seed, h, w);
    let laser = render::laser_layer(spec);
    let laser_mask = render::laser_mask(&laser);
    let states = fish_path(spec);

    let per_frame = par::map_range(spec.frame_count, |t| {
        let mut frame = Array2::from_shape_fn((h, w), |(y, x)| {
            background.value(y, x, t, spec.background_drift)
        });
        frame += &laser;
        let mut fish_mask = Array2::<u8>::zeros((h, w));
        if let (Some(fish), Some(states)) = (&spec.fish, &states) {
            render::add_fish(&mut frame, &mut fish_mask, fish, &states[t]);
        }
        if spec.timestamp_enabled {
            render::add_timestamp(&mut frame, spec);
        }
        render::add_noise(&mut frame, spec.rng_seed, t, spec.noise_sigma);
        (imgproc::to_u8(&frame), fish_mask)
    });

    let mut frames = Vec::with_capacity(spec.frame_count);
    let mut fish_masks = Vec::with_capacity(spec.frame_count);
    for (frame, mask) in per_frame {
        frames.push(frame);
        fish_masks.push(mask);
    }
    Ok(RenderedClip { frames, laser_mask, fish_masks })
}

pub fn spec_path(clip_dir: &Path) -> PathBuf {
    clip_dir.join("spec.json")
}

pub fn laser_mask_path(clip_dir: &Path) -> PathBuf {
    clip_dir.join("mask_laser.png")
}

pub fn fish_mask_path(clip_dir: &Path, t: usize) -> PathBuf {
    clip_dir.join(format!("mask_fish_{t:04}.png"))
}

/// Write frames, masks and the spec JSON into `clip_dir`.
pub fn write_clip(clip_dir: &Path, spec: &SceneSpec, clip: &RenderedClip) -> Result<()> {
    std::fs::create_dir_all(clip_dir).map_err(|e| Error::io(clip_dir, e))?;
    for (t, frame) in clip.frames.iter().enumerate() {
        imgproc::write_png(&clip_dir.join(format!("frame_{t:04}.png")), frame)?;
    }
    imgproc::write_png(&laser_mask_path(clip_dir), &clip.laser_mask)?;
    for (t, mask) in clip.fish_masks.iter().enumerate() {
        imgproc::write_png(&fish_mask_path(clip_dir, t), mask)?;
    }
    let path = spec_path(clip_dir);
    let file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::to_writer_pretty(file, spec)?;
    Ok(())
}

/// Strengths of the plantable dataset biases. 1/3 means "class independent of
/// the group", 1 a fully deterministic coupling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasConfig {
    /// Probability that a clip's class equals its view's majority class.
    pub view_class_correlation: f64,
    /// Strength applied to `class_length_offset`.
    pub padding_class_correlation: f64,
    /// Probability that the planted timestamp code equals the class index.
    pub timestamp_class_correlation: f64,
    /// Per-class mean frame-count shift (NF, NR, R), applied at full
    /// `padding_class_correlation`; negative R realizes "R clips run short".
    pub class_length_offset: [f64; 3],
}

impl Default for BiasConfig {
    fn default() -> Self {
        BiasConfig {
            view_class_correlation: 1.0 / 3.0,
            padding_class_correlation: 1.0 / 3.0,
            timestamp_class_correlation: 1.0 / 3.0,
            class_length_offset: [0.0; 3],
        }
    }
}

impl BiasConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, rho) in [
            ("view_class_correlation", self.view_class_correlation),
            ("padding_class_correlation", self.padding_class_correlation),
            ("timestamp_class_correlation", self.timestamp_class_correlation),
        ] {
            if !(1.0 / 3.0 - 1e-9..=1.0 + 1e-9).contains(&rho) {
                return Err(Error::Config(format!("{name} = {rho} outside [1/3, 1]")));
            }
        }
        Ok(())
    }
}

/// Maps a correlation in [1/3, 1] to a bias strength in [0, 1].
fn bias_strength(rho: f64) -> f64 {
    ((3.0 * rho - 1.0) / 2.0).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetOptions {
    pub image_size: (usize, usize),
    pub noise_sigma: f64,
    /// Peak laser brightness before per-segment gains; the default keeps the
    /// lasers roughly 4x brighter than the fish delta.
    pub laser_gain: f64,
    pub fish_contrast: f64,
    pub timestamp_enabled: bool,
    /// Gamma(shape, scale) for the length distribution, added to the minimum.
    pub length_shape: f64,
    pub length_scale: f64,
}

impl Default for DatasetOptions {
    fn default() -> Self {
        DatasetOptions {
            image_size: (64, 64),
            noise_sigma: 6.0,
            laser_gain: 150.0,
            fish_contrast: 0.15,
            timestamp_enabled: true,
            length_shape: 2.2,
            length_scale: 10.0,
        }
    }
}

/// View assignment per class, one view id per clip.
///
/// When the view correlation is away from uniform and the implied per-view
/// totals are feasible, assignment uses exact quotas: every view's class mix
/// is rho majority / (1-rho)/2 each minority, up to rounding, so the
/// empirical majority share lands on rho rather than drifting with sampling
/// noise. Otherwise each clip draws its view independently.
fn plan_views(counts: [usize; 3], rho: f64, seed: u64) -> [Vec<u8>; 3] {
    let total: usize = counts.iter().sum();
    let strength = bias_strength(rho);
    let mut r = rng::stream(seed, "view-plan");

    if strength > 0.05 {
        // Per-class total over views whose majority is that class.
        let denom = (3.0 * rho - 1.0) / 2.0;
        let t: Vec<f64> = (0..3)
            .map(|c| (counts[c] as f64 - total as f64 * (1.0 - rho) / 2.0) / denom)
            .collect();
        if t.iter().all(|&v| v >= 0.0) {
            let views_of: Vec<Vec<u8>> = (0..3)
                .map(|c| {
                    (1..=N_VIEWS)
                        .filter(|&v| majority_class(v).index() == c)
                        .collect()
                })
                .collect();
            // Real-valued slots[view][class], columns summing to the counts.
            let mut slots = vec![[0.0f64; 3]; N_VIEWS as usize + 1];
            for c in 0..3 {
                let n_view = t[c] / views_of[c].len() as f64;
                for &v in &views_of[c] {
                    for c2 in 0..3 {
                        slots[v as usize][c2] =
                            n_view * if c2 == c { rho } else { (1.0 - rho) / 2.0 };
                    }
                }
            }
            let mut result: [Vec<u8>; 3] = Default::default();
            for c in 0..3 {
                // Largest-remainder rounding keeps the class total exact.
                let mut ints: Vec<usize> =
                    (1..=N_VIEWS as usize).map(|v| slots[v][c].floor() as usize).collect();
                let assigned: usize = ints.iter().sum();
                let mut order: Vec<usize> = (0..N_VIEWS as usize).collect();
                order.sort_by(|&a, &b| {
                    let fa = slots[a + 1][c].fract();
                    let fb = slots[b + 1][c].fract();
                    fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
                });
                for &i in order.iter().take(counts[c] - assigned) {
                    ints[i] += 1;
                }
                let mut assignment = Vec::with_capacity(counts[c]);
                for (i, &n) in ints.iter().enumerate() {
                    assignment.extend(std::iter::repeat((i + 1) as u8).take(n));
                }
                assignment.shuffle(&mut r);
                result[c] = assignment;
            }
            return result;
        }
    }

    // Uniform or near-uniform regime: independent per-clip draws.
    let mut result: [Vec<u8>; 3] = Default::default();
    for c in 0..3 {
        result[c] = (0..counts[c])
            .map(|_| {
                if strength > 0.0 && r.gen::<f64>() < rho {
                    let aligned: Vec<u8> = (1..=N_VIEWS)
                        .filter(|&v| majority_class(v).index() == c)
                        .collect();
                    aligned[r.gen_range(0..aligned.len())]
                } else if strength > 0.0 {
                    let other: Vec<u8> = (1..=N_VIEWS)
                        .filter(|&v| majority_class(v).index() != c)
                        .collect();
                    other[r.gen_range(0..other.len())]
                } else {
                    r.gen_range(1..=N_VIEWS)
                }
            })
            .collect();
    }
    result
}

struct ClipPlan {
    label: Label,
    view_id: u8,
    frame_count: usize,
    ts_code: u8,
    render_seed: u64,
}

/// Generate all clips and the manifest under `root`. Clips land in
/// `clips/<id>/` with frames, ground-truth masks and the scene spec; the
/// manifest is ordered by capture time, which runs through the views in
/// contiguous blocks the way a pan-tilt operator would sweep them.
pub fn generate_dataset(
    root: &Path,
    counts: [usize; 3],
    bias: &BiasConfig,
    opts: &DatasetOptions,
    seed: u64,
) -> Result<Manifest> {
    bias.validate()?;
    if counts.iter().any(|&n| n == 0) {
        return Err(Error::Config("each class needs at least one clip".into()));
    }
    let gamma = Gamma::new(opts.length_shape, opts.length_scale)
        .map_err(|e| Error::Config(format!("length distribution: {e}")))?;
    let pad_strength = bias_strength(bias.padding_class_correlation);
    let ts_rho = bias.timestamp_class_correlation;

    let view_plan = plan_views(counts, bias.view_class_correlation, seed);
    let mut plans = Vec::with_capacity(counts.iter().sum());
    let mut g = 0u64;
    for (c, &n) in counts.iter().enumerate() {
        let label = Label::from_index(c).unwrap();
        for i in 0..n {
            let mut len_rng = rng::stream_indexed(seed, "length", g);
            let offset = bias.class_length_offset[c] * pad_strength;
            let raw = MIN_FRAMES as f64 + gamma.sample(&mut len_rng) + offset;
            let frame_count = raw.round().clamp(MIN_FRAMES as f64, MAX_FRAMES as f64) as usize;

            let mut ts_rng = rng::stream_indexed(seed, "ts-code", g);
            let ts_code = if ts_rng.gen::<f64>() < ts_rho {
                c as u8
            } else {
                let others = [(c + 1) % 3, (c + 2) % 3];
                others[ts_rng.gen_range(0..2)] as u8
            };

            plans.push(ClipPlan {
                label,
                view_id: view_plan[c][i],
                frame_count,
                ts_code,
                render_seed: rng::derive_seed_indexed(seed, "clip", g),
            });
            g += 1;
        }
    }

    // Capture order: shuffle the views, then emit each view's clips as one
    // contiguous, internally shuffled block.
    let mut view_order: Vec<u8> = (1..=N_VIEWS).collect();
    let mut order_rng = rng::stream(seed, "capture-order");
    view_order.shuffle(&mut order_rng);
    let mut ordered: Vec<ClipPlan> = Vec::with_capacity(plans.len());
    for &v in &view_order {
        let (mut block, rest): (Vec<_>, Vec<_>) =
            plans.into_iter().partition(|p| p.view_id == v);
        plans = rest;
        let mut block_rng = rng::stream_indexed(seed, "capture-block", v as u64);
        block.shuffle(&mut block_rng);
        ordered.extend(block);
    }

    std::fs::create_dir_all(root.join("clips")).map_err(|e| Error::io(root, e))?;
    let rows: Vec<Result<ManifestRow>> = par::map_range(ordered.len(), |idx| {
        let plan = &ordered[idx];
        let clip_id = format!("clip_{idx:04}");
        let rel_path = format!("clips/{clip_id}");
        let spec = build_spec(plan, opts)?;
        let rendered = generate_clip(&spec)?;
        write_clip(&root.join(&rel_path), &spec, &rendered)?;
        Ok(ManifestRow {
            clip_id,
            label: plan.label,
            view_id: plan.view_id,
            capture_index: idx as u32,
            frame_count: plan.frame_count,
            path: rel_path,
        })
    });
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let manifest = Manifest::new(rows)?;
    manifest.write_csv(&crate::dataio::manifest_path(root))?;
    Ok(manifest)
}

fn build_spec(plan: &ClipPlan, opts: &DatasetOptions) -> Result<SceneSpec> {
    let (h, w) = opts.image_size;
    let mut drift_rng = rng::stream(plan.render_seed, "drift");
    let angle = drift_rng.gen::<f64>() * std::f64::consts::TAU;
    let mag = 0.2 + 0.8 * drift_rng.gen::<f64>();
    let fish = match plan.label {
        Label::NF => None,
        Label::NR => Some(fit_fish(
            plan.render_seed,
            (h, w),
            opts.fish_contrast,
            TrajectoryKind::Straight,
            plan.frame_count,
        )),
        Label::R => Some(fit_fish(
            plan.render_seed,
            (h, w),
            opts.fish_contrast,
            TrajectoryKind::TurnAway,
            plan.frame_count,
        )),
    };
    let spec = SceneSpec {
        view_id: plan.view_id,
        class_label: plan.label,
        frame_count: plan.frame_count,
        image_size: (h, w),
        laser_geometry: laser_geometry_for_view(
            plan.view_id,
            (h, w),
            opts.laser_gain,
            plan.render_seed,
        ),
        background_drift: (mag * angle.cos(), mag * angle.sin()),
        fish,
        timestamp_enabled: opts.timestamp_enabled,
        timestamp_class_code: opts.timestamp_enabled.then_some(plan.ts_code),
        noise_sigma: opts.noise_sigma,
        rng_seed: plan.render_seed,
    };
    spec.validate()?;
    Ok(spec)
}

/// Pick size, speed and start so the whole path stays inside the frame with a
/// one-body-length margin. The unit-speed path is computed first; speed then
/// scales it to fit and the start translates it, neither of which disturbs
/// the underlying random draws.
fn fit_fish(
    seed: u64,
    image_size: (usize, usize),
    contrast: f64,
    trajectory: TrajectoryKind,
    frame_count: usize,
) -> FishSpec {
    let (h, w) = image_size;
    let min_dim = h.min(w) as f64;
    let mut r = rng::stream(seed, "fish-place");
    let size = min_dim * (0.10 + 0.06 * r.gen::<f64>());
    let probe = FishSpec {
        start: (0.0, 0.0),
        size,
        contrast,
        speed: 1.0,
        trajectory,
    };
    let states = render::path_states(&probe, frame_count, seed);
    let xs: Vec<f64> = states.iter().map(|s| s.pos.0).collect();
    let ys: Vec<f64> = states.iter().map(|s| s.pos.1).collect();
    let (min_x, max_x) = bounds(&xs);
    let (min_y, max_y) = bounds(&ys);
    let margin = size;
    let usable_x = (w - 1) as f64 - 2.0 * margin;
    let usable_y = (h - 1) as f64 - 2.0 * margin;
    let desired = min_dim * (0.012 + 0.013 * r.gen::<f64>());
    let cap_x = if max_x - min_x > 1e-9 { 0.9 * usable_x / (max_x - min_x) } else { f64::INFINITY };
    let cap_y = if max_y - min_y > 1e-9 { 0.9 * usable_y / (max_y - min_y) } else { f64::INFINITY };
    let speed = desired.min(cap_x).min(cap_y);
    let slack_x = usable_x - speed * (max_x - min_x);
    let slack_y = usable_y - speed * (max_y - min_y);
    let start = (
        margin - speed * min_x + slack_x * r.gen::<f64>(),
        margin - speed * min_y + slack_y * r.gen::<f64>(),
    );
    FishSpec { start, size, contrast, speed, trajectory }
}

fn bounds(values: &[f64]) -> (f64, f64) {
    values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    })
}
