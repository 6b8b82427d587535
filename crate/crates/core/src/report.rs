//! Figure rendering for stored run artifacts: training curves, per-view
//! confusion heatmaps, adjacency curves and agreement/probe bars. Everything
//! is drawn straight into RGB buffers with the seven-segment glyphs from the
//! scene generator, so figures have no plotting dependency and rebuild
//! bit-identically.

use crate::audit::{AdjacencyReport, PaddingProbeReport, TimestampProbeReport, ViewBiasReport};
use crate::dataio::Manifest;
use crate::error::{Error, Result};
use crate::scenegen::glyphs;
use crate::training::TrainHistory;
use image::{Rgb, RgbImage};
use ndarray::Array2;
use std::collections::HashMap;
use std::path::Path;

const INK: [u8; 3] = [40, 40, 40];
const AXIS: [u8; 3] = [150, 150, 150];
const GRID: [u8; 3] = [224, 224, 224];
const TRAIN_COLOR: [u8; 3] = [70, 100, 200];
const VAL_COLOR: [u8; 3] = [200, 80, 60];
const ACC_COLOR: [u8; 3] = [50, 140, 90];
const MUTED: [u8; 3] = [170, 170, 170];
const ALERT: [u8; 3] = [200, 60, 60];

/// Seven-segment letter shapes, same segment order as the digit table:
/// top, top-right, bottom-right, bottom, bottom-left, top-left, middle.
fn letter_segments(c: char) -> Option<[bool; 7]> {
    match c {
        'n' => Some([false, false, true, false, true, false, true]),
        'f' => Some([true, false, false, false, true, true, true]),
        'r' => Some([false, false, false, false, true, false, true]),
        'u' | 'v' => Some([false, true, true, true, true, true, false]),
        'c' => Some([true, false, false, true, true, true, false]),
        'b' => Some([false, false, true, true, true, true, true]),
        't' => Some([false, false, false, true, true, true, true]),
        'p' => Some([true, true, false, false, true, true, true]),
        'a' => Some([true, true, true, false, true, true, true]),
        'l' => Some([false, false, false, true, true, true, false]),
        _ => None,
    }
}

/// A white RGB canvas with just enough drawing primitives for the figures.
pub struct Canvas {
    img: RgbImage,
}

impl Canvas {
    pub fn new(w: u32, h: u32) -> Canvas {
        Canvas { img: RgbImage::from_pixel(w, h, Rgb([255, 255, 255])) }
    }

    pub fn size(&self) -> (u32, u32) {
        self.img.dimensions()
    }

    fn put(&mut self, x: i64, y: i64, c: [u8; 3]) {
        if x >= 0 && y >= 0 && (x as u32) < self.img.width() && (y as u32) < self.img.height() {
            self.img.put_pixel(x as u32, y as u32, Rgb(c));
        }
    }

    pub fn fill_rect(&mut self, x0: i64, y0: i64, w: i64, h: i64, c: [u8; 3]) {
        for y in y0..y0 + h {
            for x in x0..x0 + w {
                self.put(x, y, c);
            }
        }
    }

    pub fn rect(&mut self, x0: i64, y0: i64, w: i64, h: i64, c: [u8; 3]) {
        self.fill_rect(x0, y0, w, 1, c);
        self.fill_rect(x0, y0 + h - 1, w, 1, c);
        self.fill_rect(x0, y0, 1, h, c);
        self.fill_rect(x0 + w - 1, y0, 1, h, c);
    }

    pub fn line(&mut self, from: (f64, f64), to: (f64, f64), c: [u8; 3]) {
        let (dx, dy) = (to.0 - from.0, to.1 - from.1);
        let n = dx.abs().max(dy.abs()).ceil().max(1.0) as usize;
        for i in 0..=n {
            let t = i as f64 / n as f64;
            self.put(
                (from.0 + t * dx).round() as i64,
                (from.1 + t * dy).round() as i64,
                c,
            );
        }
    }

    /// Digits, '.', ':', '-' and the lowercase letters in `letter_segments`,
    /// drawn seven-segment style at height `h`. Returns the advance width.
    pub fn text(&mut self, s: &str, x0: i64, y0: i64, h: i64, c: [u8; 3]) -> i64 {
        let w = (h * 3 / 5).max(3);
        let gap = (h / 5).max(1);
        let mut x = x0;
        for ch in s.chars() {
            let mut buf = Array2::<f64>::zeros((h as usize, w as usize));
            match ch {
                '0'..='9' => {
                    glyphs::draw_digit(&mut buf, ch as u8 - b'0', 0, 0, h, w, 1.0);
                }
                ':' => glyphs::draw_colon(&mut buf, 0, 0, h, w, 1.0),
                '.' => {
                    let t = (h / 5).max(1);
                    for y in (h - t)..h {
                        for px in 0..t {
                            buf[[y as usize, px as usize]] = 1.0;
                        }
                    }
                }
                '-' => {
                    let t = (h / 5).max(1);
                    for y in (h / 2 - t / 2)..(h / 2 - t / 2 + t) {
                        for px in 0..w {
                            buf[[y as usize, px as usize]] = 1.0;
                        }
                    }
                }
                ' ' => {}
                _ => match letter_segments(ch) {
                    Some(segs) => glyphs::draw_segments(&mut buf, segs, 0, 0, h, w, 1.0),
                    None => glyphs::draw_segments(
                        &mut buf,
                        [false, false, false, true, false, false, false],
                        0,
                        0,
                        h,
                        w,
                        1.0,
                    ),
                },
            }
            for ((yy, xx), v) in buf.indexed_iter() {
                if *v > 0.0 {
                    self.put(x + xx as i64, y0 + yy as i64, c);
                }
            }
            x += w + gap;
        }
        x - x0
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.img.save(path)?;
        Ok(())
    }
}

fn nice_ceil(v: f64) -> f64 {
    if v <= 0.0 {
        return 1.0;
    }
    let mag = 10f64.powf(v.log10().floor());
    let mut step = mag;
    while step < v {
        step += mag;
    }
    step
}

/// Train/validation loss curves over epochs with the selected epoch marked,
/// plus a validation-accuracy strip underneath.
pub fn training_curves(history: &TrainHistory, path: &Path) -> Result<()> {
    if history.epochs.is_empty() {
        return Err(Error::Data("training curves of an empty history".into()));
    }
    let (w, h) = (640i64, 420i64);
    let margin = 48i64;
    let loss_h = 220i64;
    let acc_top = margin + loss_h + 36;
    let acc_h = 100i64;
    let plot_w = w - 2 * margin;
    let mut c = Canvas::new(w as u32, h as u32);

    let n = history.epochs.len();
    let max_loss = nice_ceil(
        history
            .epochs
            .iter()
            .flat_map(|e| [e.train_loss, e.val_loss])
            .fold(0.0f64, f64::max),
    );
    let x_at = |i: usize| {
        margin as f64 + if n == 1 { 0.0 } else { plot_w as f64 * i as f64 / (n - 1) as f64 }
    };
    let loss_y = |v: f64| margin as f64 + loss_h as f64 * (1.0 - (v / max_loss).clamp(0.0, 1.0));
    let acc_y = |v: f64| acc_top as f64 + acc_h as f64 * (1.0 - v.clamp(0.0, 1.0));

    for (top, ph) in [(margin, loss_h), (acc_top, acc_h)] {
        c.rect(margin, top, plot_w + 1, ph + 1, AXIS);
    }
    c.text(&format!("{max_loss:.1}"), 6, margin - 5, 10, INK);
    c.text("0.0", 6, margin + loss_h - 5, 10, INK);
    c.text("1.0", 6, acc_top - 5, 10, INK);
    c.text("0.0", 6, acc_top + acc_h - 5, 10, INK);
    c.text("0", margin - 3, h - 16, 10, INK);
    c.text(&format!("{}", history.epochs.last().unwrap().epoch), margin + plot_w - 14, h - 16, 10, INK);

    let sel_x = x_at(history.selected);
    c.line((sel_x, margin as f64), (sel_x, (margin + loss_h) as f64), GRID);
    c.line((sel_x, acc_top as f64), (sel_x, (acc_top + acc_h) as f64), GRID);

    for i in 1..n {
        let (a, b) = (&history.epochs[i - 1], &history.epochs[i]);
        c.line((x_at(i - 1), loss_y(a.train_loss)), (x_at(i), loss_y(b.train_loss)), TRAIN_COLOR);
        c.line((x_at(i - 1), loss_y(a.val_loss)), (x_at(i), loss_y(b.val_loss)), VAL_COLOR);
        c.line((x_at(i - 1), acc_y(a.val_acc)), (x_at(i), acc_y(b.val_acc)), ACC_COLOR);
    }
    if n == 1 {
        let e = &history.epochs[0];
        c.fill_rect(x_at(0) as i64 - 1, loss_y(e.train_loss) as i64 - 1, 3, 3, TRAIN_COLOR);
        c.fill_rect(x_at(0) as i64 - 1, loss_y(e.val_loss) as i64 - 1, 3, 3, VAL_COLOR);
        c.fill_rect(x_at(0) as i64 - 1, acc_y(e.val_acc) as i64 - 1, 3, 3, ACC_COLOR);
    }

    // legend: train / val swatches next to the loss panel
    c.fill_rect(margin + plot_w - 90, margin + 8, 10, 10, TRAIN_COLOR);
    c.fill_rect(margin + plot_w - 90, margin + 24, 10, 10, VAL_COLOR);
    c.text("tr", margin + plot_w - 74, margin + 8, 10, INK);
    c.text("val", margin + plot_w - 74, margin + 24, 10, INK);
    c.save(path)
}

fn heat(v: f64) -> [u8; 3] {
    // white -> deep blue ramp
    let t = v.clamp(0.0, 1.0);
    let ch = |hi: f64| (255.0 - t * (255.0 - hi)).round() as u8;
    [ch(30.0), ch(60.0), ch(150.0)]
}

/// 4x4 grid of per-view 3x3 confusion heatmaps. Views whose modal predicted
/// class matches the view majority get a red corner tag, the paper-style
/// signature of view-driven predictions.
pub fn view_heatmaps(report: &ViewBiasReport, path: &Path) -> Result<()> {
    if report.entries.len() != 16 {
        return Err(Error::Data(format!(
            "per-view report carries {} views, expected 16",
            report.entries.len()
        )));
    }
    let cell = 18i64;
    let tile = 3 * cell;
    let label_h = 16i64;
    let gutter = 14i64;
    let margin = 16i64;
    let step = tile + gutter;
    let wh = 2 * margin + 4 * step - gutter;
    let hh = 2 * margin + 4 * (tile + label_h + gutter) - gutter;
    let mut c = Canvas::new(wh as u32, hh as u32);

    for (k, e) in report.entries.iter().enumerate() {
        let gx = margin + (k as i64 % 4) * step;
        let gy = margin + (k as i64 / 4) * (tile + label_h + gutter);
        c.text(&format!("{}", e.view_id), gx, gy, 10, INK);
        if e.modal_predicted == Some(e.majority) && e.matrix.total() > 0 {
            c.fill_rect(gx + tile - 8, gy, 8, 8, ALERT);
        }
        let top = gy + label_h;
        let max = e.matrix.counts.iter().flatten().copied().max().unwrap_or(0);
        for i in 0..3i64 {
            for j in 0..3i64 {
                let v = e.matrix.counts[i as usize][j as usize];
                let col = if max == 0 { [245, 245, 245] } else { heat(v as f64 / max as f64) };
                c.fill_rect(gx + j * cell, top + i * cell, cell, cell, col);
            }
        }
        c.rect(gx, top, tile, tile, AXIS);
    }
    c.save(path)
}

/// Per-class strips of mean PP against capture order. Vertical ticks mark
/// where the capture sweep moves to a different camera view; a view-driven
/// model steps exactly there.
pub fn adjacency_curves(report: &AdjacencyReport, manifest: &Manifest, path: &Path) -> Result<()> {
    if report.per_class.iter().all(|c| c.is_empty()) {
        return Err(Error::Data("adjacency report has no curve points".into()));
    }
    let view_of: HashMap<&str, u8> = manifest
        .rows()
        .iter()
        .map(|r| (r.clip_id.as_str(), r.view_id))
        .collect();
    let (w, strip_h, gap, margin) = (640i64, 110i64, 26i64, 44i64);
    let h = 2 * margin + 3 * strip_h + 2 * gap;
    let plot_w = w - 2 * margin;
    let mut c = Canvas::new(w as u32, h as u32);
    let names = ["nf", "nr", "r"];

    for (ci, curve) in report.per_class.iter().enumerate() {
        let top = margin + ci as i64 * (strip_h + gap);
        c.rect(margin, top, plot_w + 1, strip_h + 1, AXIS);
        c.text(names[ci], 8, top + strip_h / 2 - 5, 10, INK);
        c.text("1", margin - 10, top - 4, 8, AXIS);
        c.text("0", margin - 10, top + strip_h - 4, 8, AXIS);
        // chance level
        let y13 = top as f64 + strip_h as f64 * (1.0 - 1.0 / 3.0);
        c.line((margin as f64, y13), ((margin + plot_w) as f64, y13), GRID);
        if curve.is_empty() {
            continue;
        }
        let x_at = |i: usize| {
            margin as f64
                + if curve.len() == 1 {
                    0.0
                } else {
                    plot_w as f64 * i as f64 / (curve.len() - 1) as f64
                }
        };
        let y_at = |pp: f64| top as f64 + strip_h as f64 * (1.0 - pp.clamp(0.0, 1.0));
        for i in 1..curve.len() {
            let boundary = view_of.get(curve[i - 1].clip_id.as_str())
                != view_of.get(curve[i].clip_id.as_str());
            if boundary {
                let xb = (x_at(i - 1) + x_at(i)) / 2.0;
                c.line((xb, top as f64), (xb, (top + strip_h) as f64), GRID);
            }
        }
        for i in 0..curve.len() {
            if i > 0 {
                c.line(
                    (x_at(i - 1), y_at(curve[i - 1].mean_pp)),
                    (x_at(i), y_at(curve[i].mean_pp)),
                    TRAIN_COLOR,
                );
            }
            c.fill_rect(x_at(i) as i64 - 1, y_at(curve[i].mean_pp) as i64 - 1, 3, 3, VAL_COLOR);
        }
    }
    c.save(path)
}

fn bar(c: &mut Canvas, x: i64, base: i64, bw: i64, ph: i64, v: f64, col: [u8; 3]) {
    let bh = (ph as f64 * v.clamp(0.0, 1.0)).round() as i64;
    c.fill_rect(x, base - bh, bw, bh, col);
}

/// Per-view accuracy bars next to the majority-agreement figure and its
/// permutation baseline.
pub fn agreement_bars(report: &ViewBiasReport, path: &Path) -> Result<()> {
    if report.entries.len() != 16 {
        return Err(Error::Data(format!(
            "per-view report carries {} views, expected 16",
            report.entries.len()
        )));
    }
    let (margin, ph, bw, gap) = (46i64, 200i64, 18i64, 6i64);
    let group_gap = 30i64;
    let w = 2 * margin + 16 * (bw + gap) + group_gap + 2 * (bw + gap);
    let h = margin + ph + 56;
    let base = margin + ph;
    let mut c = Canvas::new(w as u32, h as u32);
    c.rect(margin - 4, margin, 2, ph, AXIS);
    c.text("1.0", 6, margin - 4, 9, INK);
    c.text("0.0", 6, base - 5, 9, INK);
    c.line(
        ((margin - 4) as f64, base as f64),
        ((w - margin + 4) as f64, base as f64),
        AXIS,
    );

    let mut x = margin;
    for e in &report.entries {
        let total = e.matrix.total();
        if total == 0 {
            c.fill_rect(x, base - 2, bw, 2, MUTED);
        } else {
            bar(&mut c, x, base, bw, ph, e.matrix.trace() as f64 / total as f64, TRAIN_COLOR);
        }
        c.text(&format!("{}", e.view_id), x + 2, base + 6, 8, AXIS);
        x += bw + gap;
    }
    x += group_gap;
    bar(&mut c, x, base, bw, ph, report.majority_agreement, ACC_COLOR);
    c.text(
        &format!("{:.2}", report.majority_agreement),
        x - 6,
        base - (ph as f64 * report.majority_agreement.clamp(0.0, 1.0)) as i64 - 14,
        9,
        INK,
    );
    x += bw + gap;
    bar(&mut c, x, base, bw, ph, report.permutation_baseline, MUTED);
    c.text(
        &format!("{:.2}", report.permutation_baseline),
        x - 6,
        base - (ph as f64 * report.permutation_baseline.clamp(0.0, 1.0)) as i64 - 14,
        9,
        INK,
    );
    c.save(path)
}

/// Padding and timestamp probe summaries as labelled bars with their decision
/// thresholds drawn in.
pub fn probe_bars(
    padding: Option<&PaddingProbeReport>,
    timestamp: Option<&TimestampProbeReport>,
    path: &Path,
) -> Result<()> {
    if padding.is_none() && timestamp.is_none() {
        return Err(Error::Data("probe figure requested with no probe reports".into()));
    }
    let (margin, ph, bw, gap) = (46i64, 200i64, 26i64, 14i64);
    let n_pad = padding.map_or(0, |p| p.settings.len() + 1);
    let n_ts = if timestamp.is_some() { 3 } else { 0 };
    let group_gap = if n_pad > 0 && n_ts > 0 { 36i64 } else { 0 };
    let w = 2 * margin + (n_pad + n_ts) as i64 * (bw + gap) + group_gap;
    let h = margin + ph + 60;
    let base = margin + ph;
    let mut c = Canvas::new(w as u32, h as u32);
    c.rect(margin - 4, margin, 2, ph, AXIS);
    c.text("1.0", 6, margin - 4, 9, INK);
    c.text("0.0", 6, base - 5, 9, INK);
    c.line(((margin - 4) as f64, base as f64), ((w - margin + 4) as f64, base as f64), AXIS);
    let mut x = margin;

    if let Some(p) = padding {
        let yl = base - (ph as f64 * crate::audit::thresholds::PADDING_PP_LEAK) as i64;
        let yc = base - (ph as f64 * crate::audit::thresholds::PADDING_PP_CONTROL) as i64;
        let x1 = (x + p.settings.len() as i64 * (bw + gap)) as f64;
        c.line((x as f64, yl as f64), (x1, yl as f64), ALERT);
        c.line((x as f64, yc as f64), (x1, yc as f64), MUTED);
        for s in &p.settings {
            let v = s.mean_prob_padded[p.short_class.index()].unwrap_or(0.0);
            bar(&mut c, x, base, bw, ph, v, VAL_COLOR);
            c.text(&format!("{}", s.frames_per_video), x + 4, base + 6, 8, AXIS);
            x += bw + gap;
        }
        bar(&mut c, x, base, bw, ph, p.padded_frame_mass, TRAIN_COLOR);
        let ys = base - (ph as f64 * p.padded_frame_share) as i64;
        c.line((x as f64 - 2.0, ys as f64), ((x + bw) as f64 + 2.0, ys as f64), INK);
        c.text("pb", x + 4, base + 6, 8, AXIS);
        x += bw + gap + group_gap;
    }

    if let Some(t) = timestamp {
        let vals = [
            (t.uncropped_region_mass, VAL_COLOR, "u"),
            (t.cropped_region_mass, TRAIN_COLOR, "c"),
            (t.box_area_fraction, MUTED, "b"),
        ];
        let yr = base
            - (ph as f64
                * (crate::audit::thresholds::TIMESTAMP_MASS_RATIO * t.box_area_fraction)
                    .min(1.0)) as i64;
        let x1 = (x + 3 * (bw + gap)) as f64;
        c.line((x as f64, yr as f64), (x1, yr as f64), ALERT);
        for (v, col, lab) in vals {
            bar(&mut c, x, base, bw, ph, v, col);
            c.text(lab, x + 8, base + 6, 8, AXIS);
            c.text(&format!("{v:.2}"), x - 4, base - (ph as f64 * v.clamp(0.0, 1.0)) as i64 - 14, 9, INK);
            x += bw + gap;
        }
    }
    c.save(path)
}
