//! Seven-segment style digit rendering for the burned-in timestamp.

use ndarray::Array2;

/// Segment order: top, top-right, bottom-right, bottom, bottom-left,
/// top-left, middle.
const DIGIT_SEGMENTS: [[bool; 7]; 10] = [
    [true, true, true, true, true, true, false],    // 0
    [false, true, true, false, false, false, false], // 1
    [true, true, false, true, true, false, true],   // 2
    [true, true, true, true, false, false, true],   // 3
    [false, true, true, false, false, true, true],  // 4
    [true, false, true, true, false, true, true],   // 5
    [true, false, true, true, true, true, true],    // 6
    [true, true, true, false, false, false, false], // 7
    [true, true, true, true, true, true, true],     // 8
    [true, true, true, true, false, true, true],    // 9
];

fn fill_rect(buf: &mut Array2<f64>, y0: i64, x0: i64, h: i64, w: i64, value: f64) {
    let (bh, bw) = buf.dim();
    for y in y0.max(0)..(y0 + h).min(bh as i64) {
        for x in x0.max(0)..(x0 + w).min(bw as i64) {
            buf[[y as usize, x as usize]] = value;
        }
    }
}

/// Draw one digit into the cell at `(y0, x0)` with size `(h, w)`.
pub fn draw_digit(buf: &mut Array2<f64>, digit: u8, y0: i64, x0: i64, h: i64, w: i64, value: f64) {
    draw_segments(buf, DIGIT_SEGMENTS[(digit % 10) as usize], y0, x0, h, w, value);
}

/// Draw an arbitrary segment set (same order as `DIGIT_SEGMENTS`); lets the
/// figure renderer add the few letters it needs in the same visual style.
pub fn draw_segments(
    buf: &mut Array2<f64>,
    segs: [bool; 7],
    y0: i64,
    x0: i64,
    h: i64,
    w: i64,
    value: f64,
) {
    let t = (h / 5).max(1); // stroke thickness
    let half = h / 2;
    // horizontal bars
    if segs[0] {
        fill_rect(buf, y0, x0, t, w, value);
    }
    if segs[6] {
        fill_rect(buf, y0 + half - t / 2, x0, t, w, value);
    }
    if segs[3] {
        fill_rect(buf, y0 + h - t, x0, t, w, value);
    }
    // vertical bars
    if segs[5] {
        fill_rect(buf, y0, x0, half, t, value);
    }
    if segs[1] {
        fill_rect(buf, y0, x0 + w - t, half, t, value);
    }
    if segs[4] {
        fill_rect(buf, y0 + half, x0, h - half, t, value);
    }
    if segs[2] {
        fill_rect(buf, y0 + half, x0 + w - t, h - half, t, value);
    }
}

/// Draw a colon separator (two stacked dots).
pub fn draw_colon(buf: &mut Array2<f64>, y0: i64, x0: i64, h: i64, w: i64, value: f64) {
    let t = (h / 5).max(1);
    let cx = x0 + w / 2 - t / 2;
    fill_rect(buf, y0 + h / 4, cx, t, t, value);
    fill_rect(buf, y0 + 3 * h / 4 - t, cx, t, t, value);
}
