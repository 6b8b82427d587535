//! The 16 fixed camera-view laser layouts.
//!
//! Each view is a small set of bright line segments in unit coordinates
//! (x right, y down). Layouts are hand-placed to be mutually distinct so a
//! nearest-centroid classifier on laser masks can recover the view exactly.

/// One laser line in unit coordinates with a relative brightness factor.
#[derive(Debug, Clone, Copy)]
pub struct UnitSegment {
    pub start: (f64, f64),
    pub end: (f64, f64),
    pub gain: f64,
}

const fn seg(x0: f64, y0: f64, x1: f64, y1: f64, gain: f64) -> UnitSegment {
    UnitSegment {
        start: (x0, y0),
        end: (x1, y1),
        gain,
    }
}

/// Base layouts for views 1..=16 (index 0 is view 1).
pub const VIEW_LAYOUTS: [&[UnitSegment]; 16] = [
    // 1: two lines converging toward the lower centre
    &[seg(0.05, 0.20, 0.55, 0.85, 1.0), seg(0.95, 0.25, 0.50, 0.88, 1.0)],
    // 2: three shallow fan lines from the left edge
    &[
        seg(0.02, 0.30, 0.90, 0.45, 1.0),
        seg(0.02, 0.55, 0.92, 0.60, 0.9),
        seg(0.02, 0.80, 0.88, 0.72, 0.8),
    ],
    // 3: steep cross high in the frame
    &[seg(0.25, 0.05, 0.70, 0.95, 1.0), seg(0.78, 0.08, 0.30, 0.90, 0.9)],
    // 4: two near-horizontal bars, lower third
    &[seg(0.05, 0.62, 0.95, 0.66, 1.0), seg(0.08, 0.82, 0.92, 0.80, 0.9)],
    // 5: V from the top corners
    &[seg(0.08, 0.05, 0.50, 0.70, 1.0), seg(0.92, 0.05, 0.52, 0.72, 1.0)],
    // 6: four thin verticals
    &[
        seg(0.20, 0.10, 0.24, 0.92, 0.9),
        seg(0.42, 0.08, 0.44, 0.90, 1.0),
        seg(0.62, 0.10, 0.62, 0.92, 0.9),
        seg(0.82, 0.12, 0.80, 0.90, 0.8),
    ],
    // 7: single long diagonal plus a short stub
    &[seg(0.02, 0.95, 0.98, 0.15, 1.0), seg(0.10, 0.15, 0.30, 0.25, 0.8)],
    // 8: shallow X in the lower half
    &[seg(0.05, 0.55, 0.95, 0.90, 1.0), seg(0.05, 0.90, 0.95, 0.55, 1.0)],
    // 9: three converging lines from the right
    &[
        seg(0.98, 0.20, 0.15, 0.55, 1.0),
        seg(0.98, 0.50, 0.12, 0.60, 0.9),
        seg(0.98, 0.85, 0.18, 0.65, 0.9),
    ],
    // 10: horizontal pair high in the frame
    &[seg(0.05, 0.18, 0.95, 0.22, 1.0), seg(0.10, 0.38, 0.90, 0.35, 0.9)],
    // 11: wide W shape
    &[
        seg(0.05, 0.30, 0.30, 0.80, 1.0),
        seg(0.30, 0.80, 0.52, 0.35, 0.9),
        seg(0.52, 0.35, 0.75, 0.82, 0.9),
        seg(0.75, 0.82, 0.95, 0.32, 1.0),
    ],
    // 12: steep parallel diagonals
    &[
        seg(0.30, 0.05, 0.10, 0.95, 1.0),
        seg(0.60, 0.05, 0.40, 0.95, 0.9),
        seg(0.90, 0.05, 0.70, 0.95, 0.9),
    ],
    // 13: L along the left and bottom edges
    &[seg(0.12, 0.08, 0.15, 0.90, 1.0), seg(0.15, 0.90, 0.95, 0.85, 0.9)],
    // 14: two short steep bars, right half
    &[seg(0.72, 0.12, 0.58, 0.55, 1.0), seg(0.94, 0.28, 0.80, 0.68, 0.9)],
    // 15: tall narrow V bottom-centre
    &[seg(0.35, 0.20, 0.50, 0.95, 1.0), seg(0.65, 0.20, 0.52, 0.95, 1.0)],
    // 16: one central vertical with crossing bar
    &[seg(0.50, 0.05, 0.48, 0.95, 1.0), seg(0.15, 0.48, 0.85, 0.52, 0.9)],
];

pub fn layout(view_id: u8) -> &'static [UnitSegment] {
    VIEW_LAYOUTS[(view_id as usize - 1) % 16]
}
