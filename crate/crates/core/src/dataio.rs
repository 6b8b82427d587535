//! Manifest handling, clip preprocessing (timestamp crop, frame sampling,
//! padding, flips) and the 10-fold split construction.

use crate::error::{Error, Result};
use crate::imgproc;
use crate::label::Label;
use crate::rng;
use ndarray::Array2;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::path::{Path, PathBuf};

/// Per-class counts used by every split, in class order (NF, NR, R).
pub const TRAIN_COUNTS: [usize; 3] = [144, 154, 151];
pub const VAL_COUNTS: [usize; 3] = [36, 39, 38];
pub const TEST_COUNTS: [usize; 3] = [20, 21, 21];
/// Default dataset size per class.
pub const CLASS_TOTALS: [usize; 3] = [200, 214, 210];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub clip_id: String,
    pub label: Label,
    pub view_id: u8,
    pub capture_index: u32,
    pub frame_count: usize,
    /// Clip directory, relative to the dataset root.
    pub path: String,
}

/// Rows sorted by capture index, i.e. by simulated time of capture.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    rows: Vec<ManifestRow>,
}

impl Manifest {
    pub fn new(mut rows: Vec<ManifestRow>) -> Result<Manifest> {
        rows.sort_by_key(|r| r.capture_index);
        let m = Manifest { rows };
        m.validate()?;
        Ok(m)
    }

    fn validate(&self) -> Result<()> {
        let mut ids = HashSet::new();
        let mut captures = HashSet::new();
        for row in &self.rows {
            if !ids.insert(row.clip_id.as_str()) {
                return Err(Error::Data(format!("duplicate clip_id {:?}", row.clip_id)));
            }
            if !captures.insert(row.capture_index) {
                return Err(Error::Data(format!(
                    "duplicate capture_index {} ({})",
                    row.capture_index, row.clip_id
                )));
            }
            if row.view_id < 1 || row.view_id > 16 {
                return Err(Error::Data(format!(
                    "view_id {} out of [1,16] ({})",
                    row.view_id, row.clip_id
                )));
            }
            if row.frame_count < 8 {
                return Err(Error::Data(format!(
                    "frame_count {} below minimum 8 ({})",
                    row.frame_count, row.clip_id
                )));
            }
        }
        Ok(())
    }

    pub fn rows(&self) -> &[ManifestRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn get(&self, clip_id: &str) -> Option<&ManifestRow> {
        self.rows.iter().find(|r| r.clip_id == clip_id)
    }

    pub fn class_counts(&self) -> [usize; 3] {
        let mut counts = [0usize; 3];
        for row in &self.rows {
            counts[row.label.index()] += 1;
        }
        counts
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(Error::from)?;
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Manifest> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = csv::Reader::from_reader(file);
        let mut rows = Vec::new();
        for record in r.deserialize() {
            rows.push(record?);
        }
        Manifest::new(rows)
    }
}

/// A loaded clip: all frames in memory as 8-bit grayscale.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VideoClip {
    pub clip_id: String,
    pub label: Label,
    pub view_id: u8,
    pub capture_index: u32,
    pub frames: Vec<Array2<u8>>,
    /// Trailing all-zero frames appended by `pad_clip`.
    pub n_padding: usize,
}

impl VideoClip {
    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    pub fn frame_shape(&self) -> (usize, usize) {
        self.frames[0].dim()
    }

    /// Read the clip's frames from `<root>/<row.path>/frame_%04d.png`.
    pub fn load(root: &Path, row: &ManifestRow) -> Result<VideoClip> {
        let dir = root.join(&row.path);
        let mut frames = Vec::with_capacity(row.frame_count);
        for t in 0..row.frame_count {
            let frame_path = dir.join(format!("frame_{t:04}.png"));
            frames.push(imgproc::read_png(&frame_path)?);
        }
        let shape = frames[0].dim();
        if frames.iter().any(|f| f.dim() != shape) {
            return Err(Error::Data(format!("{}: mixed frame sizes", row.clip_id)));
        }
        Ok(VideoClip {
            clip_id: row.clip_id.clone(),
            label: row.label,
            view_id: row.view_id,
            capture_index: row.capture_index,
            frames,
            n_padding: 0,
        })
    }
}

/// Zero the `(y0, x0, height, width)` box; output geometry is unchanged so
/// downstream models never see a size branch.
pub fn crop_timestamp(
    frame: &Array2<u8>,
    crop_box: (usize, usize, usize, usize),
) -> Result<Array2<u8>> {
    let (h, w) = frame.dim();
    let (y0, x0, bh, bw) = crop_box;
    if y0 + bh > h || x0 + bw > w {
        return Err(Error::Data(format!(
            "crop box {crop_box:?} exceeds frame {h}x{w}"
        )));
    }
    let mut out = frame.clone();
    out.slice_mut(ndarray::s![y0..y0 + bh, x0..x0 + bw]).fill(0);
    Ok(out)
}

/// Indices of `n` uniformly spread frames out of `t`: idx_k = floor(k·t/n).
pub fn sample_indices_uniform(t: usize, n: usize) -> Vec<usize> {
    assert!(t >= 1 && n >= 1);
    (0..n).map(|k| k * t / n).collect()
}

pub fn sample_frames_uniform(clip: &VideoClip, n: usize) -> Vec<Array2<u8>> {
    sample_indices_uniform(clip.frame_count(), n)
        .into_iter()
        .map(|i| clip.frames[i].clone())
        .collect()
}

/// Append zero frames up to `target_len`, recording how many were added.
pub fn pad_clip(mut clip: VideoClip, target_len: usize) -> Result<VideoClip> {
    let t = clip.frame_count();
    if target_len < t {
        return Err(Error::Data(format!(
            "pad target {target_len} below clip length {t}; truncation must be explicit"
        )));
    }
    let shape = clip.frame_shape();
    clip.n_padding = target_len - t;
    clip.frames
        .extend((t..target_len).map(|_| Array2::<u8>::zeros(shape)));
    Ok(clip)
}

/// Keep the first `max_len` frames (no-op for shorter clips). Padding frames
/// sit at the tail, so they are dropped first.
pub fn truncate_clip(mut clip: VideoClip, max_len: usize) -> VideoClip {
    assert!(max_len >= 1);
    let real = clip.frame_count() - clip.n_padding;
    clip.frames.truncate(max_len);
    clip.n_padding = clip.frame_count().saturating_sub(real);
    clip
}

/// Mirror about the vertical axis: column c -> W−1−c.
pub fn flip_frame(frame: &Array2<u8>) -> Array2<u8> {
    let (h, w) = frame.dim();
    Array2::from_shape_fn((h, w), |(y, x)| frame[[y, w - 1 - x]])
}

pub fn horizontal_flip(frames: &[Array2<u8>]) -> Vec<Array2<u8>> {
    frames.iter().map(flip_frame).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub split_id: u8,
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

impl SplitSpec {
    pub fn write_json(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer_pretty(file, self)?;
        Ok(())
    }

    pub fn read_json(path: &Path) -> Result<SplitSpec> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_reader(file)?)
    }

    /// Standard file name within a dataset root.
    pub fn file_name(split_id: u8) -> String {
        format!("split_{split_id:02}.json")
    }
}

/// Per-class subset sizes for one split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: [usize; 3],
    pub val: [usize; 3],
    pub test: [usize; 3],
}

impl Default for SplitCounts {
    fn default() -> Self {
        SplitCounts {
            train: TRAIN_COUNTS,
            val: VAL_COUNTS,
            test: TEST_COUNTS,
        }
    }
}

/// Build split 0 (tuning) plus `n_splits` evaluation splits, ids 0..=n_splits.
/// Each split is an independent seeded shuffle of the per-class clip pools.
pub fn make_splits(
    manifest: &Manifest,
    n_splits: u8,
    counts: SplitCounts,
    seed: u64,
) -> Result<Vec<SplitSpec>> {
    let mut per_class: [Vec<&str>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for row in manifest.rows() {
        per_class[row.label.index()].push(&row.clip_id);
    }
    for label in Label::ALL {
        let c = label.index();
        let needed = counts.train[c] + counts.val[c] + counts.test[c];
        if per_class[c].len() < needed {
            return Err(Error::SplitInfeasible {
                class: label.as_str().to_string(),
                needed,
                available: per_class[c].len(),
            });
        }
    }
    let mut splits = Vec::with_capacity(n_splits as usize + 1);
    for split_id in 0..=n_splits {
        let mut r = rng::stream_indexed(seed, "split", split_id as u64);
        let mut spec = SplitSpec {
            split_id,
            train: Vec::new(),
            val: Vec::new(),
            test: Vec::new(),
        };
        for c in 0..3 {
            let mut pool = per_class[c].clone();
            pool.shuffle(&mut r);
            let (n_tr, n_va, n_te) = (counts.train[c], counts.val[c], counts.test[c]);
            spec.train.extend(pool[..n_tr].iter().map(|s| s.to_string()));
            spec.val
                .extend(pool[n_tr..n_tr + n_va].iter().map(|s| s.to_string()));
            spec.test
                .extend(pool[n_tr + n_va..n_tr + n_va + n_te].iter().map(|s| s.to_string()));
        }
        spec.train.sort();
        spec.val.sort();
        spec.test.sort();
        splits.push(spec);
    }
    Ok(splits)
}

/// Resolve a dataset root's manifest path.
pub fn manifest_path(root: &Path) -> PathBuf {
    root.join("manifest.csv")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toy_manifest(per_class: [usize; 3]) -> Manifest {
        let mut rows = Vec::new();
        let mut idx = 0u32;
        for (c, &n) in per_class.iter().enumerate() {
            for i in 0..n {
                rows.push(ManifestRow {
                    clip_id: format!("clip_{c}_{i:04}"),
                    label: Label::from_index(c).unwrap(),
                    view_id: (idx % 16 + 1) as u8,
                    capture_index: idx,
                    frame_count: 8 + (idx as usize % 40),
                    path: format!("clips/clip_{c}_{i:04}"),
                });
                idx += 1;
            }
        }
        Manifest::new(rows).unwrap()
    }

    #[test]
    fn manifest_round_trip() {
        let m = toy_manifest([4, 3, 5]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.csv");
        m.write_csv(&path).unwrap();
        let back = Manifest::read_csv(&path).unwrap();
        assert_eq!(m, back);
        let header = std::fs::read_to_string(&path).unwrap();
        assert!(header.starts_with("clip_id,label,view_id,capture_index,frame_count,path\n"));
    }

    #[test]
    fn manifest_rejects_duplicates() {
        let mut rows = toy_manifest([2, 2, 2]).rows().to_vec();
        rows[1].clip_id = rows[0].clip_id.clone();
        assert!(Manifest::new(rows).is_err());
    }

    #[test]
    fn manifest_sorted_by_capture() {
        let mut rows = toy_manifest([3, 3, 3]).rows().to_vec();
        rows.reverse();
        let m = Manifest::new(rows).unwrap();
        let caps: Vec<u32> = m.rows().iter().map(|r| r.capture_index).collect();
        assert!(caps.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn crop_zeroes_box_only() {
        let frame = Array2::from_shape_fn((20, 30), |(y, x)| (y * 30 + x) as u8);
        let out = crop_timestamp(&frame, (0, 0, 3, 9)).unwrap();
        for y in 0..20 {
            for x in 0..30 {
                let expect = if y < 3 && x < 9 { 0 } else { frame[[y, x]] };
                assert_eq!(out[[y, x]], expect);
            }
        }
        assert!(crop_timestamp(&frame, (0, 0, 21, 5)).is_err());
        assert!(crop_timestamp(&frame, (18, 28, 3, 3)).is_err());
    }

    #[test]
    fn uniform_sampling_formula() {
        assert_eq!(sample_indices_uniform(8, 8), (0..8).collect::<Vec<_>>());
        assert_eq!(sample_indices_uniform(16, 8), vec![0, 2, 4, 6, 8, 10, 12, 14]);
        assert_eq!(
            sample_indices_uniform(30, 8),
            vec![0, 3, 7, 11, 15, 18, 22, 26]
        );
    }

    #[test]
    fn padding_appends_zeros() {
        let frames = vec![Array2::from_elem((4, 4), 7u8); 8];
        let clip = VideoClip {
            clip_id: "c".into(),
            label: Label::NR,
            view_id: 1,
            capture_index: 0,
            frames,
            n_padding: 0,
        };
        let same = pad_clip(clip.clone(), 8).unwrap();
        assert_eq!(same.n_padding, 0);
        assert_eq!(same.frame_count(), 8);

        let padded = pad_clip(clip.clone(), 40).unwrap();
        assert_eq!(padded.n_padding, 32);
        assert_eq!(padded.frame_count(), 40);
        for t in 0..8 {
            assert_eq!(padded.frames[t], clip.frames[t]);
        }
        for t in 8..40 {
            assert!(padded.frames[t].iter().all(|&v| v == 0));
        }
        assert!(pad_clip(clip, 5).is_err());
    }

    #[test]
    fn truncate_keeps_prefix() {
        let frames: Vec<_> = (0..10).map(|t| Array2::from_elem((4, 4), t as u8)).collect();
        let clip = VideoClip {
            clip_id: "c".into(),
            label: Label::NR,
            view_id: 1,
            capture_index: 0,
            frames,
            n_padding: 0,
        };
        let cut = truncate_clip(clip, 4);
        assert_eq!(cut.frame_count(), 4);
        assert_eq!(cut.frames[3][[0, 0]], 3);
    }

    #[test]
    fn split_counts_and_partition() {
        let manifest = toy_manifest(CLASS_TOTALS);
        let splits = make_splits(&manifest, 10, SplitCounts::default(), 7).unwrap();
        assert_eq!(splits.len(), 11);
        let all_ids: HashSet<&str> = manifest.rows().iter().map(|r| r.clip_id.as_str()).collect();
        for spec in &splits {
            assert_eq!(spec.train.len(), 449);
            assert_eq!(spec.val.len(), 113);
            assert_eq!(spec.test.len(), 62);
            let train: HashSet<&str> = spec.train.iter().map(|s| s.as_str()).collect();
            let val: HashSet<&str> = spec.val.iter().map(|s| s.as_str()).collect();
            let test: HashSet<&str> = spec.test.iter().map(|s| s.as_str()).collect();
            assert!(train.is_disjoint(&val));
            assert!(train.is_disjoint(&test));
            assert!(val.is_disjoint(&test));
            let union: HashSet<&str> = train.union(&val).copied().collect();
            let union: HashSet<&str> = union.union(&test).copied().collect();
            assert_eq!(union, all_ids);
            for label in Label::ALL {
                let c = label.index();
                let in_class = |ids: &[String]| {
                    ids.iter()
                        .filter(|id| manifest.get(id).unwrap().label == label)
                        .count()
                };
                assert_eq!(in_class(&spec.train), TRAIN_COUNTS[c]);
                assert_eq!(in_class(&spec.val), VAL_COUNTS[c]);
                assert_eq!(in_class(&spec.test), TEST_COUNTS[c]);
            }
        }
    }

    #[test]
    fn splits_deterministic_and_seed_sensitive() {
        let manifest = toy_manifest(CLASS_TOTALS);
        let a = make_splits(&manifest, 3, SplitCounts::default(), 7).unwrap();
        let b = make_splits(&manifest, 3, SplitCounts::default(), 7).unwrap();
        let c = make_splits(&manifest, 3, SplitCounts::default(), 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a[1].train, a[2].train);
    }

    #[test]
    fn infeasible_split_names_class() {
        let manifest = toy_manifest([200, 150, 210]);
        let err = make_splits(&manifest, 2, SplitCounts::default(), 7).unwrap_err();
        match err {
            Error::SplitInfeasible { class, needed, available } => {
                assert_eq!(class, "NR");
                assert_eq!(needed, 214);
                assert_eq!(available, 150);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn split_json_round_trip() {
        let manifest = toy_manifest([30, 30, 30]);
        let counts = SplitCounts {
            train: [20, 20, 20],
            val: [6, 6, 6],
            test: [4, 4, 4],
        };
        let splits = make_splits(&manifest, 1, counts, 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(SplitSpec::file_name(splits[1].split_id));
        splits[1].write_json(&path).unwrap();
        assert_eq!(SplitSpec::read_json(&path).unwrap(), splits[1]);
    }

    proptest! {
        #[test]
        fn sampling_monotone_when_enough_frames(t in 1usize..200, n in 1usize..32) {
            let idx = sample_indices_uniform(t, n);
            prop_assert_eq!(idx.len(), n);
            prop_assert!(idx.iter().all(|&i| i < t));
            if t >= n {
                prop_assert!(idx.windows(2).all(|w| w[0] < w[1]));
            }
        }

        #[test]
        fn flip_is_involutive(h in 1usize..12, w in 1usize..12, seed in 0u64..1000) {
            let mut r = crate::rng::stream(seed, "flip-test");
            let frame = Array2::from_shape_fn((h, w), |_| rand::Rng::gen::<u8>(&mut r));
            let once = flip_frame(&frame);
            for y in 0..h {
                for x in 0..w {
                    prop_assert_eq!(once[[y, x]], frame[[y, w - 1 - x]]);
                }
            }
            prop_assert_eq!(flip_frame(&once), frame);
        }
    }
}
