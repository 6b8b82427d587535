//! Turns manifest rows into model-ready tensors: timestamp crop, sequence
//! length adjustment, per-architecture frame selection, flow stacking for the
//! temporal stream, resize and [0,1] scaling.

use crate::dataio::{self, Manifest, ManifestRow, VideoClip};
use crate::error::{Error, Result};
use crate::flow::{self, FlowField, FlowParams, N_PAIRS};
use crate::imgproc;
use crate::label::Label;
use crate::models::{Architecture, ModelConfig};
use crate::par;
use crate::scenegen;
use ndarray::{s, Array2, Array3};
use std::path::{Path, PathBuf};

/// A preprocessed clip: `input`'s leading axis is frames (or flow channels
/// for the temporal stream), already resized and scaled to [0,1].
#[derive(Debug, Clone)]
pub struct LoadedClip {
    pub clip_id: String,
    pub label: Label,
    pub view_id: u8,
    pub capture_index: u32,
    /// Zero frames appended to reach the requested length, after truncation.
    pub n_padding: usize,
    pub input: Array3<f64>,
}

#[derive(Debug, Clone)]
pub struct Loader {
    root: PathBuf,
    pub cfg: ModelConfig,
    /// Zero out the burned-in timestamp box before anything else.
    pub crop_timestamps: bool,
    /// Pad/truncate every clip to this length before frame selection; used
    /// by the padding probe's sequence-length sweep.
    pub seq_len: Option<usize>,
    /// Directory for cached per-pair flow fields.
    pub flow_cache: Option<PathBuf>,
    pub flow_params: FlowParams,
}

impl Loader {
    pub fn new(root: &Path, cfg: ModelConfig) -> Loader {
        Loader {
            root: root.to_path_buf(),
            cfg,
            crop_timestamps: true,
            seq_len: None,
            flow_cache: None,
            flow_params: FlowParams::default(),
        }
    }

    pub fn load_input(&self, row: &ManifestRow) -> Result<LoadedClip> {
        let mut clip = VideoClip::load(&self.root, row)?;
        if self.crop_timestamps {
            let (h, w) = clip.frame_shape();
            let bx = scenegen::timestamp_box(h, w);
            for frame in &mut clip.frames {
                *frame = dataio::crop_timestamp(frame, bx)?;
            }
        }
        if let Some(l) = self.seq_len {
            clip = adjust_length(clip, l)?;
        }

        let (n_padding, channels) = match self.cfg.architecture {
            Architecture::Temporal => {
                let t = clip.frame_count();
                if t < N_PAIRS + 1 {
                    return Err(Error::Data(format!(
                        "{}: temporal stream needs at least {} frames, got {t}",
                        clip.clip_id,
                        N_PAIRS + 1
                    )));
                }
                let key = self.cache_key(&clip.clip_id);
                let pair_starts = dataio::sample_indices_uniform(t - 1, N_PAIRS);
                let mut channels = Vec::with_capacity(2 * N_PAIRS);
                for &p in &pair_starts {
                    let field = self.pair_flow(&clip.frames, p, &key)?;
                    channels.push(clip.frames[p].clone());
                    channels.push(flow::flow_magnitude(&field));
                }
                (clip.n_padding, channels)
            }
            _ => {
                let clip = adjust_length(clip, self.cfg.frames_per_video)?;
                (clip.n_padding, clip.frames)
            }
        };

        let size = self.cfg.image_size;
        let mut input = Array3::zeros((channels.len(), size, size));
        for (i, ch) in channels.iter().enumerate() {
            let resized = imgproc::resize_bilinear(&imgproc::to_f64(ch), size, size);
            input.index_axis_mut(ndarray::Axis(0), i).assign(&(resized / 255.0));
        }
        Ok(LoadedClip {
            clip_id: row.clip_id.clone(),
            label: row.label,
            view_id: row.view_id,
            capture_index: row.capture_index,
            n_padding,
            input,
        })
    }

    /// Load a split subset; order follows `ids`.
    pub fn load_ids(&self, manifest: &Manifest, ids: &[String]) -> Result<Vec<LoadedClip>> {
        let rows: Vec<&ManifestRow> = ids
            .iter()
            .map(|id| {
                manifest
                    .get(id)
                    .ok_or_else(|| Error::Data(format!("clip_id {id:?} not in manifest")))
            })
            .collect::<Result<_>>()?;
        par::map_slice(&rows, |row| self.load_input(row))
            .into_iter()
            .collect()
    }

    fn cache_key(&self, clip_id: &str) -> String {
        format!(
            "{clip_id}_c{}l{}",
            u8::from(self.crop_timestamps),
            self.seq_len.unwrap_or(0)
        )
    }

    /// Flow for one adjacent pair, through the cache when one is configured.
    /// Fields are rounded to f32 either way so cached and fresh runs agree
    /// bit for bit.
    fn pair_flow(&self, frames: &[Array2<u8>], p: usize, key: &str) -> Result<FlowField> {
        let cached = self
            .flow_cache
            .as_ref()
            .map(|dir| dir.join(format!("{key}_{p:03}.flw")));
        if let Some(path) = &cached {
            if path.exists() {
                return flow::read_flow_cache(path);
            }
        }
        let mut field = flow::dense_flow(&frames[p], &frames[p + 1], &self.flow_params)?;
        field.dx.mapv_inplace(|v| v as f32 as f64);
        field.dy.mapv_inplace(|v| v as f32 as f64);
        if let Some(path) = &cached {
            let dir = path.parent().unwrap();
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            flow::write_flow_cache(path, &field)?;
        }
        Ok(field)
    }
}

/// Pad shorter clips with zero frames, keep the first `len` frames of longer
/// ones.
fn adjust_length(clip: VideoClip, len: usize) -> Result<VideoClip> {
    if clip.frame_count() < len {
        dataio::pad_clip(clip, len)
    } else {
        Ok(dataio::truncate_clip(clip, len))
    }
}

/// Horizontal flip applied directly to a loaded tensor. Resizing is
/// pixel-center aligned, so this matches flipping the source frames.
pub fn flip_input(input: &Array3<f64>) -> Array3<f64> {
    input.slice(s![.., .., ..;-1]).to_owned()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::Scale;
    use crate::scenegen::{generate_dataset, BiasConfig, DatasetOptions};

    fn tiny_dataset(dir: &Path) -> Manifest {
        generate_dataset(dir, [2, 2, 2], &BiasConfig::default(), &DatasetOptions::default(), 7)
            .unwrap()
    }

    fn desk(arch: Architecture) -> ModelConfig {
        ModelConfig::preset(arch, Scale::Desk)
    }

    #[test]
    fn spatial_input_shape_and_range() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = tiny_dataset(dir.path());
        let loader = Loader::new(dir.path(), desk(Architecture::Spatial));
        let clip = loader.load_input(&manifest.rows()[0]).unwrap();
        assert_eq!(clip.input.dim(), (8, 64, 64));
        assert!(clip.input.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn timestamp_crop_zeroes_the_box() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = tiny_dataset(dir.path());
        let mut loader = Loader::new(dir.path(), desk(Architecture::Spatial));
        let cropped = loader.load_input(&manifest.rows()[0]).unwrap();
        loader.crop_timestamps = false;
        let raw = loader.load_input(&manifest.rows()[0]).unwrap();
        let (y0, x0, bh, bw) = scenegen::timestamp_box(64, 64);
        let box_sum: f64 = cropped.input.slice(s![0, y0..y0 + bh, x0..x0 + bw]).sum();
        assert_eq!(box_sum, 0.0);
        let raw_sum: f64 = raw.input.slice(s![0, y0..y0 + bh, x0..x0 + bw]).sum();
        assert!(raw_sum > 0.0, "uncropped frames keep the timestamp");
    }

    #[test]
    fn temporal_input_has_fourteen_channels() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = tiny_dataset(dir.path());
        let loader = Loader::new(dir.path(), desk(Architecture::Temporal));
        let clip = loader.load_input(&manifest.rows()[0]).unwrap();
        assert_eq!(clip.input.dim().0, 2 * N_PAIRS);
    }

    #[test]
    fn flow_cache_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = tiny_dataset(dir.path());
        let mut loader = Loader::new(dir.path(), desk(Architecture::Temporal));
        let fresh = loader.load_input(&manifest.rows()[1]).unwrap();
        loader.flow_cache = Some(dir.path().join("flowcache"));
        let miss = loader.load_input(&manifest.rows()[1]).unwrap();
        let hit = loader.load_input(&manifest.rows()[1]).unwrap();
        assert_eq!(fresh.input, miss.input);
        assert_eq!(miss.input, hit.input);
        assert!(dir.path().join("flowcache").read_dir().unwrap().count() >= N_PAIRS);
    }

    #[test]
    fn sequence_length_padding_is_tracked() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = tiny_dataset(dir.path());
        let row = manifest.rows().iter().min_by_key(|r| r.frame_count).unwrap();
        let mut cfg = desk(Architecture::Hybrid);
        let long = row.frame_count + 5;
        cfg.frames_per_video = long;
        let mut loader = Loader::new(dir.path(), cfg);
        loader.seq_len = Some(long);
        let clip = loader.load_input(row).unwrap();
        assert_eq!(clip.n_padding, 5);
        // padded frames are all zero
        let tail = clip.input.index_axis(ndarray::Axis(0), long - 1);
        assert_eq!(tail.sum(), 0.0);
    }

    #[test]
    fn flip_input_mirrors_columns() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = tiny_dataset(dir.path());
        let loader = Loader::new(dir.path(), desk(Architecture::Spatial));
        let clip = loader.load_input(&manifest.rows()[2]).unwrap();
        let flipped = flip_input(&clip.input);
        let (c, h, w) = clip.input.dim();
        assert_eq!(flipped.dim(), (c, h, w));
        assert_eq!(flipped[[0, h / 2, 0]], clip.input[[0, h / 2, w - 1]]);
        assert_eq!(flip_input(&flipped), clip.input);
    }

    #[test]
    fn unknown_clip_id_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = tiny_dataset(dir.path());
        let loader = Loader::new(dir.path(), desk(Architecture::Spatial));
        let err = loader.load_ids(&manifest, &["nope".to_string()]);
        assert!(err.is_err());
    }
}
