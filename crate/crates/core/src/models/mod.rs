//! The three classifier architectures behind one batch-level interface.
//!
//! A clip enters a model as a single `Array3<f64>` whose leading axis is
//! whatever the architecture consumes: 8 grayscale frames for the spatial
//! stream and the space-time transformer, the 14-channel gray/flow stack for
//! the temporal stream, 12 frames for the hybrid. `forward_batch` keeps its
//! caches inside the model so `backward_batch` can run without re-plumbing
//! them through the caller.

pub mod backbone;
pub mod encoder;
pub mod hybrid;
pub mod streams;
pub mod timesformer;

pub use backbone::{Backbone, BackboneConfig};
pub use hybrid::Hybrid;
pub use streams::{fuse_two_stream, CnnStream};
pub use timesformer::TimeSformer;

use crate::error::{Error, Result};
use crate::nn::param::Params;
use crate::nn::Mode;
use ndarray::{Array2, Array3};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const N_CLASSES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    Spatial,
    Temporal,
    TwoStream,
    Hybrid,
    Timesformer,
}

impl Architecture {
    pub fn as_str(&self) -> &'static str {
        match self {
            Architecture::Spatial => "spatial",
            Architecture::Temporal => "temporal",
            Architecture::TwoStream => "two_stream",
            Architecture::Hybrid => "hybrid",
            Architecture::Timesformer => "timesformer",
        }
    }
}

impl std::str::FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Architecture> {
        match s {
            "spatial" => Ok(Architecture::Spatial),
            "temporal" => Ok(Architecture::Temporal),
            "two_stream" => Ok(Architecture::TwoStream),
            "hybrid" => Ok(Architecture::Hybrid),
            "timesformer" => Ok(Architecture::Timesformer),
            other => Err(Error::Config(format!("unknown architecture '{other}'"))),
        }
    }
}

/// Model scale: reduced widths that train on a desk CPU, or the full-size
/// layout the reference results were produced with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Desk,
    Paper,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub architecture: Architecture,
    pub backbone: BackboneConfig,
    pub image_size: usize,
    /// Leading-axis length of a clip tensor: frames for frame-fed models,
    /// stacked channels (2 x pairs) for the temporal stream.
    pub frames_per_video: usize,
    pub patch_size: usize,
    pub embed_dim: usize,
    pub encoder_layers: usize,
    pub encoder_heads: usize,
    pub dropout_rate: f64,
    pub n_classes: usize,
}

impl ModelConfig {
    pub fn preset(architecture: Architecture, scale: Scale) -> ModelConfig {
        let backbone = match scale {
            Scale::Desk => BackboneConfig::desk(),
            Scale::Paper => BackboneConfig::paper(),
        };
        let image_size = match scale {
            Scale::Desk => 64,
            Scale::Paper => {
                if architecture == Architecture::Timesformer {
                    224
                } else {
                    300
                }
            }
        };
        let mut cfg = ModelConfig {
            architecture,
            backbone,
            image_size,
            frames_per_video: 8,
            patch_size: 16,
            embed_dim: 0,
            encoder_layers: 0,
            encoder_heads: 0,
            dropout_rate: 0.0,
            n_classes: N_CLASSES,
        };
        match architecture {
            Architecture::Spatial | Architecture::TwoStream => {}
            Architecture::Temporal => {
                cfg.frames_per_video = 2 * crate::flow::N_PAIRS;
            }
            Architecture::Hybrid => {
                cfg.frames_per_video = 12;
                cfg.encoder_layers = 5;
                cfg.encoder_heads = 5;
                cfg.embed_dim = match scale {
                    Scale::Desk => 80,
                    Scale::Paper => 320,
                };
                cfg.dropout_rate = 0.1;
            }
            Architecture::Timesformer => match scale {
                Scale::Desk => {
                    cfg.image_size = 32;
                    cfg.patch_size = 8;
                    cfg.embed_dim = 64;
                    cfg.encoder_heads = 4;
                    cfg.encoder_layers = 3;
                }
                Scale::Paper => {
                    cfg.embed_dim = 768;
                    cfg.encoder_heads = 12;
                    cfg.encoder_layers = 12;
                }
            },
        }
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_classes != N_CLASSES {
            return Err(Error::Config(format!(
                "n_classes must be {N_CLASSES}, got {}",
                self.n_classes
            )));
        }
        if self.frames_per_video == 0 || self.image_size == 0 {
            return Err(Error::Config("frames_per_video and image_size must be positive".into()));
        }
        if self.architecture == Architecture::Timesformer {
            if self.image_size % self.patch_size != 0 {
                return Err(Error::Config(format!(
                    "image_size {} not divisible by patch_size {}",
                    self.image_size, self.patch_size
                )));
            }
        }
        match self.architecture {
            Architecture::Hybrid | Architecture::Timesformer => {
                if self.encoder_heads == 0 || self.embed_dim % self.encoder_heads != 0 {
                    return Err(Error::Config(format!(
                        "embed_dim {} not divisible by encoder_heads {}",
                        self.embed_dim, self.encoder_heads
                    )));
                }
                if self.encoder_layers == 0 {
                    return Err(Error::Config("encoder_layers must be positive".into()));
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Patch-grid token count per frame for the transformer.
    pub fn tokens_per_frame(&self) -> usize {
        let side = self.image_size / self.patch_size;
        side * side
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &std::path::Path) -> Result<ModelConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: ModelConfig = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Common classifier interface: batched forward producing [n_clips, 3]
/// logits and the matching backward pass.
pub trait Model: Params {
    fn config(&self) -> &ModelConfig;

    /// Validates clip shapes against the config, runs the forward pass, and
    /// retains whatever caches `backward_batch` needs.
    fn forward_batch(
        &mut self,
        clips: &[Array3<f64>],
        mode: Mode,
        rng: &mut ChaCha8Rng,
    ) -> Result<Array2<f64>>;

    /// Backpropagates per-clip logit gradients, accumulating parameter
    /// gradients; returns input gradients in clip order.
    fn backward_batch(&mut self, dlogits: &Array2<f64>) -> Vec<Array3<f64>>;
}

/// Instantiate the architecture named by the config. `two_stream` is not a
/// single network — its streams are built and trained separately.
pub fn build_model(cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> Result<Box<dyn Model>> {
    cfg.validate()?;
    match cfg.architecture {
        Architecture::Spatial | Architecture::Temporal => {
            Ok(Box::new(CnnStream::new(cfg.clone(), rng)?))
        }
        Architecture::Hybrid => Ok(Box::new(Hybrid::new(cfg.clone(), rng)?)),
        Architecture::Timesformer => Ok(Box::new(TimeSformer::new(cfg.clone(), rng)?)),
        Architecture::TwoStream => Err(Error::Config(
            "two_stream has no single network; train spatial and temporal streams and fuse their scores".into(),
        )),
    }
}

pub(crate) fn check_clips(cfg: &ModelConfig, clips: &[Array3<f64>]) -> Result<()> {
    if clips.is_empty() {
        return Err(Error::Data("empty clip batch".into()));
    }
    for (i, clip) in clips.iter().enumerate() {
        let (t, h, w) = clip.dim();
        if t != cfg.frames_per_video {
            return Err(Error::Shape(format!(
                "clip {i}: leading axis {t}, model expects {}",
                cfg.frames_per_video
            )));
        }
        if h != cfg.image_size || w != cfg.image_size {
            return Err(Error::Shape(format!(
                "clip {i}: {h}x{w} frames, model expects {0}x{0}",
                cfg.image_size
            )));
        }
        if clip.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data(format!("clip {i}: non-finite input")));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_configs_validate() {
        for arch in [
            Architecture::Spatial,
            Architecture::Temporal,
            Architecture::Hybrid,
            Architecture::Timesformer,
        ] {
            for scale in [Scale::Desk, Scale::Paper] {
                ModelConfig::preset(arch, scale).validate().unwrap();
            }
        }
    }

    #[test]
    fn paper_transformer_has_196_tokens() {
        let cfg = ModelConfig::preset(Architecture::Timesformer, Scale::Paper);
        assert_eq!(cfg.image_size, 224);
        assert_eq!(cfg.patch_size, 16);
        assert_eq!(cfg.tokens_per_frame(), 196);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut cfg = ModelConfig::preset(Architecture::Timesformer, Scale::Desk);
        cfg.image_size = 33;
        assert!(cfg.validate().is_err());

        let mut cfg = ModelConfig::preset(Architecture::Hybrid, Scale::Desk);
        cfg.embed_dim = 81;
        assert!(cfg.validate().is_err());

        let mut cfg = ModelConfig::preset(Architecture::Spatial, Scale::Desk);
        cfg.n_classes = 2;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn config_round_trips_through_json() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("config.json");
        let cfg = ModelConfig::preset(Architecture::Hybrid, Scale::Desk);
        cfg.save(&path).unwrap();
        assert_eq!(ModelConfig::load(&path).unwrap(), cfg);
    }

    #[test]
    fn architecture_names_round_trip() {
        for arch in [
            Architecture::Spatial,
            Architecture::Temporal,
            Architecture::TwoStream,
            Architecture::Hybrid,
            Architecture::Timesformer,
        ] {
            assert_eq!(arch.as_str().parse::<Architecture>().unwrap(), arch);
        }
        assert!("resnet".parse::<Architecture>().is_err());
    }
}
