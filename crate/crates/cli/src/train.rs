use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Args, ValueEnum};
use trawlnet::dataio::{manifest_path, Manifest, SplitSpec};
use trawlnet::models::{build_model, Architecture, ModelConfig, Scale};
use trawlnet::nn::checkpoint::save_checkpoint;
use trawlnet::rng;
use trawlnet::training::{train, Hyperparams, Loader};

use crate::artifacts;
use crate::artifacts::RunMeta;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// Small settings sized for a single workstation core.
    Desk,
    /// The published training settings.
    Table3,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset root holding manifest.csv and splits/
    #[arg(long)]
    pub data: PathBuf,

    /// Run output directory
    #[arg(long)]
    pub out: PathBuf,

    #[arg(long)]
    pub arch: Architecture,

    /// Split id to train on
    #[arg(long)]
    pub split: u8,

    #[arg(long, value_enum, default_value_t = Preset::Desk)]
    pub preset: Preset,

    /// Pin the published settings and reject every override flag
    #[arg(long)]
    pub strict_paper: bool,

    #[arg(long)]
    pub epochs: Option<usize>,

    #[arg(long)]
    pub lr: Option<f64>,

    #[arg(long)]
    pub batch_size: Option<usize>,

    #[arg(long)]
    pub image_size: Option<usize>,

    /// Frames per clip fed to frame-fed models; the temporal stream keeps
    /// its fixed flow stack
    #[arg(long)]
    pub frames: Option<usize>,

    /// Early-stop patience in epochs; 0 disables early stopping
    #[arg(long)]
    pub early_stop: Option<usize>,

    /// Gradient-norm clip; 0 disables clipping
    #[arg(long)]
    pub grad_clip: Option<f64>,

    /// Disable horizontal-flip augmentation
    #[arg(long)]
    pub no_flip: bool,

    /// Disable the plateau learning-rate scheduler
    #[arg(long)]
    pub no_scheduler: bool,

    /// Keep the burned-in timestamp region instead of cropping it
    #[arg(long)]
    pub no_crop_timestamps: bool,

    /// Optical-flow cache directory; defaults to <data>/flow-cache
    #[arg(long)]
    pub flow_cache: Option<PathBuf>,

    /// Recompute flow every epoch instead of caching it
    #[arg(long)]
    pub no_flow_cache: bool,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl TrainArgs {
    fn has_override(&self) -> Option<&'static str> {
        if self.epochs.is_some() {
            Some("--epochs")
        } else if self.lr.is_some() {
            Some("--lr")
        } else if self.batch_size.is_some() {
            Some("--batch-size")
        } else if self.image_size.is_some() {
            Some("--image-size")
        } else if self.frames.is_some() {
            Some("--frames")
        } else if self.early_stop.is_some() {
            Some("--early-stop")
        } else if self.grad_clip.is_some() {
            Some("--grad-clip")
        } else if self.no_flip {
            Some("--no-flip")
        } else if self.no_scheduler {
            Some("--no-scheduler")
        } else {
            None
        }
    }
}

pub fn run(args: &TrainArgs) -> anyhow::Result<()> {
    if args.strict_paper {
        if let Some(flag) = args.has_override() {
            bail!("config error: {flag} conflicts with --strict-paper");
        }
    }
    let scale = if args.strict_paper || args.preset == Preset::Table3 {
        Scale::Paper
    } else {
        Scale::Desk
    };

    let manifest = Manifest::read_csv(&manifest_path(&args.data)).context("reading manifest")?;
    let split = SplitSpec::read_json(&artifacts::split_path(&args.data, args.split))
        .context("reading split")?;
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;

    let members = artifacts::members(args.arch);
    let multi = members.len() > 1;
    let flow_cache = if args.no_flow_cache {
        None
    } else {
        Some(args.flow_cache.clone().unwrap_or_else(|| artifacts::default_flow_cache(&args.data)))
    };

    for &member in &members {
        let mut cfg = ModelConfig::preset(member, scale);
        let mut hp = Hyperparams::preset(member, scale);
        if let Some(v) = args.epochs {
            hp.epochs = v;
        }
        if let Some(v) = args.lr {
            hp.learning_rate = v;
        }
        if let Some(v) = args.batch_size {
            hp.batch_size = v;
        }
        if let Some(v) = args.image_size {
            cfg.image_size = v;
            hp.image_size = v;
        }
        if let Some(v) = args.frames {
            if member != Architecture::Temporal {
                cfg.frames_per_video = v;
                hp.frames_per_video = v;
            }
        }
        if let Some(v) = args.early_stop {
            hp.early_stop_patience = v;
        }
        if let Some(v) = args.grad_clip {
            hp.grad_clip = if v > 0.0 { Some(v) } else { None };
        }
        if args.no_flip {
            hp.augment_flip = false;
        }
        if args.no_scheduler {
            hp.use_scheduler = false;
        }
        hp.seed = rng::derive_seed(args.seed, member.as_str());
        cfg.validate().context("model config")?;

        let mut loader = Loader::new(&args.data, cfg.clone());
        loader.crop_timestamps = !args.no_crop_timestamps;
        if member == Architecture::Temporal {
            loader.flow_cache = flow_cache.clone();
        }
        let name = member.as_str();
        let train_clips =
            loader.load_ids(&manifest, &split.train).with_context(|| format!("{name} train set"))?;
        let val_clips =
            loader.load_ids(&manifest, &split.val).with_context(|| format!("{name} val set"))?;

        let mut model = build_model(&cfg, &mut rng::stream(hp.seed, "model-init"))
            .with_context(|| format!("building {name}"))?;
        let history = train(model.as_mut(), &train_clips, &val_clips, &hp)
            .with_context(|| format!("training {name}"))?;

        cfg.save(&artifacts::config_path(&args.out, multi, member)).context("writing config")?;
        hp.write_ini(&artifacts::hyper_path(&args.out, multi, member))
            .context("writing hyperparams")?;
        save_checkpoint(&artifacts::ckpt_path(&args.out, multi, member), &mut *model)
            .context("writing checkpoint")?;
        history
            .write_csv(&artifacts::history_path(&args.out, multi, member))
            .context("writing history")?;

        let best = &history.epochs[history.selected];
        println!(
            "{name}: {} epochs, selected epoch {} (val_loss {:.4}, val_acc {:.4})",
            history.epochs.len(),
            best.epoch,
            best.val_loss,
            best.val_acc
        );
    }

    let meta = RunMeta {
        architecture: args.arch,
        data: args.data.clone(),
        split_id: args.split,
        seed: args.seed,
        crop_timestamps: !args.no_crop_timestamps,
        strict_paper: args.strict_paper,
        flow_cache,
    };
    meta.save(&args.out)?;
    println!("run artifacts under {}", args.out.display());
    Ok(())
}
