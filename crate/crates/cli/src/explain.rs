use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::Args;
use ndarray::Axis;
use serde::Serialize;
use trawlnet::dataio::{manifest_path, Manifest};
use trawlnet::explain::{gradcam_stream, gradcam_timesformer, mean_map, overlay, save_map};
use trawlnet::imgproc;
use trawlnet::label::Label;
use trawlnet::metrics::PredictedProbability;
use trawlnet::models::streams::CnnStream;
use trawlnet::models::timesformer::TimeSformer;
use trawlnet::models::{Architecture, Model, ModelConfig};
use trawlnet::nn::checkpoint::load_checkpoint;
use trawlnet::rng;
use trawlnet::training::{evaluate, Loader};

use crate::artifacts;
use crate::artifacts::RunMeta;

#[derive(Debug, Args)]
pub struct ExplainArgs {
    /// Run directory produced by `train`
    #[arg(long)]
    pub run: PathBuf,

    /// Clip id to explain
    #[arg(long)]
    pub clip: String,

    /// Output directory for maps and overlays
    #[arg(long)]
    pub out: PathBuf,

    /// Class to attribute (NF, NR or R); defaults to the predicted class
    #[arg(long)]
    pub target: Option<String>,

    /// Dataset root; defaults to the one recorded in the run
    #[arg(long)]
    pub data: Option<PathBuf>,
}

#[derive(Serialize)]
struct ExplainSummary<'a> {
    clip_id: &'a str,
    architecture: Architecture,
    target: Label,
    predicted: Label,
    probs: &'a PredictedProbability,
    n_maps: usize,
    all_zero: Vec<bool>,
}

pub fn run(args: &ExplainArgs) -> anyhow::Result<()> {
    let meta = RunMeta::load(&args.run).context("reading run metadata")?;
    // The fused net is explained through its spatial member; the hybrid's
    // recurrent head has no activation grid to project back.
    let member = match meta.architecture {
        Architecture::TwoStream => Architecture::Spatial,
        Architecture::Hybrid => {
            bail!("config error: no activation-map path for {}", meta.architecture.as_str())
        }
        a => a,
    };
    let multi = meta.architecture == Architecture::TwoStream;
    let data = args.data.clone().unwrap_or_else(|| meta.data.clone());
    let manifest = Manifest::read_csv(&manifest_path(&data)).context("reading manifest")?;
    let row = manifest
        .get(&args.clip)
        .with_context(|| format!("data error: clip {:?} not in manifest", args.clip))?;

    let cfg = ModelConfig::load(&artifacts::config_path(&args.run, multi, member))
        .context("reading config")?;
    let mut loader = Loader::new(&data, cfg.clone());
    loader.crop_timestamps = meta.crop_timestamps;
    if member == Architecture::Temporal {
        loader.flow_cache = meta.flow_cache.clone();
    }
    let clip = loader.load_input(row).context("loading clip")?;
    let ckpt = artifacts::ckpt_path(&args.run, multi, member);

    enum Net {
        Stream(CnnStream),
        Transformer(TimeSformer),
    }
    let mut net = match member {
        Architecture::Timesformer => {
            Net::Transformer(TimeSformer::new(cfg, &mut rng::stream(0, "eval-init"))?)
        }
        _ => Net::Stream(CnnStream::new(cfg, &mut rng::stream(0, "eval-init"))?),
    };
    let model: &mut dyn Model = match &mut net {
        Net::Stream(m) => m,
        Net::Transformer(m) => m,
    };
    load_checkpoint(&ckpt, &mut *model).context("loading checkpoint")?;

    let pred = evaluate(model, std::slice::from_ref(&clip), 1)
        .context("scoring clip")?
        .pop()
        .unwrap();
    let target = match &args.target {
        Some(s) => s
            .to_uppercase()
            .parse::<Label>()
            .with_context(|| format!("config error: bad --target {s:?}"))?,
        None => pred.predicted,
    };

    let maps = match &mut net {
        Net::Stream(m) => gradcam_stream(m, &clip.input, target.index()),
        Net::Transformer(m) => gradcam_timesformer(m, &clip.input, target.index()),
    }
    .context("computing activation maps")?;

    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    for (i, m) in maps.iter().enumerate() {
        save_map(&args.out.join(format!("map-{i:02}")), m).context("writing map")?;
        let frame = imgproc::to_u8(&(&clip.input.index_axis(Axis(0), i) * 255.0));
        let img = overlay(&frame, &m.map);
        let path = args.out.join(format!("overlay-{i:02}.png"));
        img.save(&path).with_context(|| format!("writing {}", path.display()))?;
    }
    let mean = mean_map(&maps);
    save_map(&args.out.join("map-mean"), &mean).context("writing map")?;
    let mid = maps.len() / 2;
    let frame = imgproc::to_u8(&(&clip.input.index_axis(Axis(0), mid) * 255.0));
    overlay(&frame, &mean.map)
        .save(args.out.join("overlay-mean.png"))
        .context("writing mean overlay")?;

    let summary = ExplainSummary {
        clip_id: &pred.clip_id,
        architecture: member,
        target,
        predicted: pred.predicted,
        probs: &pred.probs,
        n_maps: maps.len(),
        all_zero: maps.iter().map(|m| m.all_zero).collect(),
    };
    artifacts::write_json_pretty(&args.out.join("explain.json"), &summary)?;

    println!(
        "{}: predicted {} (p {:.4}), target {}, {} maps -> {}",
        pred.clip_id,
        pred.predicted,
        pred.pp(),
        target,
        maps.len(),
        args.out.display()
    );
    if mean.all_zero {
        println!("note: target gradient never reached the activation grid; maps are all zero");
    }
    Ok(())
}
