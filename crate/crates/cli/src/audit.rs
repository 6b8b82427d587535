use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::Args;
use serde::Serialize;
use trawlnet::audit::{adjacency_pp_curve, padding_probe, timestamp_probe, view_bias_report};
use trawlnet::audit::AuditReport;
use trawlnet::dataio::{manifest_path, Manifest, SplitSpec};
use trawlnet::error::Error;
use trawlnet::models::{Architecture, ModelConfig, Scale};
use trawlnet::scenegen;
use trawlnet::training::{Hyperparams, Prediction};

use crate::artifacts;
use crate::artifacts::EvalReport;

#[derive(Debug, Args, Serialize)]
pub struct AuditArgs {
    /// Dataset root the evaluations and probes refer to
    #[arg(long)]
    pub data: PathBuf,

    /// Output directory for audit.json
    #[arg(long)]
    pub out: PathBuf,

    /// Directory of eval-*.json reports; enables the view-bias and
    /// adjacency sections
    #[arg(long)]
    pub evals: Option<PathBuf>,

    /// Permutations for the agreement baseline
    #[arg(long, default_value_t = 1000)]
    pub perms: usize,

    /// Plot adjacency curves over the predicted class instead of the true one
    #[arg(long)]
    pub predicted_pp: bool,

    /// Run the clip-length padding probe
    #[arg(long)]
    pub probe_padding: bool,

    /// Frame-count settings for the padding probe
    #[arg(long, value_delimiter = ',', default_value = "12,16")]
    pub settings: Vec<usize>,

    /// Run the timestamp shortcut probe
    #[arg(long)]
    pub probe_timestamp: bool,

    /// Split id the probes train on
    #[arg(long)]
    pub split: Option<u8>,

    /// Probe training epochs
    #[arg(long)]
    pub epochs: Option<usize>,

    /// Probe learning rate
    #[arg(long)]
    pub lr: Option<f64>,

    /// Probe batch size
    #[arg(long)]
    pub batch_size: Option<usize>,

    /// Probe input size; the timestamp probe defaults to the native frame
    /// size so the digits stay legible
    #[arg(long)]
    pub image_size: Option<usize>,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Eval reports in a directory, sorted by file name for reproducibility.
fn read_evals(dir: &Path) -> anyhow::Result<Vec<EvalReport>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("eval") && n.ends_with(".json"))
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        bail!("data error: no eval-*.json files under {}", dir.display());
    }
    paths
        .iter()
        .map(|p| EvalReport::load(p).with_context(|| format!("reading {}", p.display())))
        .collect()
}

fn probe_settings(
    args: &AuditArgs,
    image_size: usize,
) -> anyhow::Result<(ModelConfig, Hyperparams)> {
    let mut cfg = ModelConfig::preset(Architecture::Spatial, Scale::Desk);
    cfg.image_size = image_size;
    let mut hp = Hyperparams::preset(Architecture::Spatial, Scale::Desk);
    if let Some(v) = args.epochs {
        hp.epochs = v;
    }
    if let Some(v) = args.lr {
        hp.learning_rate = v;
    }
    if let Some(v) = args.batch_size {
        hp.batch_size = v;
    }
    hp.image_size = cfg.image_size;
    hp.frames_per_video = cfg.frames_per_video;
    hp.seed = args.seed;
    cfg.validate().context("probe config")?;
    Ok((cfg, hp))
}

/// The generated frame size, read off the first clip's scene spec.
fn native_image_size(data: &Path, manifest: &Manifest) -> anyhow::Result<usize> {
    let first = manifest
        .rows()
        .first()
        .ok_or_else(|| Error::Data("empty manifest".into()))?;
    let path = scenegen::spec_path(&data.join(&first.path));
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let spec: scenegen::SceneSpec = serde_json::from_str(&text)?;
    let (h, w) = spec.image_size;
    if h != w {
        bail!("data error: non-square frames ({h}x{w}); pass --image-size explicitly");
    }
    Ok(h)
}

pub fn run(args: &AuditArgs) -> anyhow::Result<()> {
    let manifest = Manifest::read_csv(&manifest_path(&args.data)).context("reading manifest")?;
    let mut report = AuditReport::default();

    if let Some(dir) = &args.evals {
        let evals = read_evals(dir)?;
        let split_preds: Vec<Vec<Prediction>> =
            evals.into_iter().map(|e| e.predictions).collect();
        let all: Vec<Prediction> = split_preds.iter().flatten().cloned().collect();
        report.view_bias = Some(
            view_bias_report(&all, &manifest, args.perms, args.seed)
                .context("view-bias section")?,
        );
        report.adjacency = Some(
            adjacency_pp_curve(&split_preds, &manifest, args.predicted_pp)
                .context("adjacency section")?,
        );
    }

    if args.probe_padding || args.probe_timestamp {
        let split_id = args
            .split
            .ok_or_else(|| Error::Config("probes need --split".into()))?;
        let split = SplitSpec::read_json(&artifacts::split_path(&args.data, split_id))
            .context("reading split")?;
        if args.probe_padding {
            let (cfg, hp) = probe_settings(args, args.image_size.unwrap_or(64))?;
            report.padding = Some(
                padding_probe(&args.data, &manifest, &split, &args.settings, &cfg, &hp)
                    .context("padding probe")?,
            );
        }
        if args.probe_timestamp {
            let size = match args.image_size {
                Some(v) => v,
                None => native_image_size(&args.data, &manifest)?,
            };
            let (cfg, hp) = probe_settings(args, size)?;
            report.timestamp = Some(
                timestamp_probe(&args.data, &manifest, &split, &cfg, &hp)
                    .context("timestamp probe")?,
            );
        }
    }

    if report == AuditReport::default() {
        bail!("config error: nothing to audit; pass --evals, --probe-padding or --probe-timestamp");
    }

    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    report.save(&args.out.join("audit.json")).context("writing report")?;
    artifacts::write_json_pretty(&args.out.join("audit-config.json"), args)?;

    if let Some(v) = &report.view_bias {
        println!(
            "view bias: modal match {}/16, agreement {:.4} vs baseline {:.4} -> {}",
            v.modal_matches,
            v.majority_agreement,
            v.permutation_baseline,
            verdict(v.flagged)
        );
    }
    if let Some(a) = &report.adjacency {
        println!(
            "adjacency: mean |dPP| {:.4} within views vs {:.4} across boundaries",
            a.contrast.within_view, a.contrast.across_view
        );
    }
    if let Some(p) = &report.padding {
        println!(
            "padding probe: short class {}, leak prob {:.4}, padded-frame mass {:.4} (share {:.4}) -> {}",
            p.short_class,
            p.leak_prob,
            p.padded_frame_mass,
            p.padded_frame_share,
            verdict(p.flagged)
        );
    }
    if let Some(t) = &report.timestamp {
        println!(
            "timestamp probe: region mass {:.4} uncropped vs {:.4} cropped (box {:.4}) -> {}",
            t.uncropped_region_mass,
            t.cropped_region_mass,
            t.box_area_fraction,
            verdict(t.flagged)
        );
    }
    println!("audit report under {}", args.out.display());
    Ok(())
}

fn verdict(flagged: bool) -> &'static str {
    if flagged {
        "FLAGGED"
    } else {
        "clear"
    }
}
