use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, ValueEnum};
use trawlnet::dataio::{manifest_path, Manifest, SplitSpec};
use trawlnet::label::Label;
use trawlnet::metrics;
use trawlnet::models::{build_model, Architecture, ModelConfig};
use trawlnet::nn::checkpoint::load_checkpoint;
use trawlnet::rng;
use trawlnet::training::{evaluate, fuse_predictions, labelled, Loader, Prediction};

use crate::artifacts;
use crate::artifacts::{ClassF1, EvalReport, RunMeta};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Subset {
    Train,
    Val,
    Test,
}

impl Subset {
    pub fn as_str(self) -> &'static str {
        match self {
            Subset::Train => "train",
            Subset::Val => "val",
            Subset::Test => "test",
        }
    }
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Run directory produced by `train`
    #[arg(long)]
    pub run: PathBuf,

    /// Dataset root; defaults to the one recorded in the run
    #[arg(long)]
    pub data: Option<PathBuf>,

    /// Split id; defaults to the one the run was trained on
    #[arg(long)]
    pub split: Option<u8>,

    #[arg(long, value_enum, default_value_t = Subset::Test)]
    pub subset: Subset,

    /// Report path; defaults to eval-<subset>-split<id>.json inside the run
    #[arg(long)]
    pub out: Option<PathBuf>,

    #[arg(long, default_value_t = 8)]
    pub batch_size: usize,
}

/// Reload one member model from its checkpoint and score the subset.
/// Going through the checkpoint keeps eval results identical whether the
/// weights come fresh out of training or from disk.
fn eval_member(
    run: &Path,
    multi: bool,
    member: Architecture,
    meta: &RunMeta,
    data: &Path,
    manifest: &Manifest,
    ids: &[String],
    batch_size: usize,
) -> anyhow::Result<Vec<Prediction>> {
    let name = member.as_str();
    let cfg = ModelConfig::load(&artifacts::config_path(run, multi, member))
        .with_context(|| format!("reading {name} config"))?;
    let mut loader = Loader::new(data, cfg.clone());
    loader.crop_timestamps = meta.crop_timestamps;
    if member == Architecture::Temporal {
        loader.flow_cache = meta.flow_cache.clone();
    }
    let clips =
        loader.load_ids(manifest, ids).with_context(|| format!("loading {name} subset"))?;
    let mut model = build_model(&cfg, &mut rng::stream(0, "eval-init"))
        .with_context(|| format!("building {name}"))?;
    load_checkpoint(&artifacts::ckpt_path(run, multi, member), &mut *model)
        .with_context(|| format!("loading {name} checkpoint"))?;
    evaluate(model.as_mut(), &clips, batch_size).with_context(|| format!("evaluating {name}"))
}

pub fn predictions_for(
    run: &Path,
    meta: &RunMeta,
    data: &Path,
    manifest: &Manifest,
    ids: &[String],
    batch_size: usize,
) -> anyhow::Result<Vec<Prediction>> {
    let members = meta.members();
    let multi = members.len() > 1;
    let mut per_member = Vec::with_capacity(members.len());
    for &member in &members {
        per_member.push(eval_member(run, multi, member, meta, data, manifest, ids, batch_size)?);
    }
    Ok(if multi {
        fuse_predictions(&per_member[0], &per_member[1]).context("fusing streams")?
    } else {
        per_member.pop().unwrap()
    })
}

pub fn build_report(
    meta: &RunMeta,
    split_id: u8,
    subset: &str,
    preds: Vec<Prediction>,
) -> anyhow::Result<EvalReport> {
    let lp = labelled(&preds);
    let matrix = metrics::confusion(&lp).context("scoring")?;
    let accuracy = metrics::accuracy(&lp).context("scoring")?;
    let mut per_class = Vec::with_capacity(Label::ALL.len());
    let mut f1_sum = 0.0;
    for &label in &Label::ALL {
        let (f1, degenerate) = metrics::f1_score(&matrix.binary_counts(label));
        f1_sum += f1;
        per_class.push(ClassF1 { label, f1, degenerate });
    }
    Ok(EvalReport {
        architecture: meta.architecture,
        split_id,
        subset: subset.to_string(),
        n_clips: preds.len(),
        accuracy,
        macro_f1: f1_sum / Label::ALL.len() as f64,
        per_class,
        confusion: matrix,
        predictions: preds,
    })
}

pub fn run(args: &EvalArgs) -> anyhow::Result<()> {
    let meta = RunMeta::load(&args.run).context("reading run metadata")?;
    let data = args.data.clone().unwrap_or_else(|| meta.data.clone());
    let split_id = args.split.unwrap_or(meta.split_id);
    let manifest = Manifest::read_csv(&manifest_path(&data)).context("reading manifest")?;
    let split =
        SplitSpec::read_json(&artifacts::split_path(&data, split_id)).context("reading split")?;
    let ids = match args.subset {
        Subset::Train => &split.train,
        Subset::Val => &split.val,
        Subset::Test => &split.test,
    };
    if args.batch_size == 0 {
        bail!("config error: --batch-size must be positive");
    }

    let preds = predictions_for(&args.run, &meta, &data, &manifest, ids, args.batch_size)?;
    let report = build_report(&meta, split_id, args.subset.as_str(), preds)?;
    let out = args.out.clone().unwrap_or_else(|| {
        args.run.join(format!("eval-{}-split{split_id:02}.json", args.subset.as_str()))
    });
    report.save(&out)?;
    println!(
        "{} split {split_id} {}: accuracy {:.4}, macro F1 {:.4} over {} clips -> {}",
        meta.architecture.as_str(),
        args.subset.as_str(),
        report.accuracy,
        report.macro_f1,
        report.n_clips,
        out.display()
    );
    Ok(())
}
