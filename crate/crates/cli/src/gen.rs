use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Args, ValueEnum};
use serde::Serialize;
use trawlnet::dataio::CLASS_TOTALS;
use trawlnet::scenegen::{generate_dataset, BiasConfig, DatasetOptions};

use crate::artifacts::{write_json_pretty, CountsArg, OffsetsArg};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CountPreset {
    /// The published class totals, 200/214/210.
    PaperCounts,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Dataset output directory
    #[arg(long)]
    pub out: PathBuf,

    /// Named class-count preset
    #[arg(long, value_enum, conflicts_with = "counts")]
    pub preset: Option<CountPreset>,

    /// Per-class clip counts as NF,NR,R
    #[arg(long)]
    pub counts: Option<CountsArg>,

    /// Probability that a clip's class matches its view's majority class
    #[arg(long, default_value_t = 1.0 / 3.0)]
    pub rho_view: f64,

    /// Strength of the class/length coupling acting on --length-offsets
    #[arg(long, default_value_t = 1.0 / 3.0)]
    pub rho_pad: f64,

    /// Probability that the burned-in timestamp code matches the class
    #[arg(long, default_value_t = 1.0 / 3.0)]
    pub rho_ts: f64,

    /// Per-class mean length shifts in frames, applied at full --rho-pad
    #[arg(long, default_value = "0,0,0")]
    pub length_offsets: OffsetsArg,

    /// Square frame size in pixels
    #[arg(long, default_value_t = 64)]
    pub image_size: usize,

    /// Additive sensor noise level
    #[arg(long, default_value_t = 6.0)]
    pub noise_sigma: f64,

    /// Leave out the burned-in timestamp overlay
    #[arg(long)]
    pub no_timestamp: bool,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Serialize)]
struct GenConfig<'a> {
    counts: [usize; 3],
    bias: &'a BiasConfig,
    options: &'a DatasetOptions,
    seed: u64,
}

pub fn run(args: &GenArgs) -> anyhow::Result<()> {
    let counts = match (&args.preset, &args.counts) {
        (Some(CountPreset::PaperCounts), _) => CLASS_TOTALS,
        (None, Some(c)) => c.0,
        (None, None) => bail!("config error: pass --preset paper-counts or --counts NF,NR,R"),
    };
    let bias = BiasConfig {
        view_class_correlation: args.rho_view,
        padding_class_correlation: args.rho_pad,
        timestamp_class_correlation: args.rho_ts,
        class_length_offset: args.length_offsets.0,
    };
    let opts = DatasetOptions {
        image_size: (args.image_size, args.image_size),
        noise_sigma: args.noise_sigma,
        timestamp_enabled: !args.no_timestamp,
        ..DatasetOptions::default()
    };
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    let manifest = generate_dataset(&args.out, counts, &bias, &opts, args.seed)
        .context("generating dataset")?;
    let config = GenConfig { counts, bias: &bias, options: &opts, seed: args.seed };
    write_json_pretty(&args.out.join("gen-config.json"), &config)?;
    println!(
        "wrote {} clips ({} NF / {} NR / {} R) under {}",
        manifest.len(),
        counts[0],
        counts[1],
        counts[2],
        args.out.display()
    );
    Ok(())
}
