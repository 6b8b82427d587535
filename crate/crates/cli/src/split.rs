use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::Args;
use serde::Serialize;
use trawlnet::dataio::{make_splits, manifest_path, Manifest, SplitCounts};

use crate::artifacts::{write_json_pretty, CountsArg};

#[derive(Debug, Args)]
pub struct SplitArgs {
    /// Dataset root holding manifest.csv
    #[arg(long)]
    pub data: PathBuf,

    /// Number of resampled splits besides split 0
    #[arg(long, default_value_t = 10)]
    pub n_splits: u8,

    /// Per-class training counts as NF,NR,R (default: published sizes)
    #[arg(long, requires_all = ["val_counts", "test_counts"])]
    pub train_counts: Option<CountsArg>,

    /// Per-class validation counts as NF,NR,R
    #[arg(long, requires_all = ["train_counts", "test_counts"])]
    pub val_counts: Option<CountsArg>,

    /// Per-class test counts as NF,NR,R
    #[arg(long, requires_all = ["train_counts", "val_counts"])]
    pub test_counts: Option<CountsArg>,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Serialize)]
struct SplitConfig {
    n_splits: u8,
    counts: SplitCounts,
    seed: u64,
}

pub fn run(args: &SplitArgs) -> anyhow::Result<()> {
    let counts = match (&args.train_counts, &args.val_counts, &args.test_counts) {
        (Some(tr), Some(va), Some(te)) => SplitCounts { train: tr.0, val: va.0, test: te.0 },
        (None, None, None) => SplitCounts::default(),
        _ => bail!("config error: pass all of --train-counts/--val-counts/--test-counts or none"),
    };
    let manifest = Manifest::read_csv(&manifest_path(&args.data)).context("reading manifest")?;
    let splits =
        make_splits(&manifest, args.n_splits, counts, args.seed).context("drawing splits")?;
    let dir = args.data.join("splits");
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    for spec in &splits {
        spec.write_json(&dir.join(trawlnet::dataio::SplitSpec::file_name(spec.split_id)))
            .context("writing split")?;
    }
    let config = SplitConfig { n_splits: args.n_splits, counts, seed: args.seed };
    write_json_pretty(&dir.join("split-config.json"), &config)?;
    println!(
        "wrote splits 0..={} ({} train / {} val / {} test clips each) under {}",
        args.n_splits,
        splits[0].train.len(),
        splits[0].val.len(),
        splits[0].test.len(),
        dir.display()
    );
    Ok(())
}
