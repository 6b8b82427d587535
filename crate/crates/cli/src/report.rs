use std::collections::HashSet;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::Args;
use trawlnet::audit::AuditReport;
use trawlnet::dataio::{manifest_path, Manifest};
use trawlnet::error::Error;
use trawlnet::report::{
    adjacency_curves, agreement_bars, probe_bars, training_curves, view_heatmaps,
};
use trawlnet::training::TrainHistory;

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Figure output directory
    #[arg(long)]
    pub out: PathBuf,

    /// Run directories whose training histories get plotted; repeatable
    #[arg(long)]
    pub run: Vec<PathBuf>,

    /// Extra history CSV files; repeatable
    #[arg(long)]
    pub history: Vec<PathBuf>,

    /// Directory holding audit.json, as written by `audit`
    #[arg(long)]
    pub audit: Option<PathBuf>,

    /// Dataset root; required for the adjacency figure
    #[arg(long)]
    pub data: Option<PathBuf>,
}

/// `curves-<name>.png`, de-duplicated with a numeric suffix.
fn curve_name(used: &mut HashSet<String>, name: &str) -> String {
    let mut candidate = format!("curves-{name}.png");
    let mut k = 1;
    while !used.insert(candidate.clone()) {
        k += 1;
        candidate = format!("curves-{name}-{k}.png");
    }
    candidate
}

fn render_history(path: &Path, out: &Path) -> anyhow::Result<()> {
    let history =
        TrainHistory::read_csv(path).with_context(|| format!("reading {}", path.display()))?;
    training_curves(&history, out).with_context(|| format!("rendering {}", out.display()))?;
    println!("wrote {}", out.display());
    Ok(())
}

/// history*.csv files inside a run directory, sorted by name.
fn run_histories(run: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let mut found: Vec<PathBuf> = std::fs::read_dir(run)
        .map_err(|e| Error::io(run, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("history") && n.ends_with(".csv"))
        })
        .collect();
    found.sort();
    if found.is_empty() {
        bail!("data error: no history*.csv under {}", run.display());
    }
    Ok(found)
}

pub fn run(args: &ReportArgs) -> anyhow::Result<()> {
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    let mut used = HashSet::new();
    let mut rendered = 0usize;

    for run in &args.run {
        let run_name =
            run.file_name().and_then(|n| n.to_str()).unwrap_or("run").to_string();
        for path in run_histories(run)? {
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("history");
            let name = match stem.strip_prefix("history-") {
                Some(member) => format!("{run_name}-{member}"),
                None => run_name.clone(),
            };
            render_history(&path, &args.out.join(curve_name(&mut used, &name)))?;
            rendered += 1;
        }
    }
    for path in &args.history {
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("history");
        render_history(path, &args.out.join(curve_name(&mut used, stem)))?;
        rendered += 1;
    }

    if let Some(dir) = &args.audit {
        let report = AuditReport::load(&dir.join("audit.json")).context("reading audit report")?;
        if let Some(v) = &report.view_bias {
            let path = args.out.join("view-heatmaps.png");
            view_heatmaps(v, &path).context("rendering view heatmaps")?;
            println!("wrote {}", path.display());
            let path = args.out.join("agreement.png");
            agreement_bars(v, &path).context("rendering agreement bars")?;
            println!("wrote {}", path.display());
            rendered += 2;
        }
        if let Some(a) = &report.adjacency {
            let data = args.data.as_ref().ok_or_else(|| {
                Error::Config("--data is needed for the adjacency figure".into())
            })?;
            let manifest =
                Manifest::read_csv(&manifest_path(data)).context("reading manifest")?;
            let path = args.out.join("adjacency.png");
            adjacency_curves(a, &manifest, &path).context("rendering adjacency curves")?;
            println!("wrote {}", path.display());
            rendered += 1;
        }
        if report.padding.is_some() || report.timestamp.is_some() {
            let path = args.out.join("probes.png");
            probe_bars(report.padding.as_ref(), report.timestamp.as_ref(), &path)
                .context("rendering probe bars")?;
            println!("wrote {}", path.display());
            rendered += 1;
        }
    }

    if rendered == 0 {
        bail!("config error: nothing to render; pass --run, --history or --audit");
    }
    println!("{rendered} figures under {}", args.out.display());
    Ok(())
}
