//! On-disk layout shared by the subcommands: run metadata, per-stream file
//! naming and the evaluation report format.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use trawlnet::dataio::SplitSpec;
use trawlnet::error::Error;
use trawlnet::label::Label;
use trawlnet::metrics::ConfusionMatrix;
use trawlnet::models::Architecture;
use trawlnet::training::Prediction;

/// What `train` wrote and everything downstream needs to reload it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunMeta {
    pub architecture: Architecture,
    pub data: PathBuf,
    pub split_id: u8,
    pub seed: u64,
    pub crop_timestamps: bool,
    pub strict_paper: bool,
    pub flow_cache: Option<PathBuf>,
}

impl RunMeta {
    pub fn save(&self, run: &Path) -> anyhow::Result<()> {
        write_json_pretty(&run.join("run.json"), self)
    }

    pub fn load(run: &Path) -> anyhow::Result<RunMeta> {
        let path = run.join("run.json");
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// The independently trained models inside the run; two for the fused
    /// two-stream net, otherwise the architecture itself.
    pub fn members(&self) -> Vec<Architecture> {
        members(self.architecture)
    }
}

pub fn members(arch: Architecture) -> Vec<Architecture> {
    match arch {
        Architecture::TwoStream => vec![Architecture::Spatial, Architecture::Temporal],
        a => vec![a],
    }
}

fn member_file(multi: bool, member: Architecture, base: &str, ext: &str) -> String {
    if multi {
        format!("{base}-{}.{ext}", member.as_str())
    } else {
        format!("{base}.{ext}")
    }
}

pub fn config_path(run: &Path, multi: bool, member: Architecture) -> PathBuf {
    run.join(member_file(multi, member, "config", "json"))
}

pub fn hyper_path(run: &Path, multi: bool, member: Architecture) -> PathBuf {
    run.join(member_file(multi, member, "hyper", "ini"))
}

pub fn ckpt_path(run: &Path, multi: bool, member: Architecture) -> PathBuf {
    run.join(member_file(multi, member, "model", "ckpt"))
}

pub fn history_path(run: &Path, multi: bool, member: Architecture) -> PathBuf {
    run.join(member_file(multi, member, "history", "csv"))
}

pub fn split_path(data: &Path, split_id: u8) -> PathBuf {
    data.join("splits").join(SplitSpec::file_name(split_id))
}

pub fn default_flow_cache(data: &Path) -> PathBuf {
    data.join("flow-cache")
}

/// Serialize with a trailing newline so repeat writes are byte-stable and
/// shell-friendly.
pub fn write_json_pretty<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassF1 {
    pub label: Label,
    pub f1: f64,
    /// True when the class never occurs and is never predicted, so the score
    /// is a filler value rather than a measurement.
    pub degenerate: bool,
}

/// Everything `eval` reports for one subset of one split.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub architecture: Architecture,
    pub split_id: u8,
    pub subset: String,
    pub n_clips: usize,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub per_class: Vec<ClassF1>,
    pub confusion: ConfusionMatrix,
    pub predictions: Vec<Prediction>,
}

impl EvalReport {
    pub fn save(&self, path: &Path) -> anyhow::Result<()> {
        write_json_pretty(path, self)
    }

    pub fn load(path: &Path) -> anyhow::Result<EvalReport> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// `a,b,c` integer triple for per-class counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountsArg(pub [usize; 3]);

impl FromStr for CountsArg {
    type Err = String;

    fn from_str(s: &str) -> Result<CountsArg, String> {
        let parts: Vec<&str> = s.split(',').collect();
        if parts.len() != 3 {
            return Err(format!("expected NF,NR,R counts, got {s:?}"));
        }
        let mut out = [0usize; 3];
        for (slot, part) in out.iter_mut().zip(&parts) {
            *slot = part.trim().parse().map_err(|e| format!("bad count {part:?}: {e}"))?;
        }
        Ok(CountsArg(out))
    }
}

/// `a,b,c` float triple for per-class length offsets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OffsetsArg(pub [f64; 3]);

impl FromStr for OffsetsArg {
    type Err = String;

    fn from_str(s: &str) -> Result<OffsetsArg, String> {
        let parts: Vec<&str> = s.split(',').collect();
        if parts.len() != 3 {
            return Err(format!("expected NF,NR,R offsets, got {s:?}"));
        }
        let mut out = [0.0f64; 3];
        for (slot, part) in out.iter_mut().zip(&parts) {
            *slot = part.trim().parse().map_err(|e| format!("bad offset {part:?}: {e}"))?;
        }
        Ok(OffsetsArg(out))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_arg_parses_and_rejects() {
        assert_eq!("5, 6,7".parse::<CountsArg>().unwrap(), CountsArg([5, 6, 7]));
        assert!("5,6".parse::<CountsArg>().is_err());
        assert!("5,6,x".parse::<CountsArg>().is_err());
    }

    #[test]
    fn member_files_are_suffixed_only_for_two_stream() {
        let run = Path::new("/tmp/run");
        assert_eq!(
            ckpt_path(run, false, Architecture::Spatial),
            run.join("model.ckpt")
        );
        assert_eq!(
            ckpt_path(run, true, Architecture::Temporal),
            run.join("model-temporal.ckpt")
        );
        assert_eq!(members(Architecture::TwoStream).len(), 2);
        assert_eq!(members(Architecture::Hybrid), vec![Architecture::Hybrid]);
    }
}
