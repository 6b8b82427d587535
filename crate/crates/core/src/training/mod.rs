//! Training loop: cross-entropy objective, plateau LR scheduling for the CNN
//! streams, early stopping on validation loss, per-architecture flip
//! augmentation, and deterministic batch assembly from a seed.

pub mod loader;

pub use loader::{flip_input, LoadedClip, Loader};

use crate::error::{Error, Result};
use crate::label::Label;
use crate::metrics::{ClassScores, LabelledPrediction, PredictedProbability};
use crate::models::{fuse_two_stream, Architecture, Model, Scale};
use crate::nn::param::{export_params, import_params, Params};
use crate::nn::{clip_grad_norm, cross_entropy, read_checkpoint, zero_grads, Adam, Mode};
use crate::rng;
use ndarray::{Array3, ArrayD};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparams {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub image_size: usize,
    pub frames_per_video: usize,
    pub scheduler_patience: usize,
    pub scheduler_factor: f64,
    pub use_scheduler: bool,
    pub early_stop_patience: usize,
    pub augment_flip: bool,
    /// Global gradient-norm ceiling; `None` disables clipping.
    pub grad_clip: Option<f64>,
    pub seed: u64,
}

impl Hyperparams {
    /// Published settings per architecture at paper scale; reduced epochs,
    /// laser-focused learning rates and small images at desk scale (the
    /// paper-scale transformer rates assume pretrained backbones).
    pub fn preset(arch: Architecture, scale: Scale) -> Hyperparams {
        let cfg = crate::models::ModelConfig::preset(arch, scale);
        let (lr, epochs, batch) = match (arch, scale) {
            (Architecture::Spatial | Architecture::Temporal, Scale::Paper) => (1e-4, 200, 4),
            (Architecture::Hybrid, Scale::Paper) => (1e-6, 100, 4),
            (Architecture::Timesformer, Scale::Paper) => (1e-6, 100, 3),
            (Architecture::TwoStream, Scale::Paper) => (1e-4, 200, 4),
            (Architecture::Spatial | Architecture::Temporal | Architecture::TwoStream, Scale::Desk) => {
                (1e-3, 30, 8)
            }
            (Architecture::Hybrid | Architecture::Timesformer, Scale::Desk) => (3e-4, 30, 8),
        };
        Hyperparams {
            learning_rate: lr,
            epochs,
            batch_size: batch,
            image_size: cfg.image_size,
            frames_per_video: cfg.frames_per_video,
            scheduler_patience: 10,
            scheduler_factor: 0.1,
            use_scheduler: matches!(
                arch,
                Architecture::Spatial | Architecture::Temporal | Architecture::TwoStream
            ),
            early_stop_patience: 25,
            augment_flip: matches!(arch, Architecture::Spatial | Architecture::Timesformer),
            grad_clip: Some(5.0),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 {
            return Err(Error::Config(format!("learning_rate {} must be > 0", self.learning_rate)));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be >= 1".into()));
        }
        if self.scheduler_patience == 0 || self.early_stop_patience == 0 {
            return Err(Error::Config("patience values must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.scheduler_factor) || self.scheduler_factor <= 0.0 {
            return Err(Error::Config(format!(
                "scheduler_factor {} outside (0, 1)",
                self.scheduler_factor
            )));
        }
        if let Some(c) = self.grad_clip {
            if c <= 0.0 {
                return Err(Error::Config(format!("grad_clip {c} must be > 0")));
            }
        }
        Ok(())
    }

    pub fn to_ini(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "learning_rate = {}", self.learning_rate);
        let _ = writeln!(s, "epochs = {}", self.epochs);
        let _ = writeln!(s, "batch_size = {}", self.batch_size);
        let _ = writeln!(s, "image_size = {}", self.image_size);
        let _ = writeln!(s, "frames_per_video = {}", self.frames_per_video);
        let _ = writeln!(s, "scheduler_patience = {}", self.scheduler_patience);
        let _ = writeln!(s, "scheduler_factor = {}", self.scheduler_factor);
        let _ = writeln!(s, "use_scheduler = {}", self.use_scheduler);
        let _ = writeln!(s, "early_stop_patience = {}", self.early_stop_patience);
        let _ = writeln!(s, "augment_flip = {}", self.augment_flip);
        let _ = match self.grad_clip {
            Some(c) => writeln!(s, "grad_clip = {c}"),
            None => writeln!(s, "grad_clip = none"),
        };
        let _ = writeln!(s, "seed = {}", self.seed);
        s
    }

    /// Parse the flat key-value format written by `to_ini`. All keys must be
    /// present; `#` starts a comment.
    pub fn from_ini(text: &str) -> Result<Hyperparams> {
        let mut seen: HashMap<&str, String> = HashMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
            seen.insert(key.trim_end(), value.trim().to_string());
        }
        let mut take = |key: &'static str| {
            seen.remove(key)
                .ok_or_else(|| Error::Config(format!("missing key {key}")))
        };
        let parse_f64 = |key: &str, v: String| {
            v.parse::<f64>()
                .map_err(|_| Error::Config(format!("{key}: bad number {v:?}")))
        };
        let parse_usize = |key: &str, v: String| {
            v.parse::<usize>()
                .map_err(|_| Error::Config(format!("{key}: bad integer {v:?}")))
        };
        let parse_bool = |key: &str, v: String| match v.as_str() {
            "true" => Ok(true),
            "false" => Ok(false),
            _ => Err(Error::Config(format!("{key}: bad boolean {v:?}"))),
        };
        let hp = Hyperparams {
            learning_rate: parse_f64("learning_rate", take("learning_rate")?)?,
            epochs: parse_usize("epochs", take("epochs")?)?,
            batch_size: parse_usize("batch_size", take("batch_size")?)?,
            image_size: parse_usize("image_size", take("image_size")?)?,
            frames_per_video: parse_usize("frames_per_video", take("frames_per_video")?)?,
            scheduler_patience: parse_usize("scheduler_patience", take("scheduler_patience")?)?,
            scheduler_factor: parse_f64("scheduler_factor", take("scheduler_factor")?)?,
            use_scheduler: parse_bool("use_scheduler", take("use_scheduler")?)?,
            early_stop_patience: parse_usize("early_stop_patience", take("early_stop_patience")?)?,
            augment_flip: parse_bool("augment_flip", take("augment_flip")?)?,
            grad_clip: {
                let v = take("grad_clip")?;
                if v == "none" { None } else { Some(parse_f64("grad_clip", v)?) }
            },
            seed: take("seed")?
                .parse::<u64>()
                .map_err(|_| Error::Config("seed: bad integer".into()))?,
        };
        if let Some(key) = seen.keys().next() {
            return Err(Error::Config(format!("unknown key {key}")));
        }
        hp.validate()?;
        Ok(hp)
    }

    pub fn write_ini(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_ini()).map_err(|e| Error::io(path, e))
    }

    pub fn read_ini(path: &Path) -> Result<Hyperparams> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Hyperparams::from_ini(&text)
    }
}

/// Steps the learning rate down by `factor` whenever the observed loss has
/// not improved for `patience` consecutive observations.
#[derive(Debug, Clone)]
pub struct PlateauScheduler {
    pub factor: f64,
    pub patience: usize,
    best: f64,
    since: usize,
}

impl PlateauScheduler {
    pub fn new(factor: f64, patience: usize) -> PlateauScheduler {
        assert!(patience >= 1 && factor > 0.0 && factor < 1.0);
        PlateauScheduler { factor, patience, best: f64::INFINITY, since: 0 }
    }

    /// Returns true when the rate should be reduced after this observation.
    pub fn observe(&mut self, loss: f64) -> bool {
        if loss < self.best {
            self.best = loss;
            self.since = 0;
            return false;
        }
        self.since += 1;
        if self.since >= self.patience {
            self.since = 0;
            return true;
        }
        false
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_acc: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
    /// Index into `epochs` of the selected (minimum validation loss) epoch.
    pub selected: usize,
}

impl TrainHistory {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut s = String::from("epoch,train_loss,val_loss,val_acc,lr\n");
        for e in &self.epochs {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                e.epoch, e.train_loss, e.val_loss, e.val_acc, e.lr
            );
        }
        std::fs::write(path, s).map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<TrainHistory> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut epochs = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if i == 0 {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 5 {
                return Err(Error::Data(format!("{}: bad history row {line:?}", path.display())));
            }
            let num =
                |s: &str| s.parse::<f64>().map_err(|_| Error::Data(format!("bad number {s:?}")));
            epochs.push(EpochStats {
                epoch: fields[0]
                    .parse()
                    .map_err(|_| Error::Data(format!("bad epoch {:?}", fields[0])))?,
                train_loss: num(fields[1])?,
                val_loss: num(fields[2])?,
                val_acc: num(fields[3])?,
                lr: num(fields[4])?,
            });
        }
        let selected = best_epoch(&epochs)
            .ok_or_else(|| Error::Data(format!("{}: empty history", path.display())))?;
        Ok(TrainHistory { epochs, selected })
    }
}

fn best_epoch(epochs: &[EpochStats]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, e) in epochs.iter().enumerate() {
        if best.map_or(true, |b| e.val_loss < epochs[b].val_loss) {
            best = Some(i);
        }
    }
    best
}

/// Run the full loop. On return the model carries the weights of the
/// minimum-validation-loss epoch, not the final ones.
pub fn train(
    model: &mut dyn Model,
    train_clips: &[LoadedClip],
    val_clips: &[LoadedClip],
    hyper: &Hyperparams,
) -> Result<TrainHistory> {
    hyper.validate()?;
    if train_clips.is_empty() {
        return Err(Error::Data("empty training set".into()));
    }
    if val_clips.is_empty() {
        return Err(Error::Data("empty validation set".into()));
    }

    let mut adam = Adam::new(hyper.learning_rate);
    let mut scheduler = hyper
        .use_scheduler
        .then(|| PlateauScheduler::new(hyper.scheduler_factor, hyper.scheduler_patience));
    let mut epochs = Vec::new();
    let mut best: Option<(usize, f64, HashMap<String, ArrayD<f64>>)> = None;

    for epoch in 0..hyper.epochs {
        let mut batch_rng = rng::stream_indexed(hyper.seed, "batches", epoch as u64);
        let mut dropout_rng = rng::stream_indexed(hyper.seed, "dropout", epoch as u64);
        let mut order: Vec<usize> = (0..train_clips.len()).collect();
        for i in (1..order.len()).rev() {
            order.swap(i, batch_rng.gen_range(0..=i));
        }

        let mut loss_sum = 0.0;
        for chunk in order.chunks(hyper.batch_size) {
            let mut inputs = Vec::with_capacity(chunk.len());
            let mut targets = Vec::with_capacity(chunk.len());
            for &i in chunk {
                let clip = &train_clips[i];
                let flip = hyper.augment_flip && batch_rng.gen::<bool>();
                inputs.push(if flip { flip_input(&clip.input) } else { clip.input.clone() });
                targets.push(clip.label.index());
            }
            let logits = model.forward_batch(&inputs, Mode::Train, &mut dropout_rng)?;
            let (loss, dlogits, _) = cross_entropy(&logits, &targets);
            if !loss.is_finite() {
                return Err(Error::Diverged(format!(
                    "epoch {epoch}: non-finite training loss {loss}"
                )));
            }
            loss_sum += loss * chunk.len() as f64;
            zero_grads(&mut *model);
            model.backward_batch(&dlogits);
            if let Some(max_norm) = hyper.grad_clip {
                clip_grad_norm(&mut *model, max_norm);
            }
            adam.step(&mut *model);
        }
        let train_loss = loss_sum / train_clips.len() as f64;

        let (val_loss, val_acc) = validate(model, val_clips, hyper.batch_size)?;
        epochs.push(EpochStats { epoch, train_loss, val_loss, val_acc, lr: adam.lr() });

        let improved = best.as_ref().map_or(true, |(_, b, _)| val_loss < *b);
        if improved {
            let snapshot = export_params(&mut *model).into_iter().collect();
            best = Some((epoch, val_loss, snapshot));
        }
        if let Some(s) = scheduler.as_mut() {
            if s.observe(val_loss) {
                adam.set_lr(adam.lr() * s.factor);
            }
        }
        let best_at = best.as_ref().map(|(e, _, _)| *e).unwrap();
        if epoch - best_at >= hyper.early_stop_patience {
            break;
        }
    }

    let (selected, _, snapshot) = best.expect("at least one epoch ran");
    import_params(&mut *model, &snapshot, true)?;
    Ok(TrainHistory { epochs, selected })
}

fn validate(model: &mut dyn Model, clips: &[LoadedClip], batch_size: usize) -> Result<(f64, f64)> {
    let mut r = rng::stream(0, "val");
    let mut loss_sum = 0.0;
    let mut correct = 0usize;
    for chunk in clips.chunks(batch_size) {
        let inputs: Vec<Array3<f64>> = chunk.iter().map(|c| c.input.clone()).collect();
        let targets: Vec<usize> = chunk.iter().map(|c| c.label.index()).collect();
        let logits = model.forward_batch(&inputs, Mode::Eval, &mut r)?;
        let (loss, _, probs) = cross_entropy(&logits, &targets);
        if !loss.is_finite() {
            return Err(Error::Diverged(format!("non-finite validation loss {loss}")));
        }
        loss_sum += loss * chunk.len() as f64;
        for (i, &t) in targets.iter().enumerate() {
            let row = probs.row(i);
            let pred = row
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0;
            if pred == t {
                correct += 1;
            }
        }
    }
    Ok((loss_sum / clips.len() as f64, correct as f64 / clips.len() as f64))
}

/// One evaluated clip with its scores and probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub clip_id: String,
    pub capture_index: u32,
    pub view_id: u8,
    pub n_padding: usize,
    pub true_label: Label,
    pub scores: ClassScores,
    pub probs: PredictedProbability,
    pub predicted: Label,
}

impl Prediction {
    /// Softmax probability of the predicted (argmax) class.
    pub fn pp(&self) -> f64 {
        self.probs.0[self.predicted.index()]
    }
}

/// Evaluate clips in capture order; evaluation mode, so repeat calls agree
/// bit for bit.
pub fn evaluate(
    model: &mut dyn Model,
    clips: &[LoadedClip],
    batch_size: usize,
) -> Result<Vec<Prediction>> {
    if clips.is_empty() {
        return Err(Error::Data("evaluate called on an empty subset".into()));
    }
    let mut order: Vec<usize> = (0..clips.len()).collect();
    order.sort_by_key(|&i| clips[i].capture_index);
    let mut r = rng::stream(0, "eval");
    let mut out = Vec::with_capacity(clips.len());
    for chunk in order.chunks(batch_size.max(1)) {
        let inputs: Vec<Array3<f64>> = chunk.iter().map(|&i| clips[i].input.clone()).collect();
        let logits = model.forward_batch(&inputs, Mode::Eval, &mut r)?;
        for (k, &i) in chunk.iter().enumerate() {
            let clip = &clips[i];
            let scores = ClassScores(logits.row(k).to_vec());
            let probs = crate::metrics::softmax(&scores);
            let predicted = Label::from_index(probs.argmax()).unwrap();
            out.push(Prediction {
                clip_id: clip.clip_id.clone(),
                capture_index: clip.capture_index,
                view_id: clip.view_id,
                n_padding: clip.n_padding,
                true_label: clip.label,
                scores,
                probs,
                predicted,
            });
        }
    }
    Ok(out)
}

/// Merge per-stream evaluations of the same subset by softmax averaging.
pub fn fuse_predictions(spatial: &[Prediction], temporal: &[Prediction]) -> Result<Vec<Prediction>> {
    if spatial.len() != temporal.len() {
        return Err(Error::Data(format!(
            "stream evaluations cover {} vs {} clips",
            spatial.len(),
            temporal.len()
        )));
    }
    let by_id: HashMap<&str, &Prediction> =
        temporal.iter().map(|p| (p.clip_id.as_str(), p)).collect();
    spatial
        .iter()
        .map(|s| {
            let t = by_id.get(s.clip_id.as_str()).ok_or_else(|| {
                Error::Data(format!("clip {:?} missing from temporal evaluation", s.clip_id))
            })?;
            let probs = fuse_two_stream(&s.scores, &t.scores)?;
            let predicted = Label::from_index(probs.argmax()).unwrap();
            // log-probabilities keep softmax(scores) == probs for downstream use
            let scores = ClassScores(probs.0.iter().map(|p| p.ln()).collect());
            Ok(Prediction {
                clip_id: s.clip_id.clone(),
                capture_index: s.capture_index,
                view_id: s.view_id,
                n_padding: s.n_padding.max(t.n_padding),
                true_label: s.true_label,
                scores,
                probs,
                predicted,
            })
        })
        .collect()
}

pub fn labelled(preds: &[Prediction]) -> Vec<LabelledPrediction> {
    preds
        .iter()
        .map(|p| LabelledPrediction { true_label: p.true_label, pred_label: p.predicted })
        .collect()
}

/// Copy checkpoint tensors whose names start with `prefix` into the model;
/// everything else keeps its initialization. Returns how many were loaded.
pub fn warm_start(model: &mut dyn Params, path: &Path, prefix: &str) -> Result<usize> {
    let source = read_checkpoint(path)?;
    let filtered: HashMap<String, ArrayD<f64>> = source
        .into_iter()
        .filter(|(name, _)| name.starts_with(prefix))
        .collect();
    if filtered.is_empty() {
        return Err(Error::Config(format!(
            "{}: no tensors under prefix {prefix:?}",
            path.display()
        )));
    }
    import_params(model, &filtered, false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{build_model, ModelConfig};
        use crate::nn::{Init, Linear};
    use approx::assert_abs_diff_eq;
    use ndarray::Array3;

    fn toy_clips(n: usize, frames: usize, size: usize, seed: u64) -> Vec<LoadedClip> {
        let mut r = rng::stream(seed, "toy-clips");
        (0..n)
            .map(|i| {
                let label = Label::from_index(i % 3).unwrap();
                // class-dependent mean makes the toy problem separable
                let base = 0.2 + 0.3 * label.index() as f64;
                let input = Array3::from_shape_simple_fn((frames, size, size), || {
                    (base + 0.1 * (r.gen::<f64>() - 0.5)).clamp(0.0, 1.0)
                });
                LoadedClip {
                    clip_id: format!("clip{i:03}"),
                    label,
                    view_id: (i % 16) as u8 + 1,
                    capture_index: i as u32,
                    n_padding: 0,
                    input,
                }
            })
            .collect()
    }

    fn tiny_spatial() -> ModelConfig {
        let mut cfg = ModelConfig::preset(Architecture::Spatial, Scale::Desk);
        cfg.image_size = 16;
        cfg.frames_per_video = 2;
        cfg
    }

    fn tiny_hyper() -> Hyperparams {
        let mut hp = Hyperparams::preset(Architecture::Spatial, Scale::Desk);
        hp.image_size = 16;
        hp.frames_per_video = 2;
        hp.epochs = 12;
        hp.batch_size = 6;
        hp.learning_rate = 3e-3;
        hp
    }

    #[test]
    fn ini_round_trip_preserves_everything() {
        for arch in [
            Architecture::Spatial,
            Architecture::Temporal,
            Architecture::Hybrid,
            Architecture::Timesformer,
        ] {
            let hp = Hyperparams::preset(arch, Scale::Paper);
            let back = Hyperparams::from_ini(&hp.to_ini()).unwrap();
            assert_eq!(hp, back);
        }
        let mut hp = Hyperparams::preset(Architecture::Spatial, Scale::Desk);
        hp.grad_clip = None;
        assert_eq!(Hyperparams::from_ini(&hp.to_ini()).unwrap(), hp);
    }

    #[test]
    fn ini_rejects_unknown_and_missing_keys() {
        let hp = Hyperparams::preset(Architecture::Spatial, Scale::Desk);
        let mut text = hp.to_ini();
        text.push_str("mystery = 1\n");
        assert!(Hyperparams::from_ini(&text).is_err());
        let partial = "learning_rate = 0.001\n";
        assert!(Hyperparams::from_ini(partial).is_err());
    }

    #[test]
    fn paper_presets_match_published_table() {
        let sp = Hyperparams::preset(Architecture::Spatial, Scale::Paper);
        assert_eq!((sp.learning_rate, sp.epochs, sp.batch_size), (1e-4, 200, 4));
        assert_eq!((sp.image_size, sp.frames_per_video), (300, 8));
        assert!(sp.augment_flip && sp.use_scheduler);
        let te = Hyperparams::preset(Architecture::Temporal, Scale::Paper);
        assert_eq!(te.frames_per_video, 14);
        assert!(!te.augment_flip && te.use_scheduler);
        let hy = Hyperparams::preset(Architecture::Hybrid, Scale::Paper);
        assert_eq!((hy.learning_rate, hy.epochs, hy.frames_per_video), (1e-6, 100, 12));
        assert!(!hy.augment_flip && !hy.use_scheduler);
        let ts = Hyperparams::preset(Architecture::Timesformer, Scale::Paper);
        assert_eq!((ts.learning_rate, ts.epochs, ts.batch_size), (1e-6, 100, 3));
        assert_eq!(ts.image_size, 224);
        assert!(ts.augment_flip && !ts.use_scheduler);
    }

    #[test]
    fn scheduler_fires_after_ten_flat_epochs() {
        let mut s = PlateauScheduler::new(0.1, 10);
        let mut lr = 1e-4;
        assert!(!s.observe(1.0));
        for k in 1..=10 {
            if s.observe(1.0 + 0.1 * k as f64) {
                lr *= s.factor;
            }
        }
        assert_abs_diff_eq!(lr, 1e-5, epsilon = 1e-18);
        // counter resets after firing
        assert!(!s.observe(2.5));
    }

    #[test]
    fn scheduler_never_fires_while_improving() {
        let mut s = PlateauScheduler::new(0.1, 3);
        for k in 0..20 {
            assert!(!s.observe(1.0 - 0.01 * k as f64));
        }
    }

    #[test]
    fn gradient_descent_on_convex_probe_is_monotone() {
        let mut r = rng::stream(70, "convex");
        let mut lin = Linear::new(4, 3, Init::Xavier, &mut r);
        let x = crate::nn::gradcheck::random_matrix(&mut r, 12, 4);
        let targets: Vec<usize> = (0..12).map(|i| i % 3).collect();
        let mut last = f64::INFINITY;
        for _ in 0..60 {
            let (logits, cache) = lin.forward(&x);
            let (loss, dlogits, _) = cross_entropy(&logits, &targets);
            assert!(loss <= last + 1e-9, "loss rose: {last} -> {loss}");
            last = loss;
            zero_grads(&mut lin);
            lin.backward(&dlogits, &cache);
            lin.visit_params("", &mut |mut p| {
                let step = p.grad.mapv(|g| 0.05 * g);
                p.value.zip_mut_with(&step, |v, s| *v -= s);
            });
        }
    }

    #[test]
    fn overfits_a_tiny_separable_set() {
        let clips = toy_clips(12, 2, 16, 41);
        let mut r = rng::stream(42, "overfit");
        let mut model = build_model(&tiny_spatial(), &mut r).unwrap();
        let hist = train(model.as_mut(), &clips, &clips, &tiny_hyper()).unwrap();
        let preds = evaluate(model.as_mut(), &clips, 6).unwrap();
        let acc = crate::metrics::accuracy(&labelled(&preds)).unwrap();
        assert_eq!(acc, 1.0, "history: {:?}", hist.epochs.last());
        assert_eq!(hist.selected, best_epoch(&hist.epochs).unwrap());
    }

    #[test]
    fn training_is_deterministic_in_the_seed() {
        let clips = toy_clips(9, 2, 16, 43);
        let hp = tiny_hyper();
        let run = || {
            let mut r = rng::stream(44, "det");
            let mut model = build_model(&tiny_spatial(), &mut r).unwrap();
            let hist = train(model.as_mut(), &clips, &clips, &hp).unwrap();
            (hist, export_params(model.as_mut()))
        };
        let (h1, p1) = run();
        let (h2, p2) = run();
        assert_eq!(h1, h2);
        assert_eq!(p1.len(), p2.len());
        for ((n1, a), (n2, b)) in p1.iter().zip(&p2) {
            assert_eq!(n1, n2);
            assert_eq!(a, b, "parameter {n1} differs between runs");
        }
    }

    #[test]
    fn evaluation_is_repeatable_and_ordered() {
        let mut clips = toy_clips(7, 2, 16, 45);
        clips.reverse(); // hand evaluate a shuffled order
        let mut r = rng::stream(46, "eval-det");
        let mut model = build_model(&tiny_spatial(), &mut r).unwrap();
        let a = evaluate(model.as_mut(), &clips, 3).unwrap();
        let b = evaluate(model.as_mut(), &clips, 3).unwrap();
        assert_eq!(a, b);
        for w in a.windows(2) {
            assert!(w[0].capture_index < w[1].capture_index);
        }
        for p in &a {
            let sum: f64 = p.probs.0.iter().sum();
            assert_abs_diff_eq!(sum, 1.0, epsilon = 1e-6);
        }
        let ids: std::collections::HashSet<_> = a.iter().map(|p| p.clip_id.as_str()).collect();
        assert_eq!(ids.len(), clips.len());
    }

    #[test]
    fn empty_sets_are_rejected() {
        let clips = toy_clips(3, 2, 16, 47);
        let mut r = rng::stream(48, "empty");
        let mut model = build_model(&tiny_spatial(), &mut r).unwrap();
        assert!(train(model.as_mut(), &[], &clips, &tiny_hyper()).is_err());
        assert!(train(model.as_mut(), &clips, &[], &tiny_hyper()).is_err());
        assert!(evaluate(model.as_mut(), &[], 4).is_err());
    }

    #[test]
    fn fused_predictions_average_the_softmaxes() {
        let clips = toy_clips(3, 2, 16, 49);
        let mk = |scores: Vec<Vec<f64>>| -> Vec<Prediction> {
            scores
                .into_iter()
                .zip(&clips)
                .map(|(s, c)| {
                    let scores = ClassScores(s);
                    let probs = crate::metrics::softmax(&scores);
                    let predicted = Label::from_index(probs.argmax()).unwrap();
                    Prediction {
                        clip_id: c.clip_id.clone(),
                        capture_index: c.capture_index,
                        view_id: c.view_id,
                        n_padding: 0,
                        true_label: c.label,
                        scores,
                        probs,
                        predicted,
                    }
                })
                .collect()
        };
        let s = mk(vec![vec![0.0, 0.0, 0.0]; 3]);
        let t = mk(vec![vec![2f64.ln(), 0.0, 0.0]; 3]);
        let fused = fuse_predictions(&s, &t).unwrap();
        for f in &fused {
            assert_abs_diff_eq!(f.probs.0[0], 5.0 / 12.0, epsilon = 1e-12);
            assert_abs_diff_eq!(f.probs.0[1], 7.0 / 24.0, epsilon = 1e-12);
            assert_eq!(f.predicted, Label::NF);
            // scores stay consistent with probs through a softmax
            let again = crate::metrics::softmax(&f.scores);
            for (a, b) in again.0.iter().zip(&f.probs.0) {
                assert_abs_diff_eq!(*a, *b, epsilon = 1e-12);
            }
        }
        let mismatched = fuse_predictions(&s, &t[..2]);
        assert!(mismatched.is_err());
    }

    #[test]
    fn history_csv_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let hist = TrainHistory {
            epochs: vec![
                EpochStats { epoch: 0, train_loss: 1.0, val_loss: 1.1, val_acc: 0.4, lr: 1e-4 },
                EpochStats { epoch: 1, train_loss: 0.8, val_loss: 0.9, val_acc: 0.6, lr: 1e-4 },
                EpochStats { epoch: 2, train_loss: 0.7, val_loss: 0.95, val_acc: 0.5, lr: 1e-5 },
            ],
            selected: 1,
        };
        let path = dir.path().join("history.csv");
        hist.write_csv(&path).unwrap();
        let back = TrainHistory::read_csv(&path).unwrap();
        assert_eq!(back, hist);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("epoch,train_loss,val_loss,val_acc,lr\n"));
    }

    #[test]
    fn warm_start_loads_only_the_backbone() {
        let dir = tempfile::tempdir().unwrap();
        let mut r = rng::stream(50, "warm");
        let mut donor = build_model(&tiny_spatial(), &mut r).unwrap();
        let path = dir.path().join("pretrain.ckpt");
        crate::nn::save_checkpoint(&path, donor.as_mut()).unwrap();

        let mut target = build_model(&tiny_spatial(), &mut r).unwrap();
        let loaded = warm_start(target.as_mut(), &path, "backbone.").unwrap();
        assert!(loaded > 0);
        let donor_params: HashMap<String, ArrayD<f64>> =
            export_params(donor.as_mut()).into_iter().collect();
        let mut matched = 0;
        let mut head_differs = false;
        target.visit_params("", &mut |p| {
            // checkpoints store f32, so compare at that precision
            let d = donor_params[&p.name].mapv(|v| v as f32 as f64);
            if p.name.starts_with("backbone.") {
                assert_eq!(p.value.to_owned(), d, "{} not copied", p.name);
                matched += 1;
            } else if p.value.to_owned() != d {
                head_differs = true;
            }
        });
        assert_eq!(matched, loaded);
        assert!(head_differs, "head weights must keep their own init");
    }
}
