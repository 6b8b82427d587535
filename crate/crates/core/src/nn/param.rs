//! Parameter bookkeeping shared by every layer: a mutable visitor over
//! (name, value, grad) triples that the optimizer, gradient clipping and
//! checkpointing all drive.

use crate::error::{Error, Result};
use ndarray::{ArrayD, ArrayViewMutD};
use rand::Rng;
use rand_distr::StandardNormal;
use std::collections::HashMap;

pub struct ParamMut<'a> {
    pub name: String,
    pub value: ArrayViewMutD<'a, f64>,
    pub grad: ArrayViewMutD<'a, f64>,
}

pub trait Params {
    /// Visit every parameter exactly once, in a stable code-defined order,
    /// with `prefix` prepended to each name.
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(ParamMut<'_>));
}

pub fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

pub fn zero_grads(model: &mut dyn Params) {
    model.visit_params("", &mut |mut p| p.grad.fill(0.0));
}

pub fn param_count(model: &mut dyn Params) -> usize {
    let mut n = 0;
    model.visit_params("", &mut |p| n += p.value.len());
    n
}

pub fn grad_norm(model: &mut dyn Params) -> f64 {
    let mut acc = 0.0;
    model.visit_params("", &mut |p| acc += p.grad.iter().map(|g| g * g).sum::<f64>());
    acc.sqrt()
}

/// Scale all gradients so their global norm is at most `max_norm`; returns
/// the pre-clip norm.
pub fn clip_grad_norm(model: &mut dyn Params, max_norm: f64) -> f64 {
    let norm = grad_norm(model);
    if norm > max_norm && norm > 0.0 {
        let factor = max_norm / norm;
        model.visit_params("", &mut |mut p| p.grad.mapv_inplace(|g| g * factor));
    }
    norm
}

pub fn export_params(model: &mut dyn Params) -> Vec<(String, ArrayD<f64>)> {
    let mut out = Vec::new();
    model.visit_params("", &mut |p| out.push((p.name.clone(), p.value.to_owned())));
    out
}

/// Copy matching entries from `source` into the model. With `strict`, every
/// model parameter must be present; otherwise unmatched ones keep their
/// values (used to warm-start a backbone from a pretraining checkpoint).
/// Returns the number of parameters loaded.
pub fn import_params(
    model: &mut dyn Params,
    source: &HashMap<String, ArrayD<f64>>,
    strict: bool,
) -> Result<usize> {
    let mut loaded = 0usize;
    let mut problem: Option<String> = None;
    model.visit_params("", &mut |mut p| {
        if problem.is_some() {
            return;
        }
        match source.get(&p.name) {
            Some(src) if src.shape() == p.value.shape() => {
                p.value.assign(src);
                loaded += 1;
            }
            Some(src) => {
                problem = Some(format!(
                    "{}: shape {:?} in checkpoint, {:?} in model",
                    p.name,
                    src.shape(),
                    p.value.shape()
                ));
            }
            None if strict => problem = Some(format!("{} missing from checkpoint", p.name)),
            None => {}
        }
    });
    match problem {
        Some(msg) => Err(Error::Config(msg)),
        None => Ok(loaded),
    }
}

/// Weight initialization schemes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// Kaiming-He normal, std sqrt(2 / fan_in); for layers feeding ReLU.
    He,
    /// Glorot normal, std sqrt(2 / (fan_in + fan_out)).
    Xavier,
    Normal(f64),
    Zero,
}

pub fn draw(init: Init, fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> f64 {
    let std = match init {
        Init::He => (2.0 / fan_in as f64).sqrt(),
        Init::Xavier => (2.0 / (fan_in + fan_out) as f64).sqrt(),
        Init::Normal(s) => s,
        Init::Zero => return 0.0,
    };
    let z: f64 = rng.sample(StandardNormal);
    z * std
}
