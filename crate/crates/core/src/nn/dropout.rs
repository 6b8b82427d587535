//! Inverted dropout. Masks are drawn from an explicit RNG so training runs
//! stay reproducible.

use super::Mode;
use ndarray::{ArrayD, IxDyn};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub struct Dropout {
    pub p: f64,
}

pub struct DropoutCache {
    // scale already folded in: kept units carry 1/(1-p), dropped carry 0
    mask: Option<ArrayD<f64>>,
}

impl Dropout {
    pub fn new(p: f64) -> Dropout {
        assert!((0.0..1.0).contains(&p), "dropout rate must be in [0, 1)");
        Dropout { p }
    }

    pub fn forward(&self, x: &ArrayD<f64>, mode: Mode, rng: &mut ChaCha8Rng) -> (ArrayD<f64>, DropoutCache) {
        if matches!(mode, Mode::Eval) || self.p == 0.0 {
            return (x.clone(), DropoutCache { mask: None });
        }
        let keep = 1.0 - self.p;
        let mask = ArrayD::from_shape_fn(IxDyn(x.shape()), |_| {
            if rng.gen::<f64>() < keep {
                1.0 / keep
            } else {
                0.0
            }
        });
        (x * &mask, DropoutCache { mask: Some(mask) })
    }

    pub fn backward(&self, dy: &ArrayD<f64>, cache: &DropoutCache) -> ArrayD<f64> {
        match &cache.mask {
            Some(mask) => dy * mask,
            None => dy.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use ndarray::IxDyn;

    #[test]
    fn eval_mode_is_identity() {
        let d = Dropout::new(0.5);
        let mut r = rng::stream(1, "dropout");
        let x = ArrayD::from_elem(IxDyn(&[4, 4]), 2.0);
        let (y, _) = d.forward(&x, Mode::Eval, &mut r);
        assert_eq!(y, x);
    }

    #[test]
    fn train_mode_preserves_expectation_and_masks_gradient() {
        let d = Dropout::new(0.3);
        let mut r = rng::stream(2, "dropout");
        let x = ArrayD::from_elem(IxDyn(&[2000]), 1.0);
        let (y, cache) = d.forward(&x, Mode::Train, &mut r);
        let kept = y.iter().filter(|&&v| v != 0.0).count();
        // binomial(2000, 0.7): mean 1400, sd ~20
        assert!((kept as f64 - 1400.0).abs() < 100.0, "kept = {kept}");
        for &v in y.iter() {
            assert!(v == 0.0 || (v - 1.0 / 0.7).abs() < 1e-12);
        }
        assert!((y.mean().unwrap() - 1.0).abs() < 0.1);
        // backward applies the identical mask
        let dy = ArrayD::from_elem(IxDyn(&[2000]), 3.0);
        let dx = d.backward(&dy, &cache);
        for (a, b) in y.iter().zip(dx.iter()) {
            if *a == 0.0 {
                assert_eq!(*b, 0.0);
            } else {
                assert!((*b - 3.0 / 0.7).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_rate_passes_through_in_train_mode() {
        let d = Dropout::new(0.0);
        let mut r = rng::stream(3, "dropout");
        let x = ArrayD::from_shape_fn(IxDyn(&[3, 3]), |ix| (ix[0] * 3 + ix[1]) as f64);
        let (y, cache) = d.forward(&x, Mode::Train, &mut r);
        assert_eq!(y, x);
        let dx = d.backward(&y, &cache);
        assert_eq!(dx, x);
    }
}
