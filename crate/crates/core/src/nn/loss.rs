//! Softmax cross-entropy, averaged over the batch.

use super::act::softmax_rows;
use ndarray::Array2;

/// Returns (mean loss, dlogits, probabilities). `targets` holds class indices.
pub fn cross_entropy(logits: &Array2<f64>, targets: &[usize]) -> (f64, Array2<f64>, Array2<f64>) {
    let (n, _) = logits.dim();
    assert_eq!(n, targets.len(), "batch size mismatch");
    let probs = softmax_rows(logits);
    let mut loss = 0.0;
    let mut dlogits = probs.clone();
    for (i, &t) in targets.iter().enumerate() {
        loss -= probs[[i, t]].max(1e-300).ln();
        dlogits[[i, t]] -= 1.0;
    }
    let inv = 1.0 / n as f64;
    (loss * inv, dlogits * inv, probs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck;
    use crate::rng;

    #[test]
    fn uniform_logits_give_ln_k() {
        let logits = Array2::zeros((4, 3));
        let (loss, _, probs) = cross_entropy(&logits, &[0, 1, 2, 0]);
        assert!((loss - 3.0f64.ln()).abs() < 1e-12);
        assert!(probs.iter().all(|&p| (p - 1.0 / 3.0).abs() < 1e-12));
    }

    #[test]
    fn perfect_prediction_loss_vanishes() {
        let mut logits = Array2::zeros((2, 3));
        logits[[0, 1]] = 50.0;
        logits[[1, 2]] = 50.0;
        let (loss, _, _) = cross_entropy(&logits, &[1, 2]);
        assert!(loss < 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut r = rng::stream(21, "ce-grad");
        let logits = gradcheck::random_matrix(&mut r, 5, 3);
        let targets = [0usize, 2, 1, 1, 0];
        let (_, dlogits, _) = cross_entropy(&logits, &targets);
        let h = 1e-6;
        for i in 0..5 {
            for j in 0..3 {
                let mut lp = logits.clone();
                lp[[i, j]] += h;
                let mut lm = logits.clone();
                lm[[i, j]] -= h;
                let (fp, _, _) = cross_entropy(&lp, &targets);
                let (fm, _, _) = cross_entropy(&lm, &targets);
                let num = (fp - fm) / (2.0 * h);
                assert!(
                    (num - dlogits[[i, j]]).abs() < 1e-7,
                    "({i},{j}): num {num} vs {}",
                    dlogits[[i, j]]
                );
            }
        }
    }

    #[test]
    fn gradient_rows_sum_to_zero() {
        let mut r = rng::stream(22, "ce-rows");
        let logits = gradcheck::random_matrix(&mut r, 6, 3).mapv(|v| v * 4.0);
        let (_, dlogits, _) = cross_entropy(&logits, &[2, 0, 1, 2, 2, 0]);
        for row in dlogits.rows() {
            assert!(row.sum().abs() < 1e-12);
        }
    }
}
