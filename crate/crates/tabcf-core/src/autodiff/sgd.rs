use super::{AutodiffError, Tensor};

/// One plain SGD step: `p -= lr * grad(p)` for every parameter, then the
/// gradients are cleared so the next forward pass starts from zero. A zero
/// learning rate is allowed (it performs the bookkeeping without moving
/// anything), a negative or non-finite one is not.
pub fn sgd_step(params: &[&Tensor], lr: f64) -> Result<(), AutodiffError> {
    if !(lr.is_finite() && lr >= 0.0) {
        return Err(AutodiffError::InvalidLearningRate { value: lr });
    }
    for p in params {
        p.apply_sgd(lr)?;
    }
    Ok(())
}

/// Drops any stored gradients without touching the parameter values.
pub fn zero_grads(params: &[&Tensor]) {
    for p in params {
        p.zero_grad();
    }
}

/// Global-norm gradient clipping: if the L2 norm of all gradients taken
/// together exceeds `max_norm`, every gradient is scaled by
/// `max_norm / norm`. Returns the pre-clip norm.
pub fn clip_grad_norm(params: &[&Tensor], max_norm: f64) -> f64 {
    let mut sq_sum = 0.0;
    for p in params {
        if let Some(g) = p.grad() {
            sq_sum += g.iter().map(|v| v * v).sum::<f64>();
        }
    }
    let norm = sq_sum.sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        for p in params {
            p.scale_grad(scale);
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tape;

    #[test]
    fn step_moves_against_gradient() {
        // p = 1, loss = 2p -> grad 2, lr 0.1 -> p = 0.8
        let p = Tensor::param(vec![1], vec![1.0]).unwrap();
        let mut tape = Tape::new();
        let loss = tape.scale(&p, 2.0);
        tape.backward(&loss).unwrap();
        sgd_step(&[&p], 0.1).unwrap();
        assert!((p.to_vec()[0] - 0.8).abs() < 1e-15);
        assert!(p.grad().is_none(), "step must clear gradients");
    }

    #[test]
    fn zero_learning_rate_leaves_values() {
        let p = Tensor::param(vec![1], vec![1.0]).unwrap();
        let mut tape = Tape::new();
        let loss = tape.scale(&p, 2.0);
        tape.backward(&loss).unwrap();
        sgd_step(&[&p], 0.0).unwrap();
        assert_eq!(p.to_vec(), vec![1.0]);
    }

    #[test]
    fn negative_learning_rate_rejected() {
        let p = Tensor::param(vec![1], vec![1.0]).unwrap();
        let err = sgd_step(&[&p], -0.5).unwrap_err();
        assert!(matches!(err, AutodiffError::InvalidLearningRate { .. }));
    }

    #[test]
    fn clip_rescales_to_max_norm() {
        let p = Tensor::param(vec![2], vec![0.0, 0.0]).unwrap();
        let mut tape = Tape::new();
        // loss = 3*p0 + 4*p1 -> grad [3, 4], norm 5
        let w = Tensor::from_vec(vec![2], vec![3.0, 4.0]).unwrap();
        let prod = tape.mul(&p, &w).unwrap();
        let loss = tape.sum(&prod);
        tape.backward(&loss).unwrap();
        let norm = clip_grad_norm(&[&p], 1.0);
        assert!((norm - 5.0).abs() < 1e-12);
        let g = p.grad().unwrap();
        assert!((g[0] - 0.6).abs() < 1e-12 && (g[1] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn clip_leaves_small_gradients() {
        let p = Tensor::param(vec![1], vec![0.0]).unwrap();
        let mut tape = Tape::new();
        let loss = tape.scale(&p, 0.5);
        tape.backward(&loss).unwrap();
        clip_grad_norm(&[&p], 5.0);
        assert_eq!(p.grad().unwrap(), vec![0.5]);
    }
}
