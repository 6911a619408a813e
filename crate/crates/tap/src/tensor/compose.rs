//! Reductions composed from primitives so their gradients come for free.

use super::Tensor;
use crate::error::Result;

/// Per-slice variance over the last axis (population variance, keepdim).
pub fn variance_last(x: &Tensor) -> Result<Tensor> {
    let axis = x.rank() - 1;
    let mean = x.mean_axis(axis, true)?;
    let centered = x.sub(&mean)?;
    centered.mul(&centered)?.mean_axis(axis, true)
}

/// Mean absolute difference.
pub fn l1_mean(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    a.sub(b)?.abs()?.mean_all()
}

/// Euclidean norm of all elements.
pub fn l2_norm(x: &Tensor) -> Result<Tensor> {
    x.mul(x)?.sum_all()?.sqrt()
}

/// Cosine similarity between two tensors flattened to vectors.
pub fn cosine_similarity(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let dot = a.mul(b)?.sum_all()?;
    let denom = l2_norm(a)?.mul(&l2_norm(b)?)?;
    dot.div(&denom)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::check::{grad_check, random_input};

    #[test]
    fn l1_mean_of_constant_offset() {
        let a = Tensor::from_vec(vec![0.2; 12], &[3, 4]).unwrap();
        let b = Tensor::from_vec(vec![0.3; 12], &[3, 4]).unwrap();
        let l = l1_mean(&a, &b).unwrap();
        assert!((l.item() - 0.1).abs() < 1e-12);
    }

    #[test]
    fn cosine_of_parallel_and_antiparallel() {
        let a = Tensor::from_vec(vec![1.0, 2.0, -3.0], &[3]).unwrap();
        let b = a.mul_scalar(2.5).unwrap();
        assert!((cosine_similarity(&a, &b).unwrap().item() - 1.0).abs() < 1e-12);
        let c = a.mul_scalar(-1.0).unwrap();
        assert!((cosine_similarity(&a, &c).unwrap().item() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn variance_matches_manual() {
        let x = Tensor::from_vec(vec![1.0, 2.0, 3.0, 4.0], &[2, 2]).unwrap();
        let v = variance_last(&x).unwrap();
        assert_eq!(v.shape(), &[2, 1]);
        assert!((v.data()[0] - 0.25).abs() < 1e-12);
        assert!((v.data()[1] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn composed_grads() {
        let mut rng = crate::util::rng_for(31, "compose-grads");
        let a = random_input(&[2, 3], &mut rng);
        let b = random_input(&[2, 3], &mut rng);
        let r = grad_check(|t| cosine_similarity(&t[0], &t[1]), &[a.clone(), b.clone()]);
        assert!(r.max_rel_err < 1e-6, "cosine grads {}", r.max_rel_err);

        let r = grad_check(|t| variance_last(&t[0])?.sum_all(), &[a.clone()]);
        assert!(r.max_rel_err < 1e-6, "variance grads {}", r.max_rel_err);

        let r = grad_check(|t| l2_norm(&t[0]), &[a]);
        assert!(r.max_rel_err < 1e-6, "l2 grads {}", r.max_rel_err);
    }
}
