//! Finite-difference gradient checking.
//!
//! The analytic gradient from [`Tensor::backward`] is compared against
//! central differences computed purely through forward evaluations, so the
//! check is independent of every backward rule it verifies.

use super::Tensor;
use crate::error::Result;

pub const DEFAULT_EPS: f64 = 1e-5;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// max |analytic - numeric| / max(1, |analytic|, |numeric|)
    pub max_rel_err: f64,
    /// (input index, element index) of the worst element.
    pub worst: (usize, usize),
    pub analytic: f64,
    pub numeric: f64,
}

/// Checks `f`'s gradients w.r.t. every input against central differences
/// with the default step. `f` must reduce to a scalar.
pub fn grad_check<F>(f: F, inputs: &[(Vec<usize>, Vec<f64>)]) -> GradCheckReport
where
    F: Fn(&[Tensor]) -> Result<Tensor>,
{
    grad_check_eps(f, inputs, DEFAULT_EPS)
}

pub fn grad_check_eps<F>(f: F, inputs: &[(Vec<usize>, Vec<f64>)], eps: f64) -> GradCheckReport
where
    F: Fn(&[Tensor]) -> Result<Tensor>,
{
    let leaves: Vec<Tensor> = inputs
        .iter()
        .map(|(shape, data)| Tensor::param(data.clone(), shape).expect("valid input"))
        .collect();
    let loss = f(&leaves).expect("forward pass");
    assert_eq!(loss.len(), 1, "grad_check requires a scalar loss");
    loss.backward().expect("backward pass");

    let eval = |probe: &[Vec<f64>]| -> f64 {
        let tensors: Vec<Tensor> = probe
            .iter()
            .zip(inputs)
            .map(|(data, (shape, _))| Tensor::from_vec(data.clone(), shape).expect("valid input"))
            .collect();
        f(&tensors).expect("forward pass").item()
    };

    let base: Vec<Vec<f64>> = inputs.iter().map(|(_, d)| d.clone()).collect();
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst: (0, 0),
        analytic: 0.0,
        numeric: 0.0,
    };
    for (pi, leaf) in leaves.iter().enumerate() {
        let analytic = leaf.grad().unwrap_or_else(|| vec![0.0; leaf.len()]);
        for ei in 0..analytic.len() {
            let mut plus = base.clone();
            plus[pi][ei] += eps;
            let mut minus = base.clone();
            minus[pi][ei] -= eps;
            let numeric = (eval(&plus) - eval(&minus)) / (2.0 * eps);
            let a = analytic[ei];
            let rel = (a - numeric).abs() / 1f64.max(a.abs()).max(numeric.abs());
            if rel > report.max_rel_err {
                report = GradCheckReport {
                    max_rel_err: rel,
                    worst: (pi, ei),
                    analytic: a,
                    numeric,
                };
            }
        }
    }
    report
}

/// Uniform random data in [-1, 1] for gradient-check probes.
pub fn random_input(shape: &[usize], rng: &mut rand_chacha::ChaCha8Rng) -> (Vec<usize>, Vec<f64>) {
    use rand::Rng;
    let numel: usize = shape.iter().product();
    (
        shape.to_vec(),
        (0..numel).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    )
}

/// Uniform random data in (lo, hi).
pub fn random_input_in(
    shape: &[usize],
    lo: f64,
    hi: f64,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> (Vec<usize>, Vec<f64>) {
    use rand::Rng;
    let numel: usize = shape.iter().product();
    (
        shape.to_vec(),
        (0..numel).map(|_| rng.gen_range(lo..hi)).collect(),
    )
}
