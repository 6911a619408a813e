//! Reductions and softmax.

use super::ops::attach_with_output;
use super::{BackFn, Tensor};
use crate::error::{Result, TapError};

fn axis_check(op: &'static str, shape: &[usize], axis: usize) -> Result<()> {
    if axis >= shape.len() {
        return Err(TapError::Shape {
            op,
            lhs: shape.to_vec(),
            rhs: vec![axis],
        });
    }
    Ok(())
}

/// Decomposes `shape` around `axis` into (outer, axis_len, inner).
fn split_at_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

impl Tensor {
    pub fn sum_all(&self) -> Result<Tensor> {
        let total: f64 = self.data().iter().sum();
        let n = self.len();
        Tensor::from_op("sum_all", vec![1], vec![total], vec![self.clone()], || {
            Box::new(move |g: &[f64]| vec![Some(vec![g[0]; n])]) as BackFn
        })
    }

    pub fn mean_all(&self) -> Result<Tensor> {
        let n = self.len() as f64;
        self.sum_all()?.mul_scalar(1.0 / n)
    }

    /// Sum along one axis; `keep` retains the axis with size 1.
    pub fn sum_axis(&self, axis: usize, keep: bool) -> Result<Tensor> {
        axis_check("sum_axis", self.shape(), axis)?;
        let (outer, len, inner) = split_at_axis(self.shape(), axis);
        let mut data = vec![0.0; outer * inner];
        let src = self.data();
        for o in 0..outer {
            for a in 0..len {
                let base = (o * len + a) * inner;
                let dst = &mut data[o * inner..(o + 1) * inner];
                for (d, &s) in dst.iter_mut().zip(&src[base..base + inner]) {
                    *d += s;
                }
            }
        }
        let mut out_shape: Vec<usize> = self.shape().to_vec();
        if keep {
            out_shape[axis] = 1;
        } else {
            out_shape.remove(axis);
            if out_shape.is_empty() {
                out_shape.push(1);
            }
        }
        Tensor::from_op("sum_axis", out_shape, data, vec![self.clone()], move || {
            let src_len = outer * len * inner;
            Box::new(move |g: &[f64]| {
                let mut dg = vec![0.0; src_len];
                for o in 0..outer {
                    let g_row = &g[o * inner..(o + 1) * inner];
                    for a in 0..len {
                        let base = (o * len + a) * inner;
                        dg[base..base + inner].copy_from_slice(g_row);
                    }
                }
                vec![Some(dg)]
            }) as BackFn
        })
    }

    pub fn mean_axis(&self, axis: usize, keep: bool) -> Result<Tensor> {
        axis_check("mean_axis", self.shape(), axis)?;
        let len = self.shape()[axis] as f64;
        self.sum_axis(axis, keep)?.mul_scalar(1.0 / len)
    }

    /// Numerically stable softmax along `axis` (max subtraction per slice).
    pub fn softmax(&self, axis: usize) -> Result<Tensor> {
        axis_check("softmax", self.shape(), axis)?;
        let (outer, len, inner) = split_at_axis(self.shape(), axis);
        let src = self.data();
        let mut data = vec![0.0; src.len()];
        for o in 0..outer {
            for i in 0..inner {
                let at = |a: usize| (o * len + a) * inner + i;
                let mut max = f64::NEG_INFINITY;
                for a in 0..len {
                    max = max.max(src[at(a)]);
                }
                let mut denom = 0.0;
                for a in 0..len {
                    let e = (src[at(a)] - max).exp();
                    data[at(a)] = e;
                    denom += e;
                }
                for a in 0..len {
                    data[at(a)] /= denom;
                }
            }
        }
        let out = Tensor::from_op(
            "softmax",
            self.shape().to_vec(),
            data,
            vec![self.clone()],
            || Box::new(|_: &[f64]| -> Vec<Option<Vec<f64>>> { unreachable!() }) as BackFn,
        )?;
        attach_with_output(&out, move |s, g| {
            // ds_a = s_a * (g_a - sum_b g_b s_b) per slice.
            let mut dg = vec![0.0; g.len()];
            for o in 0..outer {
                for i in 0..inner {
                    let at = |a: usize| (o * len + a) * inner + i;
                    let mut dot = 0.0;
                    for a in 0..len {
                        dot += g[at(a)] * s[at(a)];
                    }
                    for a in 0..len {
                        dg[at(a)] = s[at(a)] * (g[at(a)] - dot);
                    }
                }
            }
            vec![Some(dg)]
        });
        Ok(out)
    }
}
