//! Elementwise binary/unary ops with numpy-style broadcasting.

use super::{strides_of, BackFn, Tensor};
use crate::error::{Result, TapError};

/// Right-aligned broadcast of two shapes; each dim must match or be 1.
pub(crate) fn broadcast_shapes(
    op: &'static str,
    a: &[usize],
    b: &[usize],
) -> Result<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0; rank];
    for i in 0..rank {
        let da = if i < rank - a.len() { 1 } else { a[i - (rank - a.len())] };
        let db = if i < rank - b.len() { 1 } else { b[i - (rank - b.len())] };
        if da != db && da != 1 && db != 1 {
            return Err(TapError::Shape {
                op,
                lhs: a.to_vec(),
                rhs: b.to_vec(),
            });
        }
        out[i] = da.max(db);
    }
    Ok(out)
}

/// Strides into `shape` viewed as `out_rank`-dimensional with broadcasting:
/// broadcast dims get stride 0.
fn virtual_strides(shape: &[usize], out_shape: &[usize]) -> Vec<usize> {
    let strides = strides_of(shape);
    let offset = out_shape.len() - shape.len();
    let mut out = vec![0; out_shape.len()];
    for i in 0..shape.len() {
        out[offset + i] = if shape[i] == 1 { 0 } else { strides[i] };
    }
    out
}

/// Calls `f(out_idx, a_off, b_off)` for every element of the broadcast shape,
/// in row-major order.
fn for_each_pair(
    out_shape: &[usize],
    a_shape: &[usize],
    b_shape: &[usize],
    mut f: impl FnMut(usize, usize, usize),
) {
    let total: usize = out_shape.iter().product();
    if total == 0 {
        return;
    }
    let sa = virtual_strides(a_shape, out_shape);
    let sb = virtual_strides(b_shape, out_shape);
    let rank = out_shape.len();
    let mut idx = vec![0usize; rank];
    let mut oa = 0usize;
    let mut ob = 0usize;
    for out_idx in 0..total {
        f(out_idx, oa, ob);
        // Odometer increment from the last axis.
        for d in (0..rank).rev() {
            idx[d] += 1;
            oa += sa[d];
            ob += sb[d];
            if idx[d] < out_shape[d] {
                break;
            }
            idx[d] = 0;
            oa -= sa[d] * out_shape[d];
            ob -= sb[d] * out_shape[d];
        }
    }
}

type ElemFn = fn(f64, f64) -> f64;
/// (a, b, upstream grad) -> contribution.
type ElemGradFn = fn(f64, f64, f64) -> f64;

fn binary_op(
    op: &'static str,
    a: &Tensor,
    b: &Tensor,
    f: ElemFn,
    dfa: ElemGradFn,
    dfb: ElemGradFn,
) -> Result<Tensor> {
    let out_shape = broadcast_shapes(op, a.shape(), b.shape())?;
    let total: usize = out_shape.iter().product();
    let mut data = vec![0.0; total];

    if a.shape() == b.shape() {
        for ((dst, &x), &y) in data.iter_mut().zip(a.data()).zip(b.data()) {
            *dst = f(x, y);
        }
    } else if b.len() == 1 {
        let y = b.data()[0];
        for (dst, &x) in data.iter_mut().zip(a.data()) {
            *dst = f(x, y);
        }
    } else if a.len() == 1 {
        let x = a.data()[0];
        for (dst, &y) in data.iter_mut().zip(b.data()) {
            *dst = f(x, y);
        }
    } else {
        let (ad, bd) = (a.data(), b.data());
        for_each_pair(&out_shape, a.shape(), b.shape(), |o, ia, ib| {
            data[o] = f(ad[ia], bd[ib]);
        });
    }

    let (ac, bc) = (a.clone(), b.clone());
    let shape_for_back = out_shape.clone();
    Tensor::from_op(op, out_shape, data, vec![a.clone(), b.clone()], move || {
        Box::new(move |g: &[f64]| {
            let want_a = ac.tracked();
            let want_b = bc.tracked();
            let mut da = if want_a { Some(vec![0.0; ac.len()]) } else { None };
            let mut db = if want_b { Some(vec![0.0; bc.len()]) } else { None };
            let (ad, bd) = (ac.data(), bc.data());
            if ac.shape() == bc.shape() {
                for i in 0..g.len() {
                    if let Some(da) = da.as_mut() {
                        da[i] = dfa(ad[i], bd[i], g[i]);
                    }
                    if let Some(db) = db.as_mut() {
                        db[i] = dfb(ad[i], bd[i], g[i]);
                    }
                }
            } else {
                for_each_pair(&shape_for_back, ac.shape(), bc.shape(), |o, ia, ib| {
                    if let Some(da) = da.as_mut() {
                        da[ia] += dfa(ad[ia], bd[ib], g[o]);
                    }
                    if let Some(db) = db.as_mut() {
                        db[ib] += dfb(ad[ia], bd[ib], g[o]);
                    }
                });
            }
            vec![da, db]
        }) as BackFn
    })
}

impl Tensor {
    pub fn add(&self, rhs: &Tensor) -> Result<Tensor> {
        binary_op("add", self, rhs, |x, y| x + y, |_, _, g| g, |_, _, g| g)
    }

    pub fn sub(&self, rhs: &Tensor) -> Result<Tensor> {
        binary_op("sub", self, rhs, |x, y| x - y, |_, _, g| g, |_, _, g| -g)
    }

    pub fn mul(&self, rhs: &Tensor) -> Result<Tensor> {
        binary_op(
            "mul",
            self,
            rhs,
            |x, y| x * y,
            |_, y, g| g * y,
            |x, _, g| g * x,
        )
    }

    pub fn div(&self, rhs: &Tensor) -> Result<Tensor> {
        binary_op(
            "div",
            self,
            rhs,
            |x, y| x / y,
            |_, y, g| g / y,
            |x, y, g| -g * x / (y * y),
        )
    }

    pub fn add_scalar(&self, value: f64) -> Result<Tensor> {
        let data = self.data().iter().map(|&x| x + value).collect();
        Tensor::from_op(
            "add_scalar",
            self.shape().to_vec(),
            data,
            vec![self.clone()],
            || Box::new(move |g: &[f64]| vec![Some(g.to_vec())]) as BackFn,
        )
    }

    pub fn mul_scalar(&self, value: f64) -> Result<Tensor> {
        let data = self.data().iter().map(|&x| x * value).collect();
        Tensor::from_op(
            "mul_scalar",
            self.shape().to_vec(),
            data,
            vec![self.clone()],
            || {
                Box::new(move |g: &[f64]| vec![Some(g.iter().map(|&v| v * value).collect())])
                    as BackFn
            },
        )
    }

    pub fn neg(&self) -> Result<Tensor> {
        self.mul_scalar(-1.0)
    }

    pub fn exp(&self) -> Result<Tensor> {
        let data: Vec<f64> = self.data().iter().map(|&x| x.exp()).collect();
        let out = Tensor::from_op(
            "exp",
            self.shape().to_vec(),
            data,
            vec![self.clone()],
            || Box::new(|_: &[f64]| -> Vec<Option<Vec<f64>>> { unreachable!() }) as BackFn,
        )?;
        attach_with_output(&out, move |out_data, g| {
            vec![Some(
                g.iter().zip(out_data).map(|(&gv, &e)| gv * e).collect(),
            )]
        });
        Ok(out)
    }

    pub fn ln(&self) -> Result<Tensor> {
        let data: Vec<f64> = self.data().iter().map(|&x| x.ln()).collect();
        let a = self.clone();
        Tensor::from_op("ln", self.shape().to_vec(), data, vec![self.clone()], || {
            Box::new(move |g: &[f64]| {
                vec![Some(
                    g.iter().zip(a.data()).map(|(&gv, &x)| gv / x).collect(),
                )]
            }) as BackFn
        })
    }

    pub fn sqrt(&self) -> Result<Tensor> {
        let data: Vec<f64> = self.data().iter().map(|&x| x.sqrt()).collect();
        let out = Tensor::from_op(
            "sqrt",
            self.shape().to_vec(),
            data,
            vec![self.clone()],
            || Box::new(|_: &[f64]| -> Vec<Option<Vec<f64>>> { unreachable!() }) as BackFn,
        )?;
        attach_with_output(&out, move |out_data, g| {
            vec![Some(
                g.iter()
                    .zip(out_data)
                    .map(|(&gv, &s)| gv / (2.0 * s))
                    .collect(),
            )]
        });
        Ok(out)
    }

    /// |x|; subgradient 0 is never hit on continuous inputs.
    pub fn abs(&self) -> Result<Tensor> {
        let data: Vec<f64> = self.data().iter().map(|&x| x.abs()).collect();
        let a = self.clone();
        Tensor::from_op("abs", self.shape().to_vec(), data, vec![self.clone()], || {
            Box::new(move |g: &[f64]| {
                vec![Some(
                    g.iter()
                        .zip(a.data())
                        .map(|(&gv, &x)| gv * x.signum())
                        .collect(),
                )]
            }) as BackFn
        })
    }

    pub fn relu(&self) -> Result<Tensor> {
        let data: Vec<f64> = self.data().iter().map(|&x| x.max(0.0)).collect();
        let a = self.clone();
        Tensor::from_op(
            "relu",
            self.shape().to_vec(),
            data,
            vec![self.clone()],
            || {
                Box::new(move |g: &[f64]| {
                    vec![Some(
                        g.iter()
                            .zip(a.data())
                            .map(|(&gv, &x)| if x > 0.0 { gv } else { 0.0 })
                            .collect(),
                    )]
                }) as BackFn
            },
        )
    }

    /// GELU with the tanh approximation.
    pub fn gelu(&self) -> Result<Tensor> {
        const C: f64 = 0.7978845608028654; // sqrt(2/pi)
        const A: f64 = 0.044715;
        let data: Vec<f64> = self
            .data()
            .iter()
            .map(|&x| 0.5 * x * (1.0 + (C * (x + A * x * x * x)).tanh()))
            .collect();
        let a = self.clone();
        Tensor::from_op(
            "gelu",
            self.shape().to_vec(),
            data,
            vec![self.clone()],
            || {
                Box::new(move |g: &[f64]| {
                    vec![Some(
                        g.iter()
                            .zip(a.data())
                            .map(|(&gv, &x)| {
                                let inner = C * (x + A * x * x * x);
                                let t = inner.tanh();
                                let sech2 = 1.0 - t * t;
                                let d_inner = C * (1.0 + 3.0 * A * x * x);
                                gv * (0.5 * (1.0 + t) + 0.5 * x * sech2 * d_inner)
                            })
                            .collect(),
                    )]
                }) as BackFn
            },
        )
    }

    /// Values clamped to [0, 1], detached from the graph. Evaluation/export
    /// only; training losses never clamp.
    pub fn clamp01_detached(&self) -> Tensor {
        let data: Vec<f64> = self.data().iter().map(|&x| x.clamp(0.0, 1.0)).collect();
        Tensor::from_vec(data, self.shape()).expect("clamped data is finite")
    }
}

/// Rebuilds the node of `out` with a backward closure that reads the op's own
/// output (exp, sqrt, softmax). Kept separate so `from_op` stays simple.
pub(crate) fn attach_with_output(
    out: &Tensor,
    back: impl Fn(&[f64], &[f64]) -> Vec<Option<Vec<f64>>> + 'static,
) {
    let mut node_slot = out.inner.node.borrow_mut();
    if let Some(node) = node_slot.as_mut() {
        let weak = out.downgrade();
        node.back = Box::new(move |g: &[f64]| {
            let out_data = Tensor::upgrade_data(&weak);
            back(&out_data, g)
        });
    }
}
