//! Matrix multiplication over the trailing two axes, with broadcastable
//! batch dimensions.

use super::{BackFn, Tensor};
use crate::error::{Result, TapError};

/// C[m,n] += A[m,k] * B[k,n]; row-axpy form so the inner loop vectorizes and
/// the accumulation order per output element is fixed.
pub(crate) fn gemm_acc(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, c: &mut [f64]) {
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let c_row = &mut c[i * n..(i + 1) * n];
        for (kk, &aik) in a_row.iter().enumerate() {
            let b_row = &b[kk * n..(kk + 1) * n];
            for (cv, &bv) in c_row.iter_mut().zip(b_row) {
                *cv += aik * bv;
            }
        }
    }
}

/// dB[k,n] += A^T[k,m] * G[m,n] without materializing the transpose.
fn gemm_at_acc(a: &[f64], g: &[f64], m: usize, k: usize, n: usize, db: &mut [f64]) {
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let g_row = &g[i * n..(i + 1) * n];
        for (kk, &aik) in a_row.iter().enumerate() {
            let db_row = &mut db[kk * n..(kk + 1) * n];
            for (dv, &gv) in db_row.iter_mut().zip(g_row) {
                *dv += aik * gv;
            }
        }
    }
}

/// dA[m,k] += G[m,n] * B^T[n,k]; transposes B into scratch first so the
/// inner loop stays contiguous.
fn gemm_bt_acc(g: &[f64], b: &[f64], m: usize, k: usize, n: usize, da: &mut [f64]) {
    let mut bt = vec![0.0; n * k];
    for kk in 0..k {
        for j in 0..n {
            bt[j * k + kk] = b[kk * n + j];
        }
    }
    gemm_acc(g, &bt, m, n, k, da);
}

struct BatchPlan {
    batch: Vec<usize>,
    /// Per-batch element offsets (in matrices) into a and b.
    offsets: Vec<(usize, usize)>,
    m: usize,
    k: usize,
    n: usize,
}

fn plan(a: &Tensor, b: &Tensor) -> Result<BatchPlan> {
    if a.rank() < 2 || b.rank() < 2 {
        return Err(TapError::Shape {
            op: "matmul",
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    let (m, ka) = (a.shape()[a.rank() - 2], a.shape()[a.rank() - 1]);
    let (kb, n) = (b.shape()[b.rank() - 2], b.shape()[b.rank() - 1]);
    if ka != kb {
        return Err(TapError::Shape {
            op: "matmul",
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    let a_batch = &a.shape()[..a.rank() - 2];
    let b_batch = &b.shape()[..b.rank() - 2];
    let batch = super::ops::broadcast_shapes("matmul", a_batch, b_batch)?;

    let count: usize = batch.iter().product();
    let mut offsets = Vec::with_capacity(count);
    let rank = batch.len();
    let pad = |dims: &[usize]| {
        let mut v = vec![1; rank];
        v[rank - dims.len()..].copy_from_slice(dims);
        v
    };
    let (a_dims, b_dims) = (pad(a_batch), pad(b_batch));
    let a_strides = batch_strides(&a_dims);
    let b_strides = batch_strides(&b_dims);
    let mut idx = vec![0usize; rank];
    for _ in 0..count {
        let mut ao = 0;
        let mut bo = 0;
        for d in 0..rank {
            if a_dims[d] != 1 {
                ao += idx[d] * a_strides[d];
            }
            if b_dims[d] != 1 {
                bo += idx[d] * b_strides[d];
            }
        }
        offsets.push((ao, bo));
        for d in (0..rank).rev() {
            idx[d] += 1;
            if idx[d] < batch[d] {
                break;
            }
            idx[d] = 0;
        }
    }
    Ok(BatchPlan {
        batch,
        offsets,
        m,
        k: ka,
        n,
    })
}

fn batch_strides(dims: &[usize]) -> Vec<usize> {
    let mut strides = vec![1; dims.len()];
    for i in (0..dims.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * dims[i + 1];
    }
    strides
}

impl Tensor {
    /// Batched matrix product over the trailing two axes.
    ///
    /// The gradient rules are d(AB) = G·Bᵀ for A and Aᵀ·G for B, summed over
    /// broadcast batch dimensions.
    pub fn matmul(&self, rhs: &Tensor) -> Result<Tensor> {
        let p = plan(self, rhs)?;
        let (m, k, n) = (p.m, p.k, p.n);
        let count = p.offsets.len();
        let mut out_shape = p.batch.clone();
        out_shape.push(m);
        out_shape.push(n);
        let mut data = vec![0.0; count * m * n];
        let (ad, bd) = (self.data(), rhs.data());
        for (i, &(ao, bo)) in p.offsets.iter().enumerate() {
            gemm_acc(
                &ad[ao * m * k..(ao + 1) * m * k],
                &bd[bo * k * n..(bo + 1) * k * n],
                m,
                k,
                n,
                &mut data[i * m * n..(i + 1) * m * n],
            );
        }

        let (ac, bc) = (self.clone(), rhs.clone());
        let offsets = p.offsets;
        Tensor::from_op(
            "matmul",
            out_shape,
            data,
            vec![self.clone(), rhs.clone()],
            move || {
                Box::new(move |g: &[f64]| {
                    let mut da = if ac.tracked() {
                        Some(vec![0.0; ac.len()])
                    } else {
                        None
                    };
                    let mut db = if bc.tracked() {
                        Some(vec![0.0; bc.len()])
                    } else {
                        None
                    };
                    let (ad, bd) = (ac.data(), bc.data());
                    for (i, &(ao, bo)) in offsets.iter().enumerate() {
                        let g_slice = &g[i * m * n..(i + 1) * m * n];
                        if let Some(da) = da.as_mut() {
                            gemm_bt_acc(
                                g_slice,
                                &bd[bo * k * n..(bo + 1) * k * n],
                                m,
                                k,
                                n,
                                &mut da[ao * m * k..(ao + 1) * m * k],
                            );
                        }
                        if let Some(db) = db.as_mut() {
                            gemm_at_acc(
                                &ad[ao * m * k..(ao + 1) * m * k],
                                g_slice,
                                m,
                                k,
                                n,
                                &mut db[bo * k * n..(bo + 1) * k * n],
                            );
                        }
                    }
                    vec![da, db]
                }) as BackFn
            },
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Triple-loop scalar reference used as the independent oracle.
    fn matmul_oracle(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                let mut acc = 0.0;
                for p in 0..k {
                    acc += a[i * k + p] * b[p * n + j];
                }
                c[i * n + j] = acc;
            }
        }
        c
    }

    #[test]
    fn identity_times_any() {
        let eye = Tensor::from_vec(vec![1.0, 0.0, 0.0, 1.0], &[2, 2]).unwrap();
        let m = Tensor::from_vec(vec![3.0, -1.0, 7.5, 2.0], &[2, 2]).unwrap();
        assert_eq!(eye.matmul(&m).unwrap().data(), m.data());
    }

    #[test]
    fn known_2x2_product() {
        let a = Tensor::from_vec(vec![1.0, 2.0, 3.0, 4.0], &[2, 2]).unwrap();
        let b = Tensor::from_vec(vec![5.0, 6.0, 7.0, 8.0], &[2, 2]).unwrap();
        // Frozen from the triple-loop oracle.
        assert_eq!(a.matmul(&b).unwrap().data(), &[19.0, 22.0, 43.0, 50.0]);
        assert_eq!(
            matmul_oracle(a.data(), b.data(), 2, 2, 2),
            vec![19.0, 22.0, 43.0, 50.0]
        );
    }

    #[test]
    fn random_rectangular_matches_oracle() {
        let mut rng = crate::util::rng_for(11, "matmul-test");
        use rand::Rng;
        let (m, k, n) = (4, 5, 3);
        let a: Vec<f64> = (0..m * k).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..k * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let ta = Tensor::from_vec(a.clone(), &[m, k]).unwrap();
        let tb = Tensor::from_vec(b.clone(), &[k, n]).unwrap();
        let c = ta.matmul(&tb).unwrap();
        let oracle = matmul_oracle(&a, &b, m, k, n);
        for (x, y) in c.data().iter().zip(&oracle) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn batched_matches_per_slice_oracle() {
        let mut rng = crate::util::rng_for(12, "matmul-batch");
        use rand::Rng;
        let (b, m, k, n) = (3, 2, 4, 2);
        let a: Vec<f64> = (0..b * m * k).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let w: Vec<f64> = (0..b * k * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let ta = Tensor::from_vec(a.clone(), &[b, m, k]).unwrap();
        let tw = Tensor::from_vec(w.clone(), &[b, k, n]).unwrap();
        let c = ta.matmul(&tw).unwrap();
        assert_eq!(c.shape(), &[b, m, n]);
        for i in 0..b {
            let oracle = matmul_oracle(&a[i * m * k..(i + 1) * m * k], &w[i * k * n..(i + 1) * k * n], m, k, n);
            for (x, y) in c.data()[i * m * n..(i + 1) * m * n].iter().zip(&oracle) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn weight_broadcast_over_batch() {
        let x = Tensor::from_vec((0..12).map(|v| v as f64).collect(), &[2, 3, 2]).unwrap();
        let w = Tensor::from_vec(vec![1.0, 0.0, 0.0, 1.0], &[2, 2]).unwrap();
        let y = x.matmul(&w).unwrap();
        assert_eq!(y.shape(), &[2, 3, 2]);
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn inner_dim_mismatch_reports_shapes() {
        let a = Tensor::from_vec(vec![0.0; 6], &[2, 3]).unwrap();
        let b = Tensor::from_vec(vec![0.0; 8], &[4, 2]).unwrap();
        let err = a.matmul(&b).unwrap_err();
        assert!(err.to_string().contains("[2, 3]"));
    }

    #[test]
    fn grad_matches_finite_differences() {
        let report = crate::tensor::check::grad_check(
            |inputs| inputs[0].matmul(&inputs[1])?.sum_all(),
            &[
                (vec![2, 3], vec![0.3, -0.2, 0.5, 1.0, -0.7, 0.1]),
                (vec![3, 2], vec![0.9, 0.4, -0.6, 0.2, 0.8, -0.3]),
            ],
        );
        assert!(report.max_rel_err < 1e-6, "rel err {}", report.max_rel_err);
    }
}
