//! 2-D convolution (cross-correlation) on channel-last images.

use super::{BackFn, Tensor};
use crate::error::{Result, TapError};

fn out_dim(size: usize, k: usize, stride: usize, pad: usize) -> usize {
    (size + 2 * pad - k) / stride + 1
}

impl Tensor {
    /// x: [H, W, Cin], w: [kh, kw, Cin, Cout], zero padding.
    ///
    /// Odd kernel sizes only, so `pad = k/2` preserves spatial dims at
    /// stride 1.
    pub fn conv2d(&self, weight: &Tensor, stride: usize, pad: usize) -> Result<Tensor> {
        if self.rank() != 3 || weight.rank() != 4 {
            return Err(TapError::Shape {
                op: "conv2d",
                lhs: self.shape().to_vec(),
                rhs: weight.shape().to_vec(),
            });
        }
        let (h, w, cin) = (self.shape()[0], self.shape()[1], self.shape()[2]);
        let (kh, kw, wcin, cout) = (
            weight.shape()[0],
            weight.shape()[1],
            weight.shape()[2],
            weight.shape()[3],
        );
        if wcin != cin {
            return Err(TapError::Shape {
                op: "conv2d",
                lhs: self.shape().to_vec(),
                rhs: weight.shape().to_vec(),
            });
        }
        if kh % 2 == 0 || kw % 2 == 0 {
            return Err(TapError::config("kernel", "kernel sizes must be odd"));
        }
        if stride == 0 {
            return Err(TapError::config("stride", "stride must be >= 1"));
        }
        if h + 2 * pad < kh || w + 2 * pad < kw {
            return Err(TapError::config(
                "pad",
                "padded input smaller than the kernel",
            ));
        }
        let (oh, ow) = (out_dim(h, kh, stride, pad), out_dim(w, kw, stride, pad));

        let x = self.data();
        let wt = weight.data();
        let mut data = vec![0.0; oh * ow * cout];
        for oy in 0..oh {
            for ox in 0..ow {
                let out_row = &mut data[(oy * ow + ox) * cout..(oy * ow + ox + 1) * cout];
                for ky in 0..kh {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for kx in 0..kw {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        let x_row = &x[(iy as usize * w + ix as usize) * cin..][..cin];
                        let w_base = (ky * kw + kx) * cin * cout;
                        for (ci, &xv) in x_row.iter().enumerate() {
                            let w_row = &wt[w_base + ci * cout..w_base + (ci + 1) * cout];
                            for (ov, &wv) in out_row.iter_mut().zip(w_row) {
                                *ov += xv * wv;
                            }
                        }
                    }
                }
            }
        }

        let (xc, wc) = (self.clone(), weight.clone());
        Tensor::from_op(
            "conv2d",
            vec![oh, ow, cout],
            data,
            vec![self.clone(), weight.clone()],
            move || {
                Box::new(move |g: &[f64]| {
                    let x = xc.data();
                    let wt = wc.data();
                    let mut dx = if xc.tracked() {
                        Some(vec![0.0; xc.len()])
                    } else {
                        None
                    };
                    let mut dw = if wc.tracked() {
                        Some(vec![0.0; wc.len()])
                    } else {
                        None
                    };
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let g_row = &g[(oy * ow + ox) * cout..(oy * ow + ox + 1) * cout];
                            for ky in 0..kh {
                                let iy = (oy * stride + ky) as isize - pad as isize;
                                if iy < 0 || iy >= h as isize {
                                    continue;
                                }
                                for kx in 0..kw {
                                    let ix = (ox * stride + kx) as isize - pad as isize;
                                    if ix < 0 || ix >= w as isize {
                                        continue;
                                    }
                                    let x_off = (iy as usize * w + ix as usize) * cin;
                                    let w_base = (ky * kw + kx) * cin * cout;
                                    if let Some(dx) = dx.as_mut() {
                                        for ci in 0..cin {
                                            let w_row =
                                                &wt[w_base + ci * cout..w_base + (ci + 1) * cout];
                                            let mut acc = 0.0;
                                            for (&gv, &wv) in g_row.iter().zip(w_row) {
                                                acc += gv * wv;
                                            }
                                            dx[x_off + ci] += acc;
                                        }
                                    }
                                    if let Some(dw) = dw.as_mut() {
                                        for ci in 0..cin {
                                            let xv = x[x_off + ci];
                                            let dw_row = &mut dw
                                                [w_base + ci * cout..w_base + (ci + 1) * cout];
                                            for (dv, &gv) in dw_row.iter_mut().zip(g_row) {
                                                *dv += xv * gv;
                                            }
                                        }
                                    }
                                }
                            }
                        }
                    }
                    vec![dx, dw]
                }) as BackFn
            },
        )
    }
}
