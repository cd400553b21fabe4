//! Group and layer normalization.
//!
//! Group normalization is used in the convolutional blocks so single-image
//! inference sees the same statistics as training (no batch coupling); layer
//! normalization is used inside the transformer layers.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use crate::graph::{Graph, Var};
use crate::scalar::Scalar;
use crate::tensor::{Shape, Tensor};

pub const NORM_EPS: f64 = 1e-5;

impl<T: Scalar> Graph<T> {
    /// Normalizes an `[H, W, C]` map over each of `groups` channel groups,
    /// then applies a per-channel affine transform.
    pub fn group_norm(&mut self, x: Var, gamma: Var, beta: Var, groups: usize) -> Var {
        let (h, w, c) = crate::tensor::hwc(self.value(x));
        assert!(groups > 0 && c % groups == 0, "channels {c} not divisible into {groups} groups");
        assert_eq!(self.value(gamma).shape(), Shape::d1(c));
        assert_eq!(self.value(beta).shape(), Shape::d1(c));
        let gs = c / groups;
        let n_per_group = h * w * gs;
        let eps = T::from_f64(NORM_EPS);
        let inv_n = T::ONE / T::from_usize(n_per_group);

        let xd = self.value(x).data();
        let gd = self.value(gamma).data();
        let bd = self.value(beta).data();
        let mut xhat = vec![T::ZERO; h * w * c];
        let mut inv_std = vec![T::ZERO; groups];
        for g in 0..groups {
            let c0 = g * gs;
            let mut mean = T::ZERO;
            for p in 0..h * w {
                for ci in 0..gs {
                    mean += xd[p * c + c0 + ci];
                }
            }
            mean *= inv_n;
            let mut var = T::ZERO;
            for p in 0..h * w {
                for ci in 0..gs {
                    let d = xd[p * c + c0 + ci] - mean;
                    var += d * d;
                }
            }
            var *= inv_n;
            let istd = T::ONE / (var + eps).sqrt();
            inv_std[g] = istd;
            for p in 0..h * w {
                for ci in 0..gs {
                    let i = p * c + c0 + ci;
                    xhat[i] = (xd[i] - mean) * istd;
                }
            }
        }
        let mut out = Vec::with_capacity(h * w * c);
        for p in 0..h * w {
            for ci in 0..c {
                out.push(gd[ci] * xhat[p * c + ci] + bd[ci]);
            }
        }
        let out = Tensor::from_vec(Shape::d3(h, w, c), out);
        let xhat = Tensor::from_vec(Shape::d3(h, w, c), xhat);

        let needs = self.wants_grad(&[x, gamma, beta]);
        let back = needs.then(|| {
            let nx = self.needs_grad(x);
            let ng = self.needs_grad(gamma);
            let nb = self.needs_grad(beta);
            let vgamma = self.value(gamma).clone();
            Box::new(move |g: &Tensor<T>, sink: &mut crate::graph::Gradients<T>| {
                let gd = g.data();
                let xh = xhat.data();
                let gm = vgamma.data();
                if ng || nb {
                    let mut dgamma = vec![T::ZERO; c];
                    let mut dbeta = vec![T::ZERO; c];
                    for p in 0..h * w {
                        for ci in 0..c {
                            let gi = gd[p * c + ci];
                            dgamma[ci] += gi * xh[p * c + ci];
                            dbeta[ci] += gi;
                        }
                    }
                    if ng {
                        sink.accumulate(gamma, Tensor::from_vec(Shape::d1(c), dgamma));
                    }
                    if nb {
                        sink.accumulate(beta, Tensor::from_vec(Shape::d1(c), dbeta));
                    }
                }
                if nx {
                    let mut dx = vec![T::ZERO; h * w * c];
                    for grp in 0..groups {
                        let c0 = grp * gs;
                        let mut sum_dxh = T::ZERO;
                        let mut sum_dxh_xh = T::ZERO;
                        for p in 0..h * w {
                            for ci in 0..gs {
                                let i = p * c + c0 + ci;
                                let dxh = gd[i] * gm[c0 + ci];
                                sum_dxh += dxh;
                                sum_dxh_xh += dxh * xh[i];
                            }
                        }
                        let mean_dxh = sum_dxh * inv_n;
                        let mean_dxh_xh = sum_dxh_xh * inv_n;
                        for p in 0..h * w {
                            for ci in 0..gs {
                                let i = p * c + c0 + ci;
                                let dxh = gd[i] * gm[c0 + ci];
                                dx[i] = (dxh - mean_dxh - xh[i] * mean_dxh_xh) * inv_std[grp];
                            }
                        }
                    }
                    sink.accumulate(x, Tensor::from_vec(Shape::d3(h, w, c), dx));
                }
            }) as _
        });
        self.insert(out, needs, back)
    }

    /// Normalizes each row of an `[L, D]` matrix, then applies a per-column
    /// affine transform.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Var {
        let xs = self.value(x).shape();
        assert_eq!(xs.rank(), 2, "layer_norm expects [L, D]");
        let (l, d) = (xs.dim(0), xs.dim(1));
        assert_eq!(self.value(gamma).shape(), Shape::d1(d));
        assert_eq!(self.value(beta).shape(), Shape::d1(d));
        let eps = T::from_f64(NORM_EPS);
        let inv_d = T::ONE / T::from_usize(d);

        let xd = self.value(x).data();
        let gmd = self.value(gamma).data();
        let btd = self.value(beta).data();
        let mut xhat = vec![T::ZERO; l * d];
        let mut inv_std = vec![T::ZERO; l];
        let mut out = vec![T::ZERO; l * d];
        for r in 0..l {
            let row = &xd[r * d..(r + 1) * d];
            let mut mean = T::ZERO;
            for &v in row {
                mean += v;
            }
            mean *= inv_d;
            let mut var = T::ZERO;
            for &v in row {
                let dv = v - mean;
                var += dv * dv;
            }
            var *= inv_d;
            let istd = T::ONE / (var + eps).sqrt();
            inv_std[r] = istd;
            for (i, &v) in row.iter().enumerate() {
                let xh = (v - mean) * istd;
                xhat[r * d + i] = xh;
                out[r * d + i] = gmd[i] * xh + btd[i];
            }
        }
        let out = Tensor::from_vec(xs, out);
        let xhat = Tensor::from_vec(xs, xhat);

        let needs = self.wants_grad(&[x, gamma, beta]);
        let back = needs.then(|| {
            let nx = self.needs_grad(x);
            let ng = self.needs_grad(gamma);
            let nb = self.needs_grad(beta);
            let vgamma = self.value(gamma).clone();
            Box::new(move |g: &Tensor<T>, sink: &mut crate::graph::Gradients<T>| {
                let gd = g.data();
                let xh = xhat.data();
                let gm = vgamma.data();
                if ng || nb {
                    let mut dgamma = vec![T::ZERO; d];
                    let mut dbeta = vec![T::ZERO; d];
                    for r in 0..l {
                        for i in 0..d {
                            let gv = gd[r * d + i];
                            dgamma[i] += gv * xh[r * d + i];
                            dbeta[i] += gv;
                        }
                    }
                    if ng {
                        sink.accumulate(gamma, Tensor::from_vec(Shape::d1(d), dgamma));
                    }
                    if nb {
                        sink.accumulate(beta, Tensor::from_vec(Shape::d1(d), dbeta));
                    }
                }
                if nx {
                    let mut dx = vec![T::ZERO; l * d];
                    for r in 0..l {
                        let mut sum_dxh = T::ZERO;
                        let mut sum_dxh_xh = T::ZERO;
                        for i in 0..d {
                            let dxh = gd[r * d + i] * gm[i];
                            sum_dxh += dxh;
                            sum_dxh_xh += dxh * xh[r * d + i];
                        }
                        let mean_dxh = sum_dxh * inv_d;
                        let mean_dxh_xh = sum_dxh_xh * inv_d;
                        for i in 0..d {
                            let dxh = gd[r * d + i] * gm[i];
                            dx[r * d + i] =
                                (dxh - mean_dxh - xh[r * d + i] * mean_dxh_xh) * inv_std[r];
                        }
                    }
                    sink.accumulate(x, Tensor::from_vec(xs, dx));
                }
            }) as _
        });
        self.insert(out, needs, back)
    }
}
