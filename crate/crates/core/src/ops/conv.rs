//! 2-D convolution with zero padding on channels-last maps.
//!
//! Activations are `[H, W, C_in]`, weights `[kh, kw, C_in, C_out]`. The inner
//! loop runs over output channels so both the weight row and the accumulator
//! are contiguous.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use crate::graph::{Graph, Var};
use crate::scalar::Scalar;
use crate::tensor::{Shape, Tensor};

pub(crate) fn conv_out_dim(input: usize, k: usize, stride: usize, pad: usize) -> usize {
    assert!(input + 2 * pad >= k, "kernel larger than padded input");
    (input + 2 * pad - k) / stride + 1
}

#[allow(clippy::too_many_arguments)]
fn conv_forward<T: Scalar>(
    x: &[T],
    w: &[T],
    b: &[T],
    h: usize,
    wd: usize,
    cin: usize,
    cout: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
) -> (Vec<T>, usize, usize) {
    let oh = conv_out_dim(h, kh, stride, pad);
    let ow = conv_out_dim(wd, kw, stride, pad);
    let mut out = vec![T::ZERO; oh * ow * cout];
    let mut acc = vec![T::ZERO; cout];
    for oy in 0..oh {
        for ox in 0..ow {
            acc.copy_from_slice(b);
            for ky in 0..kh {
                let iy = (oy * stride + ky) as isize - pad as isize;
                if iy < 0 || iy >= h as isize {
                    continue;
                }
                for kx in 0..kw {
                    let ix = (ox * stride + kx) as isize - pad as isize;
                    if ix < 0 || ix >= wd as isize {
                        continue;
                    }
                    let src = &x[((iy as usize) * wd + ix as usize) * cin..][..cin];
                    let wbase = ((ky * kw + kx) * cin) * cout;
                    for (ci, &v) in src.iter().enumerate() {
                        let wrow = &w[wbase + ci * cout..][..cout];
                        for (a, &wv) in acc.iter_mut().zip(wrow) {
                            *a += v * wv;
                        }
                    }
                }
            }
            out[(oy * ow + ox) * cout..][..cout].copy_from_slice(&acc);
        }
    }
    (out, oh, ow)
}

impl<T: Scalar> Graph<T> {
    /// Zero-padded strided convolution: `[H, W, C_in] -> [H', W', C_out]`.
    pub fn conv2d(&mut self, x: Var, weight: Var, bias: Var, stride: usize, pad: usize) -> Var {
        let (h, w, cin) = crate::tensor::hwc(self.value(x));
        let ws = self.value(weight).shape();
        assert_eq!(ws.rank(), 4, "conv weight must be [kh, kw, c_in, c_out]");
        let (kh, kw, wcin, cout) = (ws.dim(0), ws.dim(1), ws.dim(2), ws.dim(3));
        assert_eq!(wcin, cin, "conv channel mismatch: input {cin}, weight {wcin}");
        assert_eq!(self.value(bias).shape(), Shape::d1(cout));
        assert!(stride > 0);

        let (out, oh, ow) = conv_forward(
            self.value(x).data(),
            self.value(weight).data(),
            self.value(bias).data(),
            h,
            w,
            cin,
            cout,
            kh,
            kw,
            stride,
            pad,
        );
        let out = Tensor::from_vec(Shape::d3(oh, ow, cout), out);
        let needs = self.wants_grad(&[x, weight, bias]);
        let back = needs.then(|| {
            let nx = self.needs_grad(x);
            let nw = self.needs_grad(weight);
            let nb = self.needs_grad(bias);
            let vx = self.value(x).clone();
            let vw = self.value(weight).clone();
            Box::new(move |g: &Tensor<T>, sink: &mut crate::graph::Gradients<T>| {
                let gd = g.data();
                let xd = vx.data();
                let wd_ = vw.data();
                let mut dx = if nx { vec![T::ZERO; h * w * cin] } else { Vec::new() };
                let mut dw = if nw {
                    vec![T::ZERO; kh * kw * cin * cout]
                } else {
                    Vec::new()
                };
                let mut db = if nb { vec![T::ZERO; cout] } else { Vec::new() };
                for oy in 0..oh {
                    for ox in 0..ow {
                        let grow = &gd[(oy * ow + ox) * cout..][..cout];
                        if nb {
                            for (d, &gv) in db.iter_mut().zip(grow) {
                                *d += gv;
                            }
                        }
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
                                let pix = (iy as usize) * w + ix as usize;
                                let wbase = ((ky * kw + kx) * cin) * cout;
                                for ci in 0..cin {
                                    let xv = xd[pix * cin + ci];
                                    let wrow = &wd_[wbase + ci * cout..][..cout];
                                    if nw {
                                        let dwrow = &mut dw[wbase + ci * cout..][..cout];
                                        for (d, &gv) in dwrow.iter_mut().zip(grow) {
                                            *d += xv * gv;
                                        }
                                    }
                                    if nx {
                                        let mut acc = T::ZERO;
                                        for (&wv, &gv) in wrow.iter().zip(grow) {
                                            acc += wv * gv;
                                        }
                                        dx[pix * cin + ci] += acc;
                                    }
                                }
                            }
                        }
                    }
                }
                if nx {
                    sink.accumulate(x, Tensor::from_vec(Shape::d3(h, w, cin), dx));
                }
                if nw {
                    sink.accumulate(weight, Tensor::from_vec(Shape::d4(kh, kw, cin, cout), dw));
                }
                if nb {
                    sink.accumulate(bias, Tensor::from_vec(Shape::d1(cout), db));
                }
            }) as _
        });
        self.insert(out, needs, back)
    }
}
