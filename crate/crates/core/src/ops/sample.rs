//! Resampling ops: bilinear upsampling, flow-guided warping, windowed local
//! correlation, and convex upsampling of coarse flow.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use crate::graph::{Graph, Var};
use crate::scalar::Scalar;
use crate::tensor::{Shape, Tensor};

impl<T: Scalar> Graph<T> {
    /// Bilinear upsampling of an `[H, W, C]` map by an integer `factor`,
    /// half-pixel convention, borders clamped.
    pub fn upsample_bilinear(&mut self, x: Var, factor: usize) -> Var {
        assert!(factor >= 1);
        let (h, w, c) = crate::tensor::hwc(self.value(x));
        let (oh, ow) = (h * factor, w * factor);
        let src = self.value(x).data();
        let inv = 1.0 / factor as f64;
        // Precompute the 1-D source taps; they repeat across rows/columns.
        let taps = |n: usize, limit: usize| -> Vec<(usize, usize, T)> {
            (0..n)
                .map(|o| {
                    let f = ((o as f64 + 0.5) * inv - 0.5).max(0.0).min(limit as f64 - 1.0);
                    let i0 = f as usize;
                    let i1 = (i0 + 1).min(limit - 1);
                    (i0, i1, T::from_f64(f - i0 as f64))
                })
                .collect()
        };
        let ytaps = taps(oh, h);
        let xtaps = taps(ow, w);
        let mut out = vec![T::ZERO; oh * ow * c];
        for oy in 0..oh {
            let (y0, y1, wy) = ytaps[oy];
            for ox in 0..ow {
                let (x0, x1, wx) = xtaps[ox];
                let d = (oy * ow + ox) * c;
                for ch in 0..c {
                    let v00 = src[(y0 * w + x0) * c + ch];
                    let v01 = src[(y0 * w + x1) * c + ch];
                    let v10 = src[(y1 * w + x0) * c + ch];
                    let v11 = src[(y1 * w + x1) * c + ch];
                    let top = v00 + (v01 - v00) * wx;
                    let bot = v10 + (v11 - v10) * wx;
                    out[d + ch] = top + (bot - top) * wy;
                }
            }
        }
        let out = Tensor::from_vec(Shape::d3(oh, ow, c), out);
        let needs = self.wants_grad(&[x]);
        let back = needs.then(|| {
            Box::new(move |g: &Tensor<T>, sink: &mut crate::graph::Gradients<T>| {
                let gd = g.data();
                let mut dx = vec![T::ZERO; h * w * c];
                for oy in 0..oh {
                    let (y0, y1, wy) = ytaps[oy];
                    for ox in 0..ow {
                        let (x0, x1, wx) = xtaps[ox];
                        let s = (oy * ow + ox) * c;
                        for ch in 0..c {
                            let gv = gd[s + ch];
                            dx[(y0 * w + x0) * c + ch] += gv * (T::ONE - wx) * (T::ONE - wy);
                            dx[(y0 * w + x1) * c + ch] += gv * wx * (T::ONE - wy);
                            dx[(y1 * w + x0) * c + ch] += gv * (T::ONE - wx) * wy;
                            dx[(y1 * w + x1) * c + ch] += gv * wx * wy;
                        }
                    }
                }
                sink.accumulate(x, Tensor::from_vec(Shape::d3(h, w, c), dx));
            }) as _
        });
        self.insert(out, needs, back)
    }

    /// Samples `src` at `(x, y) + flow[y, x]` with bilinear interpolation.
    /// Flow channels are `(u, v)` = (x-, y-displacement) in pixels at this
    /// scale. Samples outside the map contribute zero, corner by corner.
    pub fn bilinear_warp(&mut self, src: Var, flow: Var) -> Var {
        let (h, w, c) = crate::tensor::hwc(self.value(src));
        let fs = self.value(flow).shape();
        assert_eq!(fs, Shape::d3(h, w, 2), "flow must be [H, W, 2]");
        let sd = self.value(src).data();
        let fd = self.value(flow).data();
        let mut out = vec![T::ZERO; h * w * c];
        for y in 0..h {
            for x in 0..w {
                let p = y * w + x;
                let px = T::from_usize(x) + fd[p * 2];
                let py = T::from_usize(y) + fd[p * 2 + 1];
                let x0f = px.floor();
                let y0f = py.floor();
                let fx = px - x0f;
                let fy = py - y0f;
                let x0 = x0f.to_f64() as isize;
                let y0 = y0f.to_f64() as isize;
                let d = p * c;
                for (cx, cy, wgt) in corners(x0, y0, fx, fy) {
                    if cx >= 0 && cx < w as isize && cy >= 0 && cy < h as isize {
                        let s = ((cy as usize) * w + cx as usize) * c;
                        for ch in 0..c {
                            out[d + ch] += wgt * sd[s + ch];
                        }
                    }
                }
            }
        }
        let out = Tensor::from_vec(Shape::d3(h, w, c), out);
        let needs = self.wants_grad(&[src, flow]);
        let back = needs.then(|| {
            let ns = self.needs_grad(src);
            let nf = self.needs_grad(flow);
            let vsrc = self.value(src).clone();
            let vflow = self.value(flow).clone();
            Box::new(move |g: &Tensor<T>, sink: &mut crate::graph::Gradients<T>| {
                let gd = g.data();
                let sd = vsrc.data();
                let fd = vflow.data();
                let mut dsrc = if ns { vec![T::ZERO; h * w * c] } else { Vec::new() };
                let mut dflow = if nf { vec![T::ZERO; h * w * 2] } else { Vec::new() };
                for y in 0..h {
                    for x in 0..w {
                        let p = y * w + x;
                        let px = T::from_usize(x) + fd[p * 2];
                        let py = T::from_usize(y) + fd[p * 2 + 1];
                        let x0f = px.floor();
                        let y0f = py.floor();
                        let fx = px - x0f;
                        let fy = py - y0f;
                        let x0 = x0f.to_f64() as isize;
                        let y0 = y0f.to_f64() as isize;
                        // Corner values, zero outside the map.
                        let at = |cx: isize, cy: isize, ch: usize| -> T {
                            if cx >= 0 && cx < w as isize && cy >= 0 && cy < h as isize {
                                sd[((cy as usize) * w + cx as usize) * c + ch]
                            } else {
                                T::ZERO
                            }
                        };
                        let (mut du, mut dv) = (T::ZERO, T::ZERO);
                        for ch in 0..c {
                            let gv = gd[p * c + ch];
                            if ns {
                                for (cx, cy, wgt) in corners(x0, y0, fx, fy) {
                                    if cx >= 0 && cx < w as isize && cy >= 0 && cy < h as isize {
                                        dsrc[((cy as usize) * w + cx as usize) * c + ch] +=
                                            wgt * gv;
                                    }
                                }
                            }
                            if nf {
                                let s00 = at(x0, y0, ch);
                                let s10 = at(x0 + 1, y0, ch);
                                let s01 = at(x0, y0 + 1, ch);
                                let s11 = at(x0 + 1, y0 + 1, ch);
                                du += gv * ((T::ONE - fy) * (s10 - s00) + fy * (s11 - s01));
                                dv += gv * ((T::ONE - fx) * (s01 - s00) + fx * (s11 - s10));
                            }
                        }
                        if nf {
                            dflow[p * 2] = du;
                            dflow[p * 2 + 1] = dv;
                        }
                    }
                }
                if ns {
                    sink.accumulate(src, Tensor::from_vec(Shape::d3(h, w, c), dsrc));
                }
                if nf {
                    sink.accumulate(flow, Tensor::from_vec(Shape::d3(h, w, 2), dflow));
                }
            }) as _
        });
        self.insert(out, needs, back)
    }

    /// Dot products between `f1[y, x]` and `f2[y+dy, x+dx]` over a
    /// `(2r+1) x (2r+1)` window, scaled by `scale`. Channel order is
    /// row-major over `(dy, dx)`; out-of-bounds taps are zero.
    pub fn local_corr(&mut self, f1: Var, f2: Var, radius: usize, scale: T) -> Var {
        let (h, w, d) = crate::tensor::hwc(self.value(f1));
        assert_eq!(self.value(f2).shape(), Shape::d3(h, w, d), "feature maps must match");
        let side = 2 * radius + 1;
        let co = side * side;
        let f1d = self.value(f1).data();
        let f2d = self.value(f2).data();
        let mut out = vec![T::ZERO; h * w * co];
        for y in 0..h {
            for x in 0..w {
                let base1 = (y * w + x) * d;
                let obase = (y * w + x) * co;
                for (idx, (ny, nx)) in window(y, x, radius).enumerate() {
                    if ny < 0 || ny >= h as isize || nx < 0 || nx >= w as isize {
                        continue;
                    }
                    let base2 = ((ny as usize) * w + nx as usize) * d;
                    let mut acc = T::ZERO;
                    for ch in 0..d {
                        acc += f1d[base1 + ch] * f2d[base2 + ch];
                    }
                    out[obase + idx] = acc * scale;
                }
            }
        }
        let out = Tensor::from_vec(Shape::d3(h, w, co), out);
        let needs = self.wants_grad(&[f1, f2]);
        let back = needs.then(|| {
            let n1 = self.needs_grad(f1);
            let n2 = self.needs_grad(f2);
            let v1 = self.value(f1).clone();
            let v2 = self.value(f2).clone();
            Box::new(move |g: &Tensor<T>, sink: &mut crate::graph::Gradients<T>| {
                let gd = g.data();
                let f1d = v1.data();
                let f2d = v2.data();
                let mut d1 = if n1 { vec![T::ZERO; h * w * d] } else { Vec::new() };
                let mut d2 = if n2 { vec![T::ZERO; h * w * d] } else { Vec::new() };
                for y in 0..h {
                    for x in 0..w {
                        let base1 = (y * w + x) * d;
                        let obase = (y * w + x) * co;
                        for (idx, (ny, nx)) in window(y, x, radius).enumerate() {
                            if ny < 0 || ny >= h as isize || nx < 0 || nx >= w as isize {
                                continue;
                            }
                            let gv = gd[obase + idx] * scale;
                            if gv == T::ZERO {
                                continue;
                            }
                            let base2 = ((ny as usize) * w + nx as usize) * d;
                            for ch in 0..d {
                                if n1 {
                                    d1[base1 + ch] += gv * f2d[base2 + ch];
                                }
                                if n2 {
                                    d2[base2 + ch] += gv * f1d[base1 + ch];
                                }
                            }
                        }
                    }
                }
                if n1 {
                    sink.accumulate(f1, Tensor::from_vec(Shape::d3(h, w, d), d1));
                }
                if n2 {
                    sink.accumulate(f2, Tensor::from_vec(Shape::d3(h, w, d), d2));
                }
            }) as _
        });
        self.insert(out, needs, back)
    }

    /// Upsamples `[h, w, 2]` flow 8x. Each fine pixel is a convex combination
    /// of the 3x3 coarse neighborhood (border neighbors replicated), selected
    /// by its sub-pixel position from `mask` `[h, w, 64 * 9]`, and scaled by 8
    /// to convert the units to fine-grid pixels. Mask channel layout is
    /// `sub * 9 + neighbor` with both indices row-major.
    pub fn convex_upsample(&mut self, flow: Var, mask: Var) -> Var {
        let (h, w, fc) = crate::tensor::hwc(self.value(flow));
        assert_eq!(fc, 2, "coarse flow must be [h, w, 2]");
        let ms = self.value(mask).shape();
        assert_eq!(ms, Shape::d3(h, w, 576), "mask must be [h, w, 576], got {:?}", ms);
        let (oh, ow) = (8 * h, 8 * w);
        let eight = T::from_f64(8.0);
        let fd = self.value(flow).data();
        let md = self.value(mask).data();
        let mut out = vec![T::ZERO; oh * ow * 2];
        for i in 0..h {
            for j in 0..w {
                let mbase = (i * w + j) * 576;
                for di in 0..8 {
                    for dj in 0..8 {
                        let sub = di * 8 + dj;
                        let (mut u, mut v) = (T::ZERO, T::ZERO);
                        for (n, (ni, nj)) in neighborhood(i, j, h, w).enumerate() {
                            let wgt = md[mbase + sub * 9 + n];
                            let f = (ni * w + nj) * 2;
                            u += wgt * fd[f];
                            v += wgt * fd[f + 1];
                        }
                        let o = ((8 * i + di) * ow + (8 * j + dj)) * 2;
                        out[o] = eight * u;
                        out[o + 1] = eight * v;
                    }
                }
            }
        }
        let out = Tensor::from_vec(Shape::d3(oh, ow, 2), out);
        let needs = self.wants_grad(&[flow, mask]);
        let back = needs.then(|| {
            let nf = self.needs_grad(flow);
            let nm = self.needs_grad(mask);
            let vflow = self.value(flow).clone();
            let vmask = self.value(mask).clone();
            Box::new(move |g: &Tensor<T>, sink: &mut crate::graph::Gradients<T>| {
                let gd = g.data();
                let fd = vflow.data();
                let md = vmask.data();
                let mut dflow = if nf { vec![T::ZERO; h * w * 2] } else { Vec::new() };
                let mut dmask = if nm { vec![T::ZERO; h * w * 576] } else { Vec::new() };
                for i in 0..h {
                    for j in 0..w {
                        let mbase = (i * w + j) * 576;
                        for di in 0..8 {
                            for dj in 0..8 {
                                let sub = di * 8 + dj;
                                let o = ((8 * i + di) * ow + (8 * j + dj)) * 2;
                                let gu = gd[o] * eight;
                                let gv = gd[o + 1] * eight;
                                for (n, (ni, nj)) in neighborhood(i, j, h, w).enumerate() {
                                    let f = (ni * w + nj) * 2;
                                    let wgt = md[mbase + sub * 9 + n];
                                    if nf {
                                        dflow[f] += wgt * gu;
                                        dflow[f + 1] += wgt * gv;
                                    }
                                    if nm {
                                        dmask[mbase + sub * 9 + n] +=
                                            gu * fd[f] + gv * fd[f + 1];
                                    }
                                }
                            }
                        }
                    }
                }
                if nf {
                    sink.accumulate(flow, Tensor::from_vec(Shape::d3(h, w, 2), dflow));
                }
                if nm {
                    sink.accumulate(mask, Tensor::from_vec(Shape::d3(h, w, 576), dmask));
                }
            }) as _
        });
        self.insert(out, needs, back)
    }
}

#[inline]
fn corners<T: Scalar>(x0: isize, y0: isize, fx: T, fy: T) -> [(isize, isize, T); 4] {
    [
        (x0, y0, (T::ONE - fx) * (T::ONE - fy)),
        (x0 + 1, y0, fx * (T::ONE - fy)),
        (x0, y0 + 1, (T::ONE - fx) * fy),
        (x0 + 1, y0 + 1, fx * fy),
    ]
}

/// Row-major `(dy, dx)` window positions around `(y, x)`.
fn window(y: usize, x: usize, radius: usize) -> impl Iterator<Item = (isize, isize)> {
    let r = radius as isize;
    (-r..=r).flat_map(move |dy| (-r..=r).map(move |dx| (y as isize + dy, x as isize + dx)))
}

/// Row-major 3x3 neighborhood with border clamping.
fn neighborhood(i: usize, j: usize, h: usize, w: usize) -> impl Iterator<Item = (usize, usize)> {
    (-1isize..=1).flat_map(move |dy| {
        (-1isize..=1).map(move |dx| {
            let ni = (i as isize + dy).clamp(0, h as isize - 1) as usize;
            let nj = (j as isize + dx).clamp(0, w as isize - 1) as usize;
            (ni, nj)
        })
    })
}
