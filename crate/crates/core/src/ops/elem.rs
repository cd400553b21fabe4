//! Elementwise and structural ops: arithmetic, activation, reductions,
//! reshape, concat, crop.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use crate::graph::{Graph, Var};
use crate::scalar::Scalar;
use crate::tensor::{Shape, Tensor};

impl<T: Scalar> Graph<T> {
    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).zip(self.value(b), |x, y| x + y);
        let needs = self.wants_grad(&[a, b]);
        let back = needs.then(|| {
            let (na, nb) = (self.needs_grad(a), self.needs_grad(b));
            Box::new(move |g: &Tensor<T>, sink: &mut crate::graph::Gradients<T>| {
                if na {
                    sink.accumulate(a, g.clone());
                }
                if nb {
                    sink.accumulate(b, g.clone());
                }
            }) as _
        });
        self.insert(out, needs, back)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).zip(self.value(b), |x, y| x - y);
        let needs = self.wants_grad(&[a, b]);
        let back = needs.then(|| {
            let (na, nb) = (self.needs_grad(a), self.needs_grad(b));
            Box::new(move |g: &Tensor<T>, sink: &mut crate::graph::Gradients<T>| {
                if na {
                    sink.accumulate(a, g.clone());
                }
                if nb {
                    sink.accumulate(b, g.map(|x| -x));
                }
            }) as _
        });
        self.insert(out, needs, back)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).zip(self.value(b), |x, y| x * y);
        let needs = self.wants_grad(&[a, b]);
        let back = needs.then(|| {
            let (na, nb) = (self.needs_grad(a), self.needs_grad(b));
            let (va, vb) = (self.value(a).clone(), self.value(b).clone());
            Box::new(move |g: &Tensor<T>, sink: &mut crate::graph::Gradients<T>| {
                if na {
                    sink.accumulate(a, g.zip(&vb, |gi, y| gi * y));
                }
                if nb {
                    sink.accumulate(b, g.zip(&va, |gi, x| gi * x));
                }
            }) as _
        });
        self.insert(out, needs, back)
    }

    pub fn scale(&mut self, a: Var, c: T) -> Var {
        let out = self.value(a).map(|x| x * c);
        let needs = self.wants_grad(&[a]);
        let back = needs.then(|| {
            Box::new(move |g: &Tensor<T>, sink: &mut crate::graph::Gradients<T>| {
                sink.accumulate(a, g.map(|x| x * c));
            }) as _
        });
        self.insert(out, needs, back)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| x.max(T::ZERO));
        let needs = self.wants_grad(&[a]);
        let back = needs.then(|| {
            let va = self.value(a).clone();
            Box::new(move |g: &Tensor<T>, sink: &mut crate::graph::Gradients<T>| {
                sink.accumulate(
                    a,
                    g.zip(&va, |gi, x| if x > T::ZERO { gi } else { T::ZERO }),
                );
            }) as _
        });
        self.insert(out, needs, back)
    }

    pub fn abs(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| x.abs());
        let needs = self.wants_grad(&[a]);
        let back = needs.then(|| {
            let va = self.value(a).clone();
            Box::new(move |g: &Tensor<T>, sink: &mut crate::graph::Gradients<T>| {
                sink.accumulate(
                    a,
                    g.zip(&va, |gi, x| {
                        if x > T::ZERO {
                            gi
                        } else if x < T::ZERO {
                            -gi
                        } else {
                            T::ZERO
                        }
                    }),
                );
            }) as _
        });
        self.insert(out, needs, back)
    }

    /// Sum of all elements, producing a single-element tensor.
    pub fn sum_all(&mut self, a: Var) -> Var {
        let total: T = self.value(a).data().iter().copied().sum();
        let needs = self.wants_grad(&[a]);
        let shape = self.value(a).shape();
        let back = needs.then(|| {
            Box::new(move |g: &Tensor<T>, sink: &mut crate::graph::Gradients<T>| {
                sink.accumulate(a, Tensor::full(shape, g.item()));
            }) as _
        });
        self.insert(Tensor::scalar(total), needs, back)
    }

    /// Multiplies an `[H, W, C]` map by a per-pixel `[H, W, 1]` mask.
    pub fn mul_mask(&mut self, x: Var, mask: Var) -> Var {
        let (h, w, c) = crate::tensor::hwc(self.value(x));
        let ms = self.value(mask).shape();
        assert_eq!(ms, Shape::d3(h, w, 1), "mask must be [H, W, 1]");
        let xd = self.value(x).data();
        let md = self.value(mask).data();
        let mut out = Vec::with_capacity(h * w * c);
        for p in 0..h * w {
            let m = md[p];
            for ch in 0..c {
                out.push(xd[p * c + ch] * m);
            }
        }
        let out = Tensor::from_vec(Shape::d3(h, w, c), out);
        let needs = self.wants_grad(&[x, mask]);
        let back = needs.then(|| {
            let (nx, nm) = (self.needs_grad(x), self.needs_grad(mask));
            let vx = self.value(x).clone();
            let vm = self.value(mask).clone();
            Box::new(move |g: &Tensor<T>, sink: &mut crate::graph::Gradients<T>| {
                let gd = g.data();
                if nx {
                    let md = vm.data();
                    let mut dx = Vec::with_capacity(h * w * c);
                    for p in 0..h * w {
                        for ch in 0..c {
                            dx.push(gd[p * c + ch] * md[p]);
                        }
                    }
                    sink.accumulate(x, Tensor::from_vec(Shape::d3(h, w, c), dx));
                }
                if nm {
                    let xd = vx.data();
                    let mut dm = vec![T::ZERO; h * w];
                    for p in 0..h * w {
                        let mut s = T::ZERO;
                        for ch in 0..c {
                            s += gd[p * c + ch] * xd[p * c + ch];
                        }
                        dm[p] = s;
                    }
                    sink.accumulate(mask, Tensor::from_vec(Shape::d3(h, w, 1), dm));
                }
            }) as _
        });
        self.insert(out, needs, back)
    }

    /// Adds a `[D]` bias to every row of an `[L, D]` matrix.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Var {
        let xs = self.value(x).shape();
        assert_eq!(xs.rank(), 2, "add_bias expects [L, D]");
        let (l, d) = (xs.dim(0), xs.dim(1));
        assert_eq!(self.value(bias).shape(), Shape::d1(d));
        let xd = self.value(x).data();
        let bd = self.value(bias).data();
        let mut out = Vec::with_capacity(l * d);
        for row in 0..l {
            for col in 0..d {
                out.push(xd[row * d + col] + bd[col]);
            }
        }
        let out = Tensor::from_vec(xs, out);
        let needs = self.wants_grad(&[x, bias]);
        let back = needs.then(|| {
            let (nx, nb) = (self.needs_grad(x), self.needs_grad(bias));
            Box::new(move |g: &Tensor<T>, sink: &mut crate::graph::Gradients<T>| {
                if nx {
                    sink.accumulate(x, g.clone());
                }
                if nb {
                    let gd = g.data();
                    let mut db = vec![T::ZERO; d];
                    for row in 0..l {
                        for col in 0..d {
                            db[col] += gd[row * d + col];
                        }
                    }
                    sink.accumulate(bias, Tensor::from_vec(Shape::d1(d), db));
                }
            }) as _
        });
        self.insert(out, needs, back)
    }

    pub fn reshape(&mut self, a: Var, shape: Shape) -> Var {
        let out = self.value(a).reshaped(shape);
        let needs = self.wants_grad(&[a]);
        let orig = self.value(a).shape();
        let back = needs.then(|| {
            Box::new(move |g: &Tensor<T>, sink: &mut crate::graph::Gradients<T>| {
                sink.accumulate(a, g.reshaped(orig));
            }) as _
        });
        self.insert(out, needs, back)
    }

    /// Concatenates `[H, W, C_i]` maps along the channel axis.
    pub fn concat_channels(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let (h, w, _) = crate::tensor::hwc(self.value(parts[0]));
        let channels: Vec<usize> = parts
            .iter()
            .map(|&p| {
                let (ph, pw, pc) = crate::tensor::hwc(self.value(p));
                assert_eq!((ph, pw), (h, w), "concat spatial mismatch");
                pc
            })
            .collect();
        let c_total: usize = channels.iter().sum();
        let mut out = vec![T::ZERO; h * w * c_total];
        let mut offset = 0;
        for (&p, &pc) in parts.iter().zip(&channels) {
            let src = self.value(p).data();
            for px in 0..h * w {
                out[px * c_total + offset..px * c_total + offset + pc]
                    .copy_from_slice(&src[px * pc..(px + 1) * pc]);
            }
            offset += pc;
        }
        let out = Tensor::from_vec(Shape::d3(h, w, c_total), out);
        let needs = self.wants_grad(parts);
        let back = needs.then(|| {
            let parts: Vec<Var> = parts.to_vec();
            let flags: Vec<bool> = parts.iter().map(|&p| self.needs_grad(p)).collect();
            let channels = channels.clone();
            Box::new(move |g: &Tensor<T>, sink: &mut crate::graph::Gradients<T>| {
                let gd = g.data();
                let mut offset = 0;
                for ((&p, &pc), &f) in parts.iter().zip(&channels).zip(&flags) {
                    if f {
                        let mut dp = Vec::with_capacity(h * w * pc);
                        for px in 0..h * w {
                            dp.extend_from_slice(
                                &gd[px * c_total + offset..px * c_total + offset + pc],
                            );
                        }
                        sink.accumulate(p, Tensor::from_vec(Shape::d3(h, w, pc), dp));
                    }
                    offset += pc;
                }
            }) as _
        });
        self.insert(out, needs, back)
    }

    /// Top-left spatial crop of an `[H, W, C]` map.
    pub fn crop(&mut self, a: Var, new_h: usize, new_w: usize) -> Var {
        let (h, w, c) = crate::tensor::hwc(self.value(a));
        assert!(new_h <= h && new_w <= w, "crop larger than input");
        let out = crate::tensor::crop(self.value(a), new_h, new_w);
        let needs = self.wants_grad(&[a]);
        let back = needs.then(|| {
            Box::new(move |g: &Tensor<T>, sink: &mut crate::graph::Gradients<T>| {
                let gd = g.data();
                let mut dx = vec![T::ZERO; h * w * c];
                for y in 0..new_h {
                    dx[y * w * c..y * w * c + new_w * c]
                        .copy_from_slice(&gd[y * new_w * c..(y + 1) * new_w * c]);
                }
                sink.accumulate(a, Tensor::from_vec(Shape::d3(h, w, c), dx));
            }) as _
        });
        self.insert(out, needs, back)
    }
}
