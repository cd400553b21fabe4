//! Matrix products and softmax, the building blocks of the attention stages.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use crate::graph::{Graph, Var};
use crate::scalar::Scalar;
use crate::tensor::{Shape, Tensor};

/// `out[l, m] += a[l, k] * b[k, m]`
fn mm_nn<T: Scalar>(a: &[T], b: &[T], l: usize, k: usize, m: usize, out: &mut [T]) {
    for i in 0..l {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * m..(i + 1) * m];
        for (p, &av) in arow.iter().enumerate() {
            let brow = &b[p * m..(p + 1) * m];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

/// `out[l, m] += a[l, k] * b[m, k]` (b transposed)
fn mm_nt<T: Scalar>(a: &[T], b: &[T], l: usize, k: usize, m: usize, out: &mut [T]) {
    for i in 0..l {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..m {
            let brow = &b[j * k..(j + 1) * k];
            let mut acc = T::ZERO;
            for (&av, &bv) in arow.iter().zip(brow) {
                acc += av * bv;
            }
            out[i * m + j] += acc;
        }
    }
}

/// `out[k, m] += a[l, k] * g[l, m]` (a transposed)
fn mm_tn<T: Scalar>(a: &[T], g: &[T], l: usize, k: usize, m: usize, out: &mut [T]) {
    for i in 0..l {
        let arow = &a[i * k..(i + 1) * k];
        let grow = &g[i * m..(i + 1) * m];
        for (p, &av) in arow.iter().enumerate() {
            let orow = &mut out[p * m..(p + 1) * m];
            for (o, &gv) in orow.iter_mut().zip(grow) {
                *o += av * gv;
            }
        }
    }
}

impl<T: Scalar> Graph<T> {
    /// `[L, K] x [K, M] -> [L, M]`
    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        assert_eq!(sa.rank(), 2);
        assert_eq!(sb.rank(), 2);
        let (l, k, m) = (sa.dim(0), sa.dim(1), sb.dim(1));
        assert_eq!(sb.dim(0), k, "matmul inner dims: {:?} x {:?}", sa, sb);
        let mut out = vec![T::ZERO; l * m];
        mm_nn(self.value(a).data(), self.value(b).data(), l, k, m, &mut out);
        let out = Tensor::from_vec(Shape::d2(l, m), out);
        let needs = self.wants_grad(&[a, b]);
        let back = needs.then(|| {
            let (na, nb) = (self.needs_grad(a), self.needs_grad(b));
            let (va, vb) = (self.value(a).clone(), self.value(b).clone());
            Box::new(move |g: &Tensor<T>, sink: &mut crate::graph::Gradients<T>| {
                if na {
                    let mut da = vec![T::ZERO; l * k];
                    mm_nt(g.data(), vb.data(), l, m, k, &mut da);
                    sink.accumulate(a, Tensor::from_vec(Shape::d2(l, k), da));
                }
                if nb {
                    let mut db = vec![T::ZERO; k * m];
                    mm_tn(va.data(), g.data(), l, k, m, &mut db);
                    sink.accumulate(b, Tensor::from_vec(Shape::d2(k, m), db));
                }
            }) as _
        });
        self.insert(out, needs, back)
    }

    /// `[L, K] x [M, K]^T -> [L, M]`; used for query-key similarity where key
    /// rows are contiguous.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Var {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        assert_eq!(sa.rank(), 2);
        assert_eq!(sb.rank(), 2);
        let (l, k, m) = (sa.dim(0), sa.dim(1), sb.dim(0));
        assert_eq!(sb.dim(1), k, "matmul_nt inner dims: {:?} x {:?}", sa, sb);
        let mut out = vec![T::ZERO; l * m];
        mm_nt(self.value(a).data(), self.value(b).data(), l, k, m, &mut out);
        let out = Tensor::from_vec(Shape::d2(l, m), out);
        let needs = self.wants_grad(&[a, b]);
        let back = needs.then(|| {
            let (na, nb) = (self.needs_grad(a), self.needs_grad(b));
            let (va, vb) = (self.value(a).clone(), self.value(b).clone());
            Box::new(move |g: &Tensor<T>, sink: &mut crate::graph::Gradients<T>| {
                if na {
                    // da = g . b
                    let mut da = vec![T::ZERO; l * k];
                    mm_nn(g.data(), vb.data(), l, m, k, &mut da);
                    sink.accumulate(a, Tensor::from_vec(Shape::d2(l, k), da));
                }
                if nb {
                    // db = g^T . a
                    let mut db = vec![T::ZERO; m * k];
                    mm_tn(g.data(), va.data(), l, m, k, &mut db);
                    sink.accumulate(b, Tensor::from_vec(Shape::d2(m, k), db));
                }
            }) as _
        });
        self.insert(out, needs, back)
    }

    /// Row-wise softmax of an `[L, M]` matrix.
    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let sa = self.value(a).shape();
        assert_eq!(sa.rank(), 2);
        let (l, m) = (sa.dim(0), sa.dim(1));
        let out = softmax_chunks(self.value(a).data(), m);
        let out = Tensor::from_vec(sa, out);
        let needs = self.wants_grad(&[a]);
        let back = needs.then(|| {
            let y = out.clone();
            Box::new(move |g: &Tensor<T>, sink: &mut crate::graph::Gradients<T>| {
                sink.accumulate(a, softmax_backward(g, &y, l, m));
            }) as _
        });
        self.insert(out, needs, back)
    }

    /// Softmax over contiguous channel groups of size `group` in an
    /// `[H, W, G * group]` map; one distribution per pixel per group.
    pub fn softmax_channel_groups(&mut self, a: Var, group: usize) -> Var {
        let (h, w, c) = crate::tensor::hwc(self.value(a));
        assert!(group > 0 && c % group == 0, "channels must split into groups");
        let out = softmax_chunks(self.value(a).data(), group);
        let out = Tensor::from_vec(Shape::d3(h, w, c), out);
        let needs = self.wants_grad(&[a]);
        let back = needs.then(|| {
            let y = out.clone();
            Box::new(move |g: &Tensor<T>, sink: &mut crate::graph::Gradients<T>| {
                sink.accumulate(a, softmax_backward(g, &y, h * w * c / group, group));
            }) as _
        });
        self.insert(out, needs, back)
    }
}

/// Softmax applied independently to each contiguous chunk of length `m`.
fn softmax_chunks<T: Scalar>(src: &[T], m: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(src.len());
    for chunk in src.chunks_exact(m) {
        let mut mx = chunk[0];
        for &v in chunk {
            mx = mx.max(v);
        }
        let mut sum = T::ZERO;
        let start = out.len();
        for &v in chunk {
            let e = (v - mx).exp();
            sum += e;
            out.push(e);
        }
        let inv = T::ONE / sum;
        for o in &mut out[start..] {
            *o *= inv;
        }
    }
    out
}

/// dx = y * (g - sum(g * y)) per chunk.
fn softmax_backward<T: Scalar>(g: &Tensor<T>, y: &Tensor<T>, rows: usize, m: usize) -> Tensor<T> {
    let gd = g.data();
    let yd = y.data();
    let mut dx = Vec::with_capacity(rows * m);
    for r in 0..rows {
        let gr = &gd[r * m..(r + 1) * m];
        let yr = &yd[r * m..(r + 1) * m];
        let mut dot = T::ZERO;
        for (&gi, &yi) in gr.iter().zip(yr) {
            dot += gi * yi;
        }
        for (&gi, &yi) in gr.iter().zip(yr) {
            dx.push(yi * (gi - dot));
        }
    }
    Tensor::from_vec(y.shape(), dx)
}
