//! Dense row-major tensors of rank 1..=4.
//!
//! Buffers are shared through `Arc`, so cloning a tensor is cheap and a
//! loaded model can be used concurrently from several threads. All layouts
//! are channels-last: activations are `[H, W, C]`, convolution weights are
//! `[kh, kw, c_in, c_out]`.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::scalar::Scalar;

pub const MAX_RANK: usize = 4;

#[derive(Clone, Copy, PartialEq, Eq)]
pub struct Shape {
    dims: [usize; MAX_RANK],
    ndim: u8,
}

impl Shape {
    pub fn new(dims: &[usize]) -> Self {
        assert!(!dims.is_empty() && dims.len() <= MAX_RANK, "rank 1..=4");
        let mut d = [1; MAX_RANK];
        d[..dims.len()].copy_from_slice(dims);
        Shape {
            dims: d,
            ndim: dims.len() as u8,
        }
    }

    pub fn d1(a: usize) -> Self {
        Self::new(&[a])
    }
    pub fn d2(a: usize, b: usize) -> Self {
        Self::new(&[a, b])
    }
    pub fn d3(a: usize, b: usize, c: usize) -> Self {
        Self::new(&[a, b, c])
    }
    pub fn d4(a: usize, b: usize, c: usize, d: usize) -> Self {
        Self::new(&[a, b, c, d])
    }

    pub fn rank(&self) -> usize {
        self.ndim as usize
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims[..self.ndim as usize]
    }

    pub fn dim(&self, i: usize) -> usize {
        self.dims()[i]
    }

    pub fn numel(&self) -> usize {
        self.dims().iter().product()
    }
}

impl core::fmt::Debug for Shape {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "{:?}", self.dims())
    }
}

#[derive(Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Shape,
    data: Arc<[T]>,
}

impl<T: Scalar> Tensor<T> {
    pub fn from_vec(shape: Shape, data: Vec<T>) -> Self {
        assert_eq!(shape.numel(), data.len(), "shape/buffer mismatch");
        Tensor {
            shape,
            data: data.into(),
        }
    }

    pub fn zeros(shape: Shape) -> Self {
        Self::from_vec(shape, vec![T::ZERO; shape.numel()])
    }

    pub fn full(shape: Shape, v: T) -> Self {
        Self::from_vec(shape, vec![v; shape.numel()])
    }

    pub fn scalar(v: T) -> Self {
        Self::from_vec(Shape::d1(1), vec![v])
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn numel(&self) -> usize {
        self.shape.numel()
    }

    /// Value of a rank-1, single-element tensor.
    pub fn item(&self) -> T {
        assert_eq!(self.numel(), 1, "item() on non-scalar tensor");
        self.data[0]
    }

    pub fn to_vec(&self) -> Vec<T> {
        self.data.to_vec()
    }

    /// Same buffer under a different shape with equal element count.
    pub fn reshaped(&self, shape: Shape) -> Self {
        assert_eq!(shape.numel(), self.numel(), "reshape element count");
        Tensor {
            shape,
            data: self.data.clone(),
        }
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        let data: Vec<T> = self.data.iter().map(|&x| f(x)).collect();
        Self::from_vec(self.shape, data)
    }

    pub fn zip(&self, other: &Self, f: impl Fn(T, T) -> T) -> Self {
        assert_eq!(self.shape, other.shape, "elementwise shape mismatch");
        let data: Vec<T> = self
            .data
            .iter()
            .zip(other.data.iter())
            .map(|(&a, &b)| f(a, b))
            .collect();
        Self::from_vec(self.shape, data)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Largest absolute difference against `other` (same shape).
    pub fn max_abs_diff(&self, other: &Self) -> T {
        assert_eq!(self.shape, other.shape);
        let mut m = T::ZERO;
        for (&a, &b) in self.data.iter().zip(other.data.iter()) {
            m = m.max((a - b).abs());
        }
        m
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        let data: Vec<U> = self.data.iter().map(|x| U::from_f64(x.to_f64())).collect();
        Tensor::from_vec(self.shape, data)
    }
}

/// 2x2 area-average pooling of an `[H, W, C]` map; `H` and `W` must be even.
pub fn avg_pool2<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let (h, w, c) = hwc(x);
    assert!(h % 2 == 0 && w % 2 == 0, "avg_pool2 needs even dims");
    let (oh, ow) = (h / 2, w / 2);
    let src = x.data();
    let quarter = T::from_f64(0.25);
    let mut out = vec![T::ZERO; oh * ow * c];
    for y in 0..oh {
        for xcol in 0..ow {
            for ch in 0..c {
                let i00 = ((2 * y) * w + 2 * xcol) * c + ch;
                let i01 = i00 + c;
                let i10 = i00 + w * c;
                let i11 = i10 + c;
                out[(y * ow + xcol) * c + ch] =
                    (src[i00] + src[i01] + src[i10] + src[i11]) * quarter;
            }
        }
    }
    Tensor::from_vec(Shape::d3(oh, ow, c), out)
}

/// Grows an `[H, W, C]` map to `[H+bottom, W+right, C]` by replicating the
/// last row/column.
pub fn pad_replicate<T: Scalar>(x: &Tensor<T>, bottom: usize, right: usize) -> Tensor<T> {
    let (h, w, c) = hwc(x);
    let (oh, ow) = (h + bottom, w + right);
    let src = x.data();
    let mut out = vec![T::ZERO; oh * ow * c];
    for y in 0..oh {
        let sy = y.min(h - 1);
        for xcol in 0..ow {
            let sx = xcol.min(w - 1);
            let s = (sy * w + sx) * c;
            let d = (y * ow + xcol) * c;
            out[d..d + c].copy_from_slice(&src[s..s + c]);
        }
    }
    Tensor::from_vec(Shape::d3(oh, ow, c), out)
}

/// Top-left crop of an `[H, W, C]` map.
pub fn crop<T: Scalar>(x: &Tensor<T>, new_h: usize, new_w: usize) -> Tensor<T> {
    let (h, w, c) = hwc(x);
    assert!(new_h <= h && new_w <= w, "crop larger than input");
    if new_h == h && new_w == w {
        return x.clone();
    }
    let src = x.data();
    let mut out = Vec::with_capacity(new_h * new_w * c);
    for y in 0..new_h {
        let s = y * w * c;
        out.extend_from_slice(&src[s..s + new_w * c]);
    }
    Tensor::from_vec(Shape::d3(new_h, new_w, c), out)
}

/// Bilinear resize of an `[H, W, C]` map to `[new_h, new_w, C]` with
/// half-pixel centers (the `align_corners=false` convention). Source samples
/// are clamped to the image border.
pub fn bilinear_resize<T: Scalar>(x: &Tensor<T>, new_h: usize, new_w: usize) -> Tensor<T> {
    let (h, w, c) = hwc(x);
    assert!(new_h > 0 && new_w > 0);
    if new_h == h && new_w == w {
        return x.clone();
    }
    let src = x.data();
    let sy = h as f64 / new_h as f64;
    let sx = w as f64 / new_w as f64;
    let mut out = vec![T::ZERO; new_h * new_w * c];
    for oy in 0..new_h {
        let fy = ((oy as f64 + 0.5) * sy - 0.5).max(0.0).min(h as f64 - 1.0);
        let y0 = fy as usize;
        let y1 = (y0 + 1).min(h - 1);
        let wy = T::from_f64(fy - y0 as f64);
        for ox in 0..new_w {
            let fx = ((ox as f64 + 0.5) * sx - 0.5).max(0.0).min(w as f64 - 1.0);
            let x0 = fx as usize;
            let x1 = (x0 + 1).min(w - 1);
            let wx = T::from_f64(fx - x0 as f64);
            let d = (oy * new_w + ox) * c;
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
    Tensor::from_vec(Shape::d3(new_h, new_w, c), out)
}

/// Destructures a rank-3 shape as `(h, w, c)`.
pub fn hwc<T: Scalar>(x: &Tensor<T>) -> (usize, usize, usize) {
    let d = x.shape();
    assert_eq!(d.rank(), 3, "expected [H, W, C] tensor, got {:?}", d);
    (d.dim(0), d.dim(1), d.dim(2))
}

impl<T: Scalar> core::fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "Tensor{:?}", self.shape)
    }
}
