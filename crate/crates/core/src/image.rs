//! Input images, padding to the network's stride, and the image pyramid.

use alloc::vec::Vec;

use crate::scalar::Scalar;
use crate::tensor::{self, Tensor};

/// An `[H, W, 3]` RGB image with values normalized to `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor<T: Scalar = f32> {
    data: Tensor<T>,
}

impl<T: Scalar> ImageTensor<T> {
    pub fn new(data: Tensor<T>) -> Self {
        let s = data.shape();
        assert!(
            s.rank() == 3 && s.dim(2) == 3 && s.dim(0) > 0 && s.dim(1) > 0,
            "image must be non-empty [H, W, 3], got {:?}",
            s
        );
        ImageTensor { data }
    }

    pub fn height(&self) -> usize {
        self.data.shape().dim(0)
    }

    pub fn width(&self) -> usize {
        self.data.shape().dim(1)
    }

    pub fn tensor(&self) -> &Tensor<T> {
        &self.data
    }

    pub fn into_tensor(self) -> Tensor<T> {
        self.data
    }
}

/// Records how much replicate padding was added, and therefore how to crop
/// network outputs back to the original frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PadSpec {
    pub orig_h: usize,
    pub orig_w: usize,
    pub bottom: usize,
    pub right: usize,
}

impl PadSpec {
    pub fn is_identity(&self) -> bool {
        self.bottom == 0 && self.right == 0
    }

    pub fn padded_h(&self) -> usize {
        self.orig_h + self.bottom
    }

    pub fn padded_w(&self) -> usize {
        self.orig_w + self.right
    }

    /// Output dims at a downscaled grid: `ceil(original / factor)`.
    pub fn scaled_dims(&self, factor: usize) -> (usize, usize) {
        (self.orig_h.div_ceil(factor), self.orig_w.div_ceil(factor))
    }

    /// Crops a full-resolution map back to the original size.
    pub fn crop_full<T: Scalar>(&self, t: &Tensor<T>) -> Tensor<T> {
        tensor::crop(t, self.orig_h, self.orig_w)
    }

    /// Crops a map on the 1/`factor` grid of the padded image down to
    /// `ceil(original / factor)`.
    pub fn crop_scaled<T: Scalar>(&self, t: &Tensor<T>, factor: usize) -> Tensor<T> {
        let (h, w) = self.scaled_dims(factor);
        tensor::crop(t, h, w)
    }
}

/// Pads an image with edge replication so both dims become multiples of
/// `multiple` (smallest such size, bottom/right only).
pub fn pad_to_multiple<T: Scalar>(img: &ImageTensor<T>, multiple: usize) -> (ImageTensor<T>, PadSpec) {
    assert!(multiple > 0);
    let (h, w) = (img.height(), img.width());
    let target_h = h.div_ceil(multiple) * multiple;
    let target_w = w.div_ceil(multiple) * multiple;
    let spec = PadSpec {
        orig_h: h,
        orig_w: w,
        bottom: target_h - h,
        right: target_w - w,
    };
    let padded = if spec.is_identity() {
        img.clone()
    } else {
        ImageTensor::new(tensor::pad_replicate(img.tensor(), spec.bottom, spec.right))
    };
    (padded, spec)
}

/// Area-averaged image pyramid at scales 1/1, 1/2, 1/4, 1/8, 1/16. The input
/// must be padded to a multiple of 16.
pub fn build_pyramid<T: Scalar>(img: &ImageTensor<T>) -> Vec<ImageTensor<T>> {
    assert!(
        img.height() % 16 == 0 && img.width() % 16 == 0,
        "pyramid input must be padded to a multiple of 16"
    );
    let mut levels = Vec::with_capacity(5);
    levels.push(img.clone());
    for _ in 0..4 {
        let prev = levels.last().unwrap();
        levels.push(ImageTensor::new(tensor::avg_pool2(prev.tensor())));
    }
    levels
}
