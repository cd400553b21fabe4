//! A supervised training/evaluation record: an image pair with ground-truth
//! flow and a validity mask.

use alloc::string::String;

use crate::flow::{FlowField, FlowScale};
use crate::image::ImageTensor;
use crate::scalar::Scalar;
use crate::tensor::{Shape, Tensor};

#[derive(Debug, Clone)]
pub struct FlowSample<T: Scalar = f32> {
    pub img1: ImageTensor<T>,
    pub img2: ImageTensor<T>,
    /// Ground-truth flow at full resolution.
    pub gt_flow: FlowField<T>,
    /// `[H, W, 1]` mask, 1 where ground truth is defined.
    pub valid: Tensor<T>,
    pub id: String,
}

impl<T: Scalar> FlowSample<T> {
    /// Panics when the spatial dims of the images, flow, and mask disagree or
    /// the flow is non-finite on valid pixels.
    pub fn validate(&self) {
        let (h, w) = (self.img1.height(), self.img1.width());
        assert_eq!((self.img2.height(), self.img2.width()), (h, w), "image pair size");
        assert_eq!(self.gt_flow.scale(), FlowScale::Full);
        assert_eq!((self.gt_flow.height(), self.gt_flow.width()), (h, w), "flow size");
        assert_eq!(self.valid.shape(), Shape::d3(h, w, 1), "mask shape");
        let fd = self.gt_flow.tensor().data();
        let vd = self.valid.data();
        for p in 0..h * w {
            if vd[p] > T::ZERO {
                assert!(
                    fd[p * 2].is_finite() && fd[p * 2 + 1].is_finite(),
                    "non-finite ground truth on a valid pixel"
                );
            }
        }
    }

    pub fn valid_fraction(&self) -> f64 {
        let vd = self.valid.data();
        let count = vd.iter().filter(|&&v| v > T::ZERO).count();
        count as f64 / vd.len().max(1) as f64
    }

    pub fn cast<U: Scalar>(&self) -> FlowSample<U> {
        FlowSample {
            img1: ImageTensor::new(self.img1.tensor().cast()),
            img2: ImageTensor::new(self.img2.tensor().cast()),
            gt_flow: FlowField::new(self.gt_flow.tensor().cast(), self.gt_flow.scale()),
            valid: self.valid.cast(),
            id: self.id.clone(),
        }
    }
}
