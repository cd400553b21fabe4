//! End-point error.

use crate::flow::FlowField;
use crate::scalar::Scalar;
use crate::tensor::{Shape, Tensor};

/// Mean Euclidean distance between predicted and ground-truth flow over
/// valid pixels. Returns `None` when no pixel is valid (the metric is
/// undefined there and reported as missing).
pub fn epe<T: Scalar>(pred: &FlowField<T>, gt: &FlowField<T>, valid: &Tensor<T>) -> Option<f64> {
    assert_eq!(pred.scale(), gt.scale(), "flow scales differ");
    let (h, w) = (pred.height(), pred.width());
    assert_eq!((gt.height(), gt.width()), (h, w), "flow sizes differ");
    assert_eq!(valid.shape(), Shape::d3(h, w, 1), "mask shape");
    let pd = pred.tensor().data();
    let gd = gt.tensor().data();
    let vd = valid.data();
    let mut acc = 0.0;
    let mut count = 0usize;
    for p in 0..h * w {
        if vd[p] > T::ZERO {
            let du = (pd[p * 2] - gd[p * 2]).to_f64();
            let dv = (pd[p * 2 + 1] - gd[p * 2 + 1]).to_f64();
            acc += libm::sqrt(du * du + dv * dv);
            count += 1;
        }
    }
    (count > 0).then(|| acc / count as f64)
}
