//! Multi-scale supervised loss.
//!
//! Each predicted flow field is bilinearly upsampled to full resolution (with
//! the matching value rescaling), compared to the dense ground truth with an
//! L1 penalty over valid pixels, and the three scales are combined with
//! fixed weights. Intermediate-scale supervision upsamples the prediction
//! rather than downsampling the ground truth, which would be ambiguous
//! across motion boundaries.

use crate::flow::{FlowField, FlowScale};
use crate::graph::{Graph, Var};
use crate::model::{FlowPrediction, ForwardVars};
use crate::scalar::Scalar;
use crate::tensor::{Shape, Tensor};

/// Loss weights for the 1/16, 1/8, and full-resolution terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub w16: f64,
    pub w8: f64,
    pub wfull: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        // Coarse supervision down-weighted.
        LossWeights {
            w16: 0.2,
            w8: 0.5,
            wfull: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub l16: f64,
    pub l8: f64,
    pub lfull: f64,
    pub total: f64,
    pub weights: LossWeights,
    /// Set when the sample had no valid pixels; the loss is defined as zero.
    pub no_valid: bool,
}

/// Loss terms as graph variables, for backpropagation.
pub struct LossVars {
    pub l16: Var,
    pub l8: Var,
    pub lfull: Var,
    pub total: Var,
    pub no_valid: bool,
}

/// Builds the multi-scale loss on the tape. `gt` is full-resolution flow,
/// `valid` a `[H, W, 1]` mask; `fwd` must carry the full-resolution output.
pub fn multiscale_loss_vars<T: Scalar>(
    g: &mut Graph<T>,
    fwd: &ForwardVars,
    gt: &Tensor<T>,
    valid: &Tensor<T>,
    weights: LossWeights,
) -> LossVars {
    let (h, w) = (fwd.pad.orig_h, fwd.pad.orig_w);
    assert_eq!(gt.shape(), Shape::d3(h, w, 2), "ground truth shape");
    assert_eq!(valid.shape(), Shape::d3(h, w, 1), "valid mask shape");
    let flow_full = fwd
        .flow_full
        .expect("multiscale loss needs the full-resolution path");

    let valid_count = valid.data().iter().filter(|&&v| v > T::ZERO).count();
    let no_valid = valid_count == 0;
    let gt_var = g.constant(gt.clone());
    let valid_var = g.constant(valid.clone());

    let term = |g: &mut Graph<T>, pred: Var, factor: usize| -> Var {
        if no_valid {
            return g.constant(Tensor::scalar(T::ZERO));
        }
        let up = if factor > 1 {
            let u = g.upsample_bilinear(pred, factor);
            let u = g.crop(u, h, w);
            g.scale(u, T::from_usize(factor))
        } else {
            pred
        };
        let diff = g.sub(up, gt_var);
        let dist = g.abs(diff);
        let masked = g.mul_mask(dist, valid_var);
        let sum = g.sum_all(masked);
        g.scale(sum, T::ONE / T::from_usize(valid_count))
    };

    let l16 = term(g, fwd.flow16, 16);
    let l8 = term(g, fwd.flow8, 8);
    let lfull = term(g, flow_full, 1);

    let t16 = g.scale(l16, T::from_f64(weights.w16));
    let t8 = g.scale(l8, T::from_f64(weights.w8));
    let tfull = g.scale(lfull, T::from_f64(weights.wfull));
    let partial = g.add(t16, t8);
    let total = g.add(partial, tfull);
    LossVars {
        l16,
        l8,
        lfull,
        total,
        no_valid,
    }
}

impl LossBreakdown {
    pub fn from_vars<T: Scalar>(g: &Graph<T>, vars: &LossVars, weights: LossWeights) -> Self {
        LossBreakdown {
            l16: g.value(vars.l16).item().to_f64(),
            l8: g.value(vars.l8).item().to_f64(),
            lfull: g.value(vars.lfull).item().to_f64(),
            total: g.value(vars.total).item().to_f64(),
            weights,
            no_valid: vars.no_valid,
        }
    }
}

/// Evaluation-only loss on an already extracted prediction.
pub fn multiscale_loss<T: Scalar>(
    pred: &FlowPrediction<T>,
    gt: &FlowField<T>,
    valid: &Tensor<T>,
    weights: LossWeights,
) -> LossBreakdown {
    assert_eq!(gt.scale(), FlowScale::Full);
    let full = pred
        .flow_full
        .as_ref()
        .expect("multiscale loss needs the full-resolution path");
    let (h, w) = (gt.height(), gt.width());
    let mut g = Graph::new(false);
    let fwd = ForwardVars {
        flow16: g.constant(pred.flow16.tensor().clone()),
        flow8: g.constant(pred.flow8.tensor().clone()),
        flow_full: Some(g.constant(full.tensor().clone())),
        pad: crate::image::PadSpec {
            orig_h: h,
            orig_w: w,
            bottom: 0,
            right: 0,
        },
    };
    let vars = multiscale_loss_vars(&mut g, &fwd, gt.tensor(), valid, weights);
    LossBreakdown::from_vars(&g, &vars, weights)
}
