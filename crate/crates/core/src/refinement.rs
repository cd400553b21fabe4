//! Local refinement at 1/8 scale: warp image-two features by the coarse
//! flow, correlate each pixel with a 7x7 window of the warped map, and
//! regress a delta flow with a small CNN whose final projection starts at
//! zero, so a fresh head is the identity on the coarse flow.

use alloc::format;
use alloc::vec::Vec;

use crate::config::NeuFlowConfig;
use crate::graph::{Graph, Var};
use crate::layers::{Bound, Conv2d, ParamStore};
use crate::rng::Rng;
use crate::scalar::Scalar;

/// Warps features by a flow field at the same scale; out-of-bounds samples
/// are zero.
pub fn warp<T: Scalar>(g: &mut Graph<T>, features: Var, flow: Var) -> Var {
    g.bilinear_warp(features, flow)
}

/// Correlation of each pixel of `f1` with the `(2r+1) x (2r+1)` neighborhood
/// of `f2_warped`, normalized by `1/sqrt(D)` like the global matching scores.
pub fn local_correlation<T: Scalar>(g: &mut Graph<T>, f1: Var, f2_warped: Var, radius: usize) -> Var {
    let d = g.value(f1).shape().dim(2);
    let scale = T::from_f64(1.0 / libm::sqrt(d as f64));
    g.local_corr(f1, f2_warped, radius, scale)
}

/// Delta-flow regressor over `concat(correlation, features, coarse flow)`.
#[derive(Debug, Clone)]
pub struct RefinementHead {
    hidden: Vec<Conv2d>,
    out: Conv2d,
    radius: usize,
}

impl RefinementHead {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, rng: &mut Rng, cfg: &NeuFlowConfig) -> Self {
        let mut hidden = Vec::with_capacity(cfg.refinement_depth);
        let mut c_in = cfg.refinement_input_channels();
        for i in 0..cfg.refinement_depth {
            hidden.push(Conv2d::new(
                store,
                rng,
                &format!("refinement.conv{i}"),
                c_in,
                cfg.refinement_width,
                3,
                1,
            ));
            c_in = cfg.refinement_width;
        }
        let out = Conv2d::new_zeroed(store, "refinement.out", c_in, 2, 3);
        RefinementHead {
            hidden,
            out,
            radius: cfg.correlation_radius,
        }
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    /// `corr` `[h8, w8, (2r+1)^2]`, `f1` `[h8, w8, D]`, `coarse`
    /// `[h8, w8, 2]` -> refined flow `[h8, w8, 2]`.
    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        bound: &Bound,
        corr: Var,
        f1: Var,
        coarse: Var,
    ) -> Var {
        let mut x = g.concat_channels(&[corr, f1, coarse]);
        for conv in &self.hidden {
            x = conv.forward(g, bound, x);
            x = g.relu(x);
        }
        let delta = self.out.forward(g, bound, x);
        g.add(coarse, delta)
    }
}
