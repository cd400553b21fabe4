//! Global matching at 1/16 scale: cross-attention feature enhancement,
//! softmax matching over all pixel pairs, and flow propagation through
//! feature self-attention.

use alloc::format;
use alloc::vec::Vec;

use crate::config::NeuFlowConfig;
use crate::flow::coordinate_grid;
use crate::graph::{Graph, Var};
use crate::layers::{Bound, Linear, ParamStore, TransformerLayer};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::{Shape, Tensor};

/// Fixed 2-D sinusoidal positional encoding, `[h * w, dim]`. The first half
/// of the channels encodes x, the second half y, each as interleaved
/// sin/cos at geometrically spaced frequencies.
pub fn positional_encoding<T: Scalar>(h: usize, w: usize, dim: usize) -> Tensor<T> {
    let half = dim / 2;
    let mut data = Vec::with_capacity(h * w * dim);
    let axis_val = |pos: f64, i: usize, span: usize| -> f64 {
        let pair = (i / 2) as f64;
        let denom = libm::pow(10000.0, 2.0 * pair / span.max(1) as f64);
        let angle = pos / denom;
        if i % 2 == 0 {
            libm::sin(angle)
        } else {
            libm::cos(angle)
        }
    };
    for y in 0..h {
        for x in 0..w {
            for i in 0..half {
                data.push(T::from_f64(axis_val(x as f64, i, half)));
            }
            for i in 0..dim - half {
                data.push(T::from_f64(axis_val(y as f64, i, dim - half)));
            }
        }
    }
    Tensor::from_vec(Shape::d2(h * w, dim), data)
}

/// Two (by default) transformer layers applied symmetrically: each layer
/// attends image-one features to image-two features and vice versa with the
/// same weights, so swapping the inputs swaps the outputs exactly.
#[derive(Debug, Clone)]
pub struct CrossAttentionStack {
    layers: Vec<TransformerLayer>,
    dim: usize,
}

impl CrossAttentionStack {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, rng: &mut Rng, cfg: &NeuFlowConfig) -> Self {
        let layers = (0..cfg.cross_attention_layers)
            .map(|i| {
                TransformerLayer::new(
                    store,
                    rng,
                    &format!("cross_attention.layer{i}"),
                    cfg.feature_dim,
                    cfg.ffn_dim,
                    cfg.attention_temperature,
                )
            })
            .collect();
        CrossAttentionStack {
            layers,
            dim: cfg.feature_dim,
        }
    }

    /// `f1`, `f2` are `[L, D]` token matrices on the 1/16 grid of size
    /// `(h, w)`. Positional encoding is added once before the stack.
    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        bound: &Bound,
        f1: Var,
        f2: Var,
        h: usize,
        w: usize,
    ) -> (Var, Var) {
        let s1 = g.value(f1).shape();
        let s2 = g.value(f2).shape();
        assert_eq!(s1, s2, "cross-attention inputs must match: {s1:?} vs {s2:?}");
        assert_eq!(s1, Shape::d2(h * w, self.dim), "token shape mismatch");
        let pe = g.constant(positional_encoding(h, w, self.dim));
        let mut a = g.add(f1, pe);
        let mut b = g.add(f2, pe);
        for layer in &self.layers {
            let na = layer.forward(g, bound, a, b);
            let nb = layer.forward(g, bound, b, a);
            a = na;
            b = nb;
        }
        (a, b)
    }
}

/// Softmax global matching: correlate every pixel pair, take the expected
/// coordinate under the matching distribution, and subtract the pixel's own
/// coordinate. Returns `[h, w, 2]` flow in 1/16-scale pixels.
pub fn global_match<T: Scalar>(g: &mut Graph<T>, f1: Var, f2: Var, h: usize, w: usize) -> Var {
    let s1 = g.value(f1).shape();
    assert_eq!(s1, g.value(f2).shape(), "matching features must match");
    assert_eq!(s1.rank(), 2);
    assert_eq!(s1.dim(0), h * w, "token count must equal h * w");
    let d = s1.dim(1);
    let scores = g.matmul_nt(f1, f2);
    let scores = g.scale(scores, T::from_f64(1.0 / libm::sqrt(d as f64)));
    let matching = g.softmax_rows(scores);
    let grid = g.constant(coordinate_grid::<T>(h, w).reshaped(Shape::d2(h * w, 2)));
    let expected = g.matmul(matching, grid);
    let flow = g.sub(expected, grid);
    g.reshape(flow, Shape::d3(h, w, 2))
}

/// Propagates flow between pixels with similar features: attention weights
/// come from projected feature similarity, and the value path carries the
/// 2-channel flow directly, so every output vector is a convex combination
/// of input flow vectors. The projections start as the identity, making the
/// initial propagation exactly raw feature self-similarity.
#[derive(Debug, Clone)]
pub struct FlowSelfAttention {
    layers: Vec<SelfAttentionLayer>,
    dim: usize,
}

#[derive(Debug, Clone)]
struct SelfAttentionLayer {
    wq: Linear,
    wk: Linear,
    score_scale: f64,
}

impl FlowSelfAttention {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, _rng: &mut Rng, cfg: &NeuFlowConfig) -> Self {
        let layers = (0..cfg.self_attention_layers)
            .map(|i| {
                let name = format!("self_attention.layer{i}");
                SelfAttentionLayer {
                    wq: Linear::new_identity(store, &format!("{name}.wq"), cfg.feature_dim),
                    wk: Linear::new_identity(store, &format!("{name}.wk"), cfg.feature_dim),
                    score_scale: cfg.attention_temperature / libm::sqrt(cfg.feature_dim as f64),
                }
            })
            .collect();
        FlowSelfAttention {
            layers,
            dim: cfg.feature_dim,
        }
    }

    /// `features` is `[L, D]` on the `(h, w)` grid; `flow` is `[h, w, 2]` at
    /// the same scale. No positional encoding is added here: attention must
    /// depend on feature similarity alone (identical features mean uniform
    /// propagation), and features coming out of the cross-attention stack
    /// already saw the encoding.
    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        bound: &Bound,
        features: Var,
        flow: Var,
        h: usize,
        w: usize,
    ) -> Var {
        assert_eq!(g.value(features).shape(), Shape::d2(h * w, self.dim));
        assert_eq!(g.value(flow).shape(), Shape::d3(h, w, 2));
        let mut flow_tokens = g.reshape(flow, Shape::d2(h * w, 2));
        for layer in &self.layers {
            let q = layer.wq.forward(g, bound, features);
            let k = layer.wk.forward(g, bound, features);
            let scores = g.matmul_nt(q, k);
            let scores = g.scale(scores, T::from_f64(layer.score_scale));
            let attn = g.softmax_rows(scores);
            flow_tokens = g.matmul(attn, flow_tokens);
        }
        g.reshape(flow_tokens, Shape::d3(h, w, 2))
    }
}

/// Doubles the resolution of a flow field and rescales its values to the
/// finer pixel units.
pub fn upsample_flow_2x<T: Scalar>(g: &mut Graph<T>, flow: Var) -> Var {
    let s = g.value(flow).shape();
    assert!(s.rank() == 3 && s.dim(2) == 2, "flow must be [h, w, 2]");
    let up = g.upsample_bilinear(flow, 2);
    g.scale(up, T::from_f64(2.0))
}
