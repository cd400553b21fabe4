//! Named parameter storage and the small set of layer types the network is
//! assembled from.
//!
//! Layers own [`ParamId`]s into a [`ParamStore`]; at forward time the store's
//! tensors are bound to graph leaves so one layer definition serves training
//! and inference. Parameter names are hierarchical (`backbone.level0.conv1.
//! weight`) and drive both the checkpoint format and the budget breakdown.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::graph::{Graph, Var};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::{Shape, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }

    pub(crate) fn from_index(i: usize) -> Self {
        ParamId(i)
    }
}

#[derive(Debug, Clone)]
pub struct ParamEntry<T: Scalar> {
    pub name: String,
    pub value: Tensor<T>,
}

#[derive(Debug, Clone, Default)]
pub struct ParamStore<T: Scalar> {
    entries: Vec<ParamEntry<T>>,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore { entries: Vec::new() }
    }

    pub fn register(&mut self, name: String, value: Tensor<T>) -> ParamId {
        debug_assert!(
            self.entries.iter().all(|e| e.name != name),
            "duplicate parameter name {name}"
        );
        self.entries.push(ParamEntry { name, value });
        ParamId(self.entries.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.entries[id.0].value
    }

    pub fn set(&mut self, id: ParamId, value: Tensor<T>) {
        assert_eq!(
            self.entries[id.0].value.shape(),
            value.shape(),
            "parameter shape change"
        );
        self.entries[id.0].value = value;
    }

    pub fn entries(&self) -> &[ParamEntry<T>] {
        &self.entries
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.entries.iter().position(|e| e.name == name).map(ParamId)
    }

    /// Total number of learnable scalars.
    pub fn scalar_count(&self) -> usize {
        self.entries.iter().map(|e| e.value.numel()).sum()
    }

    /// Scalar counts grouped by the first `segments` name components, in
    /// first-appearance order.
    pub fn totals_by_prefix(&self, segments: usize) -> Vec<(String, usize)> {
        let mut out: Vec<(String, usize)> = Vec::new();
        for e in &self.entries {
            let prefix: String = e
                .name
                .split('.')
                .take(segments)
                .collect::<Vec<_>>()
                .join(".");
            match out.iter_mut().find(|(p, _)| *p == prefix) {
                Some((_, n)) => *n += e.value.numel(),
                None => out.push((prefix, e.value.numel())),
            }
        }
        out
    }

    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        ParamStore {
            entries: self
                .entries
                .iter()
                .map(|e| ParamEntry {
                    name: e.name.clone(),
                    value: e.value.cast(),
                })
                .collect(),
        }
    }
}

/// Graph leaves for every parameter, aligned with the store's ids.
pub struct Bound {
    vars: Vec<Var>,
}

impl Bound {
    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.index()]
    }
}

pub fn bind_params<T: Scalar>(g: &mut Graph<T>, store: &ParamStore<T>) -> Bound {
    Bound {
        vars: store
            .entries()
            .iter()
            .map(|e| g.leaf(e.value.clone()))
            .collect(),
    }
}

/// Uniform Kaiming-style init: `U(-b, b)` with `b = 1/sqrt(fan_in)`.
fn uniform_init<T: Scalar>(rng: &mut Rng, shape: Shape, fan_in: usize) -> Tensor<T> {
    let bound = 1.0 / libm::sqrt(fan_in.max(1) as f64);
    let data: Vec<T> = (0..shape.numel())
        .map(|_| T::from_f64(rng.range(-bound, bound)))
        .collect();
    Tensor::from_vec(shape, data)
}

#[derive(Debug, Clone)]
pub struct Conv2d {
    pub weight: ParamId,
    pub bias: ParamId,
    pub stride: usize,
    pub pad: usize,
}

impl Conv2d {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        rng: &mut Rng,
        name: &str,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
    ) -> Self {
        let fan_in = kernel * kernel * c_in;
        let weight = store.register(
            format!("{name}.weight"),
            uniform_init(rng, Shape::d4(kernel, kernel, c_in, c_out), fan_in),
        );
        let bias = store.register(
            format!("{name}.bias"),
            uniform_init(rng, Shape::d1(c_out), fan_in),
        );
        Conv2d {
            weight,
            bias,
            stride,
            pad: kernel / 2,
        }
    }

    /// Zero-initialized variant for final projections that must start as the
    /// identity contribution.
    pub fn new_zeroed<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        c_in: usize,
        c_out: usize,
        kernel: usize,
    ) -> Self {
        let weight = store.register(
            format!("{name}.weight"),
            Tensor::zeros(Shape::d4(kernel, kernel, c_in, c_out)),
        );
        let bias = store.register(format!("{name}.bias"), Tensor::zeros(Shape::d1(c_out)));
        Conv2d {
            weight,
            bias,
            stride: 1,
            pad: kernel / 2,
        }
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, bound: &Bound, x: Var) -> Var {
        g.conv2d(
            x,
            bound.var(self.weight),
            bound.var(self.bias),
            self.stride,
            self.pad,
        )
    }
}

#[derive(Debug, Clone)]
pub struct GroupNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub groups: usize,
}

impl GroupNorm {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        channels: usize,
        groups: usize,
    ) -> Self {
        assert!(channels % groups == 0);
        let gamma = store.register(
            format!("{name}.gamma"),
            Tensor::full(Shape::d1(channels), T::ONE),
        );
        let beta = store.register(format!("{name}.beta"), Tensor::zeros(Shape::d1(channels)));
        GroupNorm { gamma, beta, groups }
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, bound: &Bound, x: Var) -> Var {
        g.group_norm(x, bound.var(self.gamma), bound.var(self.beta), self.groups)
    }
}

#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl LayerNorm {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, name: &str, dim: usize) -> Self {
        let gamma = store.register(format!("{name}.gamma"), Tensor::full(Shape::d1(dim), T::ONE));
        let beta = store.register(format!("{name}.beta"), Tensor::zeros(Shape::d1(dim)));
        LayerNorm { gamma, beta }
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, bound: &Bound, x: Var) -> Var {
        g.layer_norm(x, bound.var(self.gamma), bound.var(self.beta))
    }
}

#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Linear {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        rng: &mut Rng,
        name: &str,
        d_in: usize,
        d_out: usize,
    ) -> Self {
        let weight = store.register(
            format!("{name}.weight"),
            uniform_init(rng, Shape::d2(d_in, d_out), d_in),
        );
        let bias = store.register(
            format!("{name}.bias"),
            uniform_init(rng, Shape::d1(d_out), d_in),
        );
        Linear { weight, bias }
    }

    /// Square linear map initialized to the identity, for projections that
    /// should start as a no-op.
    pub fn new_identity<T: Scalar>(store: &mut ParamStore<T>, name: &str, dim: usize) -> Self {
        let mut data = alloc::vec![T::ZERO; dim * dim];
        for i in 0..dim {
            data[i * dim + i] = T::ONE;
        }
        let weight = store.register(
            format!("{name}.weight"),
            Tensor::from_vec(Shape::d2(dim, dim), data),
        );
        let bias = store.register(format!("{name}.bias"), Tensor::zeros(Shape::d1(dim)));
        Linear { weight, bias }
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, bound: &Bound, x: Var) -> Var {
        let y = g.matmul(x, bound.var(self.weight));
        g.add_bias(y, bound.var(self.bias))
    }
}

/// Number of convolutions in every [`ConvBlock`].
pub const CONVS_PER_BLOCK: usize = 2;

/// The backbone building block: exactly two convolutions, each followed by
/// group normalization and a ReLU. The total stride is split over the two
/// convolutions; stride-4 convolutions use a 7x7 kernel, everything else 3x3.
#[derive(Debug, Clone)]
pub struct ConvBlock {
    conv1: Conv2d,
    norm1: GroupNorm,
    conv2: Conv2d,
    norm2: GroupNorm,
}

fn split_stride(total: usize) -> (usize, usize) {
    match total {
        1 => (1, 1),
        2 => (2, 1),
        4 => (2, 2),
        8 => (4, 2),
        _ => panic!("unsupported block stride {total}"),
    }
}

fn kernel_for(stride: usize) -> usize {
    if stride == 4 {
        7
    } else {
        3
    }
}

impl ConvBlock {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        rng: &mut Rng,
        name: &str,
        c_in: usize,
        c_out: usize,
        stride: usize,
        norm_groups: usize,
    ) -> Self {
        Self::new_widths(
            store,
            rng,
            name,
            c_in,
            c_out,
            c_out,
            stride,
            norm_groups,
            norm_groups,
        )
    }

    /// Block whose two convolutions have distinct widths
    /// (`c_in -> c_mid -> c_out`).
    #[allow(clippy::too_many_arguments)]
    pub fn new_widths<T: Scalar>(
        store: &mut ParamStore<T>,
        rng: &mut Rng,
        name: &str,
        c_in: usize,
        c_mid: usize,
        c_out: usize,
        stride: usize,
        groups_mid: usize,
        groups_out: usize,
    ) -> Self {
        let (s1, s2) = split_stride(stride);
        let conv1 = Conv2d::new(
            store,
            rng,
            &format!("{name}.conv1"),
            c_in,
            c_mid,
            kernel_for(s1),
            s1,
        );
        let norm1 = GroupNorm::new(store, &format!("{name}.norm1"), c_mid, groups_mid);
        let conv2 = Conv2d::new(
            store,
            rng,
            &format!("{name}.conv2"),
            c_mid,
            c_out,
            kernel_for(s2),
            s2,
        );
        let norm2 = GroupNorm::new(store, &format!("{name}.norm2"), c_out, groups_out);
        ConvBlock {
            conv1,
            norm1,
            conv2,
            norm2,
        }
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, bound: &Bound, x: Var) -> Var {
        let x = self.conv1.forward(g, bound, x);
        let x = self.norm1.forward(g, bound, x);
        let x = g.relu(x);
        let x = self.conv2.forward(g, bound, x);
        let x = self.norm2.forward(g, bound, x);
        g.relu(x)
    }
}

/// Pre-norm transformer layer with single-head attention and a two-layer
/// feed-forward. `forward(x, y)` attends from `x` (query) to `y` (key and
/// value); one set of weights serves both directions of the symmetric
/// cross-attention.
#[derive(Debug, Clone)]
pub struct TransformerLayer {
    norm_attn: LayerNorm,
    wq: Linear,
    wk: Linear,
    wv: Linear,
    wo: Linear,
    norm_ffn: LayerNorm,
    ffn1: Linear,
    ffn2: Linear,
    score_scale: f64,
}

impl TransformerLayer {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        rng: &mut Rng,
        name: &str,
        dim: usize,
        ffn_dim: usize,
        temperature: f64,
    ) -> Self {
        TransformerLayer {
            norm_attn: LayerNorm::new(store, &format!("{name}.norm_attn"), dim),
            wq: Linear::new(store, rng, &format!("{name}.wq"), dim, dim),
            wk: Linear::new(store, rng, &format!("{name}.wk"), dim, dim),
            wv: Linear::new(store, rng, &format!("{name}.wv"), dim, dim),
            wo: Linear::new(store, rng, &format!("{name}.wo"), dim, dim),
            norm_ffn: LayerNorm::new(store, &format!("{name}.norm_ffn"), dim),
            ffn1: Linear::new(store, rng, &format!("{name}.ffn1"), dim, ffn_dim),
            ffn2: Linear::new(store, rng, &format!("{name}.ffn2"), ffn_dim, dim),
            score_scale: temperature / libm::sqrt(dim as f64),
        }
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, bound: &Bound, x: Var, y: Var) -> Var {
        let xn = self.norm_attn.forward(g, bound, x);
        let yn = if x == y {
            xn
        } else {
            self.norm_attn.forward(g, bound, y)
        };
        let q = self.wq.forward(g, bound, xn);
        let k = self.wk.forward(g, bound, yn);
        let v = self.wv.forward(g, bound, yn);
        let scores = g.matmul_nt(q, k);
        let scores = g.scale(scores, T::from_f64(self.score_scale));
        let attn = g.softmax_rows(scores);
        let ctx = g.matmul(attn, v);
        let proj = self.wo.forward(g, bound, ctx);
        let x1 = g.add(x, proj);

        let ffn_in = self.norm_ffn.forward(g, bound, x1);
        let h = self.ffn1.forward(g, bound, ffn_in);
        let h = g.relu(h);
        let h = self.ffn2.forward(g, bound, h);
        g.add(x1, h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;

    #[test]
    fn block_applies_total_stride() {
        let mut store = ParamStore::<f32>::new();
        let mut rng = Rng::new(0);
        let block = ConvBlock::new(&mut store, &mut rng, "b", 3, 8, 8, 4);
        let mut g = Graph::new(false);
        let bound = bind_params(&mut g, &store);
        let x = g.constant(Tensor::zeros(Shape::d3(32, 48, 3)));
        let y = block.forward(&mut g, &bound, x);
        assert_eq!(g.value(y).shape(), Shape::d3(4, 6, 8));
    }

    #[test]
    fn zero_input_block_output_is_spatially_constant() {
        // With an all-zero input every conv output equals the bias path, so
        // all spatial positions agree exactly.
        let mut store = ParamStore::<f32>::new();
        let mut rng = Rng::new(1);
        let block = ConvBlock::new(&mut store, &mut rng, "b", 3, 8, 1, 4);
        let mut g = Graph::new(false);
        let bound = bind_params(&mut g, &store);
        let x = g.constant(Tensor::zeros(Shape::d3(9, 9, 3)));
        let y = block.forward(&mut g, &bound, x);
        let v = g.value(y);
        for c in 0..8 {
            let center = v.data()[(4 * 9 + 4) * 8 + c];
            for yy in 2..7 {
                for xx in 2..7 {
                    assert!((v.data()[(yy * 9 + xx) * 8 + c] - center).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn transformer_layer_preserves_shape() {
        let mut store = ParamStore::<f32>::new();
        let mut rng = Rng::new(2);
        let layer = TransformerLayer::new(&mut store, &mut rng, "t", 16, 32, 1.0);
        let mut g = Graph::new(false);
        let bound = bind_params(&mut g, &store);
        let data: Vec<f32> = (0..12 * 16).map(|i| (i % 7) as f32 * 0.1).collect();
        let x = g.constant(Tensor::from_vec(Shape::d2(12, 16), data.clone()));
        let y = g.constant(Tensor::from_vec(Shape::d2(12, 16), data));
        let out = layer.forward(&mut g, &bound, x, y);
        assert_eq!(g.value(out).shape(), Shape::d2(12, 16));
        assert!(g.value(out).all_finite());
    }

    #[test]
    fn prefix_totals_partition_the_store() {
        let mut store = ParamStore::<f32>::new();
        let mut rng = Rng::new(3);
        let _ = Conv2d::new(&mut store, &mut rng, "a.x", 3, 4, 3, 1);
        let _ = Conv2d::new(&mut store, &mut rng, "b.y", 4, 4, 3, 1);
        let by_prefix = store.totals_by_prefix(1);
        let total: usize = by_prefix.iter().map(|(_, n)| n).sum();
        assert_eq!(total, store.scalar_count());
        assert_eq!(by_prefix.len(), 2);
    }
}
