//! Convex upsampling from 1/8 to full resolution.
//!
//! A small head over the dedicated full-resolution feature branch and the
//! refined flow predicts, per coarse pixel, 64 softmax distributions (one per
//! 8x8 sub-pixel position) over the 3x3 coarse neighborhood.

use crate::config::NeuFlowConfig;
use crate::graph::{Graph, Var};
use crate::layers::{Bound, Conv2d, ParamStore};
use crate::rng::Rng;
use crate::scalar::Scalar;

/// Weights per coarse pixel: 64 sub-pixel positions x 9 neighbors. The
/// channel layout is `sub * 9 + neighbor`, both row-major.
pub const MASK_CHANNELS: usize = 576;

#[derive(Debug, Clone)]
pub struct MaskHead {
    conv1: Conv2d,
    conv2: Conv2d,
    proj: Conv2d,
}

impl MaskHead {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, rng: &mut Rng, cfg: &NeuFlowConfig) -> Self {
        let c_in = cfg.upsample_branch_dim + 2;
        let w = cfg.mask_head_width;
        MaskHead {
            conv1: Conv2d::new(store, rng, "upsampler.conv1", c_in, w, 3, 1),
            conv2: Conv2d::new(store, rng, "upsampler.conv2", w, w, 3, 1),
            // Zero logits give uniform 1/9 weights, so a fresh upsampler is a
            // plain local average.
            proj: Conv2d::new_zeroed(store, "upsampler.proj", w, MASK_CHANNELS, 1),
        }
    }

    /// `feat_up` `[h8, w8, D_up]` + `flow8` `[h8, w8, 2]` -> mask
    /// `[h8, w8, 576]` with each group of 9 summing to one.
    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        bound: &Bound,
        feat_up: Var,
        flow8: Var,
    ) -> Var {
        let x = g.concat_channels(&[feat_up, flow8]);
        let x = self.conv1.forward(g, bound, x);
        let x = g.relu(x);
        let x = self.conv2.forward(g, bound, x);
        let x = g.relu(x);
        let logits = self.proj.forward(g, bound, x);
        g.softmax_channel_groups(logits, 9)
    }
}

/// Re-exported graph op; see [`Graph::convex_upsample`].
pub fn convex_upsample<T: Scalar>(g: &mut Graph<T>, flow8: Var, mask: Var) -> Var {
    g.convex_upsample(flow8, mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::bind_params;
    use crate::rng::Rng;
    use crate::tensor::{Shape, Tensor};
    use alloc::vec::Vec;

    fn rand_map(rng: &mut Rng, h: usize, w: usize, c: usize) -> Tensor<f32> {
        let data: Vec<f32> = (0..h * w * c).map(|_| rng.range(-1.0, 1.0) as f32).collect();
        Tensor::from_vec(Shape::d3(h, w, c), data)
    }

    fn softmax_mask(rng: &mut Rng, h: usize, w: usize) -> Tensor<f32> {
        let logits = rand_map(rng, h, w, MASK_CHANNELS);
        let mut g = Graph::new(false);
        let l = g.constant(logits);
        let m = g.softmax_channel_groups(l, 9);
        g.value(m).clone()
    }

    #[test]
    fn mask_head_emits_valid_distributions() {
        let cfg = NeuFlowConfig::tiny();
        let mut store = ParamStore::new();
        let mut rng = Rng::new(1);
        let head = MaskHead::new(&mut store, &mut rng, &cfg);
        // Perturb the projection so the logits are not all zero.
        let w = store.find("upsampler.proj.weight").unwrap();
        let shape = store.get(w).shape();
        let data: Vec<f32> = (0..shape.numel()).map(|_| rng.range(-0.5, 0.5) as f32).collect();
        store.set(w, Tensor::from_vec(shape, data));

        let (h, wd) = (3, 4);
        let mut g = Graph::new(false);
        let bound = bind_params(&mut g, &store);
        let feat = g.constant(rand_map(&mut rng, h, wd, cfg.upsample_branch_dim));
        let flow = g.constant(rand_map(&mut rng, h, wd, 2));
        let mask = head.forward(&mut g, &bound, feat, flow);
        assert_eq!(g.value(mask).shape(), Shape::d3(h, wd, MASK_CHANNELS));
        let d = g.value(mask).data();
        assert!(d.iter().all(|&v| v >= 0.0));
        for group in d.chunks_exact(9) {
            let s: f32 = group.iter().sum();
            assert!((s - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn uniform_mask_and_constant_flow_upsample_to_constant() {
        let (h, w) = (3, 2);
        let mask = Tensor::full(Shape::d3(h, w, MASK_CHANNELS), 1.0f32 / 9.0);
        let mut flow = Vec::with_capacity(h * w * 2);
        for _ in 0..h * w {
            flow.push(1.5f32);
            flow.push(-0.25);
        }
        let mut g = Graph::new(false);
        let f = g.constant(Tensor::from_vec(Shape::d3(h, w, 2), flow));
        let m = g.constant(mask);
        let up = convex_upsample(&mut g, f, m);
        assert_eq!(g.value(up).shape(), Shape::d3(8 * h, 8 * w, 2));
        for p in 0..8 * h * 8 * w {
            assert!((g.value(up).data()[p * 2] - 12.0).abs() < 1e-5);
            assert!((g.value(up).data()[p * 2 + 1] + 2.0).abs() < 1e-5);
        }
    }

    #[test]
    fn center_one_hot_mask_replicates_nearest_coarse_flow() {
        let (h, w) = (2, 3);
        let mut mask = alloc::vec![0.0f32; h * w * MASK_CHANNELS];
        for p in 0..h * w {
            for sub in 0..64 {
                mask[p * MASK_CHANNELS + sub * 9 + 4] = 1.0; // center neighbor
            }
        }
        let mut rng = Rng::new(2);
        let flow = rand_map(&mut rng, h, w, 2);
        let mut g = Graph::new(false);
        let f = g.constant(flow.clone());
        let m = g.constant(Tensor::from_vec(Shape::d3(h, w, MASK_CHANNELS), mask));
        let up = convex_upsample(&mut g, f, m);
        let od = g.value(up).data();
        for i in 0..8 * h {
            for j in 0..8 * w {
                let (ci, cj) = (i / 8, j / 8);
                for ch in 0..2 {
                    let expect = 8.0 * flow.data()[(ci * w + cj) * 2 + ch];
                    assert!((od[(i * 8 * w + j) * 2 + ch] - expect).abs() < 1e-5);
                }
            }
        }
    }

    #[test]
    fn output_lies_in_scaled_neighborhood_hull() {
        let mut rng = Rng::new(3);
        for _ in 0..50 {
            let (h, w) = (3, 3);
            let flow = rand_map(&mut rng, h, w, 2);
            let mask = softmax_mask(&mut rng, h, w);
            let mut g = Graph::new(false);
            let f = g.constant(flow.clone());
            let m = g.constant(mask);
            let up = convex_upsample(&mut g, f, m);
            let od = g.value(up).data();
            for i in 0..8 * h {
                for j in 0..8 * w {
                    let (ci, cj) = (i / 8, j / 8);
                    for ch in 0..2 {
                        let (mut lo, mut hi) = (f32::INFINITY, f32::NEG_INFINITY);
                        for dy in -1isize..=1 {
                            for dx in -1isize..=1 {
                                let ni = (ci as isize + dy).clamp(0, h as isize - 1) as usize;
                                let nj = (cj as isize + dx).clamp(0, w as isize - 1) as usize;
                                let v = flow.data()[(ni * w + nj) * 2 + ch];
                                lo = lo.min(v);
                                hi = hi.max(v);
                            }
                        }
                        let v = od[(i * 8 * w + j) * 2 + ch];
                        assert!(v >= 8.0 * lo - 1e-4 && v <= 8.0 * hi + 1e-4);
                    }
                }
            }
        }
    }

    #[test]
    fn upsample_is_linear_in_flow() {
        let mut rng = Rng::new(4);
        let (h, w) = (2, 2);
        let flow = rand_map(&mut rng, h, w, 2);
        let mask = softmax_mask(&mut rng, h, w);
        let mut g = Graph::new(false);
        let f = g.constant(flow.clone());
        let m = g.constant(mask.clone());
        let up1 = convex_upsample(&mut g, f, m);
        let scaled = flow.map(|v| v * 3.0);
        let fs = g.constant(scaled);
        let ms = g.constant(mask);
        let up3 = convex_upsample(&mut g, fs, ms);
        let a = g.value(up1).clone().map(|v| v * 3.0);
        assert!(a.max_abs_diff(g.value(up3)) < 1e-4);
    }

    #[test]
    fn zero_flow_upsamples_to_zero() {
        let mut rng = Rng::new(5);
        let (h, w) = (2, 3);
        let mask = softmax_mask(&mut rng, h, w);
        let mut g = Graph::new(false);
        let f = g.constant(Tensor::zeros(Shape::d3(h, w, 2)));
        let m = g.constant(mask);
        let up = convex_upsample(&mut g, f, m);
        assert!(g.value(up).data().iter().all(|&v| v == 0.0));
    }
}
