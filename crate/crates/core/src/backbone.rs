//! Shallow multi-scale CNN backbone.
//!
//! The padded image is downsampled into a five-level pyramid (1/1 .. 1/16).
//! Levels 1/1 .. 1/8 each pass through a two-convolution block whose total
//! stride lands the output on the 1/8 grid; the concatenation is fused into
//! the 1/8 matching features. The 1/16 level gets its own block, and a merge
//! block combines a strided projection of the 1/8 features with it to form
//! the 1/16 matching features. A separate stride-8 block over the
//! full-resolution image feeds only the convex upsampler.

use alloc::format;
use alloc::vec::Vec;

use crate::config::NeuFlowConfig;
use crate::graph::{Graph, Var};
use crate::image::{build_pyramid, ImageTensor};
use crate::layers::{Bound, Conv2d, ConvBlock, GroupNorm, ParamStore};
use crate::rng::Rng;
use crate::scalar::Scalar;

/// Blocks in the backbone: five pyramid levels, fusion, merge, and the
/// upsampling branch. Each holds exactly [`crate::layers::CONVS_PER_BLOCK`]
/// convolutions.
pub const BACKBONE_BLOCKS: usize = 8;

/// Total stride of each per-level block so its output lands on the 1/8 grid
/// (the last level stays at 1/16).
const LEVEL_STRIDES: [usize; 5] = [8, 4, 2, 1, 1];

#[derive(Debug, Clone)]
pub struct Backbone {
    levels: Vec<ConvBlock>,
    fusion: ConvBlock,
    merge_down: Conv2d,
    merge_down_norm: GroupNorm,
    merge_out: Conv2d,
    merge_out_norm: GroupNorm,
    upsample_branch: ConvBlock,
}

/// Matching features for one image, as graph variables.
#[derive(Debug, Clone, Copy)]
pub struct Features {
    /// `[H/8, W/8, feature_dim]`
    pub feat8: Var,
    /// `[H/16, W/16, feature_dim]`
    pub feat16: Var,
}

impl Backbone {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, rng: &mut Rng, cfg: &NeuFlowConfig) -> Self {
        let d = cfg.feature_dim;
        let levels = (0..5)
            .map(|i| {
                let c = cfg.per_level_channels[i];
                ConvBlock::new(
                    store,
                    rng,
                    &format!("backbone.level{i}"),
                    3,
                    c,
                    LEVEL_STRIDES[i],
                    cfg.groups_for(c),
                )
            })
            .collect();
        let fusion = ConvBlock::new_widths(
            store,
            rng,
            "backbone.fusion",
            cfg.concat_channels(),
            cfg.fusion_width,
            d,
            1,
            cfg.groups_for(cfg.fusion_width),
            cfg.groups_for(d),
        );
        let merge_down = Conv2d::new(store, rng, "backbone.merge.conv1", d, cfg.merge_width, 3, 2);
        let merge_down_norm = GroupNorm::new(
            store,
            "backbone.merge.norm1",
            cfg.merge_width,
            cfg.groups_for(cfg.merge_width),
        );
        let c16 = cfg.per_level_channels[4];
        let merge_out = Conv2d::new(
            store,
            rng,
            "backbone.merge.conv2",
            cfg.merge_width + c16,
            d,
            3,
            1,
        );
        let merge_out_norm = GroupNorm::new(store, "backbone.merge.norm2", d, cfg.groups_for(d));
        let upsample_branch = ConvBlock::new(
            store,
            rng,
            "backbone.upsample_branch",
            3,
            cfg.upsample_branch_dim,
            8,
            cfg.groups_for(cfg.upsample_branch_dim),
        );
        Backbone {
            levels,
            fusion,
            merge_down,
            merge_down_norm,
            merge_out,
            merge_out_norm,
            upsample_branch,
        }
    }

    /// Matching features at 1/8 and 1/16 scale for one padded image.
    pub fn features<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        bound: &Bound,
        img: &ImageTensor<T>,
    ) -> Features {
        let pyramid = build_pyramid(img);
        let level_vars: Vec<Var> = pyramid
            .iter()
            .map(|level| g.constant(level.tensor().clone()))
            .collect();
        let mut at_eighth = Vec::with_capacity(4);
        for i in 0..4 {
            at_eighth.push(self.levels[i].forward(g, bound, level_vars[i]));
        }
        let concat = g.concat_channels(&at_eighth);
        let feat8 = self.fusion.forward(g, bound, concat);

        let coarse = self.levels[4].forward(g, bound, level_vars[4]);
        let down = self.merge_down.forward(g, bound, feat8);
        let down = self.merge_down_norm.forward(g, bound, down);
        let down = g.relu(down);
        let merged = g.concat_channels(&[down, coarse]);
        let feat16 = self.merge_out.forward(g, bound, merged);
        let feat16 = self.merge_out_norm.forward(g, bound, feat16);
        let feat16 = g.relu(feat16);
        Features { feat8, feat16 }
    }

    /// Stride-8 features from the full-resolution image that feed only the
    /// convex upsampler (image one of a pair).
    pub fn upsample_features<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        bound: &Bound,
        img: &ImageTensor<T>,
    ) -> Var {
        let x = g.constant(img.tensor().clone());
        self.upsample_branch.forward(g, bound, x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::bind_params;
    use crate::tensor::{Shape, Tensor};

    fn random_image(rng: &mut Rng, h: usize, w: usize) -> ImageTensor<f32> {
        let data: Vec<f32> = (0..h * w * 3).map(|_| rng.range(-1.0, 1.0) as f32).collect();
        ImageTensor::new(Tensor::from_vec(Shape::d3(h, w, 3), data))
    }

    fn build(cfg: &NeuFlowConfig) -> (ParamStore<f32>, Backbone) {
        let mut store = ParamStore::new();
        let mut rng = Rng::new(cfg.seed);
        let backbone = Backbone::new(&mut store, &mut rng, cfg);
        (store, backbone)
    }

    #[test]
    fn feature_dims_match_contract() {
        // A 512-wide, 384-tall input maps to [48, 64, 90] at 1/8 and
        // [24, 32, 90] at 1/16.
        let cfg = NeuFlowConfig::default();
        let (store, backbone) = build(&cfg);
        let mut rng = Rng::new(7);
        let img = random_image(&mut rng, 384, 512);
        let mut g = Graph::new(false);
        let bound = bind_params(&mut g, &store);
        let f = backbone.features(&mut g, &bound, &img);
        assert_eq!(g.value(f.feat8).shape(), Shape::d3(48, 64, 90));
        assert_eq!(g.value(f.feat16).shape(), Shape::d3(24, 32, 90));
        let up = backbone.upsample_features(&mut g, &bound, &img);
        assert_eq!(g.value(up).shape(), Shape::d3(48, 64, 64));
    }

    #[test]
    fn padded_960x544_dims() {
        let cfg = NeuFlowConfig::tiny();
        let (store, backbone) = build(&cfg);
        let mut rng = Rng::new(8);
        let img = random_image(&mut rng, 544, 960);
        let mut g = Graph::new(false);
        let bound = bind_params(&mut g, &store);
        let f = backbone.features(&mut g, &bound, &img);
        assert_eq!(g.value(f.feat8).shape(), Shape::d3(68, 120, cfg.feature_dim));
        assert_eq!(
            g.value(f.feat16).shape(),
            Shape::d3(34, 60, cfg.feature_dim)
        );
    }

    #[test]
    fn outputs_are_finite_and_deterministic() {
        let cfg = NeuFlowConfig::tiny();
        let (store, backbone) = build(&cfg);
        let mut rng = Rng::new(9);
        let img = random_image(&mut rng, 64, 80);
        let run = || {
            let mut g = Graph::new(false);
            let bound = bind_params(&mut g, &store);
            let f = backbone.features(&mut g, &bound, &img);
            (g.value(f.feat8).clone(), g.value(f.feat16).clone())
        };
        let (a8, a16) = run();
        let (b8, b16) = run();
        assert!(a8.all_finite() && a16.all_finite());
        assert_eq!(a8, b8);
        assert_eq!(a16, b16);
    }

    #[test]
    fn backbone_has_two_convs_per_block() {
        let cfg = NeuFlowConfig::default();
        let (store, _) = build(&cfg);
        // Convolution kernels are the only rank-4 parameters.
        let convs = store
            .entries()
            .iter()
            .filter(|e| e.name.starts_with("backbone.") && e.value.shape().rank() == 4)
            .count();
        assert_eq!(convs, BACKBONE_BLOCKS * crate::layers::CONVS_PER_BLOCK);
    }

    #[test]
    fn identical_images_produce_identical_features() {
        let cfg = NeuFlowConfig::tiny();
        let (store, backbone) = build(&cfg);
        let mut rng = Rng::new(10);
        let img = random_image(&mut rng, 48, 48);
        let mut g = Graph::new(false);
        let bound = bind_params(&mut g, &store);
        let f1 = backbone.features(&mut g, &bound, &img);
        let f2 = backbone.features(&mut g, &bound, &img);
        assert_eq!(g.value(f1.feat8), g.value(f2.feat8));
        assert_eq!(g.value(f1.feat16), g.value(f2.feat16));
    }
}
