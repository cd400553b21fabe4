//! The full flow network: backbone, cross-attention global matching, flow
//! self-attention, 2x flow upsampling, local refinement, and convex
//! upsampling, with streaming backbone reuse and parameter accounting.

use alloc::string::String;
use alloc::vec::Vec;

use crate::attention::{global_match, upsample_flow_2x, CrossAttentionStack, FlowSelfAttention};
use crate::backbone::Backbone;
use crate::config::{ConfigError, NeuFlowConfig};
use crate::flow::{FlowField, FlowScale};
use crate::graph::{Graph, Var};
use crate::image::{pad_to_multiple, ImageTensor, PadSpec};
use crate::layers::{bind_params, Bound, ParamStore};
use crate::refinement::{local_correlation, warp, RefinementHead};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::{Shape, Tensor};
use crate::upsampler::MaskHead;

/// Minimum padded image side; the 1/16 grid must keep at least two pixels.
pub const MIN_PADDED_SIDE: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub enum ModelError {
    Config(ConfigError),
    /// The two images of a pair (or of a stream) have different sizes.
    SizeMismatch {
        first: (usize, usize),
        second: (usize, usize),
    },
    /// Input smaller than [`MIN_PADDED_SIDE`] after padding.
    ImageTooSmall { height: usize, width: usize },
}

impl core::fmt::Display for ModelError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            ModelError::Config(e) => write!(f, "{e}"),
            ModelError::SizeMismatch { first, second } => write!(
                f,
                "image sizes differ: {}x{} vs {}x{}",
                first.0, first.1, second.0, second.1
            ),
            ModelError::ImageTooSmall { height, width } => write!(
                f,
                "image {height}x{width} is below the {MIN_PADDED_SIDE} pixel minimum"
            ),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for ModelError {}

impl From<ConfigError> for ModelError {
    fn from(e: ConfigError) -> Self {
        ModelError::Config(e)
    }
}

/// Flow at the three output resolutions, cropped to the original frame.
/// `flow_full` is only present when the full-resolution path was requested.
#[derive(Debug, Clone)]
pub struct FlowPrediction<T: Scalar = f32> {
    pub flow16: FlowField<T>,
    pub flow8: FlowField<T>,
    pub flow_full: Option<FlowField<T>>,
}

/// Graph variables of one forward pass, before extraction. Used directly by
/// the training loss so gradients flow through the crops.
pub struct ForwardVars {
    pub flow16: Var,
    pub flow8: Var,
    pub flow_full: Option<Var>,
    pub pad: PadSpec,
}

#[derive(Debug, Clone)]
pub struct NeuFlow<T: Scalar = f32> {
    config: NeuFlowConfig,
    params: ParamStore<T>,
    backbone: Backbone,
    cross: CrossAttentionStack,
    self_attn: FlowSelfAttention,
    refine: RefinementHead,
    mask_head: MaskHead,
}

impl<T: Scalar> NeuFlow<T> {
    pub fn new(config: NeuFlowConfig) -> Result<Self, ConfigError> {
        config.validate()?;
        let mut params = ParamStore::new();
        let mut rng = Rng::new(config.seed);
        let backbone = Backbone::new(&mut params, &mut rng, &config);
        let cross = CrossAttentionStack::new(&mut params, &mut rng, &config);
        let self_attn = FlowSelfAttention::new(&mut params, &mut rng, &config);
        let refine = RefinementHead::new(&mut params, &mut rng, &config);
        let mask_head = MaskHead::new(&mut params, &mut rng, &config);
        Ok(NeuFlow {
            config,
            params,
            backbone,
            cross,
            self_attn,
            refine,
            mask_head,
        })
    }

    pub fn config(&self) -> &NeuFlowConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    /// Exact count of learnable scalars.
    pub fn parameter_count(&self) -> usize {
        self.params.scalar_count()
    }

    /// Scalar counts per top-level module.
    pub fn parameter_breakdown(&self) -> Vec<(String, usize)> {
        self.params.totals_by_prefix(1)
    }

    pub fn cast<U: Scalar>(&self) -> NeuFlow<U> {
        NeuFlow {
            config: self.config.clone(),
            params: self.params.cast(),
            backbone: self.backbone.clone(),
            cross: self.cross.clone(),
            self_attn: self.self_attn.clone(),
            refine: self.refine.clone(),
            mask_head: self.mask_head.clone(),
        }
    }

    fn check_pair(
        &self,
        img1: &ImageTensor<T>,
        img2: &ImageTensor<T>,
    ) -> Result<(), ModelError> {
        let a = (img1.height(), img1.width());
        let b = (img2.height(), img2.width());
        if a != b {
            return Err(ModelError::SizeMismatch { first: a, second: b });
        }
        let padded_h = a.0.div_ceil(16) * 16;
        let padded_w = a.1.div_ceil(16) * 16;
        if padded_h < MIN_PADDED_SIDE || padded_w < MIN_PADDED_SIDE {
            return Err(ModelError::ImageTooSmall {
                height: a.0,
                width: a.1,
            });
        }
        Ok(())
    }

    /// Runs the pipeline on already-extracted backbone features.
    /// `feat8_up` must be present when `output_full` is set.
    #[allow(clippy::too_many_arguments)]
    fn pipeline(
        &self,
        g: &mut Graph<T>,
        bound: &Bound,
        feat8_1: Var,
        feat16_1: Var,
        feat8_2: Var,
        feat16_2: Var,
        feat8_up: Option<Var>,
        pad: PadSpec,
    ) -> ForwardVars {
        let s16 = g.value(feat16_1).shape();
        let (h16, w16, d) = (s16.dim(0), s16.dim(1), s16.dim(2));
        let tokens1 = g.reshape(feat16_1, Shape::d2(h16 * w16, d));
        let tokens2 = g.reshape(feat16_2, Shape::d2(h16 * w16, d));
        let (t1, _t2) = self.cross.forward(g, bound, tokens1, tokens2, h16, w16);
        let t2 = _t2;

        let flow16 = global_match(g, t1, t2, h16, w16);
        let flow16 = self.self_attn.forward(g, bound, t1, flow16, h16, w16);

        let coarse8 = upsample_flow_2x(g, flow16);
        let warped = warp(g, feat8_2, coarse8);
        let corr = local_correlation(g, feat8_1, warped, self.refine.radius());
        let flow8 = self.refine.forward(g, bound, corr, feat8_1, coarse8);

        let flow_full = feat8_up.map(|up| {
            let mask = self.mask_head.forward(g, bound, up, flow8);
            let full = g.convex_upsample(flow8, mask);
            let cropped = g.crop(full, pad.orig_h, pad.orig_w);
            cropped
        });

        let (h16c, w16c) = pad.scaled_dims(16);
        let flow16 = g.crop(flow16, h16c, w16c);
        let (h8c, w8c) = pad.scaled_dims(8);
        let flow8 = g.crop(flow8, h8c, w8c);

        ForwardVars {
            flow16,
            flow8,
            flow_full,
            pad,
        }
    }

    /// Full forward pass on the graph; the entry point shared by inference
    /// and training.
    pub fn forward_vars(
        &self,
        g: &mut Graph<T>,
        bound: &Bound,
        img1: &ImageTensor<T>,
        img2: &ImageTensor<T>,
        output_full: bool,
    ) -> Result<ForwardVars, ModelError> {
        self.check_pair(img1, img2)?;
        let (p1, pad) = pad_to_multiple(img1, 16);
        let (p2, _) = pad_to_multiple(img2, 16);
        let f1 = self.backbone.features(g, bound, &p1);
        let f2 = self.backbone.features(g, bound, &p2);
        let feat8_up = output_full.then(|| self.backbone.upsample_features(g, bound, &p1));
        Ok(self.pipeline(
            g,
            bound,
            f1.feat8,
            f1.feat16,
            f2.feat8,
            f2.feat16,
            feat8_up,
            pad,
        ))
    }

    /// Estimates flow from `img1` to `img2`. With `output_full` unset the
    /// convex upsampling branch is skipped entirely and only the 1/16 and
    /// 1/8 fields are produced.
    pub fn forward(
        &self,
        img1: &ImageTensor<T>,
        img2: &ImageTensor<T>,
        output_full: bool,
    ) -> Result<FlowPrediction<T>, ModelError> {
        let mut g = Graph::new(false);
        let bound = bind_params(&mut g, &self.params);
        let vars = self.forward_vars(&mut g, &bound, img1, img2, output_full)?;
        Ok(extract_prediction(&g, &vars))
    }

    /// Streaming variant: the backbone runs only on `next`; features of the
    /// preceding frame come from `state`. The first call warms the cache and
    /// yields no prediction. Output is bit-identical to
    /// `forward(prev, next, output_full)`.
    pub fn forward_stream(
        &self,
        state: StreamState<T>,
        next: &ImageTensor<T>,
        output_full: bool,
    ) -> Result<(Option<FlowPrediction<T>>, StreamState<T>), ModelError> {
        let mut g = Graph::new(false);
        let bound = bind_params(&mut g, &self.params);
        let Some(mut prev) = state.cached else {
            let frame = self.encode_frame(&mut g, &bound, next, false)?;
            return Ok((None, StreamState { cached: Some(frame) }));
        };

        if (next.height(), next.width()) != (prev.pad.orig_h, prev.pad.orig_w) {
            return Err(ModelError::SizeMismatch {
                first: (prev.pad.orig_h, prev.pad.orig_w),
                second: (next.height(), next.width()),
            });
        }

        // Backbone for the new frame only.
        let frame = self.encode_frame(&mut g, &bound, next, false)?;

        // The cached frame is image one: it needs the upsampling branch when
        // the full path is requested and it was not computed earlier.
        if output_full && prev.feat8_up.is_none() {
            let up = self.backbone.upsample_features(&mut g, &bound, &prev.padded);
            prev.feat8_up = Some(g.value(up).clone());
        }

        let feat8_1 = g.constant(prev.feat8.clone());
        let feat16_1 = g.constant(prev.feat16.clone());
        let feat8_2 = g.constant(frame.feat8.clone());
        let feat16_2 = g.constant(frame.feat16.clone());
        let feat8_up = if output_full {
            Some(g.constant(prev.feat8_up.clone().unwrap()))
        } else {
            None
        };
        let vars = self.pipeline(
            &mut g, &bound, feat8_1, feat16_1, feat8_2, feat16_2, feat8_up, prev.pad,
        );
        let prediction = extract_prediction(&g, &vars);
        Ok((Some(prediction), StreamState { cached: Some(frame) }))
    }

    fn encode_frame(
        &self,
        g: &mut Graph<T>,
        bound: &Bound,
        img: &ImageTensor<T>,
        with_upsample_branch: bool,
    ) -> Result<CachedFrame<T>, ModelError> {
        self.check_pair(img, img)?;
        let (padded, pad) = pad_to_multiple(img, 16);
        let feats = self.backbone.features(g, bound, &padded);
        let feat8_up = if with_upsample_branch {
            let up = self.backbone.upsample_features(g, bound, &padded);
            Some(g.value(up).clone())
        } else {
            None
        };
        Ok(CachedFrame {
            padded: padded.clone(),
            pad,
            feat8: g.value(feats.feat8).clone(),
            feat16: g.value(feats.feat16).clone(),
            feat8_up,
        })
    }
}

impl NeuFlow<f32> {
    /// Serializes the config and all weights into the binary checkpoint
    /// container.
    pub fn to_checkpoint_bytes(&self) -> Vec<u8> {
        crate::checkpoint::encode_model(&self.config, &self.params)
    }

    /// Rebuilds a model from checkpoint bytes; the optimizer section, if
    /// any, is ignored here.
    pub fn from_checkpoint_bytes(bytes: &[u8]) -> Result<Self, crate::checkpoint::CheckpointError> {
        let decoded = crate::checkpoint::decode(bytes)?;
        let mut model = NeuFlow::new(decoded.config).map_err(|e| {
            crate::checkpoint::CheckpointError::Corrupt(alloc::format!("config: {e}"))
        })?;
        crate::checkpoint::install_weights(model.params_mut(), decoded.weights)?;
        Ok(model)
    }
}

fn extract_prediction<T: Scalar>(g: &Graph<T>, vars: &ForwardVars) -> FlowPrediction<T> {
    FlowPrediction {
        flow16: FlowField::new(g.value(vars.flow16).clone(), FlowScale::Sixteenth),
        flow8: FlowField::new(g.value(vars.flow8).clone(), FlowScale::Eighth),
        flow_full: vars
            .flow_full
            .map(|v| FlowField::new(g.value(v).clone(), FlowScale::Full)),
    }
}

/// Cached backbone outputs of the most recent stream frame.
#[derive(Debug, Clone)]
struct CachedFrame<T: Scalar> {
    padded: ImageTensor<T>,
    pad: PadSpec,
    feat8: Tensor<T>,
    feat16: Tensor<T>,
    feat8_up: Option<Tensor<T>>,
}

/// Rolling state for frame-stream inference; single-owner by design.
#[derive(Debug, Clone, Default)]
pub struct StreamState<T: Scalar = f32> {
    cached: Option<CachedFrame<T>>,
}

impl<T: Scalar> StreamState<T> {
    pub fn new() -> Self {
        StreamState { cached: None }
    }

    pub fn is_warm(&self) -> bool {
        self.cached.is_some()
    }
}
