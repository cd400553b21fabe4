//! Architecture hyperparameters, collected in one validated record.

use alloc::string::String;
use alloc::vec::Vec;
use alloc::{format, vec};

/// Every knob of the flow network. `default()` is the full-size model;
/// [`NeuFlowConfig::tiny`] is the desk-scale variant used by gradient checks
/// and overfit tests.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct NeuFlowConfig {
    /// Width of the matching features at 1/8 and 1/16 scale.
    pub feature_dim: usize,
    /// Output channels of the per-level backbone blocks, coarse last:
    /// `[1/1, 1/2, 1/4, 1/8, 1/16]`. The first four are concatenated at 1/8.
    pub per_level_channels: Vec<usize>,
    /// Internal width of the block fusing the concatenated 1/8 features.
    pub fusion_width: usize,
    /// Internal width of the block merging 1/8 features into the 1/16 map.
    pub merge_width: usize,
    /// Channels of the dedicated full-resolution upsampling branch.
    pub upsample_branch_dim: usize,
    /// Number of cross-attention layers at 1/16 scale.
    pub cross_attention_layers: usize,
    /// Number of flow self-attention layers.
    pub self_attention_layers: usize,
    /// Hidden width of the transformer feed-forward networks.
    pub ffn_dim: usize,
    /// Extra multiplier on the 1/sqrt(d) attention score scale.
    pub attention_temperature: f64,
    /// Local correlation window radius (3 -> 7x7).
    pub correlation_radius: usize,
    /// Number of hidden convolutions in the refinement head.
    pub refinement_depth: usize,
    /// Channel width of the refinement head.
    pub refinement_width: usize,
    /// Channel width of the upsample-mask head.
    pub mask_head_width: usize,
    /// Upper bound on group-norm groups; each layer uses the largest divisor
    /// of its channel count not exceeding this.
    pub norm_groups: usize,
    /// Seed for weight initialization.
    pub seed: u64,
}

impl Default for NeuFlowConfig {
    fn default() -> Self {
        NeuFlowConfig {
            feature_dim: 90,
            per_level_channels: vec![24, 24, 24, 24, 24],
            fusion_width: 192,
            merge_width: 192,
            upsample_branch_dim: 64,
            cross_attention_layers: 2,
            self_attention_layers: 1,
            ffn_dim: 360,
            attention_temperature: 1.0,
            correlation_radius: 3,
            refinement_depth: 6,
            refinement_width: 192,
            mask_head_width: 192,
            norm_groups: 8,
            seed: 0,
        }
    }
}

impl NeuFlowConfig {
    /// Small configuration for gradient checks and overfit runs: feature
    /// dim 8, refinement depth 2, all widths shrunk accordingly.
    pub fn tiny() -> Self {
        NeuFlowConfig {
            feature_dim: 8,
            per_level_channels: vec![4, 4, 4, 4, 4],
            fusion_width: 16,
            merge_width: 16,
            upsample_branch_dim: 8,
            cross_attention_layers: 2,
            self_attention_layers: 1,
            ffn_dim: 16,
            attention_temperature: 1.0,
            correlation_radius: 3,
            refinement_depth: 2,
            refinement_width: 16,
            mask_head_width: 16,
            norm_groups: 8,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        fn positive(value: usize, name: &str) -> Result<(), ConfigError> {
            if value == 0 {
                Err(ConfigError(format!("{name} must be positive")))
            } else {
                Ok(())
            }
        }
        positive(self.feature_dim, "feature_dim")?;
        positive(self.fusion_width, "fusion_width")?;
        positive(self.merge_width, "merge_width")?;
        positive(self.upsample_branch_dim, "upsample_branch_dim")?;
        positive(self.ffn_dim, "ffn_dim")?;
        positive(self.refinement_width, "refinement_width")?;
        positive(self.mask_head_width, "mask_head_width")?;
        positive(self.norm_groups, "norm_groups")?;
        positive(self.refinement_depth, "refinement_depth")?;
        if self.cross_attention_layers < 1 {
            return Err(ConfigError("cross_attention_layers must be >= 1".into()));
        }
        if self.correlation_radius < 1 {
            return Err(ConfigError("correlation_radius must be >= 1".into()));
        }
        if self.per_level_channels.len() != 5 {
            return Err(ConfigError(format!(
                "per_level_channels needs 5 entries (1/1..1/16), got {}",
                self.per_level_channels.len()
            )));
        }
        if self.per_level_channels.iter().any(|&c| c == 0) {
            return Err(ConfigError("per_level_channels entries must be positive".into()));
        }
        if !(self.attention_temperature.is_finite() && self.attention_temperature > 0.0) {
            return Err(ConfigError("attention_temperature must be positive".into()));
        }
        Ok(())
    }

    /// Channels after concatenating the 1/1..1/8 level features.
    pub fn concat_channels(&self) -> usize {
        self.per_level_channels[..4].iter().sum()
    }

    /// Channels of the local correlation volume.
    pub fn corr_channels(&self) -> usize {
        let side = 2 * self.correlation_radius + 1;
        side * side
    }

    /// Input channels of the refinement head: correlation volume, matching
    /// features, and the coarse flow.
    pub fn refinement_input_channels(&self) -> usize {
        self.corr_channels() + self.feature_dim + 2
    }

    /// Largest divisor of `channels` not exceeding `norm_groups`.
    pub fn groups_for(&self, channels: usize) -> usize {
        (1..=self.norm_groups.min(channels))
            .rev()
            .find(|g| channels % g == 0)
            .unwrap_or(1)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError(pub String);

impl core::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "invalid configuration: {}", self.0)
    }
}

#[cfg(feature = "std")]
impl std::error::Error for ConfigError {}
