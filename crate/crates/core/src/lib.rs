//! Global-to-local optical flow estimation.
//!
//! The pipeline estimates dense 2-D motion between two RGB frames in four
//! stages: a shallow multi-scale CNN backbone extracts features at 1/8 and
//! 1/16 resolution, global matching with stacked cross-attention recovers
//! large displacement at 1/16, a local 7x7 correlation head refines the flow
//! at 1/8, and a learned convex-combination module upsamples to full
//! resolution. Everything runs on a small reverse-mode tape so the same code
//! path serves inference and training.
//!
//! The crate is `no_std`-compatible (requires `alloc`); all transcendental
//! math goes through `libm` so results are identical with and without the
//! `std` feature. File formats, dataset loaders, benchmarking and the CLI
//! live in the companion `neuflow-cli` crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod attention;
pub mod backbone;
pub mod checkpoint;
pub mod color;
pub mod config;
pub mod flow;
pub mod graph;
pub mod image;
pub mod layers;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod ops;
pub mod optim;
pub mod refinement;
pub mod rng;
pub mod sample;
pub mod scalar;
pub mod synthetic;
pub mod tensor;
pub mod train;
pub mod upsampler;

pub use config::NeuFlowConfig;
pub use flow::{FlowField, FlowScale};
pub use graph::{Graph, Var};
pub use image::{ImageTensor, PadSpec};
pub use model::{FlowPrediction, ModelError, NeuFlow, StreamState};
pub use sample::FlowSample;
pub use scalar::Scalar;
pub use tensor::{Shape, Tensor};
