//! Everything around the core network that needs an operating system:
//! dataset loading, the `.flo` interchange format, image files, the training
//! harness with checkpoints and logs, evaluation and latency benchmarking,
//! and configuration files.

pub mod config_file;
pub mod data_io;
pub mod evalbench;
pub mod training;
