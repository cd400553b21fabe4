//! Differentiable tensor operations, implemented as methods on [`Graph`].
//!
//! Every op computes its output eagerly and, when requested, records a
//! backward closure on the tape. Gradients are only computed toward inputs
//! that need them.
//!
//! [`Graph`]: crate::graph::Graph

mod conv;
mod elem;
mod matmul;
mod norm;
mod sample;
