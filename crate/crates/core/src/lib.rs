//! Fine-grained image recognition with weakly-supervised top-k selection.
//!
//! The pipeline classifies images whose categories differ only by small,
//! localized cues. A four-block convolutional backbone emits feature maps at
//! decreasing resolution; a weakly supervised selector classifies every
//! feature-map pixel and keeps the most confident points per block; the
//! selected points are projected to a common width, fused with one graph
//! convolution, pooled, and classified. Three trained variants (SGD, LION,
//! LION with an alternate projection width) vote on the final label.
//!
//! See the `book/` directory for a guided tour.

pub mod backbone;
pub mod checkpoint;
pub mod combiner;
pub mod config;
pub mod ensemble;
pub mod error;
pub mod evalkit;
pub mod explain;
pub mod layers;
pub mod model;
pub mod numerics;
pub mod optim;
pub mod selector;
pub mod synthdata;
pub mod train;
pub mod rng;

pub use error::{Error, Result};
pub use numerics::Tensor;
