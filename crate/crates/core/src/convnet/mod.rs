//! Minimal feed-forward network engine: patch classification, conversion
//! of fully connected layers into convolutions, and dense sliding-window
//! prediction with optional half-stride shifts.

mod dense;
mod engine;
mod spec;
mod toy;
mod weights;

pub use dense::{alignment_padding, convolutionalize, forward_dense};
pub use engine::forward_patch;
pub use spec::{LayerKind, LayerSpec, NetworkMode, NetworkSpec, SlidingGeometry, NETSPEC_VERSION};
pub use toy::random_toy_network;
pub use weights::{LayerParams, WeightStore, RANDOM_SIGMA};
