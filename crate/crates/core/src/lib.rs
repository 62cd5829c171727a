//! Full-scene material segmentation: sliding-window CNN inference,
//! multi-scale probability fusion, fully connected CRF refinement, and the
//! dataset and evaluation tooling around them.

pub mod convnet;
pub mod dataset;
pub mod densecrf;
pub mod error;
pub mod eval;
pub mod image;
pub mod labelmap;
pub mod multiscale;
pub mod probmap;
pub mod tensor;

pub use error::{Error, Result};
