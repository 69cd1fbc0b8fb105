//! Streaming Gaussian-splatting reconstruction on top of `splatwise-core`:
//! posed-dataset and synthetic-scene IO, the keyframe training loop, a
//! backward-pass benchmark and the `splatwise` command line.

pub mod bench;
pub mod cli;
pub mod dataio;
pub mod error;
pub mod trainer;

pub use error::{DataError, Result};
