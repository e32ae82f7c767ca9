//! Saliency prediction for omnidirectional video with deformable patch
//! embeddings and a spatio-temporal fusion head.

pub mod cli;
pub mod embed;
pub mod encoder;
pub mod error;
pub mod fusion;
pub mod geom;
pub mod io;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod objective;
pub mod saliency;
pub mod synth;

pub use error::{Error, Result};
