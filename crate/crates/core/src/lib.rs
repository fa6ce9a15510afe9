//! Depth from differential defocus: a line-buffered streaming depth
//! pipeline with emulated binary16 arithmetic, a dense reference engine, a
//! thin-lens pair simulator, a calibrator and a static cost model.

pub mod calib;
pub mod costmodel;
pub mod error;
pub mod image;
pub mod kernels;
pub mod numerics;
pub mod pipeline;
pub mod reference;
pub mod scalar;
pub mod streaming;
pub mod synth;

pub use crate::error::{Error, Result};
pub use crate::image::Image;
pub use crate::numerics::Half;
pub use crate::pipeline::{CalibrationParams, DepthMap, Engine, Numerics};
pub use crate::scalar::Sample;

/// Streaming run in emulated binary16, as the hardware computes it.
pub type HalfRun = pipeline::StreamRun<Half>;
/// Streaming run in 64-bit floating point.
pub type WideRun = pipeline::StreamRun<f64>;
/// Reference features in 64-bit floating point, used for calibration.
pub type WideFeatures = reference::Features<f64>;
pub type HalfFeatures = reference::Features<Half>;
pub type HalfImage = Image<Half>;
pub type WideImage = Image<f64>;
