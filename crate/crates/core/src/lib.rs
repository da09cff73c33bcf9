pub mod colorimetry;
pub mod data;
pub mod dataset;
pub mod error;
pub mod experiments;
pub mod eval;
pub mod geometry;
pub mod illuminant;
pub mod inverse;
pub mod kernel;
pub mod metamer;
pub mod metrics;
pub mod net;
pub mod nnls;
pub mod render;
pub mod spectrum;
pub mod table;

pub use error::{Error, Result};
