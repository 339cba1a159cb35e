//! Cold-start citation forecasting over dynamic heterogeneous academic graphs.

pub mod autodiff;
pub mod cli;
pub mod encoder;
pub mod error;
pub mod generator;
pub mod graph;
pub mod imputer;
pub mod importance;
pub mod params;
pub mod plot;
pub mod ppr;
pub mod special;
pub mod synth;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
