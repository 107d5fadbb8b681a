//! Semi-supervised adversarial super-resolution for retinal angiography images.

pub mod error;
pub mod evaluation;
pub mod gradsuite;
pub mod imaging;
pub mod losses;
pub mod models;
pub mod params;
pub mod training;

pub use error::{Result, SasrError};
pub use params::{Bindings, ModelParams, ParamId};
