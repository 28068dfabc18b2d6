pub mod asymmetry;
pub mod certificate;
pub mod domain;
pub mod error;
pub mod experiments;
pub mod special;
pub mod spectral;

pub use error::{Error, Result};
