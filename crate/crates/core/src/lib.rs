pub mod benchmark;
pub mod certify;
pub mod conic;
pub mod error;
pub mod fixtures;
pub mod linalg;
pub mod measurements;
pub mod sdp;
pub mod states;

pub use error::{Error, Result};
