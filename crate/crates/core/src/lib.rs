pub mod campaign;
pub mod error;
pub mod geometry;
pub mod inference;
mod kv;
pub mod mle;
pub mod projection;
pub mod statmodel;
mod quartic;

pub use campaign::*;
pub use error::{Error, Result};
pub use geometry::*;
pub use inference::*;
pub use mle::*;
pub use projection::*;
pub use statmodel::*;
