pub mod bench;
pub mod data;
pub mod error;
pub mod layer;
pub mod linalg;
pub mod matrix;
pub mod pipeline;
pub mod readout;
pub mod stack;

pub use error::{PilaeError, Result};
pub use matrix::Matrix;
